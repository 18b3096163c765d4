"""Wasserstein k-centres clustering of one-dimensional distributions.

Geometry on the quantile grid, convex principal component analysis in the
tangent space, the kCDC clustering loop with its baselines, evaluation
metrics, the simulation benchmark and the Gaussian (Bures) extension.
"""

from importlib.metadata import PackageNotFoundError, version as _version

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # pragma: no cover - source checkout
    __version__ = "0.1.0"

from .clustering import (
    ClusterState,
    KcdcConfig,
    cpca_cluster,
    kcdc_cluster,
    trimmed_wasserstein_kmeans,
    wasserstein_kmeans,
)
from .cpca import SolverOptions, fit_convex_pca, fit_principal_geodesic
from .geometry import (
    Grid,
    GridDistribution,
    exp_map,
    frechet_mean,
    log_map,
    make_distribution,
    make_reference,
    wasserstein_distance,
)
from .metrics import adjusted_rand_index, correct_classification_rate, silhouette

__all__ = [
    "__version__",
    "ClusterState",
    "KcdcConfig",
    "SolverOptions",
    "Grid",
    "GridDistribution",
    "make_distribution",
    "make_reference",
    "wasserstein_distance",
    "log_map",
    "exp_map",
    "frechet_mean",
    "fit_convex_pca",
    "fit_principal_geodesic",
    "kcdc_cluster",
    "cpca_cluster",
    "wasserstein_kmeans",
    "trimmed_wasserstein_kmeans",
    "correct_classification_rate",
    "adjusted_rand_index",
    "silhouette",
]
