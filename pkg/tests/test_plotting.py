import numpy as np
import pytest

from wkcc.plotting import (
    plot_benchmark,
    plot_clustered_quantiles,
    plot_covariance_ellipses,
    plot_ev_curve,
    plot_modes,
)

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def _levels_and_curves(n=6, m=50):
    u = (np.arange(1, m + 1) - 0.5) / m
    shifts = np.linspace(0, 1, n)
    return u, np.stack([u + s for s in shifts])


def _draw(kind, path):
    u, Q = _levels_and_curves()
    if kind == "quantiles":
        return plot_clustered_quantiles(u, Q, np.array([0, 0, 0, 1, 1, 1]), path)
    if kind == "ev":
        return plot_ev_curve([0.6, 0.85, 0.97], path, tau=0.9)
    if kind == "modes":
        return plot_modes(u, Q[:3], [-1.0, 0.0, 1.0], path)
    if kind == "benchmark":
        rows = [{"design": d, "method": m, "crate": v}
                for d, m, v in [("I", "kcdc", 0.9), ("I", "wkm", 0.7), ("II", "kcdc", 0.8), ("II", "wkm", 0.75)]]
        return plot_benchmark(rows, path)
    covs = [np.diag([1.0, 0.5]), np.array([[2.0, 0.3], [0.3, 0.4]])]
    return plot_covariance_ellipses(covs, [0, 1], path)


KINDS = ["quantiles", "ev", "modes", "benchmark", "ellipses"]


class TestFigures:
    @pytest.mark.parametrize("kind", KINDS)
    def test_writes_png(self, kind, tmp_path):
        out = _draw(kind, tmp_path / "sub" / f"{kind}.png")
        data = out.read_bytes()
        assert data[:8] == PNG_MAGIC
        assert len(data) > 1000

    @pytest.mark.parametrize("kind", KINDS)
    def test_rerun_is_byte_identical(self, kind, tmp_path):
        a = _draw(kind, tmp_path / "a.png").read_bytes()
        b = _draw(kind, tmp_path / "b.png").read_bytes()
        assert a == b

    def test_benchmark_missing_cell_is_blank(self, tmp_path):
        rows = [{"design": "I", "method": "kcdc", "crate": 0.9}, {"design": "II", "method": "wkm", "crate": 0.7}]
        assert plot_benchmark(rows, tmp_path / "b.png").stat().st_size > 0
