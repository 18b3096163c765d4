import numpy as np
import pytest
from scipy.linalg import sqrtm

from wkcc.clustering import KcdcConfig
from wkcc.cones import PsdCone
from wkcc.errors import DimensionMismatch, DimensionTooLarge, NoConvergence, SingularReference
from wkcc.gaussian import (
    Covariance,
    SymCoordinates,
    SymTangent,
    bures_distance,
    gauss_exp,
    gauss_frechet_mean,
    gauss_kcentres,
    gauss_log,
    in_psd_cone,
    make_covariance,
    sample_covariance,
    sym_inner,
    sym_norm,
)
from wkcc.metrics import correct_classification_rate


def random_pd(rng, d, floor=0.1):
    A = rng.standard_normal((d, d))
    return make_covariance(A @ A.T / d + floor * np.eye(d))


def rotated(rng, d):
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return Q


def bures_oracle(A, B):
    """Bures distance via scipy's general matrix square root."""
    rA = np.real(sqrtm(A))
    cross = np.real(sqrtm(rA @ B @ rA))
    return np.sqrt(max(np.trace(A + B - 2 * cross), 0.0))


class TestCovariance:
    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            make_covariance([[1.0, 0.5], [0.0, 1.0]])

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            make_covariance(np.diag([1.0, -1.0]))

    def test_clips_round_off(self):
        S = make_covariance(np.diag([1.0, -1e-14]))
        assert np.linalg.eigvalsh(S.S).min() >= 0

    def test_sample_covariance_divisor(self, rng):
        X = rng.standard_normal((50, 3))
        R = X - X.mean(0)
        assert np.allclose(sample_covariance(X).S, R.T @ R / 50)

    def test_shape(self):
        with pytest.raises(DimensionMismatch):
            make_covariance(np.ones((2, 3)))


class TestBures:
    def test_identical(self, rng):
        S = random_pd(rng, 3)
        assert bures_distance(S, S) == pytest.approx(0.0, abs=1e-7)

    def test_scaled_identity(self):
        assert bures_distance(make_covariance(np.eye(2)), make_covariance(4 * np.eye(2))) == pytest.approx(np.sqrt(2), abs=1e-12)

    def test_commuting_diagonals(self, rng):
        a, b = rng.random(4) + 0.1, rng.random(4) + 0.1
        d = bures_distance(make_covariance(np.diag(a)), make_covariance(np.diag(b)))
        assert d == pytest.approx(np.sqrt(np.sum((np.sqrt(a) - np.sqrt(b)) ** 2)), abs=1e-10)

    def test_matches_scipy_sqrtm(self, rng):
        for _ in range(10):
            A, B = random_pd(rng, 4), random_pd(rng, 4)
            assert bures_distance(A, B) == pytest.approx(bures_oracle(A.S, B.S), abs=1e-8)

    def test_metric_axioms(self, rng):
        for _ in range(20):
            A, B, C = (random_pd(rng, 3) for _ in range(3))
            assert bures_distance(A, B) == pytest.approx(bures_distance(B, A), abs=1e-10)
            assert bures_distance(A, B) + bures_distance(B, C) - bures_distance(A, C) >= -1e-10

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            bures_distance(make_covariance(np.eye(2)), make_covariance(np.eye(3)))


class TestLogExp:
    def test_log_of_reference(self, rng):
        S = random_pd(rng, 3)
        assert np.abs(gauss_log(S, S).V).max() < 1e-10

    def test_log_of_scaled_identity(self):
        V = gauss_log(make_covariance(np.eye(3)), make_covariance(4 * np.eye(3))).V
        assert np.allclose(V, np.eye(3), atol=1e-12)

    def test_exp_examples(self):
        I = make_covariance(np.eye(2))
        assert np.allclose(gauss_exp(I, SymTangent(I, np.zeros((2, 2)))).S, np.eye(2))
        assert np.allclose(gauss_exp(I, SymTangent(I, np.eye(2))).S, 4 * np.eye(2))

    def test_round_trip(self, rng):
        for d in (2, 4, 8):
            for _ in range(5):
                A, B = random_pd(rng, d), random_pd(rng, d)
                back = gauss_exp(A, gauss_log(A, B))
                assert np.linalg.norm(back.S - B.S) <= 1e-10

    def test_log_is_transport_map(self, rng):
        A, B = random_pd(rng, 3), random_pd(rng, 3)
        T = gauss_log(A, B).V + np.eye(3)
        assert np.allclose(T, T.T) and np.linalg.eigvalsh(T).min() > 0
        assert np.allclose(T @ A.S @ T, B.S, atol=1e-10)

    def test_singular_reference(self):
        with pytest.raises(SingularReference):
            gauss_log(make_covariance(np.diag([1.0, 0.0])), make_covariance(np.eye(2)))

    def test_commuting_isometry(self, rng):
        d = 4
        Q = rotated(rng, d)
        covs = [make_covariance(Q @ np.diag(rng.random(d) + 0.2) @ Q.T) for _ in range(4)]
        ref = covs[0]
        for a in covs[1:]:
            for b in covs[1:]:
                diff = SymTangent(ref, gauss_log(ref, a).V - gauss_log(ref, b).V)
                assert abs(bures_distance(a, b) - sym_norm(ref, diff)) <= 1e-10

    def test_inner_product(self, rng):
        S = random_pd(rng, 3)
        V = gauss_log(S, random_pd(rng, 3))
        assert sym_inner(S, V, SymTangent(S, np.zeros((3, 3)))) == 0.0
        assert sym_inner(S, V, V) > 0

    def test_cone_convexity(self, rng):
        S = random_pd(rng, 3)
        for _ in range(20):
            V1 = gauss_log(S, random_pd(rng, 3))
            V2 = gauss_log(S, random_pd(rng, 3))
            t = rng.random()
            assert in_psd_cone(SymTangent(S, (1 - t) * V1.V + t * V2.V))
        assert not in_psd_cone(SymTangent(S, -2 * np.eye(3)))


class TestFrechetMean:
    def test_equal_inputs(self, rng):
        S = random_pd(rng, 3)
        assert np.allclose(gauss_frechet_mean([S, S, S]).S, S.S, atol=1e-10)

    def test_commuting_diagonals(self, rng):
        a, b = rng.random(3) + 0.1, rng.random(3) + 0.1
        M = gauss_frechet_mean([make_covariance(np.diag(a)), make_covariance(np.diag(b))])
        assert np.allclose(M.S, np.diag(((np.sqrt(a) + np.sqrt(b)) / 2) ** 2), atol=1e-10)

    def test_fixed_point_residual(self, rng):
        covs = [random_pd(rng, 4) for _ in range(6)]
        M = gauss_frechet_mean(covs)
        mean_log = np.mean([gauss_log(M, c).V for c in covs], axis=0)
        assert np.linalg.norm(mean_log) <= 1e-8

    def test_no_convergence_carries_result(self, rng):
        covs = [random_pd(rng, 3) for _ in range(4)]
        with pytest.raises(NoConvergence) as exc:
            gauss_frechet_mean(covs, tol=0.0, max_iter=2)
        assert exc.value.result is not None


class TestCoordinates:
    def test_isometry(self, rng):
        S = random_pd(rng, 3)
        C = SymCoordinates(S)
        V1, V2 = gauss_log(S, random_pd(rng, 3)), gauss_log(S, random_pd(rng, 3))
        assert C.coords(V1.V) @ C.coords(V2.V) == pytest.approx(sym_inner(S, V1, V2), abs=1e-12)
        assert np.allclose(C.matrix(C.coords(V1.V)), V1.V, atol=1e-12)

    def test_psd_cone_matches(self, rng):
        S = random_pd(rng, 3)
        C = SymCoordinates(S)
        cone = PsdCone(C.basis)
        for _ in range(10):
            V = rng.standard_normal((3, 3))
            V = V + V.T
            assert cone.contains(C.coords(V)) == in_psd_cone(SymTangent(S, V))


def planted(rng, n=20, d=3):
    base1 = np.diag(np.linspace(1.0, 2.0, d))
    base2 = np.diag(np.linspace(6.0, 3.0, d))
    covs, truth = [], []
    for i in range(2 * n):
        c = i % 2
        base = base1 if c == 0 else base2
        E = 0.05 * rng.standard_normal((d, d))
        covs.append(make_covariance(base + E @ E.T))
        truth.append(c)
    return covs, np.array(truth)


class TestKcentres:
    def test_planted_partition(self, rng):
        covs, truth = planted(rng)
        state = gauss_kcentres(covs, 2, 1, KcdcConfig(K=2))
        assert correct_classification_rate(state.labels, truth) == 1.0
        d = state.to_dict()
        assert len(d["clusters"]) == 2 and len(d["reference"]) == 3

    def test_single_cluster(self, rng):
        covs, _ = planted(rng, n=5)
        assert np.all(gauss_kcentres(covs, 1, 1, KcdcConfig(K=1)).labels == 0)

    def test_duplicates_together(self, rng):
        covs, _ = planted(rng, n=6)
        state = gauss_kcentres(covs + covs, 2, 1, KcdcConfig(K=2, loo=False))
        assert np.array_equal(state.labels[:12], state.labels[12:])

    def test_dimension_selection(self, rng):
        covs, _ = planted(rng, n=10)
        state = gauss_kcentres(covs, 2, None, KcdcConfig(K=2, loo=False))
        assert 1 <= state.M <= 6

    def test_dimension_too_large(self, rng):
        covs, _ = planted(rng, n=10, d=2)
        with pytest.raises(DimensionTooLarge):
            gauss_kcentres(covs, 2, 4, KcdcConfig(K=2))
