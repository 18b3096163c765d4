import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from conftest import random_distribution, random_quantiles, round_trip_error
from wkcc.errors import EmptyInput, GridMismatch, NonMonotoneQuantiles, OutOfDomain
from wkcc.geometry import (
    Grid,
    TangentVector,
    exp_map,
    frechet_mean,
    in_tangent_cone,
    log_map,
    make_distribution,
    make_reference,
    tangent_inner,
    tangent_norm,
    uniform_distribution,
    wasserstein_distance,
)


class TestGrid:
    def test_levels_are_midpoints(self):
        g = Grid(4)
        assert np.allclose(g.levels, [0.125, 0.375, 0.625, 0.875])

    def test_levels_strictly_inside_unit_interval(self):
        u = Grid(1000).levels
        assert np.all(np.diff(u) > 0) and u[0] > 0 and u[-1] < 1

    @pytest.mark.parametrize("m,lo,hi", [(1, 0, 1), (10, 1, 1), (10, 2, 1)])
    def test_invalid(self, m, lo, hi):
        with pytest.raises(ValueError):
            Grid(m, lo, hi)


class TestMakeDistribution:
    def test_uniform_quantiles(self):
        d = make_distribution(Grid(3), [0.25, 0.5, 0.75])
        assert np.array_equal(d.q, [0.25, 0.5, 0.75])

    def test_point_mass_allowed(self):
        d = make_distribution(Grid(3), [0.5, 0.5, 0.5])
        assert np.all(d.q == 0.5)

    def test_non_monotone(self):
        with pytest.raises(NonMonotoneQuantiles):
            make_distribution(Grid(3), [0.7, 0.2, 0.9])

    def test_outside_domain(self):
        with pytest.raises(OutOfDomain):
            make_distribution(Grid(3), [0.1, 0.5, 1.5])

    def test_rounding_noise_repaired(self):
        d = make_distribution(Grid(3), [0.2, 0.5 + 1e-13, 0.5])
        assert np.all(np.diff(d.q) >= 0)

    def test_wrong_length(self):
        with pytest.raises(GridMismatch):
            make_distribution(Grid(3), [0.1, 0.2])

    def test_values_are_read_only(self):
        d = make_distribution(Grid(3), [0.1, 0.2, 0.3])
        with pytest.raises(ValueError):
            d.q[0] = 0.0


class TestWassersteinDistance:
    def test_identity(self, rng, grid):
        d = random_distribution(rng, grid)
        assert wasserstein_distance(d, d) == 0.0

    def test_dirac_translation(self, grid):
        a = make_distribution(grid, np.full(grid.m, 0.2))
        b = make_distribution(grid, np.full(grid.m, 0.7))
        assert wasserstein_distance(a, b) == pytest.approx(0.5, abs=1e-15)

    def test_uniform_scaling_matches_quadrature(self):
        g = Grid(1000, 0.0, 2.0)
        u = g.levels
        d = wasserstein_distance(make_distribution(g, u), make_distribution(g, 2 * u))
        oracle = np.sqrt(quad(lambda t: t * t, 0, 1)[0])
        assert abs(oracle - 1 / np.sqrt(3)) < 1e-12
        assert d == pytest.approx(oracle, abs=1e-3)

    def test_grid_mismatch(self):
        a = uniform_distribution(Grid(10))
        b = uniform_distribution(Grid(11))
        with pytest.raises(GridMismatch):
            wasserstein_distance(a, b)

    def test_metric_axioms_on_random_triples(self, rng, grid):
        for _ in range(50):
            a, b, c = (random_distribution(rng, grid, atoms=True) for _ in range(3))
            ab, bc, ac = wasserstein_distance(a, b), wasserstein_distance(b, c), wasserstein_distance(a, c)
            assert ab == wasserstein_distance(b, a)
            assert ab + bc - ac >= -1e-12


class TestLogExp:
    def test_log_of_reference_is_zero(self, uniform_ref):
        assert np.all(log_map(uniform_ref, uniform_ref.dist).v == 0)

    def test_log_of_translation_is_constant(self, grid, uniform_ref):
        g = Grid(grid.m, -1.0, 2.0)
        ref = make_reference(make_distribution(g, grid.levels))
        mu = make_distribution(g, grid.levels + 0.3)
        assert np.allclose(log_map(ref, mu).v, 0.3, atol=1e-15)

    def test_log_of_dilation(self):
        g = Grid(1000, 0.0, 2.0)
        ref = make_reference(make_distribution(g, g.levels))
        v = log_map(ref, make_distribution(g, 2 * g.levels)).v
        assert np.allclose(v, ref.x, atol=1e-15)

    def test_exp_zero_is_reference(self, uniform_ref, grid):
        out = exp_map(uniform_ref, TangentVector(uniform_ref, np.zeros(grid.m)))
        assert np.array_equal(out.q, uniform_ref.x)

    def test_exp_constant_translates(self):
        g = Grid(500, 0.0, 2.0)
        ref = make_reference(make_distribution(g, g.levels))
        out = exp_map(ref, TangentVector(ref, np.full(g.m, 0.25)))
        assert np.allclose(out.q, g.levels + 0.25, atol=1e-15)

    def test_round_trip_to_rounding(self, rng, grid, uniform_ref):
        # (q - x) + x is exact up to one rounding of each operation
        for _ in range(20):
            mu = random_distribution(rng, grid, atoms=True)
            back = exp_map(uniform_ref, log_map(uniform_ref, mu)).q
            assert round_trip_error(back, mu.q, grid) <= 2.0

    def test_exp_of_non_monotone_map_is_rearrangement(self, uniform_ref, grid):
        v = -2 * uniform_ref.x + 1.0  # v + x = 1 - x, decreasing
        out = exp_map(uniform_ref, TangentVector(uniform_ref, v))
        assert np.allclose(out.q, np.sort(1.0 - uniform_ref.x))

    def test_reference_needs_strict_increase(self, grid):
        flat = make_distribution(grid, np.full(grid.m, 0.5))
        with pytest.raises(NonMonotoneQuantiles):
            make_reference(flat)
        ref = make_reference(flat, jitter=True)
        assert np.all(np.diff(ref.x) > 0)
        assert np.abs(ref.x - 0.5).max() <= 1e-9


class TestTangent:
    def test_inner_with_zero(self, rng, grid, uniform_ref):
        g = log_map(uniform_ref, random_distribution(rng, grid))
        zero = TangentVector(uniform_ref, np.zeros(grid.m))
        assert tangent_inner(uniform_ref, g, zero) == 0.0

    def test_norm_positive_definite(self, rng, grid, uniform_ref):
        g = log_map(uniform_ref, random_distribution(rng, grid))
        assert tangent_norm(uniform_ref, g) > 0
        assert tangent_inner(uniform_ref, g, g) == pytest.approx(tangent_norm(uniform_ref, g) ** 2)

    def test_isometry_random_pairs(self, rng, grid, uniform_ref):
        for _ in range(100):
            a, b = random_distribution(rng, grid), random_distribution(rng, grid)
            diff = log_map(uniform_ref, a) - log_map(uniform_ref, b)
            assert abs(wasserstein_distance(a, b) - tangent_norm(uniform_ref, diff)) <= 1e-12 * grid.m

    def test_cone_membership(self, rng, grid, uniform_ref):
        assert in_tangent_cone(uniform_ref, TangentVector(uniform_ref, np.zeros(grid.m)))
        for _ in range(10):
            assert in_tangent_cone(uniform_ref, log_map(uniform_ref, random_distribution(rng, grid, atoms=True)))
        assert not in_tangent_cone(uniform_ref, TangentVector(uniform_ref, -2 * uniform_ref.x))

    def test_cone_is_convex(self, rng, grid, uniform_ref):
        for _ in range(20):
            g1 = log_map(uniform_ref, random_distribution(rng, grid))
            g2 = log_map(uniform_ref, random_distribution(rng, grid))
            t = rng.random()
            assert in_tangent_cone(uniform_ref, g1 * (1 - t) + g2 * t)

    def test_mixed_references_rejected(self, grid, uniform_ref):
        other = make_reference(make_distribution(grid, 0.5 * grid.levels + 0.25))
        with pytest.raises(GridMismatch):
            TangentVector(uniform_ref, np.zeros(grid.m)) + TangentVector(other, np.zeros(grid.m))


class TestFrechetMean:
    def test_single(self, rng, grid):
        d = random_distribution(rng, grid)
        assert np.array_equal(frechet_mean([d]).q, d.q)

    def test_point_masses(self, grid):
        a = make_distribution(grid, np.full(grid.m, 0.2))
        b = make_distribution(grid, np.full(grid.m, 0.6))
        assert np.allclose(frechet_mean([a, b]).q, 0.4)

    def test_weights(self, grid):
        a = make_distribution(grid, np.full(grid.m, 0.0))
        b = make_distribution(grid, np.full(grid.m, 1.0))
        assert np.allclose(frechet_mean([a, b], w=[3, 1]).q, 0.25)

    def test_translated_copies(self):
        g = Grid(200, 0.0, 2.0)
        base = 0.5 * g.levels
        shifts = np.array([0.1, 0.4, 0.9])
        ds = [make_distribution(g, base + s) for s in shifts]
        assert np.allclose(frechet_mean(ds).q, base + shifts.mean())

    def test_minimises_sum_of_squares(self, rng, grid):
        ds = [random_distribution(rng, grid) for _ in range(6)]
        w = rng.random(6)
        mean = frechet_mean(ds, w)

        def obj(q):
            return sum(wi * np.mean((d.q - q) ** 2) for wi, d in zip(w, ds))

        best = obj(mean.q)
        for _ in range(200):
            pert = np.sort(np.clip(mean.q + 0.01 * rng.standard_normal(grid.m), 0, 1))
            assert obj(pert) >= best - 1e-15

    def test_empty(self):
        with pytest.raises(EmptyInput):
            frechet_mean([])

    def test_bad_weights(self, rng, grid):
        d = random_distribution(rng, grid)
        with pytest.raises(ValueError):
            frechet_mean([d, d], w=[-1, 1])


class TestProperties:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 60), st.integers(0, 2**32 - 1))
    def test_round_trip_any_grid(self, m, seed):
        g = Grid(m, -3.0, 5.0)
        rng = np.random.default_rng(seed)
        ref = make_reference(uniform_distribution(g))
        mu = make_distribution(g, random_quantiles(rng, g, atoms=True))
        assert round_trip_error(exp_map(ref, log_map(ref, mu)).q, mu.q, g) <= 2.0

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_distance_equals_tangent_norm(self, seed):
        g = Grid(64, 0.0, 1.0)
        rng = np.random.default_rng(seed)
        ref = make_reference(make_distribution(g, np.sort(rng.random(g.m)) * 0.999 + 1e-4 * g.levels))
        a, b = (make_distribution(g, random_quantiles(rng, g)) for _ in range(2))
        d = wasserstein_distance(a, b)
        n = tangent_norm(ref, log_map(ref, a) - log_map(ref, b))
        assert abs(d - n) <= 1e-12 * max(1.0, d)
