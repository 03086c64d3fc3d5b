import math

import numpy as np
import pytest

from roughcov.core import NoiseModel, NumericalError
from roughcov.simulate import (
    EXAMPLE2_SCORE_VARIANCE,
    PROCESS_KINDS,
    DesignSpec,
    ProcessSpec,
    add_noise,
    analytic_covariance,
    analytic_mean,
    eval_g3,
    example2_curve,
    example2_mean,
    sample_design,
    simulate_paths,
)


def _common_design(times, n):
    t = np.asarray(times, dtype=np.float64)
    return [t for _ in range(n)]


def _path_matrix(paths):
    return np.stack(paths, axis=0)


class TestDesign:
    def test_shapes_sorted_in_range(self):
        design = sample_design(DesignSpec(n=7, r=4, seed=1))
        assert len(design) == 7
        for t in design:
            assert t.shape == (4,)
            assert np.all(np.diff(t) >= 0)
            assert t.min() >= 0.0 and t.max() <= 1.0

    def test_deterministic(self):
        a = sample_design(DesignSpec(n=3, r=5, seed=9))
        b = sample_design(DesignSpec(n=3, r=5, seed=9))
        for x, y in zip(a, b):
            assert x.tobytes() == y.tobytes()

    def test_validation(self):
        with pytest.raises(ValueError):
            DesignSpec(n=0, r=5)
        with pytest.raises(ValueError):
            DesignSpec(n=5, r=1)


class TestProcessSpec:
    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            ProcessSpec(kind="fractional_bm")

    def test_ou_needs_positive_beta(self):
        with pytest.raises(ValueError):
            ProcessSpec(kind="ornstein_uhlenbeck", beta=0.0)

    def test_matern_needs_positive_rho(self):
        with pytest.raises(ValueError):
            ProcessSpec(kind="matern_half", rho=-1.0)

    def test_custom_needs_covariance(self):
        with pytest.raises(ValueError):
            ProcessSpec(kind="custom_covariance")

    def test_all_kinds_listed(self):
        assert "brownian_motion" in PROCESS_KINDS
        assert "example2" in PROCESS_KINDS


class TestG3:
    def test_frozen_values(self):
        assert eval_g3(0.0) == 0.0
        assert eval_g3(1.0) == pytest.approx(0.0, abs=1e-15)
        assert eval_g3(0.25) == pytest.approx(0.015625, abs=1e-15)
        assert eval_g3(0.5) == pytest.approx(0.0625, abs=1e-15)
        assert eval_g3(0.75) == pytest.approx(0.015625, abs=1e-15)

    def test_domain_checked(self):
        with pytest.raises(ValueError):
            eval_g3(1.5)
        with pytest.raises(ValueError):
            eval_g3(np.array([0.2, -0.1]))

    def test_squared_norm_quadrature(self):
        # Exact piecewise-polynomial integral of g3^2 is 151/143360.
        x = np.linspace(0.0, 1.0, 100001)
        approx = np.trapezoid(eval_g3(x) ** 2, x)
        assert approx == pytest.approx(151.0 / 143360.0, rel=1e-6)

    def test_c2_smoothness_at_knots(self):
        # Second derivative must be continuous across the knots; compare
        # one-sided second differences just left and right of each knot.
        eps = 1e-4
        for knot in (0.25, 0.5, 0.75):
            def second_diff(c):
                return (eval_g3(c + eps) - 2 * eval_g3(c) + eval_g3(c - eps)) / eps**2

            left = second_diff(knot - 2 * eps)
            right = second_diff(knot + 2 * eps)
            assert right - left == pytest.approx(0.0, abs=0.02)


class TestExample2:
    def test_mean_frozen_values(self):
        assert example2_mean(0.6) == 0.0
        assert example2_mean(0.0) == pytest.approx(1.8, rel=1e-15)
        assert example2_mean(1.0) == pytest.approx(0.8, rel=1e-15)

    def test_curve_is_mean_plus_scores(self):
        t = np.array([0.0, 0.25, 0.5])
        x = example2_curve(t, np.array([0.0, 0.0, 0.0]))
        assert np.allclose(x, example2_mean(t))
        x1 = example2_curve(t, np.array([1.0, 0.0, 0.0]))
        assert np.allclose(x1 - x, 1.0)

    def test_analytic_cov_rank_and_values(self):
        proc = ProcessSpec(kind="example2")
        # g2(0.25) = 1, g2(0.75) = -1, g3 contributions tiny
        c = analytic_covariance(proc, 0.25, 0.25)
        expected = EXAMPLE2_SCORE_VARIANCE * (1.0 + 1.0 + 0.015625**2)
        assert c == pytest.approx(expected, rel=1e-12)
        g = np.linspace(0, 1, 41)
        cov = analytic_covariance(proc, g[:, None], g[None, :])
        assert cov.shape == (41, 41)
        assert np.linalg.matrix_rank(cov, tol=1e-10) == 3


class TestAnalyticForms:
    def test_bm_min(self):
        proc = ProcessSpec(kind="brownian_motion")
        assert analytic_covariance(proc, 0.3, 0.7) == 0.3
        assert analytic_mean(proc, 0.5) == 0.0

    def test_bridge(self):
        proc = ProcessSpec(kind="brownian_bridge")
        assert analytic_covariance(proc, 0.5, 0.5) == 0.25
        assert analytic_covariance(proc, 1.0, 0.3) == pytest.approx(0.0, abs=1e-15)

    def test_ou_closed_form(self):
        proc = ProcessSpec(kind="ornstein_uhlenbeck", beta=2.0)
        s, t = 0.3, 0.5
        expected = math.exp(-2.0 * (s + t)) * (math.exp(2.0 * 2.0 * s) - 1.0) / 4.0
        assert analytic_covariance(proc, s, t) == pytest.approx(expected, rel=1e-14)

    def test_gbm_forms(self):
        proc = ProcessSpec(kind="geometric_bm")
        assert analytic_mean(proc, 1.0) == pytest.approx(math.exp(0.5), rel=1e-14)
        expected = math.exp(0.75) * (math.exp(0.5) - 1.0)
        assert analytic_covariance(proc, 0.5, 1.0) == pytest.approx(expected, rel=1e-14)

    def test_matern_exponential(self):
        proc = ProcessSpec(kind="matern_half", rho=5.0)
        assert analytic_covariance(proc, 0.2, 0.7) == pytest.approx(
            math.exp(-0.5 / 5.0), rel=1e-14
        )

    def test_symmetry_broadcast(self):
        g = np.linspace(0, 1, 11)
        for kind in ("brownian_motion", "ornstein_uhlenbeck", "geometric_bm",
                     "brownian_bridge", "matern_half", "example2"):
            cov = analytic_covariance(ProcessSpec(kind=kind), g[:, None], g[None, :])
            assert cov.tobytes() == cov.T.copy().tobytes()


class TestPathLaws:
    """Monte-Carlo guards: empirical moments against the analytic forms."""

    def test_bm_second_moments(self):
        times = [0.2, 0.4, 0.6, 0.8, 1.0]
        design = _common_design(times, 20000)
        x = _path_matrix(simulate_paths(ProcessSpec(kind="brownian_motion"), design, seed=11))
        emp = x.T @ x / len(design)
        expected = np.minimum(np.array(times)[:, None], np.array(times)[None, :])
        assert np.max(np.abs(emp - expected)) < 0.05

    def test_bridge_pins_endpoint(self):
        design = _common_design([0.25, 0.5, 0.75, 1.0], 5000)
        x = _path_matrix(simulate_paths(ProcessSpec(kind="brownian_bridge"), design, seed=12))
        assert np.var(x[:, -1]) < 1e-6
        assert np.var(x[:, 1]) == pytest.approx(0.25, abs=0.02)

    def test_ou_marginal_variance(self):
        design = _common_design([0.5, 1.0], 20000)
        x = _path_matrix(simulate_paths(ProcessSpec(kind="ornstein_uhlenbeck"), design, seed=13))
        assert np.var(x[:, 1]) == pytest.approx((1 - math.exp(-2.0)) / 2.0, rel=0.03)
        assert np.var(x[:, 0]) == pytest.approx((1 - math.exp(-1.0)) / 2.0, rel=0.03)

    def test_gbm_mean_and_cov(self):
        design = _common_design([0.5, 1.0], 50000)
        x = _path_matrix(simulate_paths(ProcessSpec(kind="geometric_bm"), design, seed=14))
        assert np.mean(x[:, 1]) == pytest.approx(math.exp(0.5), abs=0.05)
        emp_cov = np.cov(x[:, 0], x[:, 1])[0, 1]
        expected = math.exp(0.75) * (math.exp(0.5) - 1.0)
        assert emp_cov == pytest.approx(expected, abs=0.2)

    def test_matern_correlation(self):
        design = _common_design([0.3, 0.5], 20000)
        x = _path_matrix(simulate_paths(ProcessSpec(kind="matern_half", rho=0.2), design, seed=15))
        corr = np.corrcoef(x[:, 0], x[:, 1])[0, 1]
        assert corr == pytest.approx(math.exp(-1.0), abs=0.03)

    def test_example2_moments(self):
        times = np.array([0.1, 0.25, 0.6, 0.9])
        design = _common_design(times, 20000)
        x = _path_matrix(simulate_paths(ProcessSpec(kind="example2"), design, seed=16))
        assert np.max(np.abs(x.mean(0) - example2_mean(times))) < 0.02
        emp_cov = np.cov(x.T)
        expected = analytic_covariance(
            ProcessSpec(kind="example2"), times[:, None], times[None, :]
        )
        assert np.max(np.abs(emp_cov - expected)) < 0.02

    def test_custom_constant_covariance(self):
        proc = ProcessSpec(
            kind="custom_covariance",
            covariance=lambda s, t: 0.2 * np.ones(np.broadcast(s, t).shape),
            mean=lambda t: 1.0 + np.asarray(t, float),
        )
        design = _common_design([0.2, 0.8], 5000)
        x = _path_matrix(simulate_paths(proc, design, seed=17))
        assert np.var(x[:, 0]) == pytest.approx(0.2, rel=0.15)
        assert np.mean(x[:, 1]) == pytest.approx(1.8, abs=0.05)
        # constant field: both coordinates move together
        assert np.corrcoef(x[:, 0], x[:, 1])[0, 1] > 0.99

    def test_custom_indefinite_raises(self):
        proc = ProcessSpec(
            kind="custom_covariance",
            covariance=lambda s, t: -np.minimum(s, t),
        )
        design = [np.array([0.25, 0.5, 0.75])]
        with pytest.raises(NumericalError):
            simulate_paths(proc, design, seed=18)


class TestRngContract:
    def test_batched_matches_looped_draw_order(self):
        # A design of identical rows takes the batched path; distinct rows
        # take the per-curve path. The first curve must come out identical
        # because both consume the generator in the same order.
        t = np.linspace(0.1, 0.9, 6)
        other = np.linspace(0.05, 0.95, 6)
        for kind in ("brownian_motion", "ornstein_uhlenbeck"):
            proc = ProcessSpec(kind=kind)
            batched = simulate_paths(proc, [t, t, t], seed=21)
            looped = simulate_paths(proc, [t, other, t], seed=21)
            assert batched[0].tobytes() == looped[0].tobytes()

    def test_paths_deterministic(self):
        design = sample_design(DesignSpec(n=4, r=6, seed=2))
        proc = ProcessSpec(kind="brownian_motion")
        a = simulate_paths(proc, design, seed=33)
        b = simulate_paths(proc, design, seed=33)
        for x, y in zip(a, b):
            assert x.tobytes() == y.tobytes()
        c = simulate_paths(proc, design, seed=34)
        assert any(x.tobytes() != y.tobytes() for x, y in zip(a, c))


class TestAddNoise:
    def test_zero_sigma_returns_latent_exactly(self):
        design = sample_design(DesignSpec(n=3, r=5, seed=4))
        latent = simulate_paths(ProcessSpec(kind="brownian_motion"), design, seed=5)
        ds = add_noise(design, latent, NoiseModel(std_dev=0.0), seed=6)
        for curve, x in zip(ds.curves, latent):
            assert curve.values.tobytes() == np.asarray(x).tobytes()

    def test_noise_added_and_deterministic(self):
        design = sample_design(DesignSpec(n=3, r=5, seed=4))
        latent = simulate_paths(ProcessSpec(kind="brownian_motion"), design, seed=5)
        ds1 = add_noise(design, latent, NoiseModel(std_dev=0.3), seed=7)
        ds2 = add_noise(design, latent, NoiseModel(std_dev=0.3), seed=7)
        ds3 = add_noise(design, latent, NoiseModel(std_dev=0.3), seed=8)
        for c1, c2, c3, x in zip(ds1.curves, ds2.curves, ds3.curves, latent):
            assert c1.values.tobytes() == c2.values.tobytes()
            assert c1.values.tobytes() != c3.values.tobytes()
            assert not np.array_equal(c1.values, x)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            add_noise([np.array([0.1, 0.2])], [], NoiseModel(std_dev=0.1))
