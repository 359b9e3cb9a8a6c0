"""Mixing specs, simulators and analytic truths."""

import math

import numpy as np
import pytest
from scipy import integrate, stats

from mixsmooth.errors import InvalidInputError, NoAnalyticTruthError, NonstationaryModelError
from mixsmooth.model import Raw
from mixsmooth.processes import (
    IID,
    Ar1Density,
    GaussianCes,
    Geometric,
    Polynomial,
    RegressionOnAr1,
    derive_seed,
    simulate,
    true_density,
    true_regression,
)


class TestMixingSpecs:
    def test_iid(self):
        assert [IID().beta(j) for j in range(3)] == [1.0, 0.0, 0.0]

    def test_geometric(self):
        assert [Geometric(0.5).beta(j) for j in range(4)] == [1.0, 0.5, 0.25, 0.125]

    def test_polynomial(self):
        spec = Polynomial(3.0, 0.5)
        assert spec.beta(0) == 1.0 and spec.beta(2) == 0.5 / 8

    def test_polynomial_exponent_floor(self):
        # delta = 4 requires b > 2
        with pytest.raises(InvalidInputError, match="must exceed"):
            Polynomial(2.0, delta=4.0)
        Polynomial(2.01, delta=4.0)

    @pytest.mark.parametrize("delta", [2.0, 1.0, math.inf])
    def test_delta_range(self, delta):
        with pytest.raises(InvalidInputError):
            Geometric(0.5, delta)

    @pytest.mark.parametrize("rho", [0.0, 1.0, -0.2])
    def test_geometric_rate_range(self, rho):
        with pytest.raises(InvalidInputError):
            Geometric(rho)


class TestSimulators:
    @pytest.mark.parametrize("rho", [1.0, 1.2, -1.0])
    def test_nonstationary_rejected(self, rho):
        with pytest.raises(NonstationaryModelError):
            Ar1Density(rho)

    def test_same_seed_same_path(self):
        m = GaussianCes(0.5)
        a, b = simulate(m, 500, 17), simulate(m, 500, 17)
        assert np.array_equal(a.y, b.y) and np.array_equal(a.x, b.x)

    def test_different_seeds_differ(self):
        assert not np.array_equal(simulate(Ar1Density(0.5), 50, 1).x, simulate(Ar1Density(0.5), 50, 2).x)

    def test_stationary_from_first_draw(self):
        # The first observation across many seeds has the stationary variance.
        firsts = np.array([simulate(Ar1Density(0.8), 1, s).x[0, 0] for s in range(4000)])
        assert np.var(firsts) == pytest.approx(1 / (1 - 0.64), rel=0.08)

    def test_marginal_and_autocorrelation(self):
        x = simulate(Ar1Density(0.5), 200_000, 3).x[:, 0]
        assert np.var(x) == pytest.approx(4 / 3, rel=0.02)
        assert np.corrcoef(x[:-1], x[1:])[0, 1] == pytest.approx(0.5, abs=0.01)

    def test_burnin_discards_prefix(self):
        s = simulate(Ar1Density(0.5), 100, 4, burnin=25)
        assert s.n == 100

    def test_regression_noise_level(self):
        s = simulate(RegressionOnAr1(0.5, m_fn="sin", sigma_u=0.5), 100_000, 5)
        resid = s.y[:, 0] - np.sin(s.x[:, 0])
        assert np.std(resid) == pytest.approx(0.5, rel=0.02)

    def test_ces_model_shapes(self):
        s = simulate(GaussianCes(0.5, loadings=(1.0, 0.5, 0.2), design=(1.0, 2.0)), 10, 1)
        assert (s.q, s.p) == (3, 2)
        # X_t = v S_t: columns are proportional
        np.testing.assert_allclose(s.x[:, 1], 2.0 * s.x[:, 0], rtol=1e-15)

    def test_ces_conditional_loss_law(self):
        m = GaussianCes(0.5)
        s = simulate(m, 200_000, 6)
        a = np.array([0.6, 0.8])
        b = np.array([0.5, 0.5])
        idx = s.x @ b
        loss = -(s.y @ a)
        resid = loss - np.array([m.loss_mean(a, b)(w) for w in idx])
        assert np.mean(resid) == pytest.approx(0.0, abs=0.01)
        assert np.std(resid) == pytest.approx(1.0, rel=0.01)
        assert abs(stats.skew(resid)) < 0.03


class TestTruths:
    def test_density_closed_form(self):
        m = Ar1Density(0.5)
        assert true_density(m, 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi * 4 / 3), rel=1e-14)

    def test_density_integrates_to_one(self):
        val, _ = integrate.quad(lambda w: true_density(Ar1Density(0.7, 2.0), w), -np.inf, np.inf)
        assert val == pytest.approx(1.0, abs=1e-10)

    def test_ces_index_density(self):
        m = GaussianCes(0.5, design=(1.0, 1.0))
        # b'X = (b'v) S with b'v = 1
        assert true_density(m, 0.3, b=(0.5, 0.5)) == pytest.approx(true_density(Ar1Density(0.5), 0.3), rel=1e-14)

    def test_orthogonal_direction_has_no_truth(self):
        with pytest.raises(NoAnalyticTruthError):
            GaussianCes(0.5).index_scale((1.0, -1.0))

    def test_regression_truth(self):
        assert true_regression(RegressionOnAr1(0.5), 0.7) == math.sin(0.7)

    def test_regression_truth_needs_raw0(self):
        with pytest.raises(NoAnalyticTruthError):
            true_regression(RegressionOnAr1(0.5), 0.0, phi=Raw(1))

    def test_density_model_has_no_regression(self):
        with pytest.raises(NoAnalyticTruthError):
            true_regression(Ar1Density(0.5), 0.0)

    def test_ces_truth_scaling(self):
        m = GaussianCes(0.5, sigma_l=1.0, loadings=(1.0, 0.5))
        a, b = (0.6, 0.8), (0.8, 0.4)
        var, ces = m.ces_truth(a, b, 0.1)(0.6)
        mu = (0.6 * 1.0 + 0.8 * 0.5) * math.sin(0.6 / 1.2)
        z = stats.norm.ppf(0.9)
        assert var == pytest.approx(mu + z, rel=1e-14)
        assert ces == pytest.approx(mu + stats.norm.pdf(z) / 0.1, rel=1e-14)


class TestSeeds:
    def test_derived_seed_is_stable(self):
        assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)

    def test_derived_seeds_are_distinct(self):
        seeds = {derive_seed(7, n, r) for n in (1000, 2000, 4000) for r in range(50)}
        assert len(seeds) == 150

    def test_master_seed_matters(self):
        assert derive_seed(1, 5) != derive_seed(2, 5)
