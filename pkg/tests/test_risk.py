"""Weighted VaR plug-in and the kernel CES estimator."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.stats import norm

from mixsmooth.errors import InvalidInputError, NoLocalDataError
from mixsmooth.estimators import estimate_m, estimate_T, eval_grid
from mixsmooth.kernels import make_epanechnikov, make_gaussian_kernel
from mixsmooth.model import (
    AffineThreshold,
    ConstantThreshold,
    PluggedVar,
    PsiIndex,
    Sample,
    ShortfallIndicator,
    ShortfallNumerator,
    SingleIndex,
)
from mixsmooth.risk import (
    CesIndex,
    ces_index_grid,
    ces_surface,
    ces_truth_gaussian,
    estimate_ces,
    estimate_conditional_var,
    quantile_consistent,
    weighted_var,
)
from oracles import k_epanechnikov, oracle_ces, oracle_kernel, oracle_var


class TestWeightedVar:
    def test_equal_weights_upper_quantile(self):
        # mass above 4 is 0.2 <= 0.25; mass above 3 is 0.4 > 0.25
        assert weighted_var([1, 2, 3, 4, 5], [1] * 5, 0.25) == 4.0

    def test_boundary_mass_exactly_p(self):
        assert weighted_var([1.0, 2.0], [1.0, 1.0], 0.5) == 1.0

    def test_ties(self):
        assert weighted_var([2.0, 2.0, 2.0, 1.0], [1, 1, 1, 1], 0.1) == 2.0

    def test_single_observation(self):
        assert weighted_var([4.2], [0.3], 0.05) == 4.2

    def test_zero_weight_rows_are_ignored(self):
        assert weighted_var([100.0, 1.0, 2.0], [0.0, 1.0, 1.0], 0.4) == 2.0

    def test_negative_weights_rejected(self):
        with pytest.raises(InvalidInputError):
            weighted_var([1.0, 2.0], [1.0, -0.5], 0.1)

    def test_zero_total_weight(self):
        with pytest.raises(NoLocalDataError):
            weighted_var([1.0, 2.0], [0.0, 0.0], 0.1)

    @pytest.mark.parametrize("p", [0.0, 1.0, 2.0])
    def test_level_range(self, p):
        with pytest.raises(InvalidInputError):
            weighted_var([1.0], [1.0], p)

    @settings(max_examples=300, deadline=None)
    @given(
        st.lists(st.tuples(st.integers(-5, 5).map(float), st.floats(0.01, 3.0)), min_size=1, max_size=12),
        st.floats(0.01, 0.99),
    )
    def test_matches_brute_force_and_definition(self, pairs, p):
        losses = [a for a, _ in pairs]
        weights = [b for _, b in pairs]
        c = weighted_var(losses, weights, p)
        assert c == oracle_var(losses, weights, p)
        assert quantile_consistent(losses, weights, c, p)

    def test_large_sample_matches_normal_quantile(self):
        rng = np.random.default_rng(0)
        losses = rng.normal(size=200_000)
        assert weighted_var(losses, np.ones_like(losses), 0.05) == pytest.approx(norm.ppf(0.95), abs=0.01)


class TestQuantileConsistency:
    def test_rejects_wrong_threshold(self):
        losses, weights = [1, 2, 3, 4, 5], [1] * 5
        assert quantile_consistent(losses, weights, 4.0, 0.25)
        assert not quantile_consistent(losses, weights, 3.0, 0.25)  # too much mass above
        assert not quantile_consistent(losses, weights, 5.0, 0.25)  # 4 already qualifies


class TestCesIndex:
    def test_plugged_index_takes_level(self):
        ix = CesIndex((1.0, 0.0), (1.0, 1.0), PluggedVar(0.05))
        assert ix.p_level == 0.05 and ix.plugged

    def test_disagreeing_level(self):
        with pytest.raises(InvalidInputError):
            CesIndex((1.0, 0.0), (1.0,), PluggedVar(0.05), p_level=0.1)

    def test_grid_size(self):
        grid = ces_index_grid([k * math.pi / 4 for k in range(8)], [[1, 0], [0, 1], [1, 1]], [0.1, 0.05])
        assert len(grid) == 48 and len({ix.label() for ix in grid}) == 48


class TestCesTruth:
    @pytest.mark.parametrize("p", [0.1, 0.05, 0.01])
    def test_closed_form_matches_quadrature(self, p):
        mu, sigma = 0.3, 1.7
        var, ces = ces_truth_gaussian(lambda w: mu, sigma, p)(0.0)
        assert norm.sf(var, loc=mu, scale=sigma) == pytest.approx(p, rel=1e-12)
        tail, _ = integrate.quad(lambda z: z * norm.pdf(z, mu, sigma), var, np.inf, epsabs=1e-13)
        assert ces == pytest.approx(tail / p, rel=1e-10)

    def test_standard_normal_five_percent(self):
        var, ces = ces_truth_gaussian(lambda w: 0.0, 1.0, 0.05)(0.0)
        assert var == pytest.approx(1.6448536269514722, abs=1e-12)
        assert ces == pytest.approx(2.0627128075074257, abs=1e-12)

    def test_bad_sigma(self):
        with pytest.raises(InvalidInputError):
            ces_truth_gaussian(lambda w: 0.0, 0.0, 0.1)


@st.composite
def ces_case(draw):
    n = draw(st.integers(1, 8))
    p = draw(st.integers(1, 2))
    fl = st.floats(-2, 2)
    y = draw(st.lists(st.lists(fl, min_size=2, max_size=2), min_size=n, max_size=n))
    x = draw(st.lists(st.lists(fl, min_size=p, max_size=p), min_size=n, max_size=n))
    angle = draw(st.floats(0, 2 * math.pi))
    b = tuple(draw(st.lists(st.floats(-1, 1), min_size=p, max_size=p)))
    level = draw(st.floats(0.02, 0.5))
    plugged = draw(st.booleans())
    c = draw(st.floats(-1.5, 1.5))
    w = draw(st.floats(-1.5, 1.5))
    h = draw(st.floats(0.3, 3.0))
    kname = draw(st.sampled_from(["epanechnikov", "gaussian2"]))
    return y, x, (math.cos(angle), math.sin(angle)), b, level, plugged, c, w, h, kname


class TestEstimateCes:
    @settings(max_examples=150, deadline=None)
    @given(ces_case())
    def test_matches_direct_loop(self, case):
        y, x, a, b, level, plugged, c, w, h, kname = case
        sample = Sample(y=np.array(y), x=np.array(x))
        kernel = make_epanechnikov() if kname == "epanechnikov" else make_gaussian_kernel(2)
        threshold = PluggedVar(level) if plugged else ConstantThreshold(c)
        got = estimate_ces(sample, CesIndex(a, b, threshold, level), kernel, h, w, 1e-3)
        want = oracle_ces(y, x, a, b, None if plugged else (lambda row: c), level, w, h, oracle_kernel(kname), 1e-3)
        if want is None:
            assert got is None
        else:
            assert got == pytest.approx(want, abs=1e-12)

    @pytest.mark.parametrize("y0, want", [
        ([0, 0, 0, 0, 1, 1, 1, 1], 0.0),  # mass above -1 is exactly p: VaR = -1
        ([0, 0, 0, 1, 1, 1, 1, -1], 0.25),
    ])
    def test_exact_tie_under_rounded_weights(self, y0, want):
        # equal weights 0.75 * (1 - (1/1.5)^2) do not sum exactly in floating point
        y = [[float(v), 0.0] for v in y0]
        s = Sample(y=y, x=[[0.0]] * 8)
        got = estimate_ces(s, CesIndex((1.0, 0.0), (0.0,), PluggedVar(0.5)), make_epanechnikov(), 1.5, 1.0)
        assert got == pytest.approx(want, abs=1e-15)
        assert oracle_ces(y, [[0.0]] * 8, (1.0, 0.0), (0.0,), None, 0.5, 1.0, 1.5, k_epanechnikov, 1e-3) == pytest.approx(want)

    def test_constant_threshold_equals_ratio_of_T(self):
        rng = np.random.default_rng(4)
        s = Sample(y=rng.normal(size=(300, 2)), x=rng.normal(size=(300, 2)))
        a, b, c = (0.6, 0.8), (1.0, 0.5), 0.4
        kernel = make_epanechnikov()
        ces = estimate_ces(s, CesIndex(a, b, ConstantThreshold(c)), kernel, 0.5, 0.1)
        num = estimate_T(s, PsiIndex(ShortfallNumerator(a, ConstantThreshold(c)), SingleIndex(b)), kernel, 0.5, [0.1])
        den = estimate_T(s, PsiIndex(ShortfallIndicator(a, ConstantThreshold(c)), SingleIndex(b)), kernel, 0.5, [0.1])
        assert ces == pytest.approx(num / den, rel=1e-13)

    def test_affine_threshold(self):
        y = [[-2.0, 0.0], [-1.0, 0.0], [-3.0, 0.0]]
        x = [[0.0], [0.0], [1.0]]
        thr = AffineThreshold((2.0,), 0.5)  # c = 0.5 at x=0, 2.5 at x=1
        got = estimate_ces(Sample(y=y, x=x), CesIndex((1.0, 0.0), (1.0,), thr), make_epanechnikov(), 2.0, 0.0)
        want = oracle_ces(y, x, (1.0, 0.0), (1.0,), lambda r: 2.0 * r[0] + 0.5, None, 0.0, 2.0, k_epanechnikov, 1e-3)
        assert got == pytest.approx(want, abs=1e-14)

    def test_no_local_data_is_undefined(self):
        s = Sample(y=[[0.0, 0.0]], x=[[5.0]])
        assert estimate_ces(s, CesIndex((1.0, 0.0), (1.0,), PluggedVar(0.1)), make_epanechnikov(), 0.5, 0.0) is None

    def test_ces_dominates_var(self):
        rng = np.random.default_rng(9)
        s = Sample(y=rng.normal(size=(2000, 2)), x=rng.normal(size=(2000, 1)))
        for w in (-0.5, 0.0, 0.5):
            var = estimate_conditional_var(s, (1.0, 0.0), (1.0,), 0.1, make_epanechnikov(), 0.5, w)
            ces = estimate_ces(s, CesIndex((1.0, 0.0), (1.0,), PluggedVar(0.1)), make_epanechnikov(), 0.5, w)
            assert ces > var

    def test_portfolio_dimension_checked(self):
        s = Sample(y=np.zeros((3, 3)), x=np.zeros((3, 1)))
        with pytest.raises(InvalidInputError):
            estimate_ces(s, CesIndex((1.0, 0.0), (1.0,), PluggedVar(0.1)), make_epanechnikov(), 0.5, 0.0)


class TestCesSurface:
    def test_cells_match_scalar_estimator(self):
        rng = np.random.default_rng(12)
        s = Sample(y=rng.normal(size=(400, 2)), x=rng.normal(size=(400, 2)))
        indices = ces_index_grid([0.0, 2.0, 4.0], [[1.0, 0.0], [0.5, 0.5]], [0.1, 0.25])
        indices.append(CesIndex((0.0, 1.0), (1.0, 0.0), ConstantThreshold(0.3)))
        grid = eval_grid(1.0, 9)
        hs = (0.2, 0.5)
        surf = ces_surface(s, indices, make_epanechnikov(), hs, grid)
        assert surf.quantile_violations == 0
        for ih, h in enumerate(hs):
            for j, ix in enumerate(indices):
                for iw, w in enumerate(grid.points[:, 0]):
                    want = estimate_ces(s, ix, make_epanechnikov(), h, w)
                    if want is None:
                        assert not surf.defined[ih, j, iw]
                    else:
                        assert surf.ces[ih, j, iw] == pytest.approx(want, rel=1e-14, abs=1e-15)
                    if ix.plugged:
                        var = estimate_conditional_var(s, ix.a, ix.b, ix.p_level, make_epanechnikov(), h, w)
                        assert surf.var[ih, j, iw] == var

    def test_to_dict_shapes(self):
        rng = np.random.default_rng(1)
        s = Sample(y=rng.normal(size=(50, 2)), x=rng.normal(size=(50, 1)))
        surf = ces_surface(s, ces_index_grid([0.0], [[1.0]], [0.1]), make_epanechnikov(), (0.5,), eval_grid(1.0, 3))
        d = surf.to_dict()
        assert len(d["ces"]) == 1 and len(d["ces"][0]) == 1 and len(d["ces"][0][0]) == 3


def test_nadaraya_watson_indicator_tail_probability():
    """Kernel regression of the exceedance indicator at the plugged VaR is at most p."""
    rng = np.random.default_rng(21)
    x = rng.normal(size=(3000, 1))
    y = np.column_stack([rng.normal(size=3000), np.zeros(3000)])
    s = Sample(y=y, x=x)
    kernel = make_epanechnikov()
    var = estimate_conditional_var(s, (1.0, 0.0), (1.0,), 0.1, kernel, 0.4, 0.0)
    prob = estimate_m(s, PsiIndex(ShortfallIndicator((1.0, 0.0), ConstantThreshold(var)), SingleIndex((1.0,))), kernel, 0.4, [0.0])
    assert prob <= 0.1 + 1e-12
