"""Numerical checks of the rate, bias order and dependence-weighted norm.

Three families of checks live here:

* the beta-weighted norm ``||f||_{2,beta}^2 = int_0^1 beta^{-1}(u) Q_f(u)^2 du``
  and its size for kernel-class functions ``f(x) = k((w - x) / h)``;
* the exact smoothing bias ``int [T(w - h u) - T(w)] K(u) du`` by quadrature;
* Monte Carlo rate experiments: the mean over replications of the sup
  deviation over bandwidths, indices and evaluation points, fitted on
  ``log n`` by least squares and compared with ``-r / (2r + d)``.

The rate has no logarithmic factor; at desk scale a ``log n`` factor would
shift the fitted slope by less than the acceptance band, so the harness tests
the polynomial exponent only.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import integrate, stats

from ._parallel import pmap
from .errors import (
    DivergentIntegralError,
    EmptySupremumError,
    InvalidInputError,
    MixsmoothError,
    NumericalFailureError,
)
from .estimators import KernelSmoother, bandwidth_grid, estimate_surface, eval_grid
from .kernels import Kernel, kernel_square_integral
from .model import Constant, Identity, PsiIndex, Raw
from .processes import (
    IID,
    Geometric,
    MixingSpec,
    Polynomial,
    derive_seed,
    simulate,
    true_density,
    true_regression,
)
from .risk import ces_index_grid, ces_surface

LOG_FACTOR_NOTE = (
    "the target rate carries no logarithmic factor; a log n factor is not "
    "distinguishable from the polynomial slope at these sample sizes"
)

# -- beta inverse -------------------------------------------------------------


def beta_inverse(spec: MixingSpec, u: float) -> int:
    """``sum_{j >= 0} 1(beta_j > u)`` for ``u`` in ``(0, 1)``."""
    u = float(u)
    if not 0.0 < u < 1.0:
        raise InvalidInputError(f"beta_inverse needs u in (0, 1), got {u}")
    if isinstance(spec, IID):
        return 1
    if isinstance(spec, Geometric):
        guess = math.ceil(math.log(u) / math.log(spec.rho))
    elif isinstance(spec, Polynomial):
        guess = 1 + max(0, math.ceil((spec.scale / u) ** (1.0 / spec.b_exp)) - 1)
    else:
        raise InvalidInputError(f"unsupported mixing spec {spec!r}")
    # beta is nonincreasing, so the count is the first j with beta_j <= u;
    # the closed form can be off by one from rounding.
    k = max(guess, 1)
    while spec.beta(k) > u:
        k += 1
    while k > 1 and spec.beta(k - 1) <= u:
        k -= 1
    return k


def _beta_array(spec, k):
    k = np.asarray(k, dtype=float)
    if isinstance(spec, Geometric):
        return spec.rho**k
    safe = np.maximum(k, 1.0)
    return np.where(k == 0, 1.0, spec.scale * safe ** (-spec.b_exp))


def beta_inverse_array(spec: MixingSpec, u: np.ndarray) -> np.ndarray:
    """Vectorized :func:`beta_inverse` (same closed form and correction)."""
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0.0) | (u >= 1.0)):
        raise InvalidInputError("beta_inverse needs u in (0, 1)")
    if isinstance(spec, IID):
        return np.ones_like(u)
    if isinstance(spec, Geometric):
        k = np.ceil(np.log(u) / math.log(spec.rho))
    elif isinstance(spec, Polynomial):
        k = 1.0 + np.maximum(0.0, np.ceil((spec.scale / u) ** (1.0 / spec.b_exp)) - 1.0)
    else:
        raise InvalidInputError(f"unsupported mixing spec {spec!r}")
    k = np.maximum(k, 1.0)
    while True:
        up = _beta_array(spec, k) > u
        if not up.any():
            break
        k = k + up
    while True:
        down = (k > 1) & (_beta_array(spec, k - 1) <= u)
        if not down.any():
            break
        k = k - down
    return k


def _jumps_in(spec, lo, hi, cap):
    """Values ``beta_j`` (j >= 1) inside ``(lo, hi)``, or None when more than ``cap``."""
    if isinstance(spec, IID):
        return []
    j_hi = beta_inverse(spec, hi) if hi < 1.0 else 1
    j_lo = beta_inverse(spec, lo)
    count = j_lo - j_hi
    if count > cap:
        return None
    vals = [spec.beta(j) for j in range(j_hi, j_lo)]
    return [v for v in vals if lo < v < hi]


# -- beta-weighted norm -------------------------------------------------------


class NormValue(NamedTuple):
    value: float
    abserr: float
    levels: int


def _as_vector_fn(fn):
    def call(u):
        try:
            out = np.asarray(fn(u), dtype=float)
        except (TypeError, ValueError):
            out = None
        if out is None or out.shape != u.shape:
            out = np.array([float(fn(float(x))) for x in u])
        return out

    return call


def _composite(g, edges, rule):
    """Gauss-Legendre rule applied on every panel ``[edges[i], edges[i+1]]`` at once."""
    x, w = rule
    lo, hi = edges[:-1, None], edges[1:, None]
    half = 0.5 * (hi - lo)
    nodes = lo + half * (x[None, :] + 1.0)
    vals = g(nodes.ravel()).reshape(nodes.shape)
    return float(np.sum(half * w[None, :] * vals))


def beta_norm_sq(
    spec: MixingSpec,
    quantile_fn: Callable,
    quad_points: int = 16,
    breakpoints: Sequence[float] = (),
    rtol: float = 1e-12,
    max_levels: int = 400,
    max_jumps: int = 256,
) -> NormValue:
    """``int_0^1 beta^{-1}(u) Q(u)^2 du`` by composite Gauss-Legendre quadrature.

    The unit interval is split into dyadic panels ``[2^-(j+1), 2^-j]``; each
    panel is cut further at the jumps of ``beta^{-1}`` (the values
    ``beta_j``) and at the caller's ``breakpoints`` (kinks of ``Q``), so the
    rule only sees smooth pieces. The error estimate compares
    ``quad_points`` against ``2 * quad_points`` nodes. Panels are added
    towards ``u = 0`` until the remaining tail, extrapolated from the decay
    of the per-panel contributions, falls below ``rtol`` times the total.

    Raises
    ------
    DivergentIntegralError
        If the panel contributions stop decaying, i.e. the running value
        grows without bound as panels approach 0.
    """
    if quad_points < 2:
        raise InvalidInputError("quad_points must be >= 2")
    q = _as_vector_fn(quantile_fn)
    coarse = np.polynomial.legendre.leggauss(quad_points)
    fine = np.polynomial.legendre.leggauss(2 * quad_points)
    bps = sorted(float(b) for b in breakpoints if 0.0 < float(b) < 1.0)

    def integrand(nodes):
        qv = q(nodes)
        if not np.all(np.isfinite(qv)):
            raise NumericalFailureError("quantile function returned a non-finite value")
        steps = beta_inverse_array(spec, nodes)
        return steps * qv * qv

    def level(lo, hi):
        cuts = [b for b in bps if lo < b < hi]
        jumps = _jumps_in(spec, lo, hi, max_jumps)
        if jumps is None:
            # Too many steps to cut at: split evenly and let the step
            # function be sampled; the fine/coarse gap records the error.
            cuts += list(np.linspace(lo, hi, 2 * max_jumps + 1)[1:-1])
        else:
            cuts += jumps
        edges = np.unique(np.array([lo, hi] + cuts, dtype=float))
        c = _composite(integrand, edges, coarse)
        f = _composite(integrand, edges, fine)
        return f, abs(f - c)

    total = 0.0
    err = 0.0
    contribs = []
    partial_values = []
    for j in range(max_levels):
        hi = 2.0**-j
        lo = 2.0 ** -(j + 1)
        val, e = level(lo, hi)
        total += val
        err += e
        contribs.append(val)
        partial_values.append(total)
        if val < 0:
            raise NumericalFailureError("negative panel contribution; Q must be real-valued")
        if j >= 8:
            recent = contribs[-6:]
            if all(x == 0.0 for x in recent):
                return NormValue(float(total), float(err), j + 1)
            ratios = [b / a for a, b in zip(recent, recent[1:]) if a > 0]
            if len(ratios) == len(recent) - 1:
                r = max(ratios)
                if r < 1.0:
                    tail = val * r / (1.0 - r)
                    if tail <= rtol * total:
                        return NormValue(float(total + tail), float(err + tail), j + 1)
                elif j >= 40 and min(ratios) >= 1.0 - 1e-3:
                    raise DivergentIntegralError(
                        f"beta-weighted norm diverges: panel contributions stopped "
                        f"decaying near u = {lo:.3g} (running value {total:.6g})",
                        partial_values,
                    )
    raise DivergentIntegralError(
        f"beta-weighted norm did not converge within {max_levels} dyadic levels "
        f"(running value {total:.6g})",
        partial_values,
    )


def beta_inverse_integral(spec: MixingSpec, **kw) -> NormValue:
    """``int_0^1 beta^{-1}(u) du`` with the same quadrature (equals ``sum_j beta_j``)."""
    return beta_norm_sq(spec, lambda u: np.ones_like(u), **kw)


# -- kernel-class norm bound --------------------------------------------------

MARKOV = "markov"
LEVEL_SET = "level_set"


@dataclass
class NormReport:
    """Beta-weighted norms of ``f(x) = k((w - x) / h)`` over a bandwidth grid."""

    h_grid: list
    norm_sq_values: list
    ratio_values: list
    bound_constant: float
    tail: str
    constant: float
    kernel_bound: float
    density_bound: float
    spec: str
    errors: list

    @property
    def spread(self) -> float:
        """Largest ratio over smallest ratio."""
        return max(self.ratio_values) / min(self.ratio_values)

    @property
    def monotone_increasing(self) -> bool:
        """Whether the ratio strictly increases at every step as ``h`` decreases."""
        order = np.argsort(self.h_grid)[::-1]
        r = np.asarray(self.ratio_values)[order]
        return bool(np.all(np.diff(r) > 0))

    def to_dict(self) -> dict:
        return {
            "h_grid": list(self.h_grid),
            "norm_sq_values": list(self.norm_sq_values),
            "ratio_values": list(self.ratio_values),
            "bound_constant": self.bound_constant,
            "spread": self.spread,
            "monotone_increasing": self.monotone_increasing,
            "tail": self.tail,
            "constant": self.constant,
            "kernel_bound": self.kernel_bound,
            "density_bound": self.density_bound,
            "spec": self.spec,
            "abs_errors": list(self.errors),
        }


def markov_quantile(constant: float, h: float, bound: float) -> Callable:
    """Quantile of ``|f|`` under ``P(|f| > z) <= min(1, C h / z^2)`` and ``|f| <= bound``."""

    def qf(u):
        return np.minimum(bound, np.sqrt(constant * h / np.asarray(u, dtype=float)))

    return qf


def level_set_quantile(kernel: Kernel, density: float, h: float) -> Callable:
    """Quantile of ``|f|`` when the design density equals ``density`` near ``w``.

    For a nonnegative kernel that decreases in ``|t|``,
    ``P(f > z) = 2 density h t(z)`` with ``k(t(z)) = z``, hence
    ``Q(u) = k(u / (2 density h))``.
    """
    scale = 2.0 * density * h

    def qf(u):
        return kernel(np.asarray(u, dtype=float) / scale)

    return qf


def _check_unimodal(kernel: Kernel):
    t = np.linspace(0.0, kernel.integration_range[1], 4001)
    v = kernel(t)
    if np.any(v < 0) or np.any(np.diff(v) > 0):
        raise InvalidInputError(
            f"level-set tails need a nonnegative kernel decreasing in |t|; {kernel.name} is not"
        )


def kernel_class_norm_check(
    spec: MixingSpec,
    kernel: Kernel,
    density_bound: float,
    h_grid: Sequence[float],
    tail: str = MARKOV,
    quad_points: int = 16,
) -> NormReport:
    """Evaluate ``||f_h||_{2,beta}^2`` and ``||f_h||^2 / h`` for ``f_h(x) = k((w - x)/h)`` (d = 1).

    ``tail="markov"`` builds ``Q`` from ``P(|f| > z) <= min(1, C h / z^2)``
    with ``C = density_bound * int k^2`` and the cap ``|f| <= sup|k|``.
    ``tail="level_set"`` uses the exact tail of ``|f|`` under a design
    density equal to ``density_bound`` around ``w``.
    """
    if not density_bound > 0:
        raise InvalidInputError("density_bound must be positive")
    hs = [float(h) for h in h_grid]
    if not hs or any(not (h > 0 and math.isfinite(h)) for h in hs):
        raise InvalidInputError("h_grid must hold positive finite bandwidths")
    bound = kernel.bound
    constant = density_bound * kernel_square_integral(kernel)
    norms, errs = [], []
    for h in hs:
        if tail == MARKOV:
            qf = markov_quantile(constant, h, bound)
            kink = constant * h / bound**2
            res = beta_norm_sq(spec, qf, quad_points, breakpoints=[kink])
        elif tail == LEVEL_SET:
            _check_unimodal(kernel)
            qf = level_set_quantile(kernel, density_bound, h)
            edge = [2.0 * density_bound * h * kernel.half_width] if kernel.truncated else []
            res = beta_norm_sq(spec, qf, quad_points, breakpoints=edge)
        else:
            raise InvalidInputError(f"unknown tail model {tail!r}")
        norms.append(res.value)
        errs.append(res.abserr)
    ratios = [v / h for v, h in zip(norms, hs)]
    return NormReport(
        h_grid=hs,
        norm_sq_values=norms,
        ratio_values=ratios,
        bound_constant=max(ratios),
        tail=tail,
        constant=constant,
        kernel_bound=bound,
        density_bound=float(density_bound),
        spec=repr(spec),
        errors=errs,
    )


# -- smoothing bias -----------------------------------------------------------


def smoothing_bias(true_T: Callable[[float], float], kernel: Kernel, h: float, w: float, quad_tol: float = 1e-12) -> float:
    """Population bias ``int [T(w - h u) - T(w)] K(u) du`` by adaptive quadrature.

    This is ``E[T_hat(w)] - T(w)`` for a stationary design, free of Monte
    Carlo noise.
    """
    if not (h > 0 and math.isfinite(h)):
        raise InvalidInputError(f"bandwidth must be positive, got {h}")
    if not quad_tol > 0:
        raise InvalidInputError("quad_tol must be positive")
    t0 = float(true_T(w))

    def integrand(u):
        return (float(true_T(w - h * u)) - t0) * float(kernel(np.array([u]))[0])

    lo, hi = kernel.integration_range
    total = 0.0
    for a, b in ((lo, 0.0), (0.0, hi)):
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                val, err = integrate.quad(integrand, a, b, epsabs=quad_tol, epsrel=quad_tol, limit=500)
            except integrate.IntegrationWarning as exc:
                raise NumericalFailureError(
                    f"bias integral on [{a}, {b}] failed at h={h}, w={w}: {exc}"
                ) from None
        if not math.isfinite(val):
            raise NumericalFailureError(f"bias integral on [{a}, {b}] is not finite at h={h}, w={w}")
        total += val
    return total


class LogLogFit(NamedTuple):
    slope: float
    intercept: float
    stderr: float
    ci: tuple


def fit_loglog(x, y, level: float = 0.95) -> LogLogFit:
    """Least-squares line through ``(log x, log y)`` with a t-based slope interval."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise InvalidInputError("need at least two (x, y) pairs of equal length")
    if np.any(x <= 0) or np.any(y <= 0):
        raise InvalidInputError("log-log fit needs positive values")
    res = stats.linregress(np.log(x), np.log(y))
    if x.size > 2:
        t = stats.t.ppf(0.5 + level / 2.0, x.size - 2)
        ci = (float(res.slope - t * res.stderr), float(res.slope + t * res.stderr))
    else:
        ci = (float(res.slope), float(res.slope))
    return LogLogFit(float(res.slope), float(res.intercept), float(res.stderr), ci)


def bias_slope(true_T, kernel: Kernel, h_grid, w: float = 0.0, quad_tol: float = 1e-13) -> tuple[float, list]:
    """Log-log slope of ``|bias|`` against ``h``, with the bias values."""
    biases = [smoothing_bias(true_T, kernel, h, w, quad_tol) for h in h_grid]
    if any(b == 0.0 for b in biases):
        raise NumericalFailureError("bias vanishes on the grid; slope undefined")
    return fit_loglog(h_grid, np.abs(biases)).slope, biases


def theoretical_slope(r: int, d: int) -> float:
    """Exponent of ``n`` in ``min_h (n h^d)^(-1/2) + h^r``, i.e. ``-r / (2r + d)``."""
    if r < 1 or d < 1:
        raise InvalidInputError("need r >= 1 and d >= 1")
    return -r / (2.0 * r + d)


# -- rate experiments ---------------------------------------------------------


@dataclass
class RateReport:
    target: str
    kernel: str
    n_grid: list
    sup_errors: list
    median_sup_errors: list
    fixed_bandwidth_errors: list
    fitted_slope: float
    intercept: float
    slope_ci: tuple
    theoretical_slope: float
    replications: int
    bandwidths: list
    table: list
    diagnostics: dict
    config: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "kernel": self.kernel,
            "n_grid": list(self.n_grid),
            "sup_errors": list(self.sup_errors),
            "median_sup_errors": list(self.median_sup_errors),
            "fixed_bandwidth_errors": list(self.fixed_bandwidth_errors),
            "fitted_slope": self.fitted_slope,
            "intercept": self.intercept,
            "slope_ci": list(self.slope_ci),
            "theoretical_slope": self.theoretical_slope,
            "replications": self.replications,
            "bandwidths": [list(b) for b in self.bandwidths],
            "table": self.table,
            "diagnostics": self.diagnostics,
            "config": self.config,
            "notes": list(self.notes),
        }


def rate_bandwidths(n: int, constant: float, c_lo: float, c_hi: float, count: int, r: int, d: int = 1):
    """Grid over ``[c_lo, c_hi] * constant * n^(-1/(2r+d))``."""
    h_n = constant * float(n) ** (-1.0 / (2 * r + d))
    return bandwidth_grid(c_lo * h_n, c_hi * h_n, count).values


def _weighted_average_violations(sample, kernel, surface, tol=1e-12) -> int:
    """Cells where ``m_hat`` leaves the range of the locally weighted responses."""
    smoother = KernelSmoother(sample.x, kernel)
    y = sample.y[:, 0]
    scale = tol * max(1.0, float(np.max(np.abs(y))))
    bad = 0
    for ih, h in enumerate(surface.bandwidths):
        for iw, w in enumerate(surface.points):
            if not surface.defined[ih, 0, iw]:
                continue
            idx, _ = smoother.weights(h, w)
            v = surface.values[ih, 0, iw]
            if v < y[idx].min() - scale or v > y[idx].max() + scale:
                bad += 1
    return bad


def _rate_task(cfg, task):
    """One (n, replication) cell of a rate experiment; a pure function of its inputs."""
    n_index, rep = task
    exp = cfg.experiment
    n = exp.n_grid[n_index]
    try:
        return _rate_cell(cfg, n, rep)
    except MixsmoothError as exc:
        raise type(exc)(f"rate experiment cell n={n}, replication={rep}: {exc}") from exc


def _rate_cell(cfg, n, rep):
    exp = cfg.experiment
    model = cfg.model.build()
    kernel = cfg.kernel.build()
    bw = cfg.bandwidth
    hs = rate_bandwidths(n, bw.constant, bw.c_lo, bw.c_hi, bw.count, kernel.order, 1)
    mid = len(hs) // 2
    grid = eval_grid(cfg.eval.radius, cfg.eval.points)
    sample = simulate(model, n, derive_seed(exp.seed, n, rep))
    out = {"n": n, "replication": rep, "undefined": 0, "weighted_average_violations": None,
           "quantile_violations": None}
    if exp.target in ("density", "regression"):
        if exp.target == "density":
            psi = PsiIndex(Constant(1.0), Identity())
            surface = estimate_surface(sample, [psi], kernel, hs, grid, quantity="f")
            truth = np.array([[true_density(model, w) for w in grid.points[:, 0]]])
        else:
            psi = PsiIndex(Raw(0), Identity())
            surface = estimate_surface(sample, [psi], kernel, hs, grid, quantity="m", trim_tau=exp.trim_tau)
            truth = np.array([[true_regression(model, w) for w in grid.points[:, 0]]])
            out["undefined"] = surface.undefined_count
            if kernel.nonnegative:
                out["weighted_average_violations"] = _weighted_average_violations(sample, kernel, surface)
        values, defined = surface.values, surface.defined
    else:
        ix = cfg.index
        indices = ces_index_grid(ix.a_angles, ix.b_vectors, ix.p_levels)
        cs = ces_surface(sample, indices, kernel, hs, grid, trim_tau=exp.trim_tau)
        truth = np.array(
            [[model.ces_truth(i.a, i.b, i.p_level)(w)[1] for w in grid.points[:, 0]] for i in indices]
        )
        values, defined = cs.ces, cs.defined
        out["undefined"] = cs.undefined_count
        out["quantile_violations"] = cs.quantile_violations
    dev = np.where(defined, np.abs(values - truth[None]), -np.inf)
    if not defined.any():
        raise EmptySupremumError("every cell of the surface is undefined")
    out["sup"] = float(dev.max())
    mid_dev = dev[mid]
    out["fixed"] = float(mid_dev.max()) if np.isfinite(mid_dev.max()) else None
    out["argmax_h"] = int(np.unravel_index(int(np.argmax(dev)), dev.shape)[0])
    return out


def rate_experiment(cfg, workers: int = 1) -> RateReport:
    """Run a multi-``n`` Monte Carlo rate experiment described by an :class:`ExperimentConfig`.

    Each ``(n, replication)`` pair draws its sample from a seed derived from
    ``(master seed, n, replication)``, so the report does not depend on
    ``workers`` or on scheduling.
    """
    exp = cfg.experiment
    kernel = cfg.kernel.build()
    tasks = [(i, rep) for i in range(len(exp.n_grid)) for rep in range(exp.replications)]
    rows = pmap(partial(_rate_task, cfg), tasks, workers)

    sup_mean, sup_median, fixed_mean, bws = [], [], [], []
    diag = {"undefined_cells": [], "weighted_average_violations": [], "quantile_violations": [],
            "sup_dominates_fixed": True}
    bw = cfg.bandwidth
    for i, n in enumerate(exp.n_grid):
        mine = [r for r in rows if r["n"] == n]
        sups = np.array([r["sup"] for r in mine])
        sup_mean.append(float(np.mean(sups)))
        sup_median.append(float(np.median(sups)))
        fixed = [r["fixed"] for r in mine if r["fixed"] is not None]
        fixed_mean.append(float(np.mean(fixed)) if fixed else None)
        bws.append(list(rate_bandwidths(n, bw.constant, bw.c_lo, bw.c_hi, bw.count, kernel.order, 1)))
        diag["undefined_cells"].append(int(sum(r["undefined"] for r in mine)))
        wav = [r["weighted_average_violations"] for r in mine]
        diag["weighted_average_violations"].append(None if None in wav else int(sum(wav)))
        qv = [r["quantile_violations"] for r in mine]
        diag["quantile_violations"].append(None if None in qv else int(sum(qv)))
        if any(r["fixed"] is not None and r["sup"] < r["fixed"] for r in mine):
            diag["sup_dominates_fixed"] = False
    fit = fit_loglog(exp.n_grid, sup_mean)
    return RateReport(
        target=exp.target,
        kernel=kernel.name,
        n_grid=list(exp.n_grid),
        sup_errors=sup_mean,
        median_sup_errors=sup_median,
        fixed_bandwidth_errors=fixed_mean,
        fitted_slope=fit.slope,
        intercept=fit.intercept,
        slope_ci=fit.ci,
        theoretical_slope=theoretical_slope(kernel.order, 1),
        replications=exp.replications,
        bandwidths=bws,
        table=rows,
        diagnostics=diag,
        config=cfg.echo(),
        notes=[LOG_FACTOR_NOTE],
    )
