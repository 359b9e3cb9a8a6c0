"""Conditional VaR plug-in and the kernel conditional expected shortfall estimator.

For portfolio weights ``a`` (unit vector), index direction ``b`` and a
threshold function ``c``::

    CES_hat(w) = sum_t L_t 1(L_t > c(X_t)) K_t / sum_t 1(L_t > c(X_t)) K_t

with losses ``L_t = -a'Y_t`` and kernel weights ``K_t = K((w - b'X_t)/h)``.
With a :class:`~mixsmooth.model.PluggedVar` threshold the VaR is estimated at
the same ``(h, w)`` from the same kernel weights, as the left-continuous
weighted quantile

    c_hat = inf{ c : sum_t K_t 1(L_t > c) / sum_t K_t <= p }.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import norm

from .errors import InvalidInputError, NoLocalDataError
from .estimators import DEFAULT_TRIM, EvalGrid, KernelSmoother, check_bandwidth
from .kernels import Kernel
from .model import ConstantThreshold, PluggedVar, Sample, SingleIndex, ThresholdFn, as_unit_vector

# Tail mass within this relative distance of p counts as exactly p, so exact
# ties resolve the same way whatever the summation order.
QUANTILE_TIE_RTOL = 1e-12
# Relative slack used when re-checking quantile consistency with plain sums.
QUANTILE_CHECK_RTOL = 1e-10


def _check_level(p_level):
    if not 0.0 < p_level < 1.0:
        raise InvalidInputError(f"p_level must lie in (0, 1), got {p_level}")


@dataclass(frozen=True)
class CesIndex:
    a: tuple
    b: tuple
    c: ThresholdFn
    p_level: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "a", as_unit_vector(self.a))
        object.__setattr__(self, "b", SingleIndex(self.b).b)
        if isinstance(self.c, PluggedVar):
            if self.p_level is None:
                object.__setattr__(self, "p_level", self.c.p_level)
            elif self.p_level != self.c.p_level:
                raise InvalidInputError("p_level disagrees with the PluggedVar threshold")
        if self.p_level is not None:
            _check_level(self.p_level)

    @property
    def plugged(self) -> bool:
        return isinstance(self.c, PluggedVar) and self.c.curve is None

    def label(self) -> str:
        a = ",".join(f"{v:.6g}" for v in self.a)
        b = ",".join(f"{v:.6g}" for v in self.b)
        if isinstance(self.c, PluggedVar):
            c = f"var@{self.p_level:g}"
        else:
            c = repr(self.c)
        return f"a=({a}) b=({b}) c={c}"


def ces_index_grid(angles, b_vectors, p_levels) -> list[CesIndex]:
    """Cartesian grid of plugged-VaR indices; portfolios on the unit circle (q = 2)."""
    out = []
    for angle in angles:
        a = (math.cos(angle), math.sin(angle))
        for b in b_vectors:
            for p in p_levels:
                out.append(CesIndex(a=a, b=tuple(b), c=PluggedVar(float(p))))
    return out


class LocalLosses:
    """Losses with non-negative weights, sorted once for repeated quantile queries."""

    def __init__(self, losses: np.ndarray, weights: np.ndarray):
        if np.any(weights < 0):
            raise InvalidInputError("VaR plug-in needs non-negative kernel weights")
        self.losses = losses
        self.weights = weights
        self.total = float(np.sum(weights))
        if not self.total > 0:
            raise NoLocalDataError("zero total kernel weight at the evaluation point")
        order = np.argsort(-losses, kind="stable")
        self._sorted = losses[order]
        cum = np.cumsum(weights[order])
        self._above = np.concatenate([[0.0], cum[:-1]])

    def var(self, p_level: float) -> float:
        _check_level(p_level)
        # _above[k] is the weight ranked strictly before position k; ties make
        # it an over-count only inside a tie group, which shares one value.
        k = int(np.count_nonzero(self._above <= p_level * self.total * (1.0 + QUANTILE_TIE_RTOL)))
        return float(self._sorted[k - 1])


def weighted_var(losses, weights, p_level: float) -> float:
    """Left-continuous weighted upper quantile ``inf{c : mass(L > c) <= p}``."""
    losses = np.asarray(losses, dtype=float).ravel()
    weights = np.asarray(weights, dtype=float).ravel()
    if losses.shape != weights.shape or losses.size == 0:
        raise InvalidInputError("losses and weights must be non-empty and equally long")
    return LocalLosses(losses, weights).var(p_level)


def quantile_consistent(losses, weights, c: float, p_level: float) -> bool:
    """Check ``c`` against its definition using plain masked sums.

    Mass strictly above ``c`` is at most ``p``, and for the largest loss
    below ``c`` the mass above it exceeds ``p``.
    """
    losses = np.asarray(losses, dtype=float)
    weights = np.asarray(weights, dtype=float)
    total = float(np.sum(weights))
    slack = QUANTILE_CHECK_RTOL * total
    if float(np.sum(weights[losses > c])) > p_level * total + slack:
        return False
    below = losses < c
    if not below.any():
        return True
    return float(np.sum(weights[losses >= c])) > p_level * total - slack


def _local(sample: Sample, b, kernel, h, w):
    h = check_bandwidth(h)
    w = float(np.ravel(w)[0]) if np.ndim(w) else float(w)
    if not math.isfinite(w):
        raise InvalidInputError("evaluation point must be finite")
    smoother = KernelSmoother(SingleIndex(b).apply(sample.x), kernel)
    idx, k = smoother.weights(h, w)
    return h, w, idx, k


def estimate_conditional_var(sample: Sample, a, b, p_level, kernel: Kernel, h, w) -> float:
    _check_level(p_level)
    a = np.asarray(as_unit_vector(a))
    if len(a) != sample.q:
        raise InvalidInputError(f"portfolio has {len(a)} weights, sample has q={sample.q}")
    h, w, idx, k = _local(sample, b, kernel, h, w)
    if idx.size == 0:
        raise NoLocalDataError(f"no observations receive kernel weight at w={w}, h={h}")
    return LocalLosses(-(sample.y[idx] @ a), k).var(p_level)


def _ces_ratio(loss, k, thresholds, n, h, trim_tau):
    exceed = loss > thresholds
    num = np.sum(np.where(exceed, loss, 0.0) * k) / (n * h)
    den = np.sum(exceed.astype(float) * k) / (n * h)
    if not den >= trim_tau:
        return None
    return float(num / den)


def estimate_ces(
    sample: Sample, index: CesIndex, kernel: Kernel, h, w, trim_tau: float = DEFAULT_TRIM
) -> float | None:
    """Kernel CES ratio at ``w``; ``None`` when the normalized denominator is below ``trim_tau``."""
    if not trim_tau > 0:
        raise InvalidInputError("trim_tau must be positive")
    if len(index.a) != sample.q:
        raise InvalidInputError(f"portfolio has {len(index.a)} weights, sample has q={sample.q}")
    h, w, idx, k = _local(sample, index.b, kernel, h, w)
    if idx.size == 0:
        return None
    loss = -(sample.y[idx] @ np.asarray(index.a))
    if index.plugged:
        thresholds = LocalLosses(loss, k).var(index.p_level)
    else:
        thresholds = index.c(sample.x[idx])
    return _ces_ratio(loss, k, thresholds, sample.n, h, trim_tau)


def ces_truth_gaussian(
    mu_fn: Callable[[float], float], sigma: float, p_level: float
) -> Callable[[float], tuple[float, float]]:
    """Closed-form ``w -> (VaR(w), CES(w))`` for losses ``N(mu_fn(w), sigma^2)``."""
    if not (sigma > 0 and math.isfinite(sigma)):
        raise InvalidInputError(f"sigma must be positive, got {sigma}")
    _check_level(p_level)
    z = float(norm.ppf(1.0 - p_level))
    tail = sigma * float(norm.pdf(z)) / p_level

    def truth(w):
        mu = float(mu_fn(w))
        return mu + sigma * z, mu + tail

    return truth


@dataclass
class CesSurface:
    """VaR and CES estimates over a (bandwidth, index, evaluation point) grid."""

    var: np.ndarray
    ces: np.ndarray
    defined: np.ndarray
    quantile_ok: np.ndarray
    bandwidths: tuple
    points: np.ndarray
    index_labels: list
    kernel: str
    n: int
    trim_tau: float
    metadata: dict = field(default_factory=dict)

    @property
    def undefined_count(self) -> int:
        return int(np.count_nonzero(~self.defined))

    @property
    def quantile_violations(self) -> int:
        return int(np.count_nonzero(~self.quantile_ok))

    def to_dict(self) -> dict:
        def nested(arr, mask):
            return [
                [[float(v) if ok else None for v, ok in zip(r, m)] for r, m in zip(blk, mblk)]
                for blk, mblk in zip(arr, mask)
            ]

        return {
            "kernel": self.kernel,
            "n": self.n,
            "trim_tau": self.trim_tau,
            "bandwidths": list(self.bandwidths),
            "points": self.points[:, 0].tolist(),
            "index_labels": list(self.index_labels),
            "var": nested(self.var, np.isfinite(self.var)),
            "ces": nested(self.ces, self.defined),
            "undefined_mask": (~self.defined).astype(int).tolist(),
            "quantile_violations": self.quantile_violations,
            "metadata": dict(self.metadata),
        }


def ces_surface(
    sample: Sample,
    indices: Sequence[CesIndex],
    kernel: Kernel,
    bandwidths,
    grid: EvalGrid,
    trim_tau: float = DEFAULT_TRIM,
) -> CesSurface:
    """VaR plug-in and CES at every cell; each cell matches :func:`estimate_ces`."""
    if grid.d != 1:
        raise InvalidInputError("CES surfaces use a one-dimensional index grid")
    if not trim_tau > 0:
        raise InvalidInputError("trim_tau must be positive")
    hs = tuple(check_bandwidth(h) for h in bandwidths)
    indices = list(indices)
    shape = (len(hs), len(indices), len(grid))
    var = np.full(shape, np.nan)
    ces = np.full(shape, np.nan)
    defined = np.zeros(shape, dtype=bool)
    qok = np.ones(shape, dtype=bool)

    by_b: dict = {}
    for j, ix in enumerate(indices):
        if len(ix.a) != sample.q:
            raise InvalidInputError(f"portfolio has {len(ix.a)} weights, sample has q={sample.q}")
        by_b.setdefault(ix.b, []).append(j)
    all_losses = {ix.a: -(sample.y @ np.asarray(ix.a)) for ix in indices}

    for b, members in by_b.items():
        smoother = KernelSmoother(SingleIndex(b).apply(sample.x), kernel)
        for ih, h in enumerate(hs):
            for iw, w in enumerate(grid.points[:, 0]):
                idx, k = smoother.weights(h, w)
                if idx.size == 0:
                    continue
                local: dict = {}
                for j in members:
                    ix = indices[j]
                    loss = all_losses[ix.a][idx]
                    if ix.plugged:
                        if ix.a not in local:
                            local[ix.a] = LocalLosses(loss, k)
                        c_hat = local[ix.a].var(ix.p_level)
                        var[ih, j, iw] = c_hat
                        qok[ih, j, iw] = quantile_consistent(loss, k, c_hat, ix.p_level)
                        thresholds = c_hat
                    else:
                        thresholds = ix.c(sample.x[idx])
                    value = _ces_ratio(loss, k, thresholds, sample.n, h, trim_tau)
                    if value is not None:
                        ces[ih, j, iw] = value
                        defined[ih, j, iw] = True
    return CesSurface(
        var=var,
        ces=ces,
        defined=defined,
        quantile_ok=qok,
        bandwidths=hs,
        points=np.array(grid.points),
        index_labels=[ix.label() for ix in indices],
        kernel=kernel.name,
        n=sample.n,
        trim_tau=trim_tau,
    )
