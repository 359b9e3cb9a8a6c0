"""Kernel estimators of ``T_psi(w) = m_psi(w) f_W(w)``, the index density and their ratio.

    T_hat(w) = 1/(n h^d) sum_t phi(Z_t) K((w - W(X_t)) / h)
    f_hat(w) = 1/(n h^d) sum_t K((w - W(X_t)) / h)
    m_hat(w) = T_hat(w) / f_hat(w)         (undefined where f_hat < trim_tau)

Every sum runs over the observations with a non-zero kernel factor in
increasing time order, using numpy's pairwise summation, so results do not
depend on how a grid of cells is split between workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import EmptySupremumError, InvalidBandwidthError, InvalidInputError
from .kernels import Kernel, product_kernel
from .model import Constant, PsiIndex, Sample

MIN_BANDWIDTH = 1e-8
DEFAULT_TRIM = 1e-3

# Relative slack on the search window of truncated kernels; the kernel itself
# zeroes anything outside its support.
_WINDOW_SLACK = 1e-9


def check_bandwidth(h: float) -> float:
    h = float(h)
    if not math.isfinite(h) or h <= 0:
        raise InvalidBandwidthError(f"bandwidth must be a positive finite number, got {h}")
    if h < MIN_BANDWIDTH:
        raise InvalidBandwidthError(f"bandwidth {h} is below the underflow guard {MIN_BANDWIDTH}")
    return h


class KernelSmoother:
    """Kernel weights ``K((w - P_t) / h)`` for a fixed array of index points ``P``.

    One-dimensional points with a truncated kernel are searched through a
    sorted copy, so only observations inside the window are touched.
    """

    def __init__(self, points: np.ndarray, kernel: Kernel):
        points = np.ascontiguousarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        self.points = points
        self.kernel = kernel
        self.n, self.d = points.shape
        self._windowed = kernel.truncated and self.d == 1
        if self._windowed:
            self._order = np.argsort(points[:, 0], kind="stable")
            self._sorted = points[self._order, 0]

    def weights(self, h: float, w) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(idx, k)``: time indices (ascending) with non-zero weight and the weights."""
        w = np.asarray(w, dtype=float).reshape(self.d)
        if self._windowed:
            reach = self.kernel.half_width * h * (1.0 + _WINDOW_SLACK)
            lo = np.searchsorted(self._sorted, w[0] - reach, side="left")
            hi = np.searchsorted(self._sorted, w[0] + reach, side="right")
            idx = np.sort(self._order[lo:hi])
            k = self.kernel((w[0] - self.points[idx, 0]) / h)
        else:
            idx = np.arange(self.n)
            k = product_kernel(self.kernel, (w - self.points) / h)
        keep = k != 0.0
        return idx[keep], k[keep]

    def sums(self, values: np.ndarray, h: float, w) -> np.ndarray:
        """``sum_t values[..., t] K((w - P_t)/h)`` for a 1-D or 2-D ``values`` array."""
        idx, k = self.weights(h, w)
        if values.ndim == 1:
            return np.sum(values[idx] * k)
        return np.sum(values[:, idx] * k, axis=1)


def _prepare(sample: Sample, psi: PsiIndex, h, w):
    h = check_bandwidth(h)
    points = psi.w_map.apply(sample.x)
    d = points.shape[1]
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if w.shape != (d,):
        raise InvalidInputError(f"evaluation point has shape {w.shape}, expected ({d},)")
    if not np.all(np.isfinite(w)):
        raise InvalidInputError("evaluation point must be finite")
    return h, points, d, w


def estimate_T(sample: Sample, psi: PsiIndex, kernel: Kernel, h: float, w) -> float:
    h, points, d, w = _prepare(sample, psi, h, w)
    values = psi.phi.values(sample.y, sample.x)
    total = KernelSmoother(points, kernel).sums(values, h, w)
    return float(total / (sample.n * h**d))


def estimate_f(sample: Sample, w_map, kernel: Kernel, h: float, w) -> float:
    return estimate_T(sample, PsiIndex(Constant(1.0), w_map), kernel, h, w)


def estimate_m(
    sample: Sample, psi: PsiIndex, kernel: Kernel, h: float, w, trim_tau: float = DEFAULT_TRIM
) -> float | None:
    """Nadaraya-Watson ratio; ``None`` where the density estimate is below ``trim_tau``."""
    if not trim_tau > 0:
        raise InvalidInputError("trim_tau must be positive")
    f_hat = estimate_f(sample, psi.w_map, kernel, h, w)
    if not f_hat >= trim_tau:
        return None
    if isinstance(psi.phi, Constant):
        # The ratio of a constant cancels; skip the rounding of num / den.
        return float(psi.phi.value)
    return estimate_T(sample, psi, kernel, h, w) / f_hat


@dataclass(frozen=True)
class BandwidthGrid:
    a_n: float
    b_n: float
    values: tuple

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)


def bandwidth_grid(a_n: float, b_n: float, count: int) -> BandwidthGrid:
    """Geometric grid ``a_n = h_0 < ... < h_{count-1} = b_n``."""
    a_n, b_n, count = float(a_n), float(b_n), int(count)
    if not (0 < a_n <= b_n and math.isfinite(b_n)):
        raise InvalidInputError(f"need 0 < a_n <= b_n, got a_n={a_n}, b_n={b_n}")
    if count < 1:
        raise InvalidInputError("bandwidth grid needs count >= 1")
    if count == 1:
        if a_n != b_n:
            raise InvalidInputError("a single-point bandwidth grid requires a_n == b_n")
        return BandwidthGrid(a_n, b_n, (a_n,))
    if a_n == b_n:
        raise InvalidInputError("a multi-point bandwidth grid requires a_n < b_n")
    ratio = b_n / a_n
    vals = [a_n * ratio ** (i / (count - 1)) for i in range(count)]
    vals[-1] = b_n
    for h in vals:
        check_bandwidth(h)
    return BandwidthGrid(a_n, b_n, tuple(vals))


@dataclass(frozen=True)
class EvalGrid:
    points: np.ndarray
    radius: float

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[0] == 0:
            raise InvalidInputError("evaluation grid must be non-empty")
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("evaluation points must be finite")
        norms = np.linalg.norm(pts, axis=1)
        if np.any(norms > self.radius * (1 + 1e-12)):
            raise InvalidInputError(f"evaluation points exceed the radius {self.radius}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]


def eval_grid(radius: float, count: int) -> EvalGrid:
    """Equally spaced one-dimensional grid on ``[-radius, radius]``."""
    if not radius > 0 or count < 1:
        raise InvalidInputError("evaluation grid needs radius > 0 and count >= 1")
    pts = np.linspace(-radius, radius, count) if count > 1 else np.zeros(1)
    return EvalGrid(pts, float(radius))


@dataclass
class EstimateSurface:
    """Estimates over a (bandwidth, index, evaluation point) grid.

    ``values`` has shape ``(n_h, n_psi, n_w)`` and holds NaN wherever
    ``defined`` is False (trimmed ratio cells).
    """

    quantity: str
    values: np.ndarray
    defined: np.ndarray
    bandwidths: tuple
    points: np.ndarray
    psi_labels: list
    kernel: str
    n: int
    d: int
    trim_tau: float | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def undefined_count(self) -> int:
        return int(np.count_nonzero(~self.defined))

    def to_dict(self) -> dict:
        return {
            "quantity": self.quantity,
            "kernel": self.kernel,
            "n": self.n,
            "d": self.d,
            "trim_tau": self.trim_tau,
            "bandwidths": list(self.bandwidths),
            "points": self.points.tolist(),
            "psi_labels": list(self.psi_labels),
            "values": [
                [[float(v) if ok else None for v, ok in zip(row, mrow)] for row, mrow in zip(blk, mblk)]
                for blk, mblk in zip(self.values, self.defined)
            ],
            "undefined_mask": (~self.defined).astype(int).tolist(),
            "metadata": dict(self.metadata),
        }


def estimate_surface(
    sample: Sample,
    psis: Sequence[PsiIndex],
    kernel: Kernel,
    bandwidths,
    grid: EvalGrid,
    quantity: str = "T",
    trim_tau: float = DEFAULT_TRIM,
) -> EstimateSurface:
    """Evaluate ``T``, ``f`` or ``m`` on every cell of the grid.

    Cells agree with the scalar estimators; the index map of each distinct
    ``W`` is computed once and shared by all ``phi`` paired with it.
    """
    if quantity not in ("T", "f", "m"):
        raise InvalidInputError(f"unknown quantity {quantity!r}")
    if quantity == "m" and not trim_tau > 0:
        raise InvalidInputError("trim_tau must be positive")
    hs = tuple(check_bandwidth(h) for h in bandwidths)
    psis = list(psis)
    if not psis:
        raise InvalidInputError("need at least one index")
    n_w = len(grid)
    values = np.full((len(hs), len(psis), n_w), np.nan)
    defined = np.ones(values.shape, dtype=bool)

    groups: dict = {}
    for j, psi in enumerate(psis):
        groups.setdefault(psi.w_map, []).append(j)

    d = None
    for w_map, members in groups.items():
        points = w_map.apply(sample.x)
        if points.shape[1] != grid.d:
            raise InvalidInputError(f"index dimension {points.shape[1]} != grid dimension {grid.d}")
        d = points.shape[1]
        smoother = KernelSmoother(points, kernel)
        if quantity == "f":
            phis = np.ones((1, sample.n))
        else:
            phis = np.vstack([psis[j].phi.values(sample.y, sample.x) for j in members])
        for ih, h in enumerate(hs):
            scale = sample.n * h**d
            for iw, w in enumerate(grid.points):
                idx, k = smoother.weights(h, w)
                sums = np.sum(phis[:, idx] * k, axis=1) / scale
                if quantity == "f":
                    values[ih, members, iw] = sums[0]
                    continue
                if quantity == "T":
                    values[ih, members, iw] = sums
                    continue
                f_hat = np.sum(k) / scale
                for row, j in enumerate(members):
                    if not f_hat >= trim_tau:
                        defined[ih, j, iw] = False
                        values[ih, j, iw] = np.nan
                    elif isinstance(psis[j].phi, Constant):
                        values[ih, j, iw] = psis[j].phi.value
                    else:
                        values[ih, j, iw] = sums[row] / f_hat
    return EstimateSurface(
        quantity=quantity,
        values=values,
        defined=defined,
        bandwidths=hs,
        points=np.array(grid.points),
        psi_labels=[p.label() for p in psis],
        kernel=kernel.name,
        n=sample.n,
        d=d,
        trim_tau=trim_tau if quantity == "m" else None,
    )


class SupDeviation(NamedTuple):
    value: float
    h_index: int
    psi_index: int
    w_index: int
    skipped: int


def sup_deviation(surface: EstimateSurface, truth) -> SupDeviation:
    """Largest ``|estimate - truth|`` over all defined cells.

    ``truth`` is either an array broadcastable to ``(n_psi, n_w)`` or a
    callable ``truth(psi_index, w_point) -> float``.
    """
    n_h, n_psi, n_w = surface.values.shape
    if callable(truth):
        tv = np.array(
            [[float(truth(j, surface.points[i])) for i in range(n_w)] for j in range(n_psi)]
        )
    else:
        tv = np.broadcast_to(np.asarray(truth, dtype=float), (n_psi, n_w))
    if not np.all(np.isfinite(tv)):
        raise InvalidInputError("truth must be finite at every grid point")
    if not surface.defined.any():
        raise EmptySupremumError("every cell of the surface is undefined")
    dev = np.where(surface.defined, np.abs(surface.values - tv[None, :, :]), -np.inf)
    flat = int(np.argmax(dev))
    ih, j, iw = np.unravel_index(flat, dev.shape)
    return SupDeviation(float(dev[ih, j, iw]), int(ih), int(j), int(iw), surface.undefined_count)
