"""Samples and the index set of dependent-variable functions and regressor maps.

An index ``psi = (phi, W)`` pairs a real function ``phi(y, x)`` of one
observation with a map ``W`` from regressors to a d-dimensional index. All
``phi`` and ``W`` variants evaluate row-wise on the whole sample at once.

Shortfall functions use the strict event ``-a'y > c(x)``; ties at equality are
excluded.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np

from .errors import InvalidInputError, SampleParseError

UNIT_TOL = 1e-9


def _frozen(arr) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Sample:
    """A stationary series of observations ``(Y_t, X_t)``, rows in time order."""

    y: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        x = np.asarray(self.x, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if x.ndim == 1:
            x = x[:, None]
        if y.ndim != 2 or x.ndim != 2:
            raise InvalidInputError("y and x must be 1-D or 2-D arrays")
        if y.shape[0] != x.shape[0]:
            raise InvalidInputError(f"row counts differ: y has {y.shape[0]}, x has {x.shape[0]}")
        if y.shape[0] == 0 or y.shape[1] == 0 or x.shape[1] == 0:
            raise InvalidInputError("sample must have n, q, p >= 1")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise InvalidInputError("sample entries must be finite")
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "x", _frozen(x))

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def q(self) -> int:
        return self.y.shape[1]

    @property
    def p(self) -> int:
        return self.x.shape[1]


def as_unit_vector(a) -> tuple:
    a = np.asarray(a, dtype=float).ravel()
    if a.size == 0 or not np.all(np.isfinite(a)):
        raise InvalidInputError("portfolio weights must be a finite non-empty vector")
    if abs(np.linalg.norm(a) - 1.0) > UNIT_TOL:
        raise InvalidInputError(f"portfolio weights must have unit norm, |a| = {np.linalg.norm(a)!r}")
    return tuple(float(v) for v in a)


def unit_vector(angle: float) -> tuple[float, float]:
    """Point on the unit circle, used to build portfolio grids for q = 2."""
    return (math.cos(angle), math.sin(angle))


# -- thresholds --------------------------------------------------------------


@dataclass(frozen=True)
class ConstantThreshold:
    value: float

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.full(x.shape[0], float(self.value))


@dataclass(frozen=True)
class AffineThreshold:
    slope: tuple
    intercept: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "slope", tuple(float(v) for v in np.ravel(self.slope)))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if x.shape[1] != len(self.slope):
            raise InvalidInputError(
                f"affine threshold expects p={len(self.slope)} regressors, got {x.shape[1]}"
            )
        return x @ np.asarray(self.slope) + self.intercept


@dataclass(frozen=True)
class PluggedVar:
    """Threshold given by an estimated conditional VaR curve.

    ``curve`` maps an ``(m, p)`` regressor array to thresholds. Inside
    :func:`mixsmooth.risk.estimate_ces` the curve is left unset and the
    plug-in is computed at each evaluation point instead.
    """

    p_level: float
    curve: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)

    def __post_init__(self):
        if not 0.0 < self.p_level < 1.0:
            raise InvalidInputError(f"p_level must lie in (0, 1), got {self.p_level}")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self.curve is None:
            raise InvalidInputError("PluggedVar threshold has no VaR curve attached")
        return np.asarray(self.curve(x), dtype=float)


ThresholdFn = Union[ConstantThreshold, AffineThreshold, PluggedVar]


# -- dependent-variable functions -------------------------------------------


def _check_dims(y, x, q=None):
    if q is not None and y.shape[1] != q:
        raise InvalidInputError(f"expected q={q} dependent components, got {y.shape[1]}")


@dataclass(frozen=True)
class Raw:
    """``phi(y, x) = y_j``."""

    j: int

    def values(self, y, x):
        if not 0 <= self.j < y.shape[1]:
            raise InvalidInputError(f"component index {self.j} out of range for q={y.shape[1]}")
        return np.array(y[:, self.j], dtype=float)


@dataclass(frozen=True)
class Constant:
    value: float

    def values(self, y, x):
        return np.full(y.shape[0], float(self.value))


@dataclass(frozen=True)
class ShortfallNumerator:
    """``phi(y, x) = -a'y 1(-a'y > c(x))``."""

    a: tuple
    c: ThresholdFn

    def __post_init__(self):
        object.__setattr__(self, "a", as_unit_vector(self.a))

    def values(self, y, x):
        _check_dims(y, x, len(self.a))
        loss = -(y @ np.asarray(self.a))
        return np.where(loss > self.c(x), loss, 0.0)


@dataclass(frozen=True)
class ShortfallIndicator:
    """``phi(y, x) = 1(-a'y > c(x))``."""

    a: tuple
    c: ThresholdFn

    def __post_init__(self):
        object.__setattr__(self, "a", as_unit_vector(self.a))

    def values(self, y, x):
        _check_dims(y, x, len(self.a))
        loss = -(y @ np.asarray(self.a))
        return (loss > self.c(x)).astype(float)


PhiSpec = Union[Raw, Constant, ShortfallNumerator, ShortfallIndicator]


# -- regressor maps ----------------------------------------------------------


@dataclass(frozen=True)
class Identity:
    """``W(x) = x`` (d = p)."""

    def apply(self, x):
        return np.array(x, dtype=float)

    def output_dim(self, p):
        return p

    @property
    def degenerate(self):
        return False


@dataclass(frozen=True)
class SingleIndex:
    """``W(x) = b'x`` (d = 1)."""

    b: tuple

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float).ravel()
        if b.size == 0 or not np.all(np.isfinite(b)):
            raise InvalidInputError("single-index direction must be a finite non-empty vector")
        object.__setattr__(self, "b", tuple(float(v) for v in b))

    def apply(self, x):
        if x.shape[1] != len(self.b):
            raise InvalidInputError(f"single index expects p={len(self.b)}, got {x.shape[1]}")
        return (x @ np.asarray(self.b))[:, None]

    def output_dim(self, p):
        return 1

    @property
    def degenerate(self):
        """A zero direction maps every regressor to 0."""
        return not any(self.b)


@dataclass(frozen=True)
class Coordinates:
    """``W(x) = (x_i)_{i in indices}``."""

    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if not idx or len(set(idx)) != len(idx) or min(idx) < 0:
            raise InvalidInputError("coordinates must be distinct non-negative indices")
        object.__setattr__(self, "indices", idx)

    def apply(self, x):
        if max(self.indices) >= x.shape[1]:
            raise InvalidInputError(f"coordinate {max(self.indices)} out of range for p={x.shape[1]}")
        return np.array(x[:, list(self.indices)], dtype=float)

    def output_dim(self, p):
        return len(self.indices)

    @property
    def degenerate(self):
        return False


WSpec = Union[Identity, SingleIndex, Coordinates]


@dataclass(frozen=True)
class PsiIndex:
    phi: PhiSpec
    w_map: WSpec

    def label(self) -> str:
        return f"{self.phi!r}|{self.w_map!r}"


def _as_row(v, name):
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.ndim != 1:
        raise InvalidInputError(f"{name} must be a vector")
    return v[None, :]


def phi_eval(phi: PhiSpec, y, x) -> float:
    return float(phi.values(_as_row(y, "y"), _as_row(x, "x"))[0])


def w_eval(w_map: WSpec, x) -> np.ndarray:
    return w_map.apply(_as_row(x, "x"))[0]


# -- CSV ingestion -----------------------------------------------------------


def load_sample(path, q: int, p: int) -> Sample:
    """Read a CSV with a header row and columns ``y_1..y_q, x_1..x_p``."""
    if q < 1 or p < 1:
        raise InvalidInputError("q and p must be positive")
    path = Path(path)
    if not path.is_file():
        raise SampleParseError(f"sample file not found: {path}")
    width = q + p
    rows = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SampleParseError(f"{path}: empty file (no header)")
        if len(header) != width:
            raise SampleParseError(
                f"{path}: header has {len(header)} columns, expected q+p={width}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise SampleParseError(
                    f"{path}: row {lineno} has {len(row)} columns, expected {width}"
                )
            try:
                vals = [float(v) for v in row]
            except ValueError as exc:
                raise SampleParseError(f"{path}: row {lineno} is not numeric ({exc})") from None
            if not all(math.isfinite(v) for v in vals):
                raise SampleParseError(f"{path}: row {lineno} has a non-finite value")
            rows.append(vals)
    if not rows:
        raise SampleParseError(f"{path}: no data rows")
    data = np.array(rows)
    return Sample(y=data[:, :q], x=data[:, q:])


def save_sample(sample: Sample, path) -> None:
    header = [f"y_{i + 1}" for i in range(sample.q)] + [f"x_{i + 1}" for i in range(sample.p)]
    data = np.hstack([sample.y, sample.x])
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in data:
            writer.writerow([format(v, ".17g") for v in row])


def unit_circle_grid(angles: Sequence[float]) -> list[tuple[float, float]]:
    return [unit_vector(t) for t in angles]
