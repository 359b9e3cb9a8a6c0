"""Stationary beta-mixing simulators with known analytic truths.

Every model is driven by a Gaussian AR(1) state ``S_t = rho S_{t-1} + e_t``,
which is geometrically beta-mixing. The state starts from its exact
stationary law ``N(0, sigma^2 / (1 - rho^2))``, so paths are stationary from
the first draw and ``burnin`` only discards extra draws.

Models
------
``Ar1Density``
    ``X_t = S_t``; target is the stationary density of ``X_t``.
``RegressionOnAr1``
    ``X_t = S_t``, ``Y_t = m(X_t) + u_t`` with iid Gaussian ``u_t``.
``GaussianCes``
    ``X_t = v S_t`` for a fixed design vector ``v`` and
    ``Y_t = -g mu(S_t) + U_t`` with ``U_t ~ N(0, sigma_l^2 I_q)``. For a unit
    vector ``a`` and direction ``b`` with ``b'v != 0`` the loss ``-a'Y_t``
    given ``b'X_t = w`` is ``N((a'g) mu(w / b'v), sigma_l^2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.signal import lfilter
from scipy.stats import norm

from .errors import InvalidInputError, NoAnalyticTruthError, NonstationaryModelError
from .model import Raw, Sample

# -- mixing coefficient models ----------------------------------------------


@dataclass(frozen=True)
class IID:
    """``beta_j = 0`` for ``j >= 1``."""

    delta: float = 4.0

    def __post_init__(self):
        _check_delta(self.delta)

    def beta(self, j: int) -> float:
        return 1.0 if j == 0 else 0.0


@dataclass(frozen=True)
class Geometric:
    """``beta_j = rho^j``."""

    rho: float
    delta: float = 4.0

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise InvalidInputError(f"geometric mixing needs rho in (0, 1), got {self.rho}")
        _check_delta(self.delta)

    def beta(self, j: int) -> float:
        return self.rho**j


@dataclass(frozen=True)
class Polynomial:
    """``beta_j = scale * j^(-b_exp)`` for ``j >= 1``, ``beta_0 = 1``."""

    b_exp: float
    scale: float = 1.0
    delta: float = 4.0

    def __post_init__(self):
        _check_delta(self.delta)
        if not 0.0 < self.scale <= 1.0:
            raise InvalidInputError(f"polynomial mixing scale must lie in (0, 1], got {self.scale}")
        floor = self.delta / (self.delta - 2.0)
        if not self.b_exp > floor:
            raise InvalidInputError(
                f"polynomial mixing exponent b={self.b_exp} must exceed delta/(delta-2)={floor:g}"
            )

    def beta(self, j: int) -> float:
        return 1.0 if j == 0 else self.scale * float(j) ** (-self.b_exp)


MixingSpec = Union[IID, Geometric, Polynomial]


def _check_delta(delta):
    if not (2.0 < delta < math.inf):
        raise InvalidInputError(f"moment exponent delta must lie in (2, inf), got {delta}")


# -- data generating models -------------------------------------------------

REGRESSION_FUNCTIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "sin": np.sin,
    "linear": lambda x: np.asarray(x, dtype=float) * 1.0,
    "quadratic-bump": lambda x: np.exp(-np.square(x)),
}


def _check_ar(rho, scale, label):
    if not abs(rho) < 1.0:
        raise NonstationaryModelError(f"AR(1) coefficient must satisfy |rho| < 1, got {rho}")
    if not scale > 0:
        raise InvalidInputError(f"{label} must be positive, got {scale}")


def _check_fn(name):
    if name not in REGRESSION_FUNCTIONS:
        raise InvalidInputError(
            f"unknown function {name!r}; choose one of {sorted(REGRESSION_FUNCTIONS)}"
        )


@dataclass(frozen=True)
class Ar1Density:
    rho: float
    sigma: float = 1.0

    def __post_init__(self):
        _check_ar(self.rho, self.sigma, "sigma")

    @property
    def state_sd(self) -> float:
        return self.sigma / math.sqrt(1.0 - self.rho**2)


@dataclass(frozen=True)
class RegressionOnAr1:
    rho: float
    sigma_x: float = 1.0
    m_fn: str = "sin"
    sigma_u: float = 0.5

    def __post_init__(self):
        _check_ar(self.rho, self.sigma_x, "sigma_x")
        _check_fn(self.m_fn)
        if not self.sigma_u > 0:
            raise InvalidInputError("sigma_u must be positive")

    @property
    def state_sd(self) -> float:
        return self.sigma_x / math.sqrt(1.0 - self.rho**2)


@dataclass(frozen=True)
class GaussianCes:
    rho: float
    sigma_x: float = 1.0
    mu_fn: str = "sin"
    sigma_l: float = 1.0
    loadings: tuple = (1.0, 0.5)
    design: tuple = (1.0, 1.0)

    def __post_init__(self):
        _check_ar(self.rho, self.sigma_x, "sigma_x")
        _check_fn(self.mu_fn)
        if not self.sigma_l > 0:
            raise InvalidInputError("sigma_l must be positive")
        object.__setattr__(self, "loadings", tuple(float(v) for v in self.loadings))
        object.__setattr__(self, "design", tuple(float(v) for v in self.design))
        if not self.loadings or not self.design:
            raise InvalidInputError("loadings and design must be non-empty")

    @property
    def state_sd(self) -> float:
        return self.sigma_x / math.sqrt(1.0 - self.rho**2)

    @property
    def q(self) -> int:
        return len(self.loadings)

    @property
    def p(self) -> int:
        return len(self.design)

    def index_scale(self, b) -> float:
        b = np.asarray(b, dtype=float)
        if b.shape != (self.p,):
            raise InvalidInputError(f"direction must have length p={self.p}")
        s = float(b @ np.asarray(self.design))
        if s == 0.0:
            raise NoAnalyticTruthError("direction is orthogonal to the design; index is constant")
        return s

    def loss_mean(self, a, b) -> Callable[[float], float]:
        """``w -> E[-a'Y | b'X = w]``."""
        load = float(np.asarray(a, dtype=float) @ np.asarray(self.loadings))
        s = self.index_scale(b)
        fn = REGRESSION_FUNCTIONS[self.mu_fn]
        return lambda w: load * float(fn(w / s))

    def ces_truth(self, a, b, p_level):
        from .risk import ces_truth_gaussian

        return ces_truth_gaussian(self.loss_mean(a, b), self.sigma_l, p_level)


ModelSpec = Union[Ar1Density, RegressionOnAr1, GaussianCes]


def _ar1_path(rng, rho, sigma, n, burnin):
    x0 = rng.normal(0.0, sigma / math.sqrt(1.0 - rho**2))
    eps = rng.normal(0.0, sigma, n + burnin)
    path, _ = lfilter([1.0], [1.0, -rho], eps, zi=[rho * x0])
    return path[burnin:]


def simulate(model: ModelSpec, n: int, seed: int, burnin: int = 0) -> Sample:
    """Draw a stationary sample of length ``n``; a pure function of its arguments."""
    if n < 1 or burnin < 0:
        raise InvalidInputError("need n >= 1 and burnin >= 0")
    if not abs(model.rho) < 1.0:
        raise NonstationaryModelError(f"|rho| must be < 1, got {model.rho}")
    rng = np.random.default_rng(seed)
    if isinstance(model, Ar1Density):
        s = _ar1_path(rng, model.rho, model.sigma, n, burnin)
        return Sample(y=s, x=s)
    if isinstance(model, RegressionOnAr1):
        s = _ar1_path(rng, model.rho, model.sigma_x, n, burnin)
        u = rng.normal(0.0, model.sigma_u, n)
        return Sample(y=REGRESSION_FUNCTIONS[model.m_fn](s) + u, x=s)
    if isinstance(model, GaussianCes):
        s = _ar1_path(rng, model.rho, model.sigma_x, n, burnin)
        noise = rng.normal(0.0, model.sigma_l, (n, model.q))
        mu = REGRESSION_FUNCTIONS[model.mu_fn](s)
        y = -np.outer(mu, model.loadings) + noise
        x = np.outer(s, model.design)
        return Sample(y=y, x=x)
    raise InvalidInputError(f"unsupported model {model!r}")


def derive_seed(master: int, *keys: int) -> int:
    """Independent stream seed for ``(master, keys...)`` via numpy's SeedSequence."""
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def true_density(model: ModelSpec, w, b=None) -> float:
    """Stationary density of the index at ``w``.

    For ``GaussianCes`` the index is ``b'X_t`` and ``b`` is required.
    """
    w = float(np.ravel(w)[0]) if np.ndim(w) else float(w)
    if isinstance(model, (Ar1Density, RegressionOnAr1)):
        if b is not None and np.size(b) != 1:
            raise NoAnalyticTruthError("scalar-regressor models take no index direction")
        scale = model.state_sd * (1.0 if b is None else abs(float(np.ravel(b)[0])))
        return float(norm.pdf(w, scale=scale))
    if isinstance(model, GaussianCes):
        if b is None:
            raise NoAnalyticTruthError("GaussianCes density needs an index direction b")
        scale = abs(model.index_scale(b)) * model.state_sd
        return float(norm.pdf(w, scale=scale))
    raise NoAnalyticTruthError(f"no analytic density for {model!r}")


def true_regression(model: ModelSpec, w, phi=None) -> float:
    """``E[phi(Z_t) | X_t = w]`` for ``RegressionOnAr1`` with ``phi = Raw(0)``."""
    if not isinstance(model, RegressionOnAr1):
        raise NoAnalyticTruthError(f"no analytic regression function for {model!r}")
    if phi is not None and phi != Raw(0):
        raise NoAnalyticTruthError("analytic regression truth exists for phi = Raw(0) only")
    w = float(np.ravel(w)[0]) if np.ndim(w) else float(w)
    return float(REGRESSION_FUNCTIONS[model.m_fn](w))
