"""Uniform-in-bandwidth kernel smoothing for beta-mixing time series.

Kernel estimators of ``T = m f``, the index density and the Nadaraya-Watson
ratio over classes of functions and bandwidth intervals, a conditional
expected shortfall estimator with a plugged-in VaR, simulators with known
truths, and numerical checks of rates, bias order and the dependence norm.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    DivergentIntegralError,
    EmptySupremumError,
    InvalidBandwidthError,
    InvalidInputError,
    MixsmoothError,
    NoAnalyticTruthError,
    NoLocalDataError,
    NonstationaryModelError,
    NumericalFailureError,
    SampleParseError,
    UnsupportedOrderError,
)
from .estimators import (  # noqa: E402
    bandwidth_grid,
    estimate_f,
    estimate_m,
    estimate_surface,
    estimate_T,
    eval_grid,
    sup_deviation,
)
from .kernels import (  # noqa: E402
    Kernel,
    kernel_eval,
    make_epanechnikov,
    make_gaussian_kernel,
    make_kernel,
    product_kernel_eval,
    validate_kernel,
)
from .model import PsiIndex, Sample, load_sample, save_sample  # noqa: E402
from .processes import (  # noqa: E402
    IID,
    Ar1Density,
    GaussianCes,
    Geometric,
    Polynomial,
    RegressionOnAr1,
    derive_seed,
    simulate,
)
from .risk import CesIndex, ces_surface, estimate_ces, estimate_conditional_var  # noqa: E402
