"""VIX futures and options in forward-variance models via lognormal proxy expansions."""

from .black_scholes import bs_call, bs_delta, bs_gamma, bs_speed, implied_vol
from .calibration import (
    CalibrationResult,
    SmileSlice,
    calibrate_slice,
    calibrate_surface,
    load_quotes,
    match_futures,
    synthetic_slice,
    write_quotes,
)
from .curve_kernel import (
    DEFAULT_DELTA,
    ExponentialKernel,
    ForwardVarianceCurve,
    Kernel,
    PowerKernel,
    VixWindow,
    kernel_from_dict,
)
from .expansion import ExpansionResult, Payoff, expansion_price, expansion_smile, price_from_moments
from .mixed import (
    MixedExpansionPricer,
    MixedModelSpec,
    mixed_expansion_price,
    mixed_expansion_smile,
    mixed_proxy_price,
    single_model_spec,
)
from .proxy_moments import (
    DegenerateProxyError,
    GammaCoefficients,
    KernelNorms,
    ProxyParams,
    gamma_coefficients,
    kernel_norms,
    proxy_params,
)
from .reference import (
    McConfig,
    McEstimate,
    QuadConfig,
    UnsupportedModelError,
    bergomi_quadrature_price,
    reference_price,
    rough_mc_price,
    rough_mc_prices,
)

__version__ = "0.1.0"

__all__ = [
    "bs_call",
    "bs_delta",
    "bs_gamma",
    "bs_speed",
    "implied_vol",
    "CalibrationResult",
    "SmileSlice",
    "calibrate_slice",
    "calibrate_surface",
    "load_quotes",
    "match_futures",
    "synthetic_slice",
    "write_quotes",
    "DEFAULT_DELTA",
    "ExponentialKernel",
    "ForwardVarianceCurve",
    "Kernel",
    "PowerKernel",
    "VixWindow",
    "kernel_from_dict",
    "ExpansionResult",
    "Payoff",
    "expansion_price",
    "expansion_smile",
    "price_from_moments",
    "MixedExpansionPricer",
    "MixedModelSpec",
    "mixed_expansion_price",
    "mixed_expansion_smile",
    "mixed_proxy_price",
    "single_model_spec",
    "DegenerateProxyError",
    "GammaCoefficients",
    "KernelNorms",
    "ProxyParams",
    "gamma_coefficients",
    "kernel_norms",
    "proxy_params",
    "McConfig",
    "McEstimate",
    "QuadConfig",
    "UnsupportedModelError",
    "bergomi_quadrature_price",
    "reference_price",
    "rough_mc_price",
    "rough_mc_prices",
    "__version__",
]
