"""Mixed two-component models and their proxy expansion.

Forward variances are ``xi_0^u [lam e^{Y1} + (1 - lam) e^{Y2}]`` where both
log-components are driven by one Gaussian integral of the same unit kernel
``K0`` scaled by ``vol1`` and ``vol2``. The squared VIX proxy is then a
function of a single standard normal ``Z``:

    F(Z) = nu(xi_0) [lam e^{mu1 + sigma1 Z} + (1 - lam) e^{mu2 + sigma2 Z}]

All expectations below are one-dimensional integrals in ``Z``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from .curve_kernel import (
    ExponentialKernel,
    ForwardVarianceCurve,
    Kernel,
    PowerKernel,
    VixWindow,
)
from .expansion import Payoff, smile_from_prices
from .proxy_moments import gamma_coefficients, proxy_integrals
from .quadrature import gauss_hermite_normal, split_normal_rule

DEFAULT_NODES = 80


@dataclass(frozen=True)
class MixedModelSpec:
    """Two same-shape kernels with volatilities ``vol1``, ``vol2`` mixed with weight ``lam``.

    ``family`` is ``"exponential"`` (``shape`` is the mean reversion ``k``) or
    ``"power"`` (``shape`` is ``H``).
    """

    family: str
    shape: float
    vol1: float
    vol2: float
    lam: float
    curve: ForwardVarianceCurve
    window: VixWindow

    def __post_init__(self):
        if self.family not in ("exponential", "power"):
            raise ValueError(f"unknown kernel family {self.family!r}")
        for name in ("vol1", "vol2"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise ValueError(f"{name} must be non-negative")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        self.unit_kernel  # validates the shape parameter

    @property
    def unit_kernel(self) -> Kernel:
        if self.family == "exponential":
            return ExponentialKernel(1.0, self.shape)
        return PowerKernel(1.0, self.shape)

    def kernel(self, j: int) -> Kernel:
        if j not in (1, 2):
            raise ValueError("component index must be 1 or 2")
        return self.unit_kernel.with_vol(self.vol1 if j == 1 else self.vol2)

    def weight(self, j: int) -> float:
        return self.lam if j == 1 else 1.0 - self.lam

    def with_params(self, **changes) -> "MixedModelSpec":
        return replace(self, **changes)

    @classmethod
    def from_dict(cls, data: dict, curve: ForwardVarianceCurve, window: VixWindow) -> "MixedModelSpec":
        family = data.get("family")
        key = {"exponential": "k", "power": "H"}.get(family)
        if key is None:
            raise ValueError(f"unknown kernel family {family!r}")
        try:
            return cls(family, float(data[key]), float(data["vol1"]), float(data["vol2"]),
                       float(data["lambda"]), curve, window)
        except KeyError as exc:
            raise ValueError(f"mixed model is missing field {exc.args[0]!r}") from None

    def to_dict(self) -> dict:
        key = "k" if self.family == "exponential" else "H"
        return {"family": self.family, key: self.shape, "vol1": self.vol1,
                "vol2": self.vol2, "lambda": self.lam}


def single_model_spec(kernel: Kernel, curve: ForwardVarianceCurve, window: VixWindow) -> MixedModelSpec:
    """The single-kernel model as a degenerate mixture (``lam = 1``)."""
    shape = kernel.k if isinstance(kernel, ExponentialKernel) else kernel.H
    return MixedModelSpec(kernel.family, shape, kernel.vol, 0.0, 1.0, curve, window)


@dataclass(frozen=True)
class MixedProxyParams:
    """Per-component log-mean and volatility; ``ln nu(xi_0)`` is kept apart in ``log_level``."""

    mu1: float
    sigma1: float
    mu2: float
    sigma2: float
    log_level: float
    unit_drift: float  # int_0^T nu0(K0(t)^2) dt of the unit kernel

    def component(self, j: int) -> tuple[float, float]:
        return (self.mu1, self.sigma1) if j == 1 else (self.mu2, self.sigma2)


def mixed_proxy_params(spec: MixedModelSpec) -> MixedProxyParams:
    """Component moments from the unit kernel; both scale exactly with the component volatility."""
    drift, var = proxy_integrals(spec.unit_kernel, spec.curve, spec.window)
    s0 = math.sqrt(max(var, 0.0))
    return MixedProxyParams(
        -0.5 * spec.vol1**2 * drift,
        spec.vol1 * s0,
        -0.5 * spec.vol2**2 * drift,
        spec.vol2 * s0,
        math.log(spec.curve.window_mean(spec.window)),
        drift,
    )


def proxy_vix2(spec: MixedModelSpec, params: MixedProxyParams, z):
    """The squared VIX proxy ``F(z)``."""
    z = np.asarray(z, dtype=float)
    level = math.exp(params.log_level)
    out = level * (
        spec.lam * np.exp(params.mu1 + params.sigma1 * z)
        + (1.0 - spec.lam) * np.exp(params.mu2 + params.sigma2 * z)
    )
    return out if np.ndim(out) else float(out)


def proxy_quantile(spec: MixedModelSpec, params: MixedProxyParams, level: float) -> float | None:
    """Root ``z*`` of ``F(z) = level``; ``None`` when ``level`` is outside the range of ``F``."""
    if not level > 0.0:
        raise ValueError("level must be positive")
    sig = [params.sigma1 if spec.lam > 0 else 0.0, params.sigma2 if spec.lam < 1 else 0.0]
    if max(sig) == 0.0:
        return None
    if spec.lam == 1.0 or spec.lam == 0.0:
        j = 1 if spec.lam == 1.0 else 2
        mu, s = params.component(j)
        return (math.log(level) - params.log_level - mu) / s
    f = lambda z: proxy_vix2(spec, params, z) - level  # noqa: E731
    lo, hi = -1.0, 1.0
    while f(lo) > 0.0:
        lo *= 2.0
        if lo < -1e4:
            return None
    while f(hi) < 0.0:
        hi *= 2.0
        if hi > 1e4:
            return None
    # polish in log space, where F is close to linear
    g = lambda z: math.log(proxy_vix2(spec, params, z)) - math.log(level)  # noqa: E731
    return brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def _rule(spec, params, payoff: Payoff, nodes: int, quadrature: str):
    if quadrature == "hermite" or payoff.kind == "future":
        if quadrature not in ("hermite", "split"):
            raise ValueError("quadrature must be 'split' or 'hermite'")
        if payoff.kind == "future" and quadrature == "split":
            return split_normal_rule(0.0, nodes)
        return gauss_hermite_normal(nodes)
    if quadrature != "split":
        raise ValueError("quadrature must be 'split' or 'hermite'")
    cut = proxy_quantile(spec, params, payoff.strike**2)
    return split_normal_rule(-14.0 if cut is None else cut, nodes)


def proxy_expectation(
    spec: MixedModelSpec,
    params: MixedProxyParams,
    payoff: Payoff,
    *,
    nodes: int = DEFAULT_NODES,
    quadrature: str = "split",
) -> float:
    """``E[phi(F(Z))]`` for explicitly given component moments."""
    z, w = _rule(spec, params, payoff, nodes, quadrature)
    return float(w @ payoff(proxy_vix2(spec, params, z)))


def mixed_proxy_price(
    spec: MixedModelSpec, payoff: Payoff, *, nodes: int = DEFAULT_NODES, quadrature: str = "split"
) -> float:
    """``E[phi(F(Z))]``.

    ``quadrature="hermite"`` is plain Gauss-Hermite with ``nodes`` points;
    ``"split"`` integrates each side of the payoff kink with Gauss-Legendre,
    which restores spectral accuracy for calls and puts.
    """
    return proxy_expectation(spec, mixed_proxy_params(spec), payoff, nodes=nodes, quadrature=quadrature)


def psi_eval(spec: MixedModelSpec, j: int, x, payoff: Payoff, params: MixedProxyParams | None = None):
    """``Psi_j(x) = phi'(G_j(x)) nu(xi_0) w_j e^x`` with ``G_j`` the proxy written in the ``j``-th log-component."""
    if j not in (1, 2):
        raise ValueError("component index must be 1 or 2")
    params = params or mixed_proxy_params(spec)
    vol_j, vol_o = (spec.vol1, spec.vol2) if j == 1 else (spec.vol2, spec.vol1)
    if vol_j == 0.0:
        raise ValueError(f"component {j} has zero volatility; its correction terms vanish")
    x = np.asarray(x, dtype=float)
    other = 0.5 * vol_o * (vol_j - vol_o) * params.unit_drift + (vol_o / vol_j) * x
    level = math.exp(params.log_level)
    wj, wo = spec.weight(j), 1.0 - spec.weight(j)
    g = level * (wj * np.exp(x) + wo * np.exp(other))
    out = payoff.derivative(g) * level * wj * np.exp(x)
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class MixedCorrections:
    """``terms[j-1] = (P_1j, P_2j, P_3j)``; inactive components hold zeros."""

    terms: tuple[tuple[float, float, float], tuple[float, float, float]]


def _is_active(spec: MixedModelSpec, params: MixedProxyParams, j: int) -> bool:
    # a volatility whose square is subnormal carries no correction and would overflow 1 / sigma^2
    s = params.component(j)[1]
    return spec.weight(j) > 0.0 and s * s > np.finfo(float).tiny


def _corrections(spec, params, payoff, z, w) -> MixedCorrections:
    dphi = payoff.derivative(proxy_vix2(spec, params, z))
    level = math.exp(params.log_level)
    out = []
    for j in (1, 2):
        if not _is_active(spec, params, j):
            out.append((0.0, 0.0, 0.0))
            continue
        mu, s = params.component(j)
        psi = dphi * level * spec.weight(j) * np.exp(mu + s * z)
        out.append((float(w @ psi), float(w @ (z * psi)) / s, float(w @ ((z * z - 1.0) * psi)) / s**2))
    return MixedCorrections((out[0], out[1]))


def mixed_corrections(
    spec: MixedModelSpec, payoff: Payoff, *, nodes: int = DEFAULT_NODES, quadrature: str = "split"
) -> MixedCorrections:
    """Likelihood-ratio form of the derivative terms.

    ``P_1j = E[Psi_j]``, ``P_2j = E[Z Psi_j] / sigma_j`` and
    ``P_3j = E[(Z^2 - 1) Psi_j] / sigma_j^2`` with ``Psi_j`` evaluated at
    ``mu_j + sigma_j Z``; on that line ``G_j`` equals ``F(Z)``.
    """
    params = mixed_proxy_params(spec)
    z, w = _rule(spec, params, payoff, nodes, quadrature)
    return _corrections(spec, params, payoff, z, w)


@dataclass(frozen=True)
class MixedExpansionResult:
    price: float
    proxy_price: float
    corrections: tuple[tuple[float, float, float], tuple[float, float, float]]
    order_terms: MixedCorrections
    gammas: tuple[tuple[float, float, float], tuple[float, float, float]]

    def to_dict(self) -> dict:
        return {
            "price": self.price,
            "proxy_price": self.proxy_price,
            "corrections": [list(c) for c in self.corrections],
            "order_terms": [list(t) for t in self.order_terms.terms],
            "gammas": [list(g) for g in self.gammas],
        }


def mixed_gammas(spec: MixedModelSpec):
    """Single-model coefficients of each component kernel (zeros when inactive)."""
    out = []
    for j in (1, 2):
        if spec.weight(j) == 0.0:
            out.append((0.0, 0.0, 0.0))
        else:
            out.append(gamma_coefficients(spec.kernel(j), spec.curve, spec.window).as_tuple())
    return tuple(out)


class MixedExpansionPricer:
    """Expansion prices of many payoffs under one spec; moments and coefficients are computed once."""

    def __init__(self, spec: MixedModelSpec, *, nodes: int = DEFAULT_NODES, quadrature: str = "split"):
        self.spec = spec
        self.nodes = nodes
        self.quadrature = quadrature
        self.params = mixed_proxy_params(spec)
        self.gammas = mixed_gammas(spec)

    def price(self, payoff: Payoff) -> MixedExpansionResult:
        z, w = _rule(self.spec, self.params, payoff, self.nodes, self.quadrature)
        p0 = float(w @ payoff(proxy_vix2(self.spec, self.params, z)))
        terms = _corrections(self.spec, self.params, payoff, z, w)
        gam = self.gammas
        corr = tuple(
            tuple(g * p if g != 0.0 else 0.0 for g, p in zip(gam[j], terms.terms[j])) for j in (0, 1)
        )
        return MixedExpansionResult(p0 + sum(corr[0]) + sum(corr[1]), p0, corr, terms, gam)


def mixed_expansion_price(
    spec: MixedModelSpec, payoff: Payoff, *, nodes: int = DEFAULT_NODES, quadrature: str = "split"
) -> MixedExpansionResult:
    """Proxy price plus ``sum_i sum_j gamma_ij P_ij``."""
    return MixedExpansionPricer(spec, nodes=nodes, quadrature=quadrature).price(payoff)


def mixed_expansion_smile(spec: MixedModelSpec, strikes, *, kind: str = "call", **kwargs):
    """Annualized implied vols of mixed expansion prices with the expansion future as forward."""
    if kind not in ("call", "put"):
        raise ValueError("kind must be 'call' or 'put'")
    strikes = [float(k) for k in strikes]
    if any(not k > 0.0 for k in strikes):
        raise ValueError("strikes must be positive")
    pricer = MixedExpansionPricer(spec, **kwargs)
    forward = pricer.price(Payoff.future()).price
    prices = [pricer.price(Payoff(kind, k)).price for k in strikes]
    return smile_from_prices(forward, strikes, prices, spec.window.T, kind=kind)


def vix2_option_closed(spec: MixedModelSpec, kind: str, strike: float) -> float:
    """Proxy price of a call or put on the squared VIX from the root of ``F(z) = strike``."""
    if kind not in ("call", "put"):
        raise ValueError("kind must be 'call' or 'put'")
    if not strike > 0.0:
        raise ValueError("strike must be positive")
    params = mixed_proxy_params(spec)
    level = math.exp(params.log_level)
    zs = proxy_quantile(spec, params, strike)
    if zs is None:
        # strike outside the support of F: the option is linear in F
        fwd = level * (spec.lam * math.exp(params.mu1 + 0.5 * params.sigma1**2)
                       + (1 - spec.lam) * math.exp(params.mu2 + 0.5 * params.sigma2**2))
        return max(fwd - strike, 0.0) if kind == "call" else max(strike - fwd, 0.0)
    total = 0.0
    for j in (1, 2):
        c = level * spec.weight(j)
        if c == 0.0:
            continue
        mu, s = params.component(j)
        m = c * math.exp(mu + 0.5 * s * s)
        total += m * (ndtr(s - zs) if kind == "call" else ndtr(zs - s))
    if kind == "call":
        return float(total - strike * ndtr(-zs))
    return float(strike * ndtr(zs) - total)
