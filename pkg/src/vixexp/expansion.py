"""Third-order proxy expansion for VIX futures, calls and puts in single-kernel models.

The price is the proxy price plus three Greek-type corrections weighted by
the payoff-independent coefficients of :mod:`vixexp.proxy_moments`:

    price = P0 + gamma1 P1 + gamma2 P2 + gamma3 P3

where ``P_i`` is the ``i``-th derivative in ``eps`` of
``E[phi(VIX2_proxy e^eps)]`` at ``eps = 0``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .black_scholes import bs_call, bs_delta, bs_gamma, bs_speed, implied_vol
from .curve_kernel import ForwardVarianceCurve, Kernel, VixWindow
from .proxy_moments import GammaCoefficients, ProxyParams, gamma_coefficients, proxy_params

_KINDS = ("future", "call", "put")


@dataclass(frozen=True)
class Payoff:
    """VIX payoff ``phi`` acting on the squared VIX.

    ``future``: ``sqrt(x)``; ``call``: ``(sqrt(x) - strike)_+``;
    ``put``: ``(strike - sqrt(x))_+``.
    """

    kind: str
    strike: float | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"payoff kind must be one of {_KINDS}, got {self.kind!r}")
        if self.kind == "future":
            if self.strike is not None:
                raise ValueError("a future has no strike")
        else:
            if self.strike is None or not (math.isfinite(self.strike) and self.strike > 0.0):
                raise ValueError("strike must be positive")
            object.__setattr__(self, "strike", float(self.strike))

    @classmethod
    def future(cls) -> "Payoff":
        return cls("future")

    @classmethod
    def call(cls, strike: float) -> "Payoff":
        return cls("call", strike)

    @classmethod
    def put(cls, strike: float) -> "Payoff":
        return cls("put", strike)

    @classmethod
    def from_dict(cls, data: dict) -> "Payoff":
        if "kind" not in data:
            raise ValueError("payoff is missing field 'kind'")
        return cls(data["kind"], data.get("strike"))

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.strike is not None:
            out["strike"] = self.strike
        return out

    def __call__(self, vix2):
        """Payoff as a function of the squared VIX."""
        v = np.sqrt(np.asarray(vix2, dtype=float))
        if self.kind == "future":
            out = v
        elif self.kind == "call":
            out = np.maximum(v - self.strike, 0.0)
        else:
            out = np.maximum(self.strike - v, 0.0)
        return out if np.ndim(out) else float(out)

    def derivative(self, vix2):
        """Derivative of the payoff in the squared VIX (zero on the flat side of the kink)."""
        x = np.asarray(vix2, dtype=float)
        half = 0.5 / np.sqrt(x)
        if self.kind == "future":
            out = half
        elif self.kind == "call":
            out = np.where(x > self.strike**2, half, 0.0)
        else:
            out = np.where(x < self.strike**2, -half, 0.0)
        return out if np.ndim(out) else float(out)


def proxy_derivative_terms(proxy: ProxyParams, payoff: Payoff) -> tuple[float, float, float, float]:
    """Proxy price ``P0`` and the derivative terms ``P1, P2, P3`` in closed form.

    With ``F0 = exp(mu/2 + sigma^2/8)`` the square root of the proxy is
    lognormal with mean ``F0`` and total volatility ``sigma/2``, so the call
    terms are Black-Scholes Greeks; puts follow from parity with the future.
    A zero proxy volatility gives the deterministic limit away from the strike.
    """
    mu, sig = proxy.mu, proxy.sigma
    f0 = math.exp(0.5 * mu + 0.125 * sig * sig)
    fut = (f0, 0.5 * f0, 0.25 * f0, 0.125 * f0)
    if payoff.kind == "future":
        return fut
    kappa = payoff.strike
    s = 0.5 * sig
    if sig == 0.0:
        if f0 == kappa:
            raise ValueError("derivative terms are undefined at the strike for a deterministic proxy")
        itm = 1.0 if f0 > kappa else 0.0
        call = (max(f0 - kappa, 0.0), itm * fut[1], itm * fut[2], itm * fut[3])
    else:
        p0 = bs_call(f0, kappa, s)
        p1 = 0.5 * f0 * bs_delta(f0, kappa, s)
        p2 = 0.5 * p1 + 0.25 * f0**2 * bs_gamma(f0, kappa, s)
        p3 = -0.5 * p1 + 1.5 * p2 + 0.125 * f0**3 * bs_speed(f0, kappa, s)
        call = (p0, p1, p2, p3)
    if payoff.kind == "call":
        return call
    return (call[0] - fut[0] + kappa, call[1] - fut[1], call[2] - fut[2], call[3] - fut[3])


@dataclass(frozen=True)
class ExpansionResult:
    """Expansion price with its ingredients; ``price == proxy_price + sum(corrections)``."""

    price: float
    proxy_price: float
    corrections: tuple[float, float, float]
    order_terms: tuple[float, float, float]
    proxy: ProxyParams
    gammas: GammaCoefficients

    def to_dict(self) -> dict:
        return {
            "price": self.price,
            "proxy_price": self.proxy_price,
            "corrections": list(self.corrections),
            "order_terms": list(self.order_terms),
            "mu_P": self.proxy.mu,
            "sigma_P": self.proxy.sigma,
            "gammas": list(self.gammas.as_tuple()),
        }


def price_from_moments(proxy: ProxyParams, gammas: GammaCoefficients, payoff: Payoff) -> ExpansionResult:
    """Assemble the expansion from precomputed proxy moments and coefficients."""
    p0, p1, p2, p3 = proxy_derivative_terms(proxy, payoff)
    g = gammas.as_tuple()
    corr = (g[0] * p1, g[1] * p2, g[2] * p3)
    return ExpansionResult(p0 + corr[0] + corr[1] + corr[2], p0, corr, (p1, p2, p3), proxy, gammas)


def expansion_price(
    kernel: Kernel,
    curve: ForwardVarianceCurve,
    window: VixWindow,
    payoff: Payoff,
    method: str = "auto",
) -> ExpansionResult:
    """Expansion price of a VIX future, call or put.

    Parameters
    ----------
    method : {"auto", "closed", "quadrature"}
        Route used for the proxy moments and coefficients.
    """
    proxy = proxy_params(kernel, curve, window, method)
    gammas = gamma_coefficients(kernel, curve, window, method)
    return price_from_moments(proxy, gammas, payoff)


@dataclass(frozen=True)
class SmilePoint:
    strike: float
    implied_vol: float | None
    price: float


def smile_from_prices(
    forward: float, strikes, prices, maturity: float, *, kind: str = "call"
) -> list[SmilePoint]:
    """Annualized implied vols of call (or put) prices.

    Strikes whose price violates the no-arbitrage bounds get ``None`` and a warning.
    """
    root_t = math.sqrt(maturity)
    out = []
    for kappa, price in zip(strikes, prices):
        call = price if kind == "call" else price + forward - kappa
        try:
            iv = implied_vol(call, forward, kappa) / root_t
        except ValueError as exc:
            warnings.warn(f"strike {kappa}: {exc}", RuntimeWarning, stacklevel=2)
            iv = None
        out.append(SmilePoint(float(kappa), iv, float(price)))
    return out


def expansion_smile(
    kernel: Kernel,
    curve: ForwardVarianceCurve,
    window: VixWindow,
    strikes,
    *,
    kind: str = "call",
) -> list[SmilePoint]:
    """Annualized implied volatility smile of expansion prices.

    The expansion future is used as the forward, so call- and put-based vols
    agree up to rounding.
    """
    if kind not in ("call", "put"):
        raise ValueError("kind must be 'call' or 'put'")
    strikes = [float(k) for k in strikes]
    if any(not k > 0.0 for k in strikes):
        raise ValueError("strikes must be positive")
    proxy = proxy_params(kernel, curve, window)
    gammas = gamma_coefficients(kernel, curve, window)
    forward = price_from_moments(proxy, gammas, Payoff.future()).price
    prices = [price_from_moments(proxy, gammas, Payoff(kind, k)).price for k in strikes]
    return smile_from_prices(forward, strikes, prices, window.T, kind=kind)
