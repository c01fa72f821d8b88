"""Undiscounted Black-Scholes call on a forward, its first three spot derivatives, and implied volatility.

``sigma`` is the total volatility over the period (it already contains the
square root of time).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtr, ndtri

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _pdf(x):
    return np.exp(-0.5 * x * x) / _SQRT_2PI


def _check(x, y):
    if np.any(np.asarray(x) <= 0.0) or np.any(np.asarray(y) <= 0.0):
        raise ValueError("forward and strike must be positive")


def _scalar(out):
    return float(out) if np.ndim(out) == 0 else out


def _d1(x, y, sigma):
    return np.log(x / y) / sigma + 0.5 * sigma


def _arrays(x, y, sigma):
    x, y, sigma = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, y, sigma)))
    pos = sigma > 0.0
    return x, y, sigma, pos, np.where(pos, sigma, 1.0)


def bs_call(x, y, sigma):
    """Call price ``x N(d1) - y N(d2)``; ``sigma <= 0`` returns the intrinsic value."""
    _check(x, y)
    x, y, sigma, pos, safe = _arrays(x, y, sigma)
    d1 = _d1(x, y, safe)
    out = np.where(pos, x * ndtr(d1) - y * ndtr(d1 - safe), np.maximum(x - y, 0.0))
    return _scalar(out)


def bs_delta(x, y, sigma):
    """First derivative of :func:`bs_call` in the forward."""
    _check(x, y)
    x, y, sigma, pos, safe = _arrays(x, y, sigma)
    if np.any(~pos & (x == y)):
        raise ValueError("delta is undefined at the strike when sigma = 0")
    out = np.where(pos, ndtr(_d1(x, y, safe)), (x > y).astype(float))
    return _scalar(out)


def _require_positive_sigma(sigma):
    if np.any(np.asarray(sigma) <= 0.0):
        raise ValueError("gamma and speed are distributions when sigma = 0")


def bs_gamma(x, y, sigma):
    """Second derivative of :func:`bs_call` in the forward."""
    _check(x, y)
    _require_positive_sigma(sigma)
    x, y, sigma = (np.asarray(v, dtype=float) for v in (x, y, sigma))
    return _scalar(_pdf(_d1(x, y, sigma)) / (x * sigma))


def bs_speed(x, y, sigma):
    """Third derivative of :func:`bs_call` in the forward."""
    _check(x, y)
    _require_positive_sigma(sigma)
    x, y, sigma = (np.asarray(v, dtype=float) for v in (x, y, sigma))
    gamma = _pdf(_d1(x, y, sigma)) / (x * sigma)
    return _scalar(-gamma / x * (np.log(x / y) / sigma**2 + 1.5))


def implied_vol(price: float, forward: float, strike: float, tol: float = 1e-14) -> float:
    """Total volatility reproducing an undiscounted call price on ``forward``.

    Newton steps on ``sigma`` kept inside a shrinking bracket, with bisection
    whenever a step leaves it; at most 100 iterations.

    Raises
    ------
    ValueError
        If the price violates ``(forward - strike)_+ <= price < forward``.
    """
    _check(forward, strike)
    price, forward, strike = float(price), float(forward), float(strike)
    intrinsic = max(forward - strike, 0.0)
    if not math.isfinite(price) or price < intrinsic:
        raise ValueError(f"price {price} is below the intrinsic value {intrinsic}")
    if price >= forward:
        raise ValueError(f"price {price} is not below the forward {forward}")
    if price == intrinsic:
        return 0.0
    # time value is increasing in sigma: bracket it
    lo, hi = 0.0, 1.0
    while bs_call(forward, strike, hi) < price:
        lo, hi = hi, 2.0 * hi
        if hi > 1e3:
            raise ValueError("implied volatility exceeds 1000")
    # initial guess from the at-the-money identity 2 N(sigma / 2) - 1 = price / forward
    sigma = min(max(2.0 * float(ndtri(0.5 * (1.0 + price / forward))), lo), hi)
    for _ in range(100):
        diff = bs_call(forward, strike, sigma) - price
        if diff == 0.0:
            return sigma
        if diff > 0.0:
            hi = sigma
        else:
            lo = sigma
        vega = strike * float(_pdf(_d1(forward, strike, sigma) - sigma))
        step = sigma - diff / vega if vega > 0.0 else -1.0
        if not lo < step < hi:
            step = 0.5 * (lo + hi)
        if abs(step - sigma) <= 4e-16 * sigma or (abs(diff) <= tol and abs(step - sigma) <= 1e-13 * sigma):
            return step
        sigma = step
    return sigma
