"""Brute-force adaptive-quadrature oracles, independent of the library's quadrature."""

import math
import warnings

from scipy.integrate import quad

OPTS = dict(epsabs=0.0, epsrel=1e-12, limit=200)


def power_lag_means(H, T, delta, t):
    """Uniform-window means of (u - t)^(H - 1/2) and its square over u in [T, T + delta]."""
    b, c = H + 0.5, 2 * H
    lo, hi = T - t, T + delta - t
    m1 = (hi**b - lo**b) / (b * delta)
    m2 = (hi**c - lo**c) / (c * delta)
    return m1, m2


def exp_lag_means(k, T, delta, t):
    lo = T - t
    m1 = math.exp(-k * lo) * (1 - math.exp(-k * delta)) / (k * delta)
    m2 = math.exp(-2 * k * lo) * (1 - math.exp(-2 * k * delta)) / (2 * k * delta)
    return m1, m2


def gammas_unit(family, shape, T, delta):
    """The three coefficients of a unit-volatility kernel on a flat curve by nested quad."""
    if family == "exponential":
        K = lambda lag: math.exp(-shape * lag)
        means = lambda t: exp_lag_means(shape, T, delta, t)
    else:
        K = lambda lag: lag ** (shape - 0.5)
        means = lambda t: power_lag_means(shape, T, delta, t)

    def parts(u):
        # drift and cross deviations, and the squared diffusion deviation, per u
        def f_drift(t):
            return K(u - t) ** 2 - means(t)[1]

        def f_diff(t):
            return (K(u - t) - means(t)[0]) ** 2

        def f_cross(t):
            a = means(t)[0]
            return a * (K(u - t) - a)

        pts = [T] if u - T < 1e-3 else None
        A = quad(f_drift, 0.0, T, points=pts, **OPTS)[0]
        B = quad(f_diff, 0.0, T, points=pts, **OPTS)[0]
        C = quad(f_cross, 0.0, T, points=pts, **OPTS)[0]
        return A, B, C

    def outer(fn):
        return quad(lambda u: fn(*parts(u)), T, T + delta, **OPTS)[0] / delta

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        g1 = outer(lambda A, B, C: A * A / 8 + B / 2)
        g2 = outer(lambda A, B, C: -0.5 * C * A)
        g3 = outer(lambda A, B, C: 0.5 * C * C)
    return g1, g2, g3


def proxy_integrals_unit(family, shape, T, delta):
    """int nu0(K^2) dt and int nu0(K)^2 dt for a unit kernel on a flat curve."""
    means = (lambda t: exp_lag_means(shape, T, delta, t)) if family == "exponential" else (
        lambda t: power_lag_means(shape, T, delta, t)
    )
    drift = quad(lambda t: means(t)[1], 0.0, T, **OPTS)[0]
    var = quad(lambda t: means(t)[0] ** 2, 0.0, T, **OPTS)[0]
    return drift, var


def fdiff_nested(H, p):
    """Small-window diffusion constant of the power kernel by nested adaptive quadrature."""
    b = H + 0.5

    def inner(u):
        g = lambda s: ((1 + s) ** b - s**b - b * (u + s) ** (b - 1)) ** 2
        return quad(g, 0, 1, **OPTS)[0] + quad(g, 1, math.inf, epsabs=0, epsrel=1e-12, limit=400)[0]

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        val = quad(lambda u: abs(inner(u)) ** p, 0, 1, epsabs=0, epsrel=1e-11, limit=200)[0]
    return val ** (1 / p) / b**2


_LX, _LW = __import__("numpy").polynomial.legendre.leggauss(200)


def lognormal_expectation(phi, mu, sigma, kink=None):
    """E[phi(exp(mu + sigma Z))] by 200-node Gauss-Legendre on [-16, 16], split at ``kink`` (in z)."""
    import numpy as np

    edges = [-16.0] + ([kink] if kink is not None and -16.0 < kink < 16.0 else []) + [16.0]
    total = 0.0
    for a, b in zip(edges, edges[1:]):
        z = 0.5 * (b - a) * _LX + 0.5 * (a + b)
        total += (0.5 * (b - a) * _LW) @ (phi(np.exp(mu + sigma * z)) * np.exp(-0.5 * z * z))
    return total / math.sqrt(2 * math.pi)


def eps_derivatives(f, h=1e-2):
    """First three derivatives at 0 by central differences with one Richardson step."""
    import numpy as np

    def fd(h):
        return np.array([
            (f(h) - f(-h)) / (2 * h),
            (f(h) - 2 * f(0.0) + f(-h)) / h**2,
            (f(2 * h) - 2 * f(h) + 2 * f(-h) - f(-2 * h)) / (2 * h**3),
        ])

    return (4 * fd(h / 2) - fd(h)) / 3


def payoff_eps_derivatives(payoff, mu, sigma, h=None):
    """Derivatives in eps of E[payoff(exp(mu + eps + sigma Z))] at eps = 0, plus the value."""
    h = min(1e-2, 0.03 * sigma) if h is None else h

    def f(e):
        kink = None if payoff.strike is None else (2 * math.log(payoff.strike) - mu - e) / sigma
        return lognormal_expectation(payoff, mu + e, sigma, kink)

    return f(0.0), eps_derivatives(f, h)
