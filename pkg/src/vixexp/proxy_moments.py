"""Lognormal proxy moments, expansion coefficients and kernel diagnostics.

The squared VIX is approximated by the geometric (instead of arithmetic) mean
of the forward variances over the window, which is exactly lognormal. This
module computes the parameters of that lognormal, the three payoff-independent
correction weights of the price expansion, and the window-averaged kernel
deviation norms that control the error of the approximation.

Two routes are provided for every quantity that admits one: closed forms for a
curve that is flat on the window, and a generic tensor quadrature in
``(u, t)`` that works for any piecewise-constant curve.
"""

from __future__ import annotations

import math
import threading
import warnings
from dataclasses import dataclass

import numpy as np

from .curve_kernel import (
    ExponentialKernel,
    ForwardVarianceCurve,
    Kernel,
    PowerKernel,
    VixWindow,
    _expm1_ratio,
    nu0_lag_means,
    time_offsets,
    window_offsets,
)
from .quadrature import gauss_legendre, graded_panels


class DegenerateProxyError(ArithmeticError):
    """The proxy variance vanished although the kernel is not identically zero."""


@dataclass(frozen=True)
class ProxyParams:
    """Log-mean ``mu`` and log-volatility ``sigma`` of the lognormal VIX^2 proxy."""

    mu: float
    sigma: float

    def __post_init__(self):
        if not math.isfinite(self.mu):
            raise ValueError("proxy log-mean must be finite")
        if not (math.isfinite(self.sigma) and self.sigma >= 0.0):
            raise ValueError("proxy volatility must be non-negative")

    @property
    def sigma2(self) -> float:
        return self.sigma**2


@dataclass(frozen=True)
class GammaCoefficients:
    gamma1: float
    gamma2: float
    gamma3: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.gamma1, self.gamma2, self.gamma3)


@dataclass(frozen=True)
class KernelNorms:
    """Window ``L^p`` norms of the drift (``gamma_norm``) and diffusion (``lambda_norm``) deviations."""

    gamma_norm: float
    lambda_norm: float
    p: float


# ---------------------------------------------------------------------------
# stable brackets for the exponential-kernel closed forms

_GA = (1 / 3, 0.0, -1 / 45, 0.0, 2 / 945, 0.0, -1 / 4725, 0.0, 2 / 93555, 0.0,
       -1382 / 638512875, 0.0, 4 / 18243225)
_GB = (1 / 6, -1 / 12, 1 / 40, -1 / 180, 1 / 1008, -1 / 6720, 1 / 51840,
       -1 / 453600, 1 / 4435200, -1 / 47900160, 1 / 566092800,
       -1 / 7264857600, 1 / 100590336000)
_GC = (1.0, -1.0, 37 / 60, -17 / 60, 263 / 2520, -9 / 280, 103 / 12096,
       -599 / 302400, 8203 / 19958400, -1537 / 19958400, 40973 / 3113510400,
       -1669 / 807206400, 3121 / 10378368000)


def _series(coeffs, x, first_power):
    return x**first_power * sum(c * x**i for i, c in enumerate(coeffs))


def _ga(x):
    """``x coth(x) - 1``."""
    if abs(x) < 0.5:
        return _series(_GA, x, 2)
    return -1.0 + x * (1.0 + math.exp(-2 * x)) / (-math.expm1(-2 * x))


def _gb(x):
    """``(2 + x) e^{-x} - 2 + x``."""
    if abs(x) < 0.5:
        return _series(_GB, x, 3)
    return (2.0 + x) * math.exp(-x) - 2.0 + x


def _gc(x):
    """``2x e^{-x} + 2x + e^{-2x}(2x + 3) - 3``."""
    if abs(x) < 0.5:
        return _series(_GC, x, 3)
    return 2 * x * math.exp(-x) + 2 * x + math.exp(-2 * x) * (2 * x + 3) - 3.0


# ---------------------------------------------------------------------------
# closed forms


def _bergomi_integrals(omega: float, k: float, window: VixWindow) -> tuple[float, float]:
    T, d = window.T, window.delta
    r_T = _expm1_ratio(2 * k * T)
    return (omega**2 * T * r_T * _expm1_ratio(2 * k * d), omega**2 * T * r_T * _expm1_ratio(k * d) ** 2)


def bergomi_proxy_closed(omega: float, k: float, X0: float, window: VixWindow) -> ProxyParams:
    """Proxy moments for the exponential kernel and a curve flat on the window.

    ``X0`` is the log of the (flat) forward variance. Written in terms of
    ``(1 - e^{-x}) / x`` so that ``k -> 0`` is continuous.
    """
    if k < 0.0:
        raise ValueError("k must be non-negative")
    drift, var = _bergomi_integrals(omega, k, window)
    return ProxyParams(X0 - 0.5 * drift, math.sqrt(var))


def _increment(x, base, h):
    """``(base + h)^x - base^x`` without cancellation for ``h << base``."""
    return base**x * np.expm1(x * np.log1p(h / base))


def _power_integrals(eta: float, H: float, window: VixWindow) -> tuple[float, float]:
    """Drift and variance integrals of the power kernel on a flat curve.

    The direct closed-form brackets ``(T + d)^c - T^c - d^c`` and
    ``(T + d)^(c+1) + T^(c+1) - d^(c+1) - 2 int (t + d)^b t^b dt`` cancel to
    ``O(d / T)`` of their terms, so the drift is written with ``expm1`` and the
    variance as ``int_0^T [(s + d)^b - s^b]^2 ds`` with the difference formed
    stably, on panels graded toward ``s = 0``.
    """
    T, d = window.T, window.delta
    h2 = 2.0 * H
    b = H + 0.5
    drift = eta**2 * (float(_increment(h2 + 1, T, d)) - d ** (h2 + 1)) / (h2 * (h2 + 1) * d)
    s, w = graded_panels(0.0, T, toward="left", nodes=24)
    diff = _increment(b, s, d)
    return drift, eta**2 * float(w @ (diff * diff)) / (d * b) ** 2


def rough_proxy_closed(eta: float, H: float, X0: float, window: VixWindow) -> ProxyParams:
    """Proxy moments for the power kernel and a curve flat on the window."""
    if not 0.0 < H < 1.0:
        raise ValueError("H must lie in (0, 1)")
    drift, var = _power_integrals(eta, H, window)
    if var <= 0.0 and eta > 0.0:
        raise DegenerateProxyError("proxy variance underflowed to zero")
    return ProxyParams(X0 - 0.5 * drift, math.sqrt(max(var, 0.0)))


def hyp2f1_negative(a: float, b: float, c: float, z: float, tol: float = 1e-17) -> float:
    """Gauss hypergeometric function for ``z <= 0``.

    Uses the Pfaff transformation to ``w = z / (z - 1)`` in ``[0, 1)`` and sums
    the resulting power series; convergent whenever ``b - a > 0`` or ``w < 1``.
    """
    if z > 0.0:
        raise ValueError("hyp2f1_negative needs z <= 0")
    w = z / (z - 1.0)
    cb = c - b
    term, total, n = 1.0, 1.0, 0
    while n < 2_000_000:
        term *= (a + n) * (cb + n) / ((c + n) * (n + 1)) * w
        total += term
        n += 1
        if abs(term) < tol * abs(total) and n > 5:
            break
    return (1.0 - z) ** (-a) * total


def rough_sigma2_hypergeometric(eta: float, H: float, window: VixWindow) -> float:
    """Proxy variance of the power kernel through the hypergeometric identity.

    A cross-check only: the bracket cancels to ``O((delta / T)^2)`` of its
    terms, so it loses accuracy once ``delta`` is far below ``T``.
    """
    T, d = window.T, window.delta
    h2 = 2.0 * H
    f = hyp2f1_negative(-H - 0.5, H + 1.5, H + 2.5, -T / d)
    bracket = ((T + d) ** (h2 + 2) + T ** (h2 + 2) - d ** (h2 + 2)) / (h2 + 2)
    bracket -= 4.0 / (h2 + 3) * d ** (H + 0.5) * T ** (H + 1.5) * f
    return eta**2 * bracket / (d**2 * (H + 0.5) ** 2)


def _bergomi_unit_parts(k: float, window: VixWindow) -> tuple[float, float, float, float]:
    """Quartic and quadratic parts of the first coefficient, then the other two, at ``omega = 1``.

    The direct closed forms are rearranged so every ``1/k`` power cancels
    against ``1 - e^{-ck}`` factors.
    """
    T, d = window.T, window.delta
    x = k * d
    r1 = _expm1_ratio(2 * k * T)
    r2 = _expm1_ratio(2 * x)
    r3 = _expm1_ratio(x)
    g10 = T**2 * r1**2 * r2**2 * _ga(x) / 8.0
    g11 = T * r1 * r3 * _gb(x) / (4.0 * x)
    g2 = -(T**2) * r1**2 * r3**2 * _gc(x) / (12.0 * x)
    g3 = T**2 * r1**2 * r3**3 * _gb(x) / (4.0 * x)
    return g10, g11, g2, g3


def bergomi_gamma_closed(omega: float, k: float, window: VixWindow) -> GammaCoefficients:
    """Expansion coefficients of the exponential kernel for a flat curve; ``k = 0`` gives zero."""
    if k < 0.0:
        raise ValueError("k must be non-negative")
    if k == 0.0:
        return GammaCoefficients(0.0, 0.0, 0.0)
    g10, g11, g2, g3 = _bergomi_unit_parts(k, window)
    w2 = omega**2
    w4 = w2 * w2
    return GammaCoefficients(w4 * g10 + w2 * g11, w4 * g2, w4 * g3)


# ---------------------------------------------------------------------------
# generic quadrature


@dataclass
class _Functionals:
    """Window functionals of a kernel on a ``(u, t)`` tensor grid."""

    wt: np.ndarray  # time weights
    wu: np.ndarray  # nu0 weights on the window
    a: np.ndarray  # nu0(K(t))
    b: np.ndarray  # nu0(K(t)^2)
    drift_dev: np.ndarray  # int_0^T [K^u(t)^2 - nu0(K(t)^2)] dt, per u
    diff_dev: np.ndarray  # int_0^T [K^u(t) - nu0(K(t))]^2 dt, per u
    cross: np.ndarray  # int_0^T nu0(K(t)) [K^u(t) - nu0(K(t))] dt, per u


def _functionals(
    kernel: Kernel, curve: ForwardVarianceCurve, window: VixWindow, *, fine: bool = False
) -> _Functionals:
    graded = isinstance(kernel, PowerKernel) and not kernel.is_constant
    panel = 24 if fine else 16
    s, wt = time_offsets(window.T, graded=graded, nodes=256 if fine else 128, panel_nodes=panel)
    du, wu = window_offsets(curve, window, graded=graded, nodes=128 if fine else 64,
                            panel_nodes=panel)
    a, b = nu0_lag_means(kernel, curve, window, s)
    K = kernel.of_lag(du[:, None] + s[None, :])
    dev = K - a[None, :]
    return _Functionals(
        wt=wt,
        wu=wu,
        a=a,
        b=b,
        drift_dev=(K * K - b[None, :]) @ wt,
        diff_dev=(dev * dev) @ wt,
        cross=(dev * a[None, :]) @ wt,
    )


def _gammas_from(f: _Functionals) -> tuple[float, float, float]:
    g1 = float(f.wu @ (f.drift_dev**2)) / 8.0 + float(f.wu @ f.diff_dev) / 2.0
    g2 = -0.5 * float(f.wu @ (f.cross * f.drift_dev))
    g3 = 0.5 * float(f.wu @ (f.cross**2))
    return g1, g2, g3


def _check_method(method):
    if method not in ("auto", "closed", "quadrature"):
        raise ValueError(f"unknown method {method!r}")


def proxy_integrals(
    kernel: Kernel,
    curve: ForwardVarianceCurve,
    window: VixWindow,
    method: str = "auto",
) -> tuple[float, float]:
    """``int_0^T nu0(K(t)^2) dt`` and ``int_0^T nu0(K(t))^2 dt``.

    These are twice the convexity drift and the variance of the log-proxy.
    ``auto`` uses the closed forms when the curve is flat on the window and
    the quadrature otherwise.
    """
    _check_method(method)
    flat = curve.is_flat_on(window)
    if method == "closed" and not flat:
        raise ValueError("closed forms need a curve that is flat on the window")
    if method != "quadrature" and flat:
        if isinstance(kernel, ExponentialKernel):
            return _bergomi_integrals(kernel.omega, kernel.k, window)
        return _power_integrals(kernel.eta, kernel.H, window)
    graded = isinstance(kernel, PowerKernel) and not kernel.is_constant
    s, wt = time_offsets(window.T, graded=graded, panel_nodes=24)
    a, b = nu0_lag_means(kernel, curve, window, s)
    return float(wt @ b), float(wt @ (a * a))


def proxy_params(
    kernel: Kernel,
    curve: ForwardVarianceCurve,
    window: VixWindow,
    method: str = "auto",
) -> ProxyParams:
    """Moments of the lognormal proxy of the squared VIX.

    Parameters
    ----------
    method : {"auto", "closed", "quadrature"}
        ``auto`` uses the closed forms when the curve is flat on the window and
        the quadrature otherwise.

    Raises
    ------
    DegenerateProxyError
        If the proxy variance vanishes for a kernel with positive volatility.
    """
    drift, var = proxy_integrals(kernel, curve, window, method)
    if var <= 0.0 and kernel.vol > 0.0:
        raise DegenerateProxyError("proxy variance underflowed to zero")
    log_mean = math.log(curve.window_mean(window))
    return ProxyParams(log_mean - 0.5 * drift, math.sqrt(max(var, 0.0)))


class _UnitFactorCache:
    """Thread-safe cache of the unit-volatility coefficient factors.

    For a kernel ``vol * K0`` the coefficients factor as
    ``gamma1 = vol^4 A1 + vol^2 B1``, ``gamma2 = vol^4 A2`` and
    ``gamma3 = vol^4 A3``; the factors depend only on the kernel shape, the
    window and the ``nu0`` measure, and are cached under an exact key.
    """

    def __init__(self, maxsize: int = 4096):
        self._data: dict = {}
        self._lock = threading.Lock()
        self._maxsize = maxsize

    def get(self, key, compute):
        with self._lock:
            hit = self._data.get(key)
        if hit is not None:
            return hit
        value = compute()
        with self._lock:
            if len(self._data) >= self._maxsize:
                self._data.pop(next(iter(self._data)))
            self._data.setdefault(key, value)
            return self._data[key]

    def clear(self):
        with self._lock:
            self._data.clear()


_unit_factors = _UnitFactorCache()


def _unit_gamma_factors(kernel: Kernel, curve, window, method: str):
    unit = kernel.with_vol(1.0)
    shape = ("exp", unit.k) if isinstance(unit, ExponentialKernel) else ("pow", unit.H)
    key = (shape, window.T, window.delta, tuple(curve.nu0_masses(window)), method)

    def compute():
        if method == "closed":
            if unit.k == 0.0:
                return (0.0, 0.0, 0.0, 0.0)
            return _bergomi_unit_parts(unit.k, window)
        f = _functionals(unit, curve, window)
        a1 = float(f.wu @ (f.drift_dev**2)) / 8.0
        b1 = float(f.wu @ f.diff_dev) / 2.0
        _, a2, a3 = _gammas_from(f)
        return (a1, b1, a2, a3)

    return _unit_factors.get(key, compute)


def gamma_coefficients(
    kernel: Kernel,
    curve: ForwardVarianceCurve,
    window: VixWindow,
    method: str = "auto",
) -> GammaCoefficients:
    """Payoff-independent correction weights of the price expansion.

    ``auto`` uses the closed forms for an exponential kernel on a flat curve,
    and the tensor quadrature otherwise. Results are assembled from cached
    unit-volatility factors, so repeated calls with a different volatility
    level cost nothing.
    """
    _check_method(method)
    if kernel.is_constant or kernel.vol == 0.0:
        return GammaCoefficients(0.0, 0.0, 0.0)
    flat = curve.is_flat_on(window)
    use_closed = isinstance(kernel, ExponentialKernel) and flat and method != "quadrature"
    if method == "closed" and not use_closed:
        raise ValueError("closed-form coefficients need an exponential kernel and a flat curve")
    a1, b1, a2, a3 = _unit_gamma_factors(
        kernel, curve, window, "closed" if use_closed else "quadrature"
    )
    v2 = kernel.vol**2
    v4 = v2 * v2
    return GammaCoefficients(v4 * a1 + v2 * b1, v4 * a2, v4 * a3)


def gamma_coefficients_direct(
    kernel: Kernel, curve: ForwardVarianceCurve, window: VixWindow, *, fine: bool = False
) -> GammaCoefficients:
    """Coefficients straight from the tensor quadrature, bypassing the cache."""
    if kernel.is_constant or kernel.vol == 0.0:
        return GammaCoefficients(0.0, 0.0, 0.0)
    return GammaCoefficients(*_gammas_from(_functionals(kernel, curve, window, fine=fine)))


def kernel_norms(
    kernel: Kernel, curve: ForwardVarianceCurve, window: VixWindow, p: float = 2.0
) -> KernelNorms:
    """Window ``L^p`` norms of the drift and diffusion deviations from their ``nu0`` means."""
    if p < 1.0:
        raise ValueError("p must be at least 1")
    if kernel.is_constant or kernel.vol == 0.0:
        return KernelNorms(0.0, 0.0, p)
    f = _functionals(kernel, curve, window)
    gam = float(f.wu @ np.abs(f.drift_dev) ** p) ** (1.0 / p)
    lam = float(f.wu @ np.abs(f.diff_dev) ** p) ** (1.0 / p)
    return KernelNorms(gam, lam, p)


# ---------------------------------------------------------------------------
# small-window constants of the power kernel


def _fdiff_inner(H: float, u: np.ndarray, panel_nodes: int, s_max: float) -> np.ndarray:
    """``int_0^inf g(s, u)^2 ds`` for each ``u``, with an analytic tail past ``s_max``."""
    b = H + 0.5
    s1, w1 = graded_panels(0.0, 1.0, toward="left", nodes=panel_nodes)
    # log-spaced panels on [1, s_max]
    edges = np.linspace(0.0, math.log(s_max), int(math.ceil(math.log(s_max))) + 1)
    ys, wys = [], []
    for lo, hi in zip(edges, edges[1:]):
        y, wy = gauss_legendre(panel_nodes, lo, hi)
        ys.append(y)
        wys.append(wy)
    y = np.concatenate(ys)
    s2 = np.exp(y)
    w2 = np.concatenate(wys) * s2
    s = np.concatenate((s1, s2))
    w = np.concatenate((w1, w2))
    g = (1 + s[None, :]) ** b - s[None, :] ** b - b * (u[:, None] + s[None, :]) ** (b - 1)
    body = (g * g) @ w
    # g ~ b (b - 1) (1/2 - u) s^(b - 2) for large s
    c = (b * (b - 1) * (0.5 - u)) ** 2
    tail = c * s_max ** (2 * b - 3) / (3 - 2 * b)
    return body + tail


def _fdiff_eval(H: float, p: float, panel_nodes: int, s_max: float) -> float:
    u, wu = graded_panels(0.0, 1.0, toward="left", nodes=panel_nodes)
    inner = _fdiff_inner(H, u, panel_nodes, s_max)
    return float(wu @ np.abs(inner) ** p) ** (1.0 / p) / (H + 0.5) ** 2


def fdiff_constant(H: float, p: float = 2.0, tol: float = 1e-6) -> float:
    """Small-window constant ``f_diff(H, p)`` of the diffusion deviation norm.

    For the power kernel the diffusion norm behaves like
    ``eta^2 f_diff(H, p) delta^(2H)``. The improper double integral is
    evaluated twice at different resolutions; a warning is issued when the two
    disagree by more than ``tol`` (relative).
    """
    if not 0.0 < H < 1.0 or H == 0.5:
        raise ValueError("f_diff needs H in (0, 1) without 1/2")
    if p < 1.0:
        raise ValueError("p must be at least 1")
    coarse = _fdiff_eval(H, p, 16, 1e4)
    fine = _fdiff_eval(H, p, 24, 1e5)
    if abs(fine - coarse) > tol * abs(fine):
        warnings.warn(
            f"f_diff({H}, {p}) resolved only to {abs(fine - coarse) / abs(fine):.1e}",
            RuntimeWarning,
            stacklevel=2,
        )
    return fine


def power_gamma_norm_constant(H: float, p: float = 2.0) -> float:
    """Small-window constant of the drift deviation norm of the power kernel, ``H < 1/2``.

    The drift norm behaves like ``eta^2 c delta^(2H)`` with the returned ``c``.
    """
    if not 0.0 < H < 0.5:
        raise ValueError("constant only defined for H in (0, 1/2)")
    y, w = graded_panels(0.0, 1.0, toward="left", nodes=24)
    val = float(w @ np.abs(1.0 / (2 * H + 1) - y ** (2 * H)) ** p) ** (1.0 / p)
    return val / (2 * H)
