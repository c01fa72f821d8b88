"""Forward-variance curves, volatility kernels and averages over the VIX window.

Conventions
-----------
Times are in years. ``u`` is a forward-variance maturity, ``t`` a calendar
time with ``t <= u``. The VIX at ``T`` averages forward variances over the
window ``[T, T + delta]``. Two probability measures live on that window: the
uniform one (``nu``) and the one weighted by the initial curve (``nu0``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .quadrature import gauss_legendre, graded_panels

DEFAULT_DELTA = 1.0 / 12.0


def _expm1_ratio(x):
    """``(1 - exp(-x)) / x`` evaluated without cancellation, equal to 1 at 0."""
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    nz = x != 0.0
    out[nz] = -np.expm1(-x[nz]) / x[nz]
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class VixWindow:
    """Averaging window ``[T, T + delta]`` of the squared VIX at maturity ``T``."""

    T: float
    delta: float = DEFAULT_DELTA

    def __post_init__(self):
        if not (math.isfinite(self.T) and self.T > 0.0):
            raise ValueError(f"maturity T must be positive, got {self.T}")
        if not (math.isfinite(self.delta) and self.delta > 0.0):
            raise ValueError(f"window length delta must be positive, got {self.delta}")

    @property
    def end(self) -> float:
        return self.T + self.delta


@dataclass(frozen=True)
class ForwardVarianceCurve:
    """Piecewise-constant initial forward-variance curve ``u -> xi_0^u``.

    Bucket ``i`` covers ``[breakpoints[i-1], breakpoints[i])`` (with an implicit
    leading 0) and carries ``values[i]``. Beyond the last breakpoint the final
    value is extended.
    """

    breakpoints: tuple
    values: tuple

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)
        if len(bp) == 0 or len(bp) != len(vals):
            raise ValueError("breakpoints and values must be non-empty and of equal length")
        if bp[0] <= 0.0 or any(b1 <= b0 for b0, b1 in zip(bp, bp[1:])):
            raise ValueError("breakpoints must be positive and strictly increasing")
        if not all(math.isfinite(v) and v > 0.0 for v in vals):
            raise ValueError("forward variances must be positive and finite")

    @classmethod
    def flat(cls, xi0: float, horizon: float = 1.0) -> "ForwardVarianceCurve":
        return cls((horizon,), (xi0,))

    @classmethod
    def from_dict(cls, data: dict) -> "ForwardVarianceCurve":
        try:
            return cls(tuple(data["breakpoints"]), tuple(data["values"]))
        except KeyError as exc:
            raise ValueError(f"curve is missing field {exc.args[0]!r}") from None

    def to_dict(self) -> dict:
        return {"breakpoints": list(self.breakpoints), "values": list(self.values)}

    def __call__(self, u):
        idx = np.searchsorted(np.asarray(self.breakpoints), u, side="right")
        idx = np.minimum(idx, len(self.values) - 1)
        out = np.asarray(self.values)[idx]
        return out if np.ndim(out) else float(out)

    def segments(self, window: VixWindow) -> list[tuple[float, float, float]]:
        """Pieces ``(a, b, xi)`` on which the curve is constant inside the window."""
        T, end = window.T, window.end
        inner = [b for b in self.breakpoints if T < b < end]
        edges = [T, *inner, end]
        return [(a, b, self(0.5 * (a + b))) for a, b in zip(edges, edges[1:])]

    def is_flat_on(self, window: VixWindow) -> bool:
        return len({xi for _, _, xi in self.segments(window)}) == 1

    def window_mean(self, window: VixWindow) -> float:
        """``nu(xi_0)``, the expected squared VIX."""
        return sum((b - a) * xi for a, b, xi in self.segments(window)) / window.delta

    def nu0_masses(self, window: VixWindow) -> list[tuple[float, float, float]]:
        """Pieces ``(a, b, mass)`` of the curve-weighted measure ``nu0``."""
        segs = self.segments(window)
        total = sum((b - a) * xi for a, b, xi in segs)
        return [(a, b, (b - a) * xi / total) for a, b, xi in segs]


class Kernel:
    """Deterministic kernel ``K^u(t)``, a function of the lag ``u - t`` only."""

    family: str = ""

    @property
    def vol(self) -> float:
        raise NotImplementedError

    def with_vol(self, vol: float) -> "Kernel":
        raise NotImplementedError

    @property
    def is_constant(self) -> bool:
        raise NotImplementedError

    def of_lag(self, lag):
        """Kernel value at lag ``u - t`` (no domain checks, vectorized)."""
        raise NotImplementedError

    def lag_mean(self, lo, hi):
        """Average of the kernel over lags in ``[lo, hi]``."""
        raise NotImplementedError

    def lag_sq_mean(self, lo, hi):
        """Average of the squared kernel over lags in ``[lo, hi]``."""
        raise NotImplementedError

    def sq_integral(self, u, T):
        """``int_0^T K^u(t)^2 dt`` for ``u >= T``."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    @property
    def singular(self) -> bool:
        return False


@dataclass(frozen=True)
class ExponentialKernel(Kernel):
    """Bergomi kernel ``omega * exp(-k (u - t))``."""

    omega: float
    k: float = 0.0
    family = "exponential"

    def __post_init__(self):
        if not (math.isfinite(self.omega) and self.omega >= 0.0):
            raise ValueError(f"omega must be non-negative, got {self.omega}")
        if not (math.isfinite(self.k) and self.k >= 0.0):
            raise ValueError(f"mean reversion k must be non-negative, got {self.k}")

    @property
    def vol(self) -> float:
        return self.omega

    def with_vol(self, vol: float) -> "ExponentialKernel":
        return ExponentialKernel(vol, self.k)

    @property
    def is_constant(self) -> bool:
        return self.k == 0.0

    def of_lag(self, lag):
        return self.omega * np.exp(-self.k * np.asarray(lag, dtype=float))

    def lag_mean(self, lo, hi):
        lo, hi = np.asarray(lo, float), np.asarray(hi, float)
        return self.omega * np.exp(-self.k * lo) * _expm1_ratio(self.k * (hi - lo))

    def lag_sq_mean(self, lo, hi):
        lo, hi = np.asarray(lo, float), np.asarray(hi, float)
        return self.omega**2 * np.exp(-2.0 * self.k * lo) * _expm1_ratio(
            2.0 * self.k * (hi - lo)
        )

    def sq_integral(self, u, T):
        u = np.asarray(u, float)
        return self.omega**2 * np.exp(-2.0 * self.k * (u - T)) * T * _expm1_ratio(
            2.0 * self.k * T
        )

    def to_dict(self) -> dict:
        return {"family": "exponential", "omega": self.omega, "k": self.k}


@dataclass(frozen=True)
class PowerKernel(Kernel):
    """Rough Bergomi kernel ``eta * (u - t)^(H - 1/2)``."""

    eta: float
    H: float
    family = "power"

    def __post_init__(self):
        if not (math.isfinite(self.eta) and self.eta >= 0.0):
            raise ValueError(f"eta must be non-negative, got {self.eta}")
        if not (0.0 < self.H < 1.0):
            raise ValueError(f"H must lie in (0, 1), got {self.H}")

    @property
    def vol(self) -> float:
        return self.eta

    def with_vol(self, vol: float) -> "PowerKernel":
        return PowerKernel(vol, self.H)

    @property
    def is_constant(self) -> bool:
        return self.H == 0.5

    @property
    def singular(self) -> bool:
        return self.H < 0.5

    def of_lag(self, lag):
        return self.eta * np.asarray(lag, dtype=float) ** (self.H - 0.5)

    def lag_mean(self, lo, hi):
        lo, hi = np.asarray(lo, float), np.asarray(hi, float)
        b = self.H + 0.5
        return self.eta * (hi**b - lo**b) / (b * (hi - lo))

    def lag_sq_mean(self, lo, hi):
        lo, hi = np.asarray(lo, float), np.asarray(hi, float)
        h2 = 2.0 * self.H
        return self.eta**2 * (hi**h2 - lo**h2) / (h2 * (hi - lo))

    def sq_integral(self, u, T):
        u = np.asarray(u, float)
        h2 = 2.0 * self.H
        return self.eta**2 * (u**h2 - (u - T) ** h2) / h2

    def to_dict(self) -> dict:
        return {"family": "power", "eta": self.eta, "H": self.H}


KernelLike = Union[ExponentialKernel, PowerKernel]


def kernel_from_dict(data: dict) -> KernelLike:
    family = data.get("family")
    try:
        if family == "exponential":
            return ExponentialKernel(float(data["omega"]), float(data.get("k", 0.0)))
        if family == "power":
            return PowerKernel(float(data["eta"]), float(data["H"]))
    except KeyError as exc:
        raise ValueError(f"kernel is missing field {exc.args[0]!r}") from None
    raise ValueError(f"unknown kernel family {family!r}")


def kernel_eval(kernel: Kernel, u, t):
    """Kernel value ``K^u(t)`` with domain checks."""
    lag = np.asarray(u, float) - np.asarray(t, float)
    if np.any(lag < 0.0):
        raise ValueError("kernel is only defined for t <= u")
    if kernel.singular and np.any(lag == 0.0):
        raise ValueError("power kernel with H < 1/2 is singular at t = u")
    out = kernel.of_lag(lag)
    return out if np.ndim(out) else float(out)


def kernel_sq_integral(kernel: Kernel, u, T: float):
    """``int_0^T K^u(t)^2 dt`` in closed form (requires ``u >= T``)."""
    if np.any(np.asarray(u) < T) or T <= 0.0:
        raise ValueError("need 0 < T <= u")
    out = kernel.sq_integral(u, T)
    return out if np.ndim(out) else float(out)


def nu0_mean(
    curve: ForwardVarianceCurve,
    window: VixWindow,
    f: Callable[[np.ndarray], np.ndarray],
    nodes: int = 64,
) -> float:
    """Average of ``f(u)`` under ``nu0`` by Gauss-Legendre on each curve piece."""
    total = 0.0
    for a, b, mass in curve.nu0_masses(window):
        u, w = gauss_legendre(nodes, a, b)
        total += mass * float(np.dot(w, np.broadcast_to(f(u), u.shape))) / (b - a)
    return total


def nu0_lag_means(kernel: Kernel, curve: ForwardVarianceCurve, window: VixWindow, s):
    """``nu0(K^.(T - s))`` and ``nu0(K^.(T - s)^2)`` for offsets ``s = T - t``.

    Lags are formed from offsets relative to ``T`` so that they stay exact
    (and strictly positive) arbitrarily close to the singular corner.
    """
    s = np.asarray(s, float)
    m1 = np.zeros_like(s)
    m2 = np.zeros_like(s)
    T = window.T
    for a, b, mass in curve.nu0_masses(window):
        lo, hi = (a - T) + s, (b - T) + s
        m1 = m1 + mass * kernel.lag_mean(lo, hi)
        m2 = m2 + mass * kernel.lag_sq_mean(lo, hi)
    return m1, m2


def _check_time(t, window: VixWindow) -> np.ndarray:
    t = np.asarray(t, float)
    if np.any(t < 0.0) or np.any(t > window.T):
        raise ValueError("t must lie in [0, T]")
    return t


def nu0_kernel_mean(kernel: Kernel, curve: ForwardVarianceCurve, window: VixWindow, t):
    """``nu0(K^.(t))``, exact for the piecewise-constant curve."""
    t = _check_time(t, window)
    out = nu0_lag_means(kernel, curve, window, window.T - t)[0]
    return out if np.ndim(out) else float(out)


def nu0_kernel_sq_mean(kernel: Kernel, curve: ForwardVarianceCurve, window: VixWindow, t):
    """``nu0(K^.(t)^2)``, exact for the piecewise-constant curve."""
    t = _check_time(t, window)
    out = nu0_lag_means(kernel, curve, window, window.T - t)[1]
    return out if np.ndim(out) else float(out)


def window_offsets(
    curve: ForwardVarianceCurve,
    window: VixWindow,
    *,
    graded: bool = False,
    nodes: int = 64,
    panel_nodes: int = 16,
) -> tuple[np.ndarray, np.ndarray]:
    """Offsets ``u - T`` of window nodes with ``nu0`` weights summing to one.

    With ``graded=True`` the first curve piece is refined geometrically toward
    ``u = T``, where functionals of a power kernel lose smoothness.
    """
    us, ws = [], []
    T = window.T
    for i, (a, b, mass) in enumerate(curve.nu0_masses(window)):
        if graded and i == 0:
            off, w = graded_panels(0.0, b - a, toward="left", nodes=panel_nodes)
        else:
            off, w = gauss_legendre(nodes, 0.0, b - a)
        us.append((a - T) + off)
        ws.append(w * mass / (b - a))
    return np.concatenate(us), np.concatenate(ws)


def time_offsets(
    T: float, *, graded: bool = False, nodes: int = 128, panel_nodes: int = 16
) -> tuple[np.ndarray, np.ndarray]:
    """Offsets ``T - t`` of time nodes on ``[0, T]``, optionally refined near ``t = T``."""
    if graded:
        return graded_panels(0.0, T, toward="left", nodes=panel_nodes)
    return gauss_legendre(nodes, 0.0, T)
