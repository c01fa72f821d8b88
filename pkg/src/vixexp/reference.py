"""Reference pricers: deterministic quadrature for exponential kernels, exact-Gaussian Monte Carlo for power kernels.

Both accept a :class:`~vixexp.mixed.MixedModelSpec`; wrap a single kernel
with :func:`~vixexp.mixed.single_model_spec`.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky
from scipy.optimize import brentq

from .curve_kernel import VixWindow
from .expansion import Payoff
from .mixed import MixedModelSpec, MixedProxyParams, proxy_expectation
from .quadrature import gauss_hermite_normal, gauss_legendre, graded_panels, split_normal_rule


class UnsupportedModelError(ValueError):
    pass


# ---------------------------------------------------------------------------
# quadrature for exponential kernels


@dataclass(frozen=True)
class QuadConfig:
    """Node counts of the two-dimensional quadrature.

    ``time_nodes`` Gauss-Legendre nodes per curve piece in the window and
    ``space_nodes`` nodes in the Gaussian state. With ``outer="split"`` the
    state integral is split at the payoff kink and each side uses two
    Gauss-Legendre panels of ``space_nodes`` nodes; ``"hermite"`` is plain
    Gauss-Hermite.
    """

    time_nodes: int = 80
    space_nodes: int = 80
    outer: str = "split"

    def __post_init__(self):
        if self.time_nodes < 2 or self.space_nodes < 2:
            raise ValueError("node counts must be at least 2")
        if self.outer not in ("split", "hermite"):
            raise ValueError("outer must be 'split' or 'hermite'")


def _state_variance(k: float, T: float) -> float:
    return T * float(-np.expm1(-2.0 * k * T) / (2.0 * k * T)) if k > 0.0 else T


def _bergomi_vix2_fn(spec: MixedModelSpec, n_u: int):
    """Squared VIX as a function of the standardized Ornstein-Uhlenbeck state."""
    k, T = spec.shape, spec.window.T
    var = _state_variance(k, T)
    sd = math.sqrt(var)
    us, ws = [], []
    for a, b, xi in spec.curve.segments(spec.window):
        u, w = gauss_legendre(n_u, a, b)
        us.append(u)
        ws.append(w * xi / spec.window.delta)
    u = np.concatenate(us)
    w = np.concatenate(ws)
    decay = np.exp(-k * (u - T))
    comps = [(spec.weight(j), spec.vol1 if j == 1 else spec.vol2) for j in (1, 2)]
    comps = [(c, v) for c, v in comps if c > 0.0]

    def vix2(z):
        z = np.atleast_1d(np.asarray(z, dtype=float))
        out = np.zeros_like(z)
        for c, v in comps:
            expo = v * decay[None, :] * sd * z[:, None] - 0.5 * v * v * decay[None, :] ** 2 * var
            out += c * (np.exp(expo) @ w)
        return out

    return vix2


def bergomi_quadrature_price(
    spec: MixedModelSpec, payoff: Payoff, config: QuadConfig | None = None
) -> float:
    """Price from the Markovian representation of exponential-kernel forward variances.

    Every forward variance at ``T`` is an explicit function of the single
    Gaussian state ``X_T = int_0^T e^{-k(T-s)} dW_s``; the price is an outer
    integral over that state of an inner Gauss-Legendre integral over the window.
    """
    if spec.family != "exponential":
        raise UnsupportedModelError("the quadrature reference needs an exponential kernel")
    config = config or QuadConfig()
    vix2 = _bergomi_vix2_fn(spec, config.time_nodes)
    if config.outer == "hermite":
        z, w = gauss_hermite_normal(config.space_nodes)
    else:
        cut = 0.0
        if payoff.kind != "future":
            target = math.log(payoff.strike**2)
            g = lambda x: math.log(vix2(x)[0]) - target  # noqa: E731
            lo, hi = -14.0, 14.0
            if g(lo) < 0.0 < g(hi):
                cut = brentq(g, lo, hi, xtol=1e-14, maxiter=500)
            else:
                cut = lo if g(lo) >= 0.0 else hi
        z, w = split_normal_rule(cut, config.space_nodes)
    return float(w @ payoff(vix2(z)))


# ---------------------------------------------------------------------------
# Monte Carlo for power kernels


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo settings.

    ``samples`` paths, ``grid_points`` midpoint nodes in the window,
    ``chunk`` paths per independent random stream (fixing it fixes the
    result), ``pilot`` paths used to estimate the control coefficient.
    """

    samples: int = 200_000
    grid_points: int = 300
    seed: int = 0
    chunk: int = 10_000
    pilot: int = 10_000
    control_variate: bool = True

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be at least 1")
        if self.grid_points < 2:
            raise ValueError("grid_points must be at least 2")
        if self.chunk < 1 or self.pilot < 2:
            raise ValueError("chunk must be positive and pilot at least 2")


@dataclass(frozen=True)
class McEstimate:
    price: float
    std_error: float
    ci95_halfwidth: float
    samples_used: int
    variance_reduction_factor: float

    def to_dict(self) -> dict:
        return {
            "price": self.price,
            "std_error": self.std_error,
            "ci95_halfwidth": self.ci95_halfwidth,
            "samples_used": self.samples_used,
            "variance_reduction_factor": self.variance_reduction_factor,
        }


def mc_grid(window: VixWindow, n: int) -> np.ndarray:
    """Offsets ``u_i - T`` of the midpoint rectangle rule."""
    return (np.arange(n) + 0.5) * window.delta / n


def unit_covariance(kernel, window: VixWindow, offsets: np.ndarray) -> np.ndarray:
    """``C_ij = int_0^T K^{u_i}(t) K^{u_j}(t) dt`` with ``u_i = T + offsets[i]``.

    Integrated in ``s = T - t`` on panels graded toward ``s = 0``, where the
    kernel varies on the scale of the smallest offset.
    """
    s, w = graded_panels(0.0, window.T, toward="left", nodes=20)
    kmat = kernel.of_lag(offsets[:, None] + s[None, :])
    cov = (kmat * w[None, :]) @ kmat.T
    return 0.5 * (cov + cov.T)


def _factor(cov: np.ndarray) -> np.ndarray:
    try:
        return cholesky(cov, lower=True)
    except np.linalg.LinAlgError:
        jitter = 1e-12 * float(np.max(np.diag(cov)))
        try:
            return cholesky(cov + jitter * np.eye(len(cov)), lower=True)
        except np.linalg.LinAlgError:
            raise np.linalg.LinAlgError(
                "covariance is not positive definite even after jitter"
            ) from None


def _workers() -> int:
    raw = os.environ.get("VIXEXP_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ValueError(f"VIXEXP_THREADS must be an integer, got {raw!r}") from None
    return os.cpu_count() or 1


class _Sampler:
    """Draws the discretized squared VIX and its lognormal proxy from one shared Gaussian vector."""

    def __init__(self, spec: MixedModelSpec, n: int):
        if spec.family != "power":
            raise UnsupportedModelError("the Monte Carlo reference needs a power kernel")
        window = spec.window
        off = mc_grid(window, n)
        cov = unit_covariance(spec.unit_kernel, window, off)
        self.chol = _factor(cov)
        xi = np.asarray(spec.curve(window.T + off), dtype=float)
        self.xi_mean = float(xi.mean())
        self.w = xi / xi.sum()  # discretized nu0
        self.xi_over_n = xi / n
        self.half_var = 0.5 * np.diag(cov)
        self.comps = [
            (spec.weight(j), spec.vol1 if j == 1 else spec.vol2)
            for j in (1, 2)
            if spec.weight(j) > 0.0
        ]
        self.spec = spec
        # moments of the proxy's log-components at grid level
        drift = float(self.w @ (2.0 * self.half_var))
        sd0 = math.sqrt(max(float(self.w @ cov @ self.w), 0.0))
        self.proxy_params = MixedProxyParams(
            -0.5 * spec.vol1**2 * drift,
            spec.vol1 * sd0,
            -0.5 * spec.vol2**2 * drift,
            spec.vol2 * sd0,
            math.log(self.xi_mean),
            drift,
        )

    def draw(self, rng: np.random.Generator, m: int) -> tuple[np.ndarray, np.ndarray]:
        n = self.chol.shape[0]
        g = self.chol @ rng.standard_normal((n, m))
        wg = self.w @ g
        vix2 = np.zeros(m)
        proxy = np.zeros(m)
        for c, v in self.comps:
            vix2 += c * (self.xi_over_n @ np.exp(v * g - (v * v) * self.half_var[:, None]))
            proxy += c * np.exp(v * wg - v * v * float(self.w @ self.half_var))
        return vix2, self.xi_mean * proxy


def _chunk_stats(y: np.ndarray, x: np.ndarray, beta: float, ex: float):
    """Count, mean and centered sum of squares of the plain and adjusted samples."""
    adj = y - beta * (x - ex)
    out = []
    for v in (y, adj):
        m = float(v.mean())
        out.append((len(v), m, float(((v - m) ** 2).sum())))
    return out


def _merge(a, b):
    """Combine ``(count, mean, M2)`` summaries in a fixed order."""
    na, ma, sa = a
    nb, mb, sb = b
    n = na + nb
    d = mb - ma
    return (n, ma + d * nb / n, sa + sb + d * d * na * nb / n)


def rough_mc_prices(
    spec: MixedModelSpec, payoffs: list[Payoff], config: McConfig | None = None
) -> list[McEstimate]:
    """Monte Carlo prices of several payoffs from one set of paths.

    The forward variances on the midpoint grid are simulated exactly as a
    correlated lognormal vector. The control variate is the payoff applied to
    the geometric-mean proxy on the same grid, whose expectation is computed
    by one-dimensional quadrature.

    Results depend only on ``(spec, payoffs, config)``: stream 0 of the seed
    sequence drives the pilot, stream ``i + 1`` drives chunk ``i``, and chunk
    summaries are merged in order, so the worker count (``VIXEXP_THREADS``)
    has no effect.
    """
    config = config or McConfig()
    sampler = _Sampler(spec, config.grid_points)
    use_cv = config.control_variate
    ex = [
        proxy_expectation(spec, sampler.proxy_params, p, nodes=120) if use_cv else 0.0
        for p in payoffs
    ]
    n_chunks = -(-config.samples // config.chunk)
    seeds = np.random.SeedSequence(config.seed).spawn(n_chunks + 1)

    betas = [0.0] * len(payoffs)
    if use_cv:
        vix2, proxy = sampler.draw(np.random.default_rng(seeds[0]), config.pilot)
        for i, p in enumerate(payoffs):
            y, x = p(vix2), p(proxy)
            vx = float(np.var(x))
            betas[i] = float(np.mean((y - y.mean()) * (x - x.mean())) / vx) if vx > 0.0 else 0.0

    def run(c: int):
        m = min(config.chunk, config.samples - c * config.chunk)
        vix2, proxy = sampler.draw(np.random.default_rng(seeds[c + 1]), m)
        return [_chunk_stats(p(vix2), p(proxy), betas[i], ex[i]) for i, p in enumerate(payoffs)]

    workers = min(_workers(), n_chunks)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            stats = list(pool.map(run, range(n_chunks)))
    else:
        stats = [run(c) for c in range(n_chunks)]

    out = []
    for i in range(len(payoffs)):
        plain, adj = stats[0][i]
        for c in range(1, n_chunks):
            plain = _merge(plain, stats[c][i][0])
            adj = _merge(adj, stats[c][i][1])
        n = adj[0]
        var_adj = adj[2] / (n - 1) if n > 1 else 0.0
        var_plain = plain[2] / (n - 1) if n > 1 else 0.0
        se = math.sqrt(var_adj / n)
        if var_adj > 0.0:
            vrf = var_plain / var_adj
        else:
            vrf = math.inf if var_plain > 0.0 else 1.0
        out.append(McEstimate(adj[1], se, 1.96 * se, n, vrf))
    return out


def rough_mc_price(spec: MixedModelSpec, payoff: Payoff, config: McConfig | None = None) -> McEstimate:
    """Monte Carlo price of one payoff; see :func:`rough_mc_prices`."""
    return rough_mc_prices(spec, [payoff], config)[0]


def reference_price(spec: MixedModelSpec, payoff: Payoff, *, quad: QuadConfig | None = None,
                    mc: McConfig | None = None):
    """Quadrature for exponential kernels, Monte Carlo for power kernels."""
    if spec.family == "exponential":
        return bergomi_quadrature_price(spec, payoff, quad)
    return rough_mc_price(spec, payoff, mc)

