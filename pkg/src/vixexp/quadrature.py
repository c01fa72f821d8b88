"""Gaussian quadrature rules shared by the pricers.

All rules are returned as ``(nodes, weights)`` pairs of 1-D float arrays and
are cached per node count, so repeated pricing calls never recompute the
underlying eigenvalue problems.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss


@lru_cache(maxsize=64)
def _legendre_ref(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=64)
def _hermite_normal(n: int) -> tuple[np.ndarray, np.ndarray]:
    z, w = hermegauss(n)
    w = w / np.sqrt(2.0 * np.pi)
    z.setflags(write=False)
    w.setflags(write=False)
    return z, w


def gauss_legendre(n: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre rule with ``n`` nodes mapped to ``[a, b]``."""
    if n < 1:
        raise ValueError("number of nodes must be positive")
    x, w = _legendre_ref(int(n))
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def gauss_hermite_normal(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Rule for ``E[f(Z)]`` with ``Z ~ N(0, 1)``; weights sum to one."""
    if n < 1:
        raise ValueError("number of nodes must be positive")
    return _hermite_normal(int(n))


def graded_panels(
    a: float,
    b: float,
    *,
    toward: str = "left",
    ratio: float = 0.2,
    smallest: float = 1e-15,
    nodes: int = 16,
) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre rule refined geometrically toward one endpoint.

    Panels shrink by ``ratio`` until their width falls below ``smallest`` times
    the interval length, which resolves algebraic endpoint singularities such as
    ``(u - t)^(H - 1/2)`` with exponential accuracy in the number of panels.

    Parameters
    ----------
    a, b : float
        Interval, ``a < b``.
    toward : {"left", "right"}
        Endpoint where the integrand is singular or has a singular derivative.
        Nodes are returned in absolute coordinates, so the innermost ones of a
        ``"right"`` rule round onto ``b``; integrands that blow up at ``b``
        should be integrated in the offset ``b - x`` with ``toward="left"``.
    ratio : float
        Geometric ratio between consecutive panel widths.
    smallest : float
        Relative width of the innermost panel.
    nodes : int
        Gauss-Legendre nodes per panel.
    """
    if not b > a:
        raise ValueError("graded_panels needs a < b")
    if toward not in ("left", "right"):
        raise ValueError("toward must be 'left' or 'right'")
    length = b - a
    levels = int(np.ceil(np.log(smallest) / np.log(ratio)))
    # offsets from the singular endpoint: 0, r^L, r^(L-1), ..., r, 1
    edges = np.concatenate(([0.0], ratio ** np.arange(levels, -1, -1.0))) * length
    x_ref, w_ref = _legendre_ref(int(nodes))
    lo, hi = edges[:-1, None], edges[1:, None]
    off = lo + 0.5 * (hi - lo) * (x_ref[None, :] + 1.0)
    wts = 0.5 * (hi - lo) * w_ref[None, :]
    off, wts = off.ravel(), wts.ravel()
    if toward == "left":
        return a + off, wts
    return (b - off)[::-1], wts[::-1]


def split_normal_rule(
    cut: float, n: int, half_width: float = 14.0, center: float = 0.0
) -> tuple[np.ndarray, np.ndarray]:
    """Rule for ``E[f(Z)]`` when ``f`` jumps (or kinks) at ``Z = cut``.

    Each side of ``cut`` inside ``[center - half_width, center + half_width]``
    is integrated with ``n`` Gauss-Legendre nodes against the standard normal
    density; mass outside the window is below ``1e-40`` for the defaults.
    """
    lo, hi = center - half_width, center + half_width
    cut = float(np.clip(cut, lo, hi))
    parts = []
    for a, b in ((lo, cut), (cut, hi)):
        if b - a <= 0.0:
            continue
        # two panels per side keep the Gaussian well resolved on wide windows
        mid = 0.5 * (a + b)
        for aa, bb in ((a, mid), (mid, b)):
            z, w = gauss_legendre(n, aa, bb)
            parts.append((z, w * np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)))
    z = np.concatenate([p[0] for p in parts])
    w = np.concatenate([p[1] for p in parts])
    return z, w
