"""Per-maturity calibration of mixed models to VIX futures and implied volatility smiles.

For each maturity the forward-variance level is pinned by the futures price
and the remaining parameters ``(vol1, vol2, lambda)`` are fitted to the smile
by box-constrained least squares on implied vols.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, least_squares

from .black_scholes import implied_vol
from .curve_kernel import DEFAULT_DELTA, ForwardVarianceCurve, VixWindow
from .expansion import Payoff
from .mixed import MixedExpansionPricer, MixedModelSpec

VOL_BOUNDS = (0.0, 20.0)
# residual assigned to a strike whose model price has no implied vol
IV_PENALTY = 1.0
_HEADER = ("maturity_years", "futures", "strike", "implied_vol")


@dataclass(frozen=True)
class SmileSlice:
    """Market VIX futures and annualized implied vols for one maturity."""

    maturity: float
    futures: float
    quotes: tuple  # ((strike, implied_vol), ...)

    def __post_init__(self):
        if not (math.isfinite(self.maturity) and self.maturity > 0.0):
            raise ValueError("maturity must be positive")
        if not (math.isfinite(self.futures) and self.futures > 0.0):
            raise ValueError("futures price must be positive")
        quotes = tuple(sorted((float(k), float(v)) for k, v in self.quotes))
        strikes = [k for k, _ in quotes]
        if any(k <= 0.0 for k in strikes) or any(v <= 0.0 for _, v in quotes):
            raise ValueError("strikes and implied vols must be positive")
        if len(set(strikes)) != len(strikes):
            raise ValueError("duplicate strike in slice")
        object.__setattr__(self, "quotes", quotes)

    @property
    def strikes(self) -> np.ndarray:
        return np.array([k for k, _ in self.quotes])

    @property
    def vols(self) -> np.ndarray:
        return np.array([v for _, v in self.quotes])


def load_quotes(path) -> list[SmileSlice]:
    """Read ``maturity_years,futures,strike,implied_vol`` rows into slices sorted by maturity.

    Raises
    ------
    ValueError
        On a missing or wrong header, a malformed row (with its line number),
        inconsistent futures within a maturity, or a duplicated ``(maturity, strike)``.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty quotes file")
    header = tuple(c.strip() for c in rows[0])
    if header != _HEADER:
        raise ValueError(f"{path}:1: expected header {','.join(_HEADER)}")
    groups: dict[float, dict] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 4:
            raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
        try:
            T, fut, k, iv = (float(c) for c in row)
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-numeric field") from None
        if not all(math.isfinite(v) and v > 0.0 for v in (T, fut, k, iv)):
            raise ValueError(f"{path}:{lineno}: all fields must be positive and finite")
        g = groups.setdefault(T, {"futures": fut, "quotes": {}})
        if g["futures"] != fut:
            raise ValueError(f"{path}:{lineno}: futures differ within maturity {T}")
        if k in g["quotes"]:
            raise ValueError(f"{path}:{lineno}: duplicate quote for maturity {T}, strike {k}")
        g["quotes"][k] = iv
    return [
        SmileSlice(T, g["futures"], tuple(g["quotes"].items())) for T, g in sorted(groups.items())
    ]


def write_quotes(path, slices: list[SmileSlice]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_HEADER)
        for s in slices:
            for k, v in s.quotes:
                w.writerow([repr(s.maturity), repr(s.futures), repr(k), repr(v)])


def _spec(family, shape, params, xi0, window) -> MixedModelSpec:
    vol1, vol2, lam = params
    return MixedModelSpec(family, shape, vol1, vol2, lam, ForwardVarianceCurve.flat(xi0, window.end + 1.0), window)


def match_futures(
    futures: float,
    family: str,
    shape: float,
    params,
    window: VixWindow,
    *,
    nodes: int = 80,
    tol: float = 1e-12,
) -> float:
    """Flat forward-variance level reproducing the expansion futures price.

    Every term of the futures expansion scales with the square root of the
    level, so ``xi0 = (F / P^F(xi0 = 1))^2``; a bracketed root-find polishes
    the result if rounding leaves a residual above ``tol``.
    """
    if not (math.isfinite(futures) and futures > 0.0):
        raise ValueError("futures price must be positive")
    unit = MixedExpansionPricer(_spec(family, shape, params, 1.0, window), nodes=nodes)
    p1 = unit.price(Payoff.future()).price
    if not p1 > 0.0:
        raise ArithmeticError("expansion futures price is not positive")
    xi0 = (futures / p1) ** 2

    def resid(x):
        return MixedExpansionPricer(_spec(family, shape, params, x, window), nodes=nodes).price(
            Payoff.future()
        ).price - futures

    if abs(resid(xi0)) > tol:
        xi0 = brentq(resid, 0.5 * xi0, 2.0 * xi0, xtol=1e-16, rtol=4e-16, maxiter=200)
    return float(xi0)


def model_smile(
    family: str, shape: float, params, xi0: float, window: VixWindow, strikes, *, nodes: int = 80
):
    """Expansion futures price and annualized implied vols (``nan`` where undefined)."""
    pricer = MixedExpansionPricer(_spec(family, shape, params, xi0, window), nodes=nodes)
    fwd = pricer.price(Payoff.future()).price
    root_t = math.sqrt(window.T)
    out = np.empty(len(strikes))
    for i, k in enumerate(strikes):
        try:
            out[i] = implied_vol(pricer.price(Payoff.call(k)).price, fwd, k) / root_t
        except ValueError:
            out[i] = np.nan
    return fwd, out


@dataclass
class CalibrationResult:
    maturity: float
    xi0: float
    vol1: float
    vol2: float
    lam: float
    rmse_iv: float
    iterations: int
    converged: bool
    futures_error: float
    message: str = ""
    initial_rmse_iv: float = field(default=math.nan, repr=False)

    def to_dict(self) -> dict:
        return {
            "maturity": self.maturity,
            "xi0": self.xi0,
            "vol1": self.vol1,
            "vol2": self.vol2,
            "lambda": self.lam,
            "rmse_iv": self.rmse_iv,
            "iterations": self.iterations,
            "converged": self.converged,
            "futures_error": self.futures_error,
        }


def _residuals(theta, slc, family, shape, window, nodes):
    xi0 = match_futures(slc.futures, family, shape, theta, window, nodes=nodes)
    _, iv = model_smile(family, shape, theta, xi0, window, slc.strikes, nodes=nodes)
    r = iv - slc.vols
    return np.where(np.isfinite(r), r, IV_PENALTY)


def calibrate_slice(
    slc: SmileSlice,
    family: str,
    shape: float,
    initial=(1.5, 0.5, 0.5),
    *,
    delta: float = DEFAULT_DELTA,
    nodes: int = 80,
    max_nfev: int = 200,
    tol: float = 1e-10,
) -> CalibrationResult:
    """Fit ``(vol1, vol2, lambda)`` to one smile; the level is re-solved from the futures at every step.

    Never raises on optimizer failure: the best point found is returned with
    ``converged=False``.
    """
    if len(slc.quotes) < 3:
        raise ValueError("need at least 3 quotes for 3 free parameters")
    window = VixWindow(slc.maturity, delta)
    lo = np.array([VOL_BOUNDS[0], VOL_BOUNDS[0], 0.0])
    hi = np.array([VOL_BOUNDS[1], VOL_BOUNDS[1], 1.0])
    x0 = np.clip(np.asarray(initial, dtype=float), lo, hi)
    args = (slc, family, shape, window, nodes)
    r0 = _residuals(x0, *args)
    rmse0 = float(np.sqrt(np.mean(r0**2)))
    try:
        sol = least_squares(
            _residuals, x0, bounds=(lo, hi), args=args, method="trf",
            xtol=tol, ftol=tol, gtol=tol, max_nfev=max_nfev, x_scale="jac",
        )
        theta, nfev, ok, msg = sol.x, int(sol.nfev), bool(sol.status > 0), str(sol.message)
        rmse = float(np.sqrt(np.mean(sol.fun**2)))
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        theta, nfev, ok, msg, rmse = x0, 0, False, f"optimizer failed: {exc}", rmse0
    if rmse > rmse0:
        theta, rmse = x0, rmse0
    xi0 = match_futures(slc.futures, family, shape, theta, window, nodes=nodes)
    fwd, _ = model_smile(family, shape, theta, xi0, window, [], nodes=nodes)
    return CalibrationResult(
        slc.maturity, xi0, float(theta[0]), float(theta[1]), float(theta[2]), rmse,
        nfev, ok, float(abs(fwd - slc.futures)), msg, rmse0,
    )


def calibrate_surface(
    slices: list[SmileSlice],
    family: str,
    shape: float,
    initial=(1.5, 0.5, 0.5),
    **kwargs,
) -> list[CalibrationResult]:
    """Calibrate slices from the shortest maturity up, warm-starting each from the previous fit."""
    out = []
    guess = initial
    for slc in sorted(slices, key=lambda s: s.maturity):
        try:
            res = calibrate_slice(slc, family, shape, guess, **kwargs)
        except (ValueError, ArithmeticError) as exc:
            res = CalibrationResult(slc.maturity, math.nan, *guess, math.nan, 0, False, math.nan, str(exc))
        out.append(res)
        if res.converged:
            guess = (res.vol1, res.vol2, res.lam)
    return out


def synthetic_slice(
    maturity: float,
    family: str,
    shape: float,
    params,
    xi0: float,
    strikes,
    *,
    delta: float = DEFAULT_DELTA,
    nodes: int = 80,
) -> SmileSlice:
    """Slice whose futures and vols are generated by the expansion itself."""
    window = VixWindow(maturity, delta)
    fwd, iv = model_smile(family, shape, params, xi0, window, strikes, nodes=nodes)
    if not np.all(np.isfinite(iv)):
        raise ValueError("some synthetic strikes have no implied vol")
    return SmileSlice(maturity, fwd, tuple(zip(strikes, iv)))
