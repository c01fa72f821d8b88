"""Command-line interface: ``vixexp {price,smile,convergence,calibrate,coeffs}``.

Model configs are JSON files. Times are in years, variances are annualized::

    {
      "model": {"family": "power", "eta": 1.0, "H": 0.1},
      "xi0": 0.055225,                   # or "curve": {"breakpoints": [...], "values": [...]}
      "T": 0.0833333, "delta": 0.0833333,
      "payoff": {"kind": "call", "strike": 0.2}
    }

A mixed model uses ``{"family": "power", "H": 0.1, "vol1": 1.4, "vol2": 0.7,
"lambda": 0.3}`` (``"k"`` instead of ``"H"`` for the exponential family).

Results go to stdout as JSON (CSV for ``smile``), diagnostics to stderr.
Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from dataclasses import dataclass

import numpy as np

from .black_scholes import implied_vol
from .calibration import calibrate_surface, load_quotes
from .curve_kernel import DEFAULT_DELTA, ForwardVarianceCurve, VixWindow, kernel_from_dict
from .expansion import Payoff, expansion_price
from .mixed import MixedExpansionPricer, MixedModelSpec, single_model_spec
from .proxy_moments import gamma_coefficients, proxy_params
from .reference import McConfig, QuadConfig, bergomi_quadrature_price, rough_mc_prices

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class Model:
    """Parsed model config; always carried as a mixture (a single kernel has ``lam = 1``)."""

    spec: MixedModelSpec
    mixed: bool

    def at(self, T: float | None = None, delta: float | None = None) -> "Model":
        w = self.spec.window
        window = VixWindow(w.T if T is None else T, w.delta if delta is None else delta)
        return Model(self.spec.with_params(window=window), self.mixed)

    @property
    def kernel(self):
        return self.spec.kernel(1)


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None


def parse_model(cfg: dict) -> Model:
    try:
        mdl = cfg["model"]
        T = float(cfg["T"])
    except KeyError as exc:
        raise UsageError(f"config is missing field {exc.args[0]!r}") from None
    window = VixWindow(T, float(cfg.get("delta", DEFAULT_DELTA)))
    if "curve" in cfg:
        curve = ForwardVarianceCurve.from_dict(cfg["curve"])
    elif "xi0" in cfg:
        curve = ForwardVarianceCurve.flat(float(cfg["xi0"]), window.end + 1.0)
    else:
        raise UsageError("config needs either 'xi0' or 'curve'")
    if "vol1" in mdl:
        return Model(MixedModelSpec.from_dict(mdl, curve, window), True)
    return Model(single_model_spec(kernel_from_dict(mdl), curve, window), False)


def parse_payoff(cfg: dict) -> Payoff:
    if "payoff" not in cfg:
        raise UsageError("config is missing field 'payoff'")
    return Payoff.from_dict(cfg["payoff"])


def _mc_config(args, cfg) -> McConfig:
    base = dict(cfg.get("mc", {}))
    for key, attr in (("samples", "samples"), ("grid_points", "grid_points"), ("seed", "seed")):
        val = getattr(args, attr, None)
        if val is not None:
            base[key] = val
    try:
        return McConfig(**base)
    except TypeError as exc:
        raise UsageError(f"bad 'mc' section: {exc}") from None


def _quad_config(args, cfg) -> QuadConfig:
    base = dict(cfg.get("quad", {}))
    if getattr(args, "nodes", None) is not None:
        base["time_nodes"] = base["space_nodes"] = args.nodes
    try:
        return QuadConfig(**base)
    except TypeError as exc:
        raise UsageError(f"bad 'quad' section: {exc}") from None


# ---------------------------------------------------------------------------
# pricing helpers


def expansion_prices(model: Model, payoffs: list[Payoff]) -> list[float]:
    if model.mixed:
        pricer = MixedExpansionPricer(model.spec)
        return [pricer.price(p).price for p in payoffs]
    return [expansion_price(model.kernel, model.spec.curve, model.spec.window, p).price for p in payoffs]


def reference_prices(model: Model, payoffs: list[Payoff], quad: QuadConfig, mc: McConfig):
    """Reference prices and their standard errors (zero for quadrature)."""
    if model.spec.family == "exponential":
        return [(bergomi_quadrature_price(model.spec, p, quad), 0.0) for p in payoffs]
    return [(e.price, e.std_error) for e in rough_mc_prices(model.spec, payoffs, mc)]


# ---------------------------------------------------------------------------
# convergence study


@dataclass
class ConvergenceReport:
    deltas: list
    expansion: list
    reference: list
    std_errors: list
    abs_errors: list
    fitted_slope: float | None
    expected_order: float

    def to_dict(self) -> dict:
        return {
            "deltas": self.deltas,
            "expansion": self.expansion,
            "reference": self.reference,
            "std_errors": self.std_errors,
            "abs_errors": self.abs_errors,
            "fitted_slope": self.fitted_slope,
            "expected_order": self.expected_order,
        }


def fit_slope(x, y) -> float | None:
    """Least-squares slope of ``log y`` against ``log x`` over positive finite points (at least 3)."""
    pts = [(a, b) for a, b in zip(x, y) if b is not None and math.isfinite(b) and b > 0.0]
    if len(pts) < 3:
        return None
    lx = np.log([a for a, _ in pts])
    ly = np.log([b for _, b in pts])
    return float(np.polyfit(lx, ly, 1)[0])


def convergence_study(
    model: Model, payoff: Payoff, deltas, *, quad: QuadConfig | None = None, mc: McConfig | None = None,
    noise_floor: float = 0.0,
) -> ConvergenceReport:
    """Expansion and reference prices over window lengths; slope of the absolute error in ``delta``.

    Errors at or below ``noise_floor`` are excluded from the fit.
    """
    deltas = sorted(float(d) for d in deltas)
    if len(deltas) < 3:
        raise ValueError("need at least 3 window lengths")
    quad = quad or QuadConfig()
    mc = mc or McConfig()
    exp_, ref, ses, errs = [], [], [], []
    for d in deltas:
        m = model.at(delta=d)
        e = expansion_prices(m, [payoff])[0]
        try:
            r, se = reference_prices(m, [payoff], quad, mc)[0]
            err = abs(e - r)
        except (ArithmeticError, np.linalg.LinAlgError) as exc:
            warnings.warn(f"reference failed at delta={d}: {exc}", RuntimeWarning, stacklevel=2)
            r, se, err = None, None, None
        exp_.append(e)
        ref.append(r)
        ses.append(se)
        errs.append(err)
    spec = model.spec
    if spec.unit_kernel.is_constant or (spec.vol1 == 0.0 and (spec.lam == 1.0 or spec.vol2 == 0.0)):
        fit = None  # errors are pure reference noise
    else:
        fit = fit_slope(deltas, [e if e is not None and e > noise_floor else None for e in errs])
    order = 3.0 if spec.family == "exponential" or spec.shape >= 0.5 else 3.0 * spec.shape
    return ConvergenceReport(deltas, exp_, ref, ses, errs, fit, order)


# ---------------------------------------------------------------------------
# subcommands


def _dump(obj, args):
    text = json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"
    if getattr(args, "output", None):
        with open(args.output, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)


def cmd_price(args) -> int:
    cfg = _read_json(args.config)
    model = parse_model(cfg)
    payoff = parse_payoff(cfg)
    method = args.method or cfg.get("method", "expansion")
    out = {"method": method, "payoff": payoff.to_dict(), "model": model.spec.to_dict(),
           "T": model.spec.window.T, "delta": model.spec.window.delta}
    if method == "expansion":
        if model.mixed:
            res = MixedExpansionPricer(model.spec).price(payoff)
        else:
            res = expansion_price(model.kernel, model.spec.curve, model.spec.window, payoff)
        out["price"] = res.price
        out["terms"] = res.to_dict()
    elif method == "reference":
        if model.spec.family == "exponential":
            out["price"] = bergomi_quadrature_price(model.spec, payoff, _quad_config(args, cfg))
        else:
            est = rough_mc_prices(model.spec, [payoff], _mc_config(args, cfg))[0]
            out["price"] = est.price
            out["ci"] = est.to_dict()
    else:
        raise UsageError(f"unknown method {method!r}")
    _dump(out, args)
    return EXIT_OK


def _parse_strikes(text) -> list[float]:
    try:
        ks = [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError("strikes must be a comma-separated list of numbers") from None
    if not ks or any(not k > 0 for k in ks):
        raise UsageError("strikes must be positive")
    return ks


def _ivs(forward, prices, strikes, T):
    out = []
    for k, p in zip(strikes, prices):
        try:
            out.append(implied_vol(p, forward, k) / math.sqrt(T))
        except ValueError as exc:
            print(f"warning: strike {k}: {exc}", file=sys.stderr)
            out.append(None)
    return out


def cmd_smile(args) -> int:
    cfg = _read_json(args.config)
    model = parse_model(cfg)
    strikes = _parse_strikes(args.strikes)
    T = model.spec.window.T
    payoffs = [Payoff.future()] + [Payoff.call(k) for k in strikes]
    exp_ = expansion_prices(model, payoffs)
    cols = {"iv": _ivs(exp_[0], exp_[1:], strikes, T)}
    if args.reference:
        ref = [p for p, _ in reference_prices(model, payoffs, _quad_config(args, cfg), _mc_config(args, cfg))]
        cols["iv_ref"] = _ivs(ref[0], ref[1:], strikes, T)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["strike", *cols])
    for i, k in enumerate(strikes):
        w.writerow([repr(k)] + ["" if c[i] is None else repr(c[i]) for c in cols.values()])
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(buf.getvalue())
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_convergence(args) -> int:
    cfg = _read_json(args.config)
    model = parse_model(cfg)
    payoff = parse_payoff(cfg)
    if args.deltas:
        try:
            deltas = [float(s) for s in args.deltas.split(",")]
        except ValueError:
            raise UsageError("deltas must be a comma-separated list of numbers") from None
    else:
        deltas = list(np.linspace(0.05, 0.25, 10))
    if len(deltas) < 3 or any(not d > 0 for d in deltas):
        raise UsageError("need at least 3 positive window lengths")
    rep = convergence_study(model, payoff, deltas, quad=_quad_config(args, cfg), mc=_mc_config(args, cfg))
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["delta", "expansion", "reference", "std_error", "abs_error"])
            for row in zip(rep.deltas, rep.expansion, rep.reference, rep.std_errors, rep.abs_errors):
                w.writerow(["" if v is None else repr(v) for v in row])
    _dump(rep.to_dict(), args)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    slices = [] if _is_empty(args.quotes) else load_quotes(args.quotes)
    initial = tuple(_parse_strikes(args.initial)) if args.initial else (1.5, 0.5, 0.5)
    if len(initial) != 3:
        raise UsageError("initial guess needs vol1,vol2,lambda")
    res = calibrate_surface(slices, args.family, args.shape, initial, delta=args.delta)
    _dump([r.to_dict() for r in res], args)
    bad = [r for r in res if not r.converged]
    for r in bad:
        print(f"warning: slice T={r.maturity} did not converge: {r.message}", file=sys.stderr)
    return EXIT_OK


def _is_empty(path) -> bool:
    try:
        with open(path) as fh:
            return fh.read().strip() == ""
    except FileNotFoundError:
        raise UsageError(f"quotes file not found: {path}") from None


def cmd_coeffs(args) -> int:
    cfg = _read_json(args.config)
    model = parse_model(cfg)
    spec = model.spec
    out = {"model": spec.to_dict(), "T": spec.window.T, "delta": spec.window.delta}
    comps = (1, 2) if model.mixed else (1,)
    rows = []
    for j in comps:
        k = spec.kernel(j)
        if k.vol == 0.0:
            rows.append({"component": j, "mu_P": math.log(spec.curve.window_mean(spec.window)),
                         "sigma_P": 0.0, "gammas": [0.0, 0.0, 0.0]})
            continue
        pp = proxy_params(k, spec.curve, spec.window)
        g = gamma_coefficients(k, spec.curve, spec.window)
        rows.append({"component": j, "mu_P": pp.mu, "sigma_P": pp.sigma, "gammas": list(g.as_tuple())})
    if model.mixed:
        out["components"] = rows
    else:
        out.update({key: rows[0][key] for key in ("mu_P", "sigma_P", "gammas")})
    _dump(out, args)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vixexp", description="VIX futures and options by proxy expansion.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, mc=True):
        sp.add_argument("--config", required=True, help="model config JSON (times in years)")
        sp.add_argument("--output", help="also write the result to this file")
        if mc:
            sp.add_argument("--seed", type=int, help="Monte Carlo seed")
            sp.add_argument("--samples", type=int, help="Monte Carlo paths")
            sp.add_argument("--grid-points", type=int, dest="grid_points", help="window grid size")
            sp.add_argument("--nodes", type=int, help="quadrature nodes per dimension")

    sp = sub.add_parser("price", help="price the config payoff")
    common(sp)
    sp.add_argument("--method", choices=("expansion", "reference"))
    sp.set_defaults(func=cmd_price)

    sp = sub.add_parser("smile", help="implied vol smile as CSV")
    common(sp)
    sp.add_argument("--strikes", required=True, help="comma-separated VIX strikes")
    sp.add_argument("--reference", action="store_true", help="add the reference iv column")
    sp.set_defaults(func=cmd_smile)

    sp = sub.add_parser("convergence", help="error against the reference over window lengths")
    common(sp)
    sp.add_argument("--deltas", help="comma-separated window lengths (default 10 in [0.05, 0.25])")
    sp.add_argument("--csv", help="also write the per-delta table as CSV")
    sp.set_defaults(func=cmd_convergence)

    sp = sub.add_parser("calibrate", help="calibrate a mixed model to a quotes CSV")
    sp.add_argument("--quotes", required=True, help="CSV maturity_years,futures,strike,implied_vol")
    sp.add_argument("--family", choices=("power", "exponential"), default="power")
    sp.add_argument("--shape", type=float, default=0.1, help="H (power) or k (exponential)")
    sp.add_argument("--delta", type=float, default=DEFAULT_DELTA, help="window length in years")
    sp.add_argument("--initial", help="initial vol1,vol2,lambda")
    sp.add_argument("--output", help="also write the result to this file")
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("coeffs", help="proxy moments and expansion coefficients")
    sp.add_argument("--config", required=True)
    sp.add_argument("--output")
    sp.set_defaults(func=cmd_coeffs)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
