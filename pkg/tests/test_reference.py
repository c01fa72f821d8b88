import math

import numpy as np
import pytest
from scipy.special import hyp2f1

from vixexp.curve_kernel import ExponentialKernel, PowerKernel, VixWindow
from vixexp.expansion import Payoff, expansion_price
from vixexp.mixed import MixedModelSpec, single_model_spec
from vixexp.reference import (
    McConfig,
    McEstimate,
    QuadConfig,
    UnsupportedModelError,
    _factor,
    bergomi_quadrature_price,
    mc_grid,
    reference_price,
    rough_mc_price,
    rough_mc_prices,
    unit_covariance,
)

import oracles
from conftest import MONTH, flat

W = VixWindow(MONTH, MONTH)
SMALL = McConfig(samples=20_000, grid_points=60, seed=5, chunk=5_000, pilot=5_000)


def bergomi(v1, v2, lam, T=MONTH, delta=MONTH, k=1.0, xi=0.04):
    w = VixWindow(T, delta)
    return MixedModelSpec("exponential", k, v1, v2, lam, flat(xi, w), w)


def rough(v1, v2, lam, H=0.1, T=MONTH, xi=0.235**2):
    w = VixWindow(T, MONTH)
    return MixedModelSpec("power", H, v1, v2, lam, flat(xi, w), w)


def test_family_checks():
    with pytest.raises(UnsupportedModelError):
        bergomi_quadrature_price(rough(1.0, 0.0, 1.0), Payoff.future())
    with pytest.raises(UnsupportedModelError):
        rough_mc_price(bergomi(1.0, 0.0, 1.0), Payoff.future(), SMALL)
    with pytest.raises(ValueError):
        QuadConfig(time_nodes=1)
    with pytest.raises(ValueError):
        McConfig(samples=0)
    with pytest.raises(ValueError):
        McConfig(grid_points=1)


@pytest.mark.parametrize("payoff", [Payoff.future(), Payoff.call(0.19), Payoff.put(0.22)])
def test_constant_kernel_quadrature_is_exact(payoff):
    spec = bergomi(1.7, 0.0, 1.0, k=0.0)
    v2 = 1.7**2 * MONTH
    mu = math.log(0.04) - v2 / 2
    kink = None if payoff.strike is None else (2 * math.log(payoff.strike) - mu) / math.sqrt(v2)
    exact = oracles.lognormal_expectation(payoff, mu, math.sqrt(v2), kink)
    assert bergomi_quadrature_price(spec, payoff) == pytest.approx(exact, rel=1e-10)


def test_scenario3_value_at_one_twelfth():
    # regression at the default window length of 1/12
    assert bergomi_quadrature_price(bergomi(0.5, 6.0, 0.3), Payoff.future()) == pytest.approx(0.1726891, abs=1e-7)


@pytest.mark.parametrize(
    "spec_args,T,value",
    [
        ((0.5, 6.0, 0.3), 3 * MONTH, 0.145976),
        ((0.5, 6.0, 0.3), 6 * MONTH, 0.130503),
        ((10.0, 2.0, 0.2), MONTH, 0.181527),
        ((10.0, 2.0, 0.2), 3 * MONTH, 0.165480),
        ((10.0, 2.0, 0.2), 6 * MONTH, 0.155141),
    ],
)
def test_published_mixed_bergomi_futures_with_30_day_window(spec_args, T, value):
    # the published term structure is reproduced with a 30/365 window
    spec = bergomi(*spec_args, T=T, delta=30 / 365)
    assert bergomi_quadrature_price(spec, Payoff.future()) == pytest.approx(value, abs=1e-6)


def test_quadrature_self_convergence():
    spec = bergomi(10.0, 2.0, 0.2)
    atm = bergomi_quadrature_price(spec, Payoff.future())
    a = bergomi_quadrature_price(spec, Payoff.call(atm), QuadConfig(80, 80))
    b = bergomi_quadrature_price(spec, Payoff.call(atm), QuadConfig(160, 160))
    assert abs(a - b) <= 1e-9 * abs(b)
    for k in (0.5, 5.0, 15.0):
        spec = bergomi(2.0, 0.0, 1.0, k=k, xi=0.235**2)
        f = bergomi_quadrature_price(spec, Payoff.future())
        for p in (Payoff.future(), Payoff.call(f), Payoff.put(f)):
            a = bergomi_quadrature_price(spec, p, QuadConfig(80, 80))
            b = bergomi_quadrature_price(spec, p, QuadConfig(160, 160))
            assert abs(a - b) <= 1e-8 * abs(b)


def test_quadrature_matches_expansion_closely():
    spec = bergomi(2.0, 0.0, 1.0, xi=0.235**2)
    k = ExponentialKernel(2.0, 1.0)
    for p in (Payoff.future(), Payoff.call(0.23), Payoff.put(0.23)):
        ref = bergomi_quadrature_price(spec, p)
        exp = expansion_price(k, spec.curve, spec.window, p).price
        assert exp == pytest.approx(ref, rel=1e-4)


def test_plain_hermite_outer_option():
    spec = bergomi(2.0, 0.0, 1.0)
    f = bergomi_quadrature_price(spec, Payoff.future(), QuadConfig(outer="hermite"))
    assert f == pytest.approx(bergomi_quadrature_price(spec, Payoff.future()), rel=1e-12)


def _cov_oracle(H, T, ui, uj):
    """int_0^T (ui - t)^a (uj - t)^a dt with a = H - 1/2 via the Gauss hypergeometric function."""
    a = H - 0.5
    lo, hi = min(ui, uj), max(ui, uj)
    d = hi - lo
    if d == 0.0:
        return (lo ** (2 * H) - (lo - T) ** (2 * H)) / (2 * H)

    def G(x):
        return d**a * x ** (a + 1) / (a + 1) * hyp2f1(-a, a + 1, a + 2, -x / d)

    return G(lo) - G(lo - T)


@pytest.mark.parametrize("H", [0.1, 0.3, 0.7])
def test_covariance_matches_hypergeometric_oracle(H):
    off = mc_grid(W, 12)
    cov = unit_covariance(PowerKernel(1.0, H), W, off)
    for i in range(0, 12, 3):
        for j in range(0, 12, 2):
            want = _cov_oracle(H, W.T, W.T + off[i], W.T + off[j])
            assert cov[i, j] == pytest.approx(want, rel=1e-10)
    assert np.array_equal(cov, cov.T)


def test_midpoint_grid():
    off = mc_grid(W, 4)
    assert off == pytest.approx(np.array([0.5, 1.5, 2.5, 3.5]) * MONTH / 4)


def test_factor_jitter_and_failure():
    v = np.array([1.0, 2.0, 3.0])
    psd = np.outer(v, v)  # rank one: needs jitter
    L = _factor(psd)
    assert L @ L.T == pytest.approx(psd, abs=1e-10)
    with pytest.raises(np.linalg.LinAlgError):
        _factor(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_flat_power_kernel_monte_carlo_is_exact():
    spec = rough(1.0, 0.0, 1.0, H=0.5)
    for p in (Payoff.future(), Payoff.call(0.2), Payoff.put(0.24)):
        est = rough_mc_price(spec, p, SMALL)
        exact = expansion_price(PowerKernel(1.0, 0.5), spec.curve, spec.window, p).price
        assert abs(est.price - exact) <= 3 * est.std_error + 1e-13
        assert est.std_error < 1e-12


def test_mc_estimate_fields():
    est = rough_mc_price(rough(1.0, 0.0, 1.0), Payoff.call(0.2), SMALL)
    assert isinstance(est, McEstimate)
    assert est.ci95_halfwidth == pytest.approx(1.96 * est.std_error, rel=1e-15)
    assert est.samples_used == SMALL.samples
    assert est.variance_reduction_factor > 1.0
    assert set(est.to_dict()) == {"price", "std_error", "ci95_halfwidth", "samples_used", "variance_reduction_factor"}


def test_mc_is_deterministic_across_workers(monkeypatch):
    spec = rough(1.4, 0.7, 0.3)
    payoffs = [Payoff.future(), Payoff.call(0.2)]
    runs = []
    for threads in ("1", "3", "1"):
        monkeypatch.setenv("VIXEXP_THREADS", threads)
        runs.append(rough_mc_prices(spec, payoffs, SMALL))
    assert runs[0] == runs[1] == runs[2]
    other = rough_mc_prices(spec, payoffs, McConfig(**{**SMALL.__dict__, "seed": 6}))
    assert other[0].price != runs[0][0].price
    monkeypatch.setenv("VIXEXP_THREADS", "many")
    with pytest.raises(ValueError):
        rough_mc_prices(spec, payoffs, SMALL)


def test_control_variate_never_hurts():
    spec = rough(1.0, 0.0, 1.0)
    cfg = dict(samples=4000, chunk=2000, pilot=2000, grid_points=50)
    vrf = [rough_mc_price(spec, Payoff.call(0.2), McConfig(seed=s, **cfg)).variance_reduction_factor for s in range(20)]
    assert min(vrf) >= 0.99
    plain = rough_mc_price(spec, Payoff.call(0.2), McConfig(seed=0, control_variate=False, **cfg))
    assert plain.variance_reduction_factor == 1.0


def test_mc_agrees_with_expansion_single_model():
    spec = rough(1.0, 0.0, 1.0)
    cfg = McConfig(samples=50_000, grid_points=150, seed=2)
    k = PowerKernel(1.0, 0.1)
    for p, tol in ((Payoff.future(), 0.005), (Payoff.call(0.2), 0.003), (Payoff.put(0.2), 0.014)):
        est = rough_mc_price(spec, p, cfg)
        exp = expansion_price(k, spec.curve, spec.window, p).price
        assert abs(exp - est.price) <= tol * est.price + 3 * est.std_error


def test_weak_error_shrinks_with_grid():
    # common random numbers across grid sizes: differences halve roughly with n
    spec = rough(1.0, 0.0, 1.0)
    prices = [
        rough_mc_price(spec, Payoff.future(), McConfig(samples=100_000, grid_points=n, seed=3)).price
        for n in (75, 150, 300)
    ]
    d1, d2 = abs(prices[0] - prices[1]), abs(prices[1] - prices[2])
    assert d2 < d1 < 1e-5


def test_reference_dispatch():
    assert reference_price(bergomi(2.0, 0.0, 1.0), Payoff.future()) == bergomi_quadrature_price(
        bergomi(2.0, 0.0, 1.0), Payoff.future()
    )
    assert isinstance(reference_price(rough(1.0, 0.0, 1.0), Payoff.future(), mc=SMALL), McEstimate)


def test_single_model_spec_round_trip():
    s = single_model_spec(PowerKernel(0.8, 0.2), flat(0.04, W), W)
    assert (s.family, s.shape, s.vol1, s.lam) == ("power", 0.2, 0.8, 1.0)
