import math

import mpmath
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vixexp.curve_kernel import ExponentialKernel, ForwardVarianceCurve, PowerKernel, VixWindow
from vixexp.proxy_moments import (
    DegenerateProxyError,
    bergomi_gamma_closed,
    bergomi_proxy_closed,
    fdiff_constant,
    gamma_coefficients,
    gamma_coefficients_direct,
    hyp2f1_negative,
    kernel_norms,
    power_gamma_norm_constant,
    proxy_integrals,
    proxy_params,
    rough_proxy_closed,
    rough_sigma2_hypergeometric,
)

import oracles
from conftest import MONTH, flat

W = VixWindow(MONTH, MONTH)
XI = 0.04


def rel(a, b, floor=1e-300):
    return abs(a - b) / max(abs(b), floor)


# --- proxy moments ---------------------------------------------------------


def test_constant_kernel_proxy():
    for T in (0.05, 0.5, 2.0):
        w = VixWindow(T, MONTH)
        pp = proxy_params(ExponentialKernel(1.3, 0.0), flat(XI, w), w)
        assert pp.mu == pytest.approx(math.log(XI) - 1.3**2 * T / 2, rel=1e-14)
        assert pp.sigma2 == pytest.approx(1.3**2 * T, rel=1e-14)
        pp = rough_proxy_closed(0.9, 0.5, math.log(XI), w)
        assert pp.mu == pytest.approx(math.log(XI) - 0.81 * T / 2, rel=1e-13)
        assert pp.sigma2 == pytest.approx(0.81 * T, rel=1e-13)


@pytest.mark.parametrize(
    "kernel", [ExponentialKernel(2.0, 1.0), PowerKernel(1.0, 0.1), PowerKernel(0.6, 0.35), PowerKernel(1.0, 0.8)]
)
def test_closed_and_quadrature_proxy_agree(kernel):
    c = proxy_params(kernel, flat(XI, W), W, "closed")
    q = proxy_params(kernel, flat(XI, W), W, "quadrature")
    assert abs(c.mu - q.mu) <= 1e-10
    assert rel(c.sigma2, q.sigma2) <= 1e-10


@pytest.mark.parametrize("family,shape", [("exponential", 1.0), ("exponential", 7.0), ("power", 0.1), ("power", 0.3)])
def test_proxy_integrals_against_adaptive_oracle(family, shape):
    k = ExponentialKernel(1.0, shape) if family == "exponential" else PowerKernel(1.0, shape)
    drift, var = proxy_integrals(k, flat(XI, W), W)
    od, ov = oracles.proxy_integrals_unit(family, shape, W.T, W.delta)
    assert drift == pytest.approx(od, rel=1e-11)
    assert var == pytest.approx(ov, rel=1e-11)


def test_bergomi_proxy_limits():
    pp = bergomi_proxy_closed(2.0, 1e-12, math.log(XI), W)
    assert pp.sigma2 == pytest.approx(4.0 * W.T, rel=1e-10)
    # large T: sigma^2 -> omega^2 (1 - e^{-k delta})^2 / (2 k^3 delta^2)
    k, w = 1.5, VixWindow(40.0, MONTH)
    limit = 4.0 * (1 - math.exp(-k * MONTH)) ** 2 / (2 * k**3 * MONTH**2)
    assert bergomi_proxy_closed(2.0, k, 0.0, w).sigma2 == pytest.approx(limit, rel=1e-13)


def test_rough_proxy_small_window_limit():
    # sigma^2 -> T^(2H) / (2H) with a relative gap of order (delta / T)^(2H)
    H, T = 0.1, MONTH
    limit = T ** (2 * H) / (2 * H)
    gap = [1.0 - rough_proxy_closed(1.0, H, 0.0, VixWindow(T, d)).sigma2 / limit for d in (1e-7, 1e-9, 1e-11)]
    assert gap[0] > gap[1] > gap[2] > 0.0
    for g0, g1 in zip(gap, gap[1:]):
        assert g0 / g1 == pytest.approx(100.0 ** (2 * H), rel=0.02)


@pytest.mark.parametrize("d", [1e-3, 1e-6, 1e-9])
def test_rough_proxy_small_window_high_precision(d):
    mpmath.mp.dps = 40
    b, T, D = mpmath.mpf("0.6"), mpmath.mpf(1) / 12, mpmath.mpf(d)  # b = H + 1/2, H = 0.1
    f = lambda t: (((T + D - t) ** b - (T - t) ** b) / (b * D)) ** 2
    ref = float(mpmath.quad(f, [0, T - 100 * D, T - D, T]))
    assert rough_proxy_closed(1.0, 0.1, 0.0, VixWindow(MONTH, d)).sigma2 == pytest.approx(ref, rel=1e-13)


@pytest.mark.parametrize("a,b,c,z", [(-0.6, 1.6, 2.6, -1.0), (-0.9, 1.9, 2.9, -37.0), (0.3, 0.8, 1.9, -0.4)])
def test_hyp2f1_against_mpmath(a, b, c, z):
    assert hyp2f1_negative(a, b, c, z) == pytest.approx(float(mpmath.hyp2f1(a, b, c, z)), rel=1e-13)


@pytest.mark.parametrize("H", [0.05, 0.1, 0.3, 0.45])
@pytest.mark.parametrize("T", [MONTH, 0.5])
def test_rough_sigma2_hypergeometric_identity(H, T):
    w = VixWindow(T, MONTH)
    assert rough_proxy_closed(1.0, H, 0.0, w).sigma2 == pytest.approx(
        rough_sigma2_hypergeometric(1.0, H, w), rel=1e-10
    )


def test_degenerate_proxy_raises():
    with pytest.raises(DegenerateProxyError):
        proxy_params(ExponentialKernel(1.0, 1e200), flat(XI, W), W)
    assert isinstance(DegenerateProxyError("x"), ArithmeticError)


def test_nonflat_curve_uses_quadrature():
    curve = ForwardVarianceCurve([MONTH * 1.5, 1.0], [0.03, 0.06])
    with pytest.raises(ValueError):
        proxy_params(ExponentialKernel(2.0, 1.0), curve, W, "closed")
    pp = proxy_params(ExponentialKernel(2.0, 1.0), curve, W)
    assert pp.mu < math.log(curve.window_mean(W))
    assert pp.sigma > 0


# --- coefficients ----------------------------------------------------------


def test_constant_kernels_have_zero_coefficients():
    for k in (ExponentialKernel(2.0, 0.0), PowerKernel(1.0, 0.5)):
        assert gamma_coefficients(k, flat(XI, W), W).as_tuple() == (0.0, 0.0, 0.0)
    assert bergomi_gamma_closed(2.0, 0.0, W).as_tuple() == (0.0, 0.0, 0.0)


@pytest.mark.parametrize("family,shape", [("exponential", 1.0), ("exponential", 15.0), ("power", 0.1), ("power", 0.3)])
def test_coefficients_against_nested_quadrature(family, shape):
    k = ExponentialKernel(1.0, shape) if family == "exponential" else PowerKernel(1.0, shape)
    got = gamma_coefficients(k, flat(XI, W), W).as_tuple()
    want = oracles.gammas_unit(family, shape, W.T, W.delta)
    for g, o in zip(got, want):
        assert g == pytest.approx(o, rel=1e-9)


def test_bergomi_signs_and_cross_check():
    g = bergomi_gamma_closed(2.0, 1.0, W)
    assert g.gamma1 > 0 and g.gamma3 > 0 and g.gamma2 < 0
    q = gamma_coefficients(ExponentialKernel(2.0, 1.0), flat(XI, W), W, "quadrature")
    for a, b in zip(g.as_tuple(), q.as_tuple()):
        assert rel(a, b) <= 1e-8


@pytest.mark.parametrize("omega", [0.5, 2.0, 6.0])
@pytest.mark.parametrize("k", [1e-3, 0.3, 1.0, 5.0, 40.0])
@pytest.mark.parametrize("T", [MONTH, 0.5])
def test_bergomi_closed_vs_quadrature_grid(omega, k, T):
    w = VixWindow(T, MONTH)
    c = bergomi_gamma_closed(omega, k, w).as_tuple()
    q = gamma_coefficients_direct(ExponentialKernel(omega, k), flat(XI, w), w).as_tuple()
    for a, b in zip(c, q):
        assert abs(a - b) / max(abs(b), 1e-12) <= 1e-7


def test_coefficients_vanish_near_constant_kernels():
    for k in (ExponentialKernel(2.0, 1e-6), PowerKernel(1.0, 0.5 - 1e-6), PowerKernel(1.0, 0.5 + 1e-6)):
        assert max(abs(g) for g in gamma_coefficients(k, flat(XI, W), W).as_tuple()) < 1e-8


def test_power_coefficients_resolution_stable():
    k = PowerKernel(1.0, 0.1)
    a = gamma_coefficients_direct(k, flat(XI, W), W).as_tuple()
    b = gamma_coefficients_direct(k, flat(XI, W), W, fine=True).as_tuple()
    for x, y in zip(a, b):
        assert rel(x, y) <= 1e-9


@given(st.floats(0.05, 3.0), st.floats(0.1, 10.0), st.floats(0.2, 5.0))
def test_exponential_scaling_laws(omega, k, c):
    curve = flat(XI, W)
    base = gamma_coefficients(ExponentialKernel(omega, k), curve, W)
    big = gamma_coefficients(ExponentialKernel(c * omega, k), curve, W)
    assert big.gamma2 == pytest.approx(c**4 * base.gamma2, rel=1e-12)
    assert big.gamma3 == pytest.approx(c**4 * base.gamma3, rel=1e-12)
    sp = proxy_params(ExponentialKernel(omega, k), curve, W)
    sb = proxy_params(ExponentialKernel(c * omega, k), curve, W)
    assert sb.sigma2 == pytest.approx(c**2 * sp.sigma2, rel=1e-12)
    # gamma1 = omega^4 A + omega^2 B: two scalings identify A and B
    g1 = lambda v: gamma_coefficients(ExponentialKernel(v, k), curve, W).gamma1
    A = (g1(2.0) - 4.0 * g1(1.0)) / 12.0
    B = g1(1.0) - A
    assert base.gamma1 == pytest.approx(omega**4 * A + omega**2 * B, rel=1e-9)


@given(st.floats(0.05, 3.0), st.sampled_from([0.05, 0.1, 0.25, 0.4, 0.7]), st.floats(0.2, 5.0))
def test_power_scaling_laws(eta, H, c):
    curve = flat(XI, W)
    base = gamma_coefficients(PowerKernel(eta, H), curve, W)
    big = gamma_coefficients(PowerKernel(c * eta, H), curve, W)
    assert big.gamma2 == pytest.approx(c**4 * base.gamma2, rel=1e-12)
    assert big.gamma3 == pytest.approx(c**4 * base.gamma3, rel=1e-12)
    assert base.gamma1 >= 0.0 and base.gamma3 >= 0.0
    assert gamma_coefficients_direct(PowerKernel(eta, H), curve, W).gamma1 == pytest.approx(base.gamma1, rel=1e-12)


@given(st.sampled_from(["exponential", "power"]), st.floats(0.01, 0.49), st.floats(0.02, 1.0), st.floats(0.02, 0.3))
def test_nonnegative_coefficients(family, shape, T, delta):
    w = VixWindow(T, delta)
    k = ExponentialKernel(1.5, 20 * shape) if family == "exponential" else PowerKernel(1.5, shape)
    g = gamma_coefficients(k, flat(XI, w), w)
    assert g.gamma1 >= 0.0 and g.gamma3 >= 0.0


def test_nonflat_curve_coefficients_match_oracle_limit():
    # a curve with a break outside the window behaves like a flat one
    w = W
    curve = ForwardVarianceCurve([0.5 * MONTH, 1.0], [0.09, XI])
    a = gamma_coefficients(PowerKernel(1.0, 0.2), curve, w).as_tuple()
    b = gamma_coefficients(PowerKernel(1.0, 0.2), flat(XI, w), w).as_tuple()
    for x, y in zip(a, b):
        assert x == pytest.approx(y, rel=1e-12)
    # a break inside the window changes the weighting
    inside = ForwardVarianceCurve([1.5 * MONTH, 1.0], [0.03, 0.06])
    c = gamma_coefficients(ExponentialKernel(2.0, 1.0), inside, w).as_tuple()
    d = gamma_coefficients(ExponentialKernel(2.0, 1.0), flat(XI, w), w).as_tuple()
    assert c != pytest.approx(d, rel=1e-6)


def test_unknown_method_rejected():
    with pytest.raises(ValueError):
        gamma_coefficients(PowerKernel(1.0, 0.1), flat(XI, W), W, "magic")
    with pytest.raises(ValueError):
        gamma_coefficients(PowerKernel(1.0, 0.1), flat(XI, W), W, "closed")


# --- norms and small-window constants --------------------------------------


def test_constant_kernel_norms_vanish():
    n = kernel_norms(ExponentialKernel(1.0, 0.0), flat(XI, W), W)
    assert (n.gamma_norm, n.lambda_norm) == (0.0, 0.0)
    with pytest.raises(ValueError):
        kernel_norms(PowerKernel(1.0, 0.1), flat(XI, W), W, p=0.5)


@pytest.mark.parametrize("k", [0.5, 1.0, 5.0])
def test_bergomi_norm_asymptotics(k):
    omega, T, d = 2.0, MONTH, 1e-3
    w = VixWindow(T, d)
    n = kernel_norms(ExponentialKernel(omega, k), flat(XI, w), w, p=2.0)
    c_gam = omega**2 * (1 - math.exp(-2 * k * T)) / (2 * math.sqrt(3))
    c_lam = omega**2 * k * (1 - math.exp(-2 * k * T)) / (8 * math.sqrt(5))
    assert n.gamma_norm / d == pytest.approx(c_gam, rel=0.02)
    assert n.lambda_norm / d**2 == pytest.approx(c_lam, rel=0.02)


def test_rough_norm_scaling():
    H = 0.1
    lam = []
    for d in (1e-2, 1e-3):
        w = VixWindow(MONTH, d)
        lam.append(kernel_norms(PowerKernel(1.0, H), flat(XI, w), w).lambda_norm)
    slope = math.log(lam[0] / lam[1]) / math.log(10.0)
    assert abs(slope - 2 * H) <= 0.05


def test_rough_norm_constants():
    H = 0.1
    d = 1e-4
    w = VixWindow(MONTH, d)
    n = kernel_norms(PowerKernel(1.0, H), flat(XI, w), w)
    assert n.lambda_norm / (fdiff_constant(H) * d ** (2 * H)) == pytest.approx(1.0, rel=0.02)
    assert n.gamma_norm / (power_gamma_norm_constant(H) * d ** (2 * H)) == pytest.approx(1.0, rel=0.02)


def test_fdiff_against_nested_quadrature():
    # frozen from oracles.fdiff_nested(0.3, 1.0)
    assert fdiff_constant(0.3, 1.0) == pytest.approx(0.010033071594840254, rel=1e-6)


@pytest.mark.parametrize("H,p", [(0.1, 2.0), (0.7, 1.5)])
def test_fdiff_nested_oracle_live(H, p):
    assert fdiff_constant(H, p) == pytest.approx(oracles.fdiff_nested(H, p), rel=1e-6)
    assert fdiff_constant(H, p) > 0.0


def test_fdiff_domain():
    with pytest.raises(ValueError):
        fdiff_constant(0.5)
    with pytest.raises(ValueError):
        fdiff_constant(0.2, p=0.5)
