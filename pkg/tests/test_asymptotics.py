import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from thin_inductor.asymptotics import (InductanceExpansion, asymptotic_total, build_expansion,
                                       compute_l_prime, default_eps_sweep,
                                       direct_singular_energy, energy_parametric, energy_sweep,
                                       fit_log_slope, format_number, sweep_csv)
from thin_inductor.curve import circle, evaluate_frame
from thin_inductor.errors import DegenerateFit, EpsilonOutOfRange
from thin_inductor.quadrature import McSpec
from thin_inductor.singular_field import QUINTIC, SingularField
from thin_inductor.tube import make_tube

TWO_PI = 2 * np.pi


@pytest.fixture(scope="module")
def circle_lp(circle_field):
    return compute_l_prime(circle_field)


@pytest.fixture(scope="module")
def knot_lp(knot_field):
    return compute_l_prime(knot_field)


def test_circle_breakdown_terms(circle_lp):
    assert circle_lp.term_tau == 0.0
    assert circle_lp.term_log == pytest.approx(np.log(0.2), rel=1e-14)
    assert 0 < circle_lp.term_tail < np.log(2)
    assert circle_lp.term_phi > 0


def test_term_phi_semi_analytic(circle_lp):
    # theta-integrals in closed form, two xi-moments of phi'^2 by adaptive quad
    d = 0.4
    m1 = integrate.quad(lambda x: x * QUINTIC(x)[1] ** 2, 0.5, 0.75, epsabs=0, epsrel=1e-13)[0]
    m2 = integrate.quad(lambda x: x * x * QUINTIC(x)[1] ** 2, 0.5, 0.75, epsabs=0,
                        epsrel=1e-13)[0]
    oracle = (TWO_PI * (8 * np.pi**3 / 3) * m1 - TWO_PI * d * 4 * np.pi * m2) / (4 * np.pi**2)
    assert circle_lp.term_phi == pytest.approx(oracle, rel=1e-9)
    tail = integrate.quad(lambda x: QUINTIC(x)[0] ** 2 / x, 0.5, 0.75, epsabs=0, epsrel=1e-13)[0]
    assert circle_lp.term_tail == pytest.approx(tail, rel=1e-12)


def test_breakdown_sum_is_bitwise(circle_lp, knot_lp):
    for lp in (circle_lp, knot_lp):
        d = lp.as_dict()
        assert d["L_prime"] == ((lp.term_log + lp.term_phi) + lp.term_tau) + lp.term_tail
        assert lp.error <= 1e-8 * abs(lp.total)


def test_knot_breakdown(knot_lp, knot_field):
    assert knot_lp.term_tau > 0
    c = knot_lp.length / TWO_PI
    assert 0 < knot_lp.term_tail < c * np.log(2)


def test_term_tau_independent_quadrature(knot_lp, knot_field):
    # oracle: midpoint rule in s, Gauss in xi, theta integral of 1/a0 in closed form
    #   int_0^2pi dth / (A - B cos th) = 2 pi / sqrt(A^2 - B^2)
    d = knot_field.delta
    s = np.linspace(0, 1, 4001)[:-1] + 1 / 8000
    xi, wx = np.polynomial.legendre.leggauss(40)
    xi = 0.375 * (xi + 1)   # [0, 3/4]
    wx = 0.375 * wx
    fr = evaluate_frame(knot_field.tube.curve, s)
    A = fr.gprime_norm[:, None]
    B = d * xi[None, :] * fr.kappa[:, None]
    inner = TWO_PI / np.sqrt(A**2 - B**2)
    val = np.sum(wx * d**2 * xi * QUINTIC(xi)[0] ** 2 * fr.tau[:, None] ** 2 * inner) / 4000
    assert knot_lp.term_tau == pytest.approx(val / (4 * np.pi**2), rel=1e-3)


def test_delta_change_shifts_term_log(unit_circle, circle_lp):
    lp2 = compute_l_prime(SingularField(make_tube(unit_circle, delta=0.3)))
    assert lp2.term_log - circle_lp.term_log == pytest.approx(np.log(0.3 / 0.4), abs=1e-14)


def test_asymptotic_total_examples(circle_field, circle_lp):
    exp = build_expansion(circle_field)
    at_half = asymptotic_total(exp, 0.2)
    assert at_half == pytest.approx(circle_lp.term_phi + circle_lp.term_tau + circle_lp.term_tail,
                                    abs=1e-12)
    with pytest.raises(EpsilonOutOfRange):
        asymptotic_total(exp, 0.3)
    with_corr = InductanceExpansion(exp.log_coeff, exp.l_prime, exp.delta, correction=0.5)
    assert with_corr.total(0.1) - exp.total(0.1) == pytest.approx(0.5)
    exp2 = build_expansion(SingularField(make_tube(circle(2.0), delta=0.8)))
    assert exp2.log_coeff == pytest.approx(2 * exp.log_coeff)


@given(eps=st.floats(1e-8, 0.1))
def test_eps_shift_identity(circle_field, eps):
    exp = build_expansion(circle_field)
    diff = asymptotic_total(exp, eps) - asymptotic_total(exp, 2 * eps)
    assert diff == pytest.approx(exp.log_coeff * np.log(2), abs=1e-12)


def test_energy_halving_adds_log2(circle_field):
    e1 = direct_singular_energy(circle_field, 0.05).value
    e2 = direct_singular_energy(circle_field, 0.025).value
    assert e2 - e1 == pytest.approx(np.log(2), abs=0.05)


def test_outer_subbox_equals_phi_and_tail(circle_field, circle_lp):
    sub = energy_parametric(circle_field, 0.2, xi_range=(0.5, 1.0))
    assert sub == pytest.approx(circle_lp.term_phi + circle_lp.term_tail, rel=1e-10)


def test_parametric_vs_mc_at_half_delta(circle_field):
    par = direct_singular_energy(circle_field, 0.2)
    mc = direct_singular_energy(circle_field, 0.2, "cartesian_mc", McSpec(samples=200_000, seed=1))
    assert abs(par.value - mc.value) <= 3 * mc.error
    with pytest.raises(ValueError):
        direct_singular_energy(circle_field, 0.2, "voxel")


def test_circle_remainder_vanishes(circle_field, circle_lp):
    for k in (2, 3, 4, 5):
        eps = 0.4 / 2**k
        r = direct_singular_energy(circle_field, eps).value - (-np.log(eps) + circle_lp.total)
        assert abs(r) <= 1e-10


def _knot_remainder_oracle(field, eps, n_s=4000):
    # r(eps) = -(1/4pi^2) * integral over xi < eps/delta of delta^2 xi tau^2 / a0
    # (phi = 1 there); theta integral of 1/a0 in closed form
    d = field.delta
    s = (np.arange(n_s) + 0.5) / n_s
    xg, wg = np.polynomial.legendre.leggauss(20)
    top = eps / d
    xi, wx = 0.5 * top * (xg + 1), 0.5 * top * wg
    fr = evaluate_frame(field.tube.curve, s)
    A = fr.gprime_norm[:, None]
    B = d * xi[None, :] * fr.kappa[:, None]
    val = np.sum(wx * d**2 * xi * fr.tau[:, None] ** 2 * TWO_PI / np.sqrt(A**2 - B**2)) / n_s
    return -val / (4 * np.pi**2)


def test_knot_remainder_second_order(knot_field, knot_lp):
    c = knot_lp.length / TWO_PI
    res = []
    for k in (2, 3, 4):
        eps = knot_field.delta / 2**k
        r = direct_singular_energy(knot_field, eps).value - (-c * np.log(eps) + knot_lp.total)
        assert r == pytest.approx(_knot_remainder_oracle(knot_field, eps), rel=1e-3)
        res.append(abs(r))
    res = np.array(res)
    np.testing.assert_allclose(res[:-1] / res[1:], 4.0, rtol=0.02)


def test_fit_synthetic():
    eps = np.array([0.1, 0.01, 0.001])
    fit = fit_log_slope(list(zip(eps, 2 * np.log(1 / eps) + 3)))
    assert fit.slope == pytest.approx(2) and fit.intercept == pytest.approx(3)
    assert fit.max_residual < 1e-12
    with pytest.raises(DegenerateFit):
        fit_log_slope([(0.1, 1), (0.1, 2), (0.1, 3)])
    with pytest.raises(ValueError):
        fit_log_slope([(0.1, 1), (0.2, 2)])


@given(a=st.floats(-5, 5), b=st.floats(-10, 10))
def test_fit_recovers_lines(a, b):
    eps = np.geomspace(1e-1, 1e-5, 6)
    fit = fit_log_slope(list(zip(eps, a * np.log(1 / eps) + b)))
    assert fit.slope == pytest.approx(a, abs=1e-9) and fit.intercept == pytest.approx(b, abs=1e-8)


def test_sweep_slopes(circle_field, circle_field_septic, ell):
    def slope(field):
        rows = energy_sweep(field, default_eps_sweep(field.delta))
        return fit_log_slope([(r.eps, r.oracle) for r in rows]).slope

    s_q = slope(circle_field)
    assert s_q == pytest.approx(1.0, rel=0.01)
    assert abs(slope(circle_field_septic) - s_q) <= 0.01
    ell_field = SingularField(make_tube(ell))
    assert slope(ell_field) == pytest.approx(ell.length / TWO_PI, rel=0.01)


def test_sweep_csv_format(circle_field):
    rows = energy_sweep(circle_field, [0.2, 0.1, 0.05])
    text = sweep_csv(rows)
    lines = text.splitlines()
    assert lines[0] == "eps,asymptotic,oracle,residual,oracle_stderr"
    assert len(lines) == 4 and text.endswith("\n")
    assert float(lines[1].split(",")[0]) == 0.2
    assert format_number(0.1) == "0.10000000000000001"
    assert default_eps_sweep(0.4, 3) == [0.2, 0.1, 0.05]
