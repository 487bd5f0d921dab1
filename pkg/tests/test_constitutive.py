import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relaxlimit.constitutive import (
    ConstitutiveError,
    check_growth_H,
    check_hypothesis_A,
    check_hypothesis_B,
    make_arctan_stress,
    make_cubic_stress,
    make_exponential_law,
    make_gamma_law,
    make_polynomial_stress,
    make_tabulated_law,
)

rho_st = st.floats(0.1, 10.0)


def test_gamma_law_examples():
    _, h = make_gamma_law(1, 2)
    np.testing.assert_allclose(h.h(3.0), 9.0, rtol=0, atol=1e-14)
    _, h1 = make_gamma_law(1, 1)
    assert h1.h(1.0) == 0.0
    law, h = make_gamma_law(2, 3)
    np.testing.assert_allclose(h.d2h(2.0), 12.0, rtol=1e-15)
    np.testing.assert_allclose(h.d2h(2.0), law.dp(2.0) / 2.0, rtol=1e-15)


def test_gamma_law_rejects_bad_parameters():
    with pytest.raises(ConstitutiveError):
        make_gamma_law(0.0, 2)
    with pytest.raises(ConstitutiveError):
        make_gamma_law(1.0, 0.5)


@pytest.mark.parametrize("k,g", [(1, 2), (2, 3), (0.5, 1.4), (1, 1)])
def test_energy_relations(k, g):
    law, h = make_gamma_law(k, g)
    r = np.geomspace(0.1, 10, 50)
    np.testing.assert_allclose(h.d2h(r), law.dp(r) / r, rtol=1e-13)
    np.testing.assert_allclose(r * h.dh(r), law.p(r) + h.h(r), rtol=1e-13)
    if g > 1:
        np.testing.assert_allclose(h.h(r), law.p(r) / (g - 1), rtol=1e-14)


@settings(max_examples=200, deadline=None)
@given(rho=rho_st, k=st.floats(0.2, 5.0), g=st.floats(1.0, 4.0))
def test_finite_difference_derivatives(rho, k, g):
    law, h = make_gamma_law(k, g)
    step = 1e-5 * rho
    fd = (law.p(rho + step) - law.p(rho - step)) / (2 * step)
    np.testing.assert_allclose(fd, law.dp(rho), rtol=1e-6)
    fd2 = (law.dp(rho + step) - law.dp(rho - step)) / (2 * step)
    np.testing.assert_allclose(fd2, law.d2p(rho), rtol=1e-6, atol=1e-9)


def test_tabulated_energy_matches_closed_form():
    law, h = make_tabulated_law(lambda r: np.asarray(r, float) ** 2, lambda r: 2.0 * np.asarray(r, float),
                                lambda r: 2.0 + 0.0 * np.asarray(r, float))
    _, hg = make_gamma_law(1, 2)
    r = np.array([0.2, 1.0, 3.0, 7.5])
    # anchored at rho = 1: h = rho^2 - rho differs from rho^2 by an affine function
    np.testing.assert_allclose(h.h(r), hg.h(r) - r, rtol=1e-11)
    np.testing.assert_allclose(r * h.dh(r), law.p(r) + h.h(r), rtol=1e-11)
    rb = np.array([1.5, 0.7, 2.0, 9.0])
    np.testing.assert_allclose(h.relative(r, rb), hg.relative(r, rb), rtol=1e-12)


def test_exponential_energy_against_mpmath():
    law, h = make_exponential_law()
    for r in (0.5, 2.0, 6.0):
        with mpmath.workdps(30):
            e = mpmath.quad(lambda s: mpmath.exp(s) / s ** 2, [1, r])
            want = float(r * e)
        np.testing.assert_allclose(h.h(r), want, rtol=1e-11)


@settings(max_examples=300, deadline=None)
@given(rho=rho_st, rb=rho_st, g=st.sampled_from([1.0, 1.4, 2.0, 3.0]))
def test_relative_energy_matches_high_precision(rho, rb, g):
    _, h = make_gamma_law(1.0, g)
    # 80 digits: the literal remainder cancels ~2 log10|rho - rb| digits
    with mpmath.workdps(80):
        R, B, G = mpmath.mpf(rho), mpmath.mpf(rb), mpmath.mpf(g)
        if g == 1:
            f = lambda s: s * mpmath.log(s)  # noqa: E731
            df = lambda s: mpmath.log(s) + 1  # noqa: E731
        else:
            f = lambda s: s ** G / (G - 1)  # noqa: E731
            df = lambda s: G / (G - 1) * s ** (G - 1)  # noqa: E731
        want = float(f(R) - f(B) - df(B) * (R - B))
        want_dh = float(df(R) - df(B))
    np.testing.assert_allclose(h.relative(rho, rb), want, rtol=1e-13, atol=0)
    np.testing.assert_allclose(h.dh_difference(rho, rb), want_dh, rtol=1e-13, atol=1e-300)
    assert h.relative(rho, rb) >= 0


def test_relative_quotient_continuous_at_diagonal():
    _, h = make_gamma_law(1, 1.4)
    rb = 2.0
    d = np.array([1e-9, 1e-6, 1e-3])
    np.testing.assert_allclose(h.relative_quotient(rb + d * rb, rb), 0.5 * h.d2h(rb), rtol=1e-3)
    np.testing.assert_allclose(h.relative_quotient(rb, rb), 0.5 * h.d2h(rb), rtol=1e-15)


def test_hypothesis_A():
    rho = np.linspace(0.1, 10, 100)
    a = check_hypothesis_A(make_gamma_law(1, 2)[0], rho)
    assert a.holds
    np.testing.assert_allclose(a.constant, 1.0, rtol=1e-14)
    a1 = check_hypothesis_A(make_gamma_law(1, 1)[0], rho)
    assert a1.holds and a1.constant == 0.0
    # ratio rho p''/p' = rho is unbounded for exp(rho)
    e = check_hypothesis_A(make_exponential_law()[0], np.linspace(1, 50, 50))
    assert not e.holds
    assert e.witness is not None and e.witness > 10.0


def test_hypothesis_B():
    b = check_hypothesis_B(make_gamma_law(2, 3)[0], 2, 3)
    assert b.holds and b.constant == pytest.approx(0.0, abs=1e-14)
    assert not check_hypothesis_B(make_gamma_law(1, 2)[0], 1, 3).holds
    law, _ = make_tabulated_law(lambda r: r ** 2 + r, lambda r: 2 * r + 1, lambda r: 2 + 0 * r)
    tail = np.geomspace(1e2, 1e6, 64)
    b = check_hypothesis_B(law, 1, 2, tail)
    assert b.holds
    # (2 rho + 1)/(2 rho) - 1 = 1/(2 rho) at the last tail point
    np.testing.assert_allclose(b.constant, 0.5 / tail[-1], rtol=1e-6)


def test_growth_H():
    cube = make_polynomial_stress((0, 0, 0, 1))
    assert check_growth_H(cube, 3).holds is False  # tau'(0) = 0: not strictly increasing
    report = check_growth_H(cube, 3, tol=1e-2)
    assert report.constant == pytest.approx(0.0, abs=1e-14)
    assert check_growth_H(make_arctan_stress(), 1).holds
    assert not check_growth_H(make_cubic_stress(), 2).holds
    assert check_growth_H(make_cubic_stress(), 3).holds


@settings(max_examples=200, deadline=None)
@given(u=st.floats(-3, 3), ub=st.floats(-3, 3))
def test_stress_antiderivative_and_relatives(u, ub):
    for s in (make_cubic_stress(), make_arctan_stress()):
        with mpmath.workdps(30):
            want = float(mpmath.quad(lambda t: float(s.tau(float(t))), [0, u])) if u != 0 else 0.0
        np.testing.assert_allclose(s.W(u), want, rtol=1e-10, atol=1e-12)
        W_rel = s.W(u) - s.W(ub) - s.tau(ub) * (u - ub)
        np.testing.assert_allclose(s.energy_relative(u, ub), W_rel, rtol=1e-8, atol=1e-10)
        assert s.energy_relative(u, ub) >= 0
        np.testing.assert_allclose(s.difference(u, ub), s.tau(u) - s.tau(ub), rtol=1e-10, atol=1e-12)


def test_exponential_relative_energy_wide_pairs():
    # h'' = e^rho / rho: the pole at 0 needs graded quadrature when rho/rhobar is large
    _, h = make_exponential_law()
    pairs = [(0.1, 10.0), (10.0, 0.1), (0.5, 0.6), (1e-3, 3.0), (7.0, 7.0 + 1e-9)]
    for r, b in pairs:
        with mpmath.workdps(60):
            want = mpmath.quad(lambda s: (r - s) * mpmath.exp(s) / s, [b, r])
        np.testing.assert_allclose(h.relative(r, b), float(want), rtol=1e-12)
        with mpmath.workdps(60):
            want_d = mpmath.ei(r) - mpmath.ei(b)
        np.testing.assert_allclose(h.dh_difference(r, b), float(want_d), rtol=1e-12)


@pytest.mark.parametrize("u,ub", [(3.0, -3.0), (100.0, -2.0), (0.1, 0.1 + 1e-12), (-50.0, 40.0)])
def test_arctan_stress_differences(u, ub):
    s = make_arctan_stress()
    with mpmath.workdps(40):
        U, B = mpmath.mpf(u), mpmath.mpf(ub)
        tau = lambda x: x + mpmath.atan(x)  # noqa: E731
        W = lambda x: x * x / 2 + x * mpmath.atan(x) - mpmath.log(1 + x * x) / 2  # noqa: E731
        d = float(tau(U) - tau(B))
        w = float(W(U) - W(B) - tau(B) * (U - B))
    np.testing.assert_allclose(s.difference(u, ub), d, rtol=1e-13)
    np.testing.assert_allclose(s.energy_relative(u, ub), w, rtol=1e-12)
