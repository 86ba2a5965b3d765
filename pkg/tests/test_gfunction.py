import math

import pytest
from scipy.optimize import brentq
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from bandopt import (GCoefficients, ModelParams, critical_points, eval_g, eval_g_prime, eval_g_second,
                     find_x1, find_x2, make_linear, make_piecewise_poly, make_quadratic)
from bandopt.errors import InfeasibleCoefficientsError
from bandopt.gfunction import GKernel, as_log, kernel_for, log_value

from oracles import QUAD, g_textbook, lin_g, quad_g, quad_v0

M = ModelParams(**QUAD)
HQ = make_quadratic(0, 1, 0, 1)
HL = make_linear(1, 1)

# quadratic h with h1 = 0.5, h2 = 1 on the right and p1 = 0.3, p2 = 0.4 on the left
HPW = make_piecewise_poly([(-math.inf, 0.0, [0, -0.3, 0.4]), (0.0, math.inf, [0, 0.5, 1.0])])
MD = ModelParams(mu=0.6, sigma2=1.3, beta=0.8, K=1.0, k=0.2, L=1.0, l=0.3)


def test_linear_example():
    assert eval_g(GCoefficients(1.0, 1.0), M, HL, None, 2.0) == pytest.approx(1.0, abs=1e-14)


def test_quadratic_examples():
    c = GCoefficients(0.0, 0.0)
    assert eval_g(c, M, HQ, None, 1.0) == pytest.approx(2 - 2 * math.sinh(1), rel=1e-12)
    assert round(eval_g(c, M, HQ, None, 1.0), 6) == -0.350402
    assert eval_g(c, M, HQ, None, 0.0) == pytest.approx(0.0, abs=1e-15)


def test_zero_coefficients_give_v0_derivative():
    c = GCoefficients(0.0, 0.0)
    for x in (-2.0, -0.3, 0.7, 3.0):
        fd = (quad_v0(x + 1e-5) - quad_v0(x - 1e-5)) / 2e-5
        assert eval_g(c, M, HQ, None, x) == pytest.approx(fd, abs=1e-8)


@settings(max_examples=60, deadline=None)
@given(A=st.floats(-3, 3), B=st.floats(-3, 3), x=st.floats(-12, 12))
def test_closed_forms(A, B, x):
    c = GCoefficients(A, B)
    scale = 1 + math.exp(abs(x))
    assert eval_g(c, M, HQ, None, x) == pytest.approx(quad_g(A, B, x), abs=1e-12 * scale)
    assert eval_g(c, M, HL, None, x) == pytest.approx(lin_g(A, B, x), abs=1e-12 * scale)


@settings(max_examples=40, deadline=None)
@given(A=st.floats(-2, 2), B=st.floats(-2, 2), x=st.floats(-4, 4))
def test_matches_textbook_quadrature(A, B, x):
    assume(abs(x) > 1e-6)
    k = kernel_for(MD, HPW)
    ref = g_textbook(A, B, x, lambda y: float(HPW.deriv(y)), lambda y: float(HPW.second_deriv(y)),
                     MD.mu, MD.sigma2, MD.beta, 0.0, HPW.deriv_left, HPW.deriv_right)
    assert k.g(A, B, x) == pytest.approx(ref, rel=1e-9, abs=1e-10 * (1 + math.exp(2 * abs(x))))


@settings(max_examples=40, deadline=None)
@given(A=st.floats(-2, 2), B=st.floats(-2, 2), x=st.floats(-5, 5))
def test_ode(A, B, x):
    assume(abs(x) > 1e-3)
    c = GCoefficients(A, B)
    g = eval_g(c, MD, HPW, None, x)
    g1 = eval_g_prime(c, MD, HPW, None, x)
    g2 = eval_g_second(c, MD, HPW, None, x)
    res = 0.5 * MD.sigma2 * g2 + MD.mu * g1 - MD.beta * g + float(HPW.deriv(x))
    assert abs(res) <= 1e-6 * (1 + abs(g))
    # derivative fields agree with finite differences
    hstep = 1e-5
    fd = (eval_g(c, MD, HPW, None, x + hstep) - eval_g(c, MD, HPW, None, x - hstep)) / (2 * hstep)
    assert g1 == pytest.approx(fd, abs=1e-6 * (1 + abs(g1)))


def test_continuity_at_kink():
    k = kernel_for(MD, HPW)
    for A, B in ((0.3, -0.2), (1.5, 1.0), (-1.0, 2.0)):
        assert k.g(A, B, 1e-12) == pytest.approx(k.g(A, B, -1e-12), abs=1e-10)
        assert k.g_prime(A, B, 1e-12) == pytest.approx(k.g_prime(A, B, -1e-12), abs=1e-10)


def test_critical_points_symmetric_instance():
    c = GCoefficients(1.0, -1.0)
    cp = critical_points(c, M, HQ)
    assert cp.x1 < 0 < cp.x2
    assert cp.x2 == pytest.approx(-cp.x1, rel=1e-10)
    assert eval_g_prime(c, M, HQ, None, cp.x1) == pytest.approx(0, abs=1e-10)
    # g'(x) = 2 - 2 cosh x + cosh x for A = 1, B = -1, so x2 = acosh 2
    x2 = brentq(lambda x: 2 - 2 * math.cosh(x) + 0.5 * (math.exp(x) + math.exp(-x)), 1e-9, 10, xtol=1e-15)
    assert cp.x2 == pytest.approx(x2, rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(fa=st.floats(0.05, 0.95), fb=st.floats(0.05, 0.95))
def test_critical_point_signs(fa, fb):
    k = kernel_for(MD, HPW)
    A = k.hl + fa * (k.A_bar - k.hl)
    B = k.B_low + fb * (k.hr - k.B_low)
    assume(B < A)
    c = GCoefficients(A, B)
    x1, x2 = find_x1(c, MD, HPW), find_x2(c, MD, HPW)
    assert x1 < k.a < x2
    assert eval_g_second(c, MD, HPW, None, x1) > 0
    assert eval_g_second(c, MD, HPW, None, x2) < 0
    assert eval_g_prime(c, MD, HPW, None, 0.5 * (x1 + k.a)) > 0
    assert eval_g_prime(c, MD, HPW, None, 0.5 * (x2 + k.a)) > 0


def test_critical_point_preconditions():
    k = kernel_for(M, HQ)
    with pytest.raises(InfeasibleCoefficientsError):
        find_x1(GCoefficients(1.0, k.B_low - 0.1), M, HQ)
    with pytest.raises(InfeasibleCoefficientsError):
        find_x2(GCoefficients(k.A_bar + 0.1, -1.0), M, HQ)
    with pytest.raises(InfeasibleCoefficientsError):
        find_x2(GCoefficients(-0.5, 0.0), M, HQ)  # B > A


def test_log_offsets_agree_with_floats():
    k = kernel_for(MD, HPW)
    pA, pB = -0.37, 0.22
    for x in (-3.0, -0.5, 0.4, 2.5):
        assert k.g_at(as_log(pA), as_log(pB), x) == k.g_at(pA, pB, x)
    c = k.coefficients((-1.0, -900.0), (1.0, -800.0))
    assert c.log_gap_A == -900.0 and c.log_gap_B == -800.0
    assert c.A == k.A_bar and c.B == k.B_low
    # far from the kink the tiny offsets still matter
    x = 900.0 / k.roots.lambda1
    g_deep = k.g_at(*k.offsets(c), x)
    g_zero = k.g_at(0.0, 0.0, x)
    assert g_deep < g_zero - 1e-3
    assert log_value((0.0, -math.inf)) == 0.0


def test_kernel_corners():
    k = GKernel(M, HQ)
    assert k.A_bar == pytest.approx(2.0, rel=1e-12)
    assert k.B_low == pytest.approx(-2.0, rel=1e-12)
    kl = GKernel(M, HL)
    assert kl.A_bar == 1.0 and kl.B_low == -1.0
