"""The derivative-of-value family g_{A,B} and its interior critical points.

For fixed model and cost, g_{A,B} is affine in (A, B):

    g(x)   = c [u1(x) / lambda1 + u2(x) / lambda2] + h'(x) / beta
    g'(x)  = c [u1(x) - u2(x)]
    g''(x) = c [lambda1 u1(x) + lambda2 u2(x)]

with c = 2 / (sigma^2 (lambda1 + lambda2)) and

    u1(x) = (A - alpha1) e^{lambda1 (x-a)} + t1(x)
    u2(x) = (B - alpha2) e^{-lambda2 (x-a)} + t2(x).

Right of the kink alpha1 = A_bar, t1 is the discounted h'' tail to +inf,
alpha2 = h'(a+) and t2 = -int_a^x e^{-lambda2 (x-y)} h''(y) dy.  Left of
the kink alpha1 = h'(a-), t1 = int_x^a e^{-lambda1 (y-x)} h''(y) dy,
alpha2 = B_low and t2 is minus the discounted h'' tail to -inf.  Written
this way every exponential factor multiplies a bounded quantity, so g stays
accurate far from the kink.  The (A, B)-independent pieces are cached per x.

Offsets p = A - A_bar and B - B_low are accepted either as floats or as
(sign, log|p|) pairs.  The solver uses the pairs: optimal coefficients can
sit e^{-900} away from a corner, which no double offset can hold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

from scipy.optimize import brentq

from .characteristic import (CharacteristicRoots, ExpConvolution, ExpTail, anchor_step,
                             characteristic_roots)
from .errors import InfeasibleCoefficientsError, NumericFailureError
from .holding_cost import HoldingCost, ModelParams

X_TOL = 1e-11
_EXPAND = 2.0
_MAX_EXPANSIONS = 20


@dataclass(frozen=True)
class GCoefficients:
    """Coefficients (A, B) of g_{A,B}.

    ``offset_A`` = A - A_bar and ``offset_B`` = B - B_low may be given
    explicitly; they then take precedence over A and B.  Optimal coefficients
    can sit closer to these corners than a double can resolve next to A_bar,
    so the solver always fills them in.
    """

    A: float
    B: float
    offset_A: float | None = None
    offset_B: float | None = None
    # log(A_bar - A) and log(B - B_low); exact even when the offsets underflow
    log_gap_A: float | None = None
    log_gap_B: float | None = None

    def to_value_coefficients(self, kern: "GKernel") -> tuple[float, float]:
        """(A1, B1) of V(x) = A1 e^{lambda1 x} + B1 e^{-lambda2 x} + V0(x)."""
        lam1, lam2 = kern.roots.lambda1, kern.roots.lambda2
        a = kern.a
        A1 = kern.c * self.A * math.exp(-lam1 * a) / (lam1 * lam1)
        B1 = -kern.c * self.B * math.exp(lam2 * a) / (lam2 * lam2)
        return A1, B1


@dataclass(frozen=True)
class CriticalPoints:
    x1: float
    x2: float


class GKernel:
    """Cached evaluator of g_{A,B} and its derivatives for one (model, cost) pair."""

    def __init__(self, m: ModelParams, h: HoldingCost, reltol: float = 1e-12, cache_size: int = 1 << 16):
        self.m, self.h = m, h
        self.roots: CharacteristicRoots = characteristic_roots(m)
        lam1, lam2 = self.roots.lambda1, self.roots.lambda2
        self.c = 2.0 / (m.sigma2 * (lam1 + lam2))
        self.a = float(h.kink)
        self.hl, self.hr = float(h.deriv_left), float(h.deriv_right)
        self.scale = 1.0 / min(lam1, lam2)
        step = anchor_step(self.roots)
        bps = h.singular_points
        h2 = h.second_deriv
        self._tail_pos = ExpTail(h2, lam1, self.a, step, +1, bps, reltol)
        self._tail_neg = ExpTail(h2, lam2, self.a, step, -1, bps, reltol)
        self._conv_right = ExpConvolution(h2, -lam2, self.a, step, bps, reltol)
        self._conv_left = ExpConvolution(h2, lam1, self.a, step, bps, reltol)
        self.A_bar = self.hr + self._tail_pos.anchor(0)
        self.B_low = self.hl - self._tail_neg.anchor(0)
        self.terms = lru_cache(maxsize=cache_size)(self._terms)

    def offsets(self, c: GCoefficients) -> tuple[tuple, tuple]:
        """(sign, log|p|) offsets of c, most precise representation first."""
        if c.log_gap_A is not None:
            qA = (-1.0, c.log_gap_A)
        else:
            qA = as_log(c.offset_A if c.offset_A is not None else c.A - self.A_bar)
        if c.log_gap_B is not None:
            qB = (1.0, c.log_gap_B)
        else:
            qB = as_log(c.offset_B if c.offset_B is not None else c.B - self.B_low)
        return qA, qB

    def coefficients(self, qA, qB) -> GCoefficients:
        qA, qB = as_log(qA), as_log(qB)
        pA, pB = log_value(qA), log_value(qB)
        return GCoefficients(self.A_bar + pA, self.B_low + pB, pA, pB,
                             qA[1] if qA[0] < 0 else None, qB[1] if qB[0] > 0 else None)

    def _terms(self, x: float) -> tuple:
        """(l1, t1, l2, t2, h'(x)) at x with l1 = lambda1 (x-a), l2 = -lambda2 (x-a)."""
        lam1, lam2, a = self.roots.lambda1, self.roots.lambda2, self.a
        l1, l2 = lam1 * (x - a), -lam2 * (x - a)
        if x >= a:
            t1 = self._tail_pos(x)
            t2 = -self._conv_right(x) if x > a else 0.0
            hp = float(self.h.deriv(x)) if x > a else self.hr
            return l1, t1, l2, t2, hp
        t1 = -self._conv_left(x)  # int_x^a e^{-lambda1 (y-a)} h''
        t2 = -self._tail_neg(x)
        return l1, t1, l2, t2, float(self.h.deriv(x))

    def _u(self, pA, pB, x: float) -> tuple[float, float, float]:
        qA, qB = as_log(pA), as_log(pB)
        l1, t1, l2, t2, hp = self.terms(float(x))
        if x >= self.a:
            u1 = _scaled_exp(qA, l1) + t1
            u2 = (log_value(qB) + (self.B_low - self.hr)) * math.exp(l2) + t2
        else:
            u1 = (log_value(qA) + (self.A_bar - self.hl)) * math.exp(l1) + t1
            u2 = _scaled_exp(qB, l2) + t2
        return u1, u2, hp

    # offset-coordinate evaluators: pA = A - A_bar, pB = B - B_low (floats or log pairs)

    def g_at(self, pA, pB, x: float) -> float:
        u1, u2, hp = self._u(pA, pB, x)
        return self.c * (u1 / self.roots.lambda1 + u2 / self.roots.lambda2) + hp / self.m.beta

    def gp_at(self, pA, pB, x: float) -> float:
        u1, u2, _ = self._u(pA, pB, x)
        return self.c * (u1 - u2)

    def gpp_at(self, pA, pB, x: float) -> float:
        u1, u2, _ = self._u(pA, pB, x)
        return self.c * (self.roots.lambda1 * u1 + self.roots.lambda2 * u2)

    def W_at(self, pA, pB, x: float) -> float:
        """(sigma^2 g'/2 + mu g + h) / beta, the antiderivative of g solving the ODE."""
        m = self.m
        u1, u2, hp = self._u(pA, pB, x)
        lam1, lam2 = self.roots.lambda1, self.roots.lambda2
        g = self.c * (u1 / lam1 + u2 / lam2) + hp / m.beta
        gp = self.c * (u1 - u2)
        return (0.5 * m.sigma2 * gp + m.mu * g + float(self.h.value(x))) / m.beta

    # plain-coordinate evaluators

    def g(self, A: float, B: float, x: float) -> float:
        return self.g_at(A - self.A_bar, B - self.B_low, x)

    def g_prime(self, A: float, B: float, x: float) -> float:
        return self.gp_at(A - self.A_bar, B - self.B_low, x)

    def g_second(self, A: float, B: float, x: float) -> float:
        return self.gpp_at(A - self.A_bar, B - self.B_low, x)

    def antiderivative(self, A: float, B: float, x: float) -> float:
        return self.W_at(A - self.A_bar, B - self.B_low, x)

    # critical points -------------------------------------------------

    def _expand(self, fn, start: float, direction: float, want_negative: bool) -> float:
        """Walk away from ``start`` until fn has the wanted sign."""
        width = self.scale
        for _ in range(_MAX_EXPANSIONS):
            x = start + direction * width
            v = fn(x)
            if (v < 0) == want_negative and v != 0:
                return x
            width *= _EXPAND
        raise NumericFailureError(f"bracket expansion from {start} exceeded {width:.3g}")

    def x1_at(self, pA, pB) -> float:
        qA, qB = as_log(pA), as_log(pB)
        width = self.hr - self.B_low
        if not (qB[0] > 0 and width > 0 and qB[1] < math.log(width)
                and self.B_low + log_value(qB) < self.A_bar + log_value(qA)):
            raise InfeasibleCoefficientsError(
                f"x1 needs B_low < B < h'(a+) and B < A; got A - A_bar = {log_value(qA)}, "
                f"B - B_low = {log_value(qB)}, B_low = {self.B_low}, h'(a+) = {self.hr}")
        fp = lambda x: self.gp_at(qA, qB, x)
        lo = self._expand(fp, self.a, -1.0, want_negative=True)
        return brentq(fp, lo, self.a, xtol=X_TOL, rtol=1e-15, maxiter=400)

    def x2_at(self, pA, pB) -> float:
        qA, qB = as_log(pA), as_log(pB)
        width = self.A_bar - self.hl
        if not (qA[0] < 0 and width > 0 and qA[1] < math.log(width)
                and self.B_low + log_value(qB) < self.A_bar + log_value(qA)):
            raise InfeasibleCoefficientsError(
                f"x2 needs h'(a-) < A < A_bar and B < A; got A - A_bar = {log_value(qA)}, "
                f"B - B_low = {log_value(qB)}, A_bar = {self.A_bar}, h'(a-) = {self.hl}")
        fp = lambda x: self.gp_at(qA, qB, x)
        hi = self._expand(fp, self.a, +1.0, want_negative=True)
        return brentq(fp, self.a, hi, xtol=X_TOL, rtol=1e-15, maxiter=400)

    def x1(self, A: float, B: float) -> float:
        return self.x1_at(A - self.A_bar, B - self.B_low)

    def x2(self, A: float, B: float) -> float:
        return self.x2_at(A - self.A_bar, B - self.B_low)


def as_log(p) -> tuple[float, float]:
    """Offset as (sign, log|p|); pairs pass through unchanged."""
    if isinstance(p, tuple):
        return p
    if p == 0.0:
        return (0.0, -math.inf)
    return (math.copysign(1.0, p), math.log(abs(p)))


def log_value(q: tuple[float, float]) -> float:
    return q[0] * math.exp(q[1]) if q[0] else 0.0


def _scaled_exp(q: tuple[float, float], log_e: float) -> float:
    """sign * exp(log|p| + log_e); saturates instead of overflowing."""
    if not q[0]:
        return 0.0
    return q[0] * math.exp(min(q[1] + log_e, 700.0))


@lru_cache(maxsize=32)
def kernel_for(m: ModelParams, h: HoldingCost) -> GKernel:
    return GKernel(m, h)


def eval_g(c: GCoefficients, m: ModelParams, h: HoldingCost, roots=None, x: float = 0.0) -> float:
    k = kernel_for(m, h)
    return k.g_at(*k.offsets(c), x)


def eval_g_prime(c: GCoefficients, m: ModelParams, h: HoldingCost, roots=None, x: float = 0.0) -> float:
    k = kernel_for(m, h)
    return k.gp_at(*k.offsets(c), x)


def eval_g_second(c: GCoefficients, m: ModelParams, h: HoldingCost, roots=None, x: float = 0.0) -> float:
    k = kernel_for(m, h)
    return k.gpp_at(*k.offsets(c), x)


def find_x1(c: GCoefficients, m: ModelParams, h: HoldingCost, roots=None) -> float:
    """Local minimiser of g left of the kink."""
    k = kernel_for(m, h)
    return k.x1_at(*k.offsets(c))


def find_x2(c: GCoefficients, m: ModelParams, h: HoldingCost, roots=None) -> float:
    """Local maximiser of g right of the kink."""
    k = kernel_for(m, h)
    return k.x2_at(*k.offsets(c))


def critical_points(c: GCoefficients, m: ModelParams, h: HoldingCost, roots=None) -> CriticalPoints:
    k = kernel_for(m, h)
    qA, qB = k.offsets(c)
    return CriticalPoints(k.x1_at(qA, qB), k.x2_at(qA, qB))
