"""Characteristic roots, exponentially weighted quadrature and the particular solution.

Everything downstream needs integrals of the form

    int e^{rate (y - origin)} f(y) dy

over finite or semi-infinite ranges, with ``f`` smooth between a few known
breakpoints.  ``exp_weighted_integral`` is an adaptive Gauss-Legendre
routine for these; ``ExpConvolution`` and ``ExpTail`` build on it to give
cheap, cached evaluations of the running convolutions that appear in the
value function and its derivative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import DivergenceError
from .holding_cost import HoldingCost, ModelParams

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(10)
_MAX_DEPTH = 48
_MAX_DOUBLINGS = 64


@dataclass(frozen=True)
class CharacteristicRoots:
    """lambda1 > 0 and -lambda2 < 0 solve sigma^2 z^2 / 2 + mu z - beta = 0."""

    lambda1: float
    lambda2: float

    @property
    def ratio(self) -> float:
        return 1.0 / (self.lambda1 + self.lambda2)


def characteristic_roots(m: ModelParams) -> CharacteristicRoots:
    s = math.sqrt(m.mu * m.mu + 2.0 * m.beta * m.sigma2)
    # pick the cancellation-free form for each root
    if m.mu >= 0:
        lam2 = (s + m.mu) / m.sigma2
        lam1 = 2.0 * m.beta / (s + m.mu)
    else:
        lam1 = (s - m.mu) / m.sigma2
        lam2 = 2.0 * m.beta / (s - m.mu)
    return CharacteristicRoots(lam1, lam2)


def _panel(f, rate, origin, a, b):
    """Gauss-Legendre estimates on [a, b] and on its two halves, one f call."""
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    q = 0.5 * half
    y = np.concatenate((mid + half * _GL_NODES,
                        (a + q) + q * _GL_NODES,
                        (mid + q) + q * _GL_NODES))
    v = np.exp(rate * (y - origin)) * np.asarray(f(y), dtype=float)
    whole = half * np.dot(_GL_WEIGHTS, v[:10])
    left = q * np.dot(_GL_WEIGHTS, v[10:20])
    right = q * np.dot(_GL_WEIGHTS, v[20:])
    scale = q * (np.dot(_GL_WEIGHTS, np.abs(v[10:20])) + np.dot(_GL_WEIGHTS, np.abs(v[20:])))
    return whole, left, right, scale


def _adaptive(f, rate, origin, a, b, reltol):
    total = 0.0
    stack = [(a, b, 0)]
    while stack:
        lo, hi, depth = stack.pop()
        whole, left, right, scale = _panel(f, rate, origin, lo, hi)
        if not math.isfinite(whole + left + right):
            raise DivergenceError(f"non-finite integrand on [{lo}, {hi}]")
        err = abs(whole - (left + right))
        if err <= reltol * scale or depth >= _MAX_DEPTH or err == 0.0:
            total += left + right
        else:
            mid = 0.5 * (lo + hi)
            stack.append((mid, hi, depth + 1))
            stack.append((lo, mid, depth + 1))
    return total


def _finite(f, rate, origin, lo, hi, cuts, reltol):
    pts = [lo] + [c for c in cuts if lo < c < hi] + [hi]
    return sum(_adaptive(f, rate, origin, p, q, reltol) for p, q in zip(pts, pts[1:]))


def exp_weighted_integral(f: Callable, rate: float, lo: float, hi: float,
                          breakpoints: Sequence[float] = (), reltol: float = 1e-10,
                          origin: float = 0.0) -> float:
    """Integral of exp(rate * (y - origin)) * f(y) for y from lo to hi.

    ``f`` must accept numpy arrays.  Either limit may be infinite; the range
    is then extended by doubling until successive truncations agree to
    ``reltol``.  A range that keeps growing raises DivergenceError.  A
    reversed range returns the negated integral.
    """
    if lo == hi:
        return 0.0
    if lo > hi:
        return -exp_weighted_integral(f, rate, hi, lo, breakpoints, reltol, origin)
    cuts = sorted(float(c) for c in breakpoints)
    if math.isinf(lo) and math.isinf(hi):
        mid = cuts[0] if cuts else origin
        return (exp_weighted_integral(f, rate, lo, mid, cuts, reltol, origin)
                + exp_weighted_integral(f, rate, mid, hi, cuts, reltol, origin))
    if math.isfinite(lo) and math.isfinite(hi):
        return _finite(f, rate, origin, lo, hi, cuts, reltol)

    direction = 1.0 if math.isinf(hi) else -1.0
    start = lo if direction > 0 else hi
    inner = [c for c in cuts if (c - start) * direction > 0]
    # integrate up to the outermost breakpoint exactly, then extend
    width = 1.0 / abs(rate) if rate != 0 else 1.0
    edge = start
    total = 0.0
    if inner:
        edge = max(inner) if direction > 0 else min(inner)
        total = _finite(f, rate, origin, min(start, edge), max(start, edge), cuts, reltol)
    for _ in range(_MAX_DOUBLINGS):
        nxt = edge + direction * width
        piece = _finite(f, rate, origin, min(edge, nxt), max(edge, nxt), (), reltol)
        if not math.isfinite(piece):
            raise DivergenceError("integrand overflowed while extending the range")
        total += piece
        end_val = abs(math.exp(rate * (nxt - origin)) * float(f(np.array([nxt]))[0]))
        if not math.isfinite(end_val):
            raise DivergenceError("integrand overflowed while extending the range")
        small = reltol * max(abs(total), 1e-300)
        if (abs(piece) <= small or piece == 0.0) and end_val * width <= max(small, 1e-300):
            return total
        edge = nxt
        width *= 2.0
    raise DivergenceError(f"no convergence after {_MAX_DOUBLINGS} range doublings (last piece {piece:.3e})")


class ExpConvolution:
    """S(x) = int_origin^x exp(rate (x - y)) f(y) dy (signed for x < origin).

    Values at anchors origin + j*step are cached and chained, so each call
    only integrates over one anchor cell.
    """

    def __init__(self, f, rate, origin, step, breakpoints=(), reltol=1e-12):
        self.f, self.rate, self.origin, self.step = f, float(rate), float(origin), float(step)
        self.breakpoints = tuple(breakpoints)
        self.reltol = reltol
        self._anchor = {0: 0.0}

    def _piece(self, x0, x1):
        # int_{x0}^{x1} exp(rate (x1 - y)) f(y) dy
        return exp_weighted_integral(self.f, -self.rate, x0, x1, self.breakpoints, self.reltol, origin=x1)

    def anchor(self, j: int) -> float:
        cache = self._anchor
        if j in cache:
            return cache[j]
        sgn = 1 if j > 0 else -1
        i = j
        while i not in cache:
            i -= sgn
        val = cache[i]
        while i != j:
            x0 = self.origin + i * self.step
            i += sgn
            x1 = self.origin + i * self.step
            val = math.exp(self.rate * (x1 - x0)) * val + self._piece(x0, x1)
            cache[i] = val
        return val

    def __call__(self, x: float) -> float:
        j = int((x - self.origin) / self.step)
        xj = self.origin + j * self.step
        return math.exp(self.rate * (x - xj)) * self.anchor(j) + self._piece(xj, x)


class ExpTail:
    """Discounted tail integral toward +inf (direction=+1) or -inf (direction=-1).

    direction=+1: T(x) = int_x^inf exp(-rate (y - x)) f(y) dy
    direction=-1: T(x) = int_-inf^x exp(-rate (x - y)) f(y) dy
    """

    def __init__(self, f, rate, origin, step, direction, breakpoints=(), reltol=1e-12):
        if rate <= 0:
            raise ValueError("tail integrals need a positive decay rate")
        self.f, self.rate, self.origin, self.step = f, float(rate), float(origin), float(step)
        self.direction = direction
        self.breakpoints = tuple(breakpoints)
        self.reltol = reltol
        self._anchor = {}

    def anchor(self, j: int) -> float:
        if j not in self._anchor:
            xj = self.origin + j * self.step
            if self.direction > 0:
                v = exp_weighted_integral(self.f, -self.rate, xj, math.inf, self.breakpoints,
                                          self.reltol, origin=xj)
            else:
                v = exp_weighted_integral(self.f, self.rate, -math.inf, xj, self.breakpoints,
                                          self.reltol, origin=xj)
            self._anchor[j] = v
        return self._anchor[j]

    def __call__(self, x: float) -> float:
        u = (x - self.origin) / self.step
        j = math.ceil(u) if self.direction > 0 else math.floor(u)
        xj = self.origin + j * self.step
        gap = abs(xj - x)
        if self.direction > 0:
            near = exp_weighted_integral(self.f, -self.rate, x, xj, self.breakpoints, self.reltol, origin=x)
        else:
            near = exp_weighted_integral(self.f, self.rate, xj, x, self.breakpoints, self.reltol, origin=x)
        return near + math.exp(-self.rate * gap) * self.anchor(j)


def anchor_step(roots: CharacteristicRoots) -> float:
    return 1.0 / max(roots.lambda1, roots.lambda2)


class ParticularSolution:
    """V0 and its first two derivatives for a fixed (model, cost) pair.

    V0(x) = c [int_a^x e^{-lambda2 (x-y)} h(y) dy - int_a^x e^{lambda1 (x-y)} h(y) dy]
    with c = 2 / (sigma^2 (lambda1 + lambda2)); V0(a) = 0.
    """

    def __init__(self, m: ModelParams, h: HoldingCost, roots: CharacteristicRoots | None = None,
                 reltol: float = 1e-12):
        self.m, self.h = m, h
        self.roots = roots or characteristic_roots(m)
        lam1, lam2 = self.roots.lambda1, self.roots.lambda2
        self.c = 2.0 / (m.sigma2 * (lam1 + lam2))
        step = anchor_step(self.roots)
        bps = h.singular_points
        self._s2 = ExpConvolution(h.value, -lam2, h.kink, step, bps, reltol)
        self._s1 = ExpConvolution(h.value, lam1, h.kink, step, bps, reltol)

    def parts(self, x: float) -> tuple[float, float]:
        return self._s2(x), self._s1(x)

    def value(self, x: float) -> float:
        s2, s1 = self.parts(x)
        return self.c * (s2 - s1)

    def deriv(self, x: float) -> float:
        s2, s1 = self.parts(x)
        return -self.c * (self.roots.lambda2 * s2 + self.roots.lambda1 * s1)

    def second_deriv(self, x: float) -> float:
        s2, s1 = self.parts(x)
        lam1, lam2 = self.roots.lambda1, self.roots.lambda2
        return self.c * (lam2 * lam2 * s2 - lam1 * lam1 * s1) - 2.0 / self.m.sigma2 * float(self.h.value(x))


class ResolventSolution:
    """Rh(x) = E int_0^inf e^{-beta t} h(x + X_t) dt, the bounded-growth particular solution.

    Rh(x) = c [int_{-inf}^x e^{-lambda2 (x-y)} h(y) dy + int_x^inf e^{-lambda1 (y-x)} h(y) dy].
    It differs from V0 by P e^{lambda1 (x-a)} + Q e^{-lambda2 (x-a)}; unlike V0
    it grows no faster than h, so far from the kink nothing cancels.
    """

    def __init__(self, m: ModelParams, h: HoldingCost, roots: CharacteristicRoots | None = None,
                 reltol: float = 1e-12):
        self.m, self.h = m, h
        self.roots = roots or characteristic_roots(m)
        lam1, lam2 = self.roots.lambda1, self.roots.lambda2
        self.c = 2.0 / (m.sigma2 * (lam1 + lam2))
        step = anchor_step(self.roots)
        bps = h.singular_points
        self._t1 = ExpTail(h.value, lam1, h.kink, step, +1, bps, reltol)
        self._t2 = ExpTail(h.value, lam2, h.kink, step, -1, bps, reltol)
        # Rh - V0 = P e^{lambda1 (x-a)} + Q e^{-lambda2 (x-a)}
        self.P = self.c * self._t1.anchor(0)
        self.Q = self.c * self._t2.anchor(0)

    def parts(self, x: float) -> tuple[float, float]:
        return self._t2(x), self._t1(x)

    def value(self, x: float) -> float:
        t2, t1 = self.parts(x)
        return self.c * (t2 + t1)

    def deriv(self, x: float) -> float:
        t2, t1 = self.parts(x)
        return self.c * (self.roots.lambda1 * t1 - self.roots.lambda2 * t2)

    def second_deriv(self, x: float) -> float:
        t2, t1 = self.parts(x)
        lam1, lam2 = self.roots.lambda1, self.roots.lambda2
        return self.c * (lam2 * lam2 * t2 + lam1 * lam1 * t1) - 2.0 / self.m.sigma2 * float(self.h.value(x))


@lru_cache(maxsize=64)
def _particular(m: ModelParams, h: HoldingCost, reltol: float) -> ParticularSolution:
    return ParticularSolution(m, h, reltol=reltol)


def particular_solution_v0(m: ModelParams, h: HoldingCost, roots: CharacteristicRoots | None,
                           x: float, reltol: float = 1e-12) -> float:
    """Particular solution of the discounted Poisson equation, zero at the kink."""
    return _particular(m, h, reltol).value(x)
