"""Closed-form cost of a control band policy and the QVI verification check.

For a band d < D < U < u the policy cost on [d, u] is

    V(x) = A1 e^{lambda1 x} + B1 e^{-lambda2 x} + V0(x),

with (A1, B1) fixed by the two jump conditions V(d) - V(D) = K + k(D - d)
and V(u) - V(U) = L + l(u - U).  Outside the band the cost is linear in the
overshoot.

Internally V is written as Ac e^{lambda1 (x-u)} + Bc e^{-lambda2 (x-d)} + Rh(x)
with Rh the resolvent of h (same ODE, growth of h only).  Both exponentials
are at most 1 on the band and Rh does not cancel against them, so wide or
distant bands stay accurate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .characteristic import CharacteristicRoots, ResolventSolution, characteristic_roots
from .errors import DegenerateBandError
from .free_boundary import ControlBand
from .holding_cost import HoldingCost, ModelParams

_particulars: dict = {}


def _particular(m: ModelParams, h: HoldingCost) -> ResolventSolution:
    key = (m, id(h))
    ps = _particulars.get(key)
    if ps is None or ps.h is not h:
        ps = ResolventSolution(m, h)
        _particulars[key] = ps
    return ps


@dataclass(frozen=True, eq=False)
class PolicyValue:
    """Cost function of one control band.

    ``A1``/``B1`` are the coefficients relative to V0; they may be inf/0 for
    wide bands or bands far from the origin, in which case only the centred
    pair ``Ac``/``Bc`` (multiplying e^{lambda1 (x-u)} and e^{-lambda2 (x-d)},
    on top of the resolvent Rh) is meaningful.
    """

    A1: float
    B1: float
    band: ControlBand
    Ac: float
    Bc: float
    m: ModelParams
    h: HoldingCost
    roots: CharacteristicRoots

    def _exps(self, x: float) -> tuple[float, float]:
        b = self.band
        return math.exp(self.roots.lambda1 * (x - b.u)), math.exp(-self.roots.lambda2 * (x - b.d))

    def V(self, x: float) -> float:
        e1, e2 = self._exps(x)
        return self.Ac * e1 + self.Bc * e2 + _particular(self.m, self.h).value(x)

    def dV(self, x: float) -> float:
        e1, e2 = self._exps(x)
        lam1, lam2 = self.roots.lambda1, self.roots.lambda2
        return lam1 * self.Ac * e1 - lam2 * self.Bc * e2 + _particular(self.m, self.h).deriv(x)

    def d2V(self, x: float) -> float:
        e1, e2 = self._exps(x)
        lam1, lam2 = self.roots.lambda1, self.roots.lambda2
        return (lam1 * lam1 * self.Ac * e1 + lam2 * lam2 * self.Bc * e2
                + _particular(self.m, self.h).second_deriv(x))

    def boundary_residuals(self) -> tuple[float, float]:
        b, m = self.band, self.m
        r1 = self.V(b.d) - self.V(b.D) - (m.K + m.k * (b.D - b.d))
        r2 = self.V(b.u) - self.V(b.U) - (m.L + m.l * (b.u - b.U))
        return r1, r2


def policy_value(band: ControlBand, m: ModelParams, h: HoldingCost,
                 roots: CharacteristicRoots | None = None) -> PolicyValue:
    roots = roots or characteristic_roots(m)
    lam1, lam2 = roots.lambda1, roots.lambda2
    ps = _particular(m, h)
    d, D, U, u = band.as_tuple()
    e1 = lambda x: math.exp(lam1 * (x - u))
    e2 = lambda x: math.exp(-lam2 * (x - d))
    a1, a2 = e1(d) - e1(D), e1(u) - e1(U)
    b1, b2 = e2(d) - e2(D), e2(u) - e2(U)
    r1 = m.K + m.k * (D - d) - (ps.value(d) - ps.value(D))
    r2 = m.L + m.l * (u - U) - (ps.value(u) - ps.value(U))
    det = a1 * b2 - a2 * b1
    if det == 0 or not math.isfinite(det) or abs(det) <= 1e-14 * (abs(a1 * b2) + abs(a2 * b1)):
        raise DegenerateBandError(f"singular boundary system for band {band.as_tuple()}")
    Ac = (r1 * b2 - r2 * b1) / det
    Bc = (a1 * r2 - a2 * r1) / det
    # coefficients relative to V0 = Rh - P e^{lambda1 (x-a)} - Q e^{-lambda2 (x-a)}
    a = h.kink
    A1 = _scaled(Ac, -lam1 * u) + _scaled(ps.P, -lam1 * a)
    B1 = _scaled(Bc, lam2 * d) + _scaled(ps.Q, lam2 * a)
    return PolicyValue(A1, B1, band, Ac, Bc, m, h, roots)


def _scaled(c: float, expo: float) -> float:
    try:
        return c * math.exp(expo)
    except OverflowError:
        return math.copysign(math.inf, c) if c else 0.0


def value_bar(pv: PolicyValue, m: ModelParams = None, h: HoldingCost = None, roots=None,
              x: float = 0.0) -> float:
    """Extended cost: linear with slope -k left of d, V on [d, u], slope l right of u."""
    b = pv.band
    m = pv.m
    if x <= b.d:
        return pv.V(b.D) + m.K + m.k * (b.D - x)
    if x >= b.u:
        return pv.V(b.U) + m.L + m.l * (x - b.U)
    return pv.V(x)


def gbar(pv: PolicyValue, x: float) -> float:
    b = pv.band
    if x <= b.d:
        return -pv.m.k
    if x >= b.u:
        return pv.m.l
    return pv.dV(x)


# verification -----------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    lo: float
    hi: float
    n: int

    def points(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)


def default_grid(band: ControlBand, m: ModelParams, n: int = 4001) -> GridSpec:
    """Band padded by 6 sigma/sqrt(beta) (at least 6) with step <= 0.01."""
    s = max(1.0, m.sigma / math.sqrt(m.beta))
    lo, hi = band.d - 6.0 * s, band.u + 6.0 * s
    return GridSpec(lo, hi, max(n, math.ceil((hi - lo) / 0.01) + 1))


@dataclass
class VerificationReport:
    min_qvi_residual: float
    max_K_violation: float
    max_L_violation: float
    pasting_residuals: tuple
    derivative_bound: float
    min_K_area: float
    max_L_area: float
    pairwise_K_violation: float
    pairwise_L_violation: float
    tol: float
    grid_points: int
    warnings: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        t = self.tol
        return (self.min_qvi_residual >= -t and self.max_K_violation <= t
                and self.max_L_violation <= t and self.pairwise_K_violation <= t
                and self.pairwise_L_violation <= t
                and all(abs(r) <= t for r in self.pasting_residuals))

    def to_dict(self) -> dict:
        return {
            "status": "pass" if self.passed else "fail",
            "min_qvi_residual": self.min_qvi_residual,
            "max_K_violation": self.max_K_violation,
            "max_L_violation": self.max_L_violation,
            "pairwise_K_violation": self.pairwise_K_violation,
            "pairwise_L_violation": self.pairwise_L_violation,
            "pasting_residuals": {k: v for k, v in zip(("d", "D", "U", "u"), self.pasting_residuals)},
            "derivative_bound": self.derivative_bound,
            "min_K_area": self.min_K_area,
            "max_L_area": self.max_L_area,
            "tol": self.tol,
            "grid_points": self.grid_points,
            "warnings": list(self.warnings),
        }


def _pairwise(vals: np.ndarray, xs: np.ndarray, m: ModelParams, max_points: int) -> tuple[float, float]:
    idx = np.unique(np.linspace(0, len(xs) - 1, min(len(xs), max_points)).round().astype(int))
    x, v = xs[idx], vals[idx]
    dv = v[None, :] - v[:, None]  # v[j] - v[i]
    dx = x[None, :] - x[:, None]  # x[j] - x[i]
    upper = dx > 0
    if not upper.any():
        return -math.inf, -math.inf
    # i < j as (x, y) = (x_j, x_i): V(y) - V(x) <= K + k (x - y)
    k_viol = (-dv - m.K - m.k * dx)[upper].max()
    # i < j as (x, y) = (x_i, x_j): V(y) - V(x) <= L + l (y - x)
    l_viol = (dv - m.L - m.l * dx)[upper].max()
    return float(k_viol), float(l_viol)


def _slope_points(pv: PolicyValue, xs: np.ndarray, m: ModelParams) -> list:
    """In-band points where V' = -k or V' = l, i.e. extrema of Vbar + kx and Vbar - lx.

    The jump inequalities are tightest there; a coarse grid can step over them.
    """
    b = pv.band
    inner = xs[(xs >= b.d) & (xs <= b.u)]
    if inner.size < 2:
        return []
    dv = np.array([pv.dV(x) for x in inner])
    out = []
    for level in (-m.k, m.l):
        f = dv - level
        for i in np.flatnonzero(np.sign(f[:-1]) * np.sign(f[1:]) < 0):
            out.append(brentq(lambda x: pv.dV(x) - level, inner[i], inner[i + 1], xtol=1e-14))
    return out


def verify_qvi(pv: PolicyValue, m: ModelParams = None, h: HoldingCost = None, roots=None,
               grid: GridSpec | np.ndarray | None = None, tol: float = 1e-6,
               pairwise_points: int = 801) -> VerificationReport:
    """Check the QVI inequalities for the extended cost of a band on a grid.

    Failures are reported, never raised.
    """
    m, h = pv.m, pv.h
    b = pv.band
    warnings = []
    if grid is None:
        grid = default_grid(b, m)
    xs = grid.points() if isinstance(grid, GridSpec) else np.asarray(grid, dtype=float)
    xs = np.unique(np.concatenate((xs, [x for x in b.as_tuple() if xs.size and xs[0] <= x <= xs[-1]])))
    reach = 5.0 * m.sigma / math.sqrt(m.beta)
    step = float(np.max(np.diff(xs))) if xs.size > 1 else math.inf
    if xs.size < 2 or xs[0] > b.d - reach or xs[-1] < b.u + reach or step > 1e-2:
        warnings.append(f"grid does not cover [d - {reach:.3g}, u + {reach:.3g}] at step <= 0.01; "
                        "checks are partial")
    xs = np.unique(np.concatenate((xs, _slope_points(pv, xs, m))))

    hv = np.asarray(h.value(xs), dtype=float)
    vb = np.array([value_bar(pv, x=x) for x in xs])
    gb = np.array([gbar(pv, x) for x in xs])

    res = np.empty_like(xs)
    for i, x in enumerate(xs):
        if b.d < x < b.u:
            res[i] = 0.5 * m.sigma2 * pv.d2V(x) + m.mu * pv.dV(x) - m.beta * vb[i] + hv[i]
        else:
            res[i] = m.mu * gb[i] - m.beta * vb[i] + hv[i]

    # jump-up inequality: F(y) - F(x) <= K for y < x, with F = Vbar + k x
    F = vb + m.k * xs
    G = vb - m.l * xs
    if xs.size > 1:
        run_max = np.maximum.accumulate(F)[:-1]
        k_gap = float(np.max(run_max - F[1:]))
        run_min = np.minimum.accumulate(G)[:-1]
        l_gap = float(np.max(G[1:] - run_min))
    else:
        k_gap = l_gap = -math.inf
    pk, pl = _pairwise(vb, xs, m, pairwise_points)

    pasting = (pv.dV(b.d) + m.k, pv.dV(b.D) + m.k, pv.dV(b.U) - m.l, pv.dV(b.u) - m.l)
    return VerificationReport(
        min_qvi_residual=float(res.min()),
        max_K_violation=k_gap - m.K,
        max_L_violation=l_gap - m.L,
        pasting_residuals=tuple(float(p) for p in pasting),
        derivative_bound=float(np.max(np.abs(gb))),
        min_K_area=-k_gap,
        max_L_area=l_gap,
        pairwise_K_violation=pk,
        pairwise_L_violation=pl,
        tol=tol,
        grid_points=int(xs.size),
        warnings=warnings,
    )
