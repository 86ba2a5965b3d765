"""Nested bracketed root finding for the optimal control band.

The construction walks the (A, B) coefficient plane:

1. corners A_bar, B_low of the admissible region;
2. the curves B_over(A) (g at its local minimum equals -k) and
   A_under(B) (g at its local maximum equals l) and their intersection;
3. A1_bar on the top boundary where the upper area equals L;
4. the inner map A*(B) with upper area L, and the outer solve for B* with
   lower area -K;
5. the four band thresholds from the roots of g + k and g - l.

Each stage is a one-dimensional root search on a function whose
monotonicity is known, so every solve is bracketed (Brent's method).

Coefficients are carried as log-offsets from the corners,
s = log(A_bar - A) and t = log(B - B_low).  Optimal coefficients can lie
far closer to a corner than a double can resolve next to A_bar or B_low
(large L or K with a slow tail), and the offsets keep full relative
precision there.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

from scipy.integrate import quad
from scipy.optimize import brentq

from .errors import DegenerateBandError, InfeasibleCoefficientsError, NumericFailureError, StageError
from .gfunction import CriticalPoints, GCoefficients, GKernel, as_log, kernel_for, log_value
from .holding_cost import HoldingCost, ModelParams

_LOG_FLOOR = -1.0e5
# stands in for an area that is infinite because g never returns to the level
_HUGE_AREA = 1e12


@dataclass(frozen=True)
class ControlBand:
    """Thresholds d < D < U < u: jump from d up to D, from u down to U."""

    d: float
    D: float
    U: float
    u: float

    def __post_init__(self):
        if not (self.d < self.D < self.U < self.u):
            raise DegenerateBandError(f"control band needs d < D < U < u, got {self.as_tuple()}")

    def as_tuple(self) -> tuple:
        return (self.d, self.D, self.U, self.u)


@dataclass(frozen=True)
class ToleranceSet:
    quad_reltol: float = 1e-12
    x_tol: float = 1e-11
    log_tol: float = 1e-13  # on s = log(A_bar - A) and t = log(B - B_low)
    residual_tol: float = 1e-7
    endpoint_offset: float = 1e-6
    # first probe inside an interval sits this far (in log-offset units) from its start
    first_step: float = 1.0


@dataclass
class SolveReport:
    coeffs: GCoefficients
    band: ControlBand
    critical: CriticalPoints
    corners: dict
    residuals: dict
    tolerances: ToleranceSet
    brackets: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        tol = self.tolerances.residual_tol
        b = self.band
        ordered = b.d < self.critical.x1 < b.D < b.U < self.critical.x2 < b.u
        return ordered and all(abs(v) <= tol for v in self.residuals.values())

    def to_dict(self) -> dict:
        c = self.coeffs
        return {
            "status": "ok" if self.ok else "residuals_exceed_tolerance",
            "A": c.A, "B": c.B,
            "A_minus_A_bar": c.offset_A, "B_minus_B_low": c.offset_B,
            "log_A_bar_minus_A": c.log_gap_A, "log_B_minus_B_low": c.log_gap_B,
            "band": {"d": self.band.d, "D": self.band.D, "U": self.band.U, "u": self.band.u},
            "critical": {"x1": self.critical.x1, "x2": self.critical.x2},
            "corners": dict(self.corners),
            "residuals": dict(self.residuals),
            "brackets": {k: list(v) for k, v in self.brackets.items()},
            "tolerances": asdict(self.tolerances),
        }


def _pA(s: float) -> tuple:
    # A - A_bar = -e^s as a (sign, log) pair
    return (-1.0, s)


def _pB(t: float) -> tuple:
    return (1.0, t)


class FreeBoundarySolver:
    """All stages of the construction for one (model, cost) pair.

    Methods suffixed ``_log`` take and return log-offsets (s for A, t for B).
    """

    def __init__(self, m: ModelParams, h: HoldingCost, tol: ToleranceSet | None = None,
                 kernel: GKernel | None = None):
        self.m, self.h = m, h
        self.tol = tol or ToleranceSet()
        if kernel is None:
            kernel = kernel_for(m, h) if self.tol.quad_reltol == 1e-12 else \
                GKernel(m, h, reltol=self.tol.quad_reltol)
        self.kern = kernel
        self.brackets: dict = {}

    # generic bracketing ------------------------------------------------

    def _solve(self, fn, lo, hi, stage, xtol=None):
        flo, fhi = fn(lo), fn(hi)
        if flo == 0.0:
            return lo
        if fhi == 0.0:
            return hi
        if (flo < 0) == (fhi < 0):
            raise StageError(stage, f"no sign change on [{lo!r}, {hi!r}]: f = {flo:.3e}, {fhi:.3e}")
        xtol = self.tol.log_tol if xtol is None else xtol
        root, res = brentq(fn, lo, hi, xtol=xtol, rtol=1e-15, maxiter=500, full_output=True)
        if not res.converged:
            raise StageError(stage, "root search did not converge")
        return root

    def _descend(self, fn, start, want_negative, stage):
        """Step a log-offset down from ``start`` (doubling steps) until fn has the wanted sign.

        Returns (found, previous) so that [found, previous] brackets the sign change.
        """
        prev, step = start, self.tol.first_step
        while True:
            x = max(start - step, _LOG_FLOOR)
            v = fn(x)
            if (v < 0) == want_negative and v != 0:
                return x, prev
            if x <= _LOG_FLOOR:
                raise StageError(stage, f"no sign change down to log-offset {_LOG_FLOOR} from {start!r}")
            prev, step = x, 2.0 * step

    def _near_top(self, fn, log_width, want_negative, stage):
        """Log-offset just below log_width (interval end approached, never evaluated)."""
        off = self.tol.endpoint_offset
        for _ in range(8):
            x = log_width + math.log1p(-off)
            v = fn(x)
            if (v < 0) == want_negative:
                return x
            off *= 0.1
        raise StageError(stage, f"limit sign not reached at the far end of the interval (log width {log_width!r})")

    # band and areas ----------------------------------------------------

    def band_roots_at(self, pA: float, pB: float) -> tuple[ControlBand, CriticalPoints]:
        k, l = self.m.k, self.m.l
        kern = self.kern
        x1, x2 = kern.x1_at(pA, pB), kern.x2_at(pA, pB)
        g1, g2 = kern.g_at(pA, pB, x1), kern.g_at(pA, pB, x2)
        if not (g1 < -k and g2 > l):
            raise InfeasibleCoefficientsError(
                f"(A, B) = ({kern.A_bar + log_value(as_log(pA))}, {kern.B_low + log_value(as_log(pB))}) not in G: g(x1) = {g1}, g(x2) = {g2}")
        fk = lambda x: kern.g_at(pA, pB, x) + k
        fl = lambda x: kern.g_at(pA, pB, x) - l
        xt = self.tol.x_tol
        lo = kern._expand(lambda x: -fk(x), x1, -1.0, want_negative=True)
        hi = kern._expand(fl, x2, +1.0, want_negative=True)
        d = brentq(fk, lo, x1, xtol=xt, rtol=1e-15)
        D = brentq(fk, x1, x2, xtol=xt, rtol=1e-15)
        U = brentq(fl, x1, x2, xtol=xt, rtol=1e-15)
        u = brentq(fl, x2, hi, xtol=xt, rtol=1e-15)
        return ControlBand(d, D, U, u), CriticalPoints(x1, x2)

    def lambda1_at(self, pA: float, pB: float, band: ControlBand) -> float:
        W = self.kern.W_at
        return W(pA, pB, band.D) - W(pA, pB, band.d) + self.m.k * (band.D - band.d)

    def lambda2_at(self, pA: float, pB: float, band: ControlBand) -> float:
        W = self.kern.W_at
        return W(pA, pB, band.u) - W(pA, pB, band.U) - self.m.l * (band.u - band.U)

    def lambda_quadrature(self, pA: float, pB: float, lo: float, hi: float, level: float) -> float:
        """int_lo^hi (g - level) dx by adaptive quadrature on g itself."""
        g = lambda x: self.kern.g_at(pA, pB, x) - level
        bps = [self.kern.a] if lo < self.kern.a < hi else None
        # absolute floor: areas near zero would otherwise demand endless refinement
        scale = 1e-12 * (1.0 + abs(level) * (hi - lo))
        val, _ = quad(g, lo, hi, points=bps, epsabs=scale, epsrel=1e-12, limit=400)
        return val

    def upper_area(self, pA: float, pB: float) -> float:
        """Lambda2 extended outside G so that it stays increasing in A.

        Below the curve g(x2) = l it is g(x2) - l (<= 0); where g never comes
        back down to l left of x2 it is a large positive stand-in.
        """
        kern, l = self.kern, self.m.l
        x2 = kern.x2_at(pA, pB)
        excess = kern.g_at(pA, pB, x2) - l
        if excess <= 0:
            return excess
        fl = lambda x: kern.g_at(pA, pB, x) - l
        x1 = kern.x1_at(pA, pB)
        if fl(x1) >= 0:
            return _HUGE_AREA
        xt = self.tol.x_tol
        U = brentq(fl, x1, x2, xtol=xt, rtol=1e-15)
        hi = kern._expand(fl, x2, +1.0, want_negative=True)
        u = brentq(fl, x2, hi, xtol=xt, rtol=1e-15)
        W = kern.W_at
        return W(pA, pB, u) - W(pA, pB, U) - l * (u - U)

    def lower_area(self, pA: float, pB: float) -> float:
        """Lambda1 extended outside G so that it stays increasing in B."""
        kern, k = self.kern, self.m.k
        x1 = kern.x1_at(pA, pB)
        excess = kern.g_at(pA, pB, x1) + k
        if excess >= 0:
            return excess
        fk = lambda x: kern.g_at(pA, pB, x) + k
        x2 = kern.x2_at(pA, pB)
        if fk(x2) <= 0:
            return -_HUGE_AREA
        xt = self.tol.x_tol
        lo = kern._expand(lambda x: -fk(x), x1, -1.0, want_negative=True)
        d = brentq(fk, lo, x1, xtol=xt, rtol=1e-15)
        D = brentq(fk, x1, x2, xtol=xt, rtol=1e-15)
        W = kern.W_at
        return W(pA, pB, D) - W(pA, pB, d) + k * (D - d)

    # boundary curves ---------------------------------------------------

    def overline_B_log(self, pA: float) -> float:
        """t = log(B_over(A) - B_low) for A = A_bar + pA."""
        kern, m = self.kern, self.m
        pA = as_log(pA)
        lo_lim = max(kern.B_low, -m.k * m.beta)
        if not kern.A_bar + log_value(pA) > lo_lim:
            raise InfeasibleCoefficientsError(
                f"B_over(A) needs A > max(B_low, -k beta) = {lo_lim}, got {kern.A_bar + log_value(pA)}")
        width = min(log_value(pA) + (kern.A_bar - kern.B_low), kern.hr - kern.B_low)
        phi = lambda t: kern.g_at(pA, _pB(t), kern.x1_at(pA, _pB(t))) + m.k
        t_hi = self._near_top(phi, math.log(width), want_negative=False, stage="overline_B")
        t_lo, t_prev = self._descend(phi, t_hi, want_negative=True, stage="overline_B")
        return self._solve(phi, t_lo, t_prev, "overline_B")

    def underline_A_log(self, pB: float) -> float:
        """s = log(A_bar - A_under(B)) for B = B_low + pB."""
        kern, m = self.kern, self.m
        pB = as_log(pB)
        hi_lim = min(kern.A_bar, m.l * m.beta)
        if not kern.B_low + log_value(pB) < hi_lim:
            raise InfeasibleCoefficientsError(
                f"A_under(B) needs B < min(A_bar, l beta) = {hi_lim}, got {kern.B_low + log_value(pB)}")
        width = min(kern.A_bar - kern.B_low - log_value(pB), kern.A_bar - kern.hl)
        psi = lambda s: kern.g_at(_pA(s), pB, kern.x2_at(_pA(s), pB)) - m.l
        s_hi = self._near_top(psi, math.log(width), want_negative=True, stage="underline_A")
        s_lo, s_prev = self._descend(psi, s_hi, want_negative=False, stage="underline_A")
        return self._solve(psi, s_lo, s_prev, "underline_A")

    def intersection_log(self) -> tuple[float, float]:
        kern = self.kern
        s_zero = self.underline_A_log(-kern.B_low)  # A_under(0)
        s_corner = self.underline_A_log(0.0)        # A_under(B_low)
        F = lambda s: self.underline_A_log(_pB(self.overline_B_log(_pA(s)))) - s
        s_int = self._solve(F, s_corner, s_zero, "intersection")
        return s_int, self.overline_B_log(_pA(s_int))

    # nested solve ------------------------------------------------------

    def top_boundary_log(self, s_int: float) -> float:
        """s of A1_bar: the upper area along B_over(A) reaches L."""
        L = self.m.L
        f = lambda s: self.upper_area(_pA(s), _pB(self.overline_B_log(_pA(s)))) - L
        start = s_int - 1e-9
        lo, hi = self._descend(f, start, want_negative=False, stage="A1_bar")
        self.brackets["A1_bar_log_offset"] = (lo, hi)
        return self._solve(f, lo, hi, "A1_bar")

    def A_star_log(self, t: float, s1: float) -> float:
        """s of A*(B) for B = B_low + e^t, searched over A >= A1_bar."""
        L = self.m.L
        pB = _pB(t)
        f = lambda s: self.upper_area(_pA(s), pB) - L
        if f(s1) >= 0:
            return s1
        lo, hi = self._descend(f, s1, want_negative=False, stage="A_star")
        return self._solve(f, lo, hi, "A_star")

    def solve(self) -> SolveReport:
        kern, m = self.kern, self.m
        try:
            s_int, t_int = self.intersection_log()
        except (NumericFailureError, InfeasibleCoefficientsError) as exc:
            raise StageError("intersection", str(exc)) from exc
        s1 = self.top_boundary_log(s_int)
        t1 = self.overline_B_log(_pA(s1))

        outer = lambda t: self.lower_area(_pA(self.A_star_log(t, s1)), _pB(t)) + m.K
        lo, hi = self._descend(outer, t1, want_negative=True, stage="B_star")
        self.brackets["B_star_log_offset"] = (lo, hi)
        t_star = self._solve(outer, lo, hi, "B_star")
        s_star = self.A_star_log(t_star, s1)
        pA, pB = _pA(s_star), _pB(t_star)

        try:
            band, crit = self.band_roots_at(pA, pB)
        except InfeasibleCoefficientsError as exc:
            raise StageError("band_roots", str(exc)) from exc
        corners = {"A_bar": kern.A_bar, "B_low": kern.B_low,
                   "A_int": kern.A_bar - math.exp(s_int), "B_int": kern.B_low + math.exp(t_int),
                   "A1_bar": kern.A_bar - math.exp(s1), "B1_bar": kern.B_low + math.exp(t1)}
        return SolveReport(kern.coefficients(pA, pB), band, crit, corners,
                           self.residuals(pA, pB, band), self.tol, dict(self.brackets))

    def residuals(self, pA: float, pB: float, band: ControlBand) -> dict:
        g, m = self.kern.g_at, self.m
        lam1_q = self.lambda_quadrature(pA, pB, band.d, band.D, -m.k)
        lam2_q = self.lambda_quadrature(pA, pB, band.U, band.u, m.l)
        return {
            "g_d_plus_k": g(pA, pB, band.d) + m.k,
            "g_D_plus_k": g(pA, pB, band.D) + m.k,
            "g_U_minus_l": g(pA, pB, band.U) - m.l,
            "g_u_minus_l": g(pA, pB, band.u) - m.l,
            "lambda1_plus_K": self.lambda1_at(pA, pB, band) + m.K,
            "lambda2_minus_L": self.lambda2_at(pA, pB, band) - m.L,
            "lambda1_plus_K_quadrature": lam1_q + m.K,
            "lambda2_minus_L_quadrature": lam2_q - m.L,
        }

    # plain-coordinate views ----------------------------------------------

    def underline_A(self, B: float) -> float:
        return self.kern.A_bar - math.exp(self.underline_A_log(B - self.kern.B_low))

    def overline_B(self, A: float) -> float:
        return self.kern.B_low + math.exp(self.overline_B_log(A - self.kern.A_bar))

    def A_star(self, B: float, A1: float) -> float:
        kern = self.kern
        s1 = math.log(kern.A_bar - A1)
        return kern.A_bar - math.exp(self.A_star_log(math.log(B - kern.B_low), s1))


# module-level entry points ------------------------------------------------

def region_corners(m: ModelParams, h: HoldingCost, roots=None) -> tuple[float, float]:
    k = kernel_for(m, h)
    return k.A_bar, k.B_low


def underline_A(B: float, m: ModelParams, h: HoldingCost, roots=None) -> float:
    return FreeBoundarySolver(m, h).underline_A(B)


def overline_B(A: float, m: ModelParams, h: HoldingCost, roots=None) -> float:
    return FreeBoundarySolver(m, h).overline_B(A)


def intersection(m: ModelParams, h: HoldingCost, roots=None) -> tuple[float, float]:
    s = FreeBoundarySolver(m, h)
    s_int, t_int = s.intersection_log()
    return s.kern.A_bar - math.exp(s_int), s.kern.B_low + math.exp(t_int)


def band_roots(c: GCoefficients, m: ModelParams, h: HoldingCost, roots=None) -> ControlBand:
    s = FreeBoundarySolver(m, h)
    return s.band_roots_at(*s.kern.offsets(c))[0]


def area_lambda1(c: GCoefficients, band: ControlBand, m: ModelParams, h: HoldingCost,
                 roots=None, method: str = "antiderivative") -> float:
    s = FreeBoundarySolver(m, h)
    pA, pB = s.kern.offsets(c)
    if method == "quadrature":
        return s.lambda_quadrature(pA, pB, band.d, band.D, -m.k)
    return s.lambda1_at(pA, pB, band)


def area_lambda2(c: GCoefficients, band: ControlBand, m: ModelParams, h: HoldingCost,
                 roots=None, method: str = "antiderivative") -> float:
    s = FreeBoundarySolver(m, h)
    pA, pB = s.kern.offsets(c)
    if method == "quadrature":
        return s.lambda_quadrature(pA, pB, band.U, band.u, m.l)
    return s.lambda2_at(pA, pB, band)


def solve_optimal(m: ModelParams, h: HoldingCost, tol: ToleranceSet | None = None) -> SolveReport:
    return FreeBoundarySolver(m, h, tol).solve()
