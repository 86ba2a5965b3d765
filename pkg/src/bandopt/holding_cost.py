"""Holding-cost functions and model parameters for the Brownian inventory model.

A holding cost ``h`` is convex, vanishes at its minimiser ``kink`` and is
twice differentiable away from a finite list of breakpoints.  The built-in
families mirror the linear and quadratic costs used in the inventory
literature; arbitrary convex piecewise polynomials are also supported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.polynomial import Polynomial

from .errors import InvalidModelError, MalformedCostError

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ModelParams:
    """Drift/variance of the netput process, discount rate and adjustment costs."""

    mu: float
    sigma2: float
    beta: float
    K: float
    k: float
    L: float
    l: float  # noqa: E741  (variable cost per unit adjusted down)

    def __post_init__(self):
        for name in ("mu", "sigma2", "beta", "K", "k", "L", "l"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidModelError(f"{name} must be finite")
        for name in ("sigma2", "beta", "K", "k", "L", "l"):
            if getattr(self, name) <= 0:
                raise InvalidModelError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    def to_dict(self) -> dict:
        return {"mu": self.mu, "sigma2": self.sigma2, "beta": self.beta,
                "K": self.K, "k": self.k, "L": self.L, "l": self.l}


def _vectorize(fn: ArrayFn) -> ArrayFn:
    def wrapped(x):
        arr = np.asarray(x, dtype=float)
        out = fn(arr)
        return float(out) if arr.ndim == 0 else out
    return wrapped


@dataclass(frozen=True, eq=False)
class HoldingCost:
    """Convex holding cost with its first two derivatives.

    ``value``, ``deriv`` and ``second_deriv`` accept floats or numpy arrays.
    ``deriv`` and ``second_deriv`` are only meaningful away from ``kink`` and
    ``breakpoints``; the one-sided slopes at the kink are stored explicitly.
    Tail slopes are declared, never estimated.
    """

    kink: float
    value: ArrayFn
    deriv: ArrayFn
    second_deriv: ArrayFn
    deriv_left: float
    deriv_right: float
    tail_slope_pos: float
    tail_slope_neg: float
    breakpoints: tuple = ()
    family: str = "custom"
    params: dict = field(default_factory=dict)
    # ((lo, hi, coeffs ascending), ...) when h is piecewise polynomial
    pieces: tuple | None = None

    def __call__(self, x):
        return self.value(x)

    @property
    def singular_points(self) -> tuple:
        """Kink plus declared breakpoints, sorted and de-duplicated."""
        return tuple(sorted(set((float(self.kink),) + tuple(float(b) for b in self.breakpoints))))

    def to_dict(self) -> dict:
        return {"family": self.family, "kink": self.kink, **self.params,
                "tail_slope_pos": _ext(self.tail_slope_pos),
                "tail_slope_neg": _ext(self.tail_slope_neg)}


def _ext(v: float):
    # JSON has no infinity
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def make_linear(h1: float, p1: float) -> HoldingCost:
    """h(x) = h1*x for x >= 0 and -p1*x for x < 0."""
    if not (h1 > 0 and p1 > 0):
        raise MalformedCostError("linear cost needs h1 > 0 and p1 > 0")
    return HoldingCost(
        kink=0.0,
        value=_vectorize(lambda x: np.where(x >= 0, h1 * x, -p1 * x)),
        deriv=_vectorize(lambda x: np.where(x > 0, h1, -p1) + 0.0 * x),
        second_deriv=_vectorize(lambda x: np.zeros_like(x)),
        deriv_left=-float(p1),
        deriv_right=float(h1),
        tail_slope_pos=float(h1),
        tail_slope_neg=-float(p1),
        breakpoints=(0.0,),
        family="linear",
        params={"h1": h1, "p1": p1},
        pieces=((-math.inf, 0.0, (0.0, -float(p1))), (0.0, math.inf, (0.0, float(h1)))),
    )


def make_quadratic(h1: float, h2: float, p1: float, p2: float) -> HoldingCost:
    """h(x) = h1*x + h2*x^2 for x >= 0 and -p1*x + p2*x^2 for x < 0."""
    if min(h1, h2, p1, p2) < 0:
        raise MalformedCostError("quadratic cost coefficients must be nonnegative")
    return HoldingCost(
        kink=0.0,
        value=_vectorize(lambda x: np.where(x >= 0, h1 * x + h2 * x * x, -p1 * x + p2 * x * x)),
        deriv=_vectorize(lambda x: np.where(x > 0, h1 + 2 * h2 * x, -p1 + 2 * p2 * x)),
        second_deriv=_vectorize(lambda x: np.where(x > 0, 2.0 * h2, 2.0 * p2) + 0.0 * x),
        deriv_left=-float(p1),
        deriv_right=float(h1),
        tail_slope_pos=math.inf if h2 > 0 else float(h1),
        tail_slope_neg=-math.inf if p2 > 0 else -float(p1),
        breakpoints=(0.0,),
        family="quadratic",
        params={"h1": h1, "h2": h2, "p1": p1, "p2": p2},
        pieces=((-math.inf, 0.0, (0.0, -float(p1), float(p2))),
                (0.0, math.inf, (0.0, float(h1), float(h2)))),
    )


def _nonneg_on(p: Polynomial, lo: float, hi: float, tol: float) -> bool:
    """True if the polynomial p is >= -tol on [lo, hi] (ends may be infinite)."""
    pts = [r.real for r in p.deriv().roots() if abs(r.imag) < 1e-12 and lo < r.real < hi] if p.degree() > 1 else []
    pts += [e for e in (lo, hi) if math.isfinite(e)]
    if not all(p(t) >= -tol for t in pts):
        return False
    coef = p.coef
    deg = p.degree()
    if deg >= 1:
        lead = coef[deg]
        if math.isinf(hi) and lead < 0:
            return False
        if math.isinf(lo) and lead * (-1) ** deg < 0:
            return False
    elif not pts:
        return coef[0] >= -tol
    return True


def _tail_slope(dp: Polynomial, direction: int) -> float:
    deg = dp.degree()
    lead = dp.coef[deg]
    if deg == 0 or lead == 0:
        return float(dp.coef[0])
    return math.copysign(math.inf, lead * direction ** deg)


def make_piecewise_poly(segments: Iterable[tuple]) -> HoldingCost:
    """Convex piecewise polynomial cost.

    ``segments`` is a sequence of ``(lo, hi, coeffs)`` with coefficients in
    increasing powers of x.  The intervals must tile the real line.  The kink
    is located automatically and must be a zero of h.
    """
    segs = sorted(((float(lo), float(hi), tuple(float(c) for c in coeffs))
                   for lo, hi, coeffs in segments), key=lambda s: s[0])
    if not segs:
        raise MalformedCostError("no segments given")
    if segs[0][0] != -math.inf or segs[-1][1] != math.inf:
        raise MalformedCostError("segments must cover the whole real line")
    for (lo, hi, _), (lo2, _, _) in zip(segs, segs[1:]):
        if hi != lo2:
            raise MalformedCostError(f"segments not contiguous at {hi} / {lo2}")
    for lo, hi, _ in segs:
        if not lo < hi:
            raise MalformedCostError(f"empty segment [{lo}, {hi}]")
    polys = [Polynomial(c).trim() for _, _, c in segs]
    d1 = [p.deriv() for p in polys]
    d2 = [p.deriv(2) for p in polys]
    bounds = [s[1] for s in segs[:-1]]

    for b, p, q in zip(bounds, polys, polys[1:]):
        scale = 1.0 + abs(p(b))
        if abs(p(b) - q(b)) > 1e-9 * scale:
            raise MalformedCostError(f"cost is discontinuous at {b}")
    for b, p, q in zip(bounds, d1, d1[1:]):
        if q(b) < p(b) - 1e-9 * (1 + abs(p(b))):
            raise MalformedCostError(f"derivative decreases across {b}: not convex")
    for (lo, hi, _), p in zip(segs, d2):
        if not _nonneg_on(p, lo, hi, 1e-12):
            raise MalformedCostError(f"second derivative negative on [{lo}, {hi}]: not convex")

    kink = None
    for i, ((lo, hi, _), dp) in enumerate(zip(segs, d1)):
        if math.isfinite(lo) and dp(lo) >= 0:
            kink = lo
            break
        cands = sorted(r.real for r in dp.roots() if abs(r.imag) < 1e-12 and lo < r.real < hi) \
            if dp.degree() >= 1 else []
        if cands:
            kink = cands[0]
            break
    if kink is None:
        raise MalformedCostError("cost has no minimiser")
    for b, p, q in zip(bounds, d1, d1[1:]):
        if b != kink and abs(q(b) - p(b)) > 1e-9 * (1 + abs(p(b))):
            raise MalformedCostError(
                f"derivative jumps at {b}; only the minimiser may be a corner of h")
    seg_of_kink = max(i for i, s in enumerate(segs) if s[0] <= kink)
    hk = polys[seg_of_kink](kink)
    if abs(hk) > 1e-10:
        raise MalformedCostError(f"minimum value must be 0, got h({kink}) = {hk}")

    def pick(fns):
        def f(x):
            conds = [(x >= lo) & (x < hi) for lo, hi, _ in segs]
            return np.piecewise(x, conds, fns)
        return _vectorize(f)

    left_idx = max(i for i, s in enumerate(segs) if s[0] < kink)
    right_idx = min(i for i, s in enumerate(segs) if s[1] > kink)
    return HoldingCost(
        kink=float(kink),
        value=pick(polys),
        deriv=pick(d1),
        second_deriv=pick(d2),
        deriv_left=float(d1[left_idx](kink)),
        deriv_right=float(d1[right_idx](kink)),
        tail_slope_pos=_tail_slope(d1[-1], 1),
        tail_slope_neg=_tail_slope(d1[0], -1),
        breakpoints=tuple(bounds),
        family="piecewise",
        params={"segments": [[_ext(lo), _ext(hi), list(c)] for lo, hi, c in segs]},
        pieces=tuple((lo, hi, tuple(float(c) for c in p.coef)) for (lo, hi, _), p in zip(segs, polys)),
    )


@dataclass(frozen=True)
class Violation:
    name: str
    detail: str


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def names(self) -> set:
        return {v.name for v in self.violations}

    def add(self, name: str, detail: str):
        self.violations.append(Violation(name, detail))

    def to_dict(self) -> dict:
        return {"ok": self.ok,
                "violations": [{"name": v.name, "detail": v.detail} for v in self.violations]}


def validate(h: HoldingCost, m: ModelParams, probe_grid: Sequence[float],
             tol: float = 1e-9) -> ValidationReport:
    """Check a holding cost against the standing assumptions of the model.

    Returns every violation found; an empty report means the pair (h, m) is
    accepted by the solver.  Raises MalformedCostError when h is non-finite on
    the probe grid.
    """
    from .characteristic import characteristic_roots, exp_weighted_integral
    from .errors import DivergenceError

    a = h.kink
    x = np.unique(np.asarray(probe_grid, dtype=float))
    if x.size == 0 or not (x.min() < a < x.max()):
        raise ValueError("probe grid must be nonempty and straddle the kink")
    hv = np.asarray(h.value(x), dtype=float)
    if not np.all(np.isfinite(hv)):
        bad = x[~np.isfinite(hv)][0]
        raise MalformedCostError(f"h is not finite at {bad}")

    rep = ValidationReport()
    sing = np.asarray(h.singular_points)
    smooth = x[np.min(np.abs(x[:, None] - sing[None, :]), axis=1) > 1e-6]

    if abs(float(h.value(a))) > tol:
        rep.add("h_at_kink", f"h(kink) = {float(h.value(a))!r}, expected 0")
    if np.any(hv < -tol):
        rep.add("nonnegative", f"h < 0 at {x[hv < -tol][0]}")

    d1 = np.asarray(h.deriv(smooth), dtype=float)
    d2 = np.asarray(h.second_deriv(smooth), dtype=float)
    if not (np.all(np.isfinite(d1)) and np.all(np.isfinite(d2))):
        raise MalformedCostError("derivatives of h are not finite on the probe grid")
    left, right = smooth < a, smooth > a
    if np.any(d1[left] > tol) or np.any(d1[right] < -tol):
        rep.add("derivative_sign", "h' must be <= 0 left of the kink and >= 0 right of it")
    if not (h.deriv_left <= tol and h.deriv_right >= -tol):
        rep.add("kink_slopes", f"need h'(a-) <= 0 <= h'(a+), got {h.deriv_left}, {h.deriv_right}")
    if np.any(d2 < -tol) or np.any(np.diff(d1) < -tol * (1 + np.abs(d1[1:]))):
        rep.add("convexity", "h'' < 0 or h' decreasing on the probe grid")
    mid = 0.5 * (x[1:] + x[:-1])
    if np.any(np.asarray(h.value(mid)) > 0.5 * (hv[1:] + hv[:-1]) + tol * (1 + np.abs(hv[1:]))):
        rep.add("convexity", "midpoint convexity fails on the probe grid")

    delta = 1e-6
    far = smooth[np.min(np.abs(smooth[:, None] - sing[None, :]), axis=1) > 10 * delta] if sing.size else smooth
    if far.size:
        fd = (np.asarray(h.value(far + delta)) - np.asarray(h.value(far - delta))) / (2 * delta)
        dd = np.asarray(h.deriv(far))
        if np.any(np.abs(fd - dd) > 1e-4 * (1 + np.abs(dd))):
            rep.add("continuity", "h' inconsistent with finite differences of h (h not C1 off breakpoints?)")

    if not h.tail_slope_pos > m.l * m.beta:
        rep.add("tail_slope_pos",
                f"tail condition lim_{{x->+inf}} h'(x) > l*beta fails: {h.tail_slope_pos} <= {m.l * m.beta}")
    if not h.tail_slope_neg < -m.k * m.beta:
        rep.add("tail_slope_neg",
                f"tail condition lim_{{x->-inf}} h'(x) < -k*beta fails: {h.tail_slope_neg} >= {-m.k * m.beta}")

    roots = characteristic_roots(m)
    lam1, lam2 = roots.lambda1, roots.lambda2
    xr = smooth[smooth >= a + 10.0 / lam1]
    if xr.size >= 2:
        w = np.asarray(h.second_deriv(xr)) * np.exp(-lam1 * (xr - a))
        if np.any(np.diff(w) > 1e-12 * (1 + w[:-1])):
            rep.add("growth_pos", "h''(x) exp(-lambda1 x) is not decreasing at the right end of the grid")
    xl = smooth[smooth <= a - 10.0 / lam2]
    if xl.size >= 2:
        w = np.asarray(h.second_deriv(xl)) * np.exp(lam2 * (xl - a))
        if np.any(np.diff(w) < -1e-12 * (1 + w[1:])):
            rep.add("growth_neg", "h''(x) exp(lambda2 x) is not decreasing at the left end of the grid")
    bps = h.singular_points
    try:
        exp_weighted_integral(h.second_deriv, -lam1, a, math.inf, bps, 1e-8, origin=a)
    except DivergenceError as exc:
        rep.add("growth_pos", f"integral of exp(-lambda1 y) h''(y) over (a, inf) diverges: {exc}")
    try:
        exp_weighted_integral(h.second_deriv, lam2, -math.inf, a, bps, 1e-8, origin=a)
    except DivergenceError as exc:
        rep.add("growth_neg", f"integral of exp(lambda2 y) h''(y) over (-inf, a) diverges: {exc}")
    return rep


def default_probe_grid(h: HoldingCost, m: ModelParams, n: int = 801) -> np.ndarray:
    """Symmetric probe grid around the kink reaching well into both tails."""
    from .characteristic import characteristic_roots
    r = characteristic_roots(m)
    span = 40.0 / min(r.lambda1, r.lambda2)
    return h.kink + np.linspace(-span, span, n)
