"""Monte Carlo evaluation of band policies and a brute-force band search.

The simulator runs an Euler scheme for the netput process, applies the band
as a state reset after each step and accumulates discounted holding and
adjustment costs.  Paths are processed in fixed-size blocks; each block draws
its normals from its own child of ``SeedSequence(seed)``, so an estimate
depends only on the config, never on scheduling.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass

import numba
import numpy as np

from .characteristic import characteristic_roots
from .errors import ConfigError, DegenerateBandError, NumericFailureError
from .free_boundary import ControlBand
from .holding_cost import HoldingCost, ModelParams
from .value_function import _particular, policy_value, value_bar

BLOCK_PATHS = 1000
CHUNK_STEPS = 2000

DISCRETIZATION_NOTE = ("Euler steps with thresholds checked after each step (no crossing detection); "
                       "left-point rule for the holding-cost integral; boundary bias O(sqrt(dt))")


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    horizon: float | None = None  # default 18 / beta
    paths: int = 10_000
    seed: int = 0
    antithetic: bool = False

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError("sim dt must be positive")
        if self.horizon is not None and not self.horizon > 0:
            raise ConfigError("sim horizon must be positive")
        if self.paths < 2:
            raise ConfigError("sim needs at least 2 paths")
        if self.antithetic and self.paths % 2:
            raise ConfigError("antithetic sampling needs an even number of paths")

    def horizon_for(self, m: ModelParams) -> float:
        return self.horizon if self.horizon is not None else 18.0 / m.beta


@dataclass(frozen=True)
class SimEstimate:
    mean: float
    std_error: float
    paths: int
    truncation_bound: float
    discretization_note: str
    adjusted_fraction: float = 0.0  # share of paths with at least one adjustment

    def to_dict(self) -> dict:
        return asdict(self)


@numba.njit(cache=True)
def _hval(x, lows, coef):
    i = np.searchsorted(lows, x, side="right") - 1
    if i < 0:
        i = 0
    acc = 0.0
    for j in range(coef.shape[1] - 1, -1, -1):
        acc = acc * x + coef[i, j]
    return acc


@numba.njit(cache=True)
def _advance(z, cost, hits, normals, sign, disc, q, step_drift, step_sd, dt,
             d, D, U, u, K, k, L, l, lows, coef):
    """Advance every path of a block by normals.shape[1] steps.

    ``disc`` is e^{-beta t} at the start of the chunk, ``q`` = e^{-beta dt}.
    Paths in the second half of an antithetic block reuse the normals of the
    first half with flipped sign (``sign`` is -1 for those rows).
    """
    n_paths = z.shape[0]
    n_src = normals.shape[0]
    n_steps = normals.shape[1]
    for p in range(n_paths):
        row = p % n_src
        s = sign if p >= n_src else 1.0
        zp = z[p]
        cp = cost[p]
        hp = hits[p]
        w = disc
        for i in range(n_steps):
            cp += w * _hval(zp, lows, coef) * dt
            zp += step_drift + step_sd * s * normals[row, i]
            w *= q
            if zp <= d:
                cp += w * (K + k * (D - zp))
                zp = D
                hp += 1
            elif zp >= u:
                cp += w * (L + l * (zp - U))
                zp = U
                hp += 1
        z[p] = zp
        cost[p] = cp
        hits[p] = hp


def _piece_table(h: HoldingCost):
    if h.pieces is None:
        return None
    deg = max(len(c) for _, _, c in h.pieces)
    lows = np.array([lo for lo, _, _ in h.pieces], dtype=float)
    coef = np.zeros((len(h.pieces), deg))
    for i, (_, _, c) in enumerate(h.pieces):
        coef[i, :len(c)] = c
    return lows, coef


def _advance_numpy(z, cost, hits, normals, sign, disc, q, drift, sd, dt, band, m, h):
    b = band
    n_src = normals.shape[0]
    full = normals if n_src == z.shape[0] else np.concatenate((normals, sign * normals))
    w = disc
    for i in range(full.shape[1]):
        cost += w * np.asarray(h.value(z)) * dt
        z += drift + sd * full[:, i]
        w *= q
        lo, hi = z <= b.d, z >= b.u
        cost[lo] += w * (m.K + m.k * (b.D - z[lo]))
        cost[hi] += w * (m.L + m.l * (z[hi] - b.U))
        z[lo], z[hi] = b.D, b.U
        hits += lo | hi


def _block_costs(band: ControlBand, m: ModelParams, h: HoldingCost, x0: float, cfg: SimConfig,
                 n_paths: int, n_steps: int, ss: np.random.SeedSequence, table):
    rng = np.random.Generator(np.random.PCG64(ss))
    b = band
    z = np.full(n_paths, float(x0))
    cost = np.zeros(n_paths)
    hits = np.zeros(n_paths, dtype=np.int64)
    if x0 <= b.d:
        cost += m.K + m.k * (b.D - x0)
        z[:] = b.D
        hits += 1
    elif x0 >= b.u:
        cost += m.L + m.l * (x0 - b.U)
        z[:] = b.U
        hits += 1
    dt = cfg.dt
    drift, sd = m.mu * dt, math.sqrt(m.sigma2 * dt)
    q = math.exp(-m.beta * dt)
    n_src = n_paths // 2 if cfg.antithetic else n_paths
    done = 0
    while done < n_steps:
        nc = min(CHUNK_STEPS, n_steps - done)
        normals = rng.standard_normal((n_src, nc))
        disc = math.exp(-m.beta * dt * done)
        if table is not None:
            _advance(z, cost, hits, normals, -1.0, disc, q, drift, sd, dt,
                     b.d, b.D, b.U, b.u, m.K, m.k, m.L, m.l, table[0], table[1])
        else:
            _advance_numpy(z, cost, hits, normals, -1.0, disc, q, drift, sd, dt, b, m, h)
        done += nc
    return cost, hits


def truncation_bound(band: ControlBand, m: ModelParams, h: HoldingCost, horizon: float) -> float:
    """e^{-beta T} times a bound on the cost-to-go from inside the band."""
    tail = math.exp(-m.beta * horizon)
    try:
        pv = policy_value(band, m, h)
        xs = np.linspace(band.d, band.u, 201)
        return tail * max(abs(value_bar(pv, x=float(x))) for x in xs)
    except (DegenerateBandError, OverflowError):
        # holding cost only; adjustments ignored for bands too wide to evaluate
        xs = np.linspace(band.d, band.u, 201)
        return tail * float(np.max(h.value(xs))) / m.beta


def simulate_policy(band: ControlBand, m: ModelParams, h: HoldingCost, x0: float,
                    cfg: SimConfig) -> SimEstimate:
    T = cfg.horizon_for(m)
    n_steps = max(1, int(round(T / cfg.dt)))
    table = _piece_table(h)
    n_blocks = -(-cfg.paths // BLOCK_PATHS)
    children = np.random.SeedSequence(cfg.seed).spawn(n_blocks)
    costs, hits = [], []
    for j, ss in enumerate(children):
        n = min(BLOCK_PATHS, cfg.paths - j * BLOCK_PATHS)
        c, hcount = _block_costs(band, m, h, x0, cfg, n, n_steps, ss, table)
        bad = np.flatnonzero(~np.isfinite(c))
        if bad.size:
            raise NumericFailureError(f"non-finite cost on path {j * BLOCK_PATHS + int(bad[0])}")
        costs.append(c)
        hits.append(hcount)
    cost = np.concatenate(costs)
    hit = np.concatenate(hits)
    if cfg.antithetic:
        # pair rows p and p + half inside each block
        pairs = []
        for c in costs:
            half = c.size // 2
            pairs.append(0.5 * (c[:half] + c[half:2 * half]))
        samples = np.concatenate(pairs)
    else:
        samples = cost
    se = float(np.std(samples, ddof=1) / math.sqrt(samples.size))
    return SimEstimate(
        mean=float(np.mean(cost)),
        std_error=se,
        paths=int(cost.size),
        truncation_bound=float(truncation_bound(band, m, h, T)),
        discretization_note=DISCRETIZATION_NOTE,
        adjusted_fraction=float(np.mean(hit > 0)),
    )


# grid search -----------------------------------------------------------------

def axis(lo: float, hi: float, step: float) -> np.ndarray:
    """Inclusive lattice lo, lo + step, ..., hi (hi snapped to the lattice)."""
    if step <= 0 or hi < lo:
        raise ConfigError(f"bad grid axis ({lo}, {hi}, {step})")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return np.round(lo + step * np.arange(n), 12)


@dataclass(frozen=True)
class BandGridSpec:
    """Candidate thresholds.

    Full mode searches the product of the four axes.  Symmetric mode uses
    only ``U`` and ``u`` and mirrors them about ``center``: d = 2c - u,
    D = 2c - U.
    """

    U: tuple
    u: tuple
    d: tuple = ()
    D: tuple = ()
    symmetric: bool = False
    center: float = 0.0

    @classmethod
    def from_ranges(cls, symmetric: bool = False, center: float = 0.0, **ranges) -> "BandGridSpec":
        axes = {name: tuple(axis(*ranges[name])) if name in ranges else () for name in ("d", "D", "U", "u")}
        return cls(symmetric=symmetric, center=center, **axes)

    def candidates(self) -> np.ndarray:
        if self.symmetric:
            U, u = np.meshgrid(np.asarray(self.U, float), np.asarray(self.u, float), indexing="ij")
            U, u = U.ravel(), u.ravel()
            c = self.center
            bands = np.column_stack((2 * c - u, 2 * c - U, U, u))
        else:
            grids = np.meshgrid(*(np.asarray(getattr(self, n), float) for n in ("d", "D", "U", "u")),
                                indexing="ij")
            bands = np.column_stack([g.ravel() for g in grids])
        ok = (bands[:, 0] < bands[:, 1]) & (bands[:, 1] < bands[:, 2]) & (bands[:, 2] < bands[:, 3])
        return bands[ok]


def band_values(bands: np.ndarray, m: ModelParams, h: HoldingCost, x0: float, roots=None) -> np.ndarray:
    """Closed-form extended cost at x0 for many bands at once; NaN where singular."""
    roots = roots or characteristic_roots(m)
    lam1, lam2 = roots.lambda1, roots.lambda2
    ps = _particular(m, h)
    coords, inv = np.unique(bands, return_inverse=True)
    inv = inv.reshape(bands.shape)
    v0 = np.array([ps.value(float(x)) for x in coords])[inv]
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        d, D, U, u = bands.T
        # same centring as policy_value: entries are at most 1
        e1 = np.exp(lam1 * (bands - u[:, None]))
        e2 = np.exp(-lam2 * (bands - d[:, None]))
        a1, a2 = e1[:, 0] - e1[:, 1], e1[:, 3] - e1[:, 2]
        b1, b2 = e2[:, 0] - e2[:, 1], e2[:, 3] - e2[:, 2]
        r1 = m.K + m.k * (D - d) - (v0[:, 0] - v0[:, 1])
        r2 = m.L + m.l * (u - U) - (v0[:, 3] - v0[:, 2])
        det = a1 * b2 - a2 * b1
        Ac = (r1 * b2 - r2 * b1) / det
        Bc = (a1 * r2 - a2 * r1) / det
        VD = Ac * e1[:, 1] + Bc * e2[:, 1] + v0[:, 1]
        VU = Ac * e1[:, 2] + Bc * e2[:, 2] + v0[:, 2]
        v0x = ps.value(float(x0))
        Vx = Ac * np.exp(lam1 * (x0 - u)) + Bc * np.exp(-lam2 * (x0 - d)) + v0x
        out = np.where(x0 <= d, VD + m.K + m.k * (D - x0),
                       np.where(x0 >= u, VU + m.L + m.l * (x0 - U), Vx))
        singular = (det == 0) | ~np.isfinite(det) | \
            (np.abs(det) <= 1e-14 * (np.abs(a1 * b2) + np.abs(a2 * b1)))
    out[singular | ~np.isfinite(out)] = np.nan
    return out


def grid_search_band(m: ModelParams, h: HoldingCost, roots=None, x0: float = 0.0,
                     grid: BandGridSpec | None = None):
    """Exhaustive search over a band grid.

    Returns (best_band, best_value, table) where ``table`` is an (n, 5)
    array of d, D, U, u, value for every non-singular candidate.
    """
    if grid is None:
        raise ConfigError("grid_search_band needs a grid")
    bands = grid.candidates()
    if bands.size == 0:
        raise ConfigError("band grid has no candidate with d < D < U < u")
    vals = band_values(bands, m, h, x0, roots)
    keep = np.isfinite(vals)
    if not keep.any():
        raise ConfigError("every candidate band in the grid is singular")
    table = np.column_stack((bands[keep], vals[keep]))
    i = int(np.argmin(table[:, 4]))
    best = ControlBand(*(float(v) for v in table[i, :4]))
    return best, float(table[i, 4]), table


def write_search_csv(table: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["d", "D", "U", "u", "value"])
        for row in table:
            w.writerow([repr(float(v)) for v in row])
