"""INI problem descriptions for the command line front end.

Sections: [model], [cost], [tolerances], [verify], [sim], [search], [output].
Only [model] and [cost] are mandatory; the others fall back to defaults
unless a command needs them (simulate needs [sim], search needs [search]).
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .free_boundary import ControlBand, ToleranceSet
from .holding_cost import HoldingCost, ModelParams, make_linear, make_piecewise_poly, make_quadratic
from .policy_sim import BandGridSpec, SimConfig


@dataclass
class VerifySettings:
    tol: float = 1e-6
    points: int = 4001
    pad: float | None = None  # default 6 * max(1, sigma / sqrt(beta))


@dataclass
class SimSettings:
    config: SimConfig
    x0: float = 0.0
    band: ControlBand | None = None  # None: simulate the solver band
    rel_tol: float = 0.02
    se_mult: float = 3.0


@dataclass
class SearchSettings:
    grid: BandGridSpec
    x0: float = 0.0
    value_tol: float = 0.01
    band_tol: float = 0.1


@dataclass
class RunConfig:
    path: Path
    model: ModelParams
    cost: HoldingCost
    tolerances: ToleranceSet = field(default_factory=ToleranceSet)
    verify: VerifySettings = field(default_factory=VerifySettings)
    sim: SimSettings | None = None
    search: SearchSettings | None = None
    out_dir: Path | None = None
    curve_points: int = 401


class _Section:
    """Typed getters that report the offending section and key."""

    def __init__(self, cp: configparser.ConfigParser, name: str, path: Path):
        self.cp, self.name, self.path = cp, name, path
        self.sec = cp[name] if cp.has_section(name) else {}

    def _raw(self, key, default):
        if key in self.sec:
            return self.sec[key]
        if default is _REQUIRED:
            raise ConfigError(f"{self.path}: [{self.name}] missing required key '{key}'")
        return default

    def float(self, key, default=None):
        v = self._raw(key, default)
        if v is None or isinstance(v, float):
            return v
        try:
            return float(v)
        except ValueError:
            raise ConfigError(f"{self.path}: [{self.name}] {key} = {v!r} is not a number") from None

    def int(self, key, default=None):
        v = self._raw(key, default)
        if v is None or isinstance(v, int):
            return v
        try:
            return int(v)
        except ValueError:
            raise ConfigError(f"{self.path}: [{self.name}] {key} = {v!r} is not an integer") from None

    def bool(self, key, default=False):
        v = self._raw(key, default)
        if isinstance(v, bool):
            return v
        s = str(v).strip().lower()
        if s in ("1", "true", "yes", "on"):
            return True
        if s in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{self.path}: [{self.name}] {key} = {v!r} is not a boolean")

    def floats(self, key, n=None, default=None):
        v = self._raw(key, default)
        if v is None or isinstance(v, tuple):
            return v
        try:
            vals = tuple(float(t) for t in str(v).replace(",", " ").split())
        except ValueError:
            raise ConfigError(f"{self.path}: [{self.name}] {key} = {v!r} is not a list of numbers") from None
        if n is not None and len(vals) != n:
            raise ConfigError(f"{self.path}: [{self.name}] {key} needs {n} numbers, got {len(vals)}")
        return vals


_REQUIRED = object()


def _cost(sec: _Section) -> HoldingCost:
    family = str(sec._raw("family", _REQUIRED)).strip().lower()
    if family == "linear":
        return make_linear(sec.float("h1", _REQUIRED), sec.float("p1", _REQUIRED))
    if family == "quadratic":
        return make_quadratic(sec.float("h1", 0.0), sec.float("h2", _REQUIRED),
                              sec.float("p1", 0.0), sec.float("p2", _REQUIRED))
    if family == "piecewise":
        keys = sorted((k for k in sec.sec if k.startswith("segment")),
                      key=lambda k: int(k[7:]) if k[7:].isdigit() else math.inf)
        if not keys:
            raise ConfigError(f"{sec.path}: [cost] piecewise family needs segment1, segment2, ...")
        segs = []
        for k in keys:
            raw = sec.sec[k]
            if ":" not in raw:
                raise ConfigError(f"{sec.path}: [cost] {k} must look like 'lo hi : c0 c1 ...'")
            bounds, coeffs = raw.split(":", 1)
            try:
                lo, hi = (float(t) for t in bounds.split())
                cs = [float(t) for t in coeffs.split()]
            except ValueError:
                raise ConfigError(f"{sec.path}: [cost] {k} = {raw!r} could not be parsed") from None
            segs.append((lo, hi, cs))
        return make_piecewise_poly(segs)
    raise ConfigError(f"{sec.path}: [cost] unknown family {family!r} (linear, quadratic, piecewise)")


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case sensitive: K vs k, L vs l
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    for required in ("model", "cost"):
        if not cp.has_section(required):
            raise ConfigError(f"{path}: missing [{required}] section")

    s = _Section(cp, "model", path)
    model = ModelParams(mu=s.float("mu", 0.0), sigma2=s.float("sigma2", _REQUIRED),
                        beta=s.float("beta", _REQUIRED), K=s.float("K", _REQUIRED),
                        k=s.float("k", _REQUIRED), L=s.float("L", _REQUIRED), l=s.float("l", _REQUIRED))
    cost = _cost(_Section(cp, "cost", path))

    t = _Section(cp, "tolerances", path)
    base = ToleranceSet()
    tol = ToleranceSet(**{f: t.float(f, getattr(base, f)) for f in base.__dataclass_fields__})

    v = _Section(cp, "verify", path)
    verify = VerifySettings(tol=v.float("tol", 1e-6), points=v.int("points", 4001), pad=v.float("pad", None))

    sim = None
    if cp.has_section("sim"):
        s = _Section(cp, "sim", path)
        band = s.floats("band", 4, None)
        sim = SimSettings(
            config=SimConfig(dt=s.float("dt", 1e-3), horizon=s.float("horizon", None),
                             paths=s.int("paths", 10_000), seed=s.int("seed", 0),
                             antithetic=s.bool("antithetic", False)),
            x0=s.float("x0", 0.0),
            band=ControlBand(*band) if band else None,
            rel_tol=s.float("rel_tol", 0.02),
            se_mult=s.float("se_mult", 3.0),
        )

    search = None
    if cp.has_section("search"):
        s = _Section(cp, "search", path)
        symmetric = s.bool("symmetric", False)
        names = ("U", "u") if symmetric else ("d", "D", "U", "u")
        ranges = {n: s.floats(n, 3, _REQUIRED) for n in names}
        search = SearchSettings(
            grid=BandGridSpec.from_ranges(symmetric=symmetric, center=s.float("center", cost.kink), **ranges),
            x0=s.float("x0", 0.0),
            value_tol=s.float("value_tol", 0.01),
            band_tol=s.float("band_tol", 0.1),
        )

    o = _Section(cp, "output", path)
    out = o._raw("dir", None)
    out_dir = (path.parent / out) if out else None
    return RunConfig(path, model, cost, tol, verify, sim, search, out_dir, o.int("curve_points", 401))
