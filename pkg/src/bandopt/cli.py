"""Command line front end: ``bandopt <command> --config <path> [--out <dir>]``.

Commands: solve, verify, simulate, search, pipeline.  Every command writes
machine-readable reports into the output directory; nothing is plotted.

Exit codes: 0 success, 2 config error, 3 holding cost rejected by
validation, 4 solver stage or numeric failure, 5 a check did not pass.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .errors import BandOptError, ConfigError, StageError
from .free_boundary import FreeBoundarySolver, SolveReport
from .holding_cost import default_probe_grid, validate
from .policy_sim import grid_search_band, simulate_policy, write_search_csv
from .value_function import GridSpec, gbar, policy_value, value_bar, verify_qvi

EXIT_OK, EXIT_CONFIG, EXIT_VALIDATION, EXIT_STAGE, EXIT_CHECK = 0, 2, 3, 4, 5

SOLVE_JSON, VERIFY_JSON, SIM_JSONL, SEARCH_CSV, CURVES_CSV = (
    "solve.json", "verify.json", "sim.jsonl", "search.csv", "curves.csv")


def _clean(obj):
    """JSON-safe copy: numpy scalars to float, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return obj


def _dump(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


class Run:
    """State shared by the stages of one invocation."""

    def __init__(self, cfg: RunConfig, out: Path, override: bool, log=print):
        self.cfg, self.out, self.override, self.log = cfg, out, override, log
        self.report: SolveReport | None = None
        self.pv = None
        self.failed_checks: list[str] = []

    def _write(self, name: str, text: str):
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / name).write_text(text)

    def _header(self) -> dict:
        return {"model": self.cfg.model.to_dict(), "cost": self.cfg.cost.to_dict()}

    # stages ------------------------------------------------------------

    def validate(self) -> int:
        m, h = self.cfg.model, self.cfg.cost
        rep = validate(h, m, default_probe_grid(h, m))
        if rep.ok:
            return EXIT_OK
        if self.override:
            self.log(f"validation: {len(rep.violations)} violation(s) overridden")
            return EXIT_OK
        self._write(SOLVE_JSON, _dump({**self._header(), "status": "validation_failed",
                                       "stage": "validate", "validation": rep.to_dict(),
                                       "solution": None}))
        for v in rep.violations:
            self.log(f"validation: {v.name}: {v.detail}")
        return EXIT_VALIDATION

    def solve(self) -> int:
        cfg = self.cfg
        try:
            self.report = FreeBoundarySolver(cfg.model, cfg.cost, cfg.tolerances).solve()
        except (StageError, BandOptError) as exc:
            stage = getattr(exc, "stage", "solve")
            self._write(SOLVE_JSON, _dump({**self._header(), "status": "stage_failed", "stage": stage,
                                           "message": str(exc), "solution": None}))
            self.log(f"solve failed in stage {stage}: {exc}")
            return EXIT_STAGE
        rep = self.report
        self.pv = policy_value(rep.band, cfg.model, cfg.cost)
        sol = rep.to_dict()
        sol["value_coefficients"] = {"A1": self.pv.A1, "B1": self.pv.B1}
        status = "ok" if rep.ok else "residuals_exceed_tolerance"
        self._write(SOLVE_JSON, _dump({**self._header(), "status": status, "stage": None,
                                       "solution": sol}))
        self._write_curves()
        b = rep.band
        self.log(f"solve: A*={rep.coeffs.A:.12g} B*={rep.coeffs.B:.12g} "
                 f"band=({b.d:.10g}, {b.D:.10g}, {b.U:.10g}, {b.u:.10g}) status={status}")
        if not rep.ok:
            self.failed_checks.append("solve")
            return EXIT_CHECK
        return EXIT_OK

    def _write_curves(self):
        rep, m = self.report, self.cfg.model
        kern = FreeBoundarySolver(m, self.cfg.cost).kern
        b = rep.band
        pad = 3.0 * max(1.0, m.sigma / math.sqrt(m.beta))
        xs = np.linspace(b.d - pad, b.u + pad, self.cfg.curve_points)
        pA, pB = kern.offsets(rep.coeffs)
        lines = ["x,g,gbar,vbar"]
        for x in xs:
            x = float(x)
            row = (x, kern.g_at(pA, pB, x), gbar(self.pv, x), value_bar(self.pv, x=x))
            lines.append(",".join(repr(float(v)) for v in row))
        self._write(CURVES_CSV, "\n".join(lines) + "\n")

    def verify(self) -> int:
        vs, m = self.cfg.verify, self.cfg.model
        b = self.report.band
        pad = vs.pad if vs.pad is not None else 6.0 * max(1.0, m.sigma / math.sqrt(m.beta))
        vr = verify_qvi(self.pv, grid=GridSpec(b.d - pad, b.u + pad, vs.points), tol=vs.tol)
        self._write(VERIFY_JSON, _dump({**self._header(), **vr.to_dict()}))
        self.log(f"verify: {'pass' if vr.passed else 'fail'} "
                 f"(min residual {vr.min_qvi_residual:.3e}, K gap {vr.max_K_violation:.3e}, "
                 f"L gap {vr.max_L_violation:.3e})")
        if not vr.passed:
            self.failed_checks.append("verify")
            return EXIT_CHECK
        return EXIT_OK

    def simulate(self) -> int:
        ss = self.cfg.sim
        if ss is None:
            raise ConfigError(f"{self.cfg.path}: command needs a [sim] section")
        band = ss.band or self.report.band
        pv = self.pv if ss.band is None else policy_value(band, self.cfg.model, self.cfg.cost)
        est = simulate_policy(band, self.cfg.model, self.cfg.cost, ss.x0, ss.config)
        ref = value_bar(pv, x=ss.x0)
        allowed = max(ss.se_mult * est.std_error, ss.rel_tol * abs(ref))
        ok = abs(est.mean - ref) <= allowed
        cfg = ss.config
        rec = {"band": {"d": band.d, "D": band.D, "U": band.U, "u": band.u}, "x0": ss.x0,
               "dt": cfg.dt, "horizon": cfg.horizon_for(self.cfg.model), "seed": cfg.seed,
               "antithetic": cfg.antithetic, **est.to_dict(),
               "closed_form": ref, "abs_error": abs(est.mean - ref), "allowed_error": allowed,
               "status": "pass" if ok else "fail"}
        self._write(SIM_JSONL, json.dumps(_clean(rec), sort_keys=True) + "\n")
        self.log(f"simulate: mean={est.mean:.6g} se={est.std_error:.3g} closed form={ref:.6g} "
                 f"{'pass' if ok else 'fail'}")
        if not ok:
            self.failed_checks.append("simulate")
            return EXIT_CHECK
        return EXIT_OK

    def search(self) -> int:
        sc = self.cfg.search
        if sc is None:
            raise ConfigError(f"{self.cfg.path}: command needs a [search] section")
        m, h = self.cfg.model, self.cfg.cost
        best, best_val, table = grid_search_band(m, h, x0=sc.x0, grid=sc.grid)
        self.out.mkdir(parents=True, exist_ok=True)
        write_search_csv(table, self.out / SEARCH_CSV)
        msg = f"search: best band {best.as_tuple()} value {best_val:.10g} over {len(table)} candidates"
        status = EXIT_OK
        if self.report is not None:
            ref = value_bar(self.pv, x=sc.x0)
            gap = ref - best_val
            dist = max(abs(p - q) for p, q in zip(best.as_tuple(), self.report.band.as_tuple()))
            ok = gap <= sc.value_tol and dist <= sc.band_tol
            msg += f"; solver value {ref:.10g}, gap {gap:.3e}, distance {dist:.3g} {'pass' if ok else 'fail'}"
            if not ok:
                self.failed_checks.append("search")
                status = EXIT_CHECK
        self.log(msg)
        return status


def _stages(command: str, cfg: RunConfig) -> list[str]:
    if command == "solve":
        return ["validate", "solve"]
    if command == "verify":
        return ["validate", "solve", "verify"]
    if command == "simulate":
        return ["simulate"] if cfg.sim and cfg.sim.band else ["validate", "solve", "simulate"]
    if command == "search":
        return ["validate", "solve", "search"]
    return ["validate", "solve", "verify", "simulate", "search"]


def run(command: str, config_path, out_dir=None, override_validation: bool = False, log=print) -> int:
    """Execute one command; returns the process exit status."""
    try:
        cfg = load_config(config_path)
        if command in ("simulate", "pipeline") and cfg.sim is None:
            raise ConfigError(f"{config_path}: '{command}' needs a [sim] section")
        if command in ("search", "pipeline") and cfg.search is None:
            raise ConfigError(f"{config_path}: '{command}' needs a [search] section")
    except (ConfigError, ValueError) as exc:
        log(f"config error: {exc}")
        return EXIT_CONFIG
    out = Path(out_dir) if out_dir else (cfg.out_dir or Path("bandopt_out"))
    r = Run(cfg, out, override_validation, log)
    worst = EXIT_OK
    for stage in _stages(command, cfg):
        try:
            code = getattr(r, stage)()
        except ConfigError as exc:
            log(f"config error: {exc}")
            return EXIT_CONFIG
        except BandOptError as exc:
            log(f"{stage} failed: {exc}")
            return EXIT_STAGE
        if code in (EXIT_VALIDATION, EXIT_STAGE):
            return code
        worst = max(worst, code)
        if code == EXIT_CHECK and stage == "solve":
            # later stages would only restate the failed solve
            return code
    return worst


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bandopt",
                                description="Optimal control band for a Brownian inventory model.")
    p.add_argument("--version", action="version", version=f"bandopt {__version__}")
    p.add_argument("command", choices=["solve", "verify", "simulate", "search", "pipeline"])
    p.add_argument("--config", required=True, help="INI problem description")
    p.add_argument("--out", default=None, help="output directory (default: [output] dir or ./bandopt_out)")
    p.add_argument("--override-validation", action="store_true",
                   help="run even if the holding cost fails validation")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run(args.command, args.config, args.out, args.override_validation,
               log=lambda s: print(s, file=sys.stderr))


if __name__ == "__main__":
    sys.exit(main())
