import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from bandopt.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_OK, EXIT_STAGE, EXIT_VALIDATION, main, run

QUAD_INI = """\
[model]
mu = 0
sigma2 = 2
beta = 1
K = 1
k = 0.5
L = 1
l = {l}

[cost]
family = quadratic
h2 = 1
p2 = 1

[verify]
points = 2001

[sim]
dt = 1e-2
horizon = 10
paths = 2000
seed = 3
rel_tol = 0.1

[search]
symmetric = true
U = 0.0 1.5 0.05
u = 0.5 4.0 0.05

[output]
curve_points = 51
"""

LIN_INI = """\
[model]
sigma2 = 2
beta = 1
K = 1
k = 0.5
L = 1
l = {l}

[cost]
family = linear
h1 = 1
p1 = 1
"""


def _write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _run(*args):
    logs = []
    code = run(*args, log=logs.append)
    return code, "\n".join(logs)


def test_pipeline_writes_all_reports(tmp_path):
    cfg = _write(tmp_path, QUAD_INI.format(l=0.5))
    out = tmp_path / "out"
    code, log = _run("pipeline", cfg, out)
    assert code == EXIT_OK, log
    assert sorted(p.name for p in out.iterdir()) == ["curves.csv", "search.csv", "sim.jsonl",
                                                     "solve.json", "verify.json"]
    solve = json.loads((out / "solve.json").read_text())
    assert solve["status"] == "ok" and solve["stage"] is None
    sol = solve["solution"]
    assert set(sol["band"]) == {"d", "D", "U", "u"}
    assert sol["B"] == pytest.approx(-sol["A"], abs=1e-7)
    assert {"A1", "B1"} == set(sol["value_coefficients"])
    assert json.loads((out / "verify.json").read_text())["status"] == "pass"
    sim = [json.loads(line) for line in (out / "sim.jsonl").read_text().splitlines()]
    assert len(sim) == 1 and sim[0]["status"] == "pass"
    with (out / "curves.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x", "g", "gbar", "vbar"] and len(rows) == 52
    with (out / "search.csv").open() as fh:
        assert next(csv.reader(fh)) == ["d", "D", "U", "u", "value"]


def test_solve_is_byte_identical(tmp_path):
    cfg = _write(tmp_path, LIN_INI.format(l=0.5))
    for name in ("a", "b"):
        assert _run("solve", cfg, tmp_path / name)[0] == EXIT_OK
    assert (tmp_path / "a" / "solve.json").read_bytes() == (tmp_path / "b" / "solve.json").read_bytes()


def test_validation_failure(tmp_path):
    cfg = _write(tmp_path, LIN_INI.format(l=1.5))
    code, log = _run("solve", cfg, tmp_path / "out")
    assert code == EXIT_VALIDATION
    assert "tail_slope_pos" in log
    rep = json.loads((tmp_path / "out" / "solve.json").read_text())
    assert rep["status"] == "validation_failed" and rep["solution"] is None
    assert "tail_slope_pos" in json.dumps(rep["validation"])


def test_override_validation_reaches_solver(tmp_path):
    cfg = _write(tmp_path, LIN_INI.format(l=1.5))
    code, log = _run("solve", cfg, tmp_path / "out", True)
    assert code == EXIT_STAGE
    assert "overridden" in log
    rep = json.loads((tmp_path / "out" / "solve.json").read_text())
    assert rep["status"] == "stage_failed" and rep["stage"] == "underline_A"


@pytest.mark.parametrize("text,needle", [
    ("[model]\nsigma2 = 2\n", "[cost]"),
    (LIN_INI.format(l=0.5).replace("beta = 1", "beta = fast"), "beta"),
    (LIN_INI.format(l=0.5).replace("family = linear", "family = cubic"), "cubic"),
    (LIN_INI.format(l=0.5).replace("sigma2 = 2", "sigma2 = 0"), "sigma2"),
])
def test_config_errors(tmp_path, text, needle):
    code, log = _run("solve", _write(tmp_path, text), tmp_path / "out")
    assert code == EXIT_CONFIG
    assert needle in log


def test_missing_file_and_sections(tmp_path):
    assert _run("solve", tmp_path / "nope.ini", tmp_path)[0] == EXIT_CONFIG
    code, log = _run("pipeline", _write(tmp_path, LIN_INI.format(l=0.5)), tmp_path)
    assert code == EXIT_CONFIG and "[sim]" in log


def test_simulation_check_failure(tmp_path):
    # a tolerance no estimate can meet
    text = QUAD_INI.format(l=0.5).replace("rel_tol = 0.1", "rel_tol = 0\nse_mult = 0")
    code, _ = _run("simulate", _write(tmp_path, text), tmp_path / "out")
    assert code == EXIT_CHECK
    rec = json.loads((tmp_path / "out" / "sim.jsonl").read_text())
    assert rec["status"] == "fail"


def test_main_and_module_entry(tmp_path, capsys):
    cfg = _write(tmp_path, LIN_INI.format(l=0.5))
    assert main(["verify", "--config", str(cfg), "--out", str(tmp_path / "m")]) == EXIT_OK
    assert "verify: pass" in capsys.readouterr().err
    proc = subprocess.run([sys.executable, "-m", "bandopt.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("bandopt ")
    proc = subprocess.run([sys.executable, "-m", "bandopt.cli", "solve"], capture_output=True, text=True)
    assert proc.returncode == 2


def test_shipped_configs_load():
    from bandopt.config import load_config
    for p in sorted((Path(__file__).resolve().parents[1] / "configs").glob("*.ini")):
        cfg = load_config(p)
        assert cfg.sim is not None and cfg.search is not None
