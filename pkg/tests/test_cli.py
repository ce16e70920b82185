import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from kondo_phonon.cli import EXIT_ASSERT, EXIT_ASSUMPTION, EXIT_OK, EXIT_PARSE, EXIT_SOLVER, format_value, run

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write(tmp_path, cfg, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def test_ground_state_passes_and_writes_artifacts(tmp_path, capsys):
    code = run(["ground-state", "--config", str(CONFIGS / "ground_state_chain3.json"), "--out", str(tmp_path)])
    assert code == EXIT_OK
    rows = list(csv.DictReader(open(tmp_path / "ground-state.csv")))
    assert rows[0]["degeneracy"] == "3"
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["exit_status"] == 0
    assert manifest["assertions"] == {"degeneracy": True, "spin": True}
    assert {"numpy", "scipy", "python", "kondo_phonon"} <= set(manifest["versions"])
    assert "PASS ground-state:spin" in capsys.readouterr().out


def test_csv_is_deterministic(tmp_path):
    cfg = str(CONFIGS / "ergodicity_cycle4.json")
    for d in ("a", "b"):
        assert run(["ergodicity", "--config", cfg, "--out", str(tmp_path / d)]) == EXIT_OK
    assert (tmp_path / "a" / "ergodicity.csv").read_bytes() == (tmp_path / "b" / "ergodicity.csv").read_bytes()


def test_cutoff_ladder_in_manifest(tmp_path):
    cfg = {"lattice": "chain(2)", "params": {"J": 1.0}, "coupling": 0.2, "phonons": {"cutoffs": [1, 2, 3]}}
    code = run(["ground-state", "--config", write(tmp_path, cfg), "--out", str(tmp_path)])
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["cutoff_ladder"]["cutoffs"] == [1, 2, 3]
    assert len(manifest["cutoff_deltas"]) == 2
    assert code == (EXIT_OK if all(manifest["assertions"].values()) else EXIT_ASSERT)


def test_assertion_failure_exit(tmp_path):
    cfg = {"lattice": "chain(3)", "params": {"J": 1.0}, "options": {"expected_degeneracy": 4}}
    assert run(["ground-state", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == EXIT_ASSERT
    assert json.loads((tmp_path / "manifest.json").read_text())["exit_status"] == 1


def test_assumption_exit():
    assert run(["positivity", "--config", str(CONFIGS / "negative_hopping_cycle5.json")]) == EXIT_ASSUMPTION


def test_magnetization_requires_biconnected(tmp_path):
    cfg = {"lattice": "cycle(5)", "params": {"J": 1.0}}
    assert run(["magnetization", "--config", write(tmp_path, cfg), "--check-only"]) == EXIT_ASSUMPTION


@pytest.mark.parametrize(
    "cfg",
    [
        {"lattice": "chain(2)", "params": {"J": 1.0}, "bogus": 1},
        {"lattice": "star(3)", "params": {"J": 1.0}},
        {"lattice": "chain(2)", "params": {"J": "strong"}},
        {"lattice": "chain(2)", "params": {"J": 1.0, "g": 0.2}},
        {"experiment": "nt-check", "lattice": "chain(2)", "params": {"J": 1.0}},
    ],
)
def test_parse_errors(tmp_path, cfg):
    assert run(["ground-state", "--config", write(tmp_path, cfg)]) == EXIT_PARSE


def test_missing_file_and_bad_experiment(tmp_path):
    assert run(["ground-state", "--config", str(tmp_path / "none.json")]) == EXIT_PARSE
    assert run(["no-such-experiment", "--config", "x"]) == EXIT_PARSE


def test_solver_exit_on_ambiguous_degeneracy(tmp_path):
    cfg = {"lattice": "chain(3)", "params": {"J": 1.0, "h": 1e-10}, "options": {"gap_tol": 1e-12}}
    assert run(["ground-state", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == EXIT_SOLVER


def test_check_only_writes_nothing(tmp_path):
    out = tmp_path / "out"
    code = run(["j-sweep", "--config", str(CONFIGS / "j_sweep_chain2.json"), "--out", str(out), "--check-only"])
    assert code == EXIT_OK and not out.exists()


def test_format_value():
    assert format_value(0.1) == "0.10000000000000001"
    assert format_value(None) == ""
    assert format_value(True) == "true"
    assert format_value(3) == "3"


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "kondo_phonon.cli", "ergodicity", "--config", str(CONFIGS / "ergodicity_cycle4.json"),
         "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert "PASS ergodicity:certificates" in proc.stdout
