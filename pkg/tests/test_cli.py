import csv
import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from pcelqr import __version__
from pcelqr.cli import main
from pcelqr.scenario_io import example_document, load_scenario, scenarios_equal

from conftest import CSTR_PATH


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def manifest_ok(out_dir):
    man = json.loads((out_dir / "manifest.json").read_text())
    for name, digest in man["outputs"].items():
        assert hashlib.sha256((out_dir / name).read_bytes()).hexdigest() == digest
    assert man["version"] == __version__
    assert man["scenario"]["sha256"] == hashlib.sha256(CSTR_PATH.read_bytes()).hexdigest()
    return man


def test_solve_finite(capsys, tmp_path):
    code, out, _ = run(capsys, "solve-finite", CSTR_PATH, "--N", 30, "-o", tmp_path)
    assert code == 0 and "L=32" in out
    man = manifest_ok(tmp_path)
    assert man["command"] == "solve-finite" and man["status"] == 0
    with open(tmp_path / "trajectory.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 31 * 32 * 2
    first = [r for r in rows if r["k"] == "0" and r["slot"] == "1"]
    assert [float(r["x_coeff"]) for r in first] == [0.4, 1.0]
    assert {int(r["index_j"]) for r in rows} == set(range(-2, 30))
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["total_cost"] == pytest.approx(35.34808949019911, rel=1e-12)


def test_solve_infinite(capsys, tmp_path):
    code, out, _ = run(capsys, "solve-infinite", CSTR_PATH, "-o", tmp_path)
    assert code == 0
    data = json.loads((tmp_path / "infinite.json").read_text())
    assert np.allclose(data["K"], [[1.25283, -0.0344948]], atol=1e-6)
    assert data["spectral_radius"] == pytest.approx(0.64164, abs=1e-5)
    manifest_ok(tmp_path)


def test_approx_dim_reports_dimensions(capsys, tmp_path):
    code, out, _ = run(capsys, "approx-dim", CSTR_PATH, "--delta", 0.1, 0.01, "-o", tmp_path)
    assert code == 0
    dims = json.loads((tmp_path / "approx_dim.json").read_text())["dimensions"]
    assert [d["p_closed_form"] for d in dims] == [5, 11]
    assert [d["p_lyapunov"] for d in dims] == [2, 4]
    assert "p_closed_form=5" in out and "p_lyapunov=4" in out


def test_stationary_with_samples(capsys, tmp_path):
    code, _, _ = run(capsys, "stationary", CSTR_PATH, "--p", 0, 5, "--samples", 2000, "--bins", 10, "-o", tmp_path)
    assert code == 0
    names = set(json.loads((tmp_path / "manifest.json").read_text())["outputs"])
    assert names == {"stationary.json", "stationary_coeffs.csv", "histograms.csv", "w2.json"}
    w2 = json.loads((tmp_path / "w2.json").read_text())
    assert {r["p"] for r in w2} == {0, 5}


def test_truncation(capsys, tmp_path):
    code, out, _ = run(capsys, "truncation", CSTR_PATH, "-o", tmp_path)
    assert code == 0 and "p=2" in out and "p=5" in out
    assert run(capsys, "truncation", CSTR_PATH, "--p", 99, "-o", tmp_path / "x")[0] == 3


def test_validate_passes_and_dumps_paths(capsys, tmp_path):
    code, out, _ = run(capsys, "validate", CSTR_PATH, "--samples", 20000, "--seed", 7, "--paths", 3, "-o", tmp_path)
    assert code == 0, out
    lines = [l for l in out.splitlines() if l.startswith(("PASS", "FAIL"))]
    assert len(lines) == 13 and all(l.startswith("PASS") for l in lines)
    checks = json.loads((tmp_path / "checks.json").read_text())
    assert all(c["passed"] for c in checks)
    with open(tmp_path / "paths.csv") as fh:
        assert sum(1 for _ in fh) == 1 + 3 * 31


def test_validate_is_reproducible(capsys, tmp_path):
    for d in ("a", "b"):
        run(capsys, "validate", CSTR_PATH, "--samples", 2000, "--seed", 3, "--paths", 2, "-o", tmp_path / d)
    assert (tmp_path / "a" / "paths.csv").read_bytes() == (tmp_path / "b" / "paths.csv").read_bytes()
    assert (tmp_path / "a" / "checks.json").read_bytes() == (tmp_path / "b" / "checks.json").read_bytes()


def test_overwrite_protection(capsys, tmp_path):
    assert run(capsys, "solve-infinite", CSTR_PATH, "-o", tmp_path)[0] == 0
    code, _, err = run(capsys, "solve-infinite", CSTR_PATH, "-o", tmp_path)
    assert code == 3 and "--overwrite" in err
    assert run(capsys, "solve-infinite", CSTR_PATH, "-o", tmp_path, "--overwrite")[0] == 0


def _doc_file(tmp_path, mutate):
    doc = example_document()
    mutate(doc)
    path = tmp_path / "s.json"
    path.write_text(json.dumps(doc))
    return path


def test_exit_codes(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert run(capsys, "solve-finite", bad, "-o", tmp_path / "o")[0] == 2
    assert run(capsys, "solve-finite", tmp_path / "nope.json", "-o", tmp_path / "o")[0] == 2
    path = _doc_file(tmp_path, lambda d: d.__setitem__("horizon", "thirty"))
    code, _, err = run(capsys, "solve-finite", path, "-o", tmp_path / "o")
    assert code == 3 and "horizon" in err
    path = _doc_file(tmp_path, lambda d: d["system"].__setitem__("A", [[1.0, 0.0]]))
    assert run(capsys, "solve-finite", path, "-o", tmp_path / "o")[0] == 3
    # unstabilizable: B cannot reach the unstable mode
    def unstab(d):
        d["system"]["B"] = [[0.0], [1.0]]
        d["cost"]["Q_N"] = "zero"
    path = _doc_file(tmp_path, unstab)
    code, _, err = run(capsys, "solve-infinite", path, "-o", tmp_path / "o")
    assert code == 4 and "numerical" in err
    assert run(capsys, "approx-dim", CSTR_PATH, "--delta", 0, "-o", tmp_path / "o")[0] == 3
    with pytest.raises(SystemExit) as exc:
        main(["solve-finite"])
    assert exc.value.code == 2
    assert not (tmp_path / "o").exists()


def test_dump_schema_example_round_trip(capsys, tmp_path):
    path = tmp_path / "dump.json"
    assert main(["--dump-schema-example", str(path)]) == 0
    assert scenarios_equal(load_scenario(path), load_scenario(CSTR_PATH))
    assert main(["--dump-schema-example"]) == 0
    assert json.loads(capsys.readouterr().out) == json.loads(path.read_text())


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "pcelqr", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and __version__ in res.stdout
