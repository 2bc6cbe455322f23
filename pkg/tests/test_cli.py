import json
import subprocess
import sys

import numpy as np
import pytest

from fibertool.cli import main, parse_model, UsageError
from fibertool.formats import format_matrix, parse_matrix

SPARSE = "1 0 0 1\n1 1 0 0\n0 1 1 0\n0 0 1 1\n"


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def sparse_csv(tmp_path):
    p = tmp_path / "sparse.csv"
    p.write_text(SPARSE.replace(" ", ","))
    return p


def test_parse_model_forms(tmp_path):
    assert parse_model("independence 2 3").matrix.shape == (5, 6)
    assert parse_model("no3way 3 3 3").cols == 27
    assert parse_model("complex 12,13,23 dims 2 2 2").rows == 12
    assert parse_model('{"complex": [[1], [2]], "dims": [2, 2]}').rows == 4
    assert parse_model('{"matrix": [[1, 1, 1]]}').cols == 3
    assert parse_model("lawrence afamily 4").cols == 8
    f = tmp_path / "A.mat"
    f.write_text("1 3\n1 2 3\n")
    assert parse_model(str(f)).matrix.tolist() == [[1, 2, 3]]
    for bad in ("", "nonsense 2", "no3way 2 2", "complex 12 2 2", "{bad json", "independence a b"):
        with pytest.raises(UsageError):
            parse_model(bad)


def test_model_command(capsys):
    code, out, err = run(["model", "independence", "2", "2"], capsys)
    assert code == 0
    assert parse_matrix(out).shape == (4, 4)
    manifest = json.loads(err.strip().splitlines()[-1])
    assert manifest["exit_code"] == 0 and manifest["command_line"][:2] == ["fibertool", "model"]


def test_bases_command(tmp_path, capsys):
    out_path = tmp_path / "g.mat"
    code, out, _ = run(["bases", "--model", "independence 2 3", "--kind", "graver", "-o", str(out_path)], capsys)
    assert code == 0
    summary = json.loads(out)
    assert summary["count"] == len(parse_matrix(out_path.read_text())) == 3
    assert summary["spans_kernel"] and summary["complete"]
    code, _, err = run(["bases", "--model", "independence 2 2", "--kind", "basic"], capsys)
    assert code == 1 and "no3way" in err


def test_nfold_command(tmp_path, capsys):
    A, B = tmp_path / "A.mat", tmp_path / "B.mat"
    A.write_text(format_matrix(np.array([[1, 1, 1]])))
    B.write_text(format_matrix(np.eye(3, dtype=int)))
    code, out, _ = run(["nfold", "--A", str(A), "--B", str(B), "--complexity-only"], capsys)
    assert code == 0 and json.loads(out)["g"] == 3


def test_fiber_commands(sparse_csv, tmp_path, capsys):
    code, out, _ = run(["fiber", "count", "--model", "independence 4 4", "--table", str(sparse_csv)], capsys)
    assert code == 0 and json.loads(out)["count"] == 282
    enum = tmp_path / "pts.txt"
    code, out, _ = run(["fiber", "enumerate", "--model", "independence 4 4", "--table", str(sparse_csv),
                        "-o", str(enum)], capsys)
    assert json.loads(out)["count"] == 282
    code, out, _ = run(["fiber", "connectivity", "--model", "independence 4 4", "--table", str(sparse_csv),
                        "--kind", "lattice"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["component_count"] == 1


def test_cap_exit_code(sparse_csv, capsys, monkeypatch):
    monkeypatch.setenv("FIBERTOOL_CAP", "10")
    code, _, err = run(["fiber", "enumerate", "--model", "independence 4 4", "--table", str(sparse_csv)], capsys)
    assert code == 3 and "cap exceeded" in err
    monkeypatch.setenv("FIBERTOOL_CAP", "lots")
    code, _, _ = run(["fiber", "enumerate", "--model", "independence 4 4", "--table", str(sparse_csv)], capsys)
    assert code == 1


def test_test_command(sparse_csv, tmp_path, capsys):
    trace = tmp_path / "trace.csv"
    manifest = tmp_path / "manifest.json"
    code, out, err = run(["test", "--model", "independence 4 4", "--table", str(sparse_csv),
                          "--chain-length", "2000", "--runs", "2", "--seed", "4",
                          "--trace-csv", str(trace), "--manifest", str(manifest)], capsys)
    assert code == 0 and err == ""
    result = json.loads(out)
    assert abs(result["p_value"] - 1.0) < 0.05
    assert [r["seed"] for r in result["runs"]] == [4, 5]
    assert trace.read_text().startswith("run,window_start")
    m = json.loads(manifest.read_text())
    assert m["seed"] == 4 and str(sparse_csv) in m["inputs"]


def test_counterexample_commands(tmp_path, capsys):
    code, out, _ = run(["counterexample", "thm41", "--n", "5", "-o", str(tmp_path / "t41")], capsys)
    assert code == 0 and json.loads(out)["minimal_q"] == 3
    assert (tmp_path / "t41" / "Lambda.mat").exists()
    code, out, _ = run(["counterexample", "antistair", "--q", "2"], capsys)
    assert code == 0 and json.loads(out)["verified"]
    code, out, _ = run(["counterexample", "theta", "--vec", "1,0"], capsys)
    assert code == 0
    code, out, _ = run(["counterexample", "theta", "--vec", "2,1"], capsys)
    assert code == 2 and not json.loads(out)["matches"]


def test_pipeline_dry_run(tmp_path, capsys):
    code, out, _ = run(["pipeline", "--output-dir", str(tmp_path / "o"), "--dry-run"], capsys)
    plan = json.loads(out)
    assert code == 0 and plan["dry_run"] and [s["step"] for s in plan["plan"]] == ["sparse", "second"]
    assert not (tmp_path / "o").exists()


def test_pipeline_small(tmp_path, capsys):
    code, out, _ = run(["pipeline", "--output-dir", str(tmp_path), "--runs-sparse", "2", "--runs-second", "3",
                        "--chain-length", "500"], capsys)
    assert code == 0
    summary = json.loads(out)
    assert 0 <= summary["second"]["ks_pvalue"] <= 1
    assert len((tmp_path / "second_lattice.csv").read_text().splitlines()) == 4


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 1
    code, _, err = run(["model", "independence", "x"], capsys)
    assert code == 1 and "expected integers" in err


def test_console_script_entry():
    proc = subprocess.run([sys.executable, "-m", "fibertool.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("fibertool")
