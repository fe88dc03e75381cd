import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from logsing import PolynomialSyntaxError, PreconditionError, SparsePolynomial
from logsing.cli import EXIT_DIVERGENT, EXIT_ERROR, EXIT_OK, main, parse_spec
from logsing.report import CSV_FIELDS, ReportRow, ReportWriter, canonical_json, input_hash, strip_wall_time

SMALL = ["--samples", "32768"]


def run_cli(tmp_path, *argv, name="out.jsonl"):
    out = tmp_path / name
    code = main([*argv, "--output", str(out)])
    lines = out.read_text().splitlines() if out.exists() else []
    return code, [json.loads(line) for line in lines], lines


# -- parsing ---------------------------------------------------------------------------
def test_parse_integrate_example():
    spec = parse_spec(["integrate", "--f", "x1*x2", "--p", "1.0", "--region", "-1,1,-1,1"])
    assert spec.polynomial == SparsePolynomial.parse("x1*x2")
    assert spec.region == [-1.0, 1.0, -1.0, 1.0] and spec.p == 1.0


def test_parse_critical_example():
    spec = parse_spec(["critical-exponent", "--f", "x1^2 + x2^4", "--bracket", "0.5,3.0"])
    assert spec.bracket == [0.5, 3.0]
    assert spec.polynomial == SparsePolynomial.example_family([1, 2])


def test_default_seed_is_fixed():
    assert parse_spec(["integrate", "--f", "x1", "--p", "1"]).seed == parse_spec(["log-lp", "--f", "x1", "--p", "1"]).seed


def test_missing_f_is_an_error(capsys):
    assert main(["integrate", "--p", "1"]) == EXIT_ERROR
    assert "--f" in capsys.readouterr().err


def test_unknown_flag_is_a_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        parse_spec(["integrate", "--f", "x1", "--p", "1", "--bogus", "3"])
    assert exc.value.code == EXIT_ERROR


@pytest.mark.parametrize("argv, err", [
    (["integrate", "--f", "x1 x2", "--p", "1"], PolynomialSyntaxError),
    (["integrate", "--f", "x1*x2", "--p", "1", "--region", "1,-1,-1,1"], ValueError),
    (["integrate", "--f", "x1*x2", "--p", "1", "--region", "-1,1"], PreconditionError),
    (["dimension", "--f", "x1*x2", "--eps", "0.5,0.3,0.125,0.0625"], PreconditionError),
    (["cutoff", "--points", "0,0", "--l", "1", "--p-prime", "1", "--eps", "0.1,0.05,0.025,0.0125"], PreconditionError),
    (["integrate", "--f", "x1*x2", "--p", "-1"], PreconditionError),
])
def test_invalid_specs(argv, err):
    with pytest.raises(err):
        parse_spec(argv)


def test_spec_file_precedence(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps({"command": "integrate", "f": "x1^2 + x2^2", "p": 0.5, "seed": 11, "j-max": 16}))
    spec = parse_spec(["integrate", "--spec", str(path), "--p", "1.5"])
    assert spec.p == 1.5 and spec.seed == 11 and spec.j_max == 16
    assert spec.polynomial == SparsePolynomial.parse("x1^2 + x2^2")


def test_spec_file_rejects_unknown_fields(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps({"f": "x1", "p": 1, "colour": "red"}))
    with pytest.raises(PreconditionError, match="colour"):
        parse_spec(["integrate", "--spec", str(path)])


def test_spec_file_for_other_command(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps({"command": "radial", "f": "x1"}))
    with pytest.raises(PreconditionError):
        parse_spec(["integrate", "--spec", str(path), "--p", "1"])


# -- runs ---------------------------------------------------------------------------------
def test_integrate_product_at_one_is_divergent(tmp_path):
    code, rows, _ = run_cli(tmp_path, "integrate", "--f", "x1*x2", "--p", "1", *SMALL)
    assert code == EXIT_DIVERGENT
    (row,) = rows
    assert row["payload"]["kind"] == "DIVERGENT"
    assert row["command"] == "integrate" and row["schema_version"] == 1
    assert row["input_hash"] == input_hash(row["inputs"])
    assert row["experiment_id"].startswith("integrate-")


def test_convergent_exit_code(tmp_path):
    code, rows, _ = run_cli(tmp_path, "log-lp", "--f", "x1*x2", "--p", "2", *SMALL)
    assert code == EXIT_OK and rows[0]["payload"]["kind"] == "CONVERGENT"


def test_exponents_disk_margin(tmp_path):
    code, rows, _ = run_cli(tmp_path, "exponents", "--f", "x1^2 + x2^2")
    assert code == EXIT_OK
    assert abs(rows[0]["payload"]["inequality_margin"] - 0.5) <= 0.15
    assert "inequality_margin" in rows[0]["error_bars"]


def test_radial_and_critical(tmp_path):
    code, rows, _ = run_cli(tmp_path, "radial", "--f", "x1*x2", "--rays", "5")
    assert code == EXIT_DIVERGENT and rows[0]["payload"]["count"] == 5
    code, rows, _ = run_cli(tmp_path, "critical-exponent", "--f", "x1^2", "--tol", "0.05", *SMALL, name="c.jsonl")
    assert code == EXIT_OK and abs(rows[0]["payload"]["gamma"] - 1.0) <= 0.1


def test_zeroset_and_dimension(tmp_path):
    pts = tmp_path / "z.csv"
    code, rows, _ = run_cli(tmp_path, "zeroset", "--f", "x1*x2", "--count", "500", "--points-csv", str(pts))
    assert code == EXIT_OK and rows[0]["payload"]["accepted"] == 500
    assert rows[0]["payload"]["monotonicity"]["max_changes"] == 0
    assert len(pts.read_text().splitlines()) == 501
    code, rows, _ = run_cli(tmp_path, "dimension", "--f", "x1*x2", name="d.jsonl")
    assert code == EXIT_OK
    assert [r["experiment_id"].split("-")[1] for r in rows] == ["box", "volume"]
    assert all(abs(r["payload"]["dim"] - 1.0) <= 0.15 for r in rows)


def test_cutoff_command(tmp_path):
    cover = tmp_path / "cover.csv"
    code, rows, _ = run_cli(tmp_path, "cutoff", "--points", "0,0", "--l", "1.5", "--p-prime", "1.2",
                            "--cover-csv", str(cover))
    assert code == EXIT_OK
    p = rows[0]["payload"]
    assert p["verdict"] == "ok" and p["support_violations"] == 0 and p["chi_one_near_K"]
    assert abs(p["slope"] - (2 / 1.2 - 1)) <= 0.2
    assert cover.read_text().splitlines()[0] == "level,side,k1,k2"


def test_runtime_error_exit(tmp_path, capsys):
    code, _, _ = run_cli(tmp_path, "zeroset", "--f", "x1^2 + x2^2 + 1", "--count", "100")
    assert code == EXIT_ERROR
    assert "EmptyAfterBudget" in capsys.readouterr().err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "logsing", "radial", "--f", "x1^2 + x2^2", "--omega", "1,0"],
                          capture_output=True, text=True)
    assert proc.returncode == EXIT_DIVERGENT
    assert json.loads(proc.stdout)["payload"]["rays"][0]["vanishing_order"] == 2


# -- reports -------------------------------------------------------------------------------
def test_rerun_is_byte_identical(tmp_path):
    argv = ["integrate", "--f", "x1^2 + x2^4", "--p", "1", *SMALL]
    _, _, a = run_cli(tmp_path, *argv, "--threads", "1", name="a.jsonl")
    _, _, b = run_cli(tmp_path, *argv, "--threads", "1", name="b.jsonl")
    _, _, c = run_cli(tmp_path, *argv, "--threads", "2", name="c.jsonl")
    assert [strip_wall_time(x) for x in a] == [strip_wall_time(x) for x in b] == [strip_wall_time(x) for x in c]


def test_threads_do_not_enter_the_hash():
    a = parse_spec(["integrate", "--f", "x1", "--p", "1", "--threads", "1"])
    b = parse_spec(["integrate", "--f", "x1", "--p", "1", "--threads", "4", "--output", "x.jsonl"])
    assert a.inputs() == b.inputs()


def test_output_is_appended_and_csv_written(tmp_path):
    out, summary = tmp_path / "r.jsonl", tmp_path / "r.csv"
    for p in ("0.9", "1.1"):
        main(["integrate", "--f", "x1*x2", "--p", p, *SMALL, "--output", str(out), "--csv", str(summary)])
    assert len(out.read_text().splitlines()) == 2
    rows = list(csv.DictReader(summary.open()))
    assert tuple(rows[0]) == CSV_FIELDS
    assert [r["verdict"] for r in rows] == ["CONVERGENT", "DIVERGENT"]
    assert rows[0]["experiment_id"] != rows[1]["experiment_id"]


def test_canonical_json_handles_numpy_and_infinities():
    text = canonical_json({"b": np.float64(math.inf), "a": np.int64(3), "c": np.array([1.5, math.nan])})
    assert text == '{"a":3,"b":"inf","c":[1.5,"nan"]}'


@given(st.dictionaries(st.text(max_size=5), st.one_of(st.integers(), st.floats(), st.text(max_size=5)), max_size=5))
def test_row_round_trip(inputs):
    row = ReportRow("integrate", inputs, {"value": 1.0}, {"value": 0.1}, wall_time=0.25)
    line = row.to_json()
    back = json.loads(line)
    assert back["input_hash"] == input_hash(inputs) == row.input_hash
    assert back["wall_time"] == 0.25
    assert strip_wall_time(line) == row.payload_json()


def test_writer_to_stream():
    import io

    buf = io.StringIO()
    with ReportWriter(stream=buf) as w:
        w.write(ReportRow("suite", {"x": 1}, {"passed": True}))
    assert json.loads(buf.getvalue())["payload"] == {"passed": True}
