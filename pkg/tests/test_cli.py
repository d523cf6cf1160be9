import csv
import json
import math

import pytest

from lattice.params import ProblemParams
from polyharmonic import run
from tests.conftest import find_direction, write_config

ZERO = "'[]'"
COS = '\'[{"q":[1,0],"re":1,"im":0},{"q":[-1,0],"re":1,"im":0},{"q":[0,1],"re":1,"im":0},{"q":[0,-1],"re":1,"im":0}]\''


@pytest.fixture
def direction():
    nu = find_direction(ProblemParams(n=2, l=2, delta=0.9, k=30.0), 30.0, min_margin=5.0)
    return ",".join(repr(x) for x in nu)


def config(tmp_path, **values):
    return write_config(tmp_path / "run.env", **values)


def test_dry_run(tmp_path, capsys):
    path = config(tmp_path, n=2, l=2, delta=0.9, potential=COS)
    assert run(["linear", "--config", path, "--dry-run"]) == 0
    out = json.loads(capsys.readouterr().out)["dry_run"]
    assert out["gamma0"] == pytest.approx(0.2)
    assert out["k1"] == pytest.approx(16.0 ** (1 / 0.9))
    assert out["lattice_size"] == 625
    assert out["window"][1] - out["window"][0] == pytest.approx(2 * 30.0 ** 1.1)


def test_validation_exit_code(tmp_path):
    path = config(tmp_path, n=2, l=2, delta=1.0, potential=COS)
    assert run(["solve", "--config", path]) == 2


def test_parse_error_exit_code(tmp_path):
    path = config(tmp_path, n=2, l="two", potential=COS)
    assert run(["solve", "--config", path]) == 2


def test_resonant_exit_code(tmp_path):
    path = config(tmp_path, n=2, l=2, delta=0.9, t="0,0", k=repr(2 * math.pi), R=3, potential=COS)
    assert run(["verify", "--config", path]) == 3


def test_free_solve(tmp_path, direction):
    path = config(tmp_path, n=2, l=2, delta=0.9, sigma=0.1, R=4, nu=direction, potential=ZERO)
    out = tmp_path / "solve.json"
    trace = tmp_path / "trace.csv"
    assert run(["solve", "--config", path, "--out", str(out), "--csv", str(trace)]) == 0
    report = json.loads(out.read_text(encoding="utf-8"))
    sol = report["solution"]
    assert sol["lambda"] == pytest.approx(sol["k"] ** 4 + 0.1, rel=1e-12)
    assert report["trace"]["iterations"] == 1
    with open(trace, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["m", "star_delta", "bound", "lambda_m", "psi_delta"]
    assert len(rows) == 3


def test_solve_output_is_deterministic(tmp_path, direction):
    path = config(tmp_path, n=2, l=2, delta=0.9, sigma=0.1, R=3, nu=direction, potential=COS)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run(["solve", "--config", path, "--out", str(a)]) == 0
    assert run(["solve", "--config", path, "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_linear_with_oracle(tmp_path, direction):
    path = config(tmp_path, n=2, l=2, delta=0.9, R=3, nu=direction, potential=COS)
    out = tmp_path / "linear.json"
    assert run(["linear", "--config", path, "--oracle", "--out", str(out)]) == 0
    report = json.loads(out.read_text(encoding="utf-8"))
    assert report["dense"]["rel_lambda_diff"] <= 1e-8
    assert report["dense"]["column_diff"] <= 1e-6
    assert all(c["pass"] for c in report["bound_checks"])


def test_verify_free_config(tmp_path, direction):
    path = config(tmp_path, n=2, l=2, delta=0.9, sigma=0.1, R=4, nu=direction, potential=ZERO)
    out = tmp_path / "verify.json"
    assert run(["verify", "--config", path, "--out", str(out)]) == 0
    report = json.loads(out.read_text(encoding="utf-8"))
    assert report["status"] == "ok"
    assert report["residuals"]["residual"] <= 1e-12
    assert all(set(c) == {"name", "lhs", "rhs", "mode", "pass"} for c in report["checks"])


def test_nonres_independent_of_workers(tmp_path):
    path = config(tmp_path, n=2, l=2, delta=0.9, R=3, potential=COS)
    outs = []
    for workers in (1, 3):
        out = tmp_path / f"nonres_{workers}.json"
        table = tmp_path / f"nonres_{workers}.csv"
        code = run([
            "nonres", "--config", path, "--samples", "200", "--seed", "5",
            "--workers", str(workers), "--out", str(out), "--csv", str(table),
        ])
        assert code == 0
        outs.append((out.read_bytes(), table.read_bytes()))
    assert outs[0] == outs[1]
    measure = json.loads(outs[0][0])["measure"]
    assert measure["N"] == 200
    header = outs[0][1].decode("utf-8").splitlines()[0]
    assert header == "nu0,nu1,pass,margin,j0,j1"


def test_isosurface_free_case(tmp_path):
    path = config(tmp_path, n=2, l=2, delta=0.9, sigma=0.1, R=3, seed=4, potential=ZERO)
    out = tmp_path / "iso.json"
    polar = tmp_path / "polar.csv"
    code = run([
        "isosurface", "--config", path, "--lambda", repr(30.0 ** 4), "--samples", "6",
        "--polar", str(polar), "--out", str(out), "--workers", "2",
    ])
    assert code == 0
    report = json.loads(out.read_text(encoding="utf-8"))
    assert report["measure"]["N"] == 6
    assert report["empirical_c"] <= 1e-3
    assert polar.read_text(encoding="utf-8").startswith("theta,kappa")


def test_linear_dump_writes_matrix(tmp_path, direction):
    path = config(tmp_path, n=2, l=2, delta=0.9, R=3, nu=direction, potential=COS)
    dump = tmp_path / "H.txt"
    assert run(["linear", "--config", path, "--dump", str(dump), "--out", str(tmp_path / "o.json")]) == 0
    lines = dump.read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("# basis order")
    assert lines[0].count("(") == 49 + 1
    rows = [line for line in lines if not line.startswith("#")]
    assert len(rows) == 49
    assert all(len(row.split()) == 49 for row in rows)


def test_amplitude_condition_exit_code(tmp_path):
    path = config(tmp_path, n=2, l=2, delta=0.9, sigma=1e6, potential=COS)
    assert run(["linear", "--config", path, "--dry-run"]) == 2
