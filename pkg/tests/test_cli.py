"""Command-line behavior: exit codes, output files, determinism.

Runs the entry point in process via ``main(argv)``; byte-level
determinism across separate OS processes is covered by the acceptance
suite.
"""

import json

import numpy as np
import pytest

from oslogit import cli
from oslogit.asymptotics import MatrixEstimates, PropositionReport
from oslogit.designs import generate, make_generator
from oslogit.ingest import write_csv

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


@pytest.fixture(scope="module")
def data_file(tmp_path_factory):
    gen = make_generator("mzNormal", 3)
    data = generate(gen, 3000, np.full(3, 0.5), seed=77)
    X, y = data.arrays
    path = tmp_path_factory.mktemp("data") / "train.csv"
    write_csv(X, y, str(path))
    return str(path)


def test_estimate_writes_json(data_file, tmp_path):
    out = tmp_path / "est.json"
    code = cli.main([
        "estimate", "--data", data_file, "--n1", "150", "--n", "400",
        "--method", "replacement", "--h", "mvc", "--seed", "5",
        "--out", str(out),
    ])
    assert code == 0
    payload = json.loads(out.read_text())
    assert len(payload["beta_check"]) == 3
    assert payload["variance"] == "full"
    assert len(payload["vcov"]) == 3
    diag = payload["diagnostics"]
    assert diag["n_rows"] == 3000
    assert diag["dim"] == 3
    assert diag["pilot_converged"] and diag["stage_converged"]
    # counting pass + pilot gather + scoring pass + stage gather
    assert diag["passes"] == 4
    # the estimate should be in the neighborhood of the generator
    assert np.max(np.abs(np.array(payload["beta_check"]) - 0.5)) < 0.6


def test_estimate_poisson_pass_budget(data_file, tmp_path):
    out = tmp_path / "est.json"
    code = cli.main([
        "estimate", "--data", data_file, "--n-rows", "3000",
        "--n1", "150", "--n", "400", "--method", "poisson", "--seed", "5",
        "--out", str(out),
    ])
    assert code == 0
    diag = json.loads(out.read_text())["diagnostics"]
    # no counting pass (row count supplied): pilot scan + stage scan
    assert diag["passes"] == 2
    assert diag["rows_read"] == 2 * 3000


def test_estimate_weighted_has_no_vcov(data_file, tmp_path):
    out = tmp_path / "est.json"
    code = cli.main([
        "estimate", "--data", data_file, "--n1", "150", "--n", "400",
        "--method", "weighted", "--seed", "5", "--out", str(out),
    ])
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["vcov"] is None
    assert payload["variance"] is None


def test_estimate_is_deterministic(data_file, tmp_path):
    args = [
        "estimate", "--data", data_file, "--n1", "150", "--n", "400",
        "--method", "replacement", "--seed", "9",
    ]
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert cli.main(args + ["--out", str(a)]) == 0
    assert cli.main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_subsample_replacement_output(data_file, tmp_path):
    out = tmp_path / "sub.csv"
    code = cli.main([
        "subsample", "--data", data_file, "--n1", "150", "--n", "200",
        "--method", "replacement", "--seed", "3", "--out", str(out),
    ])
    assert code == 0
    lines = out.read_text().strip().split("\n")
    assert lines[0] == "origin_index,prob,weight,y,x0,x1,x2"
    assert len(lines) == 201  # header + one row per draw
    first = lines[1].split(",")
    assert int(first[0]) >= 0
    assert float(first[1]) > 0
    assert float(first[2]) == 1.0
    assert first[3] in {"0", "1"}


def test_subsample_poisson_weights_capped(data_file, tmp_path):
    out = tmp_path / "sub.csv"
    code = cli.main([
        "subsample", "--data", data_file, "--n1", "150", "--n", "200",
        "--method", "poisson", "--seed", "3", "--out", str(out),
    ])
    assert code == 0
    rows = [line.split(",") for line in out.read_text().strip().split("\n")[1:]]
    weights = np.array([float(r[2]) for r in rows])
    probs = np.array([float(r[1]) for r in rows])
    assert np.allclose(weights, np.maximum(200 * probs, 1.0), rtol=1e-9, atol=0)


def test_simulate_writes_tables_and_figures(tmp_path):
    plan = {
        "generator": "mzNormal", "N": 2000, "d": 3, "beta_t": 0.5,
        "n1": 120, "n_grid": [300], "S": 6, "h": ["mvc"],
    }
    plan_path = tmp_path / "plan.json"
    plan_path.write_text(json.dumps(plan))
    out = tmp_path / "runs"
    code = cli.main(["simulate", "--plan", str(plan_path), "--seed", "2",
                     "--out", str(out)])
    assert code == 0
    results = (out / "results.csv").read_text().strip().split("\n")
    assert results[0] == "estimator,h,n,metric,value"
    assert len(results) > 10
    payload = json.loads((out / "results.json").read_text())
    assert payload["plan"]["generator"] == "mzNormal"
    assert len(payload["cells"]) == 3
    assert (out / "calibration.csv").exists()
    for fig in ("relative_efficiency.png", "calibration.png"):
        content = (out / fig).read_bytes()
        assert content.startswith(PNG_MAGIC)
        assert len(content) > 1000


def test_simulate_no_figures_flag(tmp_path):
    plan = {
        "generator": "mzNormal", "N": 1500, "d": 2, "beta_t": 0.4,
        "n1": 100, "n_grid": [200], "S": 4, "h": ["unit"],
        "estimators": ["replacement"],
    }
    plan_path = tmp_path / "plan.json"
    plan_path.write_text(json.dumps(plan))
    out = tmp_path / "runs"
    code = cli.main(["simulate", "--plan", str(plan_path), "--seed", "2",
                     "--out", str(out), "--no-figures"])
    assert code == 0
    assert not list(out.glob("*.png"))


def test_verify_asymptotics_stdout(capsys):
    code = cli.main([
        "verify-asymptotics", "--generator", "mzNormal", "--d", "2",
        "--beta-t", "0.5", "--h", "unit,mvc", "--rho", "0,0.5",
        "--mc", "20000", "--seed", "1",
    ])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["all_ok"] is True
    assert len(payload["configs"]) == 4
    by_key = {(c["h"], c["rho"]): c for c in payload["configs"]}
    assert by_key[("unit", 0.5)]["efficiency_equality"] is True
    assert by_key[("mvc", 0.5)]["efficiency_equality"] is False
    assert by_key[("mvc", 0.5)]["poisson_strict"] is True


def test_verify_asymptotics_failure_exit_code(monkeypatch, tmp_path):
    def failing(gen, beta, h, rho, mc, seed):
        est = MatrixEstimates(
            sigma=np.eye(1), v_os=np.eye(1), m=np.eye(1),
            lambda_rho=np.eye(1), lambda_u=np.eye(1),
            phi_bar=0.1, rho=rho, h_kind="norm", mc=mc, dropped=0,
        )
        return PropositionReport(
            estimates=est, tol=0.1, efficiency_ok=False,
            efficiency_equality=False, poisson_conditional_ok=True,
            poisson_strict=True, poisson_unconditional_ok=True,
        )

    monkeypatch.setattr(cli, "verify_propositions", failing)
    out = tmp_path / "verify.json"
    code = cli.main([
        "verify-asymptotics", "--generator", "mzNormal", "--d", "1",
        "--beta-t", "0.5", "--mc", "2000", "--out", str(out),
    ])
    assert code == 4
    assert json.loads(out.read_text())["all_ok"] is False


def test_bench_runs_memory_backing(tmp_path):
    out = tmp_path / "bench"
    code = cli.main([
        "bench", "--n-grid", "2000", "--d", "2", "--n1", "80", "--n", "200",
        "--backing", "memory", "--seed", "3", "--out", str(out), "--no-figures",
    ])
    assert code == 0
    lines = (out / "bench.csv").read_text().strip().split("\n")
    assert lines[0] == "method,N,backing,seconds,passes,rows_read"
    assert len(lines) == 5


def test_missing_file_exits_2(tmp_path):
    code = cli.main(["estimate", "--data", str(tmp_path / "nope.csv"),
                     "--n", "100", "--out", str(tmp_path / "o.json")])
    assert code == 2


def test_bad_labels_exit_2(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("2,1.0\n0,2.0\n1,0.5\n")
    code = cli.main(["estimate", "--data", str(path), "--n1", "2",
                     "--n", "2", "--out", str(tmp_path / "o.json")])
    assert code == 2


def test_single_class_labels_exit_3(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.standard_normal((300, 2))
    y = np.ones(300)
    path = tmp_path / "ones.csv"
    write_csv(X, y, str(path))
    code = cli.main(["estimate", "--data", str(path), "--n1", "50",
                     "--n", "100", "--out", str(tmp_path / "o.json")])
    assert code == 3


def test_invalid_plan_exits_2(tmp_path):
    plan_path = tmp_path / "plan.json"
    plan_path.write_text('{"generator": "mzNormal", "N": 100}')
    code = cli.main(["simulate", "--plan", str(plan_path),
                     "--out", str(tmp_path / "out")])
    assert code == 2
    plan_path.write_text("{not json")
    code = cli.main(["simulate", "--plan", str(plan_path),
                     "--out", str(tmp_path / "out")])
    assert code == 2


def test_bad_prior_exits_2(data_file, tmp_path):
    code = cli.main(["estimate", "--data", data_file, "--p-pr", "1.5",
                     "--n", "100", "--out", str(tmp_path / "o.json")])
    assert code == 2


def test_argparse_rejects_unknown_arguments():
    with pytest.raises(SystemExit) as exc:
        cli.main(["estimate", "--no-such-flag"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["estimate"])  # --data, --n, --out are required
    assert exc.value.code == 2


def test_help_exits_zero(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--help"])
    assert exc.value.code == 0
    assert "subsample" in capsys.readouterr().out


def test_entropy_flag_changes_outputs(data_file, tmp_path):
    args = ["subsample", "--data", data_file, "--n1", "60", "--n", "50",
            "--entropy"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.main(args + ["--out", str(a)]) == 0
    assert cli.main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() != b.read_bytes()
