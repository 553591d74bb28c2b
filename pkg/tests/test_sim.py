"""Experiment harness: plan validation, replication bookkeeping,
reproducibility, and the timing benchmark's pass accounting."""

import numpy as np
import pytest

from oslogit.errors import ConfigError
from oslogit.sim import (
    CALIBRATION_BAND,
    ExperimentPlan,
    calibration_table,
    run_experiment,
    timing_benchmark,
)


def tiny_plan(**overrides):
    base = dict(
        generator="mzNormal",
        N=2000,
        d=3,
        beta_t=0.5,
        n1=120,
        n_grid=(300,),
        S=6,
        h=("mvc",),
        conditional=True,
    )
    base.update(overrides)
    return ExperimentPlan(**base)


# ------------------------------------------------------------------- plan


def test_plan_broadcasts_scalar_beta():
    plan = tiny_plan()
    assert np.array_equal(plan.beta_t, np.full(3, 0.5))


def test_plan_validation_errors():
    with pytest.raises(ConfigError):
        tiny_plan(generator="nope")
    with pytest.raises(ConfigError):
        tiny_plan(beta_t=np.zeros(2))
    with pytest.raises(ConfigError):
        tiny_plan(n1=0)
    with pytest.raises(ConfigError):
        tiny_plan(n_grid=())
    with pytest.raises(ConfigError):
        tiny_plan(n_grid=(5000,))  # n1 + n exceeds N
    with pytest.raises(ConfigError):
        tiny_plan(estimators=("weighted", "mystery"))
    with pytest.raises(ConfigError):
        tiny_plan(variance="sandwich2")
    with pytest.raises(ConfigError):
        tiny_plan(pilot_mode="always")


def test_plan_dict_round_trip():
    plan = tiny_plan(n_grid=(300, 400), h=("unit", "mvc"), conditional=False)
    again = ExperimentPlan.from_dict(plan.to_dict())
    assert again.to_dict() == plan.to_dict()


def test_plan_from_dict_rejects_unknown_and_missing_keys():
    with pytest.raises(ConfigError, match="unknown"):
        ExperimentPlan.from_dict({"generator": "mzNormal", "N": 100, "d": 2,
                                  "beta_t": 0.5, "bogus": 1})
    with pytest.raises(ConfigError, match="missing"):
        ExperimentPlan.from_dict({"generator": "mzNormal", "N": 100})


# -------------------------------------------------------------- experiment


def test_run_experiment_produces_complete_cells():
    plan = tiny_plan()
    result = run_experiment(plan, seed=11)
    assert len(result.rows) == 3  # one per estimator
    for est in ("weighted", "replacement", "poisson"):
        row = result.row(est, "mvc", 300)
        assert row.replications + row.failures == plan.S
        assert row.mse > 0
        assert row.rel_eff is not None
    assert result.row("weighted", "mvc", 300).rel_eff == pytest.approx(1.0)
    assert result.row("weighted", "mvc", 300).mean_tr_v is None
    assert result.row("replacement", "mvc", 300).mean_tr_v > 0
    with pytest.raises(KeyError):
        result.row("weighted", "mvc", 999)


def test_run_experiment_is_reproducible():
    plan = tiny_plan()
    a = run_experiment(plan, seed=21)
    b = run_experiment(plan, seed=21)
    assert a.to_dict() == b.to_dict()
    c = run_experiment(plan, seed=22)
    assert a.to_dict() != c.to_dict()


def test_unconditional_runs_regenerate_data():
    plan = tiny_plan(conditional=False, S=4)
    result = run_experiment(plan, seed=5)
    assert all(r.replications > 0 for r in result.rows)


def test_subset_of_estimators():
    plan = tiny_plan(estimators=("replacement",))
    result = run_experiment(plan, seed=7)
    assert [r.estimator for r in result.rows] == ["replacement"]
    assert result.rows[0].rel_eff is None  # no weighted baseline in the run


def test_long_frame_shape_and_no_runtime():
    result = run_experiment(tiny_plan(), seed=3)
    frame = result.to_long_frame()
    assert set(frame.columns) == {"estimator", "h", "n", "metric", "value"}
    assert "runtime_s" not in set(frame["metric"])
    wide = result.to_frame()
    assert "runtime_s" not in wide.columns


def test_calibration_table_contents():
    result = run_experiment(tiny_plan(S=10), seed=9)
    table = calibration_table(result)
    # weighted rows carry no variance estimate, so two rows remain
    assert set(table["estimator"]) == {"replacement", "poisson"}
    lo, hi = CALIBRATION_BAND
    for _, row in table.iterrows():
        assert row["ratio"] == pytest.approx(row["mean_tr_v"] / row["empirical_mse"])
        assert row["flagged"] == (not lo <= row["ratio"] <= hi)


# ------------------------------------------------------------------- bench


def check_bench_frame(frame, N):
    by_method = {m: frame[frame["method"] == m].iloc[0] for m in frame["method"]}
    assert set(by_method) == {"poisson", "replacement", "weighted", "full"}
    # pass counts are structural: one pilot scan plus one stage scan for
    # the Poisson pipeline; pilot gather, scoring pass, stage gather for
    # the with-replacement pipelines; one pass per Newton step plus the
    # initial evaluation for the full MLE
    assert by_method["poisson"]["passes"] == 2
    assert by_method["replacement"]["passes"] == 3
    assert by_method["weighted"]["passes"] == 3
    assert by_method["full"]["passes"] >= 4
    assert by_method["poisson"]["rows_read"] == 2 * N
    assert by_method["full"]["rows_read"] == by_method["full"]["passes"] * N
    assert (frame["seconds"] >= 0).all()


def test_timing_benchmark_memory_backing():
    N = 3000
    frame = timing_benchmark([N], d=3, n1=100, n=300, backing="memory", seed=1)
    assert len(frame) == 4
    check_bench_frame(frame, N)


def test_timing_benchmark_file_backing(tmp_path):
    N = 3000
    frame = timing_benchmark([N], d=3, n1=100, n=300, backing="file",
                             seed=1, workdir=str(tmp_path))
    check_bench_frame(frame, N)
    assert (frame["backing"] == "file").all()


def test_timing_benchmark_validation():
    with pytest.raises(ConfigError):
        timing_benchmark([100], d=2, n1=10, n=20, backing="tape")
