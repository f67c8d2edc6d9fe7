import json

import numpy as np
import pytest

from cfran import harness as H
from cfran import cli

SMALL = dict(L=4, K=2, n_mc=40, seeds=[1, 2], se_targets=[0.3], solver="ccp", permutations=2)


def small(**kw):
    return H.ExperimentConfig(**{**SMALL, **kw})


@pytest.fixture(scope="module")
def records():
    return H.run_experiment(small())


def test_record_cardinality(records):
    # 2 seeds x 1 target x 3 schemes
    assert len(records) == 6
    assert {r.scheme for r in records} == set(H.SCHEMES)
    assert all(r.feasible for r in records)


def test_breakdown_sums_to_total(records):
    for r in records:
        if r.feasible:
            assert sum(r.breakdown.values()) == pytest.approx(r.total_power, abs=1e-6)
        else:
            assert r.total_power is None and r.breakdown is None


def test_scheme_ordering_in_records(records):
    by = {(r.seed, r.scheme): r for r in records if r.feasible}
    for seed in SMALL["seeds"]:
        if (seed, "end_to_end") in by:
            e, l, o = (by[(seed, s)].total_power for s in H.SCHEMES)
            assert e <= l + 1e-9 <= o + 2e-9


def test_csv_roundtrip(records, tmp_path):
    (path,) = H.emit(records, tmp_path, formats=("csv",))
    back = H.read_csv(path)
    assert [r.row() for r in back] == [r.row() for r in records]
    text = path.read_text().splitlines()
    assert text[0].split(",") == list(H.CSV_COLUMNS)


def test_json_and_plotdata(records, tmp_path):
    paths = H.emit(records, tmp_path, config=small().to_dict())
    doc = json.loads((tmp_path / "results.json").read_text())
    assert len(doc["records"]) == len(records) and doc["config"]["L"] == 4
    plots = [p for p in paths if p.name.startswith("plot_")]
    assert len(plots) == 3
    lines = plots[0].read_text().splitlines()
    assert lines[0].startswith("x,mean_power") and len(lines) == 2


def test_emit_rejects_empty(tmp_path):
    with pytest.raises(ValueError):
        H.emit([], tmp_path)


def test_rerun_is_identical(records):
    again = H.run_experiment(small(), deterministic=True)
    strip = lambda rs: [{k: v for k, v in r.row().items() if k != "wall_time"} for r in rs]
    assert strip(again) == strip(records)


def test_stats_cache_reused_across_axis_points():
    cache = H.StatsCache()
    H.run_experiment(small(seeds=[1], se_targets=[0.2, 0.3]), cache=cache)
    assert cache.misses == 1


def rec(seed, feasible, power=None):
    bd = None if not feasible else {k: 0.0 for k in H.BREAKDOWN_KEYS} | {"fixed": power}
    return H.ResultRecord(seed, "small_cell", "end_to_end", "8", "se_target", 2.0, feasible, "x", power, bd, 1.0 if feasible else None)


def test_aggregation_suppresses_low_feasibility():
    rows = H.aggregate([rec(0, True, 100.0), rec(1, False), rec(2, False)])
    (row,) = rows
    assert row["suppressed"] and row["feasibility_ratio"] == pytest.approx(1 / 3)
    assert row["mean_power"] == 100.0  # averages use feasible seeds only
    (row,) = H.aggregate([rec(0, True, 100.0), rec(1, True, 200.0), rec(2, False)])
    assert not row["suppressed"] and row["mean_power"] == 150.0


def test_infeasible_points_do_not_abort():
    recs = H.run_experiment(small(seeds=[1], se_targets=[9.0]))
    assert recs and not any(r.feasible for r in recs)


def test_config_validation():
    with pytest.raises(H.ConfigError):
        small(schemes=[])
    with pytest.raises(H.ConfigError):
        small(seeds=[])
    with pytest.raises(H.ConfigError):
        small(solver="exact", L=16, K=8)
    with pytest.raises(H.ConfigError):
        small(schemes=["bogus"])
    with pytest.raises(H.ConfigError):
        small(system={"N": 0})


def test_yaml_unknown_keys_rejected(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("experiment:\n  L: 4\n  colour: red\n")
    with pytest.raises(H.ConfigError, match="colour"):
        H.load_config(p)
    p.write_text("power:\n  P_fixed: 100\n  nonsense: 1\n")
    with pytest.raises(H.ConfigError, match="power.nonsense"):
        H.load_config(p)
    p.write_text("experiment:\n  L: 4\n  K: 2\npower:\n  P_fixed: 100\nsystem:\n  p_max: 0.5\n")
    ec = H.load_config(p)
    assert ec.L == 4 and ec.power_params().P_fixed == 100 and ec.system_config().p_max == 0.5


def test_se90_is_tenth_percentile():
    assert H.se90(np.arange(11.0)) == pytest.approx(1.0)


def test_parse_seeds():
    assert cli.parse_seeds("3..5") == [3, 4, 5]
    assert cli.parse_seeds("1,4") == [1, 4]


def test_cli_config_error_exit_code(tmp_path, capsys):
    p = tmp_path / "c.yaml"
    p.write_text("experiment:\n  wrong: 1\n")
    assert cli.main(["--config", str(p), "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err


def test_cli_all_failed_exit_code(tmp_path):
    argv = ["--seeds", "1..1", "--se-target", "9", "--mc", "20", "--out", str(tmp_path), "--deterministic"]
    assert cli.main(argv + ["--solver", "ccp"]) == cli.EXIT_ALL_FAILED


def test_cli_deterministic_csv_bytes(tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        argv = ["--seeds", "1..2", "--se-target", "0.3", "--mc", "30", "--out", str(out), "--deterministic"]
        cfg = tmp_path / "c.yaml"
        cfg.write_text("experiment:\n  L: 4\n  K: 2\n  permutations: 2\n")
        assert cli.main(["--config", str(cfg)] + argv) == cli.EXIT_OK
        outs.append(out / "results.csv")
    drop = lambda p: [",".join(line.split(",")[:-1]) for line in p.read_text().splitlines()]
    assert drop(outs[0]) == drop(outs[1])


def test_sum_se_sweep_records():
    recs = H.run_experiment(small(objective="sum_se", lambdas=[5.0], seeds=[1], schemes=["end_to_end"]))
    (r,) = recs
    assert r.axis == "lambda" and r.feasible and r.sum_se > 0
