import csv

import pytest

from safemerge.cli import atomic_write, fmt, main


def rows(path):
    with open(path, encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


def manifest(path):
    return dict(line.split("=", 1) for line in path.read_text().splitlines())


def test_run_writes_trace_and_manifest(tmp_path):
    assert main(["run", "--config", "builtin:nonstress", "--out", str(tmp_path)]) == 0
    trace = rows(tmp_path / "trace.csv")
    assert len(trace) == 201
    m = manifest(tmp_path / "manifest.txt")
    assert m["command"] == "run" and m["config.horizon_steps"] == "200"
    assert {r["run_id"] for r in trace} == {m["run_id"]}
    assert "trace.csv" in m.values()
    assert not list(tmp_path.glob(".*tmp"))


def test_override_reaches_summary(tmp_path):
    assert main(["run", "--config", "builtin:nonstress", "--out", str(tmp_path), "--set", "alpha_nominal=15"]) == 0
    (s,) = rows(tmp_path / "summary.csv")
    assert float(s["alpha_first"]) == 15
    assert float(rows(tmp_path / "trace.csv")[0]["alpha"]) == 15


def test_missing_config(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "missing.yaml"), "--out", str(tmp_path)]) == 3
    assert "missing.yaml" in capsys.readouterr().err


def test_bad_override_is_config_error(tmp_path, capsys):
    assert main(["run", "--out", str(tmp_path), "--set", "warp=9"]) == 2
    assert "valid keys" in capsys.readouterr().err


def test_parse_error_is_config_error(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text("dt_s: [0.1\n")
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "line" in capsys.readouterr().err


def test_unwritable_out_is_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["run", "--config", "builtin:nonstress", "--out", str(blocker / "sub")]) == 3


def test_zero_trials_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as e:
        main(["validity", "--trials", "0", "--out", str(tmp_path)])
    assert e.value.code == 2


def test_validity_aggregate_is_deterministic(tmp_path):
    args = ["validity", "--trials", "3", "--seed", "4", "--set", "horizon_steps=80"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "aggregate.csv").read_bytes()
    assert a == (tmp_path / "b" / "aggregate.csv").read_bytes()
    agg = {r["metric"]: r["value"] for r in rows(tmp_path / "a" / "aggregate.csv")}
    assert agg["n_trials"] == "3" and "collision_rate" in agg
    assert len(rows(tmp_path / "a" / "trials.csv")) == 3


@pytest.mark.parametrize("config, nonempty", [("builtin:stress", True), ("builtin:nonstress", False)])
def test_compare_zone_file(tmp_path, config, nonempty):
    assert main(["compare", "--config", config, "--out", str(tmp_path)]) == 0
    zones = rows(tmp_path / "zones.csv")
    assert bool([z for z in zones if z["run"] == "fixed"]) is nonempty


def test_sweep_writes_one_trace_per_alpha(tmp_path):
    assert main(["sweep", "--out", str(tmp_path), "--set", "horizon_steps=50"]) == 0
    assert sorted(p.name for p in tmp_path.glob("trace_alpha_*.csv")) == [
        f"trace_alpha_{a}.csv" for a in ("1", "10", "15", "2", "5")
    ]


def test_flags_reach_config(tmp_path):
    assert main(["run", "--config", "builtin:nonstress", "--out", str(tmp_path), "--fixed-alpha", "--paper-coefficient"]) == 0
    m = manifest(tmp_path / "manifest.txt")
    assert m["config.controller.adaptive"] == "false"
    assert m["config.controller.paper_coefficient"] == "true"


@pytest.mark.parametrize(
    "x, s", [(1.0 / 3, "0.333333333"), (True, "true"), (7, "7"), (float("nan"), "nan"), (123456789012.0, "1.23456789e+11")]
)
def test_fmt(x, s):
    assert fmt(x) == s


def test_atomic_write_replaces(tmp_path):
    p = tmp_path / "f.csv"
    atomic_write(p, "a\n")
    atomic_write(p, "b\n")
    assert p.read_text() == "b\n"
    assert [q.name for q in tmp_path.iterdir()] == ["f.csv"]
