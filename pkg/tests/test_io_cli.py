import csv
import json
import math

import pytest

from pslip.cli import main
from pslip.io import (
    TRACE_COLUMNS,
    ConfigError,
    ScenarioFile,
    apply_override,
    dump_scenario_file,
    fmt,
    load_scenario_file,
    parse_push,
    scenario_file_from_dict,
    scenario_file_to_dict,
)
from pslip.mpc import MpcWeights
from pslip.presets import PRESETS, get_preset
from pslip.terrain import Push

SHORT = ["--override", "sim.max_steps=6"]


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_fmt_nine_significant_digits():
    assert fmt(1.0 / 3.0) == "0.333333333"
    assert fmt(123456.7891234) == "123456.789"
    assert fmt(True) == "1" and fmt(7) == "7"


def test_round_trip_makes_defaults_explicit(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps({"schema_version": 1, "scenario": {"alpha": 0.25}}))
    sf = load_scenario_file(path)
    assert sf.scenario.alpha == 0.25
    full = scenario_file_to_dict(sf)
    assert "step_width" in full["scenario"] and "dt" in full["sim"]
    assert scenario_file_from_dict(json.loads(json.dumps(full))) == sf


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_round_trip_presets(tmp_path, name):
    sf = ScenarioFile(scenario=get_preset(name), planner=ScenarioFile().planner)
    dump_scenario_file(sf, tmp_path / "p.json")
    assert load_scenario_file(tmp_path / "p.json") == sf


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="alpah"):
        scenario_file_from_dict({"scenario": {"alpah": 0.5}})
    with pytest.raises(ConfigError):
        scenario_file_from_dict({"simulation": {}})
    with pytest.raises(ConfigError):
        scenario_file_from_dict({"planner": {"weights": {"w_t": 1.0}}})


def test_invalid_values_rejected():
    with pytest.raises(ConfigError):
        scenario_file_from_dict({"scenario": {"alpha": 3.0}})
    with pytest.raises(ConfigError):
        scenario_file_from_dict({"schema_version": 99})


def test_override_dotted_keys():
    sf = apply_override(ScenarioFile(), "sim.max_steps", "12")
    assert sf.sim.max_steps == 12
    sf = apply_override(sf, "planner.weights.w_u", "5")
    assert sf.planner.weights == MpcWeights(w_tau=MpcWeights().w_tau, w_u=5.0, w_b=MpcWeights().w_b)
    sf = apply_override(sf, "scenario.elevation_pattern", "periodic")
    assert sf.scenario.elevation_pattern == "periodic"
    with pytest.raises(ConfigError):
        apply_override(sf, "sim.max_stpes", "3")
    with pytest.raises(ConfigError):
        apply_override(sf, "alpha", "0.5")


def test_parse_push():
    assert parse_push("t=6,fx=-50,dur=0.3") == Push(6.0, (-50.0, 0.0, 0.0), 0.3)
    assert parse_push("t=1, fy=20") == Push(1.0, (0.0, 20.0, 0.0), 0.3)
    for bad in ("fx=-50", "t=6,fq=1", "t=six", "t=1,dur=0"):
        with pytest.raises(ConfigError):
            parse_push(bad)


def test_run_preset_c_writes_outputs(tmp_path, capsys):
    out = tmp_path / "c"
    assert main(["run", "--preset", "c", "--out", str(out), "--alpha", "0.5"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["metrics"]["fell"] is False
    assert summary["metrics"]["steps_completed"] == 50
    assert summary["config"]["scenario"]["alpha"] == 0.5
    assert summary["metrics"]["e_avg_mm"] == round(summary["metrics"]["e_avg"] * 1000)
    rows = read_csv(out / "trace.csv")
    assert tuple(rows[0]) == TRACE_COLUMNS
    assert len(rows) > 1000
    events = read_csv(out / "events.csv")
    assert len(events) == 51
    assert "fell=False" in capsys.readouterr().out


def test_summary_e_avg_matches_events(tmp_path):
    out = tmp_path / "b"
    assert main(["run", "--preset", "b", "--out", str(out), *SHORT]) == 0
    events = read_csv(out / "events.csv")
    col = events[0].index("deviation")
    mean = sum(float(r[col]) for r in events[1:]) / (len(events) - 1)
    summary = json.loads((out / "summary.json").read_text())["metrics"]
    assert summary["e_avg"] == pytest.approx(mean, abs=1e-9)
    assert summary["e_avg_mm"] == round(mean * 1000)


def test_run_exit_codes(tmp_path, capsys):
    assert main(["run", "--scenario", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == 2
    assert "missing.json" in capsys.readouterr().err
    assert main(["run", "--preset", "c", "--out", str(tmp_path / "o"), "--override", "sim.max_stpes=3"]) == 2
    assert main(["run", "--preset", "nope", "--out", str(tmp_path / "o")]) == 2
    assert main(["run", "--preset", "c", "--out", str(tmp_path / "o"), "--push", "fx=3"]) == 2
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", "--preset", "c", "--out", str(blocker / "sub"), *SHORT]) == 3


def test_fall_is_exit_zero(tmp_path):
    out = tmp_path / "fall"
    code = main(["run", "--preset", "flat", "--out", str(out), "--push", "t=0.5,fx=900,dur=0.3", *SHORT])
    assert code == 0
    assert json.loads((out / "summary.json").read_text())["metrics"]["fell"] is True


def test_run_from_scenario_file(tmp_path):
    path = tmp_path / "s.json"
    dump_scenario_file(ScenarioFile(scenario=get_preset("a")), path)
    assert main(["run", "--scenario", str(path), "--out", str(tmp_path / "o"), "--horizon", "1", *SHORT]) == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["config"]["planner"]["horizon"] == 1
    assert summary["config"]["scenario"]["elevation_amplitude"] == 0.17


def test_trace_byte_identical(tmp_path):
    for name in ("b", "cam"):
        a, b = tmp_path / f"{name}1", tmp_path / f"{name}2"
        assert main(["run", "--preset", name, "--out", str(a), *SHORT]) == 0
        assert main(["run", "--preset", name, "--out", str(b), *SHORT]) == 0
        assert (a / "trace.csv").read_bytes() == (b / "trace.csv").read_bytes()
        assert (a / "events.csv").read_bytes() == (b / "events.csv").read_bytes()


def test_compare_single_config_matches_run(tmp_path):
    assert main(["run", "--preset", "b", "--out", str(tmp_path / "run"), *SHORT]) == 0
    assert main(["compare", "--preset", "b", "--out", str(tmp_path / "cmp"), *SHORT]) == 0
    run_trace = (tmp_path / "run" / "trace.csv").read_bytes()
    assert (tmp_path / "cmp" / "run_000" / "trace.csv").read_bytes() == run_trace
    rows = read_csv(tmp_path / "cmp" / "comparison.csv")
    assert len(rows) == 2


def test_compare_alpha_sweep_rows(tmp_path):
    out = tmp_path / "cmp"
    code = main(["compare", "--preset", "cam", "--out", str(out), "--sweep", "alpha=0,0.5,1", *SHORT])
    assert code == 0
    rows = read_csv(out / "comparison.csv")
    assert rows[0][:2] == ["run", "alpha"]
    assert [r[1] for r in rows[1:]] == ["0", "0.5", "1"]
    for i, alpha in enumerate((0.0, 0.5, 1.0)):
        summary = json.loads((out / f"run_{i:03d}" / "summary.json").read_text())
        assert summary["config"]["scenario"]["alpha"] == alpha


def test_compare_product_and_parallel_order(tmp_path):
    args = ["--preset", "elevation", "--sweep", "pslip=on,off", "--sweep", "seed=0:2", *SHORT]
    assert main(["compare", "--out", str(tmp_path / "serial"), *args]) == 0
    assert main(["compare", "--out", str(tmp_path / "par"), "--jobs", "2", *args]) == 0
    serial = read_csv(tmp_path / "serial" / "comparison.csv")
    par = read_csv(tmp_path / "par" / "comparison.csv")
    assert [r[:3] for r in serial] == [r[:3] for r in par]
    assert [r[1:3] for r in serial[1:]] == [["on", "0"], ["on", "1"], ["off", "0"], ["off", "1"]]
    e_col = serial[0].index("e_avg")
    assert [r[e_col] for r in serial] == [r[e_col] for r in par]


def test_compare_bad_sweep(tmp_path):
    assert main(["compare", "--preset", "c", "--out", str(tmp_path), "--sweep", "alpha"]) == 2
    assert main(["compare", "--preset", "c", "--out", str(tmp_path), "--sweep", "seed=a:b"]) == 2


def test_presets_listing(capsys):
    assert main(["presets"]) == 0
    out = capsys.readouterr().out
    assert "a: periodic" in out and "+-0.17 m" in out and "(0.2, 0.0, 0.0)" in out
    assert "yaw = +-0.2 rad" in out and "U([-2.5, 2.5] x [-2.5, 2.5] x [-5, 5]) cm" in out
    assert "push t=6 s force=(-50.0, 0.0, 0.0) N" in out
    assert "push t=10 s force=(60.0, 0.0, 0.0) N" in out


def test_summary_nan_becomes_null(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--preset", "flat", "--out", str(out), "--override", "sim.max_steps=1"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["metrics"]["dcm_prediction_error"] is None
    assert not math.isnan(summary["metrics"]["e_avg"])


def test_compare_pslip_over_height_noise(tmp_path):
    out = tmp_path / "z"
    args = ["--preset", "elevation", "--sweep", "zdist=0.1", "--sweep", "pslip=on,off", "--sweep", "seed=0:3"]
    assert main(["compare", "--out", str(out), *args, "--override", "sim.max_steps=20"]) == 0
    rows = read_csv(out / "comparison.csv")
    head = rows[0]
    e_col, p_col = head.index("e_avg"), head.index("pslip")
    on = [float(r[e_col]) for r in rows[1:] if r[p_col] == "on"]
    off = [float(r[e_col]) for r in rows[1:] if r[p_col] == "off"]
    assert len(on) == len(off) == 3
    assert sum(off) / 3 >= sum(on) / 3
