"""Scenario files (strict JSON) and trace / event / summary writers."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .model import PendulumParams, Side
from .mpc import MpcWeights, PlannerConfig
from .sim import SimConfig, SimTrace
from .terrain import CamPulse, Push, ScenarioConfig

SCHEMA_VERSION = 1

TRACE_COLUMNS = (
    "t", "x", "y", "z", "vx", "vy", "vz", "lcom_x", "lcom_y", "xi_x", "xi_y",
    "contact_x", "contact_y", "contact_z", "side", "step_index", "active_kx", "active_ky",
)
EVENT_COLUMNS = (
    "index", "stone_index", "touchdown_time", "planned_duration",
    "commanded_x", "commanded_y", "commanded_z", "desired_x", "desired_y", "desired_z",
    "deviation", "on_stone", "dcm_offset_x", "dcm_offset_y", "b_nom_x", "b_nom_y", "prediction_error",
)


class ConfigError(ValueError):
    """A scenario file or override could not be turned into a valid configuration."""


@dataclass(frozen=True)
class ScenarioFile:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    params: PendulumParams = field(default_factory=PendulumParams)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    schema_version: int = SCHEMA_VERSION


def fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return "%.9g" % value
    return str(value)


# -- dict conversion ---------------------------------------------------------

def _check_keys(data, allowed, where: str) -> None:
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {', '.join(unknown)}")


def _build(cls, data: dict, where: str, converters: dict | None = None):
    names = [f.name for f in fields(cls)]
    _check_keys(data, names, where)
    converters = converters or {}
    kwargs = {}
    for key, value in data.items():
        conv = converters.get(key)
        try:
            kwargs[key] = conv(value, f"{where}.{key}") if conv else value
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"{where}.{key}: {exc}") from exc
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _vec3(value, where):
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ConfigError(f"{where}: expected three numbers")
    return tuple(float(v) for v in value)


def _ranges(value, where):
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ConfigError(f"{where}: expected three [lo, hi] ranges")
    out = []
    for r in value:
        if not isinstance(r, (list, tuple)) or len(r) != 2:
            raise ConfigError(f"{where}: each range needs exactly [lo, hi]")
        out.append((float(r[0]), float(r[1])))
    return tuple(out)


def _pushes(value, where):
    return tuple(
        _build(Push, item, f"{where}[{i}]", {"force": _vec3}) for i, item in enumerate(value)
    )


def _pulses(value, where):
    return tuple(_build(CamPulse, item, f"{where}[{i}]") for i, item in enumerate(value))


def _side(value, where):
    try:
        return Side(value)
    except ValueError:
        raise ConfigError(f"{where}: side must be 'left' or 'right'") from None


def _weights(value, where):
    return _build(MpcWeights, value, where)


_SCENARIO_CONV = {
    "p_init": _vec3,
    "disturbance": _ranges,
    "pushes": _pushes,
    "cam_pulses": _pulses,
    "first_side": _side,
}


def scenario_file_from_dict(data: dict) -> ScenarioFile:
    _check_keys(data, ("schema_version", "scenario", "sim", "params", "planner"), "file")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    return ScenarioFile(
        scenario=_build(ScenarioConfig, data.get("scenario", {}), "scenario", _SCENARIO_CONV),
        sim=_build(SimConfig, data.get("sim", {}), "sim"),
        params=_build(PendulumParams, data.get("params", {}), "params"),
        planner=_build(PlannerConfig, data.get("planner", {}), "planner", {"weights": _weights}),
        schema_version=version,
    )


def _plain(obj):
    if isinstance(obj, Side):
        return obj.value
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def scenario_file_to_dict(sf: ScenarioFile) -> dict:
    return {
        "schema_version": sf.schema_version,
        "scenario": _plain(asdict(sf.scenario)),
        "sim": _plain(asdict(sf.sim)),
        "params": _plain(asdict(sf.params)),
        "planner": _plain(asdict(sf.planner)),
    }


def load_scenario_file(path) -> ScenarioFile:
    """Parse a scenario file. Missing or malformed files raise ``ConfigError``."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return scenario_file_from_dict(data)


def dump_scenario_file(sf: ScenarioFile, path) -> None:
    Path(path).write_text(json.dumps(scenario_file_to_dict(sf), indent=2) + "\n")


def apply_override(sf: ScenarioFile, key: str, raw: str) -> ScenarioFile:
    """Set a dotted ``block.field`` (or ``planner.weights.field``) from a JSON-ish value."""
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    data = scenario_file_to_dict(sf)
    parts = key.split(".")
    if len(parts) < 2 or parts[0] not in ("scenario", "sim", "params", "planner"):
        raise ConfigError(f"override key {key!r} must look like block.field")
    node = data
    for part in parts[:-1]:
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"override key {key!r}: unknown field {part!r}")
        node = node[part]
    if not isinstance(node, dict) or parts[-1] not in node:
        raise ConfigError(f"override key {key!r}: unknown field {parts[-1]!r}")
    node[parts[-1]] = value
    return scenario_file_from_dict(data)


def parse_push(text: str) -> Push:
    """Parse ``"t=6,fx=-50,dur=0.3"``; ``fy``/``fz`` default to zero."""
    allowed = {"t", "fx", "fy", "fz", "dur"}
    values = {}
    for item in text.split(","):
        name, sep, val = item.partition("=")
        name = name.strip()
        if not sep or name not in allowed:
            raise ConfigError(f"bad push term {item!r}; use t=..,fx=..,fy=..,fz=..,dur=..")
        try:
            values[name] = float(val)
        except ValueError:
            raise ConfigError(f"bad push value {item!r}") from None
    if "t" not in values:
        raise ConfigError("push needs a start time t=")
    force = (values.get("fx", 0.0), values.get("fy", 0.0), values.get("fz", 0.0))
    dur = values.get("dur", 0.3)
    if dur <= 0.0:
        raise ConfigError("push duration must be positive")
    return Push(values["t"], force, dur)


def with_scenario(sf: ScenarioFile, **changes) -> ScenarioFile:
    try:
        return replace(sf, scenario=replace(sf.scenario, **changes))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


# -- outputs -----------------------------------------------------------------

def write_trace_csv(trace: SimTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for s in trace.samples:
            st, c, g = s.state, s.contact, s.gradient
            row = (
                s.t, st.x, st.y, st.z, st.vx, st.vy, st.vz, st.lcom_x, st.lcom_y,
                s.dcm.xi_x, s.dcm.xi_y, c.sx, c.sy, c.sz, c.side.value, s.step_index, g.kx, g.ky,
            )
            writer.writerow([fmt(v) for v in row])


def write_events_csv(trace: SimTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(EVENT_COLUMNS)
        for e in trace.events:
            row = (
                e.index, e.stone_index, e.touchdown_time, e.planned_duration,
                *e.commanded_position, *e.desired_position,
                e.deviation, e.on_stone, *e.dcm_offset, *e.b_nom, e.prediction_error,
            )
            writer.writerow([fmt(v) for v in row])


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def summary_dict(trace: SimTrace, sf: ScenarioFile) -> dict:
    metrics = dict(trace.metrics)
    if "e_avg" in metrics and math.isfinite(metrics["e_avg"]):
        metrics["e_avg_mm"] = round(metrics["e_avg"] * 1000.0)
    return _json_safe({"metrics": metrics, "config": scenario_file_to_dict(sf)})


def write_outputs(trace: SimTrace, sf: ScenarioFile, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trace_csv(trace, out / "trace.csv")
    write_events_csv(trace, out / "events.csv")
    (out / "summary.json").write_text(json.dumps(summary_dict(trace, sf), indent=2) + "\n")
    return out
