"""Built-in scenarios: the three stepping-stone rows, plus the CAM-injection
and elevation-disturbance studies."""

from __future__ import annotations

from .terrain import CamPulse, Push, ScenarioConfig

# Per-axis uniform disturbance of the randomized 3D stepping stones [m].
ROW_B_DISTURBANCE = ((-0.025, 0.025), (-0.025, 0.025), (-0.05, 0.05))

# Backward 50 N around 6 s, forward 60 N around 10 s.
ROW_C_PUSHES = (
    Push(6.0, (-50.0, 0.0, 0.0), 0.3),
    Push(10.0, (60.0, 0.0, 0.0), 0.3),
)

# Lateral-sagittal CAM kicks of alternating sign every 1.5 s [kg m^2/s].
CAM_PULSES = tuple(CamPulse(1.0 + 1.5 * i, 0.0, 3.0 * (-1) ** i) for i in range(16))


def _build() -> dict[str, ScenarioConfig]:
    return {
        "a": ScenarioConfig(
            name="a",
            p_init=(0.20, 0.0, 0.0),
            elevation_pattern="periodic",
            elevation_amplitude=0.17,
        ),
        "b": ScenarioConfig(
            name="b",
            p_init=(0.20, 0.0, 0.10),
            yaw_step=0.2,
            disturbance=ROW_B_DISTURBANCE,
            seed=1,
        ),
        "c": ScenarioConfig(name="c", p_init=(0.20, 0.0, 0.0), pushes=ROW_C_PUSHES),
        "flat": ScenarioConfig(name="flat", p_init=(0.20, 0.0, 0.0)),
        "cam": ScenarioConfig(name="cam", p_init=(0.20, 0.0, 0.0), cam_pulses=CAM_PULSES),
        "elevation": ScenarioConfig(
            name="elevation",
            p_init=(0.20, 0.0, 0.0),
            disturbance=((0.0, 0.0), (0.0, 0.0), (-0.10, 0.10)),
        ),
    }


PRESETS: dict[str, ScenarioConfig] = _build()

DESCRIPTIONS = {
    "a": "periodic stone heights alternating +-0.17 m",
    "b": "randomized 3D stones: yaw +-0.2 rad, 0.1 m rise per step, position noise",
    "c": "flat stones with a -50 N push at 6 s and a +60 N push at 10 s (0.3 s each)",
    "flat": "flat periodic stones without disturbances",
    "cam": "flat stones with alternating CAM pulses for the alpha comparison",
    "elevation": "flat layout with uniform height noise in +-0.10 m",
}


def get_preset(name: str) -> ScenarioConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None


def describe(name: str) -> str:
    sc = get_preset(name)
    lines = [f"{name}: {DESCRIPTIONS[name]}", f"  p_init = {sc.p_init} m"]
    if sc.elevation_pattern != "none":
        lines.append(f"  elevation = {sc.elevation_pattern} +-{sc.elevation_amplitude:g} m")
    if sc.yaw_step:
        lines.append(f"  yaw = +-{sc.yaw_step:g} rad")
    if any(lo or hi for lo, hi in sc.disturbance):
        ranges = " x ".join(f"[{lo * 100:g}, {hi * 100:g}]" for lo, hi in sc.disturbance)
        lines.append(f"  disturbance = U({ranges}) cm")
    for push in sc.pushes:
        lines.append(f"  push t={push.t_start:g} s force={push.force} N dur={push.duration:g} s")
    if sc.cam_pulses:
        lines.append(f"  {len(sc.cam_pulses)} CAM pulses from t={sc.cam_pulses[0].t:g} s")
    return "\n".join(lines)
