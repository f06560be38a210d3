"""Stepping-stone layouts, adjusted footholds and virtual slopes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import SlopeGradient, Side

Vec3 = tuple[float, float, float]

STONE_HALF_EXTENTS = (0.10, 0.07)  # 0.2 m x 0.14 m stones
_CONTAIN_EPS = 1e-12


@dataclass(frozen=True)
class SteppingStone:
    center: Vec3
    yaw: float = 0.0
    half_extents: tuple[float, float] = STONE_HALF_EXTENTS

    def __post_init__(self):
        if min(self.half_extents) <= 0.0:
            raise ValueError("stone half extents must be positive")


@dataclass(frozen=True)
class Foothold:
    position: Vec3
    side: Side


@dataclass(frozen=True)
class StoneLayout:
    stones: tuple[SteppingStone, ...]
    desired_footholds: tuple[Foothold, ...]

    def __post_init__(self):
        if len(self.stones) != len(self.desired_footholds):
            raise ValueError("one desired foothold per stone is required")
        for a, b in zip(self.desired_footholds, self.desired_footholds[1:]):
            if a.side is b.side:
                raise ValueError("foothold sides must alternate")

    def __len__(self) -> int:
        return len(self.stones)

    @classmethod
    def from_stones(cls, stones, first_side: Side = Side.LEFT) -> "StoneLayout":
        stones = tuple(stones)
        sides = [first_side if i % 2 == 0 else first_side.other() for i in range(len(stones))]
        footholds = tuple(Foothold(tuple(s.center), side) for s, side in zip(stones, sides))
        return cls(stones, footholds)


@dataclass(frozen=True)
class VirtualSlopeSegment:
    s_adj_from: Vec3
    s_adj_to: Vec3
    p_vec: Vec3
    gradient: SlopeGradient


@dataclass(frozen=True)
class Push:
    t_start: float
    force: Vec3
    duration: float = 0.3

    def active(self, t: float) -> bool:
        return self.t_start <= t < self.t_start + self.duration


@dataclass(frozen=True)
class CamPulse:
    """Centroidal angular momentum added instantaneously at time ``t``."""

    t: float
    lcom_x: float = 0.0
    lcom_y: float = 0.0


@dataclass(frozen=True)
class ScenarioConfig:
    """Terrain, disturbance and comparison switches for one closed-loop run.

    Lengths are in meters. ``disturbance`` holds per-axis uniform ranges
    ``((xlo, xhi), (ylo, yhi), (zlo, zhi))`` drawn independently per stone.
    ``elevation_pattern`` is ``"none"``, ``"periodic"`` (stones alternate
    between +amplitude and -amplitude) or ``"random"`` (uniform in +-amplitude).
    """

    name: str = "custom"
    p_init: Vec3 = (0.20, 0.0, 0.0)
    yaw_step: float = 0.0
    disturbance: tuple[tuple[float, float], ...] = ((0.0, 0.0), (0.0, 0.0), (0.0, 0.0))
    elevation_pattern: str = "none"
    elevation_amplitude: float = 0.0
    n_stones: int = 60
    seed: int = 0
    alpha: float = 0.5
    pushes: tuple[Push, ...] = ()
    cam_pulses: tuple[CamPulse, ...] = ()
    pslip_enabled: bool = True
    step_width: float = 0.2
    first_side: Side = Side.LEFT

    def __post_init__(self):
        if self.n_stones < 2:
            raise ValueError("a scenario needs at least two stones")
        if len(self.disturbance) != 3 or any(lo > hi for lo, hi in self.disturbance):
            raise ValueError("disturbance must be three ordered (lo, hi) ranges")
        if self.elevation_pattern not in ("none", "periodic", "random"):
            raise ValueError(f"unknown elevation pattern {self.elevation_pattern!r}")
        if self.elevation_amplitude < 0.0 or self.step_width < 0.0:
            raise ValueError("elevation amplitude and step width must be non-negative")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")


def lateral_sign(side: Side) -> float:
    """Sign of the support-side lateral offset: -1 on the left foot, +1 on the right."""
    return -1.0 if side is Side.LEFT else 1.0


def adjusted_foothold(s_des: Vec3, side: Side, w: float) -> Vec3:
    """Shift a desired foothold by half the signed step width onto the gait centerline."""
    if w < 0.0:
        raise ValueError("step width must be non-negative")
    return (s_des[0], s_des[1] + 0.5 * lateral_sign(side) * w, s_des[2])


def _ratio(p: float, pz: float) -> float:
    den = p * p + pz * pz
    return 0.0 if den == 0.0 else p * pz / den


def virtual_slope(s_adj_from: Vec3, s_adj_to: Vec3) -> VirtualSlopeSegment:
    p = (s_adj_to[0] - s_adj_from[0], s_adj_to[1] - s_adj_from[1], s_adj_to[2] - s_adj_from[2])
    gradient = SlopeGradient(_ratio(p[0], p[2]), _ratio(p[1], p[2]))
    return VirtualSlopeSegment(tuple(s_adj_from), tuple(s_adj_to), p, gradient)


def build_segments(layout: StoneLayout, w: float) -> list[VirtualSlopeSegment]:
    adjusted = [adjusted_foothold(f.position, f.side, w) for f in layout.desired_footholds]
    return [virtual_slope(a, b) for a, b in zip(adjusted, adjusted[1:])]


def gradient_pair(segments: list[VirtualSlopeSegment], i: int) -> tuple[SlopeGradient, SlopeGradient]:
    """Slopes before and after the transition that occurs while standing on stone ``i``.

    The first stone reuses the first segment as its incoming slope and the last
    stone keeps walking out on the final segment.
    """
    if not segments:
        raise IndexError("no virtual slope segments")
    if not 0 <= i <= len(segments):
        raise IndexError(f"stone index {i} outside [0, {len(segments)}]")
    g_pre = segments[max(i - 1, 0)].gradient
    g_post = segments[min(i, len(segments) - 1)].gradient
    return g_pre, g_post


def generate_scenario(config: ScenarioConfig) -> StoneLayout:
    rng = np.random.default_rng(config.seed)
    half_w = 0.5 * config.step_width
    stones = []
    side = config.first_side
    for i in range(config.n_stones):
        draw = [rng.uniform(lo, hi) for lo, hi in config.disturbance]
        if config.elevation_pattern == "periodic":
            elevation = config.elevation_amplitude * (1.0 if i % 2 == 0 else -1.0)
        elif config.elevation_pattern == "random":
            elevation = rng.uniform(-config.elevation_amplitude, config.elevation_amplitude)
        else:
            elevation = 0.0
        center = (
            i * config.p_init[0] + draw[0],
            i * config.p_init[1] + draw[1] - lateral_sign(side) * half_w,
            i * config.p_init[2] + draw[2] + elevation,
        )
        yaw = config.yaw_step * (1.0 if i % 2 == 0 else -1.0)
        stones.append(SteppingStone(tuple(float(c) for c in center), yaw))
        side = side.other()
    return StoneLayout.from_stones(stones, config.first_side)


def stone_contains(stone: SteppingStone, point_xy: tuple[float, float]) -> bool:
    dx = point_xy[0] - stone.center[0]
    dy = point_xy[1] - stone.center[1]
    c, s = math.cos(stone.yaw), math.sin(stone.yaw)
    lx = c * dx + s * dy
    ly = -s * dx + c * dy
    hx, hy = stone.half_extents
    return abs(lx) <= hx + _CONTAIN_EPS and abs(ly) <= hy + _CONTAIN_EPS
