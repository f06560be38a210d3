"""Piecewise-slope inverted pendulum: continuous flow, slope-transition reset and
the generalized angular-momentum velocity (G-ALIP).

All functions work in a persistent world frame. Horizontal coordinates are taken
relative to the support contact, and heights relative to ``contact.sz``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

GRAVITY = 9.81  # [m/s^2]
GUARD_TOL = 1e-6  # [m]
SINGULAR_TOL = 1e-6
PRE_SLOPE_TOL = 1e-6  # [m/s]


class SingularTransition(ArithmeticError):
    """The slope-transition denominator vanished."""


class PreSlopeViolation(ValueError):
    """Pre-transition velocity does not lie on the pre-transition slope."""


class Side(enum.Enum):
    LEFT = "left"
    RIGHT = "right"

    def other(self) -> "Side":
        return Side.RIGHT if self is Side.LEFT else Side.LEFT


@dataclass(frozen=True)
class SlopeGradient:
    kx: float = 0.0
    ky: float = 0.0

    def __post_init__(self):
        if not (abs(self.kx) < 1.0 and abs(self.ky) < 1.0):
            raise ValueError(f"slope gradient must satisfy |k| < 1, got ({self.kx}, {self.ky})")


FLAT = SlopeGradient(0.0, 0.0)


@dataclass(frozen=True)
class ComState:
    """Centroidal state: CoM position/velocity and centroidal angular momentum."""

    x: float
    y: float
    z: float
    vx: float = 0.0
    vy: float = 0.0
    vz: float = 0.0
    lcom_x: float = 0.0
    lcom_y: float = 0.0

    def __post_init__(self):
        values = (self.x, self.y, self.z, self.vx, self.vy, self.vz, self.lcom_x, self.lcom_y)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"non-finite CoM state: {values}")
        if self.z <= 0.0:
            raise ValueError(f"CoM height must be positive, got z={self.z}")


@dataclass(frozen=True)
class PendulumParams:
    """Pendulum constants.

    ``lateral_cam_sign`` selects how ``lcom_x`` maps to the lateral equivalent
    velocity: -1 follows the cross-product convention L_x = y*pz - z*py, +1 the
    mirrored one.
    """

    mass: float = 44.9  # [kg]
    z_tilde_nom: float = 0.78  # [m]
    alpha: float = 0.5
    lateral_cam_sign: int = -1

    def __post_init__(self):
        if self.mass <= 0.0 or self.z_tilde_nom <= 0.0:
            raise ValueError("mass and pendulum height must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.lateral_cam_sign not in (-1, 1):
            raise ValueError("lateral_cam_sign must be -1 or +1")

    @property
    def omega(self) -> float:
        return math.sqrt(GRAVITY / self.z_tilde_nom)


@dataclass(frozen=True)
class ContactPoint:
    sx: float
    sy: float
    sz: float
    side: Side = Side.LEFT

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.sx, self.sy, self.sz)):
            raise ValueError("non-finite contact point")


def _height(state: ComState, contact: ContactPoint | None) -> float:
    return state.z - contact.sz if contact is not None else state.z


def cam_velocity(lcom_x: float, lcom_y: float, height: float, params: PendulumParams) -> tuple[float, float]:
    """Linear velocity equivalent of the full centroidal angular momentum (alpha = 1)."""
    mz = params.mass * height
    return lcom_y / mz, params.lateral_cam_sign * lcom_x / mz


def galip_velocity(
    state: ComState, params: PendulumParams, contact: ContactPoint | None = None
) -> tuple[float, float]:
    """CoM velocity with a fraction ``alpha`` of the CAM converted to linear velocity.

    The height entering the conversion is measured from ``contact.sz`` when a
    contact is given, otherwise ``state.z`` is used as is.
    """
    cx, cy = cam_velocity(state.lcom_x, state.lcom_y, _height(state, contact), params)
    return state.vx + params.alpha * cx, state.vy + params.alpha * cy


def slope_height(contact: ContactPoint, gradient: SlopeGradient, z_tilde: float, x: float, y: float) -> float:
    """CoM height on the slope plane through ``contact`` raised by ``z_tilde``."""
    return contact.sz + z_tilde + gradient.kx * (x - contact.sx) + gradient.ky * (y - contact.sy)


def com_flow(
    state0: ComState,
    contact: ContactPoint,
    params: PendulumParams,
    t: float,
    gradient: SlopeGradient = FLAT,
    cam_decay: float = 0.0,
) -> ComState:
    """Closed-form pendulum flow about ``contact`` for ``t`` seconds.

    The horizontal motion is driven by the G-ALIP velocity; the CoM height
    follows the slope plane through the initial state, and the CAM decays at
    rate ``cam_decay``.
    """
    if t < 0.0:
        raise ValueError("flow time must be non-negative")
    if t == 0.0:
        return state0
    w = params.omega
    ch, sh = math.cosh(w * t), math.sinh(w * t)
    vtx, vty = galip_velocity(state0, params, contact)
    dx0, dy0 = state0.x - contact.sx, state0.y - contact.sy
    x = contact.sx + dx0 * ch + vtx * sh / w
    y = contact.sy + dy0 * ch + vty * sh / w
    vtx_t = dx0 * w * sh + vtx * ch
    vty_t = dy0 * w * sh + vty * ch
    z = state0.z + gradient.kx * (x - state0.x) + gradient.ky * (y - state0.y)
    decay = math.exp(-cam_decay * t)
    lx, ly = state0.lcom_x * decay, state0.lcom_y * decay
    cx, cy = cam_velocity(lx, ly, z - contact.sz, params)
    vx = vtx_t - params.alpha * cx
    vy = vty_t - params.alpha * cy
    return ComState(x, y, z, vx, vy, gradient.kx * vx + gradient.ky * vy, lx, ly)


def delta_z_dot(
    pre_state: ComState,
    g_pre: SlopeGradient,
    g_post: SlopeGradient,
    contact: ContactPoint | None = None,
) -> float:
    """Vertical velocity jump when the CoM moves from slope ``g_pre`` onto ``g_post``."""
    x, y = pre_state.x, pre_state.y
    if contact is not None:
        x, y = x - contact.sx, y - contact.sy
    z = _height(pre_state, contact)
    den = 1.0 - g_post.kx * x / z - g_post.ky * y / z
    if abs(den) <= SINGULAR_TOL:
        raise SingularTransition(f"transition denominator {den:.3e} is singular")
    num = (g_post.kx - g_pre.kx) * pre_state.vx + (g_post.ky - g_pre.ky) * pre_state.vy
    return num / den


def reset_map(
    pre_state: ComState,
    g_pre: SlopeGradient,
    g_post: SlopeGradient,
    contact: ContactPoint,
) -> ComState:
    """Instantaneous velocity reset at a slope transition.

    Conserves the CoM angular momentum about the contact point; positions and
    CAM are unchanged.
    """
    vz_expected = g_pre.kx * pre_state.vx + g_pre.ky * pre_state.vy
    if abs(pre_state.vz - vz_expected) > PRE_SLOPE_TOL:
        raise PreSlopeViolation(
            f"vz={pre_state.vz:.6g} differs from slope velocity {vz_expected:.6g}"
        )
    if g_pre == g_post:
        return pre_state
    dvz = delta_z_dot(pre_state, g_pre, g_post, contact)
    x, y = pre_state.x - contact.sx, pre_state.y - contact.sy
    z = pre_state.z - contact.sz
    return replace(
        pre_state,
        vx=pre_state.vx + x / z * dvz,
        vy=pre_state.vy + y / z * dvz,
        vz=pre_state.vz + dvz,
    )


def guard_value(state: ComState, g_post: SlopeGradient, z_tilde: float, contact: ContactPoint) -> float:
    """Signed height of the CoM above the post-transition slope plane."""
    return state.z - slope_height(contact, g_post, z_tilde, state.x, state.y)


def guard_check(
    state: ComState,
    g_post: SlopeGradient,
    z_tilde: float,
    contact: ContactPoint,
    tol: float = GUARD_TOL,
) -> bool:
    return abs(guard_value(state, g_post, z_tilde, contact)) <= tol


def bisect_crossing(fn, t_lo: float, t_hi: float, tol: float = 1e-8) -> float:
    """Locate a sign change of ``fn`` on ``[t_lo, t_hi]`` to within ``tol``."""
    f_lo = fn(t_lo)
    if f_lo == 0.0:
        return t_lo
    while t_hi - t_lo > tol:
        mid = 0.5 * (t_lo + t_hi)
        f_mid = fn(mid)
        if f_mid == 0.0:
            return mid
        if (f_mid > 0.0) == (f_lo > 0.0):
            t_lo, f_lo = mid, f_mid
        else:
            t_hi = mid
    return 0.5 * (t_lo + t_hi)
