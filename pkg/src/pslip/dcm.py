"""Divergent component of motion: definition, evolution, jumps and the
step-to-step map built on the nominal periodic gait."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .model import ComState, ContactPoint, PendulumParams, galip_velocity


@dataclass(frozen=True)
class DcmState:
    xi_x: float
    xi_y: float

    def offset(self, contact: ContactPoint) -> tuple[float, float]:
        """DCM position relative to a contact point."""
        return self.xi_x - contact.sx, self.xi_y - contact.sy


@dataclass(frozen=True)
class NominalOrbit:
    """Periodic single-support orbit with the midpoint at t = 0.

    Midpoint quantities are expressed relative to the support contact;
    ``b_nom_*`` is the DCM offset from the contact at the start of the step.
    """

    px: float
    py: float
    w_signed: float
    t_step: float
    xdot_m: float
    y_m: float
    ydot_m: float
    b_nom_x: float
    b_nom_y: float


def dcm_from_state(state: ComState, params: PendulumParams, contact: ContactPoint | None = None) -> DcmState:
    vx, vy = galip_velocity(state, params, contact)
    w = params.omega
    return DcmState(state.x + vx / w, state.y + vy / w)


def dcm_evolve(xi0: DcmState, contact: ContactPoint, params: PendulumParams, t: float) -> DcmState:
    if t < 0.0:
        raise ValueError("evolution time must be non-negative")
    growth = math.exp(params.omega * t)
    return DcmState(
        (xi0.xi_x - contact.sx) * growth + contact.sx,
        (xi0.xi_y - contact.sy) * growth + contact.sy,
    )


def dcm_reset(
    xi_pre: DcmState,
    v_tilde_pre: tuple[float, float],
    v_tilde_post: tuple[float, float],
    params: PendulumParams,
) -> DcmState:
    w = params.omega
    return DcmState(
        xi_pre.xi_x + (v_tilde_post[0] - v_tilde_pre[0]) / w,
        xi_pre.xi_y + (v_tilde_post[1] - v_tilde_pre[1]) / w,
    )


def nominal_offset(px: float, py: float, w_signed: float, t_step: float, params: PendulumParams) -> tuple[float, float]:
    tau = math.exp(params.omega * t_step)
    return px / (tau - 1.0), w_signed / (tau + 1.0) + py / (tau - 1.0)


def nominal_orbit(px: float, py: float, w_signed: float, t_step: float, params: PendulumParams) -> NominalOrbit:
    """Nominal periodic orbit for a step of displacement ``(px, py)``.

    ``w_signed`` is -W while supported on the left foot and +W on the right.
    """
    if t_step <= 0.0:
        raise ValueError("step duration must be positive")
    w = params.omega
    half = 0.5 * w * t_step
    sh2 = 2.0 * math.sinh(half)
    bx, by = nominal_offset(px, py, w_signed, t_step, params)
    return NominalOrbit(
        px=px,
        py=py,
        w_signed=w_signed,
        t_step=t_step,
        xdot_m=w * px / sh2,
        y_m=w_signed / (2.0 * math.cosh(half)),
        ydot_m=w * py / sh2,
        b_nom_x=bx,
        b_nom_y=by,
    )


def step_to_step(
    xi_start: DcmState,
    contact: ContactPoint,
    t_step: float,
    dv_mid: tuple[float, float],
    params: PendulumParams,
) -> DcmState:
    """End-of-step DCM with a midpoint velocity jump ``dv_mid``."""
    if t_step <= 0.0:
        raise ValueError("step duration must be positive")
    w = params.omega
    tau = math.exp(w * t_step)
    half = math.exp(0.5 * w * t_step)
    return DcmState(
        (xi_start.xi_x - contact.sx) * tau + dv_mid[0] / w * half + contact.sx,
        (xi_start.xi_y - contact.sy) * tau + dv_mid[1] / w * half + contact.sy,
    )


def deviation_decay(x_dev: float, px: float, t_step: float, params: PendulumParams) -> float:
    """End-of-step CoM position when the step starts ``x_dev`` off the nominal orbit
    while the DCM sits on its nominal offset."""
    return 0.5 * px + math.exp(-params.omega * t_step) * x_dev
