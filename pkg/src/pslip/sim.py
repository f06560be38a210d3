"""Closed-loop reduced-order walking simulation with the planner in the loop.

The simulated plant is the piecewise-slope pendulum with a decaying centroidal
angular momentum. While the CAM decays, its loss is handed to the CoM as
linear momentum (the angular momentum about the contact only changes through
gravity), so per horizontal axis

    x'' = omega^2 (x - S) + lam * c + F / m,   c' = -lam * c,

with ``c = L_com / (m z)``. For this plant the DCM ``x + (x' + a c) / omega`` is
exactly exponential when ``a = lam / (omega + lam)``; the planner only ever
sees the G-ALIP estimate with its own ``alpha``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dcm import DcmState, dcm_from_state, nominal_orbit, step_to_step
from .model import (
    ComState,
    ContactPoint,
    PendulumParams,
    SlopeGradient,
    bisect_crossing,
    guard_value,
    reset_map,
)
from .mpc import GaitReference, MpcSolution, PlannerConfig, build_problem, gait_reference, solve
from .terrain import (
    CamPulse,
    Push,
    ScenarioConfig,
    StoneLayout,
    build_segments,
    generate_scenario,
    lateral_sign,
    stone_contains,
)

Vec3 = tuple[float, float, float]

MIN_HEIGHT_RATIO = 0.5  # pendulum shorter than this fraction of nominal counts as a fall


class EmptyTrace(ValueError):
    """Metrics were requested for a run without any step."""


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.001  # [s] 1 kHz control tick
    replan_hz: float = 100.0
    cam_decay_lambda: float = 5.0  # [1/s]
    max_steps: int = 50
    fall_threshold: float = 1.0  # [m] DCM offset norm
    commit_time: float = 0.05  # [s] no replanning closer than this to touchdown
    max_time: float = 120.0  # [s]

    def __post_init__(self):
        if self.dt <= 0.0 or self.replan_hz <= 0.0:
            raise ValueError("dt and replan rate must be positive")
        ratio = 1.0 / (self.dt * self.replan_hz)
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("the replan period must be a whole number of ticks")
        if self.cam_decay_lambda < 0.0 or self.max_steps < 1 or self.fall_threshold <= 0.0:
            raise ValueError("invalid simulation limits")

    @property
    def ticks_per_replan(self) -> int:
        return int(round(1.0 / (self.dt * self.replan_hz)))


@dataclass(frozen=True)
class StepEvent:
    index: int
    stone_index: int
    touchdown_time: float
    planned_duration: float
    commanded_position: Vec3
    desired_position: Vec3
    deviation: float
    on_stone: bool
    dcm_offset: tuple[float, float]
    b_nom: tuple[float, float]
    prediction_error: float = math.nan


@dataclass(frozen=True)
class TransitionEvent:
    time: float
    stone_index: int
    pre: ComState
    post: ComState
    g_pre: SlopeGradient
    g_post: SlopeGradient
    contact: ContactPoint
    forced: bool = False


@dataclass(frozen=True)
class Sample:
    t: float
    state: ComState
    dcm: DcmState
    contact: ContactPoint
    step_index: int
    gradient: SlopeGradient


@dataclass(frozen=True)
class SolveStat:
    t: float
    iterations: int
    residual: float
    wall_us: float
    converged: bool
    warnings: tuple[str, ...]


@dataclass
class SimTrace:
    scenario: ScenarioConfig
    samples: list[Sample] = field(default_factory=list)
    events: list[StepEvent] = field(default_factory=list)
    transitions: list[TransitionEvent] = field(default_factory=list)
    solves: list[SolveStat] = field(default_factory=list)
    pushes: tuple[Push, ...] = ()
    cam_pulses: tuple[CamPulse, ...] = ()
    fell: bool = False
    fall_time: float | None = None
    metrics: dict = field(default_factory=dict)


def _forced_axis(d0: float, v0: float, w: float, a: float, lam: float, f: float, s: float):
    """Solve d'' = w^2 d + a exp(-lam s) + f over ``s`` seconds."""
    ch, sh = math.cosh(w * s), math.sinh(w * s)
    if a == 0.0:
        xp0 = vp0 = xp = vp = 0.0
    elif abs(lam - w) > 1e-9:
        amp = a / (lam * lam - w * w)
        e = math.exp(-lam * s)
        xp0, vp0 = amp, -lam * amp
        xp, vp = amp * e, -lam * amp * e
    else:
        coef = -a / (2.0 * w)
        e = math.exp(-w * s)
        xp0, vp0 = 0.0, coef
        xp, vp = coef * s * e, coef * (1.0 - w * s) * e
    shift = f / (w * w)
    c1 = d0 - xp0 + shift
    c2 = v0 - vp0
    return c1 * ch + c2 * sh / w + xp - shift, c1 * w * sh + c2 * ch + vp


def integrate_tick(
    state: ComState,
    contact: ContactPoint,
    g_active: SlopeGradient,
    params: PendulumParams,
    external_force: Vec3,
    dt: float,
    cam_decay: float = 0.0,
) -> ComState:
    """Advance the plant by ``dt`` under a constant external force.

    The vertical force component is absorbed by the slope constraint. The CAM
    coupling uses the cross-product sign regardless of the estimator convention.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    w = params.omega
    m = params.mass
    mz = m * (state.z - contact.sz)
    ax = cam_decay * state.lcom_y / mz
    ay = -cam_decay * state.lcom_x / mz
    dx, vx = _forced_axis(state.x - contact.sx, state.vx, w, ax, cam_decay, external_force[0] / m, dt)
    dy, vy = _forced_axis(state.y - contact.sy, state.vy, w, ay, cam_decay, external_force[1] / m, dt)
    x, y = contact.sx + dx, contact.sy + dy
    z = state.z + g_active.kx * (x - state.x) + g_active.ky * (y - state.y)
    decay = math.exp(-cam_decay * dt)
    return ComState(
        x, y, z, vx, vy, g_active.kx * vx + g_active.ky * vy, state.lcom_x * decay, state.lcom_y * decay
    )


def detect_transition(
    state_prev: ComState,
    state_next: ComState,
    g_post: SlopeGradient,
    z_tilde: float,
    contact: ContactPoint,
    propagate=None,
    span: float | None = None,
    tol: float = 1e-8,
) -> float | None:
    """Crossing time of the post-transition slope within one integration span.

    Returns ``None`` unless the guard function strictly changes sign. With a
    ``propagate(s)`` callable the time is refined by bisection to ``tol``;
    otherwise it is linearly interpolated over ``span`` (default 1).
    """
    g0 = guard_value(state_prev, g_post, z_tilde, contact)
    g1 = guard_value(state_next, g_post, z_tilde, contact)
    if not ((g0 < 0.0 <= g1) or (g0 > 0.0 >= g1)):
        return None
    span = 1.0 if span is None else span
    if propagate is None:
        return span * g0 / (g0 - g1)
    return bisect_crossing(lambda s: guard_value(propagate(s), g_post, z_tilde, contact), 0.0, span, tol)


def touchdown(
    state: ComState,
    position: Vec3,
    layout: StoneLayout,
    reference: GaitReference,
    stone_index: int,
) -> tuple[ContactPoint, SlopeGradient, bool]:
    """Exchange support onto stone ``stone_index`` at ``position``.

    The CoM state is untouched. Returns the new contact, the slope the CoM is
    riding on right after touchdown, and whether the foothold lies on its stone.
    """
    side = reference.sides[stone_index]
    contact = ContactPoint(position[0], position[1], position[2], side)
    on_stone = stone_index < len(layout) and stone_contains(layout.stones[stone_index], position[:2])
    return contact, reference.gradients[stone_index][0], on_stone


def inject_cam(state: ComState, impulse: tuple[float, float]) -> ComState:
    if impulse[0] == 0.0 and impulse[1] == 0.0:
        return state
    return replace(state, lcom_x=state.lcom_x + impulse[0], lcom_y=state.lcom_y + impulse[1])


def compute_metrics(trace: SimTrace) -> dict:
    if not trace.events:
        raise EmptyTrace("no step events recorded")
    dev = np.array([e.deviation for e in trace.events])
    pred = np.array([e.prediction_error for e in trace.events if math.isfinite(e.prediction_error)])
    walls = np.array([s.wall_us for s in trace.solves]) if trace.solves else np.zeros(1)
    return {
        "e_avg": float(dev.mean()),
        "e_max": float(dev.max()),
        "steps_completed": len(trace.events),
        "fell": trace.fell,
        "fall_time": trace.fall_time,
        "step_durations": [e.planned_duration for e in trace.events],
        "dcm_prediction_error": float(pred.mean()) if pred.size else math.nan,
        "off_stone_steps": sum(not e.on_stone for e in trace.events),
        "transitions": len(trace.transitions),
        "forced_transitions": sum(tr.forced for tr in trace.transitions),
        "solves": len(trace.solves),
        "solver_mean_us": float(walls.mean()),
        "solver_max_iterations": max((s.iterations for s in trace.solves), default=0),
        "solver_max_residual": max((s.residual for s in trace.solves), default=0.0),
        "solver_failures": sum(not s.converged for s in trace.solves),
    }


def recovery_steps(trace: SimTrace, push: Push, rel_tol: float = 0.05) -> int | None:
    """Touchdowns after the end of ``push`` until the DCM offset is back within
    ``rel_tol`` of its nominal value; ``None`` if it never returns."""
    t_end = push.t_start + push.duration
    after = [e for e in trace.events if e.touchdown_time >= t_end]
    for n, e in enumerate(after, start=1):
        err = math.hypot(e.dcm_offset[0] - e.b_nom[0], e.dcm_offset[1] - e.b_nom[1])
        if err <= rel_tol * math.hypot(*e.b_nom):
            return n
    return None


class _Walker:
    """Mutable loop state for one closed-loop run."""

    def __init__(self, scenario, sim, params, planner):
        self.scenario = scenario
        self.sim = sim
        self.params = params
        self.planner = planner
        self.layout = generate_scenario(scenario)
        self.width = scenario.step_width
        self.ref = gait_reference(self.layout, params, planner, self.width)
        self.z_tilde = params.z_tilde_nom
        self.trace = SimTrace(scenario, pushes=scenario.pushes, cam_pulses=scenario.cam_pulses)

        w = params.omega
        t_nom = planner.t_nom
        self.k = 0
        foot = self.layout.desired_footholds[0]
        self.contact = ContactPoint(*foot.position, foot.side)
        self.anchor_z = self.contact.sz
        p = build_segments(self.layout, self.width)[0].p_vec
        orbit = nominal_orbit(p[0], p[1], lateral_sign(foot.side) * self.width, t_nom, params)
        g_pre, g_post = self.ref.gradients[0]
        self.g_active = g_post
        self.g_post = g_post
        self.transition_done = True
        z0 = self.anchor_z + self.z_tilde + g_post.ky * orbit.y_m
        self.state = ComState(
            self.contact.sx,
            self.contact.sy + orbit.y_m,
            z0,
            orbit.xdot_m,
            orbit.ydot_m,
            g_post.kx * orbit.xdot_m + g_post.ky * orbit.ydot_m,
        )
        self.step_start = -0.5 * t_nom
        self.td_time = 0.5 * t_nom
        self.td_pos = tuple(float(c) for c in self.ref.footholds[1])
        self.solution: MpcSolution | None = None
        self.omega = w
        self.step_xi = None  # DCM and contact at the start of the current step

    @property
    def dyn_contact(self) -> ContactPoint:
        c = self.contact
        return ContactPoint(c.sx, c.sy, self.anchor_z, c.side)

    def dcm(self) -> DcmState:
        return dcm_from_state(self.state, self.params, self.dyn_contact)

    def replan(self, t: float) -> None:
        problem = build_problem(
            self.state,
            self.contact,
            self.layout,
            self.k,
            self.params,
            self.planner,
            step_width=self.width,
            elapsed=t - self.step_start,
            transition_done=self.transition_done,
            pslip_enabled=self.scenario.pslip_enabled,
            reference=self.ref,
            anchor_z=self.anchor_z,
        )
        sol = solve(problem)
        self.solution = sol
        self.td_time = t + sol.next_step_duration
        self.td_pos = sol.next_step_position
        self.trace.solves.append(
            SolveStat(t, sol.iterations, sol.residual, sol.wall_us, sol.converged, sol.warnings)
        )

    def fire_transition(self, t: float, forced: bool) -> None:
        pre = self.state
        post = reset_map(pre, self.g_active, self.g_post, self.dyn_contact)
        self.trace.transitions.append(
            TransitionEvent(t, self.k, pre, post, self.g_active, self.g_post, self.dyn_contact, forced)
        )
        self.state = post
        self.g_active = self.g_post
        self.transition_done = True

    def do_touchdown(self, t: float) -> None:
        if not self.transition_done:
            self.fire_transition(t, forced=True)
        xi_end = self.dcm()
        pred_err = math.nan
        if self.step_xi is not None:
            xi0, c0 = self.step_xi
            dv = self.ref.dv_mid[self.k] if self.scenario.pslip_enabled else (0.0, 0.0)
            pred = step_to_step(xi0, c0, t - self.step_start, (float(dv[0]), float(dv[1])), self.params)
            pred_err = math.hypot(pred.xi_x - xi_end.xi_x, pred.xi_y - xi_end.xi_y)

        k_new = self.k + 1
        old = self.contact
        contact, g_pre, on_stone = touchdown(self.state, self.td_pos, self.layout, self.ref, k_new)
        g = self.g_active
        self.anchor_z += g.kx * (contact.sx - old.sx) + g.ky * (contact.sy - old.sy)
        self.contact = contact
        self.k = k_new
        self.g_active = g_pre
        self.g_post = self.ref.gradients[k_new][1]
        self.transition_done = self.g_active == self.g_post

        desired = tuple(float(c) for c in self.ref.footholds[k_new])
        dev = math.hypot(contact.sx - desired[0], contact.sy - desired[1])
        xi = self.dcm()
        b_nom = self.ref.b_nom[k_new]
        self.trace.events.append(
            StepEvent(
                index=len(self.trace.events) + 1,
                stone_index=k_new,
                touchdown_time=t,
                planned_duration=t - self.step_start,
                commanded_position=(contact.sx, contact.sy, contact.sz),
                desired_position=desired,
                deviation=dev,
                on_stone=on_stone,
                dcm_offset=(xi.xi_x - contact.sx, xi.xi_y - contact.sy),
                b_nom=(float(b_nom[0]), float(b_nom[1])),
                prediction_error=pred_err,
            )
        )
        self.step_xi = (xi, contact)
        self.step_start = t

        sol = self.solution
        if sol is not None and sol.tau.size >= 2:
            u = sol.u[1]
            s0 = sol.next_step_position  # previous step target, now the contact
            base = (s0[0] - sol.u[0, 0], s0[1] - sol.u[0, 1])
            z = float(self.ref.footholds[k_new + 1][2])
            self.td_pos = (base[0] + float(u[0]), base[1] + float(u[1]), z)
            self.td_time = t + float(sol.t_step[1])
        else:
            self.td_pos = tuple(float(c) for c in self.ref.footholds[k_new + 1])
            self.td_time = t + self.planner.t_nom

    def force_at(self, t: float) -> Vec3:
        fx = fy = fz = 0.0
        for push in self.scenario.pushes:
            if push.active(t):
                fx += push.force[0]
                fy += push.force[1]
                fz += push.force[2]
        return fx, fy, fz


def run_closed_loop(
    scenario: ScenarioConfig,
    sim: SimConfig = SimConfig(),
    params: PendulumParams = PendulumParams(),
    planner: PlannerConfig = PlannerConfig(),
    record_samples: bool = True,
) -> SimTrace:
    """Walk the scenario's stones with the planner in the loop.

    Stops after ``sim.max_steps`` touchdowns, on the last stone, on a fall
    (DCM offset beyond ``sim.fall_threshold``) or at ``sim.max_time``.
    """
    params = replace(params, alpha=scenario.alpha)
    walker = _Walker(scenario, sim, params, planner)
    trace = walker.trace
    dt = sim.dt
    lam = sim.cam_decay_lambda
    per_replan = sim.ticks_per_replan
    pulses = sorted(scenario.cam_pulses, key=lambda p: p.t)
    next_pulse = 0
    push_edges = sorted({p.t_start for p in scenario.pushes} | {p.t_start + p.duration for p in scenario.pushes})
    last_index = len(walker.layout) - 1
    n_ticks = int(round(sim.max_time / dt))

    def record(t: float) -> None:
        if record_samples:
            trace.samples.append(
                Sample(t, walker.state, walker.dcm(), walker.contact, walker.k, walker.g_active)
            )

    record(0.0)
    for tick in range(n_ticks):
        t0 = tick * dt
        t1 = (tick + 1) * dt
        while next_pulse < len(pulses) and pulses[next_pulse].t <= t0 + 1e-12:
            pulse = pulses[next_pulse]
            walker.state = inject_cam(walker.state, (pulse.lcom_x, pulse.lcom_y))
            next_pulse += 1
        if tick % per_replan == 0 and walker.td_time - t0 >= sim.commit_time:
            walker.replan(t0)

        t = t0
        done = fell = False
        while t < t1:
            seg_end = t1
            if t < walker.td_time <= t1:
                seg_end = walker.td_time
            for edge in push_edges:
                if t < edge < seg_end:
                    seg_end = edge
            span = seg_end - t
            force = walker.force_at(t + 0.5 * span)
            state0, contact, g = walker.state, walker.dyn_contact, walker.g_active

            def propagate(s, state0=state0, contact=contact, g=g, force=force):
                if s <= 0.0:
                    return state0
                return integrate_tick(state0, contact, g, params, force, s, lam)

            try:
                nxt = propagate(span)
                if not walker.transition_done:
                    s_cross = detect_transition(
                        state0, nxt, walker.g_post, walker.z_tilde, contact, propagate, span
                    )
                    if s_cross is not None:
                        walker.state = propagate(s_cross)
                        walker.fire_transition(t + s_cross, forced=False)
                        t += s_cross
                        continue
                walker.state = nxt
                t = seg_end
                if seg_end == walker.td_time:
                    walker.do_touchdown(t)
                    if len(trace.events) >= sim.max_steps or walker.k >= last_index:
                        done = True
                        break
            except (ValueError, ArithmeticError):
                # the pendulum left its valid domain (height or slope singularity)
                fell = True
                break
        if fell:
            trace.fell = True
            trace.fall_time = t
            break
        record(t1 if not done else t)
        xi = walker.dcm()
        height = walker.state.z - walker.anchor_z
        if (
            math.hypot(xi.xi_x - walker.contact.sx, xi.xi_y - walker.contact.sy) > sim.fall_threshold
            or height < MIN_HEIGHT_RATIO * walker.z_tilde
        ):
            trace.fell = True
            trace.fall_time = t1
            break
        if done:
            break

    if trace.events:
        trace.metrics = compute_metrics(trace)
    else:
        trace.metrics = {"e_avg": math.nan, "steps_completed": 0, "fell": trace.fell}
    return trace
