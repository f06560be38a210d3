"""Receding-horizon planner that adjusts step durations and footholds jointly.

Decision variables per step ``i = 1..N`` are the temporal variable
``tau_i = exp(omega * T_i)`` and the foothold displacement ``u_i`` from the
current contact. DCM offsets ``b_i`` follow from the step-to-step recursion

    b_i = tau_i * b_{i-1} - (u_i - u_{i-1}) + J_i,    u_0 = 0,

where ``J_i = dv_mid_i / omega * exp(omega * T_nom / 2)`` is the predicted
effect of the mid-step slope transition. Eliminating ``b`` leaves a bounded
nonlinear least-squares problem in ``(tau, u)``. Since the residuals are
affine in ``u``, the footholds are projected out exactly and damped Newton
steps are taken on the temporal variables alone.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dcm import dcm_from_state, nominal_orbit
from .model import (
    ComState,
    ContactPoint,
    PendulumParams,
    SlopeGradient,
    Side,
    reset_map,
)
from .terrain import (
    SteppingStone,
    StoneLayout,
    adjusted_foothold,
    build_segments,
    gradient_pair,
    lateral_sign,
    stone_contains,
)

STEP_TOL = 1e-10
GRAD_TOL = 1e-12
MAX_ITER = 50


class NoConvergence(RuntimeWarning):
    pass


@dataclass(frozen=True)
class MpcWeights:
    w_tau: float = 0.1
    w_b: float = 100.0
    w_u: float = 100.0

    def __post_init__(self):
        if min(self.w_tau, self.w_b, self.w_u) < 0.0:
            raise ValueError("MPC weights must be non-negative")


@dataclass(frozen=True)
class PlannerConfig:
    horizon: int = 2
    t_nom: float = 0.5  # [s]
    t_min: float = 0.3  # [s]
    t_max: float = 0.8  # [s]
    min_remaining: float = 0.05  # [s] floor on the remaining duration of the current step
    reach: float = 0.5  # [m] leg-reach radius for diagnostics
    weights: MpcWeights = field(default_factory=MpcWeights)

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least one step")
        if not 0.0 < self.t_min <= self.t_nom <= self.t_max:
            raise ValueError("step durations must satisfy 0 < t_min <= t_nom <= t_max")


@dataclass(frozen=True)
class MpcProblem:
    n_steps: int
    omega: float
    b0: np.ndarray  # (2,)
    s0: tuple[float, float, float]
    tau_nom: np.ndarray  # (N,)
    b_nom: np.ndarray  # (N, 2)
    u_nom: np.ndarray  # (N, 2)
    dv_mid: np.ndarray  # (N, 2)
    jump: np.ndarray  # (N, 2) dv_mid / omega * exp(omega * t_nom / 2)
    w_tau: np.ndarray
    w_b: np.ndarray
    w_u: np.ndarray
    tau_min: np.ndarray
    tau_max: np.ndarray
    target_z: tuple[float, ...] = ()
    target_stones: tuple[SteppingStone | None, ...] = ()
    reach: float = 0.5

    def __post_init__(self):
        n = self.n_steps
        for name in ("tau_nom", "w_tau", "w_b", "w_u", "tau_min", "tau_max"):
            if np.shape(getattr(self, name)) != (n,):
                raise ValueError(f"{name} must have shape ({n},)")
        for name in ("b_nom", "u_nom", "dv_mid", "jump"):
            if np.shape(getattr(self, name)) != (n, 2):
                raise ValueError(f"{name} must have shape ({n}, 2)")
        if np.any(self.w_tau < 0) or np.any(self.w_b < 0) or np.any(self.w_u < 0):
            raise ValueError("weights must be non-negative")
        if np.any(self.w_u <= self.w_tau):
            raise ValueError("foothold weight must exceed the timing weight")
        if np.any(self.tau_min <= 1.0) or np.any(self.tau_max < self.tau_min):
            raise ValueError("tau bounds must satisfy 1 < tau_min <= tau_max")


@dataclass(frozen=True)
class MpcSolution:
    tau: np.ndarray
    b: np.ndarray
    u: np.ndarray
    t_step: np.ndarray
    next_step_position: tuple[float, float, float]
    next_step_duration: float
    converged: bool
    iterations: int
    residual: float
    cost: float
    wall_us: float
    warnings: tuple[str, ...] = ()


def predicted_velocity_jump(
    p_vec,
    t_nom: float,
    g_pre: SlopeGradient,
    g_post: SlopeGradient,
    params: PendulumParams,
    w_signed: float,
) -> tuple[float, float]:
    """Velocity jump of the nominal midpoint state crossing from ``g_pre`` to ``g_post``."""
    if g_pre == g_post:
        return 0.0, 0.0
    orbit = nominal_orbit(p_vec[0], p_vec[1], w_signed, t_nom, params)
    origin = ContactPoint(0.0, 0.0, 0.0)
    y_m = orbit.y_m
    pre = ComState(
        x=0.0,
        y=y_m,
        z=params.z_tilde_nom + g_pre.ky * y_m,
        vx=orbit.xdot_m,
        vy=orbit.ydot_m,
        vz=g_pre.kx * orbit.xdot_m + g_pre.ky * orbit.ydot_m,
    )
    post = reset_map(pre, g_pre, g_post, origin)
    return post.vx - pre.vx, post.vy - pre.vy


@dataclass(frozen=True)
class GaitReference:
    """Per-stone nominal targets derived once from a layout.

    Index ``j`` refers to stone ``j``; entries past the last stone extend the
    final virtual slope so that any horizon can be filled.
    """

    footholds: np.ndarray  # (M, 3) desired footholds
    sides: tuple[Side, ...]
    b_nom: np.ndarray  # (M, 2) nominal DCM offset at the start of the step on stone j
    dv_mid: np.ndarray  # (M, 2) predicted mid-step velocity jump on stone j
    gradients: tuple[tuple[SlopeGradient, SlopeGradient], ...]
    n_stones: int

    def stone(self, layout: StoneLayout, j: int) -> SteppingStone | None:
        return layout.stones[j] if j < len(layout.stones) else None


def gait_reference(
    layout: StoneLayout,
    params: PendulumParams,
    config: PlannerConfig,
    step_width: float,
    extra: int = 8,
) -> GaitReference:
    segments = build_segments(layout, step_width)
    n = len(layout)
    adjusted = [adjusted_foothold(f.position, f.side, step_width) for f in layout.desired_footholds]
    sides = [f.side for f in layout.desired_footholds]
    last_p = segments[-1].p_vec
    for _ in range(extra):
        a = adjusted[-1]
        adjusted.append((a[0] + last_p[0], a[1] + last_p[1], a[2] + last_p[2]))
        sides.append(sides[-1].other())
    m = len(adjusted)
    footholds = np.empty((m, 3))
    b_nom = np.empty((m, 2))
    dv_mid = np.zeros((m, 2))
    gradients = []
    for j in range(m):
        sign = lateral_sign(sides[j])
        if j < n:
            footholds[j] = layout.desired_footholds[j].position
        else:
            a = adjusted[j]
            footholds[j] = (a[0], a[1] - 0.5 * sign * step_width, a[2])
        p = segments[j].p_vec if j < len(segments) else last_p
        orbit = nominal_orbit(p[0], p[1], sign * step_width, config.t_nom, params)
        b_nom[j] = (orbit.b_nom_x, orbit.b_nom_y)
        g_pre, g_post = gradient_pair(segments, min(j, n - 1))
        gradients.append((g_pre, g_post))
        dv_mid[j] = predicted_velocity_jump(p, config.t_nom, g_pre, g_post, params, sign * step_width)
    return GaitReference(footholds, tuple(sides), b_nom, dv_mid, tuple(gradients), n)


def build_problem(
    state: ComState,
    contact: ContactPoint,
    layout: StoneLayout,
    support_index: int,
    params: PendulumParams,
    config: PlannerConfig = PlannerConfig(),
    *,
    step_width: float = 0.2,
    elapsed: float = 0.0,
    transition_done: bool = False,
    pslip_enabled: bool = True,
    reference: GaitReference | None = None,
    anchor_z: float | None = None,
) -> MpcProblem:
    """Assemble the MPC problem while standing on stone ``support_index``.

    ``elapsed`` is the time already spent on the current step; the first
    temporal variable then covers only the remaining duration. ``anchor_z`` is
    the height the pendulum is measured from (defaults to ``contact.sz``).
    """
    if reference is None:
        reference = gait_reference(layout, params, config, step_width)
    n = config.horizon
    k = support_index
    if k + n >= len(reference.footholds):
        raise IndexError("horizon runs past the gait reference")
    w = params.omega
    dyn_contact = contact if anchor_z is None else ContactPoint(contact.sx, contact.sy, anchor_z, contact.side)
    xi = dcm_from_state(state, params, dyn_contact)
    b0 = np.array([xi.xi_x - contact.sx, xi.xi_y - contact.sy])

    t_nom, t_min, t_max = config.t_nom, config.t_min, config.t_max
    floor = config.min_remaining
    tau_nom = np.full(n, math.exp(w * t_nom))
    tau_min = np.full(n, math.exp(w * t_min))
    tau_max = np.full(n, math.exp(w * t_max))
    tau_nom[0] = math.exp(w * max(t_nom - elapsed, floor))
    tau_min[0] = math.exp(w * max(t_min - elapsed, floor))
    tau_max[0] = math.exp(w * max(t_max - elapsed, floor))
    tau_nom[0] = min(max(tau_nom[0], tau_min[0]), tau_max[0])

    idx = np.arange(k + 1, k + n + 1)
    u_nom = reference.footholds[idx, :2] - np.array([contact.sx, contact.sy])
    b_nom = reference.b_nom[idx].copy()
    dv = reference.dv_mid[idx - 1].copy()
    if transition_done:
        dv[0] = 0.0
    if not pslip_enabled:
        dv[:] = 0.0
    jump = dv / w * math.exp(0.5 * w * t_nom)

    wt = config.weights
    w_tau = np.full(n, wt.w_tau)
    # penalize the first step's total duration, so a mid-step replan poses the
    # same problem as the one posed at touchdown
    w_tau[0] *= math.exp(2.0 * w * elapsed)
    return MpcProblem(
        n_steps=n,
        omega=w,
        b0=b0,
        s0=(contact.sx, contact.sy, contact.sz),
        tau_nom=tau_nom,
        b_nom=b_nom,
        u_nom=u_nom,
        dv_mid=dv,
        jump=jump,
        w_tau=w_tau,
        w_b=np.full(n, wt.w_b),
        w_u=np.full(n, wt.w_u),
        tau_min=tau_min,
        tau_max=tau_max,
        target_z=tuple(float(reference.footholds[j, 2]) for j in idx),
        target_stones=tuple(reference.stone(layout, j) for j in idx),
        reach=config.reach,
    )


def dcm_offsets(problem: MpcProblem, tau: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Forward recursion of the DCM offsets for given temporal variables and footholds."""
    b = np.empty((problem.n_steps, 2))
    prev_b = problem.b0
    prev_u = np.zeros(2)
    for i in range(problem.n_steps):
        b[i] = tau[i] * prev_b - (u[i] - prev_u) + problem.jump[i]
        prev_b, prev_u = b[i], u[i]
    return b


def constraint_residual(problem: MpcProblem, tau, b, u) -> float:
    """Largest violation of the per-step DCM constraint."""
    worst = 0.0
    prev_b = problem.b0
    prev_u = np.zeros(2)
    for i in range(problem.n_steps):
        r = tau[i] * prev_b - b[i] - (u[i] - prev_u) + problem.jump[i]
        worst = max(worst, float(np.hypot(r[0], r[1])))
        prev_b, prev_u = b[i], u[i]
    return worst


def mpc_cost(problem: MpcProblem, tau, b, u) -> float:
    return float(
        np.sum(problem.w_tau * (tau - problem.tau_nom) ** 2)
        + np.sum(problem.w_b * np.sum((b - problem.b_nom) ** 2, axis=1))
        + np.sum(problem.w_u * np.sum((u - problem.u_nom) ** 2, axis=1))
    )


def _residual_and_jacobian(problem: MpcProblem, x: np.ndarray, curvature: bool = False):
    """Weighted residuals, their Jacobian and optionally sum_k r_k * Hess(r_k).

    Only the DCM-offset residuals are nonlinear; their second derivatives follow
    the same forward recursion as the offsets themselves.
    """
    n = problem.n_steps
    nv = 3 * n
    tau = x[:n]
    u = x[n:].reshape(n, 2)
    sw_tau = np.sqrt(problem.w_tau)
    sw_b = np.sqrt(problem.w_b)
    sw_u = np.sqrt(problem.w_u)

    r = np.empty(5 * n)
    jac = np.zeros((5 * n, nv))
    r[:n] = sw_tau * (tau - problem.tau_nom)
    jac[:n, :n] = np.diag(sw_tau)
    second = np.zeros((nv, nv)) if curvature else None

    db_prev = np.zeros((2, nv))
    hb_prev = np.zeros((2, nv, nv)) if curvature else None
    b_prev = problem.b0
    u_prev = np.zeros(2)
    for i in range(n):
        b_i = tau[i] * b_prev - (u[i] - u_prev) + problem.jump[i]
        db = tau[i] * db_prev
        db[:, i] += b_prev
        db[0, n + 2 * i] -= 1.0
        db[1, n + 2 * i + 1] -= 1.0
        if i > 0:
            db[0, n + 2 * i - 2] += 1.0
            db[1, n + 2 * i - 1] += 1.0
        rows = slice(n + 2 * i, n + 2 * i + 2)
        r[rows] = sw_b[i] * (b_i - problem.b_nom[i])
        jac[rows] = sw_b[i] * db
        if curvature:
            hb = tau[i] * hb_prev
            hb[:, i, :] += db_prev
            hb[:, :, i] += db_prev
            second += sw_b[i] * np.tensordot(r[rows], hb, axes=1)
            hb_prev = hb
        db_prev, b_prev, u_prev = db, b_i, u[i]

    ru = sw_u[:, None] * (u - problem.u_nom)
    r[3 * n:] = ru.ravel()
    jac[3 * n:, n:] = np.diag(np.repeat(sw_u, 2))
    return r, jac, second


def _project_footholds(problem: MpcProblem, tau: np.ndarray, u_guess: np.ndarray):
    """Optimal footholds for fixed temporal variables.

    The residuals are affine in ``u``, so a single Gauss-Newton step from any
    guess lands on the exact minimizer.
    """
    n = problem.n_steps
    x = np.concatenate([tau, u_guess])
    r, jac, _ = _residual_and_jacobian(problem, x)
    ju = jac[:, n:]
    x[n:] -= np.linalg.solve(ju.T @ ju, ju.T @ r)
    r, jac, second = _residual_and_jacobian(problem, x, curvature=True)
    return x, r, jac, second


def solve(problem: MpcProblem) -> MpcSolution:
    """Minimize the MPC cost over ``(tau, u)`` with the footholds projected out.

    For fixed ``tau`` the footholds follow from a linear least-squares solve
    (an exact Gauss-Newton step). The remaining bounded problem in ``tau`` is
    solved by damped Newton steps on the reduced cost, whose Hessian is the
    Schur complement of the full one; a Levenberg term is added whenever that
    Hessian is not positive definite. Starts from ``(tau_nom, u_nom)``;
    converged when the step is shorter than 1e-10 or the projected gradient
    vanishes, giving up after 50 iterations with ``converged=False`` and a
    :class:`NoConvergence` warning.
    """
    start = time.perf_counter()
    n = problem.n_steps
    lo, hi = problem.tau_min, problem.tau_max
    x, r, jac, second = _project_footholds(
        problem, np.clip(problem.tau_nom, lo, hi), problem.u_nom.ravel().copy()
    )
    cost = float(r @ r)
    converged = False
    iterations = 0
    while iterations < MAX_ITER:
        iterations += 1
        tau = x[:n]
        grad = jac[:, :n].T @ r
        free = ~(((tau <= lo) & (grad > 0.0)) | ((tau >= hi) & (grad < 0.0)))
        if float(np.max(np.abs(grad[free]), initial=0.0)) < GRAD_TOL * (1.0 + cost):
            converged = True
            break
        hess = jac.T @ jac + second
        reduced = hess[:n, :n] - hess[:n, n:] @ np.linalg.solve(hess[n:, n:], hess[n:, :n])
        h_free = reduced[np.ix_(free, free)]
        damp = np.diag(np.maximum(np.abs(np.diag(h_free)), 1e-12))
        mu = 0.0
        while True:
            try:
                chol = np.linalg.cholesky(h_free + mu * damp)
                break
            except np.linalg.LinAlgError:
                mu = max(4.0 * mu, 1e-6)
        step = np.zeros(n)
        step[free] = -np.linalg.solve(chol.T, np.linalg.solve(chol, grad[free]))

        t = 1.0
        accepted = False
        while t >= 1e-10:
            trial = _project_footholds(problem, np.clip(tau + t * step, lo, hi), x[n:])
            c_try = float(trial[1] @ trial[1])
            if c_try <= cost:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # no descent left at working precision
            converged = bool(np.linalg.norm(grad[free]) < 1e-6 * (1.0 + cost))
            break
        delta = float(np.linalg.norm(trial[0] - x))
        x, r, jac, second = trial
        cost = c_try
        if delta < STEP_TOL:
            converged = True
            break

    tau = x[:n]
    u = x[n:].reshape(n, 2)
    b = dcm_offsets(problem, tau, u)
    notes = []
    if not converged:
        warnings.warn(f"MPC did not converge in {iterations} iterations", NoConvergence, stacklevel=2)
        notes.append("no_convergence")
    u_prev = np.zeros(2)
    for i in range(n):
        if np.hypot(*(u[i] - u_prev)) > problem.reach:
            notes.append(f"reach_exceeded_step_{i + 1}")
        u_prev = u[i]
    s0 = problem.s0
    z1 = problem.target_z[0] if problem.target_z else s0[2]
    position = (s0[0] + float(u[0, 0]), s0[1] + float(u[0, 1]), float(z1))
    if problem.target_stones and problem.target_stones[0] is not None:
        if not stone_contains(problem.target_stones[0], position[:2]):
            notes.append("foothold_off_stone")
    t_step = np.log(tau) / problem.omega
    return MpcSolution(
        tau=tau.copy(),
        b=b,
        u=u.copy(),
        t_step=t_step,
        next_step_position=position,
        next_step_duration=float(t_step[0]),
        converged=converged,
        iterations=iterations,
        residual=constraint_residual(problem, tau, b, u),
        cost=mpc_cost(problem, tau, b, u),
        wall_us=(time.perf_counter() - start) * 1e6,
        warnings=tuple(notes),
    )


def extract_command(
    sol: MpcSolution,
    layout: StoneLayout,
    support_index: int,
    params: PendulumParams,
    s0: tuple[float, float, float],
) -> tuple[tuple[float, float, float], float]:
    """First-step foothold and duration of a solution.

    The foothold height comes from the top of the target stone; past the end of
    the layout the last stone height is kept.
    """
    target = min(support_index + 1, len(layout) - 1)
    z = layout.stones[target].center[2]
    position = (s0[0] + float(sol.u[0, 0]), s0[1] + float(sol.u[0, 1]), float(z))
    return position, math.log(float(sol.tau[0])) / params.omega
