"""Piecewise-slope pendulum gait planning and closed-loop simulation for
walking over uneven stepping stones."""

from .dcm import (
    DcmState,
    NominalOrbit,
    dcm_evolve,
    dcm_from_state,
    dcm_reset,
    deviation_decay,
    nominal_orbit,
    step_to_step,
)
from .model import (
    FLAT,
    GRAVITY,
    ComState,
    ContactPoint,
    PendulumParams,
    PreSlopeViolation,
    Side,
    SingularTransition,
    SlopeGradient,
    com_flow,
    delta_z_dot,
    galip_velocity,
    guard_check,
    reset_map,
)
from .mpc import (
    MpcProblem,
    MpcSolution,
    MpcWeights,
    NoConvergence,
    PlannerConfig,
    build_problem,
    extract_command,
    predicted_velocity_jump,
    solve,
)
from .sim import (
    EmptyTrace,
    SimConfig,
    SimTrace,
    StepEvent,
    compute_metrics,
    detect_transition,
    inject_cam,
    integrate_tick,
    run_closed_loop,
    touchdown,
)
from .terrain import (
    CamPulse,
    Push,
    ScenarioConfig,
    SteppingStone,
    StoneLayout,
    VirtualSlopeSegment,
    adjusted_foothold,
    generate_scenario,
    gradient_pair,
    stone_contains,
    virtual_slope,
)

__version__ = "0.1.0"
