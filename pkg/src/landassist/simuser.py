"""Parametric simulated pilot.

Four parameters in [0, 1]: ``alpha`` (conformance to the assistant),
``beta`` (proficiency: ability to correct the goal estimate), ``psi``
(joystick aggressiveness) and ``phi`` (daring / desired speed). Each pilot
carries two seeded RNG streams: one for decisions that occur in a fixed
order regardless of the assistant (initial altitude, axis-vs-direct
approach), one for mid-flight events whose timing depends on the closed
loop (pauses, altitude changes). Replaying with identical seeds and an
identical assistant action sequence reproduces the pilot bit-exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .worldsim import UavState, V_CAP, World


@dataclass(frozen=True)
class UserParams:
    alpha: float
    beta: float
    psi: float
    phi: float

    def __post_init__(self):
        for name in ("alpha", "beta", "psi", "phi"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "psi": self.psi, "phi": self.phi}

    @classmethod
    def from_dict(cls, d: dict) -> "UserParams":
        return cls(d["alpha"], d["beta"], d["psi"], d["phi"])


@dataclass(frozen=True)
class UserConstants:
    """Scaling constants of the pilot model (per 0.2 s tick)."""

    k_alpha: float = 2.0
    k_beta: float = 25.0
    p_gain_lo: float = 0.1
    p_gain_hi: float = 0.9
    i_gain: float = 0.05
    i_decay: float = 0.9
    v_max_base: float = 0.3     # m/s at phi = 0
    v_max_gain: float = 0.9     # + phi * gain
    vz_base: float = 0.2
    vz_gain: float = 0.4
    approach_p: float = 2.0     # 1/s proportional pursuit gain
    cruise_alt_range: tuple[float, float] = (1.0, 1.8)
    descent_radius: float = 0.15
    axis_tol: float = 0.1
    init_err_max: float = 0.6   # * (1 - beta) meters
    pause_prob: float = 0.005
    pause_ticks: tuple[int, int] = (5, 15)       # 1-3 s
    alt_change_prob: float = 0.003
    alt_change_delta: float = 0.3
    climb_ticks: tuple[int, int] = (3, 8)


APPROACH = "approach"
DESCEND = "descend"


@dataclass
class UserState:
    goal_est: np.ndarray          # (2,) current estimate of the goal XY
    joystick: np.ndarray          # (3,) J_t, m/s
    integral: np.ndarray          # (3,) I_t
    prev_action: np.ndarray       # (3,) a_u at the previous tick
    phase: str
    cruise_alt: float
    direct_mode: bool
    axis_order: tuple[int, int]
    rng_det: np.random.Generator
    rng_nondet: np.random.Generator
    pause_left: int = 0
    climb_left: int = 0


def v_max(phi: float, uc: UserConstants) -> float:
    return uc.v_max_base + uc.v_max_gain * phi


def v_descent(phi: float, uc: UserConstants) -> float:
    return uc.vz_base + uc.vz_gain * phi


def _streams(seed: int) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    root = np.random.SeedSequence(seed)
    kids = root.spawn(3)
    return tuple(np.random.default_rng(k) for k in kids)


def sample_user(
    seed: int,
    goal_xy: np.ndarray,
    uc: UserConstants = UserConstants(),
    pinned: dict | None = None,
) -> tuple[UserParams, UserState]:
    """Draw a pilot and its initial state.

    ``pinned`` overrides individual parameters after the uniform draws (the
    validation protocol pins alpha, psi, phi at 0.5 and sweeps beta). The
    initial goal estimate error shrinks with beta but its direction and
    relative magnitude come from the deterministic stream, so sweeping beta
    under a fixed seed preserves every other decision.
    """
    param_rng, rng_det, rng_nondet = _streams(seed)
    draws = param_rng.uniform(size=4)
    params = UserParams(*draws)
    if pinned:
        params = UserParams(**{**params.to_dict(), **pinned})

    # deterministic decisions, drawn in fixed order
    cruise_alt = float(rng_det.uniform(*uc.cruise_alt_range))
    direct_mode = bool(rng_det.random() < 0.5)
    axis_order = (0, 1) if rng_det.random() < 0.5 else (1, 0)
    err_frac = float(rng_det.uniform())
    err_angle = float(rng_det.uniform(0.0, 2.0 * math.pi))

    err_mag = uc.init_err_max * (1.0 - params.beta) * err_frac
    goal_est = np.asarray(goal_xy, float) + err_mag * np.array(
        [math.cos(err_angle), math.sin(err_angle)]
    )
    state = UserState(
        goal_est=goal_est,
        joystick=np.zeros(3),
        integral=np.zeros(3),
        prev_action=np.zeros(3),
        phase=APPROACH,
        cruise_alt=cruise_alt,
        direct_mode=direct_mode,
        axis_order=axis_order,
        rng_det=rng_det,
        rng_nondet=rng_nondet,
    )
    return params, state


def validation_user(
    seed: int, beta: float, goal_xy: np.ndarray, uc: UserConstants = UserConstants()
) -> tuple[UserParams, UserState]:
    """Sweep pilot: alpha, psi, phi pinned at 0.5; beta set explicitly."""
    return sample_user(seed, goal_xy, uc, pinned={"alpha": 0.5, "psi": 0.5, "phi": 0.5, "beta": beta})


def update_goal_estimate(
    goal_est: np.ndarray,
    params: UserParams,
    a_a_prev: np.ndarray,
    a_u_prev: np.ndarray,
    goal_xy: np.ndarray,
    uc: UserConstants,
) -> np.ndarray:
    """One step of the goal-estimate recurrence (XY components)."""
    return (
        goal_est
        + params.alpha * (a_a_prev[:2] - a_u_prev[:2]) / uc.k_alpha
        + params.beta * (goal_xy - goal_est) / uc.k_beta
    )


def plan(state: UserState, params: UserParams, uav: UavState, uc: UserConstants) -> np.ndarray:
    """Desired velocity V_t of the trajectory planner; consumes the
    non-deterministic stream (two draws per tick, more when events fire)."""
    trigger_pause = state.rng_nondet.random() < uc.pause_prob
    trigger_alt = state.rng_nondet.random() < uc.alt_change_prob
    if trigger_pause and state.pause_left == 0:
        state.pause_left = int(state.rng_nondet.integers(*uc.pause_ticks))
    if trigger_alt:
        if state.phase == APPROACH:
            delta = float(state.rng_nondet.uniform(-uc.alt_change_delta, uc.alt_change_delta))
            state.cruise_alt = float(np.clip(state.cruise_alt + delta, 0.8, 2.0))
        elif state.climb_left == 0:
            state.climb_left = int(state.rng_nondet.integers(*uc.climb_ticks))

    if state.pause_left > 0:
        state.pause_left -= 1
        return np.zeros(3)

    err = state.goal_est - uav.pos[:2]
    dist = float(np.linalg.norm(err))
    vm = v_max(params.phi, uc)
    vz = v_descent(params.phi, uc)

    if state.phase == APPROACH and dist < uc.descent_radius:
        state.phase = DESCEND

    if state.phase == APPROACH:
        v = np.zeros(3)
        if state.direct_mode:
            if dist > 1e-9:
                v[:2] = (err / dist) * min(vm, uc.approach_p * dist)
        else:
            for ax in state.axis_order:
                if abs(err[ax]) > uc.axis_tol:
                    v[ax] = math.copysign(min(vm, uc.approach_p * abs(err[ax])), err[ax])
                    break
        v[2] = float(np.clip(uc.approach_p * (state.cruise_alt - uav.pos[2]), -vz, vz))
        return v

    v = np.zeros(3)
    if dist > 1e-9:
        v[:2] = (err / dist) * min(vm, uc.approach_p * dist)
    if state.climb_left > 0:
        state.climb_left -= 1
        v[2] = vz
    else:
        v[2] = -vz
    return v


def joystick_step(joystick: np.ndarray, v_t: np.ndarray, params: UserParams, uc: UserConstants) -> np.ndarray:
    """Proportional thumb model: J' = J + (V_t - J) * P_gain, P_gain in psi."""
    p_gain = uc.p_gain_lo + (uc.p_gain_hi - uc.p_gain_lo) * params.psi
    return joystick + (v_t - joystick) * p_gain


def adaptability_step(
    integral: np.ndarray,
    a_u_prev: np.ndarray,
    a_a_prev: np.ndarray,
    params: UserParams,
    uc: UserConstants,
) -> np.ndarray:
    """Decayed integral of the pilot/assistant action difference."""
    return uc.i_decay * (integral + (a_u_prev - a_a_prev) * (1.0 - params.alpha))


def user_action(
    state: UserState,
    params: UserParams,
    uav: UavState,
    a_a_prev: np.ndarray,
    goal_xy: np.ndarray,
    uc: UserConstants = UserConstants(),
) -> np.ndarray:
    """Full pilot tick: goal-estimate update, planning, joystick and
    adaptability controllers. Mutates ``state``; returns the commanded
    velocity clamped to the action range."""
    state.goal_est = update_goal_estimate(
        state.goal_est, params, a_a_prev, state.prev_action, goal_xy, uc
    )
    v_t = plan(state, params, uav, uc)
    state.joystick = joystick_step(state.joystick, v_t, params, uc)
    state.integral = adaptability_step(state.integral, state.prev_action, a_a_prev, params, uc)
    a_u = np.clip(state.joystick + state.integral * uc.i_gain, -V_CAP, V_CAP)
    state.prev_action = a_u
    return a_u


def noisy_direct_user(
    goal_top: np.ndarray,
    uav: UavState,
    rng: np.random.Generator,
    speed: float = 0.55,
    noise_std: float = 0.15,
) -> np.ndarray:
    """Baseline pilot: unit vector at the goal (XY plus descent) at a fixed
    speed with isotropic Gaussian noise."""
    delta = np.asarray(goal_top, float) - uav.pos
    n = float(np.linalg.norm(delta))
    mean = speed * (delta / n) if n > 1e-9 else np.array([0.0, 0.0, -speed])
    return np.clip(mean + noise_std * rng.standard_normal(3), -V_CAP, V_CAP)
