"""Per-tick reward of the landing assistant and the action blending rule."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .worldsim import LandingResult, Phase, Platform, UavState, V_CAP


@dataclass(frozen=True)
class RewardParams:
    k_action_diff: float = 0.375
    k_landing_error: float = 12.0
    k_safe_pos: float = 5.0
    k_h_vel: float = 40.0
    k_v_vel: float = 3.5
    h_threshold: float = 1.0  # meters above the goal platform where shaping engages

    def weights(self) -> tuple[float, float, float, float, float]:
        return (
            self.k_action_diff,
            self.k_landing_error,
            self.k_safe_pos,
            self.k_h_vel,
            self.k_v_vel,
        )


def blend(a_u: np.ndarray, a_a: np.ndarray) -> np.ndarray:
    """Shared-control rule: component-wise average, clamped to the action range."""
    return np.clip((np.asarray(a_u, float) + np.asarray(a_a, float)) / 2.0, -V_CAP, V_CAP)


def terminal_contact(state: UavState, result: LandingResult | None) -> LandingResult | None:
    """The landing-result to feed the reward at this tick.

    Touchdowns score their landing terms; an out-of-bounds exit is counted
    as an unsafe landing at the exit point (without this the reward would
    never see the failure, making arena escape a loophole optimum). Timeout
    accrues no landing terms.
    """
    if result is not None and state.phase in (Phase.LANDED, Phase.OUT_OF_BOUNDS):
        return result
    return None


def reward(
    prev: UavState,
    a_a: np.ndarray,
    a_u: np.ndarray,
    next_state: UavState,
    world,
    touchdown: LandingResult | None,
    rp: RewardParams = RewardParams(),
) -> tuple[float, dict[str, float]]:
    """Five-term reward evaluated after a tick.

    Velocity shaping uses the post-step state and engages below the threshold
    height above the goal platform top; the landing terms appear only on the
    terminal-contact tick (see ``terminal_contact``). The safe-position term
    requires all four legs on a platform top: a coplanar landing on open
    ground is safe for the segmentation's purposes but scores -1 here.
    Returns (total, unweighted terms).
    """
    goal = world.goal
    action_diff = -float(np.linalg.norm(np.asarray(a_u, float) - np.asarray(a_a, float)))

    h = float(next_state.pos[2]) - goal.height
    h_vel = 0.0
    v_vel = 0.0
    if h < rp.h_threshold:
        scale = (h - rp.h_threshold) / rp.h_threshold
        vh = math.hypot(float(next_state.vel[0]), float(next_state.vel[1]))
        vv = abs(float(next_state.vel[2]))
        h_vel = scale * vh * vh
        v_vel = scale * vv * vv

    landing_error = 0.0
    safe_pos = 0.0
    if touchdown is not None:
        gx, gy, _ = goal.top_center
        landing_error = -math.hypot(
            gx - touchdown.landing_pos[0], gy - touchdown.landing_pos[1]
        )
        on_platform = touchdown.all_legs_supported and any(
            p.contains(touchdown.landing_pos[0], touchdown.landing_pos[1])
            for p in world.platforms
        )
        safe_pos = 1.0 if on_platform else -1.0

    terms = {
        "action_diff": action_diff,
        "landing_error": landing_error,
        "safe_pos": safe_pos,
        "h_vel": h_vel,
        "v_vel": v_vel,
    }
    total = (
        rp.k_action_diff * action_diff
        + rp.k_landing_error * landing_error
        + rp.k_safe_pos * safe_pos
        + rp.k_h_vel * h_vel
        + rp.k_v_vel * v_vel
    )
    return total, terms


def reward_total_from_terms(terms: dict[str, float], rp: RewardParams) -> float:
    """Recompose the weighted sum; the logged total must equal this exactly."""
    return (
        rp.k_action_diff * terms["action_diff"]
        + rp.k_landing_error * terms["landing_error"]
        + rp.k_safe_pos * terms["safe_pos"]
        + rp.k_h_vel * terms["h_vel"]
        + rp.k_v_vel * terms["v_vel"]
    )
