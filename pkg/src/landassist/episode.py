"""Episode stepping: terminal-phase machine over the world dynamics.

One engine instance owns one episode. Callers provide the blended command
each tick; the engine steps the dynamics, detects touchdown, out-of-bounds
and timeout, and freezes the terminal state. Pilots and assistants are
composed on top (duck-typed ``act`` callables) so training, evaluation,
replay and the live server all drive the same machine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .worldsim import (
    DynamicsParams,
    LandingResult,
    Phase,
    UavState,
    World,
    check_touchdown,
    step_dynamics,
    _surface_under,
    _LEG_SIGNS,
)


def contact_height(world: World, x: float, y: float, leg_half_span: float) -> float:
    return max(
        _surface_under(world, x + sx * leg_half_span, y + sy * leg_half_span)[0]
        for sx, sy in _LEG_SIGNS
    )


def _terminal_result(state: UavState) -> LandingResult:
    return LandingResult(
        landing_pos=(float(state.pos[0]), float(state.pos[1])),
        landing_vh=math.hypot(float(state.vel[0]), float(state.vel[1])),
        landing_vv=abs(float(state.vel[2])),
        on_goal=False,
        all_legs_supported=False,
        success=False,
    )


class EpisodeEngine:
    """Authoritative per-episode state machine at the 0.2 s control tick."""

    def __init__(
        self,
        world: World,
        dyn: DynamicsParams,
        start_pos: np.ndarray,
        noise_rng: np.random.Generator | None = None,
    ):
        self.world = world
        self.dyn = dyn
        self.noise_rng = noise_rng
        self.state = UavState(pos=np.asarray(start_pos, float).copy(), vel=np.zeros(3))
        self.result: LandingResult | None = None
        self.ticks = 0
        self.max_ticks = int(round(dyn.time_limit / dyn.dt))

    @property
    def done(self) -> bool:
        return self.state.phase.terminal

    def tick(self, blended_cmd: np.ndarray) -> tuple[UavState, LandingResult | None]:
        """Advance one control tick; returns the new state and, on the
        terminal tick, the landing result."""
        if self.done:
            raise RuntimeError("episode already terminal")
        s = step_dynamics(self.state, blended_cmd, self.dyn, rng=self.noise_rng)
        self.ticks += 1
        s.t = self.ticks * self.dyn.dt

        if math.hypot(float(s.pos[0]), float(s.pos[1])) > self.world.bounds:
            s.phase = Phase.OUT_OF_BOUNDS
            self.result = _terminal_result(s)
        else:
            res = check_touchdown(
                s,
                self.world,
                self.dyn.leg_half_span,
                vh_max=self.dyn.vh_max,
                vv_max=self.dyn.vv_max,
            )
            if res is not None:
                s.phase = Phase.LANDED
                s.pos[2] = contact_height(
                    self.world, float(s.pos[0]), float(s.pos[1]), self.dyn.leg_half_span
                )
                self.result = res
            elif self.ticks >= self.max_ticks:
                s.phase = Phase.TIMED_OUT
                self.result = _terminal_result(s)

        self.state = s
        return s, self.result if self.done else None
