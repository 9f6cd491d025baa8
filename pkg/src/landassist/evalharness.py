"""Seeded validation sequences, episode metrics, baseline assistants and the
comparison/ablation batteries.

Every evaluated model consumes the identical validation sequence: per
landing, the pilot RNG streams, the ground-effect noise stream, the start
platform and the goal are all derived from the sequence seed, so curves
across models differ only through the assistant's actions.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .config import EvalConfig
from .episode import EpisodeEngine
from .rewards import RewardParams, blend, reward, terminal_contact
from .seeds import int_seed, rng_from
from .simuser import UserConstants, noisy_direct_user, user_action, validation_user, sample_user
from .worldsim import DynamicsParams, Phase, UavState, V_CAP, Validation3x3, World, generate_world


# ---------------------------------------------------------------------------
# Validation sequence
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ValidationLanding:
    index: int
    landing_seed: int
    start_id: int
    goal_id: int


@dataclass(frozen=True)
class ValidationSequence:
    sequence_seed: int
    landings: tuple[ValidationLanding, ...]

    def to_dict(self) -> dict:
        return {
            "sequence_seed": self.sequence_seed,
            "landings": [
                {
                    "index": l.index,
                    "landing_seed": l.landing_seed,
                    "start_id": l.start_id,
                    "goal_id": l.goal_id,
                }
                for l in self.landings
            ],
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def make_validation_sequence(sequence_seed: int, n_landings: int = 10) -> ValidationSequence:
    r = rng_from(sequence_seed, "validation-landings")
    landings = []
    for i in range(n_landings):
        goal = int(r.integers(9))
        start = int(r.integers(9))
        while start == goal:
            start = int(r.integers(9))
        landings.append(
            ValidationLanding(
                index=i,
                landing_seed=int_seed(sequence_seed, "landing", i),
                start_id=start,
                goal_id=goal,
            )
        )
    return ValidationSequence(sequence_seed, tuple(landings))


def validation_world(goal_id: int) -> World:
    return generate_world(0, Validation3x3()).with_goal(goal_id)


# ---------------------------------------------------------------------------
# Pilots
# ---------------------------------------------------------------------------

class ParamPilot:
    """Four-parameter simulated pilot bound to one episode."""

    kind = "param"

    def __init__(self, params, state, goal_xy: np.ndarray, uc: UserConstants):
        self.params = params
        self.state = state
        self.goal_xy = goal_xy
        self.uc = uc

    @classmethod
    def validation(cls, landing_seed: int, beta: float, world: World, uc: UserConstants):
        goal_xy = np.array(world.goal.center)
        params, state = validation_user(landing_seed, beta, goal_xy, uc)
        return cls(params, state, goal_xy, uc)

    @classmethod
    def sampled(cls, seed: int, world: World, uc: UserConstants):
        goal_xy = np.array(world.goal.center)
        params, state = sample_user(seed, goal_xy, uc)
        return cls(params, state, goal_xy, uc)

    @property
    def cruise_alt(self) -> float:
        return self.state.cruise_alt

    def act(self, uav: UavState, a_a_prev: np.ndarray) -> np.ndarray:
        return user_action(self.state, self.params, uav, a_a_prev, self.goal_xy, self.uc)


class DirectPilot:
    """Noise-perturbed straight-to-goal pilot (comparison user model)."""

    kind = "direct"

    def __init__(self, goal_top: np.ndarray, seed: int, speed: float, noise_std: float):
        self.goal_top = np.asarray(goal_top, float)
        self.rng = rng_from(seed, "direct-user")
        self.speed = speed
        self.noise_std = noise_std
        self.cruise_alt = 1.4

    def act(self, uav: UavState, a_a_prev: np.ndarray) -> np.ndarray:
        return noisy_direct_user(self.goal_top, uav, self.rng, self.speed, self.noise_std)


# ---------------------------------------------------------------------------
# Baseline assistant
# ---------------------------------------------------------------------------

class GoalWeightedAssistant:
    """Known-goal-set baseline: a Bayesian posterior over platform goals from
    the pilot's action alignment, and a posterior-weighted sum of per-goal
    pursuit actions. Requires all platform positions."""

    name = "goal_weighted"

    def __init__(
        self,
        temperature: float = 0.5,
        speed: float = 0.9,
        descent_radius: float = 0.3,
        cruise_alt: float = 1.2,
        descent_speed: float = 0.8,
        forgetting: float = 1.0,
    ):
        self.temperature = temperature
        self.speed = speed
        self.descent_radius = descent_radius
        self.cruise_alt = cruise_alt
        self.descent_speed = descent_speed
        self.forgetting = forgetting   # <1 discounts old alignment evidence
        self._log_post: np.ndarray | None = None

    def reset(self) -> None:
        self._log_post = None

    @property
    def posterior(self) -> np.ndarray | None:
        if self._log_post is None:
            return None
        p = np.exp(self._log_post - self._log_post.max())
        return p / p.sum()

    def act(self, world: World, uav: UavState, a_u: np.ndarray) -> tuple[np.ndarray, None]:
        n = len(world.platforms)
        if self._log_post is None or len(self._log_post) != n:
            self._log_post = np.zeros(n)
        centers = np.array([p.center for p in world.platforms])
        delta = centers - uav.pos[:2]
        dist = np.linalg.norm(delta, axis=1)
        a_xy = np.asarray(a_u, float)[:2]
        speed_xy = float(np.linalg.norm(a_xy))
        if speed_xy > 1e-9:
            dirs = delta / np.maximum(dist[:, None], 1e-9)
            cos = dirs @ (a_xy / speed_xy)
            self._log_post = self.forgetting * self._log_post + cos * speed_xy / self.temperature
            self._log_post -= self._log_post.max()

        post = self.posterior
        acts = np.zeros((n, 3))
        z = float(uav.pos[2])
        for i, p in enumerate(world.platforms):
            if dist[i] > 1e-9:
                acts[i, :2] = (delta[i] / dist[i]) * min(self.speed, 2.0 * dist[i])
            # glide-slope descent schedule toward each candidate goal
            if dist[i] < self.descent_radius:
                z_des = 0.0
            else:
                z_des = min(self.cruise_alt, max(0.2, 0.5 * dist[i]))
            acts[i, 2] = float(np.clip(2.5 * (z_des - z), -self.descent_speed, 0.5))
        a = post @ acts
        return np.clip(a, -V_CAP, V_CAP), None


class NoAssistant:
    """Unassisted arm: mirrors the pilot so the blend is a passthrough."""

    name = "none"

    def reset(self) -> None:
        pass

    def act(self, world: World, uav: UavState, a_u: np.ndarray) -> tuple[np.ndarray, None]:
        return np.asarray(a_u, float).copy(), None


# ---------------------------------------------------------------------------
# Episode runner and metrics
# ---------------------------------------------------------------------------

@dataclass
class EpisodeMetrics:
    landing_error: float
    success: bool
    time_norm: float
    dist_norm: float
    efficiency: float
    exerted_control: float
    phase: str
    ticks: int
    assist_profile: list[tuple[float, float]] = field(repr=False, default_factory=list)


@dataclass
class EpisodeRecord:
    metrics: EpisodeMetrics
    result_dict: dict
    tick_records: list[dict] | None = None


def run_episode(
    world: World,
    pilot,
    assistant,
    dyn: DynamicsParams,
    rp: RewardParams,
    noise_seed: int,
    start_pos: np.ndarray,
    assist_on: bool = True,
    collect_ticks: bool = False,
) -> EpisodeRecord:
    """Drive one landing episode; the assistant contributes only when
    ``assist_on``. Tick records carry everything a log needs for bit-exact
    replay."""
    if assistant is not None:
        assistant.reset()
    engine = EpisodeEngine(world, dyn, start_pos, noise_rng=rng_from(noise_seed, "ge-noise"))
    goal_top = np.array(world.goal.top_center)
    init_dist = float(np.linalg.norm(np.asarray(start_pos, float) - goal_top))
    a_a_prev = np.zeros(3)
    path_len = 0.0
    control_sum = 0.0
    profile: list[tuple[float, float]] = []
    ticks: list[dict] | None = [] if collect_ticks else None

    while not engine.done:
        state = engine.state
        a_u = pilot.act(state, a_a_prev)
        mu = None
        if assistant is None:
            a_a = a_u.copy()
        else:
            a_a, mu = assistant.act(world, state, a_u)
        blended = blend(a_u, a_a) if assist_on else np.asarray(a_u, float).copy()
        dist_xy = math.hypot(state.pos[0] - goal_top[0], state.pos[1] - goal_top[1])
        profile.append((dist_xy, float(np.linalg.norm(a_u - a_a))))
        control_sum += float(np.linalg.norm(blended - a_u))
        prev_pos = state.pos.copy()
        new_state, _ = engine.tick(blended)
        touchdown = terminal_contact(new_state, engine.result)
        r, terms = reward(state, a_a, a_u, new_state, world, touchdown, rp)
        path_len += float(np.linalg.norm(new_state.pos - prev_pos))
        if ticks is not None:
            ticks.append(
                {
                    "t": new_state.t,
                    "pos": [float(v) for v in new_state.pos],
                    "vel": [float(v) for v in new_state.vel],
                    "phase": new_state.phase.value,
                    "a_u": [float(v) for v in a_u],
                    "a_a": [float(v) for v in a_a],
                    "blended": [float(v) for v in blended],
                    "assist": bool(assist_on),
                    "reward": r,
                    "reward_terms": terms,
                    **({"mu": [float(v) for v in mu]} if mu is not None else {}),
                }
            )
        a_a_prev = a_a

    res = engine.result
    err = math.hypot(res.landing_pos[0] - goal_top[0], res.landing_pos[1] - goal_top[1])
    t_end = engine.state.t
    n_ticks = engine.ticks
    metrics = EpisodeMetrics(
        landing_error=err,
        success=bool(res.success),
        time_norm=t_end / init_dist,
        dist_norm=path_len / init_dist,
        efficiency=t_end * path_len / init_dist**2,
        exerted_control=control_sum / n_ticks,
        phase=engine.state.phase.value,
        ticks=n_ticks,
        assist_profile=profile,
    )
    return EpisodeRecord(metrics=metrics, result_dict=res.to_dict(), tick_records=ticks)


def metrics_from_ticks(tick_records: list[dict], world: World, start_pos) -> EpisodeMetrics:
    """Recompute the episode metrics from a stored tick log; must equal the
    values computed online."""
    goal_top = np.array(world.goal.top_center)
    init_dist = float(np.linalg.norm(np.asarray(start_pos, float) - goal_top))
    prev = np.asarray(start_pos, float)
    path_len = 0.0
    control = 0.0
    profile = []
    prev_xy = prev[:2]
    for rec in tick_records:
        pos = np.array(rec["pos"])
        a_u = np.array(rec["a_u"])
        a_a = np.array(rec["a_a"])
        blended = np.array(rec["blended"])
        dist_xy = math.hypot(prev_xy[0] - goal_top[0], prev_xy[1] - goal_top[1])
        profile.append((dist_xy, float(np.linalg.norm(a_u - a_a))))
        control += float(np.linalg.norm(blended - a_u))
        path_len += float(np.linalg.norm(pos - prev))
        prev = pos
        prev_xy = pos[:2]
    last = tick_records[-1]
    final_xy = np.array(last["pos"][:2])
    err = math.hypot(final_xy[0] - goal_top[0], final_xy[1] - goal_top[1])
    t_end = last["t"]
    n = len(tick_records)
    return EpisodeMetrics(
        landing_error=err,
        success=False,  # success is owned by the landing result, not the log
        time_norm=t_end / init_dist,
        dist_norm=path_len / init_dist,
        efficiency=t_end * path_len / init_dist**2,
        exerted_control=control / n,
        phase=last["phase"],
        ticks=n,
        assist_profile=profile,
    )


# ---------------------------------------------------------------------------
# Validation sweep
# ---------------------------------------------------------------------------

def run_validation(
    assistant,
    seq: ValidationSequence,
    beta_sweep,
    dyn: DynamicsParams,
    uc: UserConstants,
    rp: RewardParams,
    assist_on: bool = True,
    collect_ticks: bool = False,
    episode_hook=None,
) -> list[dict]:
    """One row per (beta, landing). The same landing seeds, start platforms,
    goals and noise streams are used for every assistant."""
    rows = []
    for beta in beta_sweep:
        for landing in seq.landings:
            world = validation_world(landing.goal_id)
            pilot = ParamPilot.validation(landing.landing_seed, beta, world, uc)
            start_p = world.platforms[landing.start_id]
            start = np.array([start_p.center[0], start_p.center[1], pilot.cruise_alt])
            rec = run_episode(
                world, pilot, assistant, dyn, rp,
                noise_seed=int_seed(seq.sequence_seed, "noise", landing.index),
                start_pos=start,
                assist_on=assist_on and assistant is not None,
                collect_ticks=collect_ticks,
            )
            m = rec.metrics
            row = {
                "beta": beta,
                "landing": landing.index,
                "landing_seed": landing.landing_seed,
                "goal_id": landing.goal_id,
                "start_id": landing.start_id,
                "landing_error": m.landing_error,
                "success": m.success,
                "time_norm": m.time_norm,
                "dist_norm": m.dist_norm,
                "efficiency": m.efficiency,
                "exerted_control": m.exerted_control,
                "phase": m.phase,
                "ticks": m.ticks,
            }
            rows.append(row)
            if episode_hook is not None:
                episode_hook(row, rec, world, pilot, start)
    return rows


def aggregate_by_beta(rows: list[dict]) -> list[dict]:
    out = []
    for beta in sorted({r["beta"] for r in rows}):
        sel = [r for r in rows if r["beta"] == beta]
        errs = np.array([r["landing_error"] for r in sel])
        out.append(
            {
                "beta": beta,
                "n": len(sel),
                "success_rate": float(np.mean([r["success"] for r in sel])),
                "mean_landing_error": float(errs.mean()),
                "var_landing_error": float(errs.var()),
                "mean_exerted_control": float(np.mean([r["exerted_control"] for r in sel])),
                "mean_efficiency": float(np.mean([r["efficiency"] for r in sel])),
            }
        )
    return out


def validation_summary(rows: list[dict]) -> dict:
    errs = [r["landing_error"] for r in rows]
    return {
        "n": len(rows),
        "success_rate": float(np.mean([r["success"] for r in rows])),
        "mean_landing_error": float(np.mean(errs)),
        "mean_exerted_control": float(np.mean([r["exerted_control"] for r in rows])),
        "mean_efficiency": float(np.mean([r["efficiency"] for r in rows])),
    }


# ---------------------------------------------------------------------------
# Strategy comparison
# ---------------------------------------------------------------------------

def compare_strategies(
    strategies: dict,
    seq: ValidationSequence,
    ec: EvalConfig,
    dyn: DynamicsParams,
    uc: UserConstants,
    rp: RewardParams,
) -> list[dict]:
    """Cross product {strategy} x {param user beta grid, noisy-direct user} x
    seeded landings. The beta grid doubles as the repeat axis for the param
    user; the direct user repeats under distinct seeds."""
    rows = []
    for name, assistant in strategies.items():
        for rep, beta in enumerate(ec.beta_sweep):
            for landing in seq.landings:
                world = validation_world(landing.goal_id)
                pilot = ParamPilot.validation(landing.landing_seed, beta, world, uc)
                start_p = world.platforms[landing.start_id]
                start = np.array([start_p.center[0], start_p.center[1], pilot.cruise_alt])
                rec = run_episode(
                    world, pilot, assistant, dyn, rp,
                    noise_seed=int_seed(seq.sequence_seed, "noise", landing.index),
                    start_pos=start,
                    assist_on=assistant is not None and name != "none",
                )
                rows.append(
                    {"strategy": name, "user": "param", "repeat": rep, "beta": beta,
                     "landing": landing.index, **_metric_cols(rec)}
                )
        for rep in range(ec.repeats):
            for landing in seq.landings:
                world = validation_world(landing.goal_id)
                pilot = DirectPilot(
                    world.goal.top_center,
                    int_seed(seq.sequence_seed, "direct", rep, landing.index),
                    ec.direct_user_speed,
                    ec.direct_user_noise,
                )
                start_p = world.platforms[landing.start_id]
                start = np.array([start_p.center[0], start_p.center[1], pilot.cruise_alt])
                rec = run_episode(
                    world, pilot, assistant, dyn, rp,
                    noise_seed=int_seed(seq.sequence_seed, "noise", landing.index),
                    start_pos=start,
                    assist_on=assistant is not None and name != "none",
                )
                rows.append(
                    {"strategy": name, "user": "direct", "repeat": rep, "beta": float("nan"),
                     "landing": landing.index, **_metric_cols(rec)}
                )
    return rows


def _metric_cols(rec: EpisodeRecord) -> dict:
    m = rec.metrics
    return {
        "landing_error": m.landing_error,
        "success": m.success,
        "time_norm": m.time_norm,
        "dist_norm": m.dist_norm,
        "efficiency": m.efficiency,
        "exerted_control": m.exerted_control,
        "phase": m.phase,
        "ticks": m.ticks,
    }


def comparison_summary(rows: list[dict]) -> list[dict]:
    out = []
    for name in sorted({r["strategy"] for r in rows}):
        sel = [r for r in rows if r["strategy"] == name]
        out.append(
            {
                "strategy": name,
                "n": len(sel),
                "mean_landing_error": float(np.mean([r["landing_error"] for r in sel])),
                "success_rate": float(np.mean([r["success"] for r in sel])),
                "mean_efficiency": float(np.mean([r["efficiency"] for r in sel])),
                "mean_exerted_control": float(np.mean([r["exerted_control"] for r in sel])),
            }
        )
    return out


# ---------------------------------------------------------------------------
# Assistance profile
# ---------------------------------------------------------------------------

def assist_profile_table(profiles: list[list[tuple[float, float]]], bin_edges) -> list[dict]:
    """Bin per-tick pilot/assistant action distance by XY distance to goal."""
    pairs = np.array([p for prof in profiles for p in prof])
    rows = []
    for lo, hi in zip(bin_edges[:-1], bin_edges[1:]):
        sel = pairs[(pairs[:, 0] >= lo) & (pairs[:, 0] < hi)] if len(pairs) else np.empty((0, 2))
        rows.append(
            {
                "bin_lo": float(lo),
                "bin_hi": float(hi),
                "count": int(sel.shape[0]),
                "mean_assistance": float(sel[:, 1].mean()) if len(sel) else 0.0,
                "q25": float(np.quantile(sel[:, 1], 0.25)) if len(sel) else 0.0,
                "q75": float(np.quantile(sel[:, 1], 0.75)) if len(sel) else 0.0,
            }
        )
    return rows
