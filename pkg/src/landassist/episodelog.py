"""Episode logs (JSONL) and bit-exact replay.

A log is one header object, one object per tick, and one result object.
Replaying feeds the logged assistant actions back through the simulated
pilot and the world dynamics; every recomputed field must match the log
exactly, including the reward terms and (when the encoder checkpoint is
available) the latent vectors.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .episode import EpisodeEngine
from .rewards import RewardParams, blend, reward, terminal_contact
from .seeds import int_seed, rng_from
from .simuser import UserConstants, noisy_direct_user, user_action, sample_user, validation_user
from .worldsim import DynamicsParams, Phase, World


def write_episode_log(path: str | Path, header: dict, ticks: list[dict], result: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        f.write(json.dumps({"type": "header", **header}) + "\n")
        for t in ticks:
            f.write(json.dumps({"type": "tick", **t}) + "\n")
        f.write(json.dumps({"type": "result", **result}) + "\n")
    return path


def read_episode_log(path: str | Path) -> tuple[dict, list[dict], dict]:
    header = None
    ticks = []
    result = None
    with open(path) as f:
        for line in f:
            obj = json.loads(line)
            kind = obj.pop("type")
            if kind == "header":
                header = obj
            elif kind == "tick":
                ticks.append(obj)
            elif kind == "result":
                result = obj
            else:
                raise ValueError(f"{path}: unknown record type {kind!r}")
    if header is None or result is None:
        raise ValueError(f"{path}: incomplete log")
    return header, ticks, result


@dataclass
class ReplayReport:
    ok: bool
    mismatches: list[str]
    checked_mu: bool


def _build_pilot(header: dict, world: World, uc: UserConstants):
    user = header["user"]
    goal_xy = np.array(world.goal.center)
    kind = user["kind"]
    if kind == "param":
        if "beta" in user:
            params, state = validation_user(user["seed"], user["beta"], goal_xy, uc)
        else:
            params, state = sample_user(user["seed"], goal_xy, uc)
        return ("param", params, state, goal_xy)
    if kind == "direct":
        return (
            "direct",
            rng_from(user["seed"], "direct-user"),
            float(user["speed"]),
            float(user["noise_std"]),
        )
    if kind == "human":
        return ("human",)
    raise ValueError(f"unknown user kind {kind!r}")


def replay_episode_log(path: str | Path, encoder=None) -> ReplayReport:
    """Re-simulate from the logged seeds and assistant actions; compare every
    tick field. ``encoder`` enables latent-vector verification; without it mu
    fields are skipped."""
    header, ticks, result = read_episode_log(path)
    mismatches: list[str] = []

    world = World.from_dict(header["world"])
    dyn = DynamicsParams(**header["dynamics"])
    uc = UserConstants(**{k: tuple(v) if isinstance(v, list) else v
                          for k, v in header["user_constants"].items()})
    rp = RewardParams(**header["reward_params"])
    pilot = _build_pilot(header, world, uc)
    engine = EpisodeEngine(
        world, dyn, np.array(header["start_pos"]), noise_rng=rng_from(header["noise_seed"], "ge-noise")
    )
    goal_xy = np.array(world.goal.center)
    a_a_prev = np.zeros(3)

    check_mu = encoder is not None and any("mu" in t for t in ticks)

    for i, rec in enumerate(ticks):
        state = engine.state
        if pilot[0] == "param":
            _, params, ustate, gxy = pilot
            a_u = user_action(ustate, params, state, a_a_prev, gxy, uc)
        elif pilot[0] == "direct":
            _, rng, speed, noise_std = pilot
            a_u = noisy_direct_user(np.array(world.goal.top_center), state, rng, speed, noise_std)
        else:
            a_u = np.array(rec["a_u"])
        if [float(v) for v in a_u] != rec["a_u"]:
            mismatches.append(f"tick {i}: a_u {list(a_u)} != {rec['a_u']}")

        a_a = np.array(rec["a_a"])
        blended = blend(a_u, a_a) if rec["assist"] else np.asarray(a_u, float).copy()
        if [float(v) for v in blended] != rec["blended"]:
            mismatches.append(f"tick {i}: blended mismatch")

        if check_mu and "mu" in rec:
            mu = encoder.encode_pose(world, state.pos)
            if [float(v) for v in mu] != rec["mu"]:
                mismatches.append(f"tick {i}: mu mismatch")

        new_state, _ = engine.tick(blended)
        touchdown = terminal_contact(new_state, engine.result)
        r, terms = reward(state, a_a, a_u, new_state, world, touchdown, rp)
        if [float(v) for v in new_state.pos] != rec["pos"]:
            mismatches.append(f"tick {i}: pos mismatch")
        if [float(v) for v in new_state.vel] != rec["vel"]:
            mismatches.append(f"tick {i}: vel mismatch")
        if new_state.phase.value != rec["phase"]:
            mismatches.append(f"tick {i}: phase {new_state.phase.value} != {rec['phase']}")
        if r != rec["reward"] or terms != rec["reward_terms"]:
            mismatches.append(f"tick {i}: reward mismatch")
        a_a_prev = a_a
        if engine.done:
            if i != len(ticks) - 1:
                mismatches.append(f"terminated early at tick {i} of {len(ticks)}")
            break
    else:
        if not engine.done:
            mismatches.append("log ended before termination")

    if engine.done and engine.result is not None:
        expected = engine.result.to_dict()
        got = {k: result.get(k) for k in expected}  # logs may carry annotations
        if expected != got:
            mismatches.append("landing result mismatch")

    return ReplayReport(ok=not mismatches, mismatches=mismatches, checked_mu=check_mu)


def make_log_header(
    world: World,
    dyn: DynamicsParams,
    uc: UserConstants,
    rp: RewardParams,
    user: dict,
    assistant_id: str,
    noise_seed: int,
    start_pos,
    config_hash: str = "",
    extra: dict | None = None,
) -> dict:
    h = {
        "config_hash": config_hash,
        "world": world.to_dict(),
        "dynamics": dyn.__dict__,
        "user_constants": {k: list(v) if isinstance(v, tuple) else v for k, v in uc.__dict__.items()},
        "reward_params": rp.__dict__,
        "user": user,
        "assistant": assistant_id,
        "noise_seed": noise_seed,
        "start_pos": [float(v) for v in start_pos],
    }
    if extra:
        h.update(extra)
    return h
