"""TD3 landing assistant: two-branch recurrent actor, privileged twin
critics, single-step recurrent replay, Ornstein-Uhlenbeck exploration and
the epoch-alternating train loop.

The actor sees the current state (UAV position/velocity, pilot action, mean
latent vector) plus the previous state and its own previous action through
an LSTM cell; the critics additionally receive the pilot's true goal,
turning their learning problem into a fully observed one. Exploration runs
16 lockstep episodes per epoch; optimization then performs one update per
newly collected transition.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import RunConfig, Td3Config, WorldConfig
from .episode import EpisodeEngine
from .rewards import RewardParams, blend, reward, terminal_contact
from .seeds import int_seed, rng_from
from .simuser import UserConstants, sample_user, user_action
from .tensorio import load_bundle, save_bundle
from .vae import VaeEncoder
from .worldsim import (
    DynamicsParams,
    Grid,
    Phase,
    RandomScatter,
    UavState,
    V_CAP,
    World,
    generate_world,
)

ACT_DIM = 3


def obs_dim(latent_dim: int) -> int:
    return 9 + latent_dim


def assemble_obs(uav: UavState, a_u: np.ndarray, mu: np.ndarray) -> np.ndarray:
    return np.concatenate(
        [uav.pos, uav.vel, a_u, mu], dtype=np.float32, casting="unsafe"
    )


def _obs_scale(latent_dim: int, bounds: float = 3.4) -> torch.Tensor:
    s = [1.0 / bounds, 1.0 / bounds, 0.5] + [1.0 / V_CAP] * 6 + [1.0] * latent_dim
    return torch.tensor(s, dtype=torch.float32)


def _mlp(in_dim: int, hidden: int) -> nn.Sequential:
    return nn.Sequential(nn.Linear(in_dim, hidden), nn.ReLU(), nn.Linear(hidden, hidden), nn.ReLU())


class TwoBranchActor(nn.Module):
    """Branch 1 embeds the current state; branch 2 embeds [previous state,
    previous action] and feeds one LSTM cell. Output is tanh scaled to the
    velocity range."""

    def __init__(
        self,
        latent_dim: int,
        hidden: int = 128,
        lstm_size: int = 64,
        use_lstm: bool = True,
        oracle: bool = False,
    ):
        super().__init__()
        d = obs_dim(latent_dim)
        self.use_lstm = use_lstm
        self.oracle = oracle
        self.lstm_size = lstm_size
        self.register_buffer("obs_scale", _obs_scale(latent_dim))
        self.b1 = _mlp(d + (3 if oracle else 0), hidden)
        self.b2 = _mlp(d + ACT_DIM, hidden)
        if use_lstm:
            self.lstm = nn.LSTMCell(hidden, lstm_size)
            merge_in = hidden + lstm_size
        else:
            merge_in = hidden + hidden
        self.merge = nn.Sequential(
            nn.Linear(merge_in, hidden), nn.ReLU(), nn.Linear(hidden, hidden), nn.ReLU(),
            nn.Linear(hidden, ACT_DIM),
        )
        # start as a near-silent assistant: a loud random policy would drag
        # the conformant pilot's goal estimate and poison its action signal
        nn.init.uniform_(self.merge[-1].weight, -3e-3, 3e-3)
        nn.init.uniform_(self.merge[-1].bias, -3e-3, 3e-3)

    def forward(
        self,
        obs: torch.Tensor,
        prev_obs: torch.Tensor,
        prev_act: torch.Tensor,
        h: torch.Tensor,
        c: torch.Tensor,
        goal: torch.Tensor | None = None,
    ) -> tuple[torch.Tensor, tuple[torch.Tensor, torch.Tensor]]:
        x1 = obs * self.obs_scale
        if self.oracle:
            if goal is None:
                raise ValueError("oracle actor requires the goal")
            x1 = torch.cat([x1, goal], dim=1)
        f1 = self.b1(x1)
        f2 = self.b2(torch.cat([prev_obs * self.obs_scale, prev_act / V_CAP], dim=1))
        if self.use_lstm:
            h2, c2 = self.lstm(f2, (h, c))
            merged = torch.cat([f1, h2], dim=1)
        else:
            h2, c2 = h, c
            merged = torch.cat([f1, f2], dim=1)
        return torch.tanh(self.merge(merged)) * V_CAP, (h2, c2)

    def initial_state(self, batch: int, dtype=torch.float32) -> tuple[torch.Tensor, torch.Tensor]:
        z = torch.zeros(batch, self.lstm_size, dtype=dtype)
        return z, z.clone()


class _CriticTrunk(nn.Module):
    def __init__(self, latent_dim: int, hidden: int, with_goal: bool):
        super().__init__()
        d = obs_dim(latent_dim)
        self.b1 = _mlp(d + (3 if with_goal else 0) + ACT_DIM, hidden)
        self.b2 = _mlp(d + ACT_DIM, hidden)
        self.merge = nn.Sequential(
            nn.Linear(2 * hidden, hidden), nn.ReLU(), nn.Linear(hidden, hidden), nn.ReLU(),
            nn.Linear(hidden, 1),
        )
        nn.init.uniform_(self.merge[-1].weight, -3e-4, 3e-4)
        nn.init.uniform_(self.merge[-1].bias, -3e-4, 3e-4)

    def forward(self, x1: torch.Tensor, x2: torch.Tensor) -> torch.Tensor:
        return self.merge(torch.cat([self.b1(x1), self.b2(x2)], dim=1))


class TwinCritic(nn.Module):
    """Independent twins over the same two-branch design; linear output."""

    def __init__(self, latent_dim: int, hidden: int = 128, with_goal: bool = True):
        super().__init__()
        self.with_goal = with_goal
        self.register_buffer("obs_scale", _obs_scale(latent_dim))
        self.t1 = _CriticTrunk(latent_dim, hidden, with_goal)
        self.t2 = _CriticTrunk(latent_dim, hidden, with_goal)

    def _inputs(self, obs, goal, prev_obs, prev_act, act):
        x1 = [obs * self.obs_scale]
        if self.with_goal:
            if goal is None:
                raise ValueError("privileged critic requires the goal")
            x1.append(goal)
        x1.append(act / V_CAP)
        x1 = torch.cat(x1, dim=1)
        x2 = torch.cat([prev_obs * self.obs_scale, prev_act / V_CAP], dim=1)
        return x1, x2

    def forward(self, obs, goal, prev_obs, prev_act, act):
        x1, x2 = self._inputs(obs, goal, prev_obs, prev_act, act)
        return self.t1(x1, x2), self.t2(x1, x2)

    def q1(self, obs, goal, prev_obs, prev_act, act):
        x1, x2 = self._inputs(obs, goal, prev_obs, prev_act, act)
        return self.t1(x1, x2)


@dataclass
class Td3Nets:
    actor: TwoBranchActor
    critic: TwinCritic
    actor_target: TwoBranchActor
    critic_target: TwinCritic

    @classmethod
    def create(cls, latent_dim: int, cfg: Td3Config, seed: int) -> "Td3Nets":
        torch.manual_seed(int_seed(seed, "policy-init"))
        actor = TwoBranchActor(
            latent_dim, cfg.hidden, cfg.lstm_size, use_lstm=not cfg.no_lstm, oracle=cfg.oracle
        )
        critic = TwinCritic(latent_dim, cfg.hidden, with_goal=not cfg.no_critic_goal)
        return cls(actor, critic, copy.deepcopy(actor), copy.deepcopy(critic))


def polyak_update(online: nn.Module, target: nn.Module, tau: float) -> None:
    with torch.no_grad():
        src = list(online.parameters())
        dst = list(target.parameters())
        torch._foreach_mul_(dst, 1.0 - tau)
        torch._foreach_add_(dst, src, alpha=tau)
        for b, bt in zip(online.buffers(), target.buffers()):
            bt.copy_(b)


class OUNoise:
    """Mean-reverting exploration noise; one 3-vector per environment."""

    def __init__(self, n: int, theta: float, sigma: float, dt: float, rng: np.random.Generator):
        self.n = n
        self.theta = theta
        self.sigma = sigma
        self.dt = dt
        self.rng = rng
        self.state = np.zeros((n, 3))

    def reset(self, i: int | None = None) -> None:
        if i is None:
            self.state[:] = 0.0
        else:
            self.state[i] = 0.0

    def step(self) -> np.ndarray:
        self.state = (
            self.state
            + self.theta * (-self.state) * self.dt
            + self.sigma * math.sqrt(self.dt) * self.rng.standard_normal((self.n, 3))
        )
        return self.state


class ReplayBuffer:
    def __init__(self, capacity: int, latent_dim: int, lstm_size: int):
        d = obs_dim(latent_dim)
        self.capacity = capacity
        self.size = 0
        self.pos = 0
        self.obs = np.zeros((capacity, d), dtype=np.float32)
        self.prev_obs = np.zeros((capacity, d), dtype=np.float32)
        self.prev_act = np.zeros((capacity, ACT_DIM), dtype=np.float32)
        self.h_in = np.zeros((capacity, lstm_size), dtype=np.float32)
        self.c_in = np.zeros((capacity, lstm_size), dtype=np.float32)
        self.act = np.zeros((capacity, ACT_DIM), dtype=np.float32)
        self.rew = np.zeros(capacity, dtype=np.float32)
        self.next_obs = np.zeros((capacity, d), dtype=np.float32)
        self.h_out = np.zeros((capacity, lstm_size), dtype=np.float32)
        self.c_out = np.zeros((capacity, lstm_size), dtype=np.float32)
        self.done = np.zeros(capacity, dtype=np.float32)
        self.goal = np.zeros((capacity, 3), dtype=np.float32)

    _FIELDS = (
        "obs", "prev_obs", "prev_act", "h_in", "c_in", "act", "rew",
        "next_obs", "h_out", "c_out", "done", "goal",
    )

    def add_batch(self, **arrays: np.ndarray) -> None:
        n = arrays["obs"].shape[0]
        for k in self._FIELDS:
            a = arrays[k]
            idx = (self.pos + np.arange(n)) % self.capacity
            getattr(self, k)[idx] = a
        self.pos = (self.pos + n) % self.capacity
        self.size = min(self.size + n, self.capacity)

    def sample(self, batch: int, rng: np.random.Generator) -> dict[str, torch.Tensor]:
        idx = rng.integers(0, self.size, size=batch)
        return {k: torch.from_numpy(getattr(self, k)[idx]) for k in self._FIELDS}


def td3_losses(
    nets: Td3Nets, batch: dict[str, torch.Tensor], cfg: Td3Config,
    noise: torch.Tensor | None = None,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Critic and actor losses on one sampled batch.

    The critic target bootstraps with the clipped-noise smoothed target
    action and the minimum of the target twins; terminal transitions reduce
    to y = r. Exposed separately from the update step for gradient checks.
    """
    goal = None if cfg.no_critic_goal else batch["goal"]
    actor_goal = batch["goal"] if cfg.oracle else None
    with torch.no_grad():
        a2, _ = nets.actor_target(
            batch["next_obs"], batch["obs"], batch["act"], batch["h_out"], batch["c_out"],
            goal=actor_goal,
        )
        if noise is None:
            noise = torch.zeros_like(a2)
        a2 = torch.clamp(a2 + noise, -V_CAP, V_CAP)
        q1t, q2t = nets.critic_target(batch["next_obs"], goal, batch["obs"], batch["act"], a2)
        q_min = torch.minimum(q1t, q2t).squeeze(1)
        y = batch["rew"] + cfg.gamma * (1.0 - batch["done"]) * q_min

    q1, q2 = nets.critic(batch["obs"], goal, batch["prev_obs"], batch["prev_act"], batch["act"])
    critic_loss = F.mse_loss(q1.squeeze(1), y) + F.mse_loss(q2.squeeze(1), y)

    a_pred, _ = nets.actor(
        batch["obs"], batch["prev_obs"], batch["prev_act"], batch["h_in"], batch["c_in"],
        goal=actor_goal,
    )
    actor_loss = -nets.critic.q1(
        batch["obs"], goal, batch["prev_obs"], batch["prev_act"], a_pred
    ).mean()
    return critic_loss, actor_loss


class Td3Updater:
    def __init__(self, nets: Td3Nets, cfg: Td3Config, seed: int):
        self.nets = nets
        self.cfg = cfg
        self.critic_opt = torch.optim.Adam(nets.critic.parameters(), lr=cfg.critic_lr, foreach=True)
        self.actor_opt = torch.optim.Adam(nets.actor.parameters(), lr=cfg.actor_lr, foreach=True)
        self.torch_gen = torch.Generator().manual_seed(int_seed(seed, "target-noise"))
        self.sample_rng = rng_from(seed, "replay-sampling")
        self.steps = 0
        self.last_critic_loss = 0.0
        self.last_actor_loss = 0.0

    def update(self, buffer: ReplayBuffer) -> None:
        cfg = self.cfg
        batch = buffer.sample(cfg.batch_size, self.sample_rng)
        noise = torch.clamp(
            torch.randn(batch["act"].shape, generator=self.torch_gen) * cfg.target_noise_std,
            -cfg.target_noise_clip, cfg.target_noise_clip,
        )

        goal = None if cfg.no_critic_goal else batch["goal"]
        actor_goal = batch["goal"] if cfg.oracle else None
        with torch.no_grad():
            a2, _ = self.nets.actor_target(
                batch["next_obs"], batch["obs"], batch["act"], batch["h_out"], batch["c_out"],
                goal=actor_goal,
            )
            a2 = torch.clamp(a2 + noise, -V_CAP, V_CAP)
            q1t, q2t = self.nets.critic_target(
                batch["next_obs"], goal, batch["obs"], batch["act"], a2
            )
            y = batch["rew"] + cfg.gamma * (1.0 - batch["done"]) * torch.minimum(q1t, q2t).squeeze(1)

        q1, q2 = self.nets.critic(
            batch["obs"], goal, batch["prev_obs"], batch["prev_act"], batch["act"]
        )
        critic_loss = F.mse_loss(q1.squeeze(1), y) + F.mse_loss(q2.squeeze(1), y)
        if not torch.isfinite(critic_loss):
            raise FloatingPointError("non-finite critic loss")
        self.critic_opt.zero_grad()
        critic_loss.backward()
        if cfg.grad_clip > 0:
            nn.utils.clip_grad_norm_(self.nets.critic.parameters(), cfg.grad_clip)
        self.critic_opt.step()
        self.last_critic_loss = float(critic_loss.item())

        self.steps += 1
        if self.steps % cfg.policy_delay == 0:
            a_pred, _ = self.nets.actor(
                batch["obs"], batch["prev_obs"], batch["prev_act"], batch["h_in"], batch["c_in"],
                goal=actor_goal,
            )
            actor_loss = -self.nets.critic.q1(
                batch["obs"], goal, batch["prev_obs"], batch["prev_act"], a_pred
            ).mean()
            if not torch.isfinite(actor_loss):
                raise FloatingPointError("non-finite actor loss")
            self.actor_opt.zero_grad()
            actor_loss.backward()
            if cfg.grad_clip > 0:
                nn.utils.clip_grad_norm_(self.nets.actor.parameters(), cfg.grad_clip)
            self.actor_opt.step()
            self.last_actor_loss = float(actor_loss.item())
            polyak_update(self.nets.actor, self.nets.actor_target, cfg.tau)
            polyak_update(self.nets.critic, self.nets.critic_target, cfg.tau)


# ---------------------------------------------------------------------------
# Exploration
# ---------------------------------------------------------------------------

def sample_training_world(r: np.random.Generator, wc: WorldConfig) -> World:
    if r.random() < wc.grid_prob:
        layout = Grid(
            rows=int(r.integers(wc.grid_rows_range[0], wc.grid_rows_range[1] + 1)),
            cols=int(r.integers(wc.grid_cols_range[0], wc.grid_cols_range[1] + 1)),
            spacing_range=wc.grid_spacing_range,
            half_extent=wc.platform_half_extent,
            height=wc.platform_height,
        )
    else:
        layout = RandomScatter(
            n_platforms=int(r.integers(wc.scatter_n_range[0], wc.scatter_n_range[1] + 1)),
            min_sep=wc.scatter_min_sep,
            half_extent_range=(wc.platform_half_extent, wc.platform_half_extent),
            height_range=(wc.platform_height, wc.platform_height),
        )
    return generate_world(int(r.integers(2**62)), layout, bounds=wc.bounds)


class _EnvSlot:
    """One exploration episode: world, pilot, engine, recurrent state."""

    def __init__(self, idx: int, env_seed: int, wc, dyn, uc, latent_dim: int, lstm_size: int):
        self.idx = idx
        self.world = sample_training_world(rng_from(env_seed, "world"), wc)
        goal_xy = np.array(self.world.goal.center)
        self.goal_top = np.array(self.world.goal.top_center, dtype=np.float32)
        self.params, self.ustate = sample_user(int_seed(env_seed, "user"), goal_xy, uc)
        r = rng_from(env_seed, "start")
        non_goal = [p for p in self.world.platforms if p.id != self.world.goal_id]
        start_p = non_goal[int(r.integers(len(non_goal)))] if non_goal else self.world.goal
        start = np.array(
            [
                start_p.center[0] + r.uniform(-0.1, 0.1),
                start_p.center[1] + r.uniform(-0.1, 0.1),
                self.ustate.cruise_alt,
            ]
        )
        self.engine = EpisodeEngine(self.world, dyn, start, noise_rng=rng_from(env_seed, "genoise"))
        self.goal_xy = goal_xy
        self.h = np.zeros(lstm_size, dtype=np.float32)
        self.c = np.zeros(lstm_size, dtype=np.float32)
        self.prev_obs: np.ndarray | None = None
        self.prev_act = np.zeros(3, dtype=np.float32)
        self.a_a_prev = np.zeros(3)
        self.pending: dict | None = None
        self.transitions: list[dict] = []
        self.reward_sum = 0.0


def explore_epoch(
    nets: Td3Nets,
    encoder: VaeEncoder,
    cfg: Td3Config,
    wc: WorldConfig,
    dyn: DynamicsParams,
    uc: UserConstants,
    rp: RewardParams,
    epoch_index: int,
    seed: int,
    n_envs: int | None = None,
) -> tuple[list[dict], dict]:
    """Run one exploration epoch of lockstep episodes.

    Per tick and per live episode: pilot action, batched latent encoding and
    actor inference, OU exploration noise (decayed by epoch), action
    averaging, then a dynamics step with ground-effect noise. Returns the
    collected transitions and epoch statistics.
    """
    n_envs = cfg.n_envs if n_envs is None else n_envs
    sigma = cfg.ou_sigma * cfg.ou_decay**epoch_index
    ou = OUNoise(n_envs, cfg.ou_theta, sigma, dyn.dt, rng_from(seed, "ou", epoch_index))
    # two environments run (nearly) on-policy so the replay always carries
    # rollouts of the current deterministic behavior
    noise_scale = np.ones((n_envs, 1))
    if n_envs >= 3:
        noise_scale[0] = 0.0
        noise_scale[1] = 0.25
    slots = [
        _EnvSlot(i, int_seed(seed, "epoch", epoch_index, i), wc, dyn, uc,
                 encoder.latent_dim, cfg.lstm_size)
        for i in range(n_envs)
    ]
    actor = nets.actor
    actor.eval()

    while True:
        active = [s for s in slots if not s.engine.done]
        if not active:
            break
        ou_noise = ou.step() * noise_scale

        mus = encoder.encode_poses(
            [s.world for s in active], [s.engine.state.pos for s in active]
        )
        a_us = []
        obs_list = []
        for s, mu in zip(active, mus):
            a_u = user_action(s.ustate, s.params, s.engine.state, s.a_a_prev, s.goal_xy, uc)
            a_us.append(a_u)
            obs_list.append(assemble_obs(s.engine.state, a_u, mu))

        obs_t = torch.from_numpy(np.stack(obs_list))
        prev_obs_t = torch.from_numpy(
            np.stack([s.prev_obs if s.prev_obs is not None else o
                      for s, o in zip(active, obs_list)])
        )
        prev_act_t = torch.from_numpy(np.stack([s.prev_act for s in active]))
        h_t = torch.from_numpy(np.stack([s.h for s in active]))
        c_t = torch.from_numpy(np.stack([s.c for s in active]))
        goal_t = (
            torch.from_numpy(np.stack([s.goal_top for s in active])) if cfg.oracle else None
        )
        with torch.no_grad():
            a_a_t, (h2_t, c2_t) = actor(obs_t, prev_obs_t, prev_act_t, h_t, c_t, goal=goal_t)
        a_a_np = a_a_t.numpy()
        h2_np, c2_np = h2_t.numpy(), c2_t.numpy()

        for j, s in enumerate(active):
            a_a = np.clip(a_a_np[j].astype(float) + ou_noise[s.idx], -V_CAP, V_CAP)
            a_u = a_us[j]
            prev_state = s.engine.state
            new_state, _ = s.engine.tick(blend(a_u, a_a))
            touchdown = terminal_contact(new_state, s.engine.result)
            r, terms = reward(prev_state, a_a, a_u, new_state, s.world, touchdown, rp)
            s.reward_sum += r

            obs = obs_list[j]
            if s.pending is not None:
                s.pending["next_obs"] = obs
                s.pending["h_out"] = s.h
                s.pending["c_out"] = s.c
                s.transitions.append(s.pending)
            prev_obs = s.prev_obs if s.prev_obs is not None else obs
            s.pending = {
                "obs": obs,
                "prev_obs": prev_obs,
                "prev_act": s.prev_act.copy(),
                "h_in": s.h,
                "c_in": s.c,
                "act": a_a.astype(np.float32),
                "rew": np.float32(r),
                "done": np.float32(new_state.phase.terminal),
                "goal": s.goal_top,
            }
            s.prev_obs = obs
            s.prev_act = a_a.astype(np.float32)
            s.h, s.c = h2_np[j], c2_np[j]
            s.a_a_prev = a_a
            if new_state.phase.terminal:
                # terminal bootstrap is masked by done; hold the last pilot
                # action and latent for a well-formed next observation
                term_obs = assemble_obs(new_state, a_u, mus[j])
                s.pending["next_obs"] = term_obs
                s.pending["h_out"] = s.h
                s.pending["c_out"] = s.c
                s.transitions.append(s.pending)
                s.pending = None

    transitions = [t for s in slots for t in s.transitions]
    phases = [s.engine.state.phase.value for s in slots]
    stats = {
        "episodes": n_envs,
        "successes": sum(bool(s.engine.result and s.engine.result.success) for s in slots),
        "phases": {p: phases.count(p) for p in sorted(set(phases))},
        "mean_reward": float(np.mean([s.reward_sum for s in slots])),
        "mean_landing_error": float(
            np.mean(
                [
                    math.hypot(
                        s.engine.result.landing_pos[0] - s.goal_xy[0],
                        s.engine.result.landing_pos[1] - s.goal_xy[1],
                    )
                    for s in slots
                    if s.engine.result is not None
                ]
            )
        ),
        "sigma": sigma,
        "transitions": len(transitions),
    }
    return transitions, stats


def transitions_to_arrays(transitions: list[dict]) -> dict[str, np.ndarray]:
    out = {}
    for k in ReplayBuffer._FIELDS:
        out[k] = np.stack([t[k] for t in transitions]).astype(np.float32)
    return out


# ---------------------------------------------------------------------------
# Checkpoints and the runtime assistant
# ---------------------------------------------------------------------------

def save_policy_checkpoint(
    nets: Td3Nets, base: str | Path, cfg: Td3Config, latent_dim: int, meta: dict
) -> Path:
    arrays = {}
    for prefix, module in (
        ("actor", nets.actor),
        ("critic", nets.critic),
        ("actor_target", nets.actor_target),
        ("critic_target", nets.critic_target),
    ):
        for k, v in module.state_dict().items():
            arrays[f"{prefix}.{k}"] = v.detach().cpu().numpy()
    manifest = {
        "kind": "policy-checkpoint",
        "latent_dim": latent_dim,
        "hidden": cfg.hidden,
        "lstm_size": cfg.lstm_size,
        "flags": {
            "no_lstm": cfg.no_lstm,
            "no_critic_goal": cfg.no_critic_goal,
            "oracle": cfg.oracle,
        },
    }
    manifest.update(meta)
    return save_bundle(base, arrays, manifest)


def load_policy_checkpoint(base: str | Path) -> tuple[Td3Nets, dict]:
    arrays, manifest = load_bundle(base)
    if manifest.get("kind") != "policy-checkpoint":
        raise ValueError(f"{base}: not a policy checkpoint")
    flags = manifest["flags"]
    cfg = Td3Config(
        hidden=manifest["hidden"],
        lstm_size=manifest["lstm_size"],
        no_lstm=flags["no_lstm"],
        no_critic_goal=flags["no_critic_goal"],
        oracle=flags["oracle"],
    )
    nets = Td3Nets.create(manifest["latent_dim"], cfg, seed=0)
    for prefix, module in (
        ("actor", nets.actor),
        ("critic", nets.critic),
        ("actor_target", nets.actor_target),
        ("critic_target", nets.critic_target),
    ):
        state = {
            k[len(prefix) + 1 :]: torch.from_numpy(v.copy())
            for k, v in arrays.items()
            if k.startswith(prefix + ".")
        }
        module.load_state_dict(state)
    nets.actor.eval()
    return nets, manifest


class TD3Assistant:
    """Deployment wrapper: renders, encodes and runs the actor each tick."""

    name = "td3"

    def __init__(self, actor: TwoBranchActor, encoder: VaeEncoder, oracle: bool = False):
        self.actor = actor.eval()
        self.encoder = encoder
        self.oracle = oracle
        self.reset()

    @classmethod
    def from_checkpoint(cls, base: str | Path, encoder: VaeEncoder) -> "TD3Assistant":
        nets, manifest = load_policy_checkpoint(base)
        if manifest["latent_dim"] != encoder.latent_dim:
            raise ValueError(
                f"checkpoint latent dim {manifest['latent_dim']} != encoder {encoder.latent_dim}"
            )
        return cls(nets.actor, encoder, oracle=manifest["flags"]["oracle"])

    def reset(self) -> None:
        h, c = self.actor.initial_state(1)
        self._h, self._c = h, c
        self._prev_obs: np.ndarray | None = None
        self._prev_act = np.zeros(3, dtype=np.float32)

    def act(self, world: World, uav: UavState, a_u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        mu = self.encoder.encode_pose(world, uav.pos)
        obs = assemble_obs(uav, a_u, mu)
        prev_obs = self._prev_obs if self._prev_obs is not None else obs
        goal = (
            torch.from_numpy(np.array([world.goal.top_center], dtype=np.float32))
            if self.oracle
            else None
        )
        with torch.no_grad():
            a, (h2, c2) = self.actor(
                torch.from_numpy(obs[None]),
                torch.from_numpy(prev_obs[None]),
                torch.from_numpy(self._prev_act[None]),
                self._h,
                self._c,
                goal=goal,
            )
        a_a = a[0].numpy().astype(float)
        self._prev_obs = obs
        self._prev_act = a_a.astype(np.float32)
        self._h, self._c = h2, c2
        return a_a, mu


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

def ablated_reward_params(rp: RewardParams, cfg: Td3Config) -> RewardParams:
    kw = {}
    if cfg.drop_landing_error:
        kw["k_landing_error"] = 0.0
    if cfg.drop_safe_pos:
        kw["k_safe_pos"] = 0.0
    if cfg.drop_h_vel_v_vel:
        kw["k_h_vel"] = 0.0
        kw["k_v_vel"] = 0.0
    return RewardParams(**{**rp.__dict__, **kw}) if kw else rp


def train_policy(
    run_cfg: RunConfig,
    encoder: VaeEncoder,
    out_dir: str | Path,
    seed: int,
    iterations: int | None = None,
    eval_callback=None,
    progress: bool = False,
) -> tuple[Td3Nets, list[dict], Path]:
    """Alternate exploration epochs with an equal number of optimization
    iterations until the iteration budget is reached.

    ``eval_callback(iteration, nets)`` runs at every eval-interval crossing
    and at the end; its dict lands in the epoch log. Single-threaded and
    bit-reproducible for a fixed seed.
    """
    cfg = run_cfg.td3
    iterations = cfg.iterations if iterations is None else iterations
    torch.set_num_threads(1)
    nets = Td3Nets.create(encoder.latent_dim, cfg, seed)
    updater = Td3Updater(nets, cfg, seed)
    buffer = ReplayBuffer(cfg.buffer_size, encoder.latent_dim, cfg.lstm_size)
    rp = ablated_reward_params(run_cfg.reward, cfg)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "training_log.jsonl"
    log_rows: list[dict] = []
    iteration = 0
    epoch = 0
    next_eval = cfg.eval_interval if cfg.eval_interval else None

    with open(log_path, "w") as log_f:
        while iteration < iterations:
            transitions, stats = explore_epoch(
                nets, encoder, cfg, run_cfg.world, run_cfg.dynamics, run_cfg.user, rp,
                epoch, seed,
            )
            buffer.add_batch(**transitions_to_arrays(transitions))
            n_updates = 0
            if buffer.size >= cfg.warmup:
                n_updates = min(len(transitions), iterations - iteration)
                for _ in range(n_updates):
                    updater.update(buffer)
                iteration += n_updates

            row = {
                "epoch": epoch,
                "iteration": iteration,
                "critic_loss": updater.last_critic_loss,
                "actor_loss": updater.last_actor_loss,
                **stats,
            }
            if next_eval is not None and (iteration >= next_eval or iteration >= iterations):
                while next_eval <= iteration:
                    next_eval += cfg.eval_interval
                save_policy_checkpoint(
                    nets, out_dir / f"policy_{iteration:08d}", cfg, encoder.latent_dim,
                    {"iteration": iteration, "seed": seed},
                )
                if eval_callback is not None:
                    row["eval"] = eval_callback(iteration, nets)
            log_rows.append(row)
            log_f.write(json.dumps(row) + "\n")
            log_f.flush()
            if progress:
                msg = (
                    f"[td3] epoch {epoch} it {iteration}/{iterations} "
                    f"expl_success {stats['successes']}/{stats['episodes']} "
                    f"{stats['phases']} r {stats['mean_reward']:.1f} sigma {stats['sigma']:.3f}"
                )
                if "eval" in row:
                    msg += f" eval {row['eval']}"
                print(msg, flush=True)
            epoch += 1

    final = save_policy_checkpoint(
        nets, out_dir / "policy_final", cfg, encoder.latent_dim,
        {"iteration": iteration, "seed": seed},
    )
    return nets, log_rows, final
