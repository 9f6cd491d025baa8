"""Run configuration: one explicit tree of constants whose hash identifies
every training or evaluation artifact. Files are TOML; unknown keys are
rejected with their table path so typos fail loudly."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import toml

from .camera import CameraRig, NoiseParams
from .rewards import RewardParams
from .simuser import UserConstants
from .worldsim import DynamicsParams


class ConfigError(ValueError):
    pass


def _coerce(cls, d: dict, path: str):
    """Build a flat dataclass from a TOML table, tuple-izing list fields and
    floating int-valued floats; unknown keys raise with their path."""
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(d) - set(names)
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in [{path}]")
    kwargs = {}
    for name, f in names.items():
        if name not in d:
            continue
        v = d[name]
        default = f.default
        if isinstance(default, tuple) and isinstance(v, list):
            v = tuple(v)
        elif isinstance(default, float) and isinstance(v, int) and not isinstance(v, bool):
            v = float(v)
        kwargs[name] = v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid [{path}]: {e}") from e


@dataclass(frozen=True)
class WorldConfig:
    """Training-world sampler and shared geometry."""

    bounds: float = 3.4
    platform_half_extent: float = 0.25
    platform_height: float = 0.12
    grid_prob: float = 0.5
    scatter_n_range: tuple[int, int] = (2, 6)
    scatter_min_sep: float = 1.1
    grid_rows_range: tuple[int, int] = (2, 3)
    grid_cols_range: tuple[int, int] = (2, 3)
    grid_spacing_range: tuple[float, float] = (1.2, 1.6)


@dataclass(frozen=True)
class VaeConfig:
    latent_dim: int = 32
    depth_cap: float = 3.0
    learning_rate: float = 1e-3
    batch_size: int = 32
    iterations: int = 50000
    checkpoint_interval: int = 10000
    log_interval: int = 250
    n_scenes: int = 400
    views_per_scene: int = 20
    altitude_range: tuple[float, float] = (0.3, 2.5)
    noise_enabled: bool = True
    limited_randomization: bool = False
    num_workers: int = 1
    divergence_threshold: float = 1e6


@dataclass(frozen=True)
class Td3Config:
    gamma: float = 0.99
    tau: float = 0.005
    policy_delay: int = 2
    target_noise_std: float = 0.24   # 0.2 scaled to the 1.2 m/s range
    target_noise_clip: float = 0.6   # 0.5 scaled
    ou_theta: float = 0.15
    ou_sigma: float = 0.36           # 0.3 scaled
    ou_decay: float = 0.995
    warmup: int = 5000
    buffer_size: int = 200000
    batch_size: int = 64
    n_envs: int = 16
    hidden: int = 128
    lstm_size: int = 64
    actor_lr: float = 3e-4
    critic_lr: float = 1e-3
    iterations: int = 300000
    eval_interval: int = 25000
    grad_clip: float = 0.0
    # ablation flags
    no_lstm: bool = False
    no_critic_goal: bool = False
    oracle: bool = False
    drop_landing_error: bool = False
    drop_safe_pos: bool = False
    drop_h_vel_v_vel: bool = False
    vae_checkpoint: str = ""


@dataclass(frozen=True)
class EvalConfig:
    beta_sweep: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    n_landings: int = 10
    sequence_seed: int = 7700
    repeats: int = 5
    profile_bin_edges: tuple[float, ...] = (0.0, 0.3, 0.8, 1.5, 2.5, 4.0)
    baseline_temperature: float = 0.5
    baseline_speed: float = 0.9
    direct_user_speed: float = 0.55
    direct_user_noise: float = 0.15


@dataclass(frozen=True)
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8765
    tick_scale: float = 1.0   # >1 accelerates wall-clock ticks for scripted pilots
    assist_default: bool = True
    frame_hz: float = 5.0


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    out_dir: str = "artifacts"
    world: WorldConfig = field(default_factory=WorldConfig)
    dynamics: DynamicsParams = field(default_factory=DynamicsParams)
    rig: CameraRig = field(default_factory=CameraRig)
    noise: NoiseParams = field(default_factory=NoiseParams)
    user: UserConstants = field(default_factory=UserConstants)
    reward: RewardParams = field(default_factory=RewardParams)
    vae: VaeConfig = field(default_factory=VaeConfig)
    td3: Td3Config = field(default_factory=Td3Config)
    eval: EvalConfig = field(default_factory=EvalConfig)
    server: ServerConfig = field(default_factory=ServerConfig)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        # asdict preserves tuples only at top level of lists; normalize for TOML
        return json.loads(json.dumps(d))

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        sections = {
            "world": WorldConfig,
            "dynamics": DynamicsParams,
            "rig": CameraRig,
            "noise": NoiseParams,
            "user": UserConstants,
            "reward": RewardParams,
            "vae": VaeConfig,
            "td3": Td3Config,
            "eval": EvalConfig,
            "server": ServerConfig,
        }
        known = set(sections) | {"seed", "out_dir"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown top-level key(s) {sorted(unknown)}")
        kwargs = {}
        if "seed" in d:
            kwargs["seed"] = int(d["seed"])
        if "out_dir" in d:
            kwargs["out_dir"] = str(d["out_dir"])
        for name, section_cls in sections.items():
            if name in d:
                kwargs[name] = _coerce(section_cls, d[name], name)
        return cls(**kwargs)


def config_hash(cfg: RunConfig) -> str:
    canonical = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def save_config(cfg: RunConfig, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        toml.dump(cfg.to_dict(), f)


def load_config(path: str | Path) -> RunConfig:
    try:
        with open(path) as f:
            data = toml.load(f)
    except toml.TomlDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e
    return RunConfig.from_dict(data)
