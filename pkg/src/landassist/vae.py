"""Cross-modal variational encoder over the dual depth cameras.

Two noisy depth images pass through one shared (Siamese) convolutional trunk;
the concatenated features parameterize a latent Gaussian. Two decoders
reconstruct the combined wide-view depth map and the safe-landing
segmentation. Dataset files store clean renders; corruption is applied
dynamically per training batch so every epoch sees fresh noise.
"""

from __future__ import annotations

import math
import queue
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .camera import CameraRig, NoiseParams, apply_noise, render, render_per_camera
from .config import VaeConfig, WorldConfig
from .seeds import int_seed, rng_from
from .tensorio import load_bundle, save_bundle
from .worldsim import Grid, RandomScatter, World, generate_world

MSE_WEIGHT = 1.0
BCE_WEIGHT = 0.5
KL_WEIGHT = 4.0


def kl_gaussian(mu: np.ndarray, log_var: np.ndarray) -> float:
    """KL(N(mu, exp(log_var)) || N(0, I)): summed over dimensions, averaged
    over examples. Plain float64 reference shared with the torch loss."""
    mu = np.asarray(mu, dtype=np.float64).reshape(-1, np.shape(mu)[-1])
    lv = np.asarray(log_var, dtype=np.float64).reshape(mu.shape)
    per_example = 0.5 * np.sum(np.exp(lv) + mu**2 - 1.0 - lv, axis=1)
    return float(per_example.mean())


class DepthVae(nn.Module):
    """Encoder/decoder pair; all layers sized from the rig resolution."""

    def __init__(self, rig: CameraRig, latent_dim: int = 32, depth_cap: float = 3.0):
        super().__init__()
        self.rig = rig
        self.latent_dim = latent_dim
        self.depth_cap = depth_cap
        self.conv1 = nn.Conv2d(2, 8, 3, stride=2, padding=1)
        self.conv2 = nn.Conv2d(8, 16, 3, stride=2, padding=1)
        self.conv3 = nn.Conv2d(16, 32, 3, stride=2, padding=1)
        ch, cw = rig.image_h, rig.image_w
        for _ in range(3):
            ch, cw = (ch + 1) // 2, (cw + 1) // 2
        self._conv_out = 32 * ch * cw
        self.trunk_fc = nn.Linear(self._conv_out, 64)
        self.enc_mu = nn.Linear(128, latent_dim)
        self.enc_log_var = nn.Linear(128, latent_dim)
        npix = rig.downsampled_h * rig.downsampled_w
        self.out_h, self.out_w = rig.downsampled_h, rig.downsampled_w
        self.depth_dec = nn.Sequential(
            nn.Linear(latent_dim, 128), nn.ReLU(), nn.Linear(128, 256), nn.ReLU(),
            nn.Linear(256, npix),
        )
        self.seg_dec = nn.Sequential(
            nn.Linear(latent_dim, 128), nn.ReLU(), nn.Linear(128, 256), nn.ReLU(),
            nn.Linear(256, npix),
        )
        # learned stand-in for missing-depth (sentinel 0) pixels
        self.sentinel_fill = nn.Parameter(torch.tensor(0.5))

    def trunk(self, img: torch.Tensor, valid: torch.Tensor) -> torch.Tensor:
        """Shared feature extractor. ``valid`` masks sentinel pixels, which
        are replaced by the learned fill before the convolutions."""
        filled = torch.where(valid, img / self.depth_cap, self.sentinel_fill.to(img.dtype))
        x = torch.stack([filled, valid.to(img.dtype)], dim=1)
        x = F.relu(self.conv1(x))
        x = F.relu(self.conv2(x))
        x = F.relu(self.conv3(x))
        return F.relu(self.trunk_fc(x.flatten(1)))

    def encode_masked(
        self,
        front: torch.Tensor,
        back: torch.Tensor,
        front_valid: torch.Tensor,
        back_valid: torch.Tensor,
    ) -> tuple[torch.Tensor, torch.Tensor]:
        # one trunk pass over both cameras (weight sharing is structural)
        b = front.shape[0]
        stacked = self.trunk(
            torch.cat([front, back], dim=0), torch.cat([front_valid, back_valid], dim=0)
        )
        feats = torch.cat([stacked[:b], stacked[b:]], dim=1)
        return self.enc_mu(feats), self.enc_log_var(feats)

    def encode(self, front: torch.Tensor, back: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if front.shape[-2:] != (self.rig.image_h, self.rig.image_w):
            raise ValueError(
                f"expected {self.rig.image_h}x{self.rig.image_w} images, got {tuple(front.shape[-2:])}"
            )
        return self.encode_masked(front, back, front > 0, back > 0)

    def decode_logits(self, z: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        b = z.shape[0]
        depth = F.softplus(self.depth_dec(z)).view(b, self.out_h, self.out_w) * self.depth_cap
        seg_logits = self.seg_dec(z).view(b, self.out_h, self.out_w)
        return depth, seg_logits

    def decode(self, z: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        depth, seg_logits = self.decode_logits(z)
        return depth, torch.sigmoid(seg_logits)

    def loss_components(
        self,
        front: torch.Tensor,
        back: torch.Tensor,
        target_depth: torch.Tensor,
        target_seg: torch.Tensor,
        eps: torch.Tensor | None = None,
        generator: torch.Generator | None = None,
    ) -> dict[str, torch.Tensor]:
        """One reparameterized latent sample per example.

        total = 1.0 * mse + 0.5 * bce + 4.0 * kl, exactly; raises on a
        non-finite total so training faults surface immediately.
        """
        mu, log_var = self.encode(front, back)
        if eps is None:
            eps = torch.randn(mu.shape, generator=generator, dtype=mu.dtype, device=mu.device)
        z = mu + torch.exp(0.5 * log_var) * eps
        depth, seg_logits = self.decode_logits(z)
        # every term follows the same reduction: summed within an example,
        # averaged over the batch (pixel-mean reconstruction would let the
        # KL weight collapse the posterior)
        mse = ((depth - target_depth) ** 2).flatten(1).sum(dim=1).mean()
        bce = (
            F.binary_cross_entropy_with_logits(seg_logits, target_seg, reduction="none")
            .flatten(1).sum(dim=1).mean()
        )
        kl = (0.5 * (torch.exp(log_var) + mu**2 - 1.0 - log_var).sum(dim=1)).mean()
        total = MSE_WEIGHT * mse + BCE_WEIGHT * bce + KL_WEIGHT * kl
        if not torch.isfinite(total):
            raise FloatingPointError(
                f"non-finite VAE loss: mse={mse.item()} bce={bce.item()} kl={kl.item()}"
            )
        return {"total": total, "mse": mse, "bce": bce, "kl": kl}


# ---------------------------------------------------------------------------
# Dataset generation
# ---------------------------------------------------------------------------

def _dataset_world(scene_seed: int, limited: bool, wc: WorldConfig) -> World:
    r = rng_from(scene_seed, "layout")
    if limited:
        layout = Grid(
            rows=int(r.integers(2, 4)), cols=int(r.integers(2, 4)),
            spacing_range=(1.3, 1.5), half_extent=0.25, height=0.12,
        )
    elif r.random() < 0.5:
        layout = RandomScatter(
            n_platforms=int(r.integers(1, 8)), min_sep=1.0,
            half_extent_range=(0.15, 0.33), height_range=(0.06, 0.25),
        )
    else:
        layout = Grid(
            rows=int(r.integers(2, 4)), cols=int(r.integers(2, 4)),
            spacing_range=(1.0, 1.7),
            half_extent=float(r.uniform(0.15, 0.33)),
            height=float(r.uniform(0.06, 0.25)),
        )
    return generate_world(int_seed(scene_seed, "world"), layout, bounds=wc.bounds)


def make_dataset(
    out_base: str | Path,
    rig: CameraRig,
    cfg: VaeConfig,
    wc: WorldConfig,
    leg_half_span: float,
    seed: int,
    n_scenes: int | None = None,
    meta: dict | None = None,
) -> Path:
    """Render clean (front, back, combined target) tuples along randomized
    sweep trajectories; byte-identical for a given seed."""
    n_scenes = cfg.n_scenes if n_scenes is None else n_scenes
    views = cfg.views_per_scene
    n = n_scenes * views
    h, w = rig.image_h, rig.image_w
    fronts = np.empty((n, h, w), dtype=np.float32)
    backs = np.empty((n, h, w), dtype=np.float32)
    depths = np.empty((n, rig.downsampled_h, rig.downsampled_w), dtype=np.float32)
    segs = np.empty((n, rig.downsampled_h, rig.downsampled_w), dtype=np.float32)
    scene_seeds = np.empty(n, dtype=np.int64)
    poses = np.empty((n, 3), dtype=np.float32)

    k = 0
    for i in range(n_scenes):
        scene_seed = int_seed(seed, "scene", i)
        world = _dataset_world(scene_seed, cfg.limited_randomization, wc)
        r = rng_from(scene_seed, "sweep")
        span = world.bounds - 0.6
        start = r.uniform(-span, span, size=2)
        end = r.uniform(-span, span, size=2)
        for v in range(views):
            frac = v / max(views - 1, 1)
            xy = start + frac * (end - start) + r.normal(0.0, 0.05, size=2)
            alt = r.uniform(*cfg.altitude_range)
            pos = np.array([xy[0], xy[1], alt])
            front, back = render_per_camera(rig, pos, world)
            img = render(rig, pos, world, leg_half_span)
            fronts[k] = front
            backs[k] = back
            depths[k] = img.depth
            segs[k] = img.seg
            scene_seeds[k] = scene_seed
            poses[k] = pos
            k += 1

    manifest = {
        "kind": "vae-dataset",
        "seed": seed,
        "n_scenes": n_scenes,
        "views_per_scene": views,
        "limited_randomization": cfg.limited_randomization,
        "rig": rig.to_dict(),
        "leg_half_span": leg_half_span,
    }
    if meta:
        manifest.update(meta)
    return save_bundle(
        out_base,
        {
            "front": fronts,
            "back": backs,
            "target_depth": depths,
            "target_seg": segs,
            "scene_seed": scene_seeds,
            "pose": poses,
        },
        manifest,
    )


def load_dataset(base: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    return load_bundle(base)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def _make_batch(
    data: dict[str, np.ndarray],
    batch_index: int,
    batch_size: int,
    seed: int,
    noise: NoiseParams | None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Batch ``batch_index`` is a pure function of (data, seed, index), so
    producers may run on any number of threads without changing the stream."""
    r = rng_from(seed, "batch", batch_index)
    idx = r.integers(0, data["front"].shape[0], size=batch_size)
    front = data["front"][idx].astype(np.float32)
    back = data["back"][idx].astype(np.float32)
    if noise is not None:
        for b in range(batch_size):
            front[b] = apply_noise(front[b], r, noise)
            back[b] = apply_noise(back[b], r, noise)
    return front, back, data["target_depth"][idx], data["target_seg"][idx]


class BatchProducer:
    """Dynamic per-batch noising on worker threads feeding a bounded queue.

    Batch order and contents are independent of the worker count.
    """

    def __init__(self, data, batch_size, seed, noise, n_batches, num_workers=1):
        self.data = data
        self.batch_size = batch_size
        self.seed = seed
        self.noise = noise
        self.n_batches = n_batches
        self.num_workers = max(0, num_workers)
        self._queues: list[queue.Queue] = []
        self._threads: list[threading.Thread] = []

    def _worker(self, w: int):
        q = self._queues[w]
        for k in range(w, self.n_batches, self.num_workers):
            q.put(_make_batch(self.data, k, self.batch_size, self.seed, self.noise))
        q.put(None)

    def __iter__(self):
        if self.num_workers == 0:
            for k in range(self.n_batches):
                yield _make_batch(self.data, k, self.batch_size, self.seed, self.noise)
            return
        self._queues = [queue.Queue(maxsize=4) for _ in range(self.num_workers)]
        self._threads = [
            threading.Thread(target=self._worker, args=(w,), daemon=True)
            for w in range(self.num_workers)
        ]
        for t in self._threads:
            t.start()
        for k in range(self.n_batches):
            batch = self._queues[k % self.num_workers].get()
            assert batch is not None
            yield batch


def save_vae_checkpoint(model: DepthVae, base: str | Path, meta: dict) -> Path:
    arrays = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    manifest = {
        "kind": "vae-checkpoint",
        "latent_dim": model.latent_dim,
        "depth_cap": model.depth_cap,
        "rig": model.rig.to_dict(),
        "loss_weights": {"mse": MSE_WEIGHT, "bce": BCE_WEIGHT, "kl": KL_WEIGHT},
    }
    manifest.update(meta)
    return save_bundle(base, arrays, manifest)


def load_vae_checkpoint(base: str | Path) -> tuple[DepthVae, dict]:
    arrays, manifest = load_bundle(base)
    if manifest.get("kind") != "vae-checkpoint":
        raise ValueError(f"{base}: not a VAE checkpoint")
    rig = CameraRig.from_dict(manifest["rig"])
    model = DepthVae(rig, latent_dim=manifest["latent_dim"], depth_cap=manifest["depth_cap"])
    state = {k: torch.from_numpy(v.copy()) for k, v in arrays.items()}
    model.load_state_dict(state)
    model.eval()
    return model, manifest


def train_vae(
    dataset_base: str | Path,
    cfg: VaeConfig,
    noise: NoiseParams,
    out_dir: str | Path,
    seed: int,
    meta: dict | None = None,
    iterations: int | None = None,
    progress: bool = False,
) -> tuple[DepthVae, list[dict], Path]:
    """Adam training with dynamically noised batches.

    Returns (model, log rows, final checkpoint path). Divergence (total loss
    above the configured threshold) aborts, keeping the last good checkpoint.
    """
    data, ds_manifest = load_dataset(dataset_base)
    rig = CameraRig.from_dict(ds_manifest["rig"])
    iterations = cfg.iterations if iterations is None else iterations

    torch.manual_seed(int_seed(seed, "vae-init"))
    model = DepthVae(rig, latent_dim=cfg.latent_dim, depth_cap=cfg.depth_cap)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate, foreach=True)
    gen = torch.Generator().manual_seed(int_seed(seed, "vae-eps"))

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    batch_noise = noise if cfg.noise_enabled else None
    producer = BatchProducer(
        data, cfg.batch_size, int_seed(seed, "vae-batches"), batch_noise,
        n_batches=iterations, num_workers=cfg.num_workers,
    )

    log_rows: list[dict] = []
    last_good: Path | None = None
    base_meta = dict(meta or {})
    base_meta["seed"] = seed
    base_meta["noise"] = noise.to_dict()
    base_meta["noise_enabled"] = cfg.noise_enabled

    for k, (front, back, td, ts) in enumerate(producer):
        batch = [torch.from_numpy(np.ascontiguousarray(a)) for a in (front, back, td, ts)]
        losses = model.loss_components(*batch, generator=gen)
        opt.zero_grad()
        losses["total"].backward()
        opt.step()

        total = float(losses["total"].item())
        if total > cfg.divergence_threshold:
            raise FloatingPointError(
                f"VAE diverged at iteration {k} (loss {total:.3g}); "
                f"last good checkpoint: {last_good}"
            )
        if k % cfg.log_interval == 0 or k == iterations - 1:
            log_rows.append(
                {
                    "iteration": k,
                    "total": total,
                    "mse": float(losses["mse"].item()),
                    "bce": float(losses["bce"].item()),
                    "kl": float(losses["kl"].item()),
                }
            )
            if progress:
                print(f"[vae] it {k}: total={total:.4f} mse={log_rows[-1]['mse']:.4f}", flush=True)
        if cfg.checkpoint_interval and (k + 1) % cfg.checkpoint_interval == 0:
            last_good = save_vae_checkpoint(
                model, out_dir / f"vae_{k + 1:07d}", {**base_meta, "iteration": k + 1}
            )

    final = save_vae_checkpoint(
        model, out_dir / "vae_final", {**base_meta, "iteration": iterations}
    )
    return model, log_rows, final


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def eval_reconstruction(
    model_or_predict,
    data: dict[str, np.ndarray],
    noise: NoiseParams | None,
    seed: int = 0,
    max_n: int | None = None,
) -> dict[str, float]:
    """Depth MAE and segmentation accuracy on (optionally noised) inputs.

    Also reports the raw noisy-input MAE baseline against the clean renders,
    counting missing (sentinel) pixels at their full depth error. Accepts a
    DepthVae or any callable (front, back) -> (depth, seg) for oracle
    injection.
    """
    n = data["front"].shape[0] if max_n is None else min(max_n, data["front"].shape[0])
    r = rng_from(seed, "eval-noise")
    front = data["front"][:n].astype(np.float32)
    back = data["back"][:n].astype(np.float32)
    clean_front, clean_back = front.copy(), back.copy()
    if noise is not None:
        for b in range(n):
            front[b] = apply_noise(front[b], r, noise)
            back[b] = apply_noise(back[b], r, noise)

    if isinstance(model_or_predict, DepthVae):
        model = model_or_predict
        with torch.no_grad():
            mu, _ = model.encode(torch.from_numpy(front), torch.from_numpy(back))
            depth, seg = model.decode(mu)
        depth = depth.numpy()
        seg = seg.numpy()
    else:
        depth, seg = model_or_predict(front, back)

    tgt_d = data["target_depth"][:n]
    tgt_s = data["target_seg"][:n]
    mae = float(np.abs(depth - tgt_d).mean())
    seg_acc = float(((seg > 0.5) == (tgt_s > 0.5)).mean())
    input_mae = float(
        (np.abs(front - clean_front).mean() + np.abs(back - clean_back).mean()) / 2.0
    )
    return {"depth_mae": mae, "seg_accuracy": seg_acc, "input_mae_baseline": input_mae, "n": n}


class VaeEncoder:
    """Frozen encoder used by the policy: pose -> mean latent vector."""

    def __init__(self, model: DepthVae, checkpoint_meta: dict | None = None):
        self.model = model.eval()
        self.rig = model.rig
        self.latent_dim = model.latent_dim
        self.meta = checkpoint_meta or {}

    @classmethod
    def from_checkpoint(cls, base: str | Path) -> "VaeEncoder":
        model, manifest = load_vae_checkpoint(base)
        return cls(model, manifest)

    def encode_poses(self, worlds, poses) -> np.ndarray:
        """Render and encode a batch of (world, pos) pairs; returns (B, L)
        float32 mu."""
        fronts = np.empty((len(poses), self.rig.image_h, self.rig.image_w), dtype=np.float32)
        backs = np.empty_like(fronts)
        for i, (world, pos) in enumerate(zip(worlds, poses)):
            f, b = render_per_camera(self.rig, np.asarray(pos, float), world)
            fronts[i] = f
            backs[i] = b
        with torch.no_grad():
            mu, _ = self.model.encode(torch.from_numpy(fronts), torch.from_numpy(backs))
        return mu.numpy().astype(np.float32)

    def encode_pose(self, world, pos) -> np.ndarray:
        return self.encode_poses([world], [pos])[0]
