"""Combined dual-camera projection and ground-truth raycast rendering.

Two downward pinhole cameras (front and back of the body) are bridged by
``n_intermediate`` one-column pinholes whose optical centers interpolate
between the two camera centers. Stitching the back camera's rear half, the
bridge columns and the front camera's forward half yields a single wide
nadir image covering both frusta. Rendering intersects every combined ray
against the platform boxes and the ground plane exactly (slab method), and
labels each hit with the safe-landing mask of the world.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .worldsim import World, safe_landing_points


@dataclass(frozen=True)
class CameraRig:
    image_w: int = 36
    image_h: int = 20
    focal: float = 21.0           # pixels
    n_intermediate: int = 6
    front_offset: tuple[float, float, float] = (0.15, 0.0, 0.0)
    back_offset: tuple[float, float, float] = (-0.15, 0.0, 0.0)

    @property
    def half_cols(self) -> int:
        # columns each physical camera contributes to the combined image; for
        # odd widths the optical-center column is shared by both halves
        return -(-self.image_w // 2)

    @property
    def combined_w(self) -> int:
        return 2 * self.half_cols + self.n_intermediate

    @property
    def combined_h(self) -> int:
        return self.image_h

    @property
    def downsampled_w(self) -> int:
        return self.combined_w // 2

    @property
    def downsampled_h(self) -> int:
        return self.combined_h // 2

    def __post_init__(self):
        if self.image_w <= 0 or self.image_h <= 0 or self.focal <= 0:
            raise ValueError("rig dimensions must be positive")
        if self.combined_w % 2 or self.combined_h % 2:
            raise ValueError("combined image must have even dimensions for 2x downsampling")

    def to_dict(self) -> dict:
        return {
            "image_w": self.image_w,
            "image_h": self.image_h,
            "focal": self.focal,
            "n_intermediate": self.n_intermediate,
            "front_offset": list(self.front_offset),
            "back_offset": list(self.back_offset),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraRig":
        return cls(
            image_w=int(d["image_w"]),
            image_h=int(d["image_h"]),
            focal=float(d["focal"]),
            n_intermediate=int(d["n_intermediate"]),
            front_offset=tuple(d["front_offset"]),
            back_offset=tuple(d["back_offset"]),
        )


def full_scale_rig() -> CameraRig:
    """141x80 per camera with 18 bridge columns: combined 160x80 -> 80x40."""
    return CameraRig(image_w=141, image_h=80, focal=84.0, n_intermediate=18)


@dataclass
class CombinedImage:
    depth: np.ndarray  # (H, W) meters, downsampled
    seg: np.ndarray    # (H, W) safe-landing probability in [0, 1]


def _yaw_matrix(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def segment_of_column(rig: CameraRig, col: int) -> tuple[str, int]:
    """Map a combined-image column to ("back"|"mid"|"front", local index)."""
    half = rig.half_cols
    if not 0 <= col < rig.combined_w:
        raise ValueError(f"column {col} outside combined width {rig.combined_w}")
    if col < half:
        return "back", col
    if col < half + rig.n_intermediate:
        return "mid", col - half
    return "front", col - half - rig.n_intermediate + (rig.image_w - half)


def _camera_centers(rig: CameraRig) -> tuple[np.ndarray, np.ndarray]:
    return np.asarray(rig.front_offset, float), np.asarray(rig.back_offset, float)


def combined_ray(
    rig: CameraRig, col: float, row: float, pos: np.ndarray, yaw: float = 0.0
) -> tuple[np.ndarray, np.ndarray]:
    """World-frame (origin, unit direction) of one combined-image pixel.

    Integer pixel coordinates address pixel centers; fractional values are
    accepted (useful for principal-point queries on even-sized images).
    """
    front, back = _camera_centers(rig)
    cy = (rig.image_h - 1) / 2.0
    v = (row - cy) / rig.focal
    seg, local = segment_of_column(rig, int(col)) if float(col).is_integer() else (None, None)
    if seg is None:
        # fractional columns only make sense inside one camera's span
        raise ValueError("fractional columns are not addressable; use integer col")
    if not 0 <= row <= rig.image_h - 1 + 1e-9:
        raise ValueError(f"row {row} outside image height {rig.image_h}")
    cx = (rig.image_w - 1) / 2.0
    if seg == "back":
        offset = back
        u = (local - cx) / rig.focal
    elif seg == "front":
        offset = front
        u = (local - cx) / rig.focal
    else:
        t = (local + 1) / (rig.n_intermediate + 1)
        offset = back + t * (front - back)
        u = 0.0
    d_body = np.array([u, v, -1.0])
    d_body /= np.linalg.norm(d_body)
    rot = _yaw_matrix(yaw)
    origin = np.asarray(pos, float) + rot @ offset
    return origin, rot @ d_body


@lru_cache(maxsize=8)
def _combined_body_grid(rig: CameraRig) -> tuple[np.ndarray, np.ndarray]:
    """Body-frame (offsets, unit directions) of all combined rays, row-major."""
    front, back = _camera_centers(rig)
    half = rig.half_cols
    w, h, f = rig.image_w, rig.image_h, rig.focal
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0

    us = np.empty(rig.combined_w)
    offs = np.empty((rig.combined_w, 3))
    cols = np.arange(rig.combined_w)
    back_sel = cols < half
    mid_sel = (cols >= half) & (cols < half + rig.n_intermediate)
    front_sel = cols >= half + rig.n_intermediate
    us[back_sel] = (cols[back_sel] - cx) / f
    offs[back_sel] = back
    m = cols[mid_sel] - half
    t = (m + 1) / (rig.n_intermediate + 1)
    us[mid_sel] = 0.0
    offs[mid_sel] = back + t[:, None] * (front - back)
    local_front = cols[front_sel] - half - rig.n_intermediate + (w - half)
    us[front_sel] = (local_front - cx) / f
    offs[front_sel] = front

    vs = (np.arange(h) - cy) / f
    uu = np.tile(us, h)
    vv = np.repeat(vs, rig.combined_w)
    dirs = np.stack([uu, vv, -np.ones_like(uu)], axis=1)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    origins = np.tile(offs, (h, 1))
    origins.setflags(write=False)
    dirs.setflags(write=False)
    return origins, dirs


@lru_cache(maxsize=8)
def _camera_body_dirs(rig: CameraRig) -> np.ndarray:
    w, h, f = rig.image_w, rig.image_h, rig.focal
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    us = (np.arange(w) - cx) / f
    vs = (np.arange(h) - cy) / f
    uu = np.tile(us, h)
    vv = np.repeat(vs, w)
    dirs = np.stack([uu, vv, -np.ones_like(uu)], axis=1)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    dirs.setflags(write=False)
    return dirs


def _combined_ray_grid(rig: CameraRig, pos: np.ndarray, yaw: float) -> tuple[np.ndarray, np.ndarray]:
    """All combined rays as (N, 3) world-frame origins and unit directions."""
    offsets, dirs = _combined_body_grid(rig)
    p = np.asarray(pos, float)
    if yaw == 0.0:
        return p + offsets, dirs
    rot = _yaw_matrix(yaw)
    return p + offsets @ rot.T, dirs @ rot.T


def _camera_ray_grid(
    rig: CameraRig, pos: np.ndarray, yaw: float, which: str
) -> tuple[np.ndarray, np.ndarray]:
    front, back = _camera_centers(rig)
    offset = front if which == "front" else back
    dirs = _camera_body_dirs(rig)
    rot = _yaw_matrix(yaw)
    origin = np.asarray(pos, float) + (offset if yaw == 0.0 else rot @ offset)
    origins = np.broadcast_to(origin, dirs.shape)
    return origins, dirs if yaw == 0.0 else dirs @ rot.T


def _box_bounds(world: World) -> tuple[np.ndarray, np.ndarray]:
    lo = np.array(
        [[p.center[0] - p.half_extent, p.center[1] - p.half_extent, 0.0] for p in world.platforms]
    )
    hi = np.array(
        [[p.center[0] + p.half_extent, p.center[1] + p.half_extent, p.height] for p in world.platforms]
    )
    return lo, hi


def raycast(origins: np.ndarray, dirs: np.ndarray, world: World) -> tuple[np.ndarray, np.ndarray]:
    """First-hit distance of each ray against platform boxes and the ground.

    Returns (t, hit_xy): ray parameters (= Euclidean distance for unit
    directions) and the XY of each hit point. Exact slab-method geometry.
    """
    n = origins.shape[0]
    dz = dirs[:, 2]
    down = dz < 0
    t_ground = np.full(n, np.inf)
    t_ground[down] = -origins[down, 2] / dz[down]
    best = np.where(t_ground > 0, t_ground, np.inf)

    if world.platforms:
        par = dirs == 0.0                              # (N, 3)
        inv = np.where(par, 0.0, 1.0 / np.where(par, 1.0, dirs))
        lo_all, hi_all = _box_bounds(world)
        for lo, hi in zip(lo_all, hi_all):
            t1 = np.full(n, -np.inf)
            t2 = np.full(n, np.inf)
            ok = np.ones(n, dtype=bool)
            for ax in range(3):
                p_ax = par[:, ax]
                ta = (lo[ax] - origins[:, ax]) * inv[:, ax]
                tb = (hi[ax] - origins[:, ax]) * inv[:, ax]
                t_lo = np.minimum(ta, tb)
                t_hi = np.maximum(ta, tb)
                inside = (origins[:, ax] >= lo[ax]) & (origins[:, ax] <= hi[ax])
                ok &= ~p_ax | inside
                t1 = np.maximum(t1, np.where(p_ax, -np.inf, t_lo))
                t2 = np.minimum(t2, np.where(p_ax, np.inf, t_hi))
            hit = ok & (t2 >= t1) & (t2 > 0)
            t = np.where(t1 > 0, t1, t2)
            best = np.minimum(best, np.where(hit, t, np.inf))

    hit_xy = origins[:, :2] + best[:, None] * dirs[:, :2]
    return best, hit_xy


def downsample2x(img: np.ndarray) -> np.ndarray:
    """Exact 2x2 block means."""
    h, w = img.shape
    if h % 2 or w % 2:
        raise ValueError("image dimensions must be even")
    return img.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def render(
    rig: CameraRig,
    pos: np.ndarray,
    world: World,
    leg_half_span: float,
    yaw: float = 0.0,
) -> CombinedImage:
    """Ground-truth combined depth + safe-landing segmentation at a pose.

    Rendered at combined resolution then box-downsampled 2x. Pure function of
    (rig, pose, world).
    """
    if pos[2] <= 0:
        raise ValueError("render requires positive altitude")
    origins, dirs = _combined_ray_grid(rig, pos, yaw)
    t, hit_xy = raycast(origins, dirs, world)
    depth = t.reshape(rig.combined_h, rig.combined_w)
    seg = (
        safe_landing_points(world, hit_xy, leg_half_span)
        .astype(float)
        .reshape(rig.combined_h, rig.combined_w)
    )
    return CombinedImage(depth=downsample2x(depth), seg=downsample2x(seg))


def render_per_camera(
    rig: CameraRig, pos: np.ndarray, world: World, yaw: float = 0.0
) -> tuple[np.ndarray, np.ndarray]:
    """Full-frustum depth images (front, back) at image_w x image_h."""
    if pos[2] <= 0:
        raise ValueError("render requires positive altitude")
    fo, fd = _camera_ray_grid(rig, pos, yaw, "front")
    bo, bd = _camera_ray_grid(rig, pos, yaw, "back")
    n = fd.shape[0]
    t, _ = raycast(np.concatenate([fo, bo]), np.concatenate([fd, bd]), world)
    return t[:n].reshape(rig.image_h, rig.image_w), t[n:].reshape(rig.image_h, rig.image_w)


# ---------------------------------------------------------------------------
# Sensor noise
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseParams:
    """Per-image rates are drawn uniformly from these ranges."""

    dropout_range: tuple[float, float] = (0.02, 0.10)
    spike_range: tuple[float, float] = (0.0, 0.02)
    rel_noise_range: tuple[float, float] = (0.005, 0.02)
    erosion_range: tuple[float, float] = (0.2, 0.6)
    edge_threshold: float = 0.05   # meters; depth jump that counts as an edge
    blob_radius_range: tuple[float, float] = (0.8, 2.5)

    @classmethod
    def off(cls) -> "NoiseParams":
        return cls(
            dropout_range=(0.0, 0.0),
            spike_range=(0.0, 0.0),
            rel_noise_range=(0.0, 0.0),
            erosion_range=(0.0, 0.0),
        )

    def to_dict(self) -> dict:
        return {
            "dropout_range": list(self.dropout_range),
            "spike_range": list(self.spike_range),
            "rel_noise_range": list(self.rel_noise_range),
            "erosion_range": list(self.erosion_range),
            "edge_threshold": self.edge_threshold,
            "blob_radius_range": list(self.blob_radius_range),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseParams":
        return cls(
            dropout_range=tuple(d["dropout_range"]),
            spike_range=tuple(d["spike_range"]),
            rel_noise_range=tuple(d["rel_noise_range"]),
            erosion_range=tuple(d["erosion_range"]),
            edge_threshold=float(d["edge_threshold"]),
            blob_radius_range=tuple(d["blob_radius_range"]),
        )


@lru_cache(maxsize=8)
def _pixel_grid(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    yy, xx = np.mgrid[0:h, 0:w]
    yy.setflags(write=False)
    xx.setflags(write=False)
    return yy, xx


def _edge_mask(depth: np.ndarray, threshold: float) -> np.ndarray:
    e = np.zeros_like(depth, dtype=bool)
    dx = np.abs(np.diff(depth, axis=1)) > threshold
    dy = np.abs(np.diff(depth, axis=0)) > threshold
    e[:, :-1] |= dx
    e[:, 1:] |= dx
    e[:-1, :] |= dy
    e[1:, :] |= dy
    return e


def apply_noise(depth: np.ndarray, rng: np.random.Generator, params: NoiseParams) -> np.ndarray:
    """Depth-sensor corruption model.

    Composition of dropout blobs (missing depth, sentinel 0), spike pixels
    (mismatched triangulation, values in [d, 2d+2]), multiplicative Gaussian
    noise with std proportional to depth, and erosion of pixels at depth
    discontinuities. Rates drawn per image from the configured ranges.
    """
    h, w = depth.shape
    out = depth.astype(float).copy()

    dropout = rng.uniform(*params.dropout_range)
    spike = rng.uniform(*params.spike_range)
    rel = rng.uniform(*params.rel_noise_range)
    erosion = rng.uniform(*params.erosion_range)

    dropped = np.zeros((h, w), dtype=bool)
    if dropout > 0:
        yy, xx = _pixel_grid(h, w)
        target = dropout * h * w
        while dropped.sum() < target:
            cy = rng.uniform(0, h)
            cx = rng.uniform(0, w)
            r = rng.uniform(*params.blob_radius_range)
            dropped |= (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r

    if spike > 0:
        spiked = rng.random((h, w)) < spike
        spike_vals = rng.uniform(out, 2.0 * out + 2.0)
        out = np.where(spiked & ~dropped, spike_vals, out)

    if rel > 0:
        noise = 1.0 + rel * rng.standard_normal((h, w))
        out = np.where(dropped, out, out * noise)

    if erosion > 0:
        edges = _edge_mask(depth, params.edge_threshold)
        eroded = edges & (rng.random((h, w)) < erosion)
        dropped |= eroded

    out[dropped] = 0.0
    return out
