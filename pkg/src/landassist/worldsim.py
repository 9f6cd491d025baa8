"""Deterministic landing world: platform layouts, first-order UAV velocity
dynamics with ground-effect disturbance, and touchdown classification.

All geometry is axis-aligned. Platforms are square boxes resting on the
ground plane z=0; the UAV body origin defines the touchdown plane (legs have
zero length and sit at the corners of a square of half-span ``leg_half_span``
around the body origin).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

V_CAP = 1.2  # m/s, per-axis command clamp


class WorldGenError(RuntimeError):
    """Rejection sampling exhausted its retry budget (infeasible layout)."""


class Phase(str, Enum):
    FLYING = "flying"
    LANDED = "landed"
    OUT_OF_BOUNDS = "out_of_bounds"
    TIMED_OUT = "timed_out"

    @property
    def terminal(self) -> bool:
        return self is not Phase.FLYING


@dataclass(frozen=True)
class Platform:
    """Square landing box: XY center, half side length, top height above ground."""

    center: tuple[float, float]
    half_extent: float
    height: float
    id: int

    def contains(self, x: float, y: float) -> bool:
        return (
            abs(x - self.center[0]) <= self.half_extent
            and abs(y - self.center[1]) <= self.half_extent
        )

    @property
    def top_center(self) -> tuple[float, float, float]:
        return (self.center[0], self.center[1], self.height)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "center": [self.center[0], self.center[1]],
            "half_extent": self.half_extent,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Platform":
        return cls(
            center=(d["center"][0], d["center"][1]),
            half_extent=d["half_extent"],
            height=d["height"],
            id=d["id"],
        )


@dataclass
class World:
    platforms: list[Platform]
    bounds: float  # radius of the flyable cylinder, meters
    goal_id: int
    seed: int

    @property
    def goal(self) -> Platform:
        return self.platforms[self.goal_id]

    def with_goal(self, goal_id: int) -> "World":
        if not 0 <= goal_id < len(self.platforms):
            raise ValueError(f"goal_id {goal_id} out of range")
        return World(self.platforms, self.bounds, goal_id, self.seed)

    def to_dict(self) -> dict:
        return {
            "platforms": [p.to_dict() for p in self.platforms],
            "bounds": self.bounds,
            "goal_id": self.goal_id,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "World":
        return cls(
            platforms=[Platform.from_dict(p) for p in d["platforms"]],
            bounds=d["bounds"],
            goal_id=d["goal_id"],
            seed=d["seed"],
        )


@dataclass
class UavState:
    pos: np.ndarray  # (3,), z = altitude of body origin above ground
    vel: np.ndarray  # (3,), m/s
    phase: Phase = Phase.FLYING
    t: float = 0.0
    yaw: float = 0.0

    def copy(self) -> "UavState":
        return UavState(self.pos.copy(), self.vel.copy(), self.phase, self.t, self.yaw)


@dataclass(frozen=True)
class LandingResult:
    landing_pos: tuple[float, float]
    landing_vh: float
    landing_vv: float
    on_goal: bool
    all_legs_supported: bool
    success: bool

    def to_dict(self) -> dict:
        return {
            "landing_pos": [self.landing_pos[0], self.landing_pos[1]],
            "landing_vh": self.landing_vh,
            "landing_vv": self.landing_vv,
            "on_goal": self.on_goal,
            "all_legs_supported": self.all_legs_supported,
            "success": self.success,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LandingResult":
        return cls(
            landing_pos=(d["landing_pos"][0], d["landing_pos"][1]),
            landing_vh=d["landing_vh"],
            landing_vv=d["landing_vv"],
            on_goal=d["on_goal"],
            all_legs_supported=d["all_legs_supported"],
            success=d["success"],
        )


@dataclass(frozen=True)
class DynamicsParams:
    """Constants of the discrete-time vehicle model and touchdown rules."""

    dt: float = 0.2            # canonical control tick, seconds
    tau_v: float = 0.3         # first-order velocity lag constant
    sigma0: float = 0.08       # ground-effect noise std at z=0, m/s per tick
    h_ge: float = 0.8          # altitude where ground-effect noise vanishes
    leg_half_span: float = 0.18
    time_limit: float = 90.0   # episode cap, seconds
    vh_max: float = 0.2        # safe horizontal touchdown speed
    vv_max: float = 0.6        # safe vertical touchdown speed


# ---------------------------------------------------------------------------
# Layouts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RandomScatter:
    n_platforms: int
    min_sep: float
    half_extent_range: tuple[float, float] = (0.25, 0.25)
    height_range: tuple[float, float] = (0.12, 0.12)


@dataclass(frozen=True)
class Grid:
    rows: int
    cols: int
    spacing_range: tuple[float, float]
    half_extent: float = 0.25
    height: float = 0.12


@dataclass(frozen=True)
class Validation3x3:
    """Nine 0.5 x 0.5 x 0.12 m platforms on a 1.4 m grid, 3.4 m bounds."""


Layout = RandomScatter | Grid | Validation3x3

DEFAULT_BOUNDS = 3.4
_SCATTER_RETRIES = 1000


def layout_to_dict(layout: Layout) -> dict:
    if isinstance(layout, Validation3x3):
        return {"kind": "validation3x3"}
    if isinstance(layout, RandomScatter):
        return {
            "kind": "scatter",
            "n_platforms": layout.n_platforms,
            "min_sep": layout.min_sep,
            "half_extent_range": list(layout.half_extent_range),
            "height_range": list(layout.height_range),
        }
    if isinstance(layout, Grid):
        return {
            "kind": "grid",
            "rows": layout.rows,
            "cols": layout.cols,
            "spacing_range": list(layout.spacing_range),
            "half_extent": layout.half_extent,
            "height": layout.height,
        }
    raise TypeError(f"unknown layout {layout!r}")


def layout_from_dict(d: dict) -> Layout:
    kind = d["kind"]
    if kind == "validation3x3":
        return Validation3x3()
    if kind == "scatter":
        return RandomScatter(
            n_platforms=int(d["n_platforms"]),
            min_sep=float(d["min_sep"]),
            half_extent_range=tuple(d.get("half_extent_range", (0.25, 0.25))),
            height_range=tuple(d.get("height_range", (0.12, 0.12))),
        )
    if kind == "grid":
        return Grid(
            rows=int(d["rows"]),
            cols=int(d["cols"]),
            spacing_range=tuple(d["spacing_range"]),
            half_extent=float(d.get("half_extent", 0.25)),
            height=float(d.get("height", 0.12)),
        )
    raise ValueError(f"unknown layout kind {kind!r}")


def generate_world(seed: int, layout: Layout, bounds: float = DEFAULT_BOUNDS) -> World:
    """Build a platform world deterministically from (seed, layout).

    Raises WorldGenError when scatter rejection sampling exhausts its retry
    budget, signalling infeasible layout parameters.
    """
    rng = np.random.default_rng(seed)

    if isinstance(layout, Validation3x3):
        coords = (-1.4, 0.0, 1.4)
        platforms = [
            Platform(center=(x, y), half_extent=0.25, height=0.12, id=i)
            for i, (y, x) in enumerate((y, x) for y in coords for x in coords)
        ]
        goal_id = int(rng.integers(len(platforms)))
        return World(platforms, DEFAULT_BOUNDS, goal_id, seed)

    if isinstance(layout, RandomScatter):
        if layout.n_platforms < 1:
            raise ValueError("n_platforms must be >= 1")
        max_he = layout.half_extent_range[1]
        diagonal = 2.0 * max_he * math.sqrt(2.0)
        if layout.min_sep <= diagonal:
            raise ValueError(
                f"min_sep {layout.min_sep} must exceed platform diagonal {diagonal:.3f}"
            )
        placed: list[Platform] = []
        place_radius = bounds - max_he - 0.3
        for i in range(layout.n_platforms):
            for attempt in range(_SCATTER_RETRIES + 1):
                if attempt == _SCATTER_RETRIES:
                    raise WorldGenError(
                        f"could not place platform {i} after {_SCATTER_RETRIES} attempts"
                    )
                c = rng.uniform(-place_radius, place_radius, size=2)
                if math.hypot(c[0], c[1]) > place_radius:
                    continue
                if all(
                    math.hypot(c[0] - p.center[0], c[1] - p.center[1]) >= layout.min_sep
                    for p in placed
                ):
                    he = rng.uniform(*layout.half_extent_range)
                    h = rng.uniform(*layout.height_range)
                    placed.append(Platform(center=(float(c[0]), float(c[1])),
                                           half_extent=float(he), height=float(h), id=i))
                    break
        goal_id = int(rng.integers(len(placed)))
        return World(placed, bounds, goal_id, seed)

    if isinstance(layout, Grid):
        sx = float(rng.uniform(*layout.spacing_range))
        sy = float(rng.uniform(*layout.spacing_range))
        platforms = []
        for r in range(layout.rows):
            for c in range(layout.cols):
                x = (c - (layout.cols - 1) / 2.0) * sx
                y = (r - (layout.rows - 1) / 2.0) * sy
                platforms.append(Platform(center=(x, y), half_extent=layout.half_extent,
                                          height=layout.height, id=len(platforms)))
        goal_id = int(rng.integers(len(platforms)))
        return World(platforms, bounds, goal_id, seed)

    raise TypeError(f"unknown layout {layout!r}")


# ---------------------------------------------------------------------------
# Dynamics
# ---------------------------------------------------------------------------

def clamp_cmd(cmd: np.ndarray) -> np.ndarray:
    return np.clip(np.asarray(cmd, dtype=float), -V_CAP, V_CAP)


def ground_effect_sigma(z: float, dyn: DynamicsParams) -> float:
    return dyn.sigma0 * max(0.0, 1.0 - z / dyn.h_ge)


def step_dynamics(
    state: UavState,
    cmd: np.ndarray,
    dyn: DynamicsParams,
    rng: np.random.Generator | None = None,
    dt: float | None = None,
) -> UavState:
    """One tick of the first-order velocity-tracking model.

    vel' = vel + (dt/tau_v)(clamp(cmd) - vel) + eta,
    eta ~ N(0, sigma_ge(z)^2 I) evaluated at the pre-step altitude; pos
    integrates the new velocity and z is clamped at the ground plane.
    """
    if state.phase is not Phase.FLYING:
        raise ValueError(f"step_dynamics requires Flying phase, got {state.phase}")
    h = dyn.dt if dt is None else dt
    c = clamp_cmd(cmd)
    vel = state.vel + (h / dyn.tau_v) * (c - state.vel)
    if rng is not None:
        sigma = ground_effect_sigma(float(state.pos[2]), dyn)
        vel = vel + sigma * rng.standard_normal(3)
    pos = state.pos + h * vel
    if pos[2] < 0.0:
        pos[2] = 0.0
    return UavState(pos=pos, vel=vel, phase=Phase.FLYING, t=state.t + h, yaw=state.yaw)


# ---------------------------------------------------------------------------
# Touchdown and safety classification
# ---------------------------------------------------------------------------

_LEG_SIGNS = ((1, 1), (1, -1), (-1, 1), (-1, -1))


def _surface_under(world: World, x: float, y: float) -> tuple[float, int]:
    """Support surface at an XY point: (height, platform id) with ground = (0, -1)."""
    for p in world.platforms:
        if p.contains(x, y):
            return p.height, p.id
    return 0.0, -1


def check_touchdown(
    state: UavState,
    world: World,
    leg_half_span: float,
    goal: Platform | None = None,
    vh_max: float = 0.2,
    vv_max: float = 0.6,
) -> LandingResult | None:
    """Classify contact of the four-leg footprint against the world surfaces.

    Returns None while airborne. On contact, ``all_legs_supported`` requires
    all four legs to rest on one platform top (or all on the ground) with no
    platform side intersecting the body footprint.
    """
    if state.phase is not Phase.FLYING:
        raise ValueError(f"check_touchdown requires Flying phase, got {state.phase}")
    if goal is None:
        goal = world.goal
    x, y, z = (float(v) for v in state.pos)
    s = leg_half_span
    supports = [_surface_under(world, x + sx * s, y + sy * s) for sx, sy in _LEG_SIGNS]
    contact_h = max(h for h, _ in supports)
    if z > contact_h + 1e-12:
        return None

    ids = [pid for _, pid in supports]
    uniform = all(pid == ids[0] for pid in ids)
    # A platform strictly taller than the body plane overlapping the footprint
    # means the descent intersected its side.
    blocked = False
    for p in world.platforms:
        if p.height <= contact_h:
            continue
        if (abs(x - p.center[0]) < s + p.half_extent
                and abs(y - p.center[1]) < s + p.half_extent):
            blocked = True
            break
    all_legs = uniform and not blocked
    on_goal = uniform and ids[0] == goal.id
    vh = math.hypot(float(state.vel[0]), float(state.vel[1]))
    vv = abs(float(state.vel[2]))
    success = all_legs and on_goal and vh < vh_max and vv < vv_max
    return LandingResult(
        landing_pos=(x, y),
        landing_vh=vh,
        landing_vv=vv,
        on_goal=on_goal,
        all_legs_supported=all_legs,
        success=success,
    )


def safe_landing_points(world: World, points: np.ndarray, leg_half_span: float) -> np.ndarray:
    """Vectorized safe-to-land test for landing centers ``points`` (N, 2).

    True where all four legs rest on a single support surface and no taller
    platform overlaps the body footprint. Deliberately implemented separately
    from check_touchdown so the two act as cross-checking routes.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n = pts.shape[0]
    s = leg_half_span
    leg_h = np.zeros((4, n))
    leg_id = np.full((4, n), -1, dtype=int)
    for k, (sx, sy) in enumerate(_LEG_SIGNS):
        lx = pts[:, 0] + sx * s
        ly = pts[:, 1] + sy * s
        for p in world.platforms:
            inside = (np.abs(lx - p.center[0]) <= p.half_extent) & (
                np.abs(ly - p.center[1]) <= p.half_extent
            )
            leg_h[k, inside] = p.height
            leg_id[k, inside] = p.id
    support = leg_h.max(axis=0)
    uniform = (leg_id == leg_id[0]).all(axis=0)
    blocked = np.zeros(n, dtype=bool)
    for p in world.platforms:
        overlap = (np.abs(pts[:, 0] - p.center[0]) < s + p.half_extent) & (
            np.abs(pts[:, 1] - p.center[1]) < s + p.half_extent
        )
        blocked |= overlap & (p.height > support)
    return uniform & ~blocked


def safety_map(
    world: World,
    leg_half_span: float,
    resolution: float = 0.05,
    extent: float | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Boolean safe-landing grid over a square XY lattice.

    Returns (xs, ys, grid) with grid[j, i] the safety of center (xs[i], ys[j]).
    Used as VAE segmentation ground truth and as a brute-force oracle for
    check_touchdown.
    """
    if extent is None:
        extent = world.bounds
    n = int(round(2 * extent / resolution)) + 1
    xs = -extent + resolution * np.arange(n)
    ys = -extent + resolution * np.arange(n)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    grid = safe_landing_points(world, pts, leg_half_span).reshape(n, n)
    return xs, ys, grid
