import math

import numpy as np
import pytest

from landassist.camera import (
    CameraRig,
    NoiseParams,
    apply_noise,
    combined_ray,
    downsample2x,
    full_scale_rig,
    raycast,
    render,
    render_per_camera,
    segment_of_column,
)
from landassist.tensorio import load_bundle, save_bundle
from landassist.worldsim import Platform, Validation3x3, World, generate_world

RIG = CameraRig()  # desk rig: 36x20 per camera, 6 bridges -> 42x20 -> 21x10


def flat_world():
    return World(platforms=[], bounds=4.0, goal_id=0, seed=0)


class TestProjection:
    def test_combined_width_invariants(self):
        assert full_scale_rig().combined_w == 160
        assert full_scale_rig().downsampled_w == 80
        assert full_scale_rig().downsampled_h == 40
        assert RIG.combined_w == 42
        assert RIG.downsampled_w == 21
        assert RIG.downsampled_h == 10

    def test_column_segments_full_scale(self):
        rig = full_scale_rig()
        assert segment_of_column(rig, 0) == ("back", 0)
        assert segment_of_column(rig, 70) == ("back", 70)
        assert segment_of_column(rig, 71) == ("mid", 0)
        assert segment_of_column(rig, 88) == ("mid", 17)
        assert segment_of_column(rig, 89)[0] == "front"
        assert segment_of_column(rig, 159) == ("front", 140)
        mids = [c for c in range(rig.combined_w) if segment_of_column(rig, c)[0] == "mid"]
        assert len(mids) == 18

    def test_intermediate_principal_ray_points_down(self):
        rig = full_scale_rig()
        origin, d = combined_ray(rig, 75, (rig.image_h - 1) / 2.0, np.array([0.0, 0.0, 1.5]))
        assert d == pytest.approx([0.0, 0.0, -1.0], abs=1e-12)

    def test_back_mid_boundary_continuity(self):
        rig = full_scale_rig()
        row = 13
        o1, d1 = combined_ray(rig, 70, row, np.zeros(3) + [0, 0, 2.0])
        o2, d2 = combined_ray(rig, 71, row, np.zeros(3) + [0, 0, 2.0])
        # directions identical (both principal columns), origins shifted by the
        # first interpolation step of the camera-center offset
        assert np.allclose(d1, d2, atol=1e-12)
        step = (np.array(rig.front_offset) - np.array(rig.back_offset)) / (rig.n_intermediate + 1)
        assert np.allclose(o2 - o1, step, atol=1e-12)
        # and the angular pitch of one pixel bounds any residual direction gap
        pitch = math.atan(1.0 / rig.focal)
        assert math.acos(min(1.0, float(d1 @ d2))) <= pitch

    def test_out_of_range_pixel_rejected(self):
        with pytest.raises(ValueError):
            combined_ray(RIG, RIG.combined_w, 0, np.array([0, 0, 1.0]))
        with pytest.raises(ValueError):
            combined_ray(RIG, 0, RIG.image_h + 3, np.array([0, 0, 1.0]))

    def test_yaw_rotates_rays(self):
        origin, d = combined_ray(RIG, 0, 3, np.array([0.0, 0.0, 2.0]), yaw=math.pi / 2)
        o0, d0 = combined_ray(RIG, 0, 3, np.array([0.0, 0.0, 2.0]), yaw=0.0)
        rot = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        assert np.allclose(d, rot @ d0, atol=1e-12)
        assert np.allclose(origin, rot @ (o0 - [0, 0, 2.0]) + [0, 0, 2.0], atol=1e-12)


class TestRender:
    def test_flat_ground_principal_depth(self):
        # ray straight down from altitude h hits at distance h
        h = 1.7
        origin = np.array([[0.3, -0.2, h]])
        t, _ = raycast(origin, np.array([[0.0, 0.0, -1.0]]), flat_world())
        assert t[0] == pytest.approx(h, rel=1e-12)

    def test_flat_ground_row_closed_form(self):
        # intermediate columns have u=0: depth = h*sqrt(1 + v^2)
        h = 2.0
        world = flat_world()
        cy = (RIG.image_h - 1) / 2.0
        for row in range(RIG.image_h):
            origin, d = combined_ray(RIG, RIG.half_cols, row, np.array([0.0, 0.0, h]))
            t, _ = raycast(origin[None], d[None], world)
            expected = h * math.sqrt(1.0 + ((row - cy) / RIG.focal) ** 2)
            assert t[0] == pytest.approx(expected, rel=1e-12)

    def test_platform_under_rig(self):
        w = World(
            platforms=[Platform(center=(0.0, 0.0), half_extent=0.4, height=0.12, id=0)],
            bounds=4.0,
            goal_id=0,
            seed=0,
        )
        h = 1.5
        origin = np.array([[0.0, 0.0, h]])
        t, _ = raycast(origin, np.array([[0.0, 0.0, -1.0]]), w)
        assert t[0] == pytest.approx(h - 0.12, rel=1e-12)

    def test_render_shapes_and_positivity(self):
        world = generate_world(1, Validation3x3())
        img = render(RIG, np.array([0.0, 0.0, 1.4]), world, 0.18)
        assert img.depth.shape == (10, 21)
        assert img.seg.shape == (10, 21)
        assert (img.depth > 0).all()
        assert ((img.seg >= 0) & (img.seg <= 1)).all()

    def test_render_pure(self):
        world = generate_world(1, Validation3x3())
        a = render(RIG, np.array([0.3, -0.5, 1.2]), world, 0.18)
        b = render(RIG, np.array([0.3, -0.5, 1.2]), world, 0.18)
        assert np.array_equal(a.depth, b.depth) and np.array_equal(a.seg, b.seg)

    def test_seg_matches_safety_oracle_at_hits(self):
        from landassist.camera import _combined_ray_grid
        from landassist.worldsim import safe_landing_points

        world = generate_world(9, Validation3x3())
        pos = np.array([0.4, 0.2, 1.6])
        origins, dirs = _combined_ray_grid(RIG, pos, 0.0)
        t, hit_xy = raycast(origins, dirs, world)
        seg_full = safe_landing_points(world, hit_xy, 0.18).astype(float)
        img = render(RIG, pos, world, 0.18)
        assert np.array_equal(
            img.seg, downsample2x(seg_full.reshape(RIG.combined_h, RIG.combined_w))
        )

    def test_per_camera_mirror_symmetry(self):
        w = World(
            platforms=[Platform(center=(0.0, 0.0), half_extent=0.3, height=0.15, id=0)],
            bounds=4.0,
            goal_id=0,
            seed=0,
        )
        front, back = render_per_camera(RIG, np.array([0.0, 0.0, 1.3]), w)
        assert np.allclose(back, np.flip(front, axis=1), atol=1e-12)

    def test_frustum_depth_bounds_flat(self):
        h = 2.0
        front, back = render_per_camera(RIG, np.array([0.0, 0.0, h]), flat_world())
        cx = (RIG.image_w - 1) / 2.0
        cy = (RIG.image_h - 1) / 2.0
        sec_max = math.sqrt(1 + (cx / RIG.focal) ** 2 + (cy / RIG.focal) ** 2)
        for img in (front, back):
            assert img.min() >= h - 1e-12
            assert img.max() <= h * sec_max + 1e-12

    def test_platform_ahead_only_in_front_image(self):
        w = World(
            platforms=[Platform(center=(1.0, 0.0), half_extent=0.25, height=0.12, id=0)],
            bounds=4.0,
            goal_id=0,
            seed=0,
        )
        front, back = render_per_camera(RIG, np.array([0.0, 0.0, 1.0]), w)
        front_flat, back_flat = render_per_camera(RIG, np.array([0.0, 0.0, 1.0]), flat_world())
        assert (front < front_flat - 1e-9).any()  # platform top visible ahead
        assert np.array_equal(back, back_flat)  # absent behind

    def test_random_rays_against_scalar_oracle(self):
        world = generate_world(17, Validation3x3())
        rng = np.random.default_rng(5)
        n = 500
        origins = np.stack(
            [rng.uniform(-2, 2, n), rng.uniform(-2, 2, n), rng.uniform(0.3, 3.0, n)], axis=1
        )
        d = np.stack(
            [rng.normal(size=n), rng.normal(size=n), -np.abs(rng.normal(size=n)) - 0.1], axis=1
        )
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        t, _ = raycast(origins, d, world)
        for k in range(n):
            expected = _scalar_first_hit(origins[k], d[k], world)
            assert t[k] == pytest.approx(expected, rel=1e-9)

    def test_downsample_exact_block_means(self):
        rng = np.random.default_rng(0)
        img = rng.uniform(0.5, 3.0, size=(4, 6))
        out = downsample2x(img)
        for j in range(2):
            for i in range(3):
                block = img[2 * j : 2 * j + 2, 2 * i : 2 * i + 2]
                assert out[j, i] == block.mean()


def _scalar_first_hit(origin, direction, world):
    """Independent per-ray reference: plane + box intersection in plain floats."""
    best = math.inf
    ox, oy, oz = origin
    dx, dy, dz = direction
    if dz < 0:
        t = -oz / dz
        if t > 0:
            best = t
    for p in world.platforms:
        lo = (p.center[0] - p.half_extent, p.center[1] - p.half_extent, 0.0)
        hi = (p.center[0] + p.half_extent, p.center[1] + p.half_extent, p.height)
        tmin, tmax = -math.inf, math.inf
        ok = True
        for o, d, lo_a, hi_a in ((ox, dx, lo[0], hi[0]), (oy, dy, lo[1], hi[1]), (oz, dz, lo[2], hi[2])):
            if d == 0.0:
                if not (lo_a <= o <= hi_a):
                    ok = False
                    break
            else:
                ta, tb = (lo_a - o) / d, (hi_a - o) / d
                if ta > tb:
                    ta, tb = tb, ta
                tmin = max(tmin, ta)
                tmax = min(tmax, tb)
        if ok and tmax >= tmin and tmax > 0:
            t = tmin if tmin > 0 else tmax
            best = min(best, t)
    return best


class TestNoise:
    def test_zero_rates_identity(self):
        rng = np.random.default_rng(0)
        img = np.full((20, 36), 1.5)
        out = apply_noise(img, rng, NoiseParams.off())
        assert np.array_equal(out, img)

    def test_full_dropout_saturates(self):
        params = NoiseParams(
            dropout_range=(1.0, 1.0),
            spike_range=(0.0, 0.0),
            rel_noise_range=(0.0, 0.0),
            erosion_range=(0.0, 0.0),
        )
        out = apply_noise(np.full((10, 12), 2.0), np.random.default_rng(1), params)
        assert (out == 0.0).all()

    def test_mad_matches_analytic_expectation(self):
        # constant-depth images: analytic per-valid-pixel MAD is
        # p_spike * E|U[d, 2d+2] - d| + (1 - p_spike) * rel * sqrt(2/pi) * d
        d = 2.0
        params = NoiseParams(
            dropout_range=(0.05, 0.05),
            spike_range=(0.01, 0.01),
            rel_noise_range=(0.01, 0.01),
            erosion_range=(0.0, 0.0),
        )
        expected = 0.01 * (d + 2.0) / 2.0 + 0.99 * 0.01 * math.sqrt(2 / math.pi) * d
        rng = np.random.default_rng(7)
        devs = []
        for _ in range(300):
            img = np.full((20, 36), d)
            out = apply_noise(img, rng, params)
            valid = out > 0
            devs.append(np.abs(out[valid] - d).mean())
        got = float(np.mean(devs))
        assert got == pytest.approx(expected, rel=0.08)

    def test_erosion_hits_edges_only(self):
        img = np.full((10, 10), 2.0)
        img[:, 5:] = 1.0  # one vertical discontinuity between cols 4 and 5
        params = NoiseParams(
            dropout_range=(0.0, 0.0),
            spike_range=(0.0, 0.0),
            rel_noise_range=(0.0, 0.0),
            erosion_range=(1.0, 1.0),
        )
        out = apply_noise(img, np.random.default_rng(3), params)
        assert (out[:, 4:6] == 0.0).all()
        assert (out[:, :4] == 2.0).all() and (out[:, 6:] == 1.0).all()

    def test_seeded_noise_reproducible(self):
        img = np.linspace(0.5, 3.0, 200).reshape(10, 20)
        a = apply_noise(img, np.random.default_rng(11), NoiseParams())
        b = apply_noise(img, np.random.default_rng(11), NoiseParams())
        assert np.array_equal(a, b)


class TestTensorIO:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        arrays = {
            "images": rng.standard_normal((5, 2, 4, 6)).astype(np.float32),
            "seeds": rng.integers(0, 2**60, size=7).astype(np.int64),
            "flags": np.array([1, 0, 1], dtype=np.uint8),
            "weights": rng.standard_normal((3, 3)),
        }
        save_bundle(tmp_path / "bundle", arrays, {"note": "test", "iteration": 3})
        loaded, manifest = load_bundle(tmp_path / "bundle")
        assert manifest["note"] == "test"
        for k, v in arrays.items():
            assert loaded[k].shape == v.shape
            assert loaded[k].dtype == v.dtype
            assert np.array_equal(loaded[k], v)

    def test_deterministic_bytes(self, tmp_path):
        arr = {"a": np.arange(24, dtype=np.float32).reshape(2, 3, 4)}
        p1 = save_bundle(tmp_path / "x", arr, {"k": 1})
        b1 = p1.read_bytes()
        p2 = save_bundle(tmp_path / "y", arr, {"k": 1})
        assert p2.read_bytes() == b1

    def test_bad_magic_rejected(self, tmp_path):
        p = tmp_path / "bad.tnsr"
        p.write_bytes(b"\x00" * 64)
        from landassist.tensorio import TensorFormatError, read_block

        with pytest.raises(TensorFormatError):
            with open(p, "rb") as f:
                read_block(f)
