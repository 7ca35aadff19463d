"""First-hit rendering: sampling patterns, color aggregation, full views.

Analytic oracles: a fronto-parallel plane at depth d intersects every pixel
ray at z-depth exactly d; disocclusion ground truth comes from the scene
oracle's visibility test.
"""

import numpy as np
import pytest

from volsynth.camera import Intrinsics, Pose
from volsynth.rendering import (
    RaySampling,
    SurfaceThreshold,
    aggregate_color,
    render_pixel,
    render_view,
    sample_ray,
)
from volsynth.scenes import canonical_intrinsics, load_scene
from volsynth.volume import DepthMap, PseudoVolume, ViewTriplet

INTR = canonical_intrinsics(width=160, height=48)


def plane_view(depth, intr=INTR, pose=None, color=(0.5, 0.5, 0.5)):
    img = np.broadcast_to(np.asarray(color, np.float32), (intr.height, intr.width, 3)).copy()
    dm = DepthMap.dense(np.full((intr.height, intr.width), depth, dtype=np.float32))
    return ViewTriplet(img, dm, pose or Pose.identity(), intr)


def psnr(a, b, mask):
    mse = float(((a[mask] - b[mask]) ** 2).mean())
    return np.inf if mse == 0 else 10 * np.log10(1.0 / mse)


class TestSampleRay:
    def test_single_coarse_sample_at_center(self):
        cfg = RaySampling(n_coarse=1, n_fine=0, n_surface=0, near=1.0, far=2.0)
        ts = sample_ray((0, 0, 0), (0, 0, 1), cfg)
        assert ts.shape == (1,)
        assert ts[0] == pytest.approx(1.5, abs=1e-12)

    def test_surface_samples_within_two_sigma(self):
        cfg = RaySampling(n_coarse=4, n_fine=0, n_surface=16, surface_sigma=2.0,
                          near=3.0, far=80.0)
        ts = sample_ray((0, 0, 0), (0, 0, 1), cfg, est_depth=10.0)
        surface = ts[(ts >= 6.0) & (ts <= 14.0)]
        assert surface.size >= 16

    def test_sorted_strictly_increasing(self):
        rng = np.random.default_rng(0)
        cfg = RaySampling(n_coarse=32, n_fine=0, n_surface=8, near=2.0, far=40.0)
        for _ in range(1000):
            d = rng.normal(size=3)
            d /= np.linalg.norm(d)
            ts = sample_ray((0, 0, 0), d, cfg, est_depth=float(rng.uniform(3, 35)))
            assert np.all(np.diff(ts) > 0)

    def test_fine_samples_around_first_transition(self):
        cfg = RaySampling(n_coarse=8, n_fine=4, n_surface=0, near=0.0 + 1.0, far=9.0)
        ts = sample_ray((0, 0, 0), (0, 0, 1), cfg, occupancy_fn=lambda t: t > 5.0)
        coarse = 1.0 + (np.arange(8) + 0.5) / 8 * 8.0  # 1.5, 2.5, ..., 8.5
        k = int(np.argmax(coarse > 5.0))
        lo, hi = coarse[k - 1], coarse[k]
        fine = ts[(ts > lo) & (ts < hi)]
        assert fine.size >= 4

    def test_rejects_non_unit_direction(self):
        with pytest.raises(ValueError):
            sample_ray((0, 0, 0), (0, 0, 2.0), RaySampling())


class TestAggregateColor:
    def test_point_on_single_surface(self):
        view = plane_view(10.0, color=(0.8, 0.2, 0.1))
        vol = PseudoVolume((view,))
        rgb, valid = aggregate_color(vol, (0.0, 0.0, 10.0), SurfaceThreshold())
        assert valid
        assert np.allclose(rgb, (0.8, 0.2, 0.1), atol=1e-6)

    def test_mean_of_two_views(self):
        v1 = plane_view(10.0, color=(1.0, 0.0, 0.0))
        v2 = plane_view(10.0, color=(0.0, 1.0, 0.0),
                        pose=Pose(np.eye(3), np.array([0.05, 0.0, 0.0])))
        vol = PseudoVolume((v1, v2))
        rgb, valid = aggregate_color(vol, (0.0, 0.0, 10.0), SurfaceThreshold())
        assert valid
        assert np.allclose(rgb, (0.5, 0.5, 0.0), atol=1e-6)

    def test_far_from_surface_invalid(self):
        vol = PseudoVolume((plane_view(10.0),))
        rgb, valid = aggregate_color(vol, (0.0, 0.0, 11.0), SurfaceThreshold(0.25))
        assert not valid
        assert np.allclose(rgb, 0.0)


class TestRenderPixel:
    def test_flat_plane_on_axis(self):
        vol = PseudoVolume((plane_view(10.0),))
        rgb, depth, occ, hit, cvalid = render_pixel(
            vol, (0, 0, 0), (0, 0, 1), RaySampling(), SurfaceThreshold()
        )
        assert hit and cvalid
        assert depth == pytest.approx(10.0, abs=1e-2)

    def test_sky_ray_no_hit(self):
        cfg = RaySampling()
        vol = PseudoVolume((plane_view(cfg.far),))  # "sky": depth equals far
        rgb, depth, occ, hit, cvalid = render_pixel(vol, (0, 0, 0), (0, 0, 1), cfg,
                                                    SurfaceThreshold())
        assert not hit and not occ and not cvalid

    def test_frustum_exit_is_unknown_hit(self):
        # ray leaving the single view's frustum sideways: terminates at the
        # frustum wall under the occupied-unknown policy, flagged occluded
        view = plane_view(60.0)
        vol = PseudoVolume((view,))
        edge_u = INTR.width - 0.5
        dx = (edge_u - INTR.cx) / INTR.fx
        d = np.array([dx * 1.3, 0.0, 1.0])  # exits around z = edge/1.3
        rgb, depth, occ, hit, cvalid = render_pixel(vol, (0, 0, 0), d, RaySampling(),
                                                    SurfaceThreshold())
        assert hit and occ and not cvalid
        # analytic frustum-exit depth: dx*1.3*z = dx*z + hp  ->  exit where
        # u(z) crosses the half-pixel margin
        z_exit = edge_u / (dx * 1.3) * dx / INTR.fx * INTR.fx  # = edge_u/(fx*dx*1.3)*fx... keep numeric
        z_exit = (edge_u - INTR.cx) / (INTR.fx * dx * 1.3) * 1.0 * INTR.fx / INTR.fx
        z_exit = (edge_u - INTR.cx) / (dx * 1.3) / INTR.fx * INTR.fx
        # u(z) = fx*(dx*1.3) + cx is constant in z for a linear ray through the
        # origin, so the exit actually happens at the near bound of marching:
        # direction itself is outside the frustum cone -> first sample unknown
        assert depth == pytest.approx(RaySampling().near, abs=0.9)

    def test_empty_policy_passes_through_unknown(self):
        view = plane_view(60.0)
        vol = PseudoVolume((view,), unknown_policy="empty")
        dx = ((INTR.width - 0.5) - INTR.cx) / INTR.fx
        d = np.array([dx * 1.3, 0.0, 1.0])
        rgb, depth, occ, hit, cvalid = render_pixel(vol, (0, 0, 0), d, RaySampling(),
                                                    SurfaceThreshold())
        assert not hit


class TestRenderView:
    def test_self_rerender_fidelity(self):
        scene = load_scene("box_on_plane")
        view = scene.gt_view(INTR, Pose.identity())
        vol = PseudoVolume((view,))
        rv = render_view(vol, INTR, Pose.identity())
        hit = rv.hit_mask
        gt = view.depth.values.astype(np.float64)
        rel = np.abs(rv.depth.values[hit] - gt[hit]) / gt[hit]
        assert rel.mean() < 0.01
        assert psnr(rv.rgb, view.image, hit & rv.color_valid) > 35.0

    def test_flat_scene_shift_no_occlusion(self):
        scene = load_scene("flat")
        view = scene.gt_view(INTR, Pose.identity())
        vol = PseudoVolume((view,))
        pose = Pose(np.eye(3), np.array([-1.0, 0.0, 0.0]))
        rv = render_view(vol, INTR, pose)
        assert not rv.occlusion[rv.hit_mask & ~_fov_exit_band(rv)].any()

    def test_box_scene_occlusion_matches_oracle(self):
        scene = load_scene("box_on_plane")
        view = scene.gt_view(INTR, Pose.identity())
        vol = PseudoVolume((view,))
        dst = Pose(np.eye(3), np.array([-2.0, 0.0, 0.0]))
        rv = render_view(vol, INTR, dst)
        gt_disocc, in_fov = scene.gt_disocclusion(INTR, Pose.identity(), dst)
        # compare over real surface hits: rays stopped by the unknown wall
        # around the input frustum are occluded by policy, not by geometry
        domain = rv.surface_mask & in_fov
        got = rv.occlusion & domain
        want = gt_disocc & domain
        inter = (got & want).sum()
        union = (got | want).sum()
        assert union > 0
        assert inter / union > 0.7

    def test_rgb_in_unit_range_and_validity_complement(self):
        scene = load_scene("occluder_pair")
        view = scene.gt_view(INTR, Pose.identity())
        vol = PseudoVolume((view,))
        rv = render_view(vol, INTR, Pose(np.eye(3), np.array([-1.5, 0.0, 0.2])))
        assert rv.rgb.min() >= 0.0 and rv.rgb.max() <= 1.0
        defined = rv.hit_mask & rv.color_valid
        assert np.array_equal(rv.depth.valid, rv.hit_mask)
        # invalid pixels are exactly the complement of hit & color_valid
        assert not np.any(rv.rgb[~defined & ~rv.hit_mask] != 0)

    def test_depth_monotone_under_added_views(self):
        scene = load_scene("box_on_plane")
        a = scene.gt_view(INTR, Pose.identity())
        side_pose = Pose(np.eye(3), np.array([-2.0, 0.0, 0.0]))
        b = scene.gt_view(INTR, side_pose)
        vol1 = PseudoVolume((a,))
        vol2 = vol1.add_view(b)
        probe = Pose(np.eye(3), np.array([-1.0, 0.0, 0.0]))
        rv1 = render_view(vol1, INTR, probe)
        rv2 = render_view(vol2, INTR, probe)
        both = rv1.hit_mask & rv2.hit_mask
        assert np.all(rv2.depth.values[both] >= rv1.depth.values[both] - 5e-3)
        # and no new hits may appear when occupancy shrinks
        assert not np.any(~rv1.hit_mask & rv2.hit_mask)

    def test_bisection_accuracy_plane(self):
        for n_coarse in (8, 16, 48):
            cfg = RaySampling(n_coarse=n_coarse, n_fine=0, n_surface=0)
            vol = PseudoVolume((plane_view(13.37),))
            rv = render_view(vol, INTR, Pose.identity(), cfg)
            hit = rv.hit_mask
            err = np.abs(rv.depth.values[hit] - 13.37)
            assert err.max() < 2.0 * (cfg.far - cfg.near) / n_coarse
            # bisection tightens far beyond the sampling stride
            assert err.max() < 2e-3

    def test_threads_do_not_change_output(self):
        scene = load_scene("parked_row")
        view = scene.gt_view(INTR, Pose.identity())
        vol = PseudoVolume((view,))
        pose = Pose(np.eye(3), np.array([-1.0, 0.0, 0.0]))
        rv1 = render_view(vol, INTR, pose, threads=1)
        rv4 = render_view(vol, INTR, pose, threads=4)
        assert np.array_equal(rv1.depth.values, rv4.depth.values)
        assert np.array_equal(rv1.rgb, rv4.rgb)
        assert np.array_equal(rv1.occlusion, rv4.occlusion)

    def test_jitter_deterministic_per_seed(self):
        vol = PseudoVolume((plane_view(9.5),))
        cfg = RaySampling(jitter=True, jitter_seed=42)
        rv1 = render_view(vol, INTR, Pose.identity(), cfg)
        rv2 = render_view(vol, INTR, Pose.identity(), cfg)
        assert np.array_equal(rv1.depth.values, rv2.depth.values)


def _fov_exit_band(rv):
    # pixels terminated by leaving the frustum (unknown) — occluded by design
    return rv.occlusion & ~rv.color_valid
