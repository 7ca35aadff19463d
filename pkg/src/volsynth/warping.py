"""Forward-backward warping for view-completion training data.

An input view is rendered into a random virtual pose and back; regions that
were occluded in the virtual view come back corrupted, detected by comparing
round-trip depth against the original (a lower reprojected depth means the
pixel was occluded).  Masked regions are filled with seeded noise to form a
corrupted/target training pair for an external inpainting model.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .camera import Pose, rotation_y
from .errors import DimensionMismatch
from .fileio import read_image, read_json, read_mask, read_pfm, write_image, write_json, write_mask, write_pfm
from .occlusion import MorphKernel, morph_close
from .rendering import RaySampling, SurfaceThreshold, render_view
from .volume import DepthMap, PseudoVolume, ViewTriplet


@dataclass(frozen=True)
class WarpPoseSampler:
    """Uniform virtual-pose distribution around an input camera.

    Translations are in the input camera's frame (x right, y down, z forward),
    yaw about the vertical (y) axis.  Defaults follow the lateral/orbit
    magnitudes used by the pose-sampling strategies.
    """

    tx: tuple[float, float] = (-3.0, 3.0)
    ty: tuple[float, float] = (-0.5, 0.5)
    tz: tuple[float, float] = (-1.0, 2.0)
    yaw_deg: tuple[float, float] = (-10.0, 10.0)
    seed: int = 0

    def draw(self, input_pose: Pose) -> Pose:
        """The pose for this sampler's seed (one pair per sampler instance)."""
        rng = np.random.default_rng(self.seed)
        t = np.array([
            rng.uniform(*self.tx), rng.uniform(*self.ty), rng.uniform(*self.tz)
        ])
        yaw = np.radians(rng.uniform(*self.yaw_deg))
        input_from_new = Pose(rotation_y(yaw), t)
        return input_from_new.inverse() @ input_pose


@dataclass(frozen=True)
class CompletionPair:
    """Corrupted/target training pair for the view-completion model."""

    corrupted_rgb: np.ndarray
    corrupted_depth: DepthMap
    inpaint_mask: np.ndarray
    target_rgb: np.ndarray
    novel_pose: Pose
    pose_seed: int
    noise_seed: int
    embedding_stub: bytes = b""


def backward_occlusion_mask(orig_depth: DepthMap, roundtrip_depth: DepthMap,
                            eps: float = 0.05) -> np.ndarray:
    """Pixels whose round-trip depth came back closer than the original.

    True where ``roundtrip < orig - eps`` or where the round trip is invalid.
    """
    if orig_depth.shape != roundtrip_depth.shape:
        raise DimensionMismatch("depth maps differ in shape")
    closer = roundtrip_depth.values.astype(np.float64) < orig_depth.values.astype(np.float64) - eps
    return (closer & roundtrip_depth.valid) | ~roundtrip_depth.valid


def forward_backward_warp(input_view: ViewTriplet, novel_pose: Pose,
                          cfg: RaySampling = RaySampling(),
                          tau: SurfaceThreshold = SurfaceThreshold(),
                          threads: int = 1) -> tuple[np.ndarray, DepthMap]:
    """Render the input into the novel pose, then render that back.

    Both legs use the full rendering formulation on single-view volumes; the
    returned (rgb, depth) live in the input camera.
    """
    vol1 = PseudoVolume((input_view,))
    nv = render_view(vol1, input_view.intr, novel_pose, cfg, tau, threads=threads)
    virtual = ViewTriplet(nv.rgb, nv.depth, novel_pose, input_view.intr)
    vol2 = PseudoVolume((virtual,))
    back = render_view(vol2, input_view.intr, input_view.pose, cfg, tau, threads=threads)
    return back.rgb, back.depth


def make_training_pair(input_view: ViewTriplet, sampler: WarpPoseSampler,
                       noise_seed: int, kernel: MorphKernel = MorphKernel(),
                       cfg: RaySampling = RaySampling(),
                       tau: SurfaceThreshold = SurfaceThreshold(),
                       eps: float = 0.05, threads: int = 1) -> CompletionPair:
    """One corrupted/target pair; byte-deterministic given (sampler.seed, noise_seed)."""
    novel_pose = sampler.draw(input_view.pose)
    rt_rgb, rt_depth = forward_backward_warp(input_view, novel_pose, cfg, tau, threads=threads)
    raw_mask = backward_occlusion_mask(input_view.depth, rt_depth, eps)
    mask = morph_close(raw_mask, kernel)

    rng = np.random.default_rng(noise_seed)
    noise_rgb = rng.random((*mask.shape, 3)).astype(np.float32)
    noise_depth = rng.uniform(cfg.near, cfg.far, mask.shape).astype(np.float32)
    corrupted_rgb = np.where(mask[..., None], noise_rgb, rt_rgb)
    corrupted_depth = DepthMap(
        np.where(mask, noise_depth, rt_depth.values),
        np.ones(mask.shape, dtype=bool),
    )
    return CompletionPair(
        corrupted_rgb=corrupted_rgb,
        corrupted_depth=corrupted_depth,
        inpaint_mask=mask,
        target_rgb=input_view.image.copy(),
        novel_pose=novel_pose,
        pose_seed=sampler.seed,
        noise_seed=noise_seed,
    )


def save_pair(out_dir, pair: CompletionPair, intr) -> None:
    """Dataset contract: corrupted.png, corrupted_depth.pfm, mask.png,
    target.png, meta.json {pose, seeds, intrinsics}."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_image(out / "corrupted.png", pair.corrupted_rgb)
    write_pfm(out / "corrupted_depth.pfm", pair.corrupted_depth.values)
    write_mask(out / "mask.png", pair.inpaint_mask)
    write_image(out / "target.png", pair.target_rgb)
    write_json(out / "meta.json", {
        "pose": pair.novel_pose.to_dict(),
        "seeds": {"pose": pair.pose_seed, "noise": pair.noise_seed},
        "intrinsics": intr.to_dict(),
    })


def load_pair(in_dir) -> dict:
    d = Path(in_dir)
    return {
        "corrupted_rgb": read_image(d / "corrupted.png"),
        "corrupted_depth": read_pfm(d / "corrupted_depth.pfm"),
        "mask": read_mask(d / "mask.png"),
        "target_rgb": read_image(d / "target.png"),
        "meta": read_json(d / "meta.json"),
    }


def pair_seeds(base_seed: int, index: int) -> tuple[int, int]:
    """Stable (pose_seed, noise_seed) derivation for the i-th pair of a run."""
    ss = np.random.SeedSequence([int(base_seed), int(index)])
    a, b = ss.generate_state(2)
    return int(a), int(b)
