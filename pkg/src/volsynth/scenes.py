"""Synthetic scene oracle: analytic ground truth for depth, color and occupancy.

Scenes are a ground plane plus axis-aligned boxes (vertical walls compile to
thin boxes).  The world frame is the canonical input camera's frame: x right,
y down, z forward, camera at the origin, ground plane below the camera at
``y = ground_y``.  Surfaces carry a world-anchored procedural texture so the
same 3-D point renders to the same color from every viewpoint.
"""

from __future__ import annotations

import importlib.resources
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .camera import Intrinsics, Pose, pixel_ray_dirs
from .volume import DepthMap, ViewTriplet

_EPS = 1e-9
SKY_ID = -1
GROUND_ID = 0

_SKY_COLOR = np.array([0.65, 0.75, 0.92])


@dataclass(frozen=True)
class BoxSpec:
    center: tuple[float, float, float]
    size: tuple[float, float, float]
    albedo_seed: int = 0

    def __post_init__(self):
        if min(self.size) <= 0:
            raise ValueError("box sizes must be positive")


@dataclass(frozen=True)
class WallSpec:
    """Vertical wall: plane ``axis = offset`` spanning ``span`` along the other
    horizontal axis, rising from the ground up to ``top_y`` (y points down)."""

    axis: str
    offset: float
    span: tuple[float, float]
    top_y: float
    thickness: float = 0.3
    albedo_seed: int = 0

    def __post_init__(self):
        if self.axis not in ("x", "z"):
            raise ValueError("wall axis must be 'x' or 'z'")
        if self.thickness <= 0:
            raise ValueError("wall thickness must be positive")


@dataclass(frozen=True)
class SceneSpec:
    name: str = "scene"
    ground_y: float = 1.55
    sky_depth: float = 80.0
    texture_freq: float = 0.5
    boxes: tuple[BoxSpec, ...] = field(default_factory=tuple)
    walls: tuple[WallSpec, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "ground_y": self.ground_y,
            "sky_depth": self.sky_depth,
            "texture_freq": self.texture_freq,
            "boxes": [
                {"center": list(b.center), "size": list(b.size), "albedo_seed": b.albedo_seed}
                for b in self.boxes
            ],
            "walls": [
                {
                    "axis": w.axis,
                    "offset": w.offset,
                    "span": list(w.span),
                    "top_y": w.top_y,
                    "thickness": w.thickness,
                    "albedo_seed": w.albedo_seed,
                }
                for w in self.walls
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        return cls(
            name=d.get("name", "scene"),
            ground_y=float(d.get("ground_y", 1.55)),
            sky_depth=float(d.get("sky_depth", 80.0)),
            texture_freq=float(d.get("texture_freq", 0.5)),
            boxes=tuple(
                BoxSpec(tuple(b["center"]), tuple(b["size"]), int(b.get("albedo_seed", 0)))
                for b in d.get("boxes", [])
            ),
            walls=tuple(
                WallSpec(
                    w["axis"],
                    float(w["offset"]),
                    tuple(w["span"]),
                    float(w["top_y"]),
                    float(w.get("thickness", 0.3)),
                    int(w.get("albedo_seed", 0)),
                )
                for w in d.get("walls", [])
            ),
        )


def canonical_intrinsics(width: int = 640, height: int = 192, hfov_deg: float = 82.0) -> Intrinsics:
    """Driving-style test camera: 192x640, ~82 deg horizontal field of view."""
    f = (width / 2.0) / np.tan(np.radians(hfov_deg) / 2.0)
    return Intrinsics(fx=f, fy=f, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
                      width=width, height=height)


def _albedo(seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return 0.25 + 0.6 * rng.random(3)


class SceneOracle:
    """Compiled scene with analytic intersection and containment queries."""

    def __init__(self, spec: SceneSpec):
        self.spec = spec
        lo, hi, seeds = [], [], []
        for b in spec.boxes:
            c, s = np.asarray(b.center, dtype=np.float64), np.asarray(b.size, dtype=np.float64)
            lo.append(c - s / 2.0)
            hi.append(c + s / 2.0)
            seeds.append(b.albedo_seed)
        for w in spec.walls:
            if w.top_y >= spec.ground_y:
                raise ValueError("wall top must be above the ground (top_y < ground_y)")
            half = w.thickness / 2.0
            if w.axis == "x":
                lo.append(np.array([w.offset - half, w.top_y, min(w.span)]))
                hi.append(np.array([w.offset + half, spec.ground_y, max(w.span)]))
            else:
                lo.append(np.array([min(w.span), w.top_y, w.offset - half]))
                hi.append(np.array([max(w.span), spec.ground_y, w.offset + half]))
            seeds.append(w.albedo_seed)
        self._lo = np.array(lo).reshape(-1, 3)
        self._hi = np.array(hi).reshape(-1, 3)
        self._albedos = np.array([_albedo(s) for s in seeds]).reshape(-1, 3)
        self._ground_albedo = _albedo(10_007)

    # -- geometry ---------------------------------------------------------

    def cast(self, origins: np.ndarray, dirs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """First-intersection parameter and primitive id along each ray.

        Returns (s, prim_id); s is inf and prim_id SKY_ID where nothing is hit.
        Ground hits report GROUND_ID, box k reports k + 1.
        """
        o = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
        d = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
        n = o.shape[0]
        best = np.full(n, np.inf)
        pid = np.full(n, SKY_ID, dtype=np.int64)

        if np.isfinite(self.spec.ground_y):  # non-finite ground means no ground plane
            dy = d[:, 1]
            with np.errstate(divide="ignore", invalid="ignore"):
                sg = (self.spec.ground_y - o[:, 1]) / dy
            ok = (np.abs(dy) > _EPS) & (sg > _EPS)
            hit = ok & (sg < best)
            best[hit] = sg[hit]
            pid[hit] = GROUND_ID

        for k in range(self._lo.shape[0]):
            with np.errstate(divide="ignore", invalid="ignore"):
                t1 = (self._lo[k] - o) / d
                t2 = (self._hi[k] - o) / d
            tmin = np.nanmax(np.minimum(t1, t2), axis=1)
            tmax = np.nanmin(np.maximum(t1, t2), axis=1)
            entry = np.where(tmin > _EPS, tmin, np.where(tmax > _EPS, _EPS, np.inf))
            okb = (tmax >= np.maximum(tmin, _EPS)) & np.isfinite(entry)
            better = okb & (entry < best)
            best[better] = entry[better]
            pid[better] = k + 1
        return best, pid

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Ground-truth occupancy: below the ground plane or inside any box."""
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        occ = p[:, 1] >= self.spec.ground_y
        for k in range(self._lo.shape[0]):
            occ |= np.all((p >= self._lo[k]) & (p <= self._hi[k]), axis=1)
        return occ

    # -- ground-truth view synthesis ---------------------------------------

    def _camera_rays(self, intr: Intrinsics, pose: Pose):
        dirs_cam = pixel_ray_dirs(intr)
        r_wc = pose.rotation.T
        origins = np.broadcast_to(pose.camera_center(), dirs_cam.shape)
        return origins, dirs_cam @ r_wc.T

    def gt_depth(self, intr: Intrinsics, pose: Pose) -> DepthMap:
        """Exact per-pixel z-depth; sky pixels get the scene's sky depth."""
        origins, dirs = self._camera_rays(intr, pose)
        s, _ = self.cast(origins, dirs)
        depth = np.where(np.isfinite(s), s, self.spec.sky_depth)
        return DepthMap.dense(depth.reshape(intr.height, intr.width))

    def surface_color(self, points: np.ndarray, prim_ids: np.ndarray) -> np.ndarray:
        """World-anchored color of (N, 3) surface points on the given primitives."""
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        ids = np.asarray(prim_ids, dtype=np.int64).reshape(-1)
        f = 2.0 * np.pi * self.spec.texture_freq
        mod = (
            np.sin(f * (p[:, 0] + 0.13))
            * np.sin(f * (p[:, 1] + 0.37))
            * np.sin(f * (p[:, 2] + 0.71))
        )
        shade = 0.8 + 0.2 * mod
        base = np.empty((p.shape[0], 3))
        base[ids == SKY_ID] = _SKY_COLOR
        base[ids == GROUND_ID] = self._ground_albedo
        for k in range(self._lo.shape[0]):
            base[ids == k + 1] = self._albedos[k]
        out = base * shade[:, None]
        out[ids == SKY_ID] = _SKY_COLOR
        return np.clip(out, 0.0, 1.0)

    def gt_rgb(self, intr: Intrinsics, pose: Pose) -> np.ndarray:
        origins, dirs = self._camera_rays(intr, pose)
        s, pid = self.cast(origins, dirs)
        s = np.where(np.isfinite(s), s, self.spec.sky_depth)
        pts = origins + s[:, None] * dirs
        rgb = self.surface_color(pts, pid)
        return rgb.reshape(intr.height, intr.width, 3).astype(np.float32)

    def gt_view(self, intr: Intrinsics, pose: Pose) -> ViewTriplet:
        return ViewTriplet(self.gt_rgb(intr, pose), self.gt_depth(intr, pose), pose, intr)

    def gt_disocclusion(
        self, intr: Intrinsics, src_pose: Pose, dst_pose: Pose, tol: float = 0.01
    ) -> tuple[np.ndarray, np.ndarray]:
        """Which dst pixels show surface not visible from src.

        Returns (disoccluded, in_src_fov) masks over dst pixels.  A pixel is
        disoccluded when its surface point projects inside the src image but
        lies behind the src depth along that ray (beyond ``tol`` meters);
        pixels projecting outside the src image are reported via the second
        mask and not counted as geometric disocclusions.
        """
        origins, dirs = self._camera_rays(intr, dst_pose)
        s, _ = self.cast(origins, dirs)
        s = np.where(np.isfinite(s), s, self.spec.sky_depth)
        pts = origins + s[:, None] * dirs

        cam = src_pose.apply(pts)
        z = cam[:, 2]
        front = z > _EPS
        zz = np.where(front, z, 1.0)
        u = intr.fx * cam[:, 0] / zz + intr.cx
        v = intr.fy * cam[:, 1] / zz + intr.cy
        in_fov = front & (u >= -0.5) & (u <= intr.width - 0.5) & (v >= -0.5) & (v <= intr.height - 0.5)

        # analytic src depth along the exact continuous src ray
        dirs_cam = np.stack(
            [(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, np.ones_like(u)], axis=1
        )
        src_dirs = dirs_cam @ src_pose.rotation  # == R_wc @ dir per row
        src_org = np.broadcast_to(src_pose.camera_center(), src_dirs.shape)
        d_src, _ = self.cast(src_org, src_dirs)
        d_src = np.where(np.isfinite(d_src), d_src, self.spec.sky_depth)

        disocc = in_fov & (z > d_src + tol)
        shape = (intr.height, intr.width)
        return disocc.reshape(shape), in_fov.reshape(shape)


def load_scene(source) -> SceneOracle:
    """Load a scene from a JSON path, a bundled scene name, or a SceneSpec."""
    if isinstance(source, SceneOracle):
        return source
    if isinstance(source, SceneSpec):
        return SceneOracle(source)
    p = Path(source)
    if p.exists():
        with open(p, "r", encoding="utf-8") as f:
            return SceneOracle(SceneSpec.from_dict(json.load(f)))
    if str(source) in bundled_scene_names():
        ref = importlib.resources.files("volsynth") / "scene_specs" / f"{source}.json"
        return SceneOracle(SceneSpec.from_dict(json.loads(ref.read_text())))
    raise FileNotFoundError(f"no scene file or bundled scene named {source!r}")


def bundled_scene_names() -> list[str]:
    root = importlib.resources.files("volsynth") / "scene_specs"
    return sorted(r.name[: -len(".json")] for r in root.iterdir() if r.name.endswith(".json"))


def random_scene(seed: int, max_boxes: int = 3) -> SceneSpec:
    """Seeded scene with 1..max_boxes boxes on the canonical ground plane."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, max_boxes + 1))
    boxes = []
    for i in range(n):
        w = float(rng.uniform(0.8, 2.4))
        h = float(rng.uniform(1.8, 3.2))
        d = float(rng.uniform(0.8, 2.2))
        cx = float(rng.uniform(-3.0, 3.0))
        cz = float(rng.uniform(6.0, 16.0))
        cy = 1.55 - h / 2.0
        boxes.append(BoxSpec((cx, cy, cz), (w, h, d), albedo_seed=int(rng.integers(0, 1 << 30))))
    return SceneSpec(name=f"random_{seed}", boxes=tuple(boxes))
