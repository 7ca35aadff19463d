"""Pinhole camera math: projection, unprojection, poses, and reprojection.

Conventions used everywhere in the package:

* Camera frame: x right, y down, z forward (the optical axis).  Depth is the
  z coordinate of a camera-frame point ("z-depth", not ray length).
* Pixels: u along the width, v along the height, origin at the top-left,
  pixel centers at integer coordinates.
* Poses are stored camera-from-world.  The relative pose mapping camera i's
  frame into camera j's frame is ``pose_j @ pose_i.inverse()``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import BehindCamera, NonPositiveDepth

_DEPTH_EPS = 1e-9
_ORTHO_TOL = 1e-9


class Pixel(NamedTuple):
    u: float
    v: float


class Point3(NamedTuple):
    x: float
    y: float
    z: float


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def scaled(self, factor: float) -> "Intrinsics":
        """Intrinsics of the same camera resampled at ``size * factor``.

        Pixel centers are kept aligned, i.e. full-image coordinate
        ``u = (u_s + 0.5) / factor - 0.5`` for scaled coordinate ``u_s``.
        """
        w = int(round(self.width * factor))
        h = int(round(self.height * factor))
        return Intrinsics(
            fx=self.fx * factor,
            fy=self.fy * factor,
            cx=(self.cx + 0.5) * factor - 0.5,
            cy=(self.cy + 0.5) * factor - 0.5,
            width=w,
            height=h,
        )

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Intrinsics":
        return cls(
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            width=int(d["width"]),
            height=int(d["height"]),
        )


@dataclass(frozen=True)
class Pose:
    """Rigid transform stored as camera-from-world (R @ x_world + t)."""

    rotation: np.ndarray
    translation: np.ndarray
    _skip_checks: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)
        if not self._skip_checks:
            if not np.allclose(r.T @ r, np.eye(3), atol=_ORTHO_TOL):
                raise ValueError("rotation is not orthonormal")
            if abs(np.linalg.det(r) - 1.0) > _ORTHO_TOL:
                raise ValueError("rotation determinant must be +1")

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3), _skip_checks=True)

    def compose(self, other: "Pose") -> "Pose":
        """self applied after other: (self ∘ other)(x) = self(other(x))."""
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
            _skip_checks=True,
        )

    def __matmul__(self, other: "Pose") -> "Pose":
        return self.compose(other)

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation, _skip_checks=True)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one (3,) point or an (N, 3) batch."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def camera_center(self) -> np.ndarray:
        """Camera origin expressed in the world frame."""
        return -(self.rotation.T @ self.translation)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def to_dict(self) -> dict:
        return {"camera_from_world": self.matrix().tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Pose":
        m = np.asarray(d["camera_from_world"], dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError("camera_from_world must be a 4x4 matrix")
        return cls(m[:3, :3], m[:3, 3])


def relative_pose(pose_src: Pose, pose_dst: Pose) -> Pose:
    """Transform mapping src-camera coordinates into dst-camera coordinates."""
    return pose_dst.compose(pose_src.inverse())


def rotation_y(angle_rad: float) -> np.ndarray:
    """Rotation about the camera/world y axis (the vertical axis; y points down)."""
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def project(point, intr: Intrinsics) -> tuple[Pixel, float]:
    """Project a camera-frame point to a pixel; returns (pixel, z-depth).

    Raises NonPositiveDepth when the point is at or behind the image plane.
    """
    x, y, z = (float(c) for c in point)
    if z <= _DEPTH_EPS:
        raise NonPositiveDepth(f"cannot project point with z={z}")
    return Pixel(intr.fx * x / z + intr.cx, intr.fy * y / z + intr.cy), z


def unproject(pixel, depth: float, intr: Intrinsics) -> Point3:
    """Lift a pixel at the given z-depth back to a camera-frame point."""
    depth = float(depth)
    if depth <= _DEPTH_EPS:
        raise NonPositiveDepth(f"cannot unproject depth {depth}")
    u, v = (float(c) for c in pixel)
    return Point3((u - intr.cx) / intr.fx * depth, (v - intr.cy) / intr.fy * depth, depth)


def reproject(pixel, depth: float, rel_pose: Pose, intr: Intrinsics) -> tuple[Pixel, float]:
    """Map a pixel+depth through a relative pose into another view of the same intrinsics.

    Raises BehindCamera when the transformed point has non-positive depth.
    """
    p = unproject(pixel, depth, intr)
    q = rel_pose.apply(np.array(p))
    if q[2] <= _DEPTH_EPS:
        raise BehindCamera(f"reprojected point has z={q[2]}")
    return project(q, intr)


def project_batch(points: np.ndarray, intr: Intrinsics) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized projection of (N, 3) camera-frame points.

    Returns (uv (N, 2), z (N,), in_front (N,)); uv rows with ``~in_front`` are
    unusable and set to nan.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    z = pts[:, 2]
    ok = z > _DEPTH_EPS
    uv = np.full((pts.shape[0], 2), np.nan)
    zz = np.where(ok, z, 1.0)
    uv[:, 0] = np.where(ok, intr.fx * pts[:, 0] / zz + intr.cx, np.nan)
    uv[:, 1] = np.where(ok, intr.fy * pts[:, 1] / zz + intr.cy, np.nan)
    return uv, z, ok


def unproject_batch(uv: np.ndarray, depth: np.ndarray, intr: Intrinsics) -> np.ndarray:
    """Vectorized unprojection; uv (N, 2), depth (N,) -> (N, 3) camera-frame points."""
    uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    d = np.asarray(depth, dtype=np.float64).reshape(-1)
    out = np.empty((uv.shape[0], 3))
    out[:, 0] = (uv[:, 0] - intr.cx) / intr.fx * d
    out[:, 1] = (uv[:, 1] - intr.cy) / intr.fy * d
    out[:, 2] = d
    return out


def pixel_ray_dirs(intr: Intrinsics, uv: np.ndarray | None = None) -> np.ndarray:
    """Camera-frame ray directions with unit z component.

    With ``uv=None``, directions for every pixel center are returned as an
    (H*W, 3) array in row-major pixel order.  Marching along these directions
    with parameter t gives camera-frame points of z-depth exactly t.
    """
    if uv is None:
        vv, uu = np.mgrid[0 : intr.height, 0 : intr.width]
        uv = np.stack([uu.ravel(), vv.ravel()], axis=1).astype(np.float64)
    else:
        uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    d = np.empty((uv.shape[0], 3))
    d[:, 0] = (uv[:, 0] - intr.cx) / intr.fx
    d[:, 1] = (uv[:, 1] - intr.cy) / intr.fy
    d[:, 2] = 1.0
    return d
