"""Pseudo-occupancy volume over a set of view/depth/pose triplets.

A point is Empty if any view whose frustum contains it sees it in front of
that view's depth; Occupied if it lies strictly behind the depth of every
view whose frustum contains it (and at least one does); Unknown if no
frustum contains it.  Views whose sampled depth pixel is invalid abstain.
The Unknown state collapses to a binary value through ``unknown_policy``
(default: occupied — unseen space is not declared free).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from . import backend
from .camera import Intrinsics, Pose, project_batch
from .errors import DimensionMismatch, InvalidDepthPixel

DEPTH_NEAREST = "nearest"
DEPTH_BILINEAR_MIN = "bilinear_min"
_SAMPLING_CODES = {DEPTH_NEAREST: 0, DEPTH_BILINEAR_MIN: 1}

POLICY_OCCUPIED = "occupied"
POLICY_EMPTY = "empty"


class OccState(enum.IntEnum):
    EMPTY = 0
    OCCUPIED = 1
    UNKNOWN = 2


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel z-depths in meters with a validity mask.

    ``values`` is float32 (the on-disk precision); invalid entries carry an
    arbitrary positive placeholder and must never be read through ``valid``.
    """

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.values, dtype=np.float32))
        m = np.ascontiguousarray(np.asarray(self.valid, dtype=bool))
        if v.ndim != 2 or m.shape != v.shape:
            raise DimensionMismatch("depth values and valid mask must be equal 2-D shapes")
        if np.any(m & ~((v > 0) & np.isfinite(v))):
            raise ValueError("valid depth entries must be finite and positive")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "valid", m)

    @classmethod
    def dense(cls, values: np.ndarray) -> "DepthMap":
        values = np.asarray(values, dtype=np.float32)
        return cls(values, np.ones(values.shape, dtype=bool))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class ViewTriplet:
    """One (image, depth, pose) element of the active view set."""

    image: np.ndarray  # H x W x 3 float32 in [0, 1]
    depth: DepthMap
    pose: Pose
    intr: Intrinsics

    def __post_init__(self):
        img = np.ascontiguousarray(np.asarray(self.image, dtype=np.float32))
        if img.ndim != 3 or img.shape[2] != 3:
            raise DimensionMismatch("image must be H x W x 3")
        h, w = img.shape[:2]
        if self.depth.shape != (h, w):
            raise DimensionMismatch("image and depth dimensions disagree")
        if (self.intr.height, self.intr.width) != (h, w):
            raise DimensionMismatch("intrinsics and image dimensions disagree")
        object.__setattr__(self, "image", img)


class ViewPack:
    """Flattened per-view arrays consumed by the occupancy/ray-march kernels."""

    def __init__(self, views: list[ViewTriplet]):
        n = len(views)
        self.rot = np.ascontiguousarray(
            np.stack([v.pose.rotation for v in views]), dtype=np.float64
        )
        self.trans = np.ascontiguousarray(
            np.stack([v.pose.translation for v in views]), dtype=np.float64
        )
        self.fx = np.array([v.intr.fx for v in views], dtype=np.float64)
        self.fy = np.array([v.intr.fy for v in views], dtype=np.float64)
        self.cx = np.array([v.intr.cx for v in views], dtype=np.float64)
        self.cy = np.array([v.intr.cy for v in views], dtype=np.float64)
        self.width = np.array([v.intr.width for v in views], dtype=np.int64)
        self.height = np.array([v.intr.height for v in views], dtype=np.int64)
        offsets = np.zeros(n + 1, dtype=np.int64)
        for i, v in enumerate(views):
            offsets[i + 1] = offsets[i] + v.depth.values.size
        self.offsets = offsets
        self.depth = np.concatenate([v.depth.values.ravel() for v in views]).astype(np.float32)
        self.valid = np.concatenate(
            [v.depth.valid.ravel() for v in views]
        ).astype(np.uint8)


@dataclass(frozen=True)
class PseudoVolume:
    """Immutable snapshot of the active view set; occupancy queries are pure."""

    views: tuple[ViewTriplet, ...]
    unknown_policy: str = POLICY_OCCUPIED
    depth_sampling: str = DEPTH_NEAREST

    def __post_init__(self):
        views = tuple(self.views)
        if not views:
            raise ValueError("a pseudo-volume needs at least one view")
        if self.unknown_policy not in (POLICY_OCCUPIED, POLICY_EMPTY):
            raise ValueError(f"unknown_policy must be occupied|empty, got {self.unknown_policy}")
        if self.depth_sampling not in _SAMPLING_CODES:
            raise ValueError(f"depth_sampling must be nearest|bilinear_min, got {self.depth_sampling}")
        object.__setattr__(self, "views", views)

    @cached_property
    def pack(self) -> ViewPack:
        return ViewPack(list(self.views))

    @property
    def sampling_code(self) -> int:
        return _SAMPLING_CODES[self.depth_sampling]

    @property
    def unknown_is_occupied(self) -> bool:
        return self.unknown_policy == POLICY_OCCUPIED

    def add_view(self, triplet: ViewTriplet) -> "PseudoVolume":
        """New snapshot with the triplet appended; self is unmodified."""
        if not isinstance(triplet, ViewTriplet):
            raise DimensionMismatch("add_view expects a ViewTriplet")
        return replace(self, views=self.views + (triplet,))

    def states(self, points: np.ndarray) -> np.ndarray:
        """OccState codes for an (N, 3) batch of world points."""
        pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        return backend.occupancy_states(pts, self.pack, self.sampling_code)

    def state(self, point) -> OccState:
        return OccState(int(self.states(np.asarray(point, dtype=np.float64).reshape(1, 3))[0]))

    def occupied(self, points: np.ndarray) -> np.ndarray:
        """Binary occupancy for an (N, 3) batch, with Unknown collapsed by policy."""
        s = self.states(points)
        if self.unknown_is_occupied:
            return s != OccState.EMPTY
        return s == OccState.OCCUPIED


def sample_view_depth(view: ViewTriplet, u: float, v: float, mode: str = DEPTH_NEAREST):
    """Sample a view's depth map at a continuous pixel; returns (depth, valid)."""
    values, valid = view.depth.values, view.depth.valid
    h, w = values.shape
    if mode == DEPTH_NEAREST:
        iu = min(max(int(np.floor(u + 0.5)), 0), w - 1)
        iv = min(max(int(np.floor(v + 0.5)), 0), h - 1)
        return float(values[iv, iu]), bool(valid[iv, iu])
    iu0 = min(max(int(np.floor(u)), 0), w - 1)
    iv0 = min(max(int(np.floor(v)), 0), h - 1)
    iu1 = min(iu0 + 1, w - 1)
    iv1 = min(iv0 + 1, h - 1)
    best = np.inf
    ok = False
    for jj, ii in ((iv0, iu0), (iv0, iu1), (iv1, iu0), (iv1, iu1)):
        if valid[jj, ii]:
            ok = True
            best = min(best, float(values[jj, ii]))
    return (best if ok else 0.0), ok


def inside_frustum(view: ViewTriplet, point) -> bool:
    """True iff the world point is in front of the camera and projects into the
    pixel grid (with a half-pixel margin at the borders)."""
    p = view.pose.apply(np.asarray(point, dtype=np.float64))
    uv, z, ok = project_batch(p.reshape(1, 3), view.intr)
    if not ok[0]:
        return False
    u, v = uv[0]
    return (-0.5 <= u <= view.intr.width - 0.5) and (-0.5 <= v <= view.intr.height - 0.5)


def behind_depth(view: ViewTriplet, point, mode: str = DEPTH_NEAREST) -> bool:
    """True iff the point lies strictly behind the view's depth at its projection.

    Raises InvalidDepthPixel when the sampled depth pixel is flagged invalid.
    Callers must ensure the point is inside the frustum first.
    """
    p = view.pose.apply(np.asarray(point, dtype=np.float64))
    uv, z, _ = project_batch(p.reshape(1, 3), view.intr)
    d, valid = sample_view_depth(view, uv[0, 0], uv[0, 1], mode)
    if not valid:
        raise InvalidDepthPixel(f"depth invalid at pixel ({uv[0, 0]:.1f}, {uv[0, 1]:.1f})")
    return float(z[0]) > d


def occupancy(vol: PseudoVolume, point) -> OccState:
    """Occupancy state of one world point (see module docstring for semantics)."""
    return vol.state(point)
