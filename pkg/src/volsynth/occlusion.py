"""Occlusion detection on depth maps.

The primary detector thresholds the Sobel gradient magnitude of the inverse
depth map: sharp inverse-depth changes mark boundaries that will disocclude
under viewpoint changes.  A geometric two-way-flow baseline (splat forward,
check backward consistency) and a conservative AND-fusion are provided for
comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .camera import Intrinsics, Pose, relative_pose, unproject_batch
from .errors import DimensionMismatch
from .volume import DepthMap, ViewTriplet

# Sobel kernels scaled by 1/8 so a unit step yields a central-difference-like
# response of step/2 in the two columns adjacent to the edge.
_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64) / 8.0
_SOBEL_Y = _SOBEL_X.T


@dataclass(frozen=True)
class GradientThreshold:
    """Threshold on the inverse-depth gradient magnitude (1/m per pixel)."""

    tau_d: float = 0.015

    def __post_init__(self):
        if self.tau_d <= 0:
            raise ValueError("tau_d must be positive")


@dataclass(frozen=True)
class MorphKernel:
    """Square structuring element of side 2*radius + 1."""

    radius: int = 1

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("radius must be >= 0")

    @property
    def footprint(self) -> np.ndarray:
        side = 2 * self.radius + 1
        return np.ones((side, side), dtype=bool)


@dataclass(frozen=True)
class OcclusionMap:
    mask: np.ndarray

    def __post_init__(self):
        m = np.ascontiguousarray(np.asarray(self.mask, dtype=bool))
        if m.ndim != 2:
            raise DimensionMismatch("occlusion mask must be 2-D")
        object.__setattr__(self, "mask", m)


def _fill_invalid(values: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Nearest-valid fill so invalid pixels do not contaminate the gradient
    of their valid neighbors."""
    if valid.all():
        return values.astype(np.float64)
    if not valid.any():
        return np.ones_like(values, dtype=np.float64)
    ind = ndimage.distance_transform_edt(~valid, return_indices=True, return_distances=False)
    return values.astype(np.float64)[tuple(ind)]


def depth_gradient_occlusion(depth: DepthMap, tau: GradientThreshold = GradientThreshold()) -> OcclusionMap:
    """Threshold the Sobel magnitude of the inverse depth map.

    Invalid depth pixels are always marked occluded; their values are
    nearest-filled before filtering so they do not leak into neighbors.
    """
    filled = _fill_invalid(depth.values, depth.valid.copy())
    inv = 1.0 / np.maximum(filled, 1e-9)
    gx = ndimage.correlate(inv, _SOBEL_X, mode="nearest")
    gy = ndimage.correlate(inv, _SOBEL_Y, mode="nearest")
    mag = np.sqrt(gx * gx + gy * gy)
    mask = (mag > tau.tau_d) | ~depth.valid
    return OcclusionMap(mask)


def _pad_apply(mask: np.ndarray, kernel: MorphKernel, op) -> np.ndarray:
    if kernel.radius == 0:
        return mask.copy()
    r = kernel.radius
    padded = np.pad(np.asarray(mask, dtype=bool), r, mode="edge")
    out = op(padded, structure=kernel.footprint)
    return out[r:-r, r:-r]


def morph_open(mask: np.ndarray, kernel: MorphKernel = MorphKernel()) -> np.ndarray:
    """Binary opening (erosion then dilation) with replicate borders."""
    eroded = _pad_apply(mask, kernel, ndimage.binary_erosion)
    return _pad_apply(eroded, kernel, ndimage.binary_dilation)


def morph_close(mask: np.ndarray, kernel: MorphKernel = MorphKernel()) -> np.ndarray:
    """Binary closing (dilation then erosion) with replicate borders."""
    dilated = _pad_apply(mask, kernel, ndimage.binary_dilation)
    return _pad_apply(dilated, kernel, ndimage.binary_erosion)


def flow_occlusion(src: ViewTriplet, dst_pose: Pose, dst_intr: Intrinsics,
                   consistency_eps: float = 1.0) -> OcclusionMap:
    """Two-way geometric flow baseline, synthesized from depth + pose.

    Valid src pixels are splatted into dst through their depth; dst pixels
    receiving no splat within ``consistency_eps`` pixels, failing the
    backward consistency check, or seeing surface outside the src image are
    marked occluded.
    """
    h, w = dst_intr.height, dst_intr.width
    rel = relative_pose(src.pose, dst_pose)

    vv, uu = np.mgrid[0 : src.intr.height, 0 : src.intr.width]
    valid = src.depth.valid.ravel()
    uv = np.stack([uu.ravel(), vv.ravel()], axis=1)[valid].astype(np.float64)
    d = src.depth.values.ravel()[valid].astype(np.float64)
    pts = rel.apply(unproject_batch(uv, d, src.intr))
    z = pts[:, 2]
    front = z > 1e-9
    zq = np.where(front, z, 1.0)
    uq = dst_intr.fx * pts[:, 0] / zq + dst_intr.cx
    vq = dst_intr.fy * pts[:, 1] / zq + dst_intr.cy
    iu = np.floor(uq + 0.5).astype(np.int64)
    iv = np.floor(vq + 0.5).astype(np.int64)
    inb = front & (iu >= 0) & (iu < w) & (iv >= 0) & (iv < h)

    zbuf = np.full((h, w), np.inf)
    flat = iv[inb] * w + iu[inb]
    np.minimum.at(zbuf.ravel(), flat, z[inb])
    received = np.isfinite(zbuf)

    # pixels without their own splat borrow the nearest splat depth within reach
    reach = max(1, int(round(consistency_eps)))
    zn = ndimage.grey_erosion(zbuf, size=(2 * reach + 1, 2 * reach + 1), mode="nearest")
    covered = np.isfinite(zn)
    occluded = ~covered

    # backward consistency at every covered pixel
    ys, xs = np.nonzero(covered)
    if ys.size:
        zd = np.where(received, zbuf, zn)[ys, xs]
        back = relative_pose(dst_pose, src.pose).apply(
            unproject_batch(np.stack([xs, ys], axis=1).astype(np.float64), zd, dst_intr)
        )
        zb = back[:, 2]
        okb = zb > 1e-9
        zbq = np.where(okb, zb, 1.0)
        ub = src.intr.fx * back[:, 0] / zbq + src.intr.cx
        vb = src.intr.fy * back[:, 1] / zbq + src.intr.cy
        in_src = okb & (ub >= -0.5) & (ub <= src.intr.width - 0.5) \
            & (vb >= -0.5) & (vb <= src.intr.height - 0.5)
        occluded[ys[~in_src], xs[~in_src]] = True

        idxu = np.clip(np.floor(ub + 0.5).astype(np.int64), 0, src.intr.width - 1)
        idxv = np.clip(np.floor(vb + 0.5).astype(np.int64), 0, src.intr.height - 1)
        d_src = src.depth.values[idxv, idxu].astype(np.float64)
        v_src = src.depth.valid[idxv, idxu]
        fwd = rel.apply(unproject_batch(np.stack([idxu, idxv], axis=1).astype(np.float64),
                                        d_src, src.intr))
        zf = fwd[:, 2]
        okf = zf > 1e-9
        zfq = np.where(okf, zf, 1.0)
        uf = dst_intr.fx * fwd[:, 0] / zfq + dst_intr.cx
        vf = dst_intr.fy * fwd[:, 1] / zfq + dst_intr.cy
        err = np.hypot(uf - xs, vf - ys)
        bad = in_src & (~v_src | ~okf | (err > consistency_eps))
        occluded[ys[bad], xs[bad]] = True
    return OcclusionMap(occluded)


def fuse_occlusion(a: OcclusionMap, b: OcclusionMap) -> OcclusionMap:
    """Conservative fusion: occluded only where both strategies agree."""
    if a.mask.shape != b.mask.shape:
        raise DimensionMismatch("occlusion maps differ in shape")
    return OcclusionMap(a.mask & b.mask)
