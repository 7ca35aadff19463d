"""Novel-view rendering from a pseudo-occupancy volume.

Binary occupancy makes the volume-rendering integral degenerate: a ray
contributes exactly at the first point where it enters occupancy, so the
renderer walks stratified samples to find the first terminating one and
refines that boundary by bisection (<= 20 iterations, 1e-3 m tolerance).
Color has no 3-D definition and is averaged from all member views whose
depth surface passes within ``tau_s`` of the termination point.

Rays are parameterized by z-depth in the render camera's frame: marching
direction vectors have unit z, so the ray parameter is directly the value
stored in the output depth map.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import backend
from .camera import Intrinsics, Pose, pixel_ray_dirs
from .errors import DimensionMismatch
from .occlusion import GradientThreshold, MorphKernel, depth_gradient_occlusion, morph_close, morph_open
from .volume import DepthMap, PseudoVolume

HIT_NONE = 0
HIT_OCCUPIED = 1
HIT_UNKNOWN = 2

_SPACING_CODES = {"linear": 0, "inverse": 1}


@dataclass(frozen=True)
class RaySampling:
    """Sample-placement configuration for ray marching."""

    n_coarse: int = 48
    n_fine: int = 16
    n_surface: int = 16
    surface_sigma: float = 2.0
    near: float = 3.0
    far: float = 80.0
    spacing: str = "linear"
    jitter: bool = False
    jitter_seed: int = 0

    def __post_init__(self):
        if self.n_coarse < 1:
            raise ValueError("n_coarse must be >= 1")
        if self.n_fine < 0 or self.n_surface < 0:
            raise ValueError("sample counts must be non-negative")
        if not (0 < self.near < self.far):
            raise ValueError("need 0 < near < far")
        if self.surface_sigma <= 0:
            raise ValueError("surface_sigma must be positive")
        if self.spacing not in _SPACING_CODES:
            raise ValueError(f"spacing must be linear|inverse, got {self.spacing}")

    @property
    def spacing_code(self) -> int:
        return _SPACING_CODES[self.spacing]


@dataclass(frozen=True)
class SurfaceThreshold:
    """Max distance (m) between a point and a view's depth for color validity."""

    tau_s: float = 0.25

    def __post_init__(self):
        if self.tau_s <= 0:
            raise ValueError("tau_s must be positive")


@dataclass(frozen=True)
class RenderedView:
    """RGB + depth + occlusion output of ``render_view``."""

    rgb: np.ndarray          # H x W x 3 float32 in [0, 1]
    depth: DepthMap          # valid exactly where hit_mask
    occlusion: np.ndarray    # H x W bool, True only on hit pixels
    hit_mask: np.ndarray     # H x W bool: ray terminated in [near, far]
    color_valid: np.ndarray  # H x W bool: >= 1 valid color sample at the surface
    unknown_mask: np.ndarray  # H x W bool: ray terminated by an unknown region

    @property
    def shape(self) -> tuple[int, int]:
        return self.hit_mask.shape

    @property
    def surface_mask(self) -> np.ndarray:
        """Pixels whose ray terminated on actual occupancy (not an unknown wall)."""
        return self.hit_mask & ~self.unknown_mask


def coarse_positions(cfg: RaySampling, n_rays: int = 1, rng: np.random.Generator | None = None):
    """Stratified coarse positions, (n_rays, n_coarse); centers unless jittered."""
    idx = np.arange(cfg.n_coarse, dtype=np.float64)
    if cfg.jitter:
        rng = rng or np.random.default_rng(cfg.jitter_seed)
        frac = (idx[None, :] + rng.random((n_rays, cfg.n_coarse))) / cfg.n_coarse
    else:
        frac = np.broadcast_to((idx + 0.5) / cfg.n_coarse, (n_rays, cfg.n_coarse)).copy()
    if cfg.spacing == "linear":
        return cfg.near + frac * (cfg.far - cfg.near)
    inv = 1.0 / cfg.near + frac * (1.0 / cfg.far - 1.0 / cfg.near)
    return 1.0 / inv


def surface_positions(cfg: RaySampling, est_depth: float) -> np.ndarray:
    lo = float(np.clip(est_depth - 2.0 * cfg.surface_sigma, cfg.near, cfg.far))
    hi = float(np.clip(est_depth + 2.0 * cfg.surface_sigma, cfg.near, cfg.far))
    frac = (np.arange(cfg.n_surface, dtype=np.float64) + 0.5) / cfg.n_surface
    return lo + frac * (hi - lo)


def sample_ray(origin, direction, cfg: RaySampling, est_depth: float | None = None,
               occupancy_fn=None) -> np.ndarray:
    """Ordered sample distances along a unit direction.

    Coarse stratified samples always; surface samples around ``est_depth``
    when given; fine samples around the first occupancy transition among the
    coarse samples when ``occupancy_fn`` (distance -> bool) is provided.
    Output is sorted ascending and deduplicated.
    """
    d = np.asarray(direction, dtype=np.float64)
    if abs(np.linalg.norm(d) - 1.0) > 1e-9:
        raise ValueError("direction must be a unit vector")
    parts = [coarse_positions(cfg)[0]]
    if est_depth is not None and cfg.n_surface > 0:
        parts.append(surface_positions(cfg, float(est_depth)))
    if occupancy_fn is not None and cfg.n_fine > 0:
        coarse = parts[0]
        states = np.array([bool(occupancy_fn(float(t))) for t in coarse])
        if states.any():
            k = int(np.argmax(states))
            lo = coarse[k - 1] if k > 0 else cfg.near
            frac = (np.arange(cfg.n_fine, dtype=np.float64) + 0.5) / cfg.n_fine
            parts.append(lo + frac * (coarse[k] - lo))
    return np.unique(np.concatenate(parts))


def _camera_ray_bundle(intr: Intrinsics, pose: Pose):
    """World-space origins and directions (unit z in camera frame) per pixel."""
    dirs_cam = pixel_ray_dirs(intr)
    dirs_world = dirs_cam @ pose.rotation  # rows: R^T @ dir
    origin = pose.camera_center()
    origins = np.broadcast_to(origin, dirs_world.shape)
    return np.ascontiguousarray(origins), np.ascontiguousarray(dirs_world)


def _march(vol: PseudoVolume, origins, dirs, cfg: RaySampling,
           est: np.ndarray | None, jitter: np.ndarray | None):
    pack = vol.pack
    points_args = (origins, dirs, pack.rot, pack.trans, pack.fx, pack.fy, pack.cx,
                   pack.cy, pack.width, pack.height, pack.offsets, pack.depth,
                   pack.valid, vol.sampling_code)
    march_args = (cfg.near, cfg.far, cfg.n_coarse, cfg.spacing_code, cfg.n_fine,
                  cfg.n_surface, cfg.surface_sigma,
                  1 if vol.unknown_is_occupied else 0, est, jitter)
    return backend.first_hit(points_args, march_args)


def aggregate_color(vol: PseudoVolume, point, tau: SurfaceThreshold) -> tuple[np.ndarray, bool]:
    """Mean color over views whose surface passes within tau_s of the point."""
    rgb, valid, _ = _surface_samples(
        vol, np.asarray(point, dtype=np.float64).reshape(1, 3), tau, None
    )
    return rgb[0], bool(valid[0])


def _surface_samples(vol: PseudoVolume, points: np.ndarray, tau: SurfaceThreshold,
                     per_view_occ: list[np.ndarray] | None):
    """Color (bilinear) and occlusion-channel (nearest) aggregation at surface points.

    Returns (rgb (N,3), color_valid (N,), occ (N,)).  A view contributes where
    the point is inside its frustum, its sampled depth is valid, and
    |z - depth| < tau_s.
    """
    n = points.shape[0]
    accum = np.zeros((n, 3))
    count = np.zeros(n)
    occ = np.zeros(n, dtype=bool)
    for i, view in enumerate(vol.views):
        cam = view.pose.apply(points)
        z = cam[:, 2]
        front = z > 1e-9
        zz = np.where(front, z, 1.0)
        u = view.intr.fx * cam[:, 0] / zz + view.intr.cx
        v = view.intr.fy * cam[:, 1] / zz + view.intr.cy
        w, h = view.intr.width, view.intr.height
        inb = front & (u >= -0.5) & (u <= w - 0.5) & (v >= -0.5) & (v <= h - 0.5)
        if not inb.any():
            continue
        uc = np.clip(np.where(inb, u, 0.0), 0.0, w - 1.0)
        vc = np.clip(np.where(inb, v, 0.0), 0.0, h - 1.0)
        iu = np.clip(np.floor(np.where(inb, u, 0.0) + 0.5).astype(np.int64), 0, w - 1)
        iv = np.clip(np.floor(np.where(inb, v, 0.0) + 0.5).astype(np.int64), 0, h - 1)
        if vol.depth_sampling == "nearest":
            d = view.depth.values[iv, iu].astype(np.float64)
            dvalid = view.depth.valid[iv, iu]
        else:
            d, dvalid = _bilinear_min_depth(view.depth, uc, vc)
        surf = inb & dvalid & (np.abs(z - d) < tau.tau_s)
        if not surf.any():
            continue
        rgb = _bilinear_rgb(view.image, uc, vc)
        accum[surf] += rgb[surf]
        count[surf] += 1.0
        if per_view_occ is not None:
            occ[surf] |= per_view_occ[i][iv[surf], iu[surf]]
    valid = count > 0
    rgb_out = np.zeros((n, 3), dtype=np.float32)
    rgb_out[valid] = (accum[valid] / count[valid, None]).astype(np.float32)
    return rgb_out, valid, occ


def _bilinear_rgb(image: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    h, w = image.shape[:2]
    u0 = np.clip(np.floor(u).astype(np.int64), 0, w - 1)
    v0 = np.clip(np.floor(v).astype(np.int64), 0, h - 1)
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    fu = (u - u0)[:, None]
    fv = (v - v0)[:, None]
    img = image.astype(np.float64)
    return (
        img[v0, u0] * (1 - fu) * (1 - fv)
        + img[v0, u1] * fu * (1 - fv)
        + img[v1, u0] * (1 - fu) * fv
        + img[v1, u1] * fu * fv
    )


def _bilinear_min_depth(depth: DepthMap, u: np.ndarray, v: np.ndarray):
    h, w = depth.shape
    u0 = np.clip(np.floor(u).astype(np.int64), 0, w - 1)
    v0 = np.clip(np.floor(v).astype(np.int64), 0, h - 1)
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    d = np.full(u.shape, np.inf)
    ok = np.zeros(u.shape, dtype=bool)
    for jj, ii in ((v0, u0), (v0, u1), (v1, u0), (v1, u1)):
        vv = depth.valid[jj, ii]
        d = np.where(vv, np.minimum(d, depth.values[jj, ii].astype(np.float64)), d)
        ok |= vv
    return d, ok


def render_pixel(vol: PseudoVolume, origin, direction, cfg: RaySampling,
                 tau: SurfaceThreshold, est_depth: float | None = None):
    """Render a single ray; ``direction`` need not be normalized (the returned
    depth is the ray parameter, i.e. z-depth when direction has unit z).

    Returns (rgb, depth, occluded, hit, color_valid).
    """
    o = np.asarray(origin, dtype=np.float64).reshape(1, 3)
    d = np.asarray(direction, dtype=np.float64).reshape(1, 3)
    est = None if est_depth is None else np.array([est_depth], dtype=np.float64)
    status, t = _march(vol, o, d, cfg, est, None)
    if status[0] == HIT_NONE:
        return np.zeros(3, dtype=np.float32), np.nan, False, False, False
    point = (o + t[:, None] * d)[0]
    rgb, valid = aggregate_color(vol, point, tau)
    occluded = (status[0] == HIT_UNKNOWN) or not valid
    return rgb, float(t[0]), bool(occluded), True, bool(valid)


def render_view(vol: PseudoVolume, intr: Intrinsics, pose: Pose,
                cfg: RaySampling = RaySampling(), tau: SurfaceThreshold = SurfaceThreshold(),
                per_view_occ: list[np.ndarray] | None = None,
                tau_d: GradientThreshold = GradientThreshold(),
                morph: MorphKernel = MorphKernel(),
                est_depth: DepthMap | None = None,
                threads: int = 1) -> RenderedView:
    """Render RGB, depth, and the occlusion channel into a novel view.

    ``per_view_occ`` carries one occlusion map per member view (aligned with
    ``vol.views``); when omitted they are derived from each view's depth via
    the inverse-depth gradient detector.  The occlusion channel is sampled at
    the same surface/view pairs as color, OR-reduced, then OR-ed with invalid
    color and unknown-terminated rays, and finally cleaned by morphological
    opening and closing.
    """
    if per_view_occ is None:
        per_view_occ = [depth_gradient_occlusion(v.depth, tau_d).mask for v in vol.views]
    if len(per_view_occ) != len(vol.views):
        raise DimensionMismatch("need one occlusion map per member view")
    for m, view in zip(per_view_occ, vol.views):
        if m.shape != view.depth.shape:
            raise DimensionMismatch("occlusion map shape disagrees with its view")

    h, w = intr.height, intr.width
    origins, dirs = _camera_ray_bundle(intr, pose)
    n = h * w

    jitter = None
    if cfg.jitter:
        rng = np.random.default_rng(cfg.jitter_seed)
        jitter = rng.random((n, cfg.n_coarse))
    est = None
    if est_depth is not None:
        if est_depth.shape != (h, w):
            raise DimensionMismatch("est_depth shape disagrees with render target")
        est = np.where(est_depth.valid.ravel(),
                       est_depth.values.ravel().astype(np.float64),
                       0.5 * (cfg.near + cfg.far))

    status = np.empty(n, dtype=np.uint8)
    t_hit = np.empty(n, dtype=np.float64)
    n_workers = max(1, int(threads))
    if n_workers == 1:
        status, t_hit = _march(vol, origins, dirs, cfg, est, jitter)
    else:
        # rows are independent; chunked marching is deterministic for any
        # worker count because every chunk writes only its own slice
        bounds = np.linspace(0, n, n_workers * 4 + 1, dtype=int)

        def run(a, b):
            s, t = _march(vol, origins[a:b], dirs[a:b], cfg,
                          None if est is None else est[a:b],
                          None if jitter is None else jitter[a:b])
            status[a:b] = s
            t_hit[a:b] = t

        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            list(pool.map(lambda ab: run(*ab), zip(bounds[:-1], bounds[1:])))

    hit = status != HIT_NONE
    points = origins + np.where(hit, t_hit, cfg.near)[:, None] * dirs
    rgb = np.zeros((n, 3), dtype=np.float32)
    color_valid = np.zeros(n, dtype=bool)
    occ = np.zeros(n, dtype=bool)
    if hit.any():
        rgb_h, valid_h, occ_h = _surface_samples(vol, points[hit], tau, per_view_occ)
        rgb[hit] = rgb_h
        color_valid[hit] = valid_h
        occ[hit] = occ_h | ~valid_h | (status[hit] == HIT_UNKNOWN)

    occ2d = occ.reshape(h, w)
    occ2d = morph_close(morph_open(occ2d, morph), morph)
    hit2d = hit.reshape(h, w)
    occ2d &= hit2d  # occlusion stays within defined pixels

    depth_vals = np.where(hit, t_hit, cfg.far).reshape(h, w).astype(np.float32)
    return RenderedView(
        rgb=rgb.reshape(h, w, 3),
        depth=DepthMap(depth_vals, hit2d),
        occlusion=occ2d,
        hit_mask=hit2d,
        color_valid=color_valid.reshape(h, w),
        unknown_mask=(status == HIT_UNKNOWN).reshape(h, w),
    )
