"""Single-image volumetric scene synthesis and evaluation toolkit."""

from .backend import backend_name
from .camera import Intrinsics, Pixel, Point3, Pose, project, relative_pose, reproject, unproject
from .occlusion import (
    GradientThreshold,
    MorphKernel,
    OcclusionMap,
    depth_gradient_occlusion,
    flow_occlusion,
    fuse_occlusion,
    morph_close,
    morph_open,
)
from .rendering import RaySampling, RenderedView, SurfaceThreshold, render_pixel, render_view, sample_ray
from .scenes import SceneOracle, SceneSpec, bundled_scene_names, canonical_intrinsics, load_scene, random_scene
from .volume import DepthMap, OccState, PseudoVolume, ViewTriplet, occupancy

__version__ = "0.1.0"

__all__ = [
    "Intrinsics", "Pixel", "Point3", "Pose", "project", "unproject", "reproject",
    "relative_pose", "DepthMap", "OccState", "PseudoVolume", "ViewTriplet", "occupancy",
    "RaySampling", "SurfaceThreshold", "RenderedView", "sample_ray", "render_pixel",
    "render_view", "GradientThreshold", "MorphKernel", "OcclusionMap",
    "depth_gradient_occlusion", "morph_open", "morph_close", "flow_occlusion",
    "fuse_occlusion", "SceneSpec", "SceneOracle", "canonical_intrinsics", "load_scene",
    "random_scene", "bundled_scene_names", "backend_name", "__version__",
]
