"""Voxel ray tracing for dynamic line sets.

Conservative capsule voxelization into a packed occupancy pyramid,
view-dependent voxel culling, two-pass per-voxel A-buffers, cone-traced
shading volumes, and per-pixel voxel ray tracing with exact ordered
transparency.
"""

from .abuffer import ABuffer, OffsetTable, build_vcsv, build_vss, build_vsv, scan_offsets
from .config import ConfigError, PipelineConfig
from .culling import Camera, CullingPyramid, compute_visibility, erode
from .grid import GridDesc, fit_grid
from .lineset import (Capsule, LineSet, LineSetError, ParseError, compute_clip_normals,
                      decimate, generate, load_lineset, save_lineset)
from .pipeline import ScenePipeline, run_once
from .raytracer import (Image, Ray, RenderScene, RenderSettings, first_voxel,
                        ray_capsule, render, tangent_color)
from .reference import render_reference
from .shading import ConeSet, ShadingVolume, compute_shading, cone_trace
from .voxelizer import (OccupancyPyramid, capsule_occupancy, clipped_capsule_sdf,
                        traverse_aabb, traverse_capsule, traverse_dda, voxelize)

__version__ = "0.1.0"

__all__ = [
    "ABuffer", "Camera", "Capsule", "ConeSet", "ConfigError", "CullingPyramid",
    "GridDesc", "Image", "LineSet", "LineSetError", "OccupancyPyramid",
    "OffsetTable", "ParseError", "PipelineConfig", "Ray", "RenderScene",
    "RenderSettings", "ScenePipeline", "ShadingVolume", "build_vcsv", "build_vss",
    "build_vsv", "capsule_occupancy", "clipped_capsule_sdf", "compute_clip_normals",
    "compute_shading", "compute_visibility", "cone_trace", "decimate", "erode",
    "first_voxel", "fit_grid", "generate", "load_lineset", "ray_capsule",
    "render", "render_reference", "run_once", "save_lineset", "scan_offsets",
    "tangent_color", "traverse_aabb", "traverse_capsule", "traverse_dda",
    "voxelize",
]
