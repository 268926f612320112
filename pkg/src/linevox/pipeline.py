"""Stage orchestration: config in, rendered frame and stage stats out."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from numba import get_num_threads, set_num_threads

from . import abuffer, lineset
from .config import ConfigError, PipelineConfig
from .culling import Camera, CullingPyramid, compute_visibility, erode
from .grid import GridDesc, fit_grid
from .raytracer import Image, RenderScene, RenderSettings, render
from .shading import compute_shading
from .voxelizer import voxelize

__all__ = ["ScenePipeline", "load_input", "make_camera", "run_once"]


def load_input(cfg: PipelineConfig) -> lineset.LineSet:
    """Load a line-set file, or build one from a `gen:kind[?k=v&...]` spec."""
    src = cfg.input
    if not src.startswith("gen:"):
        return lineset.load_lineset(src)
    spec = src[4:]
    kind, _, query = spec.partition("?")
    params = {}
    if query:
        for item in query.split("&"):
            k, _, v = item.partition("=")
            try:
                params[k] = int(v)
            except ValueError:
                params[k] = float(v)
    return lineset.generate(kind, seed=cfg.seed, **params)


def make_camera(cfg: PipelineConfig, g: GridDesc) -> Camera:
    center = (g.world_min + g.world_max) / 2.0
    extent = float(g.world_max[0] - g.world_min[0])
    dist = cfg.cam_distance if cfg.cam_distance > 0 else 1.3 * extent
    return Camera.orbit(center, dist,
                        np.deg2rad(cfg.cam_azimuth), np.deg2rad(cfg.cam_elevation),
                        fov=np.deg2rad(cfg.cam_fov),
                        width=cfg.width, height=cfg.height)


@dataclass
class ScenePipeline:
    """Holds the geometry-dependent state; re-renders per camera pose.

    Voxelization and the grid are rebuilt only by `build_geometry` (or when
    cfg.revoxelize forces it per frame); culling, the A-buffer, shading,
    and the frame are recomputed per pose.
    """

    cfg: PipelineConfig
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        self.cfg.validate()
        if self.cfg.workers > 0:
            set_num_threads(min(self.cfg.workers, get_num_threads()))
        self.build_geometry()

    def build_geometry(self) -> None:
        cfg = self.cfg
        t0 = time.perf_counter()
        self.ls = load_input(cfg)
        self.cn = lineset.compute_clip_normals(self.ls)
        rv = cfg.r if cfg.r > 0 else None
        self.g, self.r_world = fit_grid(self.ls, cfg.res, radius_voxels=rv)
        t1 = time.perf_counter()
        self.pyramid = voxelize(self.ls, self.cn, self.g, method=cfg.method,
                                r_min=cfg.r_min, r_world=self.r_world,
                                workers=cfg.workers or None)
        t2 = time.perf_counter()
        self.stats.update({
            "segments": int(len(self.ls.segment_vertex_ids())),
            "vertices": int(self.ls.n_vertices),
            "resolution": cfg.res,
            "voxels_visited": self.pyramid.visited,
            "load_ms": 1e3 * (t1 - t0),
            "voxelize_ms": 1e3 * (t2 - t1),
        })

    def render_frame(self, cam: Camera | None = None) -> Image:
        cfg = self.cfg
        if cfg.revoxelize:
            self.build_geometry()
        if cam is None:
            cam = make_camera(cfg, self.g)
        t0 = time.perf_counter()
        culling = None
        if cfg.strategy == "vcsv":
            eroded = erode(self.pyramid.occ_levels[0])
            occupied = self.pyramid.counts() > 0
            culling = compute_visibility(eroded, self.g, cam, occupied)
        t1 = time.perf_counter()
        if cfg.strategy == "vss":
            abuf = abuffer.build_vss(self.ls, self.cn, self.g, method=cfg.method,
                                     r_world=self.r_world, r_min=cfg.r_min)
        elif cfg.strategy == "vsv":
            abuf = abuffer.build_vsv(self.ls, self.cn, self.g, self.pyramid,
                                     method=cfg.method, r_world=self.r_world,
                                     workers=cfg.workers or None)
        else:
            abuf = abuffer.build_vcsv(self.ls, self.cn, self.g, self.pyramid,
                                      culling, method=cfg.method,
                                      r_world=self.r_world,
                                      workers=cfg.workers or None)
        t2 = time.perf_counter()
        shade_bits = culling if culling is not None else \
            CullingPyramid.from_bits((self.pyramid.counts() > 0).astype(np.uint8))
        shading = compute_shading(self.pyramid, shade_bits, self.g,
                                  cfg.light_vector())
        t3 = time.perf_counter()
        scene = RenderScene(self.ls, self.cn, self.g, self.pyramid, abuf,
                            shading, culling=culling, r_world=self.r_world)
        settings = RenderSettings(mode=cfg.mode, alpha=cfg.alpha, k=cfg.k)
        image = render(scene, cam, settings)
        t4 = time.perf_counter()
        self.stats.update({
            "fragments": abuf.total,
            "fragment_touches": abuf.stats.get("fragment_touches", 0),
            "culled_fraction": self._culled_fraction(culling),
            "ray_capsule_tests": image.stats["ray_capsule_tests"],
            "cull_ms": 1e3 * (t1 - t0),
            "abuffer_ms": 1e3 * (t2 - t1),
            "shading_ms": 1e3 * (t3 - t2),
            "render_ms": 1e3 * (t4 - t3),
        })
        self._last = (scene, cam)
        return image

    def _culled_fraction(self, culling) -> float:
        occ = int((self.pyramid.counts() > 0).sum())
        if culling is None or occ == 0:
            return 0.0
        vis = int((culling.base != 0).sum())
        return 1.0 - vis / occ

    def dump_intermediates(self, prefix: str) -> None:
        scene, _ = self._last
        self.pyramid.dump(f"{prefix}.voxp")
        scene.abuf.dump(f"{prefix}.abuf")
        if scene.culling is not None:
            scene.culling.dump(f"{prefix}.culp")


def run_once(cfg: PipelineConfig) -> tuple[Image, dict]:
    pipe = ScenePipeline(cfg)
    img = pipe.render_frame()
    return img, dict(pipe.stats)
