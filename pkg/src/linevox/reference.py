"""Brute-force reference renderers.

These share the analytic intersector and shading math with the voxel
tracer but skip the grid entirely: every ray is tested against every
segment. The transparent variant gathers all hits and sorts them exactly
by distance, giving a ground-truth ordering to compare the k-buffer
against.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

from .culling import Camera
from .raytracer import (Image, RenderScene, RenderSettings, _capsule_normal,
                        _pixel_ray, _ray_capsule, _shade)
from .voxelizer import segment_arrays

__all__ = ["render_reference"]


@njit(cache=True, parallel=True)
def _brute_opaque(verts, segs, normals, use_clip, r, ao_vol, sh_vol, res,
                  lx, ly, lz, pos, fwd, right, up, tanf,
                  bg0, bg1, bg2, w, h, rgb, hit_id):
    n_segs = segs.shape[0]
    for pix in prange(w * h):
        px = pix % w
        py = pix // w
        ox, oy, oz, dx, dy, dz = _pixel_ray(px, py, w, h, pos, fwd, right, up, tanf)
        best = -1.0
        best_i = -1
        for s in range(n_segs):
            i = segs[s]
            t = _ray_capsule(ox, oy, oz, dx, dy, dz,
                             verts[i, 0], verts[i, 1], verts[i, 2],
                             verts[i + 1, 0], verts[i + 1, 1], verts[i + 1, 2],
                             normals[i, 0], normals[i, 1], normals[i, 2],
                             normals[i + 1, 0], normals[i + 1, 1], normals[i + 1, 2],
                             r, use_clip)
            if t >= 0.0 and (best < 0.0 or t < best):
                best = t
                best_i = i
        if best < 0.0:
            rgb[py, px, 0] = bg0
            rgb[py, px, 1] = bg1
            rgb[py, px, 2] = bg2
            hit_id[py, px] = -1
            continue
        hx = ox + dx * best
        hy = oy + dy * best
        hz = oz + dz * best
        i = best_i
        nx, ny, nz = _capsule_normal(hx, hy, hz,
                                     verts[i, 0], verts[i, 1], verts[i, 2],
                                     verts[i + 1, 0], verts[i + 1, 1], verts[i + 1, 2],
                                     normals[i, 0], normals[i, 1], normals[i, 2],
                                     normals[i + 1, 0], normals[i + 1, 1], normals[i + 1, 2],
                                     r, use_clip)
        cr, cg, cb = _shade(verts, i, nx, ny, nz, ao_vol, sh_vol, res,
                            hx, hy, hz, lx, ly, lz)
        rgb[py, px, 0] = cr
        rgb[py, px, 1] = cg
        rgb[py, px, 2] = cb
        hit_id[py, px] = i


@njit(cache=True, parallel=True)
def _brute_transparent(verts, segs, normals, use_clip, r, ao_vol, sh_vol, res,
                       lx, ly, lz, pos, fwd, right, up, tanf, alpha,
                       bg0, bg1, bg2, w, h, rgb, hit_id):
    n_segs = segs.shape[0]
    for pix in prange(w * h):
        px = pix % w
        py = pix // w
        ox, oy, oz, dx, dy, dz = _pixel_ray(px, py, w, h, pos, fwd, right, up, tanf)
        ts = np.empty(n_segs, np.float64)
        ids = np.empty(n_segs, np.int64)
        n_hits = 0
        for s in range(n_segs):
            i = segs[s]
            t = _ray_capsule(ox, oy, oz, dx, dy, dz,
                             verts[i, 0], verts[i, 1], verts[i, 2],
                             verts[i + 1, 0], verts[i + 1, 1], verts[i + 1, 2],
                             normals[i, 0], normals[i, 1], normals[i, 2],
                             normals[i + 1, 0], normals[i + 1, 1], normals[i + 1, 2],
                             r, use_clip)
            if t >= 0.0:
                ts[n_hits] = t
                ids[n_hits] = i
                n_hits += 1
        # exact front-to-back order, segment id breaking distance ties
        order = np.argsort(ts[:n_hits], kind="mergesort")
        col_r = 0.0
        col_g = 0.0
        col_b = 0.0
        acc_a = 0.0
        first = -1
        for j in range(n_hits):
            tt = ts[order[j]]
            i = ids[order[j]]
            hx = ox + dx * tt
            hy = oy + dy * tt
            hz = oz + dz * tt
            nx, ny, nz = _capsule_normal(hx, hy, hz,
                                         verts[i, 0], verts[i, 1], verts[i, 2],
                                         verts[i + 1, 0], verts[i + 1, 1], verts[i + 1, 2],
                                         normals[i, 0], normals[i, 1], normals[i, 2],
                                         normals[i + 1, 0], normals[i + 1, 1],
                                         normals[i + 1, 2], r, use_clip)
            cr, cg, cb = _shade(verts, i, nx, ny, nz, ao_vol, sh_vol, res,
                                hx, hy, hz, lx, ly, lz)
            wgt = (1.0 - acc_a) * alpha
            col_r += wgt * cr
            col_g += wgt * cg
            col_b += wgt * cb
            acc_a += wgt
            if first < 0:
                first = i
        rgb[py, px, 0] = col_r + (1.0 - acc_a) * bg0
        rgb[py, px, 1] = col_g + (1.0 - acc_a) * bg1
        rgb[py, px, 2] = col_b + (1.0 - acc_a) * bg2
        hit_id[py, px] = first


def render_reference(scene: RenderScene, cam: Camera, settings: RenderSettings) -> Image:
    """Render by exhaustive per-ray segment tests; no voxel structures."""
    g = scene.g
    res = g.resolution
    verts, segs, normals, use_clip, r = segment_arrays(scene.ls, scene.cn, g, scene.r_world)
    if scene.shading is not None:
        ao_vol = np.ascontiguousarray(scene.shading.ao, dtype=np.float64)
        sh_vol = np.ascontiguousarray(scene.shading.shadow, dtype=np.float64)
        light = np.asarray(scene.shading.light_dir, dtype=np.float64)
    else:
        ao_vol = np.ones((res, res, res), dtype=np.float64)
        sh_vol = np.ones((res, res, res), dtype=np.float64)
        light = np.array([0.0, 0.0, -1.0])
    lx, ly, lz = -light
    pos = g.to_voxel(cam.position)
    w, h = cam.width, cam.height
    rgb = np.zeros((h, w, 3), dtype=np.float64)
    hit_id = np.zeros((h, w), dtype=np.int32)
    tanf = np.tan(cam.fov / 2.0)
    args = (verts, segs, normals, use_clip, r, ao_vol, sh_vol, res,
            lx, ly, lz, pos, cam.forward, cam.right, cam.up, tanf)
    bg = settings.background
    if settings.mode == "opaque":
        _brute_opaque(*args, bg[0], bg[1], bg[2], w, h, rgb, hit_id)
    else:
        _brute_transparent(*args, settings.alpha, bg[0], bg[1], bg[2],
                           w, h, rgb, hit_id)
    return Image(rgb, hit_id, stats={"reference": True})
