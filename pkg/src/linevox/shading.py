"""Voxel-space illumination: cone-traced ambient occlusion and shadows.

Ambient occlusion averages twelve cones along the icosahedron vertex
directions (an antipodal, equally distributed set); the directional
shadow term is a single narrow cone towards the light. Cones march the
occupancy mip chain front-to-back with diameter-proportional steps,
sampling the level whose voxel size matches the cone diameter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .culling import CullingPyramid
from .grid import GridDesc
from .voxelizer import OccupancyPyramid

__all__ = ["ConeSet", "ShadingVolume", "cone_directions", "cone_trace",
           "compute_shading", "AO_HALF_ANGLE", "SHADOW_HALF_ANGLE"]

# equal-solid-angle 12-partition of the sphere: cos(theta) = 1 - 2/12
AO_HALF_ANGLE = float(np.arccos(1.0 - 2.0 / 12.0))
SHADOW_HALF_ANGLE = float(np.deg2rad(5.0))

_STOP = 0.99  # front-to-back saturation cutoff
_T0 = 1.0  # self-occlusion start offset, voxels


def cone_directions() -> np.ndarray:
    """The 12 unit icosahedron vertex directions, (12, 3) float64."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    dirs = []
    for a in (-1.0, 1.0):
        for b in (-phi, phi):
            dirs += [(0.0, a, b), (a, b, 0.0), (b, 0.0, a)]
    d = np.array(dirs)
    return d / np.linalg.norm(d, axis=1, keepdims=True)


@dataclass(frozen=True)
class ConeSet:
    directions: np.ndarray
    half_angle: float

    @property
    def weight(self) -> float:
        return 1.0 / len(self.directions)

    @classmethod
    def ambient(cls) -> "ConeSet":
        return cls(cone_directions(), AO_HALF_ANGLE)


@dataclass
class ShadingVolume:
    ao: np.ndarray  # (res, res, res) float32 in [0, 1], 1 = unoccluded
    shadow: np.ndarray  # (res, res, res) float32 in [0, 1], 1 = lit
    light_dir: np.ndarray


def _pack_occ(pyramid: OccupancyPyramid):
    offsets = np.zeros(len(pyramid.occ_levels) + 1, dtype=np.int64)
    for i, lvl in enumerate(pyramid.occ_levels):
        offsets[i + 1] = offsets[i] + lvl.size
    flat = np.concatenate([lvl.ravel() for lvl in pyramid.occ_levels]).astype(np.float64)
    return flat, offsets


@njit(cache=True)
def _trilinear(flat, offs, res, l, px, py, pz):
    res_l = res >> l
    scale = 1.0 / (1 << l)
    ux = px * scale - 0.5
    uy = py * scale - 0.5
    uz = pz * scale - 0.5
    ix = int(np.floor(ux))
    iy = int(np.floor(uy))
    iz = int(np.floor(uz))
    fx = ux - ix
    fy = uy - iy
    fz = uz - iz
    base = offs[l]
    acc = 0.0
    for dz in range(2):
        z = iz + dz
        if z < 0:
            z = 0
        elif z >= res_l:
            z = res_l - 1
        wz = fz if dz == 1 else 1.0 - fz
        for dy in range(2):
            y = iy + dy
            if y < 0:
                y = 0
            elif y >= res_l:
                y = res_l - 1
            wy = fy if dy == 1 else 1.0 - fy
            for dx in range(2):
                x = ix + dx
                if x < 0:
                    x = 0
                elif x >= res_l:
                    x = res_l - 1
                wx = fx if dx == 1 else 1.0 - fx
                acc += wx * wy * wz * flat[base + x + res_l * (y + res_l * z)]
    return acc


@njit(cache=True)
def _cone_trace(flat, offs, res, n_levels, ox, oy, oz, dx, dy, dz, tan_half):
    if ox < 0.0 or oy < 0.0 or oz < 0.0 or ox > res or oy > res or oz > res:
        return 0.0
    occ = 0.0
    t = _T0
    while occ < _STOP:
        px = ox + dx * t
        py = oy + dy * t
        pz = oz + dz * t
        if px < 0.0 or py < 0.0 or pz < 0.0 or px > res or py > res or pz > res:
            break
        diam = 2.0 * t * tan_half
        step = diam if diam > 1.0 else 1.0
        l = int(np.floor(np.log2(step)))
        if l > n_levels - 1:
            l = n_levels - 1
        s = _trilinear(flat, offs, res, l, px, py, pz)
        occ = occ + (1.0 - occ) * s
        t += step
    return occ if occ < 1.0 else 1.0


@njit(cache=True, parallel=True)
def _shading_kernel(flat, offs, res, n_levels, visible, dirs, tan_ao,
                    lx, ly, lz, tan_shadow, ao_out, shadow_out):
    n_dirs = dirs.shape[0]
    w = 1.0 / n_dirs
    for idx in prange(res * res * res):
        x = idx % res
        y = (idx // res) % res
        z = idx // (res * res)
        if visible[z, y, x] == 0:
            continue
        ox = x + 0.5
        oy = y + 0.5
        oz = z + 0.5
        acc = 0.0
        for c in range(n_dirs):
            acc += w * _cone_trace(flat, offs, res, n_levels, ox, oy, oz,
                                   dirs[c, 0], dirs[c, 1], dirs[c, 2], tan_ao)
        ao_out[z, y, x] = 1.0 - acc
        shadow_out[z, y, x] = 1.0 - _cone_trace(flat, offs, res, n_levels,
                                                ox, oy, oz, -lx, -ly, -lz, tan_shadow)


def cone_trace(pyramid: OccupancyPyramid, origin, direction,
               half_angle: float = AO_HALF_ANGLE) -> float:
    """Accumulated occlusion of one cone from a world-space origin."""
    g = pyramid.grid
    o = g.to_voxel(origin)
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    flat, offs = _pack_occ(pyramid)
    return float(_cone_trace(flat, offs, pyramid.resolution, len(pyramid.occ_levels),
                             o[0], o[1], o[2], d[0], d[1], d[2], np.tan(half_angle)))


def compute_shading(pyramid: OccupancyPyramid, culling: CullingPyramid,
                    g: GridDesc, light_dir) -> ShadingVolume:
    """AO and shadow fields for visible voxels; elsewhere both stay 1."""
    res = g.resolution
    light = np.asarray(light_dir, dtype=np.float64)
    light = light / np.linalg.norm(light)
    flat, offs = _pack_occ(pyramid)
    ao = np.ones((res, res, res), dtype=np.float64)
    shadow = np.ones((res, res, res), dtype=np.float64)
    _shading_kernel(flat, offs, res, len(pyramid.occ_levels),
                    np.ascontiguousarray(culling.base), cone_directions(),
                    np.tan(AO_HALF_ANGLE), light[0], light[1], light[2],
                    np.tan(SHADOW_HALF_ANGLE), ao, shadow)
    np.clip(ao, 0.0, 1.0, out=ao)
    np.clip(shadow, 0.0, 1.0, out=shadow)
    return ShadingVolume(ao.astype(np.float32), shadow.astype(np.float32), light)
