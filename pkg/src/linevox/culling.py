"""Camera-visibility classification of occupied voxels.

The clamped base occupancy is eroded with a 6-neighbourhood minimum
(outside the grid counts as empty), then a ray is marched from every
occupied voxel center towards the camera through the eroded field. A
voxel is visible unless a strictly intervening voxel is effectively solid
(eroded occupancy >= THETA_BLOCK). The per-voxel bits are reduced into an
any-child-visible mip hierarchy.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit, prange

from .grid import GridDesc

__all__ = ["Camera", "CullingPyramid", "erode", "dilate_bits",
           "compute_visibility", "or_mips", "THETA_BLOCK"]

# Only effectively solid voxels block a visibility ray; erring toward
# visible keeps culling safe at grazing angles.
THETA_BLOCK = 0.999


@dataclass
class Camera:
    position: np.ndarray
    forward: np.ndarray
    up: np.ndarray
    fov: float = np.deg2rad(45.0)  # vertical, radians
    width: int = 256
    height: int = 256

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        if not 0.0 < self.fov < np.pi:
            raise ValueError("fov must be in (0, pi)")
        f = np.asarray(self.forward, dtype=np.float64)
        fn = np.linalg.norm(f)
        if fn == 0:
            raise ValueError("forward must be nonzero")
        f = f / fn
        u = np.asarray(self.up, dtype=np.float64)
        u = u - (u @ f) * f
        un = np.linalg.norm(u)
        if un == 0:
            raise ValueError("up must not be parallel to forward")
        self.forward = f
        self.up = u / un

    @property
    def right(self) -> np.ndarray:
        return np.cross(self.forward, self.up)

    @classmethod
    def orbit(cls, target, distance: float, azimuth: float, elevation: float,
              fov: float = np.deg2rad(45.0), width: int = 256, height: int = 256) -> "Camera":
        target = np.asarray(target, dtype=np.float64)
        ce = np.cos(elevation)
        offset = np.array([ce * np.cos(azimuth), ce * np.sin(azimuth), np.sin(elevation)])
        pos = target + distance * offset
        return cls(pos, target - pos, np.array([0.0, 0.0, 1.0]), fov, width, height)


@dataclass
class CullingPyramid:
    """Binary visibility hierarchy; levels[0] is the base, parent = OR of 8 children."""

    levels: list  # list of (r, r, r) uint8 arrays, axes (z, y, x)

    @classmethod
    def from_bits(cls, base: np.ndarray) -> "CullingPyramid":
        return cls(or_mips(base))

    @property
    def base(self) -> np.ndarray:
        return self.levels[0]

    @property
    def resolution(self) -> int:
        return self.base.shape[0]

    def packed(self):
        """Flat uint8 concatenation of all levels plus offsets, for kernels."""
        offsets = np.zeros(len(self.levels) + 1, dtype=np.int64)
        for i, lvl in enumerate(self.levels):
            offsets[i + 1] = offsets[i] + lvl.size
        flat = np.concatenate([lvl.ravel() for lvl in self.levels])
        res = np.array([lvl.shape[0] for lvl in self.levels], dtype=np.int64)
        return flat, offsets, res

    def dump(self, path: str | Path) -> None:
        parts = [b"CULP", struct.pack("<I", self.resolution)]
        parts += [lvl.astype(np.uint8).tobytes() for lvl in self.levels]
        Path(path).write_bytes(b"".join(parts))


def or_mips(base: np.ndarray) -> list:
    levels = [np.ascontiguousarray(base != 0, dtype=np.uint8)]
    while levels[-1].shape[0] > 1:
        a = levels[-1]
        h = a.shape[0] // 2
        levels.append(a.reshape(h, 2, h, 2, h, 2).max(axis=(1, 3, 5)))
    return levels


def erode(field: np.ndarray) -> np.ndarray:
    """6-neighbourhood minimum of the clamped field; outside counts as 0."""
    res = field.shape[0]
    if field.shape != (res, res, res):
        raise ValueError("field must be cubic")
    c = np.clip(field, 0.0, 1.0)
    p = np.zeros((res + 2,) * 3, dtype=np.float64)
    p[1:-1, 1:-1, 1:-1] = c
    out = c.copy()
    np.minimum(out, p[:-2, 1:-1, 1:-1], out=out)
    np.minimum(out, p[2:, 1:-1, 1:-1], out=out)
    np.minimum(out, p[1:-1, :-2, 1:-1], out=out)
    np.minimum(out, p[1:-1, 2:, 1:-1], out=out)
    np.minimum(out, p[1:-1, 1:-1, :-2], out=out)
    np.minimum(out, p[1:-1, 1:-1, 2:], out=out)
    return out


def dilate_bits(bits: np.ndarray) -> np.ndarray:
    """26-neighbourhood binary dilation; outside the grid counts as 0."""
    res = bits.shape[0]
    p = np.zeros((res + 2,) * 3, dtype=np.uint8)
    p[1:-1, 1:-1, 1:-1] = bits != 0
    out = np.zeros_like(p[1:-1, 1:-1, 1:-1])
    for dz in range(3):
        for dy in range(3):
            for dx in range(3):
                np.maximum(out, p[dz:dz + res, dy:dy + res, dx:dx + res], out=out)
    return out


@njit(cache=True)
def _march_blocked(eroded, res, x, y, z, cx, cy, cz, theta):
    # DDA from the voxel center to the camera point (voxel units); the
    # starting voxel and the camera's own voxel never block.
    ox = x + 0.5
    oy = y + 0.5
    oz = z + 0.5
    dx = cx - ox
    dy = cy - oy
    dz = cz - oz
    ex = int(np.floor(cx))
    ey = int(np.floor(cy))
    ez = int(np.floor(cz))
    sx = 1 if dx > 0 else -1
    sy = 1 if dy > 0 else -1
    sz = 1 if dz > 0 else -1
    big = 1e30
    tmx = ((x + (1 if sx > 0 else 0)) - ox) / dx if dx != 0.0 else big
    tmy = ((y + (1 if sy > 0 else 0)) - oy) / dy if dy != 0.0 else big
    tmz = ((z + (1 if sz > 0 else 0)) - oz) / dz if dz != 0.0 else big
    tdx = abs(1.0 / dx) if dx != 0.0 else big
    tdy = abs(1.0 / dy) if dy != 0.0 else big
    tdz = abs(1.0 / dz) if dz != 0.0 else big
    t = 0.0
    while True:
        if tmx <= tmy and tmx <= tmz:
            x += sx
            t = tmx
            tmx += tdx
        elif tmy <= tmz:
            y += sy
            t = tmy
            tmy += tdy
        else:
            z += sz
            t = tmz
            tmz += tdz
        if t >= 1.0:
            return False  # reached the camera
        if x < 0 or y < 0 or z < 0 or x >= res or y >= res or z >= res:
            return False  # left the grid
        if x == ex and y == ey and z == ez:
            return False  # camera's own voxel is excluded
        if eroded[z, y, x] >= theta:
            return True
    return False


@njit(cache=True, parallel=True)
def _visibility_kernel(eroded, occupied, res, cx, cy, cz, theta, out):
    for idx in prange(res * res * res):
        x = idx % res
        y = (idx // res) % res
        z = idx // (res * res)
        if occupied[z, y, x] == 0:
            continue
        if not _march_blocked(eroded, res, x, y, z, cx, cy, cz, theta):
            out[z, y, x] = 1


def compute_visibility(eroded: np.ndarray, g: GridDesc, cam: Camera,
                       occupied: np.ndarray) -> CullingPyramid:
    """Visible-voxel bits for occupied voxels, plus OR-mips.

    occupied marks voxels with nonzero pre-erosion occupancy (primitive
    count > 0); only those can be visible.

    The marched bits are dilated by one voxel (within the occupied set)
    before the mip reduction: the center-to-camera march is a point-sample
    proxy for the pixel-ray frustum, and silhouette voxels whose own line
    of sight grazes a blocker can still receive first hits from rays that
    slip past it. The safety margin errs toward visible.
    """
    res = g.resolution
    if eroded.shape != (res, res, res) or occupied.shape != (res, res, res):
        raise ValueError("field shape does not match grid")
    cv = g.to_voxel(cam.position)
    occ_bits = np.ascontiguousarray(occupied != 0, dtype=np.uint8)
    base = np.zeros((res, res, res), dtype=np.uint8)
    _visibility_kernel(np.ascontiguousarray(eroded, dtype=np.float64),
                       occ_bits, res, cv[0], cv[1], cv[2], THETA_BLOCK, base)
    base = dilate_bits(base) & occ_bits
    return CullingPyramid.from_bits(base)
