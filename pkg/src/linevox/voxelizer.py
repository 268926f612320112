"""Conservative capsule voxelization and the packed occupancy pyramid.

Three traversal strategies are provided: dda (exact zero-radius stepping,
not conservative for capsules), capsule (major-axis slab traversal with
projected radii, conservative) and aabb (inflated bounding box). The base
level packs a saturating 16-bit primitive count and a 16-bit fixed-point
occupancy sum (scale 4096) into one 32-bit word per voxel, so parallel
accumulation stays bit-deterministic.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit, prange, get_num_threads

from .grid import GridDesc
from .lineset import Capsule, LineSet

__all__ = [
    "AxisRank",
    "OccupancyPyramid",
    "rank_axes",
    "projected_radii",
    "clipped_capsule_sdf",
    "capsule_occupancy",
    "capsule_cells",
    "dda_cells",
    "aabb_cells",
    "traverse_capsule",
    "traverse_dda",
    "traverse_aabb",
    "voxelize",
    "build_mips",
    "segment_arrays",
    "footprint_radius",
    "OCC_SCALE",
    "DEFAULT_R_MIN",
]

OCC_SCALE = 4096  # fixed-point occupancy: 1.0 == 4096
DEFAULT_R_MIN = 0.5  # voxel units; radii below half a voxel alias

METHODS = {"dda": 0, "capsule": 1, "aabb": 2}


@dataclass(frozen=True)
class AxisRank:
    a0: int
    a1: int
    a2: int
    swapped: bool


def rank_axes(d) -> AxisRank:
    """Rank axes by |d| descending; ties keep x before y before z."""
    d = np.asarray(d, dtype=np.float64)
    if not np.all(np.isfinite(d)):
        raise ValueError("non-finite line delta")
    if np.all(d == 0):
        raise ValueError("degenerate segment: zero delta")
    a0, a1, a2 = _rank3(abs(d[0]), abs(d[1]), abs(d[2]))
    return AxisRank(a0, a1, a2, swapped=bool(d[a0] < 0))


def projected_radii(d, r: float, rank: AxisRank | None = None) -> tuple[float, float]:
    """Half-widths of the capsule around the traversal line per minor axis.

    r_hat_i = r * sqrt(1 + (d_ai / d_a0)^2) is the exact worst-case minor-axis
    deviation of any capsule point from the traversal line within a fixed
    major-axis slab, so slabs of this half-width are conservative.
    """
    d = np.asarray(d, dtype=np.float64)
    if rank is None:
        rank = rank_axes(d)
    da0 = abs(float(d[rank.a0]))
    r1 = r * np.sqrt(1.0 + (d[rank.a1] / da0) ** 2)
    r2 = r * np.sqrt(1.0 + (d[rank.a2] / da0) ** 2)
    return float(r1), float(r2)


# ---------------------------------------------------------------------------
# numba kernels


@njit(cache=True)
def _rank3(ax, ay, az):
    a0 = 0
    if ay > ax and ay >= az:
        a0 = 1
    elif az > ax and az > ay:
        a0 = 2
    if a0 == 0:
        r1, r2 = 1, 2
    elif a0 == 1:
        r1, r2 = 0, 2
    else:
        r1, r2 = 0, 1
    if (ay if r2 == 1 else az) > (ax if r1 == 0 else ay):
        a1, a2 = r2, r1
    else:
        a1, a2 = r1, r2
    return a0, a1, a2


@njit(cache=True)
def _grow(arr, n):
    out = np.empty((arr.shape[0] * 2, 3), np.int64)
    out[:n] = arr[:n]
    return out


@njit(cache=True)
def aabb_cells(v0, v1, r):
    """Voxels overlapping the capsule AABB inflated by r (voxel units)."""
    lo = np.empty(3)
    hi = np.empty(3)
    for a in range(3):
        lo[a] = min(v0[a], v1[a]) - r
        hi[a] = max(v0[a], v1[a]) + r
    x0 = int(np.floor(lo[0]))
    x1 = int(np.floor(hi[0]))
    y0 = int(np.floor(lo[1]))
    y1 = int(np.floor(hi[1]))
    z0 = int(np.floor(lo[2]))
    z1 = int(np.floor(hi[2]))
    n = (x1 - x0 + 1) * (y1 - y0 + 1) * (z1 - z0 + 1)
    out = np.empty((n, 3), np.int64)
    i = 0
    for z in range(z0, z1 + 1):
        for y in range(y0, y1 + 1):
            for x in range(x0, x1 + 1):
                out[i, 0] = x
                out[i, 1] = y
                out[i, 2] = z
                i += 1
    return out


@njit(cache=True)
def capsule_cells(v0in, v1in, r):
    """Conservative capsule traversal (voxel units).

    Major-axis slab walk; each slab voxelizes a 2D box of the projected
    radii, clamped to the r-inflated AABB so the visited set is always a
    subset of aabb_cells. A zero-length segment degrades to its bounding
    sphere's AABB.
    """
    d = np.empty(3)
    for a in range(3):
        d[a] = v1in[a] - v0in[a]
    if d[0] == 0.0 and d[1] == 0.0 and d[2] == 0.0:
        return aabb_cells(v0in, v1in, r)
    a0, a1, a2 = _rank3(abs(d[0]), abs(d[1]), abs(d[2]))
    v0 = np.empty(3)
    v1 = np.empty(3)
    if d[a0] < 0.0:
        for a in range(3):
            v0[a] = v1in[a]
            v1[a] = v0in[a]
            d[a] = -d[a]
    else:
        for a in range(3):
            v0[a] = v0in[a]
            v1[a] = v1in[a]
    s = d / d[a0]
    v0e = v0 - s * r
    v1e = v1 + s * r
    r1 = r * np.sqrt(1.0 + (d[a1] / d[a0]) ** 2)
    r2 = r * np.sqrt(1.0 + (d[a2] / d[a0]) ** 2)
    # r-inflated AABB bounds, in voxel coordinates
    lo_j = int(np.floor(min(v0[a1], v1[a1]) - r))
    hi_j = int(np.floor(max(v0[a1], v1[a1]) + r))
    lo_k = int(np.floor(min(v0[a2], v1[a2]) - r))
    hi_k = int(np.floor(max(v0[a2], v1[a2]) + r))

    cap = 64
    out = np.empty((cap, 3), np.int64)
    n = 0
    t_min = v0e[a0]
    t_max = v1e[a0]
    t0 = t_min
    p0 = v0e.copy()
    while t0 < t_max:
        t1 = min(t_max, np.floor(t0 + 1.0))
        p1 = v0e + s * (t1 - t_min)
        j_min = max(int(np.floor(min(p0[a1], p1[a1]) - r1)), lo_j)
        j_max = min(int(np.floor(max(p0[a1], p1[a1]) + r1)), hi_j)
        k_min = max(int(np.floor(min(p0[a2], p1[a2]) - r2)), lo_k)
        k_max = min(int(np.floor(max(p0[a2], p1[a2]) + r2)), hi_k)
        ci = int(np.floor(t0))
        for j in range(j_min, j_max + 1):
            for k in range(k_min, k_max + 1):
                if n == cap:
                    out = _grow(out, n)
                    cap *= 2
                out[n, a0] = ci
                out[n, a1] = j
                out[n, a2] = k
                n += 1
        t0 = t1
        p0 = p1
    return out[:n]


@njit(cache=True)
def dda_cells(v0, v1):
    """Voxels pierced by the zero-radius segment, in order (voxel units)."""
    x = int(np.floor(v0[0]))
    y = int(np.floor(v0[1]))
    z = int(np.floor(v0[2]))
    ex = int(np.floor(v1[0]))
    ey = int(np.floor(v1[1]))
    ez = int(np.floor(v1[2]))
    steps = abs(ex - x) + abs(ey - y) + abs(ez - z)
    out = np.empty((steps + 1, 3), np.int64)
    out[0, 0] = x
    out[0, 1] = y
    out[0, 2] = z
    if steps == 0:
        return out
    dx = v1[0] - v0[0]
    dy = v1[1] - v0[1]
    dz = v1[2] - v0[2]
    sx = 1 if dx > 0 else -1
    sy = 1 if dy > 0 else -1
    sz = 1 if dz > 0 else -1
    big = 1e30
    tmx = ((x + (1 if sx > 0 else 0)) - v0[0]) / dx if dx != 0.0 else big
    tmy = ((y + (1 if sy > 0 else 0)) - v0[1]) / dy if dy != 0.0 else big
    tmz = ((z + (1 if sz > 0 else 0)) - v0[2]) / dz if dz != 0.0 else big
    tdx = abs(1.0 / dx) if dx != 0.0 else big
    tdy = abs(1.0 / dy) if dy != 0.0 else big
    tdz = abs(1.0 / dz) if dz != 0.0 else big
    for i in range(1, steps + 1):
        if tmx <= tmy and tmx <= tmz:
            x += sx
            tmx += tdx
        elif tmy <= tmz:
            y += sy
            tmy += tdy
        else:
            z += sz
            tmz += tdz
        out[i, 0] = x
        out[i, 1] = y
        out[i, 2] = z
    return out


@njit(cache=True)
def _sdf(px, py, pz, ax, ay, az, bx, by, bz,
         n0x, n0y, n0z, n1x, n1y, n1z, r, use_clip):
    dx = bx - ax
    dy = by - ay
    dz = bz - az
    p0x = px - ax
    p0y = py - ay
    p0z = pz - az
    dd = dx * dx + dy * dy + dz * dz
    if dd > 0.0:
        h = (p0x * dx + p0y * dy + p0z * dz) / dd
        if h < 0.0:
            h = 0.0
        elif h > 1.0:
            h = 1.0
    else:
        h = 0.0
    qx = p0x - dx * h
    qy = p0y - dy * h
    qz = p0z - dz * h
    sdf = np.sqrt(qx * qx + qy * qy + qz * qz) - r
    if use_clip:
        s0 = -(p0x * n0x + p0y * n0y + p0z * n0z)
        s1 = (px - bx) * n1x + (py - by) * n1y + (pz - bz) * n1z
        if s0 > sdf:
            sdf = s0
        if s1 > sdf:
            sdf = s1
    return sdf


@njit(cache=True)
def _occupancy(px, py, pz, ax, ay, az, bx, by, bz,
               n0x, n0y, n0z, n1x, n1y, n1z, r, r_min, use_clip):
    rc = r if r > r_min else r_min
    corr = (r / rc) ** 2
    sdf = _sdf(px, py, pz, ax, ay, az, bx, by, bz,
               n0x, n0y, n0z, n1x, n1y, n1z, rc, use_clip)
    occ = 0.5 - sdf
    if occ < 0.0:
        occ = 0.0
    elif occ > 1.0:
        occ = 1.0
    return occ * corr


@njit(cache=True, parallel=True)
def _voxelize_kernel(verts, segs, normals, use_clip, r, rt, r_min, res,
                     method, bounds, partial, sat):
    n_chunks = bounds.shape[0] - 1
    for w in prange(n_chunks):
        grid = partial[w]
        for si in range(bounds[w], bounds[w + 1]):
            i = segs[si]
            v0 = verts[i]
            v1 = verts[i + 1]
            if method == 0:
                cells = dda_cells(v0, v1)
            elif method == 1:
                cells = capsule_cells(v0, v1, rt)
            else:
                cells = aabb_cells(v0, v1, rt)
            for c in range(cells.shape[0]):
                x = cells[c, 0]
                y = cells[c, 1]
                z = cells[c, 2]
                if x < 0 or y < 0 or z < 0 or x >= res or y >= res or z >= res:
                    continue
                occ = _occupancy(x + 0.5, y + 0.5, z + 0.5,
                                 v0[0], v0[1], v0[2], v1[0], v1[1], v1[2],
                                 normals[i, 0], normals[i, 1], normals[i, 2],
                                 normals[i + 1, 0], normals[i + 1, 1], normals[i + 1, 2],
                                 r, r_min, use_clip)
                q = int(round(occ * OCC_SCALE))
                idx = x + res * (y + res * z)
                word = np.int64(grid[idx])
                cnt = word >> 16
                o = word & 0xFFFF
                if cnt < 0xFFFF:
                    cnt += 1
                else:
                    sat[w] += 1
                o += q
                if o > 0xFFFF:
                    o = 0xFFFF
                grid[idx] = np.uint32((cnt << 16) | o)


# ---------------------------------------------------------------------------
# python-facing traversal API


def _capsule_voxel_units(c: Capsule, g: GridDesc) -> tuple[np.ndarray, np.ndarray, float]:
    return g.to_voxel(c.v0), g.to_voxel(c.v1), c.r / g.voxel_size


def traverse_capsule(c: Capsule, g: GridDesc, visit) -> None:
    """Call visit((x, y, z)) for every voxel of the conservative traversal."""
    v0, v1, r = _capsule_voxel_units(c, g)
    for x, y, z in capsule_cells(v0, v1, r):
        visit((int(x), int(y), int(z)))


def traverse_dda(v0, v1, g: GridDesc, visit) -> None:
    for x, y, z in dda_cells(g.to_voxel(v0), g.to_voxel(v1)):
        visit((int(x), int(y), int(z)))


def traverse_aabb(c: Capsule, g: GridDesc, visit) -> None:
    v0, v1, r = _capsule_voxel_units(c, g)
    for x, y, z in aabb_cells(v0, v1, r):
        visit((int(x), int(y), int(z)))


def clipped_capsule_sdf(p, c: Capsule, clip: bool = True) -> float:
    p = np.asarray(p, dtype=np.float64)
    return float(_sdf(p[0], p[1], p[2], c.v0[0], c.v0[1], c.v0[2],
                      c.v1[0], c.v1[1], c.v1[2],
                      c.n0[0], c.n0[1], c.n0[2], c.n1[0], c.n1[1], c.n1[2],
                      c.r, clip))


def capsule_occupancy(p, c: Capsule, r_min: float = DEFAULT_R_MIN, clip: bool = True) -> float:
    if not r_min > 0:
        raise ValueError("r_min must be positive")
    p = np.asarray(p, dtype=np.float64)
    return float(_occupancy(p[0], p[1], p[2], c.v0[0], c.v0[1], c.v0[2],
                            c.v1[0], c.v1[1], c.v1[2],
                            c.n0[0], c.n0[1], c.n0[2], c.n1[0], c.n1[1], c.n1[2],
                            c.r, r_min, clip))


# ---------------------------------------------------------------------------
# occupancy pyramid


@dataclass
class OccupancyPyramid:
    base: np.ndarray  # (res, res, res) uint32, axes (z, y, x)
    occ_levels: list  # level 0 = clamped base occupancy ... 1^3, float64
    grid: GridDesc
    r_min: float
    saturated: int = 0
    visited: int = 0  # total voxel visits across segments (pre-saturation)

    @property
    def resolution(self) -> int:
        return self.base.shape[0]

    def counts(self) -> np.ndarray:
        return (self.base >> np.uint32(16)).astype(np.int64)

    def occupancy(self) -> np.ndarray:
        """Per-voxel summed occupancy (unclamped), float64."""
        return (self.base & np.uint32(0xFFFF)).astype(np.float64) / OCC_SCALE

    def total_occupancy(self) -> float:
        return float(self.occupancy().sum())

    def dump(self, path: str | Path) -> None:
        parts = [b"VOXP", struct.pack("<I", self.resolution),
                 self.base.astype("<u4").tobytes()]
        for lvl in self.occ_levels[1:]:
            parts.append(lvl.astype("<f4").tobytes())
        Path(path).write_bytes(b"".join(parts))


def build_mips(base_occ: np.ndarray) -> list:
    """Averaging mip chain of a clamped occupancy field, level 0 included."""
    res = base_occ.shape[0]
    if base_occ.shape != (res, res, res) or res & (res - 1):
        raise ValueError("base must be power-of-two cubic")
    levels = [np.clip(base_occ.astype(np.float64), 0.0, 1.0)]
    while levels[-1].shape[0] > 1:
        a = levels[-1]
        h = a.shape[0] // 2
        levels.append(a.reshape(h, 2, h, 2, h, 2).mean(axis=(1, 3, 5)))
    return levels


def segment_arrays(ls: LineSet, cn: np.ndarray | None, g: GridDesc,
                   r_world: float | None = None):
    """Voxel-unit vertex/normal/segment arrays shared by voxelize and abuffer."""
    verts = (ls.vertices.astype(np.float64) - g.world_min) / g.voxel_size
    segs = ls.segment_vertex_ids()
    if cn is None:
        normals = np.zeros((ls.n_vertices, 3), dtype=np.float64)
        use_clip = False
    else:
        normals = np.ascontiguousarray(cn, dtype=np.float64)
        use_clip = True
    r = (ls.radius if r_world is None else r_world) / g.voxel_size
    return verts, segs, normals, use_clip, r


def footprint_radius(r: float, r_min: float = DEFAULT_R_MIN) -> float:
    """Traversal radius covering the whole anti-aliased occupancy footprint.

    Per-voxel occupancy is nonzero for centers within max(r, r_min) + 0.5
    voxels of the clipped segment, so mass-preserving traversal must use
    this radius, not the geometric one. The occupancy and A-buffer passes
    share it so the scanned counts stay valid for the second traversal.
    """
    return max(r, r_min) + 0.5


def _chunk_bounds(n: int, workers: int) -> np.ndarray:
    workers = max(1, min(workers, max(1, n)))
    return np.linspace(0, n, workers + 1).astype(np.int64)


def voxelize(ls: LineSet, cn: np.ndarray | None, g: GridDesc,
             method: str = "capsule", r_min: float = DEFAULT_R_MIN,
             workers: int | None = None, r_world: float | None = None) -> OccupancyPyramid:
    """Accumulate all segments into the packed base level and build mips.

    The result is independent of segment order and worker count: each
    worker accumulates a private integer grid and the partial grids are
    merged with saturating integer addition.
    """
    if method not in METHODS:
        raise ValueError(f"unknown voxelization method {method!r}")
    if not r_min > 0:
        raise ValueError("r_min must be positive")
    res = g.resolution
    verts, segs, normals, use_clip, r = segment_arrays(ls, cn, g, r_world)
    workers = workers or get_num_threads()
    bounds = _chunk_bounds(len(segs), workers)
    n_chunks = len(bounds) - 1
    partial = np.zeros((n_chunks, res ** 3), dtype=np.uint32)
    sat = np.zeros(n_chunks, dtype=np.int64)
    if len(segs):
        _voxelize_kernel(verts, segs, normals, use_clip, r,
                         footprint_radius(r, r_min), r_min, res,
                         METHODS[method], bounds, partial, sat)
    counts = (partial >> np.uint32(16)).astype(np.int64).sum(axis=0)
    occ = (partial & np.uint32(0xFFFF)).astype(np.int64).sum(axis=0)
    visited = int(counts.sum())
    np.minimum(counts, 0xFFFF, out=counts)
    np.minimum(occ, 0xFFFF, out=occ)
    base = ((counts << 16) | occ).astype(np.uint32).reshape(res, res, res)
    occ_levels = build_mips(np.minimum(occ, OCC_SCALE).reshape(res, res, res) / OCC_SCALE)
    return OccupancyPyramid(base, occ_levels, g, r_min,
                            saturated=int(sat.sum()), visited=visited)
