"""Per-voxel fragment lists via prefix-sum offsets and a second traversal.

Three construction strategies:

* VSS  voxelize-sort-scan: emit (morton, segment) pairs, sort, run-length.
  Reference path; any correct sort serves.
* VSV  voxelize-scan-voxelize: exclusive scan over the packed primitive
  counts, then a second traversal writes each segment index into its
  voxel's slice. Two semantic touches per capsule-voxel incidence.
* VCSV voxelize-cull-scan-voxelize: VSV restricted to camera-visible
  voxels, with whole segments rejected by a hierarchical AABB test
  against the culling pyramid.

Fragments are bare 32-bit segment indices (the index i of vertex v_i).
Within a voxel, fragments appear in segment-processing order; the chunked
parallel writer reproduces the sequential layout for any worker count.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit, prange, get_num_threads

from .culling import CullingPyramid
from .grid import GridDesc
from .lineset import LineSet
from .voxelizer import (DEFAULT_R_MIN, OccupancyPyramid, METHODS, aabb_cells,
                        capsule_cells, dda_cells, footprint_radius,
                        segment_arrays, _chunk_bounds)

__all__ = [
    "OffsetTable",
    "ABuffer",
    "ABufferError",
    "morton_encode",
    "morton_decode",
    "scan_offsets",
    "build_vss",
    "build_vsv",
    "build_vcsv",
]


class ABufferError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# morton codes (x in the least-significant interleave slot)


def _part1by2(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64) & np.uint64(0x3FF)
    x = (x | (x << np.uint64(16))) & np.uint64(0x30000FF)
    x = (x | (x << np.uint64(8))) & np.uint64(0x300F00F)
    x = (x | (x << np.uint64(4))) & np.uint64(0x30C30C3)
    x = (x | (x << np.uint64(2))) & np.uint64(0x9249249)
    return x


def _unpart1by2(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64) & np.uint64(0x9249249)
    x = (x | (x >> np.uint64(2))) & np.uint64(0x30C30C3)
    x = (x | (x >> np.uint64(4))) & np.uint64(0x300F00F)
    x = (x | (x >> np.uint64(8))) & np.uint64(0x30000FF)
    x = (x | (x >> np.uint64(16))) & np.uint64(0x3FF)
    return x


def morton_encode(coord) -> int | np.ndarray:
    """Interleave (x, y, z) voxel coordinates into a 30-bit morton code."""
    c = np.asarray(coord)
    scalar = c.ndim == 1
    c = np.atleast_2d(c)
    if np.any(c < 0) or np.any(c >= 1024):
        raise ValueError("morton coordinate out of range [0, 1024)")
    code = (_part1by2(c[:, 0]) | (_part1by2(c[:, 1]) << np.uint64(1))
            | (_part1by2(c[:, 2]) << np.uint64(2))).astype(np.uint32)
    return int(code[0]) if scalar else code


def morton_decode(code) -> np.ndarray:
    c = np.atleast_1d(np.asarray(code, dtype=np.uint64))
    out = np.stack([_unpart1by2(c), _unpart1by2(c >> np.uint64(1)),
                    _unpart1by2(c >> np.uint64(2))], axis=1).astype(np.int64)
    return out[0] if np.isscalar(code) or np.asarray(code).ndim == 0 else out


# ---------------------------------------------------------------------------
# offsets


@dataclass
class OffsetTable:
    offsets: np.ndarray  # (res^3,) int64, exclusive scan in x-fastest order
    counts: np.ndarray   # (res^3,) int64, culling-masked fragment counts
    total: int


def scan_offsets(pyramid: OccupancyPyramid, culling: CullingPyramid | None = None,
                 capacity: int | None = None) -> OffsetTable:
    counts = pyramid.counts().ravel()
    if culling is not None:
        counts = np.where(culling.base.ravel() != 0, counts, 0)
    total = int(counts.sum())
    if capacity is not None and total > capacity:
        raise ABufferError(f"fragment total {total} exceeds capacity {capacity}")
    offsets = np.zeros_like(counts)
    np.cumsum(counts[:-1], out=offsets[1:])
    return OffsetTable(offsets, counts, total)


@dataclass
class ABuffer:
    table: OffsetTable
    fragments: np.ndarray  # (total,) uint32 segment indices
    resolution: int
    stats: dict = field(default_factory=dict)

    @property
    def total(self) -> int:
        return self.table.total

    def voxel_fragments(self, x: int, y: int, z: int) -> np.ndarray:
        idx = x + self.resolution * (y + self.resolution * z)
        o = self.table.offsets[idx]
        return self.fragments[o:o + self.table.counts[idx]]

    def dump(self, path: str | Path) -> None:
        parts = [b"ABUF", struct.pack("<I", self.resolution ** 3),
                 self.table.offsets.astype("<u8").tobytes(),
                 struct.pack("<I", self.total),
                 self.fragments.astype("<u4").tobytes()]
        Path(path).write_bytes(b"".join(parts))


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True)
def _segment_visible(cull_flat, cull_offs, res, n_levels, lo_x, lo_y, lo_z, hi_x, hi_y, hi_z):
    # DFS from the 1^3 top level; a clear node prunes its subtree, the
    # first visible base voxel overlapping [lo, hi] accepts the segment.
    stack = np.empty((8 * n_levels + 8, 4), np.int64)
    stack[0, 0] = n_levels - 1
    stack[0, 1] = 0
    stack[0, 2] = 0
    stack[0, 3] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        l = stack[sp, 0]
        x = stack[sp, 1]
        y = stack[sp, 2]
        z = stack[sp, 3]
        size = 1 << l
        if (x << l) > hi_x or ((x + 1) << l) <= lo_x:
            continue
        if (y << l) > hi_y or ((y + 1) << l) <= lo_y:
            continue
        if (z << l) > hi_z or ((z + 1) << l) <= lo_z:
            continue
        res_l = res >> l
        if cull_flat[cull_offs[l] + x + res_l * (y + res_l * z)] == 0:
            continue
        if l == 0:
            return True
        for dz in range(2):
            for dy in range(2):
                for dx in range(2):
                    stack[sp, 0] = l - 1
                    stack[sp, 1] = 2 * x + dx
                    stack[sp, 2] = 2 * y + dy
                    stack[sp, 3] = 2 * z + dz
                    sp += 1
    return False


@njit(cache=True)
def _seg_cells(verts, i, r, method):
    v0 = verts[i]
    v1 = verts[i + 1]
    if method == 0:
        return dda_cells(v0, v1)
    elif method == 1:
        return capsule_cells(v0, v1, r)
    return aabb_cells(v0, v1, r)


@njit(cache=True, parallel=True)
def _chunk_count_kernel(verts, segs, r, res, method, bounds, use_cull,
                        cull_base, cull_flat, cull_offs, n_levels, chunk_counts):
    n_chunks = bounds.shape[0] - 1
    for w in prange(n_chunks):
        cc = chunk_counts[w]
        for si in range(bounds[w], bounds[w + 1]):
            i = segs[si]
            if use_cull:
                lo_x = int(np.floor(min(verts[i, 0], verts[i + 1, 0]) - r))
                hi_x = int(np.floor(max(verts[i, 0], verts[i + 1, 0]) + r))
                lo_y = int(np.floor(min(verts[i, 1], verts[i + 1, 1]) - r))
                hi_y = int(np.floor(max(verts[i, 1], verts[i + 1, 1]) + r))
                lo_z = int(np.floor(min(verts[i, 2], verts[i + 1, 2]) - r))
                hi_z = int(np.floor(max(verts[i, 2], verts[i + 1, 2]) + r))
                if not _segment_visible(cull_flat, cull_offs, res, n_levels,
                                        lo_x, lo_y, lo_z, hi_x, hi_y, hi_z):
                    continue
            cells = _seg_cells(verts, i, r, method)
            for c in range(cells.shape[0]):
                x = cells[c, 0]
                y = cells[c, 1]
                z = cells[c, 2]
                if x < 0 or y < 0 or z < 0 or x >= res or y >= res or z >= res:
                    continue
                idx = x + res * (y + res * z)
                if use_cull and cull_base[idx] == 0:
                    continue
                cc[idx] += 1


@njit(cache=True, parallel=True)
def _write_kernel(verts, segs, r, res, method, bounds, use_cull,
                  cull_base, cull_flat, cull_offs, n_levels, cursors, frags):
    n_chunks = bounds.shape[0] - 1
    for w in prange(n_chunks):
        cur = cursors[w]
        for si in range(bounds[w], bounds[w + 1]):
            i = segs[si]
            if use_cull:
                lo_x = int(np.floor(min(verts[i, 0], verts[i + 1, 0]) - r))
                hi_x = int(np.floor(max(verts[i, 0], verts[i + 1, 0]) + r))
                lo_y = int(np.floor(min(verts[i, 1], verts[i + 1, 1]) - r))
                hi_y = int(np.floor(max(verts[i, 1], verts[i + 1, 1]) + r))
                lo_z = int(np.floor(min(verts[i, 2], verts[i + 1, 2]) - r))
                hi_z = int(np.floor(max(verts[i, 2], verts[i + 1, 2]) + r))
                if not _segment_visible(cull_flat, cull_offs, res, n_levels,
                                        lo_x, lo_y, lo_z, hi_x, hi_y, hi_z):
                    continue
            cells = _seg_cells(verts, i, r, method)
            for c in range(cells.shape[0]):
                x = cells[c, 0]
                y = cells[c, 1]
                z = cells[c, 2]
                if x < 0 or y < 0 or z < 0 or x >= res or y >= res or z >= res:
                    continue
                idx = x + res * (y + res * z)
                if use_cull and cull_base[idx] == 0:
                    continue
                frags[cur[idx]] = i
                cur[idx] += 1


@njit(cache=True, parallel=True)
def _emit_kernel(verts, segs, r, res, method, bounds, starts, codes, out_segs):
    n_chunks = bounds.shape[0] - 1
    for w in prange(n_chunks):
        pos = starts[w]
        for si in range(bounds[w], bounds[w + 1]):
            i = segs[si]
            cells = _seg_cells(verts, i, r, method)
            for c in range(cells.shape[0]):
                x = cells[c, 0]
                y = cells[c, 1]
                z = cells[c, 2]
                if x < 0 or y < 0 or z < 0 or x >= res or y >= res or z >= res:
                    continue
                codes[pos] = x + res * (y + res * z)
                out_segs[pos] = i
                pos += 1


# ---------------------------------------------------------------------------
# strategies


def _second_pass(ls: LineSet, cn, g: GridDesc, pyramid: OccupancyPyramid,
                 culling: CullingPyramid | None, method: str, workers: int | None,
                 r_world: float | None = None):
    verts, segs, _, _, r = segment_arrays(ls, cn, g, r_world)
    # must mirror the voxelization traversal exactly: the scanned counts
    # become the slice capacities for the fragment writes
    r = footprint_radius(r, pyramid.r_min)
    res = g.resolution
    workers = workers or get_num_threads()
    bounds = _chunk_bounds(len(segs), workers)
    n_chunks = len(bounds) - 1
    table = scan_offsets(pyramid, culling)

    use_cull = culling is not None
    if use_cull:
        cull_flat, cull_offs, _ = culling.packed()
        cull_base = np.ascontiguousarray(culling.base.ravel())
        n_levels = len(culling.levels)
    else:
        cull_flat = np.zeros(1, dtype=np.uint8)
        cull_offs = np.zeros(2, dtype=np.int64)
        cull_base = np.zeros(1, dtype=np.uint8)
        n_levels = 1

    chunk_counts = np.zeros((n_chunks, res ** 3), dtype=np.int64)
    if len(segs):
        _chunk_count_kernel(verts, segs, r, res, METHODS[method], bounds, use_cull,
                            cull_base, cull_flat, cull_offs, n_levels, chunk_counts)
    written = chunk_counts.sum(axis=0)
    if pyramid.saturated == 0 and not np.array_equal(written, table.counts):
        raise ABufferError("fragment count mismatch between passes (nondeterministic traversal?)")
    # per-chunk cursors reproduce the sequential within-voxel order
    cursors = np.empty_like(chunk_counts)
    cursors[0] = table.offsets
    if n_chunks > 1:
        np.cumsum(chunk_counts[:-1], axis=0, out=cursors[1:])
        cursors[1:] += table.offsets
    frags = np.zeros(table.total, dtype=np.uint32)
    if len(segs):
        _write_kernel(verts, segs, r, res, METHODS[method], bounds, use_cull,
                      cull_base, cull_flat, cull_offs, n_levels, cursors, frags)
    incidences = int(written.sum())
    stats = {
        "incidences": incidences,
        "fragment_touches": 2 * incidences,  # count accumulate + index write
        "fragments": table.total,
    }
    return ABuffer(table, frags, res, stats)


def build_vsv(ls: LineSet, cn, g: GridDesc, pyramid: OccupancyPyramid,
              method: str = "capsule", workers: int | None = None,
              r_world: float | None = None) -> ABuffer:
    return _second_pass(ls, cn, g, pyramid, None, method, workers, r_world)


def build_vcsv(ls: LineSet, cn, g: GridDesc, pyramid: OccupancyPyramid,
               culling: CullingPyramid, method: str = "capsule",
               workers: int | None = None, r_world: float | None = None) -> ABuffer:
    return _second_pass(ls, cn, g, pyramid, culling, method, workers, r_world)


def build_vss(ls: LineSet, cn, g: GridDesc, method: str = "capsule",
              workers: int | None = None, capacity: int | None = None,
              r_world: float | None = None,
              r_min: float = DEFAULT_R_MIN) -> ABuffer:
    """Sort-based reference strategy; per-voxel multisets match VSV."""
    verts, segs, _, _, r = segment_arrays(ls, cn, g, r_world)
    r = footprint_radius(r, r_min)
    res = g.resolution
    workers = workers or get_num_threads()
    bounds = _chunk_bounds(len(segs), workers)
    n_chunks = len(bounds) - 1

    chunk_counts = np.zeros((n_chunks, res ** 3), dtype=np.int64)
    if len(segs):
        _chunk_count_kernel(verts, segs, r, res, METHODS[method], bounds, False,
                            np.zeros(1, np.uint8), np.zeros(1, np.uint8),
                            np.zeros(2, np.int64), 1, chunk_counts)
    per_chunk = chunk_counts.sum(axis=1)
    total = int(per_chunk.sum())
    if capacity is not None and total > capacity:
        raise ABufferError(f"fragment total {total} exceeds capacity {capacity}")
    starts = np.zeros(n_chunks, dtype=np.int64)
    np.cumsum(per_chunk[:-1], out=starts[1:])
    flat_idx = np.zeros(total, dtype=np.int64)
    out_segs = np.zeros(total, dtype=np.uint32)
    if len(segs):
        _emit_kernel(verts, segs, r, res, METHODS[method], bounds, starts,
                     flat_idx, out_segs)

    coords = np.stack([flat_idx % res, (flat_idx // res) % res,
                       flat_idx // (res * res)], axis=1)
    codes = morton_encode(coords) if total else np.zeros(0, dtype=np.uint32)
    order = np.argsort(codes, kind="stable")
    frags = out_segs[order]

    counts = np.bincount(flat_idx, minlength=res ** 3).astype(np.int64)
    # slice start of each voxel inside the morton-sorted buffer
    ii = np.arange(res ** 3)
    all_codes = morton_encode(np.stack([ii % res, (ii // res) % res,
                                        ii // (res * res)], axis=1))
    sorted_codes = codes[order]
    offsets = np.searchsorted(sorted_codes, all_codes).astype(np.int64)
    table = OffsetTable(offsets, counts, total)
    stats = {
        "incidences": total,
        "fragment_touches": 3 * total,  # pair emit + sorted gather + final write
        "sorted_elements": total,
        "fragments": total,
    }
    return ABuffer(table, frags, res, stats)
