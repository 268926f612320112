"""Line-set data model, file I/O, procedural generators and decimation.

A line set is a flat vertex buffer plus polyline offsets (with terminal
sentinel) and one shared capsule radius. Segment i is the capsule from
vertex i to vertex i+1; indices that would cross a polyline boundary are
not segments.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "LineSet",
    "Capsule",
    "LineSetError",
    "ParseError",
    "load_lineset",
    "save_lineset",
    "compute_clip_normals",
    "generate",
    "decimate",
]


class LineSetError(ValueError):
    pass


class ParseError(LineSetError):
    pass


@dataclass
class LineSet:
    vertices: np.ndarray  # (N, 3) float32
    polyline_offsets: np.ndarray  # (P + 1,) int64, strictly increasing, [0, ..., N]
    radius: float  # world units, > 0

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float32)
        self.polyline_offsets = np.ascontiguousarray(self.polyline_offsets, dtype=np.int64)
        self.validate()

    def validate(self) -> None:
        off = self.polyline_offsets
        if off.ndim != 1 or len(off) < 2 or off[0] != 0 or off[-1] != len(self.vertices):
            raise LineSetError("polyline offsets must start at 0 and end at the vertex count")
        lengths = np.diff(off)
        if np.any(lengths < 2):
            raise LineSetError("every polyline needs at least 2 vertices")
        if not (self.radius > 0):
            raise LineSetError("radius must be positive")
        if not np.all(np.isfinite(self.vertices)):
            raise LineSetError("non-finite vertex coordinate")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_polylines(self) -> int:
        return len(self.polyline_offsets) - 1

    @property
    def n_segments(self) -> int:
        return self.n_vertices - self.n_polylines

    def segment_vertex_ids(self) -> np.ndarray:
        """Global vertex index i of every segment v_i -> v_{i+1}, in order."""
        off = self.polyline_offsets
        mask = np.ones(self.n_vertices, dtype=bool)
        mask[off[1:] - 1] = False  # last vertex of each polyline starts no segment
        return np.nonzero(mask)[0].astype(np.int64)

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0).astype(np.float64), self.vertices.max(axis=0).astype(np.float64)


@dataclass
class Capsule:
    """One line segment with radius and two clipping planes."""

    v0: np.ndarray
    v1: np.ndarray
    r: float
    n0: np.ndarray
    n1: np.ndarray

    def __post_init__(self):
        self.v0 = np.asarray(self.v0, dtype=np.float64)
        self.v1 = np.asarray(self.v1, dtype=np.float64)
        self.n0 = np.asarray(self.n0, dtype=np.float64)
        self.n1 = np.asarray(self.n1, dtype=np.float64)
        if not self.r > 0:
            raise LineSetError("capsule radius must be positive")


_MAGIC = b"LNS1"


def load_lineset(path: str | Path, fmt: str | None = None) -> LineSet:
    """Read a line set in lns-text or lns-binary format.

    When fmt is None the format is sniffed from the first four bytes.
    """
    path = Path(path)
    raw = path.read_bytes()
    if fmt is None:
        fmt = "lns-binary" if raw[:4] == _MAGIC else "lns-text"
    if fmt == "lns-binary":
        return _load_binary(raw, path)
    if fmt == "lns-text":
        return _load_text(raw, path)
    raise ValueError(f"unknown line-set format {fmt!r}")


def _load_text(raw: bytes, path: Path) -> LineSet:
    lines = raw.decode("ascii", errors="replace").splitlines()
    if not lines:
        raise ParseError(f"{path}: empty file, no polylines")
    header = lines[0].split()
    if len(header) != 3 or header[0] != "lns" or header[1] != "1" or not header[2].startswith("radius="):
        raise ParseError(f"{path}:1: malformed header (want 'lns 1 radius=<float>')")
    try:
        radius = float(header[2][len("radius="):])
    except ValueError:
        raise ParseError(f"{path}:1: malformed radius") from None

    verts: list[tuple[float, float, float]] = []
    offsets = [0]
    open_poly = False
    for ln, line in enumerate(lines[1:], start=2):
        s = line.strip()
        if not s:
            if open_poly:
                _close_poly(offsets, len(verts), path, ln)
                open_poly = False
            continue
        parts = s.split()
        if parts[0] != "v" or len(parts) != 4:
            raise ParseError(f"{path}:{ln}: expected 'v x y z'")
        try:
            xyz = (float(parts[1]), float(parts[2]), float(parts[3]))
        except ValueError:
            raise ParseError(f"{path}:{ln}: bad coordinate") from None
        if not all(math.isfinite(c) for c in xyz):
            raise ParseError(f"{path}:{ln}: non-finite coordinate")
        verts.append(xyz)
        open_poly = True
    if open_poly:
        _close_poly(offsets, len(verts), path, len(lines))
    if len(offsets) < 2:
        raise ParseError(f"{path}: no polylines")
    try:
        return LineSet(np.array(verts, dtype=np.float32), np.array(offsets), radius)
    except LineSetError as e:
        raise ParseError(f"{path}: {e}") from None


def _close_poly(offsets: list[int], end: int, path: Path, ln: int) -> None:
    if end - offsets[-1] < 2:
        raise ParseError(f"{path}:{ln}: polyline with fewer than 2 vertices")
    offsets.append(end)


def _load_binary(raw: bytes, path: Path) -> LineSet:
    if raw[:4] != _MAGIC:
        raise ParseError(f"{path}: byte 0: bad magic (want LNS1)")
    if len(raw) < 16:
        raise ParseError(f"{path}: byte {len(raw)}: truncated header")
    n_poly, n_vert, radius = struct.unpack_from("<IIf", raw, 4)
    if n_poly == 0:
        raise ParseError(f"{path}: byte 4: no polylines")
    need = 16 + 4 * (n_poly + 1) + 12 * n_vert
    if len(raw) != need:
        raise ParseError(f"{path}: byte {len(raw)}: expected {need} bytes")
    off = np.frombuffer(raw, dtype="<u4", count=n_poly + 1, offset=16).astype(np.int64)
    verts = np.frombuffer(raw, dtype="<f4", count=3 * n_vert, offset=16 + 4 * (n_poly + 1))
    try:
        return LineSet(verts.reshape(n_vert, 3).copy(), off, float(radius))
    except LineSetError as e:
        raise ParseError(f"{path}: {e}") from None


def save_lineset(ls: LineSet, path: str | Path, fmt: str = "lns-binary") -> None:
    path = Path(path)
    if fmt == "lns-binary":
        parts = [
            _MAGIC,
            struct.pack("<IIf", ls.n_polylines, ls.n_vertices, ls.radius),
            ls.polyline_offsets.astype("<u4").tobytes(),
            ls.vertices.astype("<f4").tobytes(),
        ]
        path.write_bytes(b"".join(parts))
    elif fmt == "lns-text":
        out = [f"lns 1 radius={float(ls.radius)!r}"]
        off = ls.polyline_offsets
        for p in range(ls.n_polylines):
            for v in ls.vertices[off[p]:off[p + 1]]:
                out.append(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}")
            out.append("")
        path.write_text("\n".join(out) + "\n")
    else:
        raise ValueError(f"unknown line-set format {fmt!r}")


def compute_clip_normals(ls: LineSet) -> np.ndarray:
    """Per-vertex unit clip-plane normals, (N, 3) float64.

    Interior vertices use the central difference of their neighbours;
    polyline endpoints use the one-sided difference. A zero difference
    falls back to the adjacent segment direction.
    """
    v = ls.vertices.astype(np.float64)
    normals = np.zeros_like(v)
    for p in range(ls.n_polylines):
        s, e = ls.polyline_offsets[p], ls.polyline_offsets[p + 1]
        d = np.zeros((e - s, 3))
        d[0] = v[s + 1] - v[s]
        d[-1] = v[e - 1] - v[e - 2]
        if e - s > 2:
            d[1:-1] = v[s + 2:e] - v[s:e - 2]
        seg_dirs = v[s + 1:e] - v[s:e - 1]
        lens = np.linalg.norm(d, axis=1)
        for i in np.nonzero(lens == 0)[0]:
            # coincident neighbours: borrow the nearest nonzero segment direction
            cand = seg_dirs[min(i, len(seg_dirs) - 1)]
            if np.linalg.norm(cand) == 0:
                nz = seg_dirs[np.linalg.norm(seg_dirs, axis=1) > 0]
                if len(nz) == 0:
                    raise LineSetError(f"degenerate polyline {p}: all vertices coincide")
                cand = nz[0]
            d[i] = cand
            lens[i] = np.linalg.norm(cand)
        normals[s:e] = d / lens[:, None]
    return normals


def decimate(ls: LineSet, n: int) -> LineSet:
    """Keep every n-th vertex of each polyline, always including the last."""
    if n < 1:
        raise LineSetError("decimation step must be >= 1")
    if n == 1:
        return LineSet(ls.vertices.copy(), ls.polyline_offsets.copy(), ls.radius)
    keep_chunks = []
    offsets = [0]
    total = 0
    for p in range(ls.n_polylines):
        s, e = int(ls.polyline_offsets[p]), int(ls.polyline_offsets[p + 1])
        idx = list(range(s, e, n))
        if idx[-1] != e - 1:
            idx.append(e - 1)
        keep_chunks.append(np.array(idx, dtype=np.int64))
        total += len(idx)
        offsets.append(total)
    keep = np.concatenate(keep_chunks)
    return LineSet(ls.vertices[keep], np.array(offsets), ls.radius)


def generate(kind: str, seed: int = 0, **params) -> LineSet:
    """Deterministic procedural line sets for tests and benchmarks."""
    if kind == "helix":
        return _gen_helix(**params)
    if kind == "random_streamlines":
        return _gen_streamlines(seed=seed, **params)
    if kind == "grid_diagonals":
        return _gen_grid_diagonals(seed=seed, **params)
    raise LineSetError(f"unknown generator kind {kind!r}")


def _gen_helix(turns: float = 2.0, verts: int = 100, coil_radius: float = 4.0,
               pitch: float = 2.0, radius: float = 0.25) -> LineSet:
    if verts < 2 or turns <= 0 or radius <= 0:
        raise LineSetError("helix needs verts >= 2, turns > 0, radius > 0")
    t = np.linspace(0.0, 2.0 * np.pi * turns, verts)
    v = np.stack([coil_radius * np.cos(t),
                  coil_radius * np.sin(t),
                  pitch * t / (2.0 * np.pi)], axis=1).astype(np.float32)
    return LineSet(v, np.array([0, verts]), radius)


def _gen_streamlines(polylines: int = 50, verts_per_line: int = 30,
                     seg_length: float = 1.0, domain: float = 32.0,
                     radius: float = 0.25, curl: float = 0.6, seed: int = 0) -> LineSet:
    if polylines < 1 or verts_per_line < 2 or seg_length <= 0 or radius <= 0:
        raise LineSetError("bad random_streamlines parameters")
    rng = np.random.default_rng(seed)
    lo, hi = 0.2 * domain, 0.8 * domain
    chunks = []
    for _ in range(polylines):
        p = rng.uniform(lo, hi, size=3)
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        pts = [p.copy()]
        for _ in range(verts_per_line - 1):
            d = d + curl * rng.normal(size=3)
            d /= np.linalg.norm(d)
            p = p + seg_length * d
            # reflect the walk back into the domain
            for a in range(3):
                if p[a] < lo or p[a] > hi:
                    d[a] = -d[a]
                    p[a] = np.clip(p[a], lo, hi)
            pts.append(p.copy())
        chunks.append(np.array(pts))
    v = np.concatenate(chunks).astype(np.float32)
    offsets = np.arange(polylines + 1, dtype=np.int64) * verts_per_line
    return LineSet(v, offsets, radius)


def _gen_grid_diagonals(count: int = 64, length: float = 16.0, domain: float = 128.0,
                        radius: float = 0.2, seed: int = 0) -> LineSet:
    """2-vertex segments along the body diagonal (1,1,1), random offsets."""
    if count < 1 or length <= 0 or radius <= 0 or domain <= length + 4:
        raise LineSetError("bad grid_diagonals parameters")
    rng = np.random.default_rng(seed)
    starts = rng.uniform(2.0, domain - length - 2.0, size=(count, 3))
    ends = starts + length
    v = np.empty((2 * count, 3), dtype=np.float32)
    v[0::2] = starts
    v[1::2] = ends
    offsets = np.arange(count + 1, dtype=np.int64) * 2
    return LineSet(v, offsets, radius)
