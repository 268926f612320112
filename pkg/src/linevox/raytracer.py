"""Per-pixel voxel ray tracing with analytic clipped-capsule intersection.

Rays skip empty space through a binary occupancy hierarchy, step occupied
voxels face to face, and test each voxel's fragment list. A hit belongs
to the voxel containing its intersection point, which together with
conservative voxelization yields globally front-to-back ordering.
Transparent rays keep the k nearest packed depth-index keys per voxel and
re-scan the voxel for deeper keys when more than k hits occur.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit, prange

from .culling import Camera, CullingPyramid
from .grid import GridDesc
from .lineset import Capsule, LineSet
from .shading import ShadingVolume
from .voxelizer import OccupancyPyramid, segment_arrays

__all__ = ["Ray", "RenderSettings", "Image", "RenderScene", "tangent_color",
            "ray_capsule", "first_voxel", "render", "AMBIENT", "DIFFUSE"]

AMBIENT = 0.4
DIFFUSE = 0.6
_EPS_T = 1e-6  # face-stepping nudge, voxel units
_ALPHA_CUTOFF = 0.999


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    dir: np.ndarray

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=np.float64)
        d = np.asarray(self.dir, dtype=np.float64)
        n = np.linalg.norm(d)
        if n == 0.0:
            raise ValueError("ray direction must be nonzero")
        d = d / n
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "dir", d)


@dataclass
class RenderSettings:
    mode: str = "opaque"  # opaque | transparent
    alpha: float = 1.0
    k: int = 8
    background: tuple = (0.1, 0.1, 0.12)
    early_termination: bool = True

    def __post_init__(self):
        if self.mode not in ("opaque", "transparent"):
            raise ValueError(f"unknown render mode {self.mode!r}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        if not 1 <= self.k <= 64:
            raise ValueError("k must be in [1, 64]")


@dataclass
class Image:
    rgb: np.ndarray  # (H, W, 3) float64, linear
    hit_id: np.ndarray  # (H, W) int32, -1 = miss
    stats: dict = field(default_factory=dict)

    @property
    def width(self) -> int:
        return self.rgb.shape[1]

    @property
    def height(self) -> int:
        return self.rgb.shape[0]

    def srgb_bytes(self) -> bytes:
        return _to_srgb(self.rgb).tobytes()

    def save_ppm(self, path: str | Path) -> None:
        header = f"P6\n{self.width} {self.height}\n255\n".encode()
        Path(path).write_bytes(header + self.srgb_bytes())

    def save_hit_ids(self, path: str | Path) -> None:
        Path(path).write_bytes(b"HITI" + struct.pack("<II", self.width, self.height)
                               + self.hit_id.astype("<i4").tobytes())


def _to_srgb(linear: np.ndarray) -> np.ndarray:
    c = np.clip(linear, 0.0, 1.0)
    s = np.where(c <= 0.0031308, 12.92 * c, 1.055 * np.power(c, 1.0 / 2.4) - 0.055)
    return np.rint(s * 255.0).astype(np.uint8)


def tangent_color(d) -> np.ndarray:
    """Componentwise |d| / ||d||, the tractography direction encoding."""
    d = np.asarray(d, dtype=np.float64)
    n = np.linalg.norm(d)
    if n == 0:
        return np.array([0.5, 0.5, 0.5])
    return np.abs(d) / n


# ---------------------------------------------------------------------------
# intersection


@njit(cache=True)
def _ray_capsule(ox, oy, oz, dx, dy, dz,
                 ax, ay, az, bx, by, bz,
                 n0x, n0y, n0z, n1x, n1y, n1z, r, use_clip):
    """Smallest t >= 0 on the clipped capsule surface, or -1."""
    bax = bx - ax
    bay = by - ay
    baz = bz - az
    oax = ox - ax
    oay = oy - ay
    oaz = oz - az
    baba = bax * bax + bay * bay + baz * baz
    eps = 1e-12
    best = -1.0

    # clip-plane admissibility of a point
    def _ok(px, py, pz):
        if not use_clip:
            return True
        if (px - ax) * n0x + (py - ay) * n0y + (pz - az) * n0z < -1e-9:
            return False
        if (px - bx) * n1x + (py - by) * n1y + (pz - bz) * n1z > 1e-9:
            return False
        return True

    if baba > eps:
        bard = bax * dx + bay * dy + baz * dz
        baoa = bax * oax + bay * oay + baz * oaz
        rdoa = dx * oax + dy * oay + dz * oaz
        oaoa = oax * oax + oay * oay + oaz * oaz
        a_ = baba - bard * bard
        b_ = baba * rdoa - baoa * bard
        c_ = baba * oaoa - baoa * baoa - r * r * baba
        if abs(a_) > eps:
            disc = b_ * b_ - a_ * c_
            if disc >= 0.0:
                sq = np.sqrt(disc)
                for sgn in (-1.0, 1.0):
                    t = (-b_ + sgn * sq) / a_
                    if t >= 0.0:
                        y = baoa + t * bard
                        if -1e-9 <= y <= baba + 1e-9:
                            px = ox + dx * t
                            py = oy + dy * t
                            pz = oz + dz * t
                            if _ok(px, py, pz) and (best < 0.0 or t < best):
                                best = t

    # spherical caps (whole capsule end spheres; body roots covered above)
    for cap in range(2):
        cx = ax if cap == 0 else bx
        cy = ay if cap == 0 else by
        cz = az if cap == 0 else bz
        ocx = ox - cx
        ocy = oy - cy
        ocz = oz - cz
        bq = ocx * dx + ocy * dy + ocz * dz
        cq = ocx * ocx + ocy * ocy + ocz * ocz - r * r
        disc = bq * bq - cq
        if disc < 0.0:
            continue
        sq = np.sqrt(disc)
        for sgn in (-1.0, 1.0):
            t = -bq + sgn * sq
            if t < 0.0:
                continue
            px = ox + dx * t
            py = oy + dy * t
            pz = oz + dz * t
            y = (px - ax) * bax + (py - ay) * bay + (pz - az) * baz
            on_cap = (y <= 1e-9) if cap == 0 else (y >= baba - 1e-9)
            if baba <= eps:
                on_cap = cap == 0
            if on_cap and _ok(px, py, pz) and (best < 0.0 or t < best):
                best = t

    if use_clip:
        # clip-plane disks: ray-plane hits with the point inside the capsule
        for pl in range(2):
            if pl == 0:
                nx, ny, nz = n0x, n0y, n0z
                qx, qy, qz = ax, ay, az
            else:
                nx, ny, nz = n1x, n1y, n1z
                qx, qy, qz = bx, by, bz
            dn = dx * nx + dy * ny + dz * nz
            if abs(dn) < eps:
                continue
            t = ((qx - ox) * nx + (qy - oy) * ny + (qz - oz) * nz) / dn
            if t < 0.0:
                continue
            px = ox + dx * t
            py = oy + dy * t
            pz = oz + dz * t
            if baba > eps:
                h = ((px - ax) * bax + (py - ay) * bay + (pz - az) * baz) / baba
            else:
                h = 0.0
            if h < 0.0:
                h = 0.0
            elif h > 1.0:
                h = 1.0
            wx = px - (ax + bax * h)
            wy = py - (ay + bay * h)
            wz = pz - (az + baz * h)
            if wx * wx + wy * wy + wz * wz > r * r + 1e-9:
                continue
            if _ok(px, py, pz) and (best < 0.0 or t < best):
                best = t
    return best


@njit(cache=True)
def _capsule_normal(px, py, pz, ax, ay, az, bx, by, bz,
                    n0x, n0y, n0z, n1x, n1y, n1z, r, use_clip):
    """Outward normal at a surface point: argmax branch of the clipped SDF."""
    bax = bx - ax
    bay = by - ay
    baz = bz - az
    baba = bax * bax + bay * bay + baz * baz
    if baba > 1e-12:
        h = ((px - ax) * bax + (py - ay) * bay + (pz - az) * baz) / baba
        if h < 0.0:
            h = 0.0
        elif h > 1.0:
            h = 1.0
    else:
        h = 0.0
    wx = px - (ax + bax * h)
    wy = py - (ay + bay * h)
    wz = pz - (az + baz * h)
    s_cap = np.sqrt(wx * wx + wy * wy + wz * wz) - r
    nx, ny, nz = wx, wy, wz
    if use_clip:
        s0 = -((px - ax) * n0x + (py - ay) * n0y + (pz - az) * n0z)
        s1 = (px - bx) * n1x + (py - by) * n1y + (pz - bz) * n1z
        if s0 >= s_cap and s0 >= s1:
            nx, ny, nz = -n0x, -n0y, -n0z
        elif s1 >= s_cap:
            nx, ny, nz = n1x, n1y, n1z
    nn = np.sqrt(nx * nx + ny * ny + nz * nz)
    if nn == 0.0:
        return 0.0, 0.0, 1.0
    return nx / nn, ny / nn, nz / nn


def ray_capsule(ray: Ray, c: Capsule, clip: bool = True) -> float | None:
    t = _ray_capsule(ray.origin[0], ray.origin[1], ray.origin[2],
                     ray.dir[0], ray.dir[1], ray.dir[2],
                     c.v0[0], c.v0[1], c.v0[2], c.v1[0], c.v1[1], c.v1[2],
                     c.n0[0], c.n0[1], c.n0[2], c.n1[0], c.n1[1], c.n1[2],
                     c.r, clip)
    return None if t < 0.0 else float(t)


# ---------------------------------------------------------------------------
# marching helpers


@njit(cache=True)
def _grid_clip(ox, oy, oz, dx, dy, dz, res):
    t0 = 0.0
    t1 = 1e30
    for a in range(3):
        o = ox if a == 0 else (oy if a == 1 else oz)
        d = dx if a == 0 else (dy if a == 1 else dz)
        if d == 0.0:
            if o < 0.0 or o > res:
                return 1.0, -1.0
        else:
            ta = (0.0 - o) / d
            tb = (res - o) / d
            if ta > tb:
                ta, tb = tb, ta
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
    return t0, t1


@njit(cache=True)
def _voxel_exit(ox, oy, oz, dx, dy, dz, x, y, z, lvl):
    size = 1 << lvl
    bx = (x >> lvl) << lvl
    by = (y >> lvl) << lvl
    bz = (z >> lvl) << lvl
    t = 1e30
    if dx > 0.0:
        t = min(t, (bx + size - ox) / dx)
    elif dx < 0.0:
        t = min(t, (bx - ox) / dx)
    if dy > 0.0:
        t = min(t, (by + size - oy) / dy)
    elif dy < 0.0:
        t = min(t, (by - oy) / dy)
    if dz > 0.0:
        t = min(t, (bz + size - oz) / dz)
    elif dz < 0.0:
        t = min(t, (bz - oz) / dz)
    return t


@njit(cache=True)
def _empty_level(bits, offs, res, n_levels, x, y, z):
    # largest level whose node containing (x,y,z) is entirely clear
    l = 0
    while l < n_levels - 1:
        nl = l + 1
        rl = res >> nl
        if bits[offs[nl] + (x >> nl) + rl * ((y >> nl) + rl * (z >> nl))] != 0:
            break
        l = nl
    return l


@njit(cache=True)
def _first_voxel(bits, offs, res, n_levels, ox, oy, oz, dx, dy, dz):
    t0, t1 = _grid_clip(ox, oy, oz, dx, dy, dz, res)
    if t1 < t0:
        return -1, -1, -1, -1.0
    t = t0
    while t < t1:
        tm = t + _EPS_T
        x = int(np.floor(ox + dx * tm))
        y = int(np.floor(oy + dy * tm))
        z = int(np.floor(oz + dz * tm))
        if x < 0 or y < 0 or z < 0 or x >= res or y >= res or z >= res:
            break
        if bits[x + res * (y + res * z)] != 0:
            return x, y, z, t
        l = _empty_level(bits, offs, res, n_levels, x, y, z)
        te = _voxel_exit(ox, oy, oz, dx, dy, dz, x, y, z, l)
        t = te if te > t else t + _EPS_T
    return -1, -1, -1, -1.0


def first_voxel(pyr: CullingPyramid, ray: Ray, g: GridDesc):
    """First base voxel along the ray with a set bit, plus its entry t.

    t is in voxel units from the voxel-space ray origin.
    """
    o = g.to_voxel(ray.origin)
    flat, offs, _ = pyr.packed()
    x, y, z, t = _first_voxel(flat, offs, pyr.resolution, len(pyr.levels),
                              o[0], o[1], o[2], ray.dir[0], ray.dir[1], ray.dir[2])
    if x < 0:
        return None
    return (x, y, z), float(t)


# ---------------------------------------------------------------------------
# shading helpers


@njit(cache=True)
def _tri3d(vol, res, px, py, pz):
    ux = px - 0.5
    uy = py - 0.5
    uz = pz - 0.5
    ix = int(np.floor(ux))
    iy = int(np.floor(uy))
    iz = int(np.floor(uz))
    fx = ux - ix
    fy = uy - iy
    fz = uz - iz
    acc = 0.0
    for dz in range(2):
        z = min(max(iz + dz, 0), res - 1)
        wz = fz if dz == 1 else 1.0 - fz
        for dy in range(2):
            y = min(max(iy + dy, 0), res - 1)
            wy = fy if dy == 1 else 1.0 - fy
            for dx in range(2):
                x = min(max(ix + dx, 0), res - 1)
                wx = fx if dx == 1 else 1.0 - fx
                acc += wx * wy * wz * vol[z, y, x]
    return acc


@njit(cache=True)
def _shade(verts, i, nx, ny, nz, ao_vol, sh_vol, res, px, py, pz, lx, ly, lz):
    sx = verts[i + 1, 0] - verts[i, 0]
    sy = verts[i + 1, 1] - verts[i, 1]
    sz = verts[i + 1, 2] - verts[i, 2]
    sn = np.sqrt(sx * sx + sy * sy + sz * sz)
    if sn == 0.0:
        cr = cg = cb = 0.5
    else:
        cr = abs(sx) / sn
        cg = abs(sy) / sn
        cb = abs(sz) / sn
    ao = _tri3d(ao_vol, res, px, py, pz)
    sh = _tri3d(sh_vol, res, px, py, pz)
    ndl = nx * lx + ny * ly + nz * lz
    if ndl < 0.0:
        ndl = 0.0
    k = AMBIENT * ao + DIFFUSE * sh * ndl
    return cr * k, cg * k, cb * k


@njit(cache=True)
def _pixel_ray(px, py, w, h, pos, fwd, right, up, tanf):
    aspect = w / h
    u = (2.0 * (px + 0.5) / w - 1.0) * aspect * tanf
    v = (1.0 - 2.0 * (py + 0.5) / h) * tanf
    dx = fwd[0] + u * right[0] + v * up[0]
    dy = fwd[1] + u * right[1] + v * up[1]
    dz = fwd[2] + u * right[2] + v * up[2]
    dn = np.sqrt(dx * dx + dy * dy + dz * dz)
    return pos[0], pos[1], pos[2], dx / dn, dy / dn, dz / dn


# ---------------------------------------------------------------------------
# tracing kernels


@njit(cache=True)
def _voxel_best_hit(verts, normals, use_clip, r, frag_off, frag_cnt, frags,
                    res, ox, oy, oz, dx, dy, dz, x, y, z, tests):
    best = -1.0
    best_i = -1
    o = frag_off[x + res * (y + res * z)]
    n = frag_cnt[x + res * (y + res * z)]
    for s in range(n):
        i = np.int64(frags[o + s])
        t = _ray_capsule(ox, oy, oz, dx, dy, dz,
                         verts[i, 0], verts[i, 1], verts[i, 2],
                         verts[i + 1, 0], verts[i + 1, 1], verts[i + 1, 2],
                         normals[i, 0], normals[i, 1], normals[i, 2],
                         normals[i + 1, 0], normals[i + 1, 1], normals[i + 1, 2],
                         r, use_clip)
        tests[0] += 1
        if t < 0.0:
            continue
        hx = int(np.floor(ox + dx * t))
        hy = int(np.floor(oy + dy * t))
        hz = int(np.floor(oz + dz * t))
        if hx != x or hy != y or hz != z:
            continue  # the hit belongs to another voxel's list
        if best < 0.0 or t < best:
            best = t
            best_i = i
    return best, best_i


@njit(cache=True, parallel=True)
def _opaque_kernel(verts, normals, use_clip, r,
                   frag_off, frag_cnt, frags,
                   bits, bits_offs, res, n_levels,
                   ao_vol, sh_vol, lx, ly, lz,
                   pos, fwd, right, up, tanf,
                   bg0, bg1, bg2, w, h, rgb, hit_id, test_counts):
    for pix in prange(w * h):
        px = pix % w
        py = pix // w
        ox, oy, oz, dx, dy, dz = _pixel_ray(px, py, w, h, pos, fwd, right, up, tanf)
        tests = np.zeros(1, np.int64)
        t0, t1 = _grid_clip(ox, oy, oz, dx, dy, dz, res)
        found = False
        if t1 >= t0:
            t = max(t0, 0.0)
            while t < t1:
                tm = t + _EPS_T
                x = int(np.floor(ox + dx * tm))
                y = int(np.floor(oy + dy * tm))
                z = int(np.floor(oz + dz * tm))
                if x < 0 or y < 0 or z < 0 or x >= res or y >= res or z >= res:
                    break
                if bits[x + res * (y + res * z)] != 0:
                    bt, bi = _voxel_best_hit(verts, normals, use_clip, r,
                                             frag_off, frag_cnt, frags, res,
                                             ox, oy, oz, dx, dy, dz, x, y, z, tests)
                    if bt >= 0.0:
                        hx = ox + dx * bt
                        hy = oy + dy * bt
                        hz = oz + dz * bt
                        nx, ny, nz = _capsule_normal(
                            hx, hy, hz,
                            verts[bi, 0], verts[bi, 1], verts[bi, 2],
                            verts[bi + 1, 0], verts[bi + 1, 1], verts[bi + 1, 2],
                            normals[bi, 0], normals[bi, 1], normals[bi, 2],
                            normals[bi + 1, 0], normals[bi + 1, 1], normals[bi + 1, 2],
                            r, use_clip)
                        cr, cg, cb = _shade(verts, bi, nx, ny, nz, ao_vol, sh_vol,
                                            res, hx, hy, hz, lx, ly, lz)
                        rgb[py, px, 0] = cr
                        rgb[py, px, 1] = cg
                        rgb[py, px, 2] = cb
                        hit_id[py, px] = bi
                        found = True
                        break
                    te = _voxel_exit(ox, oy, oz, dx, dy, dz, x, y, z, 0)
                else:
                    l = _empty_level(bits, bits_offs, res, n_levels, x, y, z)
                    te = _voxel_exit(ox, oy, oz, dx, dy, dz, x, y, z, l)
                t = te if te > t else t + _EPS_T
        if not found:
            rgb[py, px, 0] = bg0
            rgb[py, px, 1] = bg1
            rgb[py, px, 2] = bg2
            hit_id[py, px] = -1
        test_counts[py, px] = tests[0]


@njit(cache=True, parallel=True)
def _transparent_kernel(verts, normals, use_clip, r,
                        frag_off, frag_cnt, frags,
                        bits, bits_offs, res, n_levels,
                        ao_vol, sh_vol, lx, ly, lz,
                        pos, fwd, right, up, tanf,
                        alpha, kslots, early_term,
                        bg0, bg1, bg2, w, h, rgb, hit_id, test_counts):
    for pix in prange(w * h):
        px = pix % w
        py = pix // w
        ox, oy, oz, dx, dy, dz = _pixel_ray(px, py, w, h, pos, fwd, right, up, tanf)
        n_tests = 0
        col_r = 0.0
        col_g = 0.0
        col_b = 0.0
        acc_a = 0.0
        first_hit = -1
        keybuf = np.empty(64, np.int64)
        tbuf = np.empty(64, np.float64)
        ibuf = np.empty(64, np.int64)
        t0, t1 = _grid_clip(ox, oy, oz, dx, dy, dz, res)
        if t1 >= t0:
            t = max(t0, 0.0)
            while t < t1:
                if early_term and acc_a >= _ALPHA_CUTOFF:
                    break
                tm = t + _EPS_T
                x = int(np.floor(ox + dx * tm))
                y = int(np.floor(oy + dy * tm))
                z = int(np.floor(oz + dz * tm))
                if x < 0 or y < 0 or z < 0 or x >= res or y >= res or z >= res:
                    break
                if bits[x + res * (y + res * z)] == 0:
                    l = _empty_level(bits, bits_offs, res, n_levels, x, y, z)
                    te = _voxel_exit(ox, oy, oz, dx, dy, dz, x, y, z, l)
                    t = te if te > t else t + _EPS_T
                    continue
                te = _voxel_exit(ox, oy, oz, dx, dy, dz, x, y, z, 0)
                t_enter = t
                t_exit = te
                span = t_exit - t_enter
                inv_span = 65535.0 / span if span > 0.0 else 0.0
                fo = frag_off[x + res * (y + res * z)]
                fn = frag_cnt[x + res * (y + res * z)]
                last_key = np.int64(-1)
                while True:
                    kept = 0
                    accepted = 0
                    for s in range(fn):
                        i = np.int64(frags[fo + s])
                        tt = _ray_capsule(ox, oy, oz, dx, dy, dz,
                                          verts[i, 0], verts[i, 1], verts[i, 2],
                                          verts[i + 1, 0], verts[i + 1, 1], verts[i + 1, 2],
                                          normals[i, 0], normals[i, 1], normals[i, 2],
                                          normals[i + 1, 0], normals[i + 1, 1],
                                          normals[i + 1, 2], r, use_clip)
                        n_tests += 1
                        if tt < 0.0:
                            continue
                        hx = int(np.floor(ox + dx * tt))
                        hy = int(np.floor(oy + dy * tt))
                        hz = int(np.floor(oz + dz * tt))
                        if hx != x or hy != y or hz != z:
                            continue
                        q = int((tt - t_enter) * inv_span)
                        if q < 0:
                            q = 0
                        elif q > 65535:
                            q = 65535
                        key = np.int64((q << 16) | s)
                        if key <= last_key:
                            continue
                        accepted += 1
                        # insertion sort into the k-slot buffer
                        if kept < kslots:
                            j = kept
                            kept += 1
                        elif key < keybuf[kslots - 1]:
                            j = kslots - 1
                        else:
                            continue
                        while j > 0 and keybuf[j - 1] > key:
                            keybuf[j] = keybuf[j - 1]
                            tbuf[j] = tbuf[j - 1]
                            ibuf[j] = ibuf[j - 1]
                            j -= 1
                        keybuf[j] = key
                        tbuf[j] = tt
                        ibuf[j] = i
                    for j in range(kept):
                        if early_term and acc_a >= _ALPHA_CUTOFF:
                            break
                        tt = tbuf[j]
                        i = ibuf[j]
                        hx = ox + dx * tt
                        hy = oy + dy * tt
                        hz = oz + dz * tt
                        nx, ny, nz = _capsule_normal(
                            hx, hy, hz,
                            verts[i, 0], verts[i, 1], verts[i, 2],
                            verts[i + 1, 0], verts[i + 1, 1], verts[i + 1, 2],
                            normals[i, 0], normals[i, 1], normals[i, 2],
                            normals[i + 1, 0], normals[i + 1, 1], normals[i + 1, 2],
                            r, use_clip)
                        cr, cg, cb = _shade(verts, i, nx, ny, nz, ao_vol, sh_vol,
                                            res, hx, hy, hz, lx, ly, lz)
                        wgt = (1.0 - acc_a) * alpha
                        col_r += wgt * cr
                        col_g += wgt * cg
                        col_b += wgt * cb
                        acc_a += wgt
                        if first_hit < 0:
                            first_hit = i
                    if accepted <= kslots:
                        break
                    if early_term and acc_a >= _ALPHA_CUTOFF:
                        break
                    last_key = keybuf[kslots - 1]
                t = te if te > t else t + _EPS_T
        col_r += (1.0 - acc_a) * bg0
        col_g += (1.0 - acc_a) * bg1
        col_b += (1.0 - acc_a) * bg2
        rgb[py, px, 0] = col_r
        rgb[py, px, 1] = col_g
        rgb[py, px, 2] = col_b
        hit_id[py, px] = first_hit
        test_counts[py, px] = n_tests


# ---------------------------------------------------------------------------
# scene assembly


@dataclass
class RenderScene:
    """Everything a ray needs, in voxel units."""

    ls: LineSet
    cn: np.ndarray | None
    g: GridDesc
    pyramid: OccupancyPyramid
    abuf: "object"  # ABuffer
    shading: ShadingVolume | None
    culling: CullingPyramid | None = None
    r_world: float | None = None

    def march_bits(self) -> CullingPyramid:
        if self.culling is not None:
            return self.culling
        return CullingPyramid.from_bits((self.pyramid.counts() > 0).astype(np.uint8))


def render(scene: RenderScene, cam: Camera, settings: RenderSettings) -> Image:
    """Deterministic full-frame render; worker-count independent."""
    g = scene.g
    res = g.resolution
    verts, _, normals, use_clip, r = segment_arrays(scene.ls, scene.cn, g, scene.r_world)
    bits_pyr = scene.march_bits()
    bits, bits_offs, _ = bits_pyr.packed()
    frag_off = np.ascontiguousarray(scene.abuf.table.offsets)
    frag_cnt = np.ascontiguousarray(scene.abuf.table.counts)
    frags = np.ascontiguousarray(scene.abuf.fragments)
    if scene.shading is not None:
        ao_vol = np.ascontiguousarray(scene.shading.ao, dtype=np.float64)
        sh_vol = np.ascontiguousarray(scene.shading.shadow, dtype=np.float64)
        light = np.asarray(scene.shading.light_dir, dtype=np.float64)
    else:
        ao_vol = np.ones((res, res, res), dtype=np.float64)
        sh_vol = np.ones((res, res, res), dtype=np.float64)
        light = np.array([0.0, 0.0, -1.0])
    lx, ly, lz = -light  # towards the source
    pos = g.to_voxel(cam.position)
    w, h = cam.width, cam.height
    rgb = np.zeros((h, w, 3), dtype=np.float64)
    hit_id = np.zeros((h, w), dtype=np.int32)
    test_counts = np.zeros((h, w), dtype=np.int64)
    tanf = np.tan(cam.fov / 2.0)
    args = (verts, normals, use_clip, r, frag_off, frag_cnt, frags,
            bits, bits_offs, res, len(bits_pyr.levels), ao_vol, sh_vol,
            lx, ly, lz, pos, cam.forward, cam.right, cam.up, tanf)
    bg = settings.background
    if settings.mode == "opaque":
        _opaque_kernel(*args, bg[0], bg[1], bg[2], w, h, rgb, hit_id, test_counts)
    else:
        _transparent_kernel(*args, settings.alpha, settings.k,
                            settings.early_termination, bg[0], bg[1], bg[2],
                            w, h, rgb, hit_id, test_counts)
    return Image(rgb, hit_id, stats={"ray_capsule_tests": int(test_counts.sum())})
