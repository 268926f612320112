"""Cubic voxel grid description and fitting.

Voxel (i, j, k) spans [i, i+1) x [j, j+1) x [k, k+1) in voxel units with
centers at integer + 0.5. Volumetric numpy arrays in this package are
shaped (res, res, res) with axes (z, y, x), so .ravel() is x-fastest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lineset import LineSet

__all__ = ["GridDesc", "fit_grid"]


@dataclass(frozen=True)
class GridDesc:
    resolution: int
    world_min: np.ndarray  # (3,) float64
    voxel_size: float

    def __post_init__(self):
        if self.resolution < 2 or self.resolution & (self.resolution - 1):
            raise ValueError(f"resolution must be a power of two >= 2, got {self.resolution}")
        if not self.voxel_size > 0:
            raise ValueError("voxel_size must be positive")
        object.__setattr__(self, "world_min", np.asarray(self.world_min, dtype=np.float64))

    @property
    def world_max(self) -> np.ndarray:
        return self.world_min + self.resolution * self.voxel_size

    @property
    def n_levels(self) -> int:
        return int(np.log2(self.resolution)) + 1

    def to_voxel(self, p: np.ndarray) -> np.ndarray:
        return (np.asarray(p, dtype=np.float64) - self.world_min) / self.voxel_size

    def to_world(self, p: np.ndarray) -> np.ndarray:
        return np.asarray(p, dtype=np.float64) * self.voxel_size + self.world_min

    def flat_index(self, x, y, z):
        r = self.resolution
        return x + r * (y + r * z)


def fit_grid(ls: LineSet, resolution: int, radius_voxels: float | None = None) -> tuple[GridDesc, float]:
    """Fit a cubic grid around a line set.

    The grid covers the vertex AABB inflated by the capsule radius plus one
    voxel of padding on each side. When radius_voxels is given the capsule
    radius is re-derived from the voxel size (r_world = radius_voxels *
    voxel_size); otherwise the line set's world radius is kept. Returns the
    grid and the capsule radius in world units.
    """
    lo, hi = ls.aabb()
    extent = float(np.max(hi - lo))
    if extent <= 0:
        extent = max(ls.radius, 1e-6)
    if radius_voxels is not None:
        if not radius_voxels > 0:
            raise ValueError("radius_voxels must be positive")
        denom = resolution - 2.0 * (radius_voxels + 1.0)
        if denom <= 0:
            raise ValueError("resolution too small for requested radius")
        voxel_size = extent / denom
        r_world = radius_voxels * voxel_size
    else:
        r_world = float(ls.radius)
        if resolution <= 2:
            raise ValueError("resolution too small")
        voxel_size = (extent + 2.0 * r_world) / (resolution - 2.0)
    center = (lo + hi) / 2.0
    half = resolution * voxel_size / 2.0
    world_min = center - half
    return GridDesc(resolution, world_min, voxel_size), r_world
