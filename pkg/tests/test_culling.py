import numpy as np
import pytest

from linevox.culling import (THETA_BLOCK, Camera, CullingPyramid, compute_visibility,
                             erode, or_mips)
from linevox.grid import GridDesc


def unit_grid(res=8):
    return GridDesc(res, np.zeros(3), 1.0)


def cam_at(pos, res=8):
    target = np.full(3, res / 2.0)
    return Camera(np.asarray(pos, float), target - np.asarray(pos, float), [0, 0, 1])


class TestCamera:
    def test_orthonormal_basis(self):
        c = Camera([0, 0, 0], [1, 1, 0], [0, 0.5, 1])
        assert np.linalg.norm(c.forward) == pytest.approx(1.0)
        assert np.linalg.norm(c.up) == pytest.approx(1.0)
        assert c.forward @ c.up == pytest.approx(0.0, abs=1e-12)
        assert np.allclose(np.cross(c.forward, c.up), c.right)

    def test_bad_fov(self):
        with pytest.raises(ValueError):
            Camera([0, 0, 0], [1, 0, 0], [0, 0, 1], fov=0.0)

    def test_parallel_up_rejected(self):
        with pytest.raises(ValueError):
            Camera([0, 0, 0], [1, 0, 0], [2, 0, 0])

    def test_orbit_geometry(self):
        c = Camera.orbit([4, 4, 4], 10.0, azimuth=0.0, elevation=0.0)
        assert np.allclose(c.position, [14, 4, 4])
        assert np.allclose(c.forward, [-1, 0, 0])


class TestErode:
    def test_isolated_voxel_vanishes(self):
        f = np.zeros((8, 8, 8))
        f[4, 4, 4] = 1.0
        assert np.all(erode(f) == 0.0)

    def test_uniform_keeps_interior_clears_boundary(self):
        f = np.ones((8, 8, 8))
        e = erode(f)
        assert np.all(e[1:-1, 1:-1, 1:-1] == 1.0)
        assert np.all(e[0] == 0.0) and np.all(e[-1] == 0.0)
        assert np.all(e[:, 0] == 0.0) and np.all(e[:, :, -1] == 0.0)

    def test_never_increases(self, rng):
        f = rng.uniform(0, 1, size=(8, 8, 8))
        assert np.all(erode(f) <= f)

    def test_matches_neighborhood_minimum(self, rng):
        f = rng.uniform(0, 1, size=(6, 6, 6))
        e = erode(f)
        for z in range(6):
            for y in range(6):
                for x in range(6):
                    vals = [f[z, y, x]]
                    for dz, dy, dx in ((1, 0, 0), (-1, 0, 0), (0, 1, 0),
                                       (0, -1, 0), (0, 0, 1), (0, 0, -1)):
                        zz, yy, xx = z + dz, y + dy, x + dx
                        vals.append(f[zz, yy, xx]
                                    if 0 <= zz < 6 and 0 <= yy < 6 and 0 <= xx < 6
                                    else 0.0)
                    assert e[z, y, x] == pytest.approx(min(vals))


class TestOrMips:
    def test_parent_is_or_of_children(self, rng):
        base = (rng.uniform(size=(8, 8, 8)) > 0.7).astype(np.uint8)
        levels = or_mips(base)
        assert len(levels) == 4
        for l in range(1, len(levels)):
            lo = levels[l - 1]
            hi = levels[l]
            h = hi.shape[0]
            blocks = lo.reshape(h, 2, h, 2, h, 2).max(axis=(1, 3, 5))
            assert np.array_equal(hi, blocks)

    def test_pyramid_invariant(self, rng):
        base = (rng.uniform(size=(16, 16, 16)) > 0.9).astype(np.uint8)
        pyr = CullingPyramid.from_bits(base)
        assert pyr.levels[-1].shape == (1, 1, 1)
        assert pyr.levels[-1][0, 0, 0] == base.max()


class TestVisibility:
    def test_empty_grid(self):
        g = unit_grid()
        occ = np.zeros((8, 8, 8))
        pyr = compute_visibility(erode(occ), g, cam_at([20, 4, 4]), occ > 0)
        assert all(np.all(l == 0) for l in pyr.levels)

    def test_single_voxel_visible_with_ancestors(self):
        g = unit_grid()
        occ = np.zeros((8, 8, 8))
        occ[4, 4, 4] = 1.0
        pyr = compute_visibility(erode(occ), g, cam_at([20, 4, 4]), occ > 0)
        assert pyr.base[4, 4, 4] == 1
        for l, lvl in enumerate(pyr.levels):
            assert lvl[4 >> l, 4 >> l, 4 >> l] == 1

    def test_wall_blocks_and_gap_reveals(self):
        g = unit_grid()
        occ = np.zeros((8, 8, 8))
        occ[:, :, 4:7] = 1.0  # solid slab x in [4, 7); thick enough to survive erosion
        occ[4, 4, 2] = 1.0  # subject behind the slab
        cam = cam_at([30.0, 4.5, 4.5])  # camera out on +x
        vis = compute_visibility(erode(occ), g, cam, occ > 0)
        assert vis.base[4, 4, 2] == 0
        # punching a hole through the slab must reveal the subject
        occ2 = occ.copy()
        occ2[3:6, 3:6, 4:7] = 0.0
        vis2 = compute_visibility(erode(occ2), g, cam, occ2 > 0)
        assert vis2.base[4, 4, 2] == 1

    def test_zero_occupancy_never_visible(self, rng):
        g = unit_grid()
        occ = (rng.uniform(size=(8, 8, 8)) > 0.6).astype(float)
        vis = compute_visibility(erode(occ), g, cam_at([25, 3, 3]), occ > 0)
        assert not np.any(vis.base[occ == 0])

    def test_monotone_in_eroded_field(self):
        g = unit_grid()
        occ = np.ones((8, 8, 8))
        cam = cam_at([30.0, 4.5, 4.5])
        e1 = erode(occ)
        v1 = compute_visibility(e1, g, cam, occ > 0)
        e2 = e1 * 0.5  # everywhere below the blocking threshold
        v2 = compute_visibility(e2, g, cam, occ > 0)
        assert np.all(v1.base <= v2.base)
        assert np.all(v2.base == 1)

    def test_camera_inside_solid_voxel(self):
        g = unit_grid()
        occ = np.ones((8, 8, 8))
        cam = Camera([4.5, 4.5, 4.5], [1, 0, 0], [0, 0, 1])
        vis = compute_visibility(erode(occ), g, cam, occ > 0)
        # the camera's own voxel never blocks; its direct neighbors see it
        assert vis.base[4, 4, 4] == 1
        assert vis.base[4, 4, 5] == 1

    def test_threshold_semantics(self):
        g = unit_grid()
        occ = np.ones((8, 8, 8)) * (THETA_BLOCK - 1e-3)
        occ[4, 4, 2] = 1.0
        cam = cam_at([30.0, 4.5, 4.5])
        vis = compute_visibility(erode(occ), g, cam, occ > 0)
        # sub-threshold fog never blocks
        assert vis.base[4, 4, 2] == 1

    def test_dump_format(self, tmp_path):
        base = np.zeros((4, 4, 4), dtype=np.uint8)
        base[1, 2, 3] = 1
        pyr = CullingPyramid.from_bits(base)
        p = tmp_path / "c.culp"
        pyr.dump(p)
        raw = p.read_bytes()
        assert raw[:4] == b"CULP"
        assert int.from_bytes(raw[4:8], "little") == 4
        assert len(raw) == 8 + 64 + 8 + 1
