import numpy as np
import pytest

import linevox as lv
from linevox import voxelizer as vox
from linevox.grid import GridDesc
from linevox.lineset import Capsule, LineSet, compute_clip_normals

from .oracles import capsule_voxel_hits, dda_voxels, segment_point_distance


def unit_grid(res=32):
    return GridDesc(res, np.zeros(3), 1.0)


def collect(fn, *args):
    out = []
    fn(*args, out.append)
    return out


def capsule(v0, v1, r, n0=(1, 0, 0), n1=(1, 0, 0)):
    return Capsule(np.asarray(v0, float), np.asarray(v1, float), r,
                   np.asarray(n0, float), np.asarray(n1, float))


class TestAxisRank:
    def test_examples(self):
        a = vox.rank_axes([3, -1, 0])
        assert (a.a0, a.a1, a.a2, a.swapped) == (0, 1, 2, False)
        a = vox.rank_axes([0, 0, -5])
        assert (a.a0, a.swapped) == (2, True)
        assert {a.a1, a.a2} == {0, 1}
        a = vox.rank_axes([1, 1, 0])
        assert (a.a0, a.a1, a.a2) == (0, 1, 2)  # tie keeps x first

    def test_permutation_and_order(self, rng):
        for _ in range(200):
            d = rng.normal(size=3)
            a = vox.rank_axes(d)
            assert sorted((a.a0, a.a1, a.a2)) == [0, 1, 2]
            m = np.abs(d)
            assert m[a.a0] >= m[a.a1] >= m[a.a2]

    def test_zero_delta(self):
        with pytest.raises(ValueError, match="degenerate"):
            vox.rank_axes([0, 0, 0])


class TestProjectedRadii:
    def test_axis_aligned(self):
        r1, r2 = vox.projected_radii([4, 0, 0], 0.2)
        assert r1 == pytest.approx(0.2)
        assert r2 == pytest.approx(0.2)

    def test_planar_diagonal(self):
        r1, r2 = vox.projected_radii([1, 1, 0], 0.1)
        assert r1 == pytest.approx(0.1 * np.sqrt(2.0))
        assert r2 == pytest.approx(0.1)

    def test_slab_containment_monte_carlo(self, rng):
        # every capsule point deviates from the traversal line by at most
        # r_hat along each minor axis (measured at equal major coordinate)
        for _ in range(50):
            d = rng.normal(size=3)
            if np.all(d == 0):
                continue
            r = rng.uniform(0.05, 2.0)
            rank = vox.rank_axes(d)
            r1, r2 = vox.projected_radii(d, r, rank)
            v0 = rng.uniform(-5, 5, size=3)
            dd = d if not rank.swapped else -d
            o = v0 if not rank.swapped else v0 + d
            s = dd / dd[rank.a0]
            h = rng.uniform(0, 1, size=400)
            u = rng.normal(size=(400, 3))
            u /= np.linalg.norm(u, axis=1, keepdims=True)
            p = o + h[:, None] * dd + r * u
            line = o + (p[:, rank.a0] - o[rank.a0])[:, None] * s
            dev1 = np.abs(p[:, rank.a1] - line[:, rank.a1])
            dev2 = np.abs(p[:, rank.a2] - line[:, rank.a2])
            assert dev1.max() <= r1 + 1e-9
            assert dev2.max() <= r2 + 1e-9


class TestTraversal:
    def test_capsule_hand_case(self):
        g = unit_grid(8)
        c = capsule([0.5, 0.5, 0.5], [3.5, 0.5, 0.5], 0.2)
        cells = set(collect(lv.traverse_capsule, c, g))
        assert cells == {(0, 0, 0), (1, 0, 0), (2, 0, 0), (3, 0, 0)}

    def test_capsule_single_voxel(self):
        g = unit_grid(8)
        c = capsule([2.3, 2.5, 2.5], [2.6, 2.5, 2.5], 0.1)
        assert collect(lv.traverse_capsule, c, g) == [(2, 2, 2)]

    def test_capsule_visits_each_voxel_once(self, rng):
        g = unit_grid(16)
        for _ in range(50):
            v0 = rng.uniform(3, 13, size=3)
            v1 = rng.uniform(3, 13, size=3)
            cells = collect(lv.traverse_capsule, capsule(v0, v1, 0.4), g)
            assert len(cells) == len(set(cells))

    def test_zero_length_falls_back_to_sphere_box(self):
        g = unit_grid(8)
        c = capsule([2.5, 2.5, 2.5], [2.5, 2.5, 2.5], 0.6)
        cells = set(collect(lv.traverse_capsule, c, g))
        assert cells == set(collect(lv.traverse_aabb, c, g))
        assert (2, 2, 2) in cells

    def test_dda_straight(self):
        g = unit_grid(8)
        cells = collect(lv.traverse_dda, [0.5, 0.5, 0.5], [3.5, 0.5, 0.5], g)
        assert cells == [(0, 0, 0), (1, 0, 0), (2, 0, 0), (3, 0, 0)]

    def test_dda_zero_length(self):
        g = unit_grid(8)
        assert collect(lv.traverse_dda, [1.5, 1.5, 1.5], [1.5, 1.5, 1.5], g) == [(1, 1, 1)]

    def test_dda_matches_independent_walk(self, rng):
        g = unit_grid(32)
        for _ in range(100):
            v0 = rng.uniform(2, 30, size=3)
            v1 = rng.uniform(2, 30, size=3)
            got = collect(lv.traverse_dda, v0, v1, g)
            assert got == dda_voxels(v0, v1)

    def test_aabb_box(self):
        g = unit_grid(8)
        c = capsule([1.5, 1.5, 1.5], [4.5, 1.5, 1.5], 0.2)
        cells = set(collect(lv.traverse_aabb, c, g))
        assert cells == {(x, y, z) for x in range(1, 5) for y in (1,) for z in (1,)}

    def test_subset_chain(self, rng):
        g = unit_grid(32)
        for _ in range(60):
            v0 = rng.uniform(4, 28, size=3)
            v1 = rng.uniform(4, 28, size=3)
            if np.allclose(v0, v1):
                continue
            c = capsule(v0, v1, rng.uniform(0.05, 1.5))
            dda = set(collect(lv.traverse_dda, v0, v1, g))
            cap = set(collect(lv.traverse_capsule, c, g))
            ab = set(collect(lv.traverse_aabb, c, g))
            assert dda <= cap <= ab

    def test_conservatism_sample(self, rng):
        # small sample here; the full 10k fuzz lives in the acceptance suite
        for _ in range(300):
            d = rng.normal(size=3)
            d /= np.linalg.norm(d)
            v0 = rng.uniform(5, 50, size=3)
            v1 = v0 + rng.uniform(0.5, 40.0) * d
            r = rng.uniform(0.05, 2.0)
            got = {tuple(map(int, c)) for c in np.asarray(vox.capsule_cells(v0, v1, r))}
            assert capsule_voxel_hits(v0, v1, r, margin=1e-9) <= got


class TestOracleSelfValidation:
    def test_box_distance_against_dense_sampling(self, rng):
        # the ternary-search oracle must agree with brute point sampling
        for _ in range(25):
            v0 = rng.uniform(0, 4, size=3)
            v1 = rng.uniform(0, 4, size=3)
            r = rng.uniform(0.2, 1.0)
            hits = capsule_voxel_hits(v0, v1, r)
            lo = np.floor(np.minimum(v0, v1) - r).astype(int)
            hi = np.floor(np.maximum(v0, v1) + r).astype(int)
            ticks = np.linspace(0.0, 1.0, 9)
            gx, gy, gz = np.meshgrid(ticks, ticks, ticks, indexing="ij")
            offs = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
            for x in range(lo[0], hi[0] + 1):
                for y in range(lo[1], hi[1] + 1):
                    for z in range(lo[2], hi[2] + 1):
                        pts = np.array([x, y, z], float) + offs
                        dmin = segment_point_distance(v0, v1, pts).min()
                        if dmin <= r - 1e-9:
                            # a sampled in-capsule point forces a hit
                            assert (x, y, z) in hits
                        if (x, y, z) in hits:
                            # oracle hits must be nearly reachable by sampling
                            assert dmin <= r + 0.25


class TestSdf:
    def base_capsule(self):
        return capsule([0, 0, 0], [2, 0, 0], 0.5)

    def test_midpoint(self):
        assert lv.clipped_capsule_sdf([1, 0, 0], self.base_capsule()) == pytest.approx(-0.5)

    def test_point_on_clip_plane(self):
        assert lv.clipped_capsule_sdf([0, 0, 0], self.base_capsule()) == pytest.approx(0.0)

    def test_beyond_end(self):
        assert lv.clipped_capsule_sdf([3, 0, 0], self.base_capsule()) == pytest.approx(1.0)

    def test_unclipped_matches_plain_capsule(self, rng):
        c = self.base_capsule()
        for _ in range(50):
            p = rng.uniform(-2, 4, size=3)
            d = c.v1 - c.v0
            h = np.clip((p - c.v0) @ d / (d @ d), 0, 1)
            plain = np.linalg.norm(p - c.v0 - h * d) - c.r
            assert lv.clipped_capsule_sdf(p, c, clip=False) == pytest.approx(plain, abs=1e-12)

    def test_zero_length_sphere(self):
        c = capsule([1, 1, 1], [1, 1, 1], 0.5)
        assert lv.clipped_capsule_sdf([1, 1, 2], c, clip=False) == pytest.approx(0.5)

    def test_gradient_magnitude(self, rng):
        c = capsule([0, 0, 0], [3, 1, 0.5], 0.4, n0=(0.9, 0.3, 0.1), n1=(0.8, 0.4, 0.2))
        c.n0 /= np.linalg.norm(c.n0)
        c.n1 /= np.linalg.norm(c.n1)
        h = 1e-5
        checked = 0
        for _ in range(500):
            p = rng.uniform(-1.5, 4.5, size=3)
            # stay off the max-selection creases where the gradient jumps
            branches = [lv.clipped_capsule_sdf(p, c, clip=False),
                        -float((p - c.v0) @ c.n0), float((p - c.v1) @ c.n1)]
            top, second = sorted(branches)[-1], sorted(branches)[-2]
            if top - second < 1e-2:
                continue
            grad = np.zeros(3)
            for a in range(3):
                e = np.zeros(3)
                e[a] = h
                grad[a] = (lv.clipped_capsule_sdf(p + e, c) - lv.clipped_capsule_sdf(p - e, c)) / (2 * h)
            assert np.linalg.norm(grad) == pytest.approx(1.0, abs=1e-3)
            checked += 1
        assert checked > 100


class TestOccupancy:
    def test_clamp_edges(self):
        c = capsule([0, 0, 0], [4, 0, 0], 0.5)
        # sdf = +0.5 at radial distance 1.0 -> occupancy 0
        assert lv.capsule_occupancy([2, 1.0, 0], c) == pytest.approx(0.0)
        # sdf = -0.5 on the axis -> occupancy 1
        assert lv.capsule_occupancy([2, 0, 0], c) == pytest.approx(1.0)

    def test_pwaa_correction(self):
        c = capsule([0, 0, 0], [4, 0, 0], 0.25)
        # on-axis: clamped radius 0.5 gives raw occupancy 1, scaled by (r/r_min)^2
        assert lv.capsule_occupancy([2, 0, 0], c, r_min=0.5) == pytest.approx(0.25)

    def test_in_unit_interval(self, rng):
        c = capsule([0, 0, 0], [2, 1, 0], 0.3)
        for _ in range(200):
            v = lv.capsule_occupancy(rng.uniform(-1, 3, size=3), c)
            assert 0.0 <= v <= 1.0


def straight_lineset(xs, y=16.5, z=16.5, r=0.4):
    v = np.array([[x, y, z] for x in xs], dtype=np.float32)
    return LineSet(v, np.array([0, len(xs)]), r)


class TestVoxelize:
    def test_isolated_capsule_matches_scalar_oracle(self):
        g = unit_grid(32)
        ls = straight_lineset([14.0, 18.0], r=0.5)
        cn = compute_clip_normals(ls)
        pyr = lv.voxelize(ls, cn, g)
        counts = pyr.counts()
        occ = pyr.occupancy()
        c = Capsule(np.array([14.0, 16.5, 16.5]), np.array([18.0, 16.5, 16.5]),
                    0.5, cn[0], cn[1])
        nz = np.argwhere(counts > 0)
        assert len(nz) > 0
        for z, y, x in nz:
            assert counts[z, y, x] == 1
            center = np.array([x + 0.5, y + 0.5, z + 0.5])
            want = lv.capsule_occupancy(center, c)
            assert occ[z, y, x] == pytest.approx(round(want * 4096) / 4096, abs=1e-9)
        # and every visited-but-empty voxel stores occupancy 0, count >= 1
        assert float(occ.sum()) == pytest.approx(pyr.total_occupancy())

    def test_worker_count_bit_identical(self):
        ls = lv.generate("random_streamlines", seed=3, polylines=8, verts_per_line=12)
        cn = compute_clip_normals(ls)
        g, rw = lv.fit_grid(ls, 32, radius_voxels=0.3)
        bases = [lv.voxelize(ls, cn, g, workers=w, r_world=rw).base for w in (1, 3, 8)]
        assert np.array_equal(bases[0], bases[1])
        assert np.array_equal(bases[0], bases[2])

    def test_segment_order_independent(self):
        ls = lv.generate("random_streamlines", seed=3, polylines=6, verts_per_line=10)
        cn = compute_clip_normals(ls)
        g, rw = lv.fit_grid(ls, 32, radius_voxels=0.3)
        a = lv.voxelize(ls, cn, g, r_world=rw).base
        # reverse polyline order; same geometry, different processing order
        off = ls.polyline_offsets
        chunks = [np.arange(off[p], off[p + 1]) for p in range(ls.n_polylines)][::-1]
        perm = np.concatenate(chunks)
        lengths = [len(c) for c in chunks]
        ls2 = LineSet(ls.vertices[perm], np.concatenate([[0], np.cumsum(lengths)]), ls.radius)
        b = lv.voxelize(ls2, compute_clip_normals(ls2), g, r_world=rw).base
        assert np.array_equal(a, b)

    def test_unknown_method(self):
        ls = straight_lineset([10.0, 14.0])
        with pytest.raises(ValueError, match="method"):
            lv.voxelize(ls, None, unit_grid(32), method="fancy")

    def test_dump_format(self, tmp_path):
        ls = straight_lineset([10.0, 14.0])
        g = unit_grid(32)
        pyr = lv.voxelize(ls, compute_clip_normals(ls), g)
        p = tmp_path / "d.voxp"
        pyr.dump(p)
        raw = p.read_bytes()
        assert raw[:4] == b"VOXP"
        res = int.from_bytes(raw[4:8], "little")
        assert res == 32
        base = np.frombuffer(raw, dtype="<u4", count=res ** 3, offset=8)
        assert np.array_equal(base, pyr.base.ravel())


class TestMips:
    def test_constant_half(self):
        levels = vox.build_mips(np.full((8, 8, 8), 0.5))
        for lvl in levels:
            assert np.allclose(lvl, 0.5)

    def test_single_voxel_eighth(self):
        base = np.zeros((2, 2, 2))
        base[0, 0, 0] = 1.0
        levels = vox.build_mips(base)
        assert levels[-1].shape == (1, 1, 1)
        assert levels[-1][0, 0, 0] == pytest.approx(0.125)

    def test_top_is_global_mean(self, rng):
        base = rng.uniform(0, 1, size=(16, 16, 16))
        levels = vox.build_mips(base)
        assert len(levels) == 5
        assert levels[-1][0, 0, 0] == pytest.approx(base.mean(), abs=1e-6)

    def test_parent_is_child_mean(self, rng):
        base = rng.uniform(0, 1, size=(8, 8, 8))
        levels = vox.build_mips(base)
        l1 = levels[1]
        for z in range(4):
            for y in range(4):
                for x in range(4):
                    block = base[2 * z:2 * z + 2, 2 * y:2 * y + 2, 2 * x:2 * x + 2]
                    assert l1[z, y, x] == pytest.approx(block.mean(), abs=1e-12)


class TestMassProperties:
    def test_pwaa_mass_quarter(self):
        g = unit_grid(32)
        thin = straight_lineset([10.0, 22.0], r=0.25)
        ref = straight_lineset([10.0, 22.0], r=0.5)
        m_thin = lv.voxelize(thin, compute_clip_normals(thin), g).total_occupancy()
        m_ref = lv.voxelize(ref, compute_clip_normals(ref), g).total_occupancy()
        assert m_thin == pytest.approx(0.25 * m_ref, rel=1e-3)

    def test_clipping_mass(self):
        g = unit_grid(32)
        # middle vertex on a voxel boundary: the clip plane coincides with
        # it, so the two half-capsule occupancies tile exactly
        poly = straight_lineset([10.0, 16.0, 22.0], r=0.5)
        single = straight_lineset([10.0, 22.0], r=0.5)
        m_poly = lv.voxelize(poly, compute_clip_normals(poly), g).total_occupancy()
        m_single = lv.voxelize(single, compute_clip_normals(single), g).total_occupancy()
        m_unclipped = lv.voxelize(poly, None, g).total_occupancy()
        assert m_poly == pytest.approx(m_single, rel=1e-3)
        assert m_unclipped > 1.05 * m_single
