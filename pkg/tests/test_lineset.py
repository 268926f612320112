import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linevox import lineset as lns


def make_ls(vertices, offsets, radius=0.25):
    return lns.LineSet(np.asarray(vertices, dtype=np.float32),
                       np.asarray(offsets, dtype=np.int64), radius)


class TestLineSetModel:
    def test_counts(self):
        ls = make_ls([[0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0], [1, 1, 0]], [0, 3, 5])
        assert ls.n_vertices == 5
        assert ls.n_polylines == 2
        assert ls.n_segments == 3
        assert list(ls.segment_vertex_ids()) == [0, 1, 3]

    def test_segment_never_crosses_boundary(self):
        ls = make_ls(np.random.default_rng(0).normal(size=(12, 3)), [0, 4, 7, 12])
        off = ls.polyline_offsets
        for i in ls.segment_vertex_ids():
            p0 = np.searchsorted(off, i, side="right") - 1
            p1 = np.searchsorted(off, i + 1, side="right") - 1
            assert p0 == p1 or off[p1] != i + 1  # i+1 not the start of a new polyline

    @pytest.mark.parametrize("offsets", [[0], [1, 5], [0, 1], [0, 3]])
    def test_bad_offsets(self, offsets):
        with pytest.raises(lns.LineSetError):
            make_ls(np.zeros((5, 3)), offsets)

    def test_bad_radius_and_nonfinite(self):
        with pytest.raises(lns.LineSetError):
            make_ls(np.zeros((2, 3)), [0, 2], radius=0.0)
        v = np.zeros((2, 3))
        v[0, 0] = np.nan
        with pytest.raises(lns.LineSetError):
            make_ls(v, [0, 2])


class TestIO:
    def test_text_two_polylines(self, tmp_path):
        p = tmp_path / "a.lns"
        p.write_text("lns 1 radius=0.5\n"
                     "v 0 0 0\nv 1 0 0\nv 2 0 0\n"
                     "\n"
                     "v 0 1 0\nv 1 1 0\n")
        ls = lns.load_lineset(p)
        assert ls.n_vertices == 5
        assert list(ls.polyline_offsets) == [0, 3, 5]
        assert ls.n_segments == 3
        assert ls.radius == 0.5

    def test_empty_file(self, tmp_path):
        p = tmp_path / "e.lns"
        p.write_text("")
        with pytest.raises(lns.ParseError, match="no polylines"):
            lns.load_lineset(p)

    def test_error_names_line(self, tmp_path):
        p = tmp_path / "b.lns"
        p.write_text("lns 1 radius=0.5\nv 0 0 0\nv 1 0 nope\n")
        with pytest.raises(lns.ParseError, match=r":3"):
            lns.load_lineset(p)

    def test_short_polyline_rejected(self, tmp_path):
        p = tmp_path / "c.lns"
        p.write_text("lns 1 radius=0.5\nv 0 0 0\n")
        with pytest.raises(lns.ParseError):
            lns.load_lineset(p)

    @pytest.mark.parametrize("fmt", ["lns-binary", "lns-text"])
    def test_roundtrip_bit_identical(self, tmp_path, fmt):
        ls = lns.generate("helix", turns=3.0, verts=50)
        p = tmp_path / "h.lns"
        lns.save_lineset(ls, p, fmt=fmt)
        back = lns.load_lineset(p)
        assert np.array_equal(back.vertices, ls.vertices)
        assert np.array_equal(back.polyline_offsets, ls.polyline_offsets)
        assert back.radius == pytest.approx(ls.radius, rel=1e-7)

    def test_binary_truncated(self, tmp_path):
        ls = lns.generate("helix", verts=10)
        p = tmp_path / "t.lns"
        lns.save_lineset(ls, p)
        raw = p.read_bytes()
        p.write_bytes(raw[:-4])
        with pytest.raises(lns.ParseError, match="byte"):
            lns.load_lineset(p)


class TestClipNormals:
    def test_straight_line(self):
        ls = make_ls([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [0, 3])
        cn = lns.compute_clip_normals(ls)
        assert np.allclose(cn, [[1, 0, 0]] * 3)

    def test_right_angle_interior(self):
        ls = make_ls([[0, 0, 0], [1, 0, 0], [1, 1, 0]], [0, 3])
        cn = lns.compute_clip_normals(ls)
        s = 1 / np.sqrt(2)
        assert np.allclose(cn[1], [s, s, 0], atol=1e-6)
        assert np.allclose(cn[0], [1, 0, 0])
        assert np.allclose(cn[2], [0, 1, 0])

    def test_circle_tangents(self):
        n = 200
        t = np.linspace(0, 2 * np.pi, n, endpoint=False)
        v = np.stack([np.cos(t), np.sin(t), np.zeros(n)], axis=1)
        ls = make_ls(v, [0, n], radius=0.05)
        cn = lns.compute_clip_normals(ls)
        analytic = np.stack([-np.sin(t), np.cos(t), np.zeros(n)], axis=1)
        h = 2 * np.pi / n
        interior = slice(1, n - 1)
        err = np.linalg.norm(cn[interior] - analytic[interior], axis=1)
        assert err.max() < 5 * h * h + 1e-6

    def test_unit_length(self, rng):
        v = rng.normal(size=(30, 3)).astype(np.float32)
        ls = make_ls(v, [0, 10, 30])
        cn = lns.compute_clip_normals(ls)
        assert np.allclose(np.linalg.norm(cn, axis=1), 1.0, atol=1e-6)

    def test_translation_invariance(self, rng):
        v = rng.normal(size=(20, 3)).astype(np.float32)
        ls = make_ls(v, [0, 20])
        cn1 = lns.compute_clip_normals(ls)
        ls2 = make_ls(v + np.float32(7.25), [0, 20])
        cn2 = lns.compute_clip_normals(ls2)
        assert np.allclose(cn1, cn2, atol=1e-5)

    def test_degenerate_polyline(self):
        ls = make_ls(np.ones((3, 3)), [0, 3])
        with pytest.raises(lns.LineSetError, match="degenerate polyline"):
            lns.compute_clip_normals(ls)

    def test_coincident_interior_fallback(self):
        ls = make_ls([[0, 0, 0], [1, 0, 0], [1, 0, 0], [2, 0, 0]], [0, 4])
        cn = lns.compute_clip_normals(ls)
        assert np.allclose(np.linalg.norm(cn, axis=1), 1.0, atol=1e-6)


class TestGenerate:
    def test_helix_shape(self):
        ls = lns.generate("helix", turns=2.0, verts=100)
        assert ls.n_polylines == 1
        assert ls.n_vertices == 100

    def test_streamlines_deterministic(self):
        a = lns.generate("random_streamlines", seed=7)
        b = lns.generate("random_streamlines", seed=7)
        assert np.array_equal(a.vertices, b.vertices)
        assert np.array_equal(a.polyline_offsets, b.polyline_offsets)
        c = lns.generate("random_streamlines", seed=8)
        assert not np.array_equal(a.vertices, c.vertices)

    def test_grid_diagonals_direction(self):
        ls = lns.generate("grid_diagonals", count=10, length=16.0)
        segs = ls.segment_vertex_ids()
        d = ls.vertices[segs + 1] - ls.vertices[segs]
        d = d / np.linalg.norm(d, axis=1, keepdims=True)
        assert np.allclose(d, 1 / np.sqrt(3), atol=1e-5)

    def test_bad_params(self):
        with pytest.raises(lns.LineSetError):
            lns.generate("helix", verts=1)
        with pytest.raises(lns.LineSetError):
            lns.generate("nope")


class TestDecimate:
    def test_identity(self):
        ls = lns.generate("helix", verts=30)
        d = lns.decimate(ls, 1)
        assert np.array_equal(d.vertices, ls.vertices)
        assert np.array_equal(d.polyline_offsets, ls.polyline_offsets)

    def test_every_third(self):
        ls = make_ls(np.arange(30, dtype=np.float32).reshape(10, 3), [0, 10])
        d = lns.decimate(ls, 3)
        assert np.array_equal(d.vertices, ls.vertices[[0, 3, 6, 9]])

    def test_short_polyline_collapses(self):
        ls = make_ls(np.arange(9, dtype=np.float32).reshape(3, 3), [0, 3])
        d = lns.decimate(ls, 5)
        assert d.n_vertices == 2

    def test_arc_length_preserved(self):
        ls = lns.generate("helix", turns=3.0, verts=400)
        d = lns.decimate(ls, 4)

        def arclen(l):
            segs = l.segment_vertex_ids()
            return float(np.linalg.norm(
                l.vertices[segs + 1].astype(np.float64)
                - l.vertices[segs].astype(np.float64), axis=1).sum())

        assert arclen(d) == pytest.approx(arclen(ls), rel=0.05)

    @given(st.integers(min_value=1, max_value=12))
    @settings(max_examples=20, deadline=None)
    def test_always_keeps_endpoints(self, n):
        ls = lns.generate("helix", verts=37)
        d = lns.decimate(ls, n)
        assert np.array_equal(d.vertices[0], ls.vertices[0])
        assert np.array_equal(d.vertices[-1], ls.vertices[-1])
