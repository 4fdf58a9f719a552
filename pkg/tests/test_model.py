import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from parcap.model import (EMPTY, Annulus, Ball, Box, Cantor, Grid, PointCloud, Union,
                          annular_slices, cube_grid, make_context, make_grid, parse_set,
                          rasterize, series_cutoff)


def test_context_values():
    c = make_context(2, 2)
    assert c.q_prime == 2.0 and c.s == 1.0 and c.p == 2.0 and c.sp == 2.0
    assert c.q_c == 2.0 and c.supercritical
    c3 = make_context(3, 2)
    assert c3.q_c == pytest.approx(5 / 3)
    assert not make_context(1, 2).supercritical
    assert not make_context(1, 2.9).supercritical
    assert make_context(1, 3).supercritical


@pytest.mark.parametrize("N,q", [(0, 2), (1.5, 2), (True, 2), (2, 1.0), (2, 0.5), (2, float("nan")),
                                 (2, float("inf"))])
def test_context_rejects(N, q):
    with pytest.raises(ValueError):
        make_context(N, q)


@given(st.integers(1, 6), st.floats(1.01, 20.0))
def test_context_identities(N, q):
    c = make_context(N, q)
    assert math.isclose(1 / c.q + 1 / c.q_prime, 1.0)
    assert math.isclose(c.s * c.p, c.sp)
    # supercritical exactly when s q' <= N
    assert c.supercritical == (c.sp <= N + 1e-12)


def test_grid_layout():
    g = make_grid((-1, -1), (1, 1), 0.25)
    assert g.shape == (9, 9) and g.N == 2
    assert g.index_of((0, 0)) == (4, 4)
    assert g.index_of((5, -5)) == (8, 0)
    np.testing.assert_allclose(g.node((4, 4)), 0.0)
    assert g.points().shape == (81, 2)
    with pytest.raises(ValueError):
        make_grid(0, 1, 0.3)
    with pytest.raises(ValueError):
        make_grid(0, 0, 0.1)


def test_cube_grid_widens():
    g = cube_grid(1, 0.3, 0.25)
    assert g.lo == (-0.5,) and g.hi == (0.5,)


def test_ball_hits_cells():
    g = make_grid((-1, -1), (1, 1), 0.25)
    m = Ball((0, 0), 0.0).hits(g)
    assert m.sum() == 1 and m[4, 4]
    # radius 0.125 reaches exactly the cell faces of the four neighbours
    assert Ball((0, 0), 0.125).hits(g).sum() == 5
    assert Ball((5, 5), 0.1).hits(g).sum() == 0


def test_point_on_cell_face_hits_both():
    g = make_grid((0,), (1,), 0.25)
    assert PointCloud(((0.125,),)).hits(g).sum() == 2


def test_box_and_annulus():
    g = make_grid((-1, -1), (1, 1), 0.25)
    assert Box((-0.25, 0), (0.25, 0)).hits(g).sum() == 3
    ring = Annulus((0, 0), 0.5, 0.75).hits(g)
    assert not ring[4, 4] and ring[4, 7]


def test_cantor_boxes():
    c = Cantor(2, 0.25)
    assert len(c.boxes(2)) == 16
    assert len(c.boxes(1)) == 4
    with pytest.raises(ValueError):
        Cantor(1, 0.5)
    pts = np.array([[0.0, 0.0], [0.5, 0.5], [1.0, 1.0]])
    assert list(c.contains(pts)) == [True, False, True]


def test_union_and_empty():
    u = Ball((0,), 0.1) + Ball((1,), 0.1)
    assert isinstance(u, Union) and len(u.parts) == 2
    assert EMPTY.is_empty and EMPTY.to_text() == "empty"
    g = make_grid((0,), (1,), 0.1)
    assert not EMPTY.hits(g).any()


@pytest.mark.parametrize("text", ["ball:0,0:0.5", "ball:0,0:0.5+ball:2,0:0.3", "box:0,0:1,2",
                                  "annulus:0:0.25:1", "cantor:3:0.25:box", "cantor:2:0.3:0,0,1,1",
                                  "points:0,0/1,1", "empty"])
def test_parse_roundtrip(text):
    s = parse_set(text)
    assert parse_set(s.to_text()) == s


@pytest.mark.parametrize("text", ["", "ball:0", "disc:0:1", "ball:0:-1", "cantor:1:0.3:0,0,1",
                                  "box:1:0"])
def test_parse_errors(text):
    with pytest.raises(ValueError):
        parse_set(text)


@settings(max_examples=40, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(0, 0.8),
       st.sampled_from([0.25, 0.5, 2.0, 4.0]))
def test_hits_equivariant_under_matched_scaling(cx, cy, r, scale):
    # scaling the set and the lattice together keeps the mask
    g = make_grid((-2, -2), (2, 2), 0.125)
    g2 = Grid(tuple(v / scale for v in g.lo), tuple(v / scale for v in g.hi), g.h / scale, g.shape)
    b = Ball((cx, cy), r)
    assert np.array_equal(b.hits(g), b.affine(np.zeros(2), scale).hits(g2))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(-0.5, 0.5))
def test_shells_partition(t, x0):
    g = make_grid((-1, -1), (1, 1), 0.125)
    F = rasterize(Ball((0.2, 0.1), 0.6), g)
    sl = annular_slices(F, (x0, 0.0), t)
    total = np.zeros(g.shape, int)
    for s in sl.shells:
        total += s.set.mask
        pts = s.set.points()
        d = np.linalg.norm(pts - np.array([x0, 0.0]), axis=1)
        assert np.all(d >= s.d_n * (1 - 1e-9))
        assert np.all(d <= s.d_next * (1 + 1e-9))
    if not sl.truncated:
        assert np.array_equal(total, F.mask.astype(int))
    assert sl.a_t == sl.shells[-1].n


def test_outermost_shell_closed():
    g = make_grid((0,), (2,), 0.5)
    F = rasterize(Box((0,), (1,)), g)   # nodes 0, 0.5, 1
    sl = annular_slices(F, (0.0,), 0.25)
    # |y|^2/t = 0, 1, 4: node at distance 1 lies on d_4 and is moved to shell 3
    assert [s.n for s in sl.shells] == [0, 1, 3]
    assert sl.a_t == 3 and sl.a_t_ball == 4 and sl.a_t_cover == 3


def test_slices_empty_and_errors():
    g = make_grid((0,), (1,), 0.25)
    sl = annular_slices(rasterize(EMPTY, g), (0.0,), 1.0)
    assert sl.a_t == -1 and sl.shells == ()
    with pytest.raises(ValueError):
        annular_slices(rasterize(Ball((0,), 0.1), g), (0.0,), 0.0)
    assert math.exp(-series_cutoff(1e-10) / 4) < 1e-10
