import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from parcap.model import EMPTY, Ball, Cantor, PointCloud, cube_grid, make_context, rasterize
from parcap.potential import (capacity_density, cover_indices, density_integral, density_value,
                              sandwich, shell_mask, reference_grid, unit_ball_capacity,
                              w_integral, w_integral_parts, w_integral_rescaled, w_series,
                              w_tilde_series)

CTX = make_context(2, 2)
H = 1 / 8
F = Ball((0.0, 0.0), 0.5)


@pytest.mark.parametrize("kind", [w_series, w_tilde_series])
@pytest.mark.parametrize("ell", [0.25, 4.0])
def test_series_equivariance(kind, ell):
    x, t = np.array([0.5, 0.0]), 0.25
    a = kind(F, x, t, CTX, H).value
    b = kind(F.affine(np.zeros(2), ell), x / ell, t / ell ** 2, CTX, H).value
    assert b == pytest.approx(ell ** (2 / (CTX.q - 1)) * a, rel=1e-9)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.05, 1.0))
def test_series_positive_and_comparable(x0, t):
    a = w_series(F, (x0, 0.0), t, CTX, H)
    b = w_tilde_series(F, (x0, 0.0), t, CTX, H)
    assert a.value > 0 and b.value > 0
    assert 0.2 < b.value / a.value < 5


def test_series_terms_sum():
    s = w_series(F, (0.5, 0.0), 0.25, CTX, H)
    total = sum(tm.contribution for tm in s.terms)
    assert s.value == pytest.approx(0.25 ** (-1) * total)
    assert s.to_csv().splitlines()[0] == "n,d_n,c_n,weight,contribution"
    assert all(tm.weight == pytest.approx(math.exp(-tm.n / 4)) for tm in s.terms)   # gamma = 0 here


def test_series_empty_and_subcritical():
    assert w_series(EMPTY, (0, 0), 1.0, CTX, H).value == 0.0
    with pytest.raises(ValueError):
        w_series(F, (0, 0), 1.0, make_context(2, 1.5), H)
    with pytest.raises(ValueError):
        w_series(F, (0, 0), 0.0, CTX, H)


def test_series_discrete_input_reports_shells():
    g = cube_grid(2, 1, 1 / 8)
    s = w_series(rasterize(F, g), (0.0, 0.0), 0.25, CTX, H)
    assert s.a_t >= 0 and sum(s.shell_nodes.values()) == rasterize(F, g).count


def test_density_values():
    cap1 = unit_ball_capacity(CTX, H)
    # F/tau covers the unit ball once tau <= 1/2
    assert density_value(F, (0, 0), 0.5, CTX, H) == pytest.approx(cap1)
    assert density_value(EMPTY, (0, 0), 0.5, CTX, H) == 0.0
    c = capacity_density(F, (0, 0), [2.0, 1.0, 0.5], CTX, H)
    assert np.all(np.diff(c.values) >= 0)
    assert np.allclose(c.weighted(CTX, -1), c.values * c.taus ** -2)
    with pytest.raises(ValueError):
        capacity_density(F, (0, 0), [0.5, 1.0], CTX, H)
    with pytest.raises(ValueError):
        density_value(F, (0, 0), 0.0, CTX, H)


def test_point_density_shrinks_with_resolution():
    pt = PointCloud(((0.0, 0.0),))
    a = density_value(pt, (0, 0), 0.5, CTX, 1 / 8)
    b = density_value(pt, (0, 0), 0.5, CTX, 1 / 16)
    assert 0 < b < a


def test_integral_forms_agree():
    x, t = (0.5, 0.0), 0.25
    a = w_integral(F, x, t, CTX, H)
    b = w_integral_rescaled(F, x, t, CTX, H)
    assert a == pytest.approx(b, rel=1e-10)
    parts = w_integral_parts(F, x, t, CTX, H)
    assert parts.tail_bound == 0.0 and parts.D == pytest.approx(1.0)
    far = w_integral_parts(F, (0, 0), 0.001, CTX, H)
    assert far.upper_limit < far.D and far.tail_bound > 0


def test_density_integral_empty_range():
    assert density_integral(F, (0, 0), 1.0, CTX, 1.0, 0.5, H) == 0.0


def test_cover_indices():
    assert cover_indices(F, (0, 0), 0.25) == (1, 0)
    assert cover_indices(F, (0, 0), 0.2) == (2, 1)


def test_sandwich_fields():
    s = sandwich(F, (0.5, 0.0), 0.25, CTX, H)
    assert s.W > 0 and s.lower > 0 and s.upper > 0
    assert math.isfinite(s.ratio_lower) and math.isfinite(s.ratio_upper)
    assert s.remainder >= 0


def test_shell_mask_inside_unit_ball():
    g = reference_grid(2, H)
    m = shell_mask(Cantor(2, 0.25), (0.5, 0.5), 0.1, 3, g)
    pts = g.points()[m.ravel()]
    assert np.all(np.linalg.norm(pts, axis=1) <= 1 + H)
