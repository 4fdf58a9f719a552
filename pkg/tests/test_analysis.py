import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.special import iv

from parcap.analysis import (RatioReport, bilateral_suite, classify_point, densify,
                             lemma33_brute, lemma33_closed, lemma33_variant_bound,
                             lemmaA1_check, lemmaA1_lhs, lemmaA1_peak, lemmaA2_check,
                             lemmaA2_instance, romberg, sample_points, sphere_bound_profile,
                             sphere_integral, sphere_integral_3, sphere_integral_5,
                             sphere_integral_5_displayed, sphere_recursion,
                             sphere_recursion_displayed, wiener_upper_suite)
from parcap.model import EMPTY, Ball, Box, PointCloud, make_context


def test_romberg_against_closed_forms():
    assert romberg(np.exp, 0.0, 1.0) == pytest.approx(math.e - 1, rel=1e-10)
    assert romberg(np.sin, 0.0, math.pi) == pytest.approx(2.0, rel=1e-10)
    assert romberg(np.exp, 1.0, 1.0) == 0.0


@pytest.mark.parametrize("a", [0.5, 3.0, 10.0])
@pytest.mark.parametrize("N", [1, 2])
def test_lemma33_closed_vs_grid(a, N):
    c = lemma33_closed(a, 2 * a, 1.0, N)
    b = lemma33_brute(a, 2 * a, 1.0, N)
    assert b == pytest.approx(c, rel=1e-3)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.2, 20.0), st.floats(0.1, 10.0), st.integers(1, 3))
def test_lemma33_time_scaling(a, t, N):
    # the closed form scales as t^(-N/2)
    assert lemma33_closed(a, 2 * a, t, N) == pytest.approx(t ** (-N / 2) * lemma33_closed(a, 2 * a, 1.0, N))


def test_lemma33_variant():
    assert lemma33_variant_bound(4.0, 1.0, 2, 0.5) >= lemma33_closed(4.0, 8.0, 1.0, 2)
    with pytest.raises(ValueError):
        lemma33_variant_bound(1.0, 1.0, 2, 0.1)
    with pytest.raises(ValueError):
        lemma33_closed(2.0, 1.0, 1.0, 1)


def test_lemmaA1_lhs_against_quad():
    a, b, A, B = 1.5, 0.5, 2.0, 1.5
    ref, _ = quad(lambda x: (1 - x) ** -a * x ** -b * math.exp(-A * A / (4 * (1 - x)) - B * B / (4 * x)),
                  0, 1, epsrel=1e-12, points=[B / (A + B)])
    assert lemmaA1_lhs(a, b, A, B) == pytest.approx(ref, rel=1e-8)


@settings(max_examples=20, deadline=None)
@given(st.sampled_from([0.5, 1.0, 2.5]), st.sampled_from([0.5, 1.0, 2.5]),
       st.floats(0.5, 4.0), st.floats(0.5, 4.0))
def test_lemmaA1_ratio_bounded(a, b, A, off):
    r = lemmaA1_check(a, b, A, 1.0 / A + off)
    assert 0 < r < 10


def test_lemmaA1_peak_identity():
    xn, vn, x0, v0 = lemmaA1_peak(1.0, 2.0)
    assert xn == pytest.approx(x0, abs=1e-6)
    assert vn == pytest.approx(v0, rel=1e-10)
    with pytest.raises(ValueError):
        lemmaA1_check(1.0, 1.0, 1.0, 0.5)
    assert densify((1.0, 4.0)) == (1.0, 2.0, 4.0)


def test_lemmaA2_bounded_along_ladder():
    al, be, ga, de = lemmaA2_instance()
    r = [lemmaA2_check(al, be, ga, de, 2, n) for n in (20, 40, 80, 160, 320)]
    assert all(math.isfinite(v) for v in r)
    assert r[-1] <= 1.05 * max(r[:-1])
    with pytest.raises(ValueError):
        lemmaA2_check(al, be, 0.9, de, 2, 20)


def test_sphere_integrals():
    # I_2 = pi I_0(m) and I_3 = 2 sinh m / m
    for m in (0.1, 1.0, 10.0):
        assert sphere_integral(2, m) == pytest.approx(math.pi * iv(0, m), rel=1e-12)
        assert sphere_integral(3, m) == pytest.approx(sphere_integral_3(m), rel=1e-12)
        assert sphere_integral(5, m) == pytest.approx(sphere_integral_5(m), rel=1e-9)
    # the sinh-only closed form for N = 5 is off
    assert sphere_integral_5_displayed(2.0) == pytest.approx(1.81343, rel=1e-4)
    assert sphere_integral(5, 2.0) == pytest.approx(1.9487654871601, rel=1e-12)
    assert sphere_integral(3, 0.0) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        sphere_integral(3, -1.0)


@pytest.mark.parametrize("N", [6, 7, 8])
@pytest.mark.parametrize("m", [0.5, 2.0, 10.0])
def test_corrected_recursion(N, m):
    assert sphere_recursion(N, m) == pytest.approx(sphere_integral(N, m), rel=1e-8)


def test_displayed_recursion_disagrees():
    err = abs(sphere_recursion_displayed(6, 2.0) / sphere_integral(6, 2.0) - 1)
    assert err > 1.0


def test_sphere_bound_profile():
    ms, prof = sphere_bound_profile(6)
    assert np.all(np.isfinite(prof)) and prof[-1] / prof[len(prof) // 2] < 1.05


def test_sample_points():
    s = sample_points(Ball((0.0, 0.0), 0.5), 2)
    assert len(s) == 12
    assert s[0] == ((0.0, 0.0), 0.05)
    assert s[4][0] == (0.5, 0.0) and s[8][0] == (0.8, 0.0)
    r1 = sample_points(Ball((0.0, 0.0), 0.5), 2, seed=7)
    assert r1 == sample_points(Ball((0.0, 0.0), 0.5), 2, seed=7)


def test_ratio_report_json():
    rep = RatioReport("x", {"a": 1}, [((0.0,), 0.1)], {"r": [1.0, 4.0]}, passed=False)
    assert rep.stats("r") == (1.0, 2.0, 4.0)
    d = json.loads(rep.to_json())
    assert d["pass"] is False and d["ratios"]["r"] == [1.0, 4.0]


def test_bilateral_small():
    ctx = make_context(1, 3)
    K = Ball((0.0,), 0.25)
    samples = sample_points(K, 1, times=(0.1, 0.25))
    rep = bilateral_suite(K, ctx, samples, h=1 / 16, h_ref=1 / 16)
    assert set(rep.ratios) == {"U/W", "L/W", "U/L"}
    assert all(math.isfinite(v) and v > 0 for vals in rep.ratios.values() for v in vals)
    assert min(rep.ratios["U/L"]) >= 1 - 1e-9
    assert len(rep.levels) == 2
    vac = bilateral_suite(EMPTY, ctx, samples, h=1 / 16, h_ref=1 / 16)
    assert vac.passed


def test_wiener_small():
    ctx = make_context(1, 3)
    K = Ball((0.0,), 0.25)
    rep = wiener_upper_suite(K, ctx, sample_points(K, 1, times=(0.1,)), h=1 / 16, refine=False,
                             h_ref=1 / 16)
    assert set(rep.ratios) == {"U/series", "U/integral", "series/integral"}
    with pytest.raises(ValueError):
        wiener_upper_suite(K, make_context(1, 2), [((0.0,), 0.1)])


def test_classify_fat_and_point():
    ctx = make_context(2, 2)
    fat = classify_point(Ball((0.0, 0.0), 0.5), (0.0, 0.0), ctx, h_ref=1 / 16, rate=False)
    assert fat.kind == "strong" and fat.gamma > 0 and not fat.null_set
    pt = classify_point(PointCloud(((0.0, 0.0),)), (0.0, 0.0), ctx, h_ref=1 / 16, rate=False)
    assert pt.kind == "bounded" and pt.null_set
    seg = classify_point(Box((-0.5, 0.0), (0.5, 0.0)), (0.0, 0.0), ctx, h_ref=1 / 16, rate=False)
    assert not seg.null_set
    with pytest.raises(ValueError):
        classify_point(Ball((0.0, 0.0), 0.5), (0.0, 0.0), ctx, taus=(0.5, 0.25))
