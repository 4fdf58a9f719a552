import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from parcap.model import make_context
from parcap.pde import SchemeParams
from parcap.vss import (CROSSING, SLOW, _shoot, asymptotic_drift, dirac_limit_compare,
                        flat_profile, insertion_residual, self_similar_field, tail_correction,
                        tail_fit, vss_profile)

# f(0) for N = 1, q = 2 from an independent collocation solve with an
# asymptotic Robin condition at y = 12
F0_N1_Q2 = 0.68984361093


@pytest.fixture(scope="module")
def prof():
    return vss_profile(make_context(1, 2))


def test_frozen_value(prof):
    assert prof.f0 == pytest.approx(F0_N1_Q2, abs=1e-9)
    assert prof.bracket_width < 1e-8


def test_shape(prof):
    assert np.all(prof.f > 0)
    assert np.all(np.diff(prof.f) < 0)
    assert prof.df[0] == 0.0
    assert prof.f.max() <= 1.0      # the flat solution (q-1)^(-1/(q-1))


def test_tail(prof):
    k, C = tail_fit(prof.y, prof.f)
    assert k == pytest.approx(1.0, abs=1e-3)      # 2/(q-1) - N
    assert prof.drift < 0.05
    assert asymptotic_drift(prof) == pytest.approx(prof.drift)
    # beyond y_max the Gaussian tail continues the profile smoothly
    inside = float(np.interp(prof.y_max, prof.y, prof.f))
    assert prof(prof.y_max + 1e-9) == pytest.approx(inside, rel=1e-3)


def test_ode_residual_by_differences(prof):
    y, f = prof.y, prof.f
    h = y[1] - y[0]
    d2 = (f[2:] - 2 * f[1:-1] + f[:-2]) / h ** 2
    d1 = (f[2:] - f[:-2]) / (2 * h)
    r = d2 + 0.5 * y[1:-1] * d1 + f[1:-1] - f[1:-1] ** 2
    assert np.max(np.abs(r)) < 1e-4


def test_bracket_classes(prof):
    lo, hi = prof.bracket
    assert _shoot(lo * (1 - 1e-3), 1, 2.0, 22.0)[0] == CROSSING
    assert _shoot(hi * (1 + 1e-3), 1, 2.0, 22.0)[0] == SLOW


def test_insertion_residual(prof):
    assert insertion_residual(prof) < 1e-3


def test_csv(prof):
    lines = prof.to_csv().splitlines()
    assert lines[0] == "y,f,df" and len(lines) == len(prof.y) + 1


def test_self_similar_field(prof):
    pts = np.array([[0.0], [0.5]])
    u = self_similar_field(prof, pts, 0.25)
    assert u[0] == pytest.approx(4 * prof.f0)


def test_errors():
    with pytest.raises(ValueError):
        vss_profile(make_context(1, 3))
    with pytest.raises(ValueError):
        vss_profile(make_context(1, 2), y_max=5)
    with pytest.raises(ValueError):
        flat_profile(3.5)
    with pytest.raises(ValueError):
        dirac_limit_compare(make_context(2, 2), SchemeParams(h=0.1))


@settings(max_examples=3, deadline=None)
@given(st.floats(1.5, 2.6))
def test_profile_family(q):
    p = flat_profile(q)
    cap = (q - 1) ** (-1 / (q - 1))
    assert np.all(p.f > 0) and p.f0 < cap
    # the corrected tail is flat; the bare power law carries an O(k^2/y^2) bias
    assert p.drift < 0.02
    assert p.drift <= asymptotic_drift(p, corrected=False) + 1e-12


def test_tail_correction_values():
    # c = -k(k+N-2) vanishes for N = 1, q = 2 (k = 1)
    assert np.all(tail_correction([6.0, 10.0], 2.0, 1) == 1.0)
    # N = 1, q = 3/2: k = 3, c = -6, d = 0
    assert tail_correction(6.0, 1.5, 1) == pytest.approx(1 - 6 / 36)


def test_higher_dimension():
    p = vss_profile(make_context(2, 1.5))
    assert np.all(np.diff(p.f) < 0)
    assert p.drift < 0.02


def test_dirac_limit_coarse(prof):
    sch = SchemeParams(h=1 / 32, T=1.0, output_times=(0.25, 0.5, 1.0))
    out = dirac_limit_compare(make_context(1, 2), sch, prof)
    assert out["deviation"] < 0.1
    devs = [r["deviation"] for r in out["ladder"]]
    assert devs[-1] < devs[0]
