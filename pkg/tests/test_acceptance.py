"""One test per acceptance criterion. Each prints a single PASS/FAIL line."""
import math
import time

import numpy as np
import pytest

from parcap.analysis import appendix_suite, sample_points
from parcap.capacity import besov_capacity, capacity_scaling_check
from parcap.cli import RunConfig, ResultStore, run_suites, suite_bilateral, suite_classify, suite_vss
from parcap.model import Ball, cube_grid, make_context, parse_set, rasterize
from parcap.pde import FunctionTrace, SchemeParams, maximal_solution, solve_semilinear
from parcap.potential import w_integral, w_series, w_tilde_series

CTX22 = make_context(2, 2)
CTX13 = make_context(1, 3)


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return emit


@pytest.fixture(scope="module")
def appendix():
    return appendix_suite()


def test_01_condenser_capacity(report):
    t0 = time.perf_counter()
    g = cube_grid(2, 1, 1 / 128)
    res = besov_capacity(rasterize(Ball((0.0, 0.0), 0.5), g), rasterize(Ball((0.0, 0.0), 1.0), g), CTX22)
    dt = time.perf_counter() - t0
    rel = abs(res.value / (2 * math.pi / math.log(2)) - 1)
    report(1, rel <= 0.03 and dt < 60, f"cap = {res.value:.5f}, rel err {rel:.4f}, {dt:.1f} s")


def test_02_capacity_scaling(report):
    worst = 0.0
    for ctx in (CTX22, CTX13):
        g = cube_grid(ctx.N, 1, 1 / 64)
        K = rasterize(Ball((0.0,) * ctx.N, 0.5), g)
        O = rasterize(Ball((0.0,) * ctx.N, 1.0), g)
        for tau in (0.5, 2.0):
            for matched in (True, False):
                worst = max(worst, abs(capacity_scaling_check(K, O, ctx, tau, matched=matched) - 1))
    report(2, worst <= 0.05, f"worst |ratio - 1| = {worst:.4f}")


def test_03_potential_equivariance(report):
    K = Ball((0.0, 0.0), 0.5)
    worst = 0.0
    for x, t in sample_points(K, 2, times=(0.1, 0.25)):
        x = np.asarray(x)
        for kind in (w_series, w_tilde_series):
            a = kind(K, x, t, CTX22, 1 / 16).value
            for ell in (0.25, 4.0):
                b = kind(K.affine(np.zeros(2), ell), x / ell, t / ell ** 2, CTX22, 1 / 16).value
                worst = max(worst, abs(b / (ell ** (2 / (CTX22.q - 1)) * a) - 1))
    report(3, worst <= 0.05, f"max rel err {worst:.2e}")


SANDWICH_SETS = ("ball:0,0:0.5", "ball:-0.5,0:0.2+ball:0.5,0:0.2", "cantor:2:0.333:box")


def test_04_sandwiches(report):
    worst, finite, lines = 0.0, True, []
    for spec in SANDWICH_SETS:
        K = parse_set(spec)
        ends = {}
        for h in (1 / 16, 1 / 32):
            integral, tilde = [], []
            for x, t in sample_points(K, 2):
                W = w_series(K, x, t, CTX22, h).value
                integral.append(W / w_integral(K, x, t, CTX22, h))
                tilde.append(W / w_tilde_series(K, x, t, CTX22, h).value)
            finite &= all(0 < r < math.inf for r in integral + tilde)
            ends[h] = [min(integral), max(integral), min(tilde), max(tilde)]
        move = max(abs(b / a - 1) for a, b in zip(ends[1 / 16], ends[1 / 32]))
        worst = max(worst, move)
        lines.append(f"{spec} [{ends[1 / 32][0]:.2f},{ends[1 / 32][1]:.2f}]/"
                     f"[{ends[1 / 32][2]:.2f},{ends[1 / 32][3]:.2f}]")
    report(4, finite and worst < 0.25, f"max endpoint move {worst:.3f}; " + "; ".join(lines))


def test_05_constant_data_ode(report):
    sch = SchemeParams(h=1 / 16, T=1.0, boundary="neumann", output_times=(1.0,))
    f = solve_semilinear(FunctionTrace(lambda x: np.ones_like(x), ((-1.0,), (1.0,))), sch, make_context(1, 2))
    err = float(np.max(np.abs(f.values[-1] * 2.0 - 1.0)))
    report(5, err <= 1e-3, f"max rel err at t = 1: {err:.2e}")


def test_06_universal_bound(report):
    cases = [(Ball((0.0,), 0.25), CTX13, 1 / 32),
             (Ball((0.0, 0.0), 0.5), CTX22, 1 / 16),
             (parse_set("ball:-0.5,0:0.2+ball:0.5,0:0.2"), CTX22, 1 / 16)]
    worst = -math.inf
    for K, ctx, h in cases:
        f = maximal_solution(K, SchemeParams(h=h, T=0.5), ctx)
        t = f.times.reshape((-1,) + (1,) * f.grid.N)
        with np.errstate(divide="ignore"):
            bound = ((ctx.q - 1) * t) ** (-1 / (ctx.q - 1))
        worst = max(worst, float(np.max(f.values[1:] - bound[1:])))
    report(6, worst <= 1e-8, f"max excess over the bound {worst:.3e}")


def test_07_bilateral(report):
    t0 = time.perf_counter()
    rep, _ = suite_bilateral(RunConfig())
    dt = time.perf_counter() - t0
    r = rep["ratios"]
    ul = max(r["U/L"])
    finite = all(math.isfinite(v) for s in r.values() for v in s)
    ok = finite and ul <= 10 and rep["refinement_delta"] < 0.25 and rep["pass"] and dt < 900
    report(7, ok, f"U/W [{min(r['U/W']):.3g},{max(r['U/W']):.3g}] L/W [{min(r['L/W']):.3g},"
           f"{max(r['L/W']):.3g}] max U/L {ul:.3g}, move {rep['refinement_delta']:.3f}, {dt / 60:.1f} min")


def test_08_lemma33(report, appendix):
    part = appendix["lemma33"]
    worst = max(row["rel_err"] for row in part["samples"])
    report(8, len(part["samples"]) == 18 and worst <= 1e-3, f"max rel err {worst:.2e} over 18 cases")


def test_09_lemmaA1(report, appendix):
    part = appendix["lemmaA1"]
    move = max(abs(s["sup_dense"] / s["sup"] - 1) for s in part["samples"])
    finite = all(math.isfinite(s["sup"]) for s in part["samples"])
    peak = part["peak"]["rel_err"]
    report(9, finite and move < 0.10 and peak <= 1e-10,
           f"max sup {max(part['ratios']):.3g}, densify move {move:.3f}, peak err {peak:.1e}")


def test_10_sphere_integrals(report, appendix):
    part = appendix["sphere_integral"]
    q3 = max(part["ratios"])
    bounded = math.isfinite(part["bound_max"]) and part["tail_growth"] < 1.05
    rec = part["recursion_displayed_rel_err"]
    i5 = part["I5_at_2"]
    ok = q3 <= 1e-8 and bounded and rec <= 1e-6
    report(10, ok, f"I_3 err {q3:.1e}, bounded {bounded}, displayed recursion err {rec:.3g} "
           f"(corrected {part['recursion_corrected_rel_err']:.1e}), I_5(2) quadrature "
           f"{i5['quadrature']:.6f} vs displayed {i5['displayed']:.6f}")


def test_11_vss(report):
    rep, _ = suite_vss(RunConfig())
    report(11, rep["pass"], f"f0 {rep['f0']:.10f}, bracket {rep['bracket_width']:.1e}, residual "
           f"{rep['residual']:.1e}, drift {rep['drift']:.3f}, Dirac deviation {rep['deviation']:.3f}")


def test_12_classification(report):
    rep, _ = suite_classify(RunConfig())
    pots = rep["point"]["potentials"]
    report(12, rep["pass"], f"interior {rep['interior']['kind']} rate {rep['interior']['rate_exponent']:.4f}"
           f" (target -1); point {rep['point']['kind']} potential {pots[0]:.3f} -> {pots[-1]:.3f}")


COARSE = dict(h=1 / 16, h_ref=1 / 16, capacity_h=1 / 32, vss_h=1 / 32, rate_h=1 / 32, refine=False,
              times=[0.1, 0.25], offsets=[0.0, 1.0], k_ladder=[10.0, 1e2, 1e3, 1e4])


def test_13_determinism(report, tmp_path):
    digests = []
    cfg = RunConfig(**COARSE)
    for run in ("a", "b"):
        store = ResultStore(tmp_path / run, cfg)
        run_suites(cfg, list(cfg.suites), store)
        digests.append(store.finalize())
        assert "summary.json" in store.files
    report(13, digests[0] == digests[1], f"manifest {digests[0][:16]} / {digests[1][:16]}")
