"""Maximal solution, sigma-moderate lower solution and series potential at a coarse grid."""
from parcap.analysis import bilateral_suite, sample_points
from parcap.model import Ball, make_context

ctx = make_context(2, 2)
K = Ball((0.0, 0.0), 0.5)
rep = bilateral_suite(K, ctx, sample_points(K, 2, times=(0.1, 0.25)), h=1 / 16, refine=False, h_ref=1 / 16)
for name in ("U/W", "L/W", "U/L"):
    lo, gm, hi = rep.stats(name)
    print(f"{name}: min {lo:.4f}  geometric mean {gm:.4f}  max {hi:.4f}")
print("pass" if rep.passed else "FAIL")
