"""Blow-up classification of an interior point, a segment point and an isolated point (N = 2, q = 2)."""
from parcap.analysis import classify_point
from parcap.model import Ball, Box, PointCloud, make_context

ctx = make_context(2, 2)
x = (0.0, 0.0)
for name, F in (("ball", Ball(x, 0.5)), ("segment", Box((-0.5, 0.0), (0.5, 0.0))),
                ("point", PointCloud((x,)))):
    c = classify_point(F, x, ctx, h_ref=1 / 16, rate=False)
    print(f"{name:8s} class {c.kind:9s} gamma {c.gamma:.3f}  null set {c.null_set}")
