"""Condenser capacity of a ball in a ball against the radial formula, over a grid ladder."""
import math

from parcap.capacity import besov_capacity
from parcap.model import Ball, cube_grid, make_context, rasterize

ctx = make_context(2, 2)
exact = 2 * math.pi / math.log(2)
print(f"radial formula 2 pi / ln 2 = {exact:.6f}")
for h in (1 / 16, 1 / 32, 1 / 64, 1 / 128):
    g = cube_grid(2, 1, h)
    res = besov_capacity(rasterize(Ball((0.0, 0.0), 0.5), g), rasterize(Ball((0.0, 0.0), 1.0), g), ctx)
    print(f"h = 1/{round(1 / h):<4d} capacity {res.value:.6f}  rel err {abs(res.value / exact - 1):.4f}")
