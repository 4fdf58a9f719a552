"""Parabolic capacitary potentials and the capacity density function.

Every capacity in this module is computed on one fixed reference grid
[-2, 2]^N with spacing h_ref: the set handed to the solver is always a
normalized piece (F - x) / r intersected with a subset of the unit ball,
rasterized geometrically. Rescaling (F, x, t) therefore reproduces the same
masks, and the potentials inherit the exact scaling laws.
"""
from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaincc, gamma as gamma_fn

from .capacity import besov_capacity, bessel_capacity_result
from .model import (Annulus, Ball, DiscreteSet, ExponentContext, SetSpec, annular_slices,
                    cube_grid, rasterize, series_cutoff)

REF_HALF = 2.0
DEFAULT_H_REF = 1.0 / 32


def reference_grid(N, h_ref=DEFAULT_H_REF):
    return cube_grid(N, REF_HALF, h_ref)


_CACHE: dict = {}


def _mask_key(*masks):
    hsh = hashlib.sha1()
    for m in masks:
        hsh.update(np.packbits(m).tobytes())
        hsh.update(str(m.shape).encode())
    return hsh.hexdigest()


def clear_cache():
    _CACHE.clear()


def _bessel_on_ref(mask, grid, ctx):
    if not mask.any():
        return 0.0
    key = ("bessel", grid, ctx.N, ctx.q, _mask_key(mask))
    v = _CACHE.get(key)
    if v is None:
        v = _CACHE[key] = bessel_capacity_result(DiscreteSet(grid, mask), ctx).value
    return v


def _besov_on_ref(mask, omega_mask, grid, ctx):
    if not mask.any():
        return 0.0
    key = ("besov", grid, ctx.N, ctx.q, _mask_key(mask, omega_mask))
    v = _CACHE.get(key)
    if v is None:
        v = _CACHE[key] = besov_capacity(DiscreteSet(grid, mask), DiscreteSet(grid, omega_mask), ctx).value
    return v


def _spec(F) -> SetSpec:
    if isinstance(F, SetSpec):
        return F
    if F.source is None:
        raise ValueError("potentials need the geometric description of F")
    return F.source


def unit_ball_capacity(ctx, h_ref=DEFAULT_H_REF):
    g = reference_grid(ctx.N, h_ref)
    return _bessel_on_ref(Ball((0.0,) * ctx.N, 1.0).hits(g), g, ctx)


def shell_mask(F: SetSpec, x, t, n, grid):
    """Cells of the reference grid meeting (F - x)/d_{n+1} and the closed
    annulus d_n/d_{n+1} <= |y| <= 1."""
    d_n, d_next = math.sqrt(n * t), math.sqrt((n + 1) * t)
    S = F.affine(np.asarray(x, float), d_next)
    ring = Annulus((0.0,) * grid.N, d_n / d_next, 1.0)
    return S.hits(grid) & ring.hits(grid)


# ---------------------------------------------------------------- series

@dataclass
class PotentialTerm:
    n: int
    d_n: float
    d_next: float
    capacity: float
    weight: float
    contribution: float


@dataclass
class PotentialSeries:
    kind: str
    ctx: ExponentContext
    x: tuple
    t: float
    terms: list
    value: float
    truncation: int        # last shell index examined
    tail_bound: float      # bound on the neglected part of the sum (before t^(-N/2))
    a_t: int = -1
    shell_nodes: dict = field(default_factory=dict)

    def csv_rows(self):
        return [(tm.n, tm.d_n, tm.capacity, tm.weight, tm.contribution) for tm in self.terms]

    def to_csv(self):
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "d_n", "c_n", "weight", "contribution"])
        for r in self.csv_rows():
            w.writerow([r[0]] + [repr(float(v)) for v in r[1:]])
        return buf.getvalue()


def _check(ctx, t):
    if not t > 0:
        raise ValueError("t must be positive")
    if not ctx.supercritical:
        raise ValueError("subcritical q: use the very singular profile (vss module) instead")


def _series(kind, F, x, t, ctx, h_ref, tol):
    _check(ctx, t)
    spec = _spec(F)
    x = np.asarray(x, float)
    grid = reference_grid(ctx.N, h_ref)
    gam = ctx.N - 2.0 / (ctx.q - 1.0)
    a_t, nodes = -1, {}
    if isinstance(F, DiscreteSet):
        sl = annular_slices(F, x, t)
        a_t = sl.a_t
        nodes = {s.n: s.set.count for s in sl.shells}
    empty = PotentialSeries(kind, ctx, tuple(x), t, [], 0.0, -1, 0.0, a_t, nodes)
    if spec.is_empty:
        return empty
    D = spec.max_dist(x)
    n_top = min(int(math.floor(D * D / t * (1 + 1e-12))), series_cutoff(tol))
    weights = [math.sqrt((n + 1) * t) ** gam * math.exp(-n / 4) for n in range(n_top + 1)]
    bound = unit_ball_capacity(ctx, h_ref) if kind == "W" else None
    terms, total, tail, last = [], 0.0, 0.0, -1
    cmax = 0.0
    for n in range(n_top + 1):
        cb = bound if bound is not None else cmax
        rest = sum(weights[n:]) * cb
        if total > 0 and rest < tol * total:
            tail = rest
            break
        last = n
        if kind == "W":
            c = _bessel_on_ref(shell_mask(spec, x, t, n, grid), grid, ctx)
        else:
            g_n = tilde_grid(ctx.N, n, h_ref)
            c = _besov_on_ref(shell_mask(spec, x, t, n, g_n), _gamma_mask(n, g_n), g_n, ctx)
        cmax = max(cmax, c)
        contrib = weights[n] * c
        total += contrib
        terms.append(PotentialTerm(n, math.sqrt(n * t), math.sqrt((n + 1) * t), c, weights[n], contrib))
    return PotentialSeries(kind, ctx, tuple(x), t, terms, t ** (-ctx.N / 2) * total,
                           last, tail, a_t, nodes)


def tilde_grid(N, n, h_ref=DEFAULT_H_REF):
    """Grid for the relative capacity of shell n: the reference spacing,
    refined for thin shells so that the thickness spans 0.125/h_ref cells."""
    if n == 0:
        return reference_grid(N, h_ref)
    thick = 1.0 - math.sqrt(n / (n + 1))
    h = h_ref * min(1.0, 8.0 * thick)
    return cube_grid(N, 1.0 + 2.0 * thick, h)


def _gamma_mask(n, grid):
    """Normalized annulus around shell n, widened by one shell thickness on
    both sides; the ball B_2 for the central shell."""
    N = grid.N
    if n == 0:
        return Ball((0.0,) * N, 2.0).hits(grid)
    rho = math.sqrt(n / (n + 1))
    delta = 1.0 - rho
    return Annulus((0.0,) * N, max(rho - delta, 0.0), 1.0 + delta).hits(grid)


def w_series(F, x, t, ctx: ExponentContext, h_ref=DEFAULT_H_REF, tol=1e-10) -> PotentialSeries:
    """Series potential with whole-space (box) capacities of the normalized shells."""
    return _series("W", F, x, t, ctx, h_ref, tol)


def w_tilde_series(F, x, t, ctx: ExponentContext, h_ref=DEFAULT_H_REF, tol=1e-10) -> PotentialSeries:
    """Series potential with capacities relative to the normalized annuli."""
    return _series("W~", F, x, t, ctx, h_ref, tol)


# ---------------------------------------------------------------- density and integral

@dataclass
class DensityCurve:
    x: tuple
    taus: np.ndarray
    values: np.ndarray

    def weighted(self, ctx, sign=+1):
        """tau^(sign * 2/(q-1)) * Phi(tau)."""
        return self.taus ** (sign * 2.0 / (ctx.q - 1.0)) * self.values


def density_value(F, x, tau, ctx, h_ref=DEFAULT_H_REF):
    """Phi(tau): capacity of ((F - x)/tau) inside the closed unit ball."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    spec = _spec(F)
    grid = reference_grid(ctx.N, h_ref)
    if spec.is_empty:
        return 0.0
    S = spec.affine(np.asarray(x, float), tau)
    mask = S.hits(grid) & Ball((0.0,) * ctx.N, 1.0).hits(grid)
    return _bessel_on_ref(mask, grid, ctx)


def capacity_density(F, x, tau_sequence, ctx, h_ref=DEFAULT_H_REF) -> DensityCurve:
    taus = np.asarray(tau_sequence, float)
    if np.any(taus <= 0):
        raise ValueError("tau values must be positive")
    if np.any(np.diff(taus) >= 0):
        raise ValueError("tau sequence must decrease strictly")
    vals = np.array([density_value(F, x, tau, ctx, h_ref) for tau in taus])
    return DensityCurve(tuple(np.asarray(x, float)), taus, vals)


def _composite_gauss(a, b, nodes=32, order=4):
    panels = max(nodes // order, 1)
    xg, wg = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    xs = np.concatenate([lo + (hi - lo) * (xg + 1) / 2 for lo, hi in zip(edges[:-1], edges[1:])])
    ws = np.concatenate([wg * (hi - lo) / 2 for lo, hi in zip(edges[:-1], edges[1:])])
    return xs, ws


def density_integral(F, x, t, ctx, a, b, h_ref=DEFAULT_H_REF, nodes=32):
    """t^(-1-N/2) int_a^b s^(N - 2/(q-1)) e^(-s^2/4t) Phi(s) s ds."""
    if b <= a:
        return 0.0
    gam = ctx.N - 2.0 / (ctx.q - 1.0)
    s, w = _composite_gauss(a, b, nodes)
    f = np.array([si ** (gam + 1) * math.exp(-si * si / (4 * t)) * density_value(F, x, si, ctx, h_ref)
                  for si in s])
    return t ** (-1 - ctx.N / 2) * float(np.sum(w * f))


def _gauss_tail(t, gam, s0, s1):
    """int_{s0}^{s1} s^(gam+1) e^(-s^2/4t) ds via the incomplete gamma function."""
    k = (gam + 2) / 2
    scale = 0.5 * (4 * t) ** k * gamma_fn(k)
    return scale * (gammaincc(k, s0 * s0 / (4 * t)) - gammaincc(k, s1 * s1 / (4 * t)))


@dataclass
class IntegralPotential:
    value: float
    upper_limit: float
    tail_bound: float
    D: float


def w_integral_parts(F, x, t, ctx, h_ref=DEFAULT_H_REF, nodes=32) -> IntegralPotential:
    _check(ctx, t)
    spec = _spec(F)
    if spec.is_empty:
        return IntegralPotential(0.0, 0.0, 0.0, 0.0)
    D = spec.max_dist(np.asarray(x, float))
    if not math.isfinite(D):
        raise ValueError("F must be bounded")
    top = min(D, 8 * math.sqrt(t))
    val = density_integral(F, x, t, ctx, 0.0, top, h_ref, nodes)
    gam = ctx.N - 2.0 / (ctx.q - 1.0)
    tail = 0.0
    if D > top:
        tail = t ** (-1 - ctx.N / 2) * unit_ball_capacity(ctx, h_ref) * _gauss_tail(t, gam, top, D)
    return IntegralPotential(val, top, tail, D)


def w_integral(F, x, t, ctx, h_ref=DEFAULT_H_REF, nodes=32) -> float:
    """Integral potential int_0^{D_F(x)}, truncated at 8 sqrt(t) (tail bound in w_integral_parts)."""
    return w_integral_parts(F, x, t, ctx, h_ref, nodes).value


def w_integral_rescaled(F, x, t, ctx, h_ref=DEFAULT_H_REF, nodes=32) -> float:
    """Same quantity in the variable sigma = s / sqrt(t)."""
    _check(ctx, t)
    spec = _spec(F)
    if spec.is_empty:
        return 0.0
    D = spec.max_dist(np.asarray(x, float))
    gam = ctx.N - 2.0 / (ctx.q - 1.0)
    sig, w = _composite_gauss(0.0, min(D / math.sqrt(t), 8.0), nodes)
    f = np.array([si ** (gam + 1) * math.exp(-si * si / 4)
                  * density_value(F, x, si * math.sqrt(t), ctx, h_ref) for si in sig])
    return t ** (-1.0 / (ctx.q - 1.0)) * float(np.sum(w * f))


def cover_indices(F, x, t):
    """(smallest j with F in B_sqrt(jt), min n with F in B_sqrt((n+1)t))."""
    D = _spec(F).max_dist(np.asarray(x, float))
    j = max(int(math.ceil(D * D / t * (1 - 1e-12))), 0)
    return j, max(j - 1, 0)


@dataclass
class Sandwich:
    W: float
    lower: float
    upper: float
    integral: float
    remainder: float       # W_integral - int_0^{sqrt(4 a t)}
    remainder_scale: float  # t^((q-3)/(2(q-1))) e^(-D^2/4t) / D

    @property
    def ratio_lower(self):
        return self.W / self.lower if self.lower > 0 else math.inf

    @property
    def ratio_upper(self):
        return self.W / self.upper if self.upper > 0 else math.inf


def sandwich(F, x, t, ctx, h_ref=DEFAULT_H_REF, nodes=32, W=None) -> Sandwich:
    """Series potential against the lower/upper density integrals and the
    integral potential, including the truncation remainder."""
    j, a_cov = cover_indices(F, x, t)
    W = w_series(F, x, t, ctx, h_ref).value if W is None else W
    low = density_integral(F, x, t, ctx, 0.0, math.sqrt(t * j), h_ref, nodes)
    up = density_integral(F, x, t, ctx, math.sqrt(t), math.sqrt(t * (a_cov + 2)), h_ref, nodes)
    full = w_integral_parts(F, x, t, ctx, h_ref, nodes)
    # remainder against int_0^{sqrt(4 a t)} with a = j (ball-cover index)
    cut = min(math.sqrt(4 * j * t), full.upper_limit)
    part = density_integral(F, x, t, ctx, 0.0, cut, h_ref, nodes) if cut < full.upper_limit else full.value
    D = full.D
    scale = t ** ((ctx.q - 3) / (2 * (ctx.q - 1))) * math.exp(-D * D / (4 * t)) / D if D > 0 else 0.0
    return Sandwich(W, low, up, full.value, full.value - part, scale)
