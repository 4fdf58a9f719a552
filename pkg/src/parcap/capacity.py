"""Discrete Aronszajn-Slobodeckij energies and the capacities built on them."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla
from scipy.special import zeta

from .model import Ball, DiscreteSet, ExponentContext, Grid, rasterize

DENSE_LIMIT = 6000


class SeparationError(ValueError):
    """Dilated balls of a quasi-additivity family overlap."""


@lru_cache(maxsize=None)
def lattice_zeta(N, sigma):
    """sum over k in Z^N minus 0 of |k|^(-sigma), sigma > N."""
    if sigma <= N:
        raise ValueError("lattice sum diverges for sigma <= N")
    if N == 1:
        return 2.0 * zeta(sigma)
    if N == 2:
        # Z_2(2s) = 4 zeta(s) beta(s), beta the Dirichlet beta function
        s = sigma / 2.0
        beta = 4.0 ** (-s) * (zeta(s, 0.25) - zeta(s, 0.75))
        return 4.0 * zeta(s) * beta
    R = 48
    k = np.arange(-R, R + 1)
    r2 = sum(np.meshgrid(*([k * k] * N), indexing="ij"))
    r2 = r2[(r2 > 0) & (r2 <= R * R)].astype(float)
    area = 2 * math.pi ** (N / 2) / math.gamma(N / 2)
    # tail integral beyond the ball of radius R (+1/2 for the lattice cell)
    Re = R + 0.5
    return float(np.sum(r2 ** (-sigma / 2))) + area * Re ** (N - sigma) / (sigma - N)


@dataclass(eq=False)
class FractionalEnergy:
    """Energy of functions on the Omega nodes, extended by zero elsewhere.

    exterior="lattice" counts the interaction of Omega nodes with every
    lattice node outside Omega (zero extension to R^N); exterior="none" is the
    bare double sum over Omega x Omega.
    """
    ctx: ExponentContext
    omega: DiscreteSet
    gradient_mode: bool
    exterior: str
    index: np.ndarray           # (M, N) multi-indices of Omega nodes, lexicographic
    weights: np.ndarray | None  # dense w_ij (fractional mode)
    kill: np.ndarray | None     # exterior interaction per node
    quad: sps.csr_matrix        # E(phi) = phi^T quad phi when p == 2

    @property
    def M(self):
        return len(self.index)

    @property
    def p(self):
        return 2.0 if self.gradient_mode else self.ctx.p

    def restrict(self, phi):
        phi = np.asarray(phi, float)
        if phi.shape != self.omega.grid.shape:
            raise ValueError(f"phi shape {phi.shape} does not match grid {self.omega.grid.shape}")
        return phi[tuple(self.index.T)]

    def expand(self, vals):
        out = np.zeros(self.omega.grid.shape)
        out[tuple(self.index.T)] = vals
        return out

    # energy and gradient on the node vector
    def value(self, v):
        if self.gradient_mode or self.ctx.p == 2.0:
            return float(v @ (self.quad @ v))
        p = self.p
        d = np.abs(v[:, None] - v[None, :]) ** p
        e = float(np.sum(self.weights * d))
        if self.kill is not None:
            e += 2.0 * float(np.sum(self.kill * np.abs(v) ** p))
        return e

    def grad(self, v):
        if self.gradient_mode or self.ctx.p == 2.0:
            return 2.0 * (self.quad @ v)
        p = self.p
        diff = v[:, None] - v[None, :]
        g = 2.0 * p * np.sum(self.weights * np.sign(diff) * np.abs(diff) ** (p - 1), axis=1)
        if self.kill is not None:
            g += 2.0 * p * self.kill * np.sign(v) * np.abs(v) ** (p - 1)
        return g


def make_energy(omega: DiscreteSet, ctx: ExponentContext, exterior="lattice") -> FractionalEnergy:
    if exterior not in ("lattice", "none"):
        raise ValueError("exterior must be 'lattice' or 'none'")
    grid = omega.grid
    if grid.N != ctx.N:
        raise ValueError("grid dimension differs from ctx.N")
    index = np.argwhere(omega.mask)
    M = len(index)
    N, h = ctx.N, grid.h
    gradient = abs(ctx.s - 1.0) < 1e-14 and abs(ctx.p - 2.0) < 1e-14
    if gradient:
        quad = _dirichlet_form(omega, index, exterior)
        return FractionalEnergy(ctx, omega, True, exterior, index, None, None, quad)
    if M > DENSE_LIMIT:
        raise ValueError(f"{M} nodes exceed the dense pair limit {DENSE_LIMIT}")
    sigma = N + ctx.sp
    pts = index * h
    dist = np.sqrt(np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1))
    np.fill_diagonal(dist, np.inf)
    w = h ** (2 * N) / dist ** sigma
    kill = None
    if exterior == "lattice":
        full = h ** (N - ctx.sp) * lattice_zeta(N, sigma)
        kill = np.maximum(full - w.sum(axis=1), 0.0)
    row = w.sum(axis=1) + (kill if kill is not None else 0.0)
    quad = sps.csr_matrix(2.0 * (np.diag(row) - w))
    return FractionalEnergy(ctx, omega, False, exterior, index, w, kill, quad)


def _dirichlet_form(omega, index, exterior):
    """Sum over lattice edges of (phi_i - phi_j)^2 h^(N-2) as a quadratic form."""
    grid = omega.grid
    N, h = grid.N, grid.h
    M = len(index)
    lookup = -np.ones(tuple(n + 2 for n in grid.shape), dtype=np.int64)
    lookup[tuple((index + 1).T)] = np.arange(M)
    rows, cols = [], []
    deg = np.zeros(M)
    for ax in range(N):
        for sgn in (-1, 1):
            nb = index + 1
            nb[:, ax] += sgn
            j = lookup[tuple(nb.T)]
            inside = j >= 0
            rows.append(np.nonzero(inside)[0])
            cols.append(j[inside])
            deg += 1.0 if exterior == "lattice" else inside
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    off = sps.csr_matrix((-np.ones(len(r)), (r, c)), shape=(M, M))
    return (sps.diags(deg) + off).tocsr() * h ** (N - 2)


def as_energy(phi, energy: FractionalEnergy) -> float:
    v = energy.restrict(phi)
    outside = np.asarray(phi, float)[~energy.omega.mask]
    if outside.size and np.any(outside != 0):
        raise ValueError("phi must vanish outside Omega")
    return energy.value(v)


# ---------------------------------------------------------------- minimization

@dataclass(eq=False)
class CapacityResult:
    value: float
    minimizer: np.ndarray
    measure: np.ndarray
    iterations: int
    step_norm: float
    converged: bool
    history: list | None = None

    @property
    def mass(self):
        return float(self.measure.sum())


def _zero_result(shape):
    z = np.zeros(shape)
    return CapacityResult(0.0, z, z.copy(), 0, 0.0, True, [])


def _minimize(energy: FractionalEnergy, kmask, mass_weight=0.0, tol=1e-9, max_iter=50000):
    """Minimize E(phi) + mass_weight * sum |phi|^p with phi = 1 on K, 0 <= phi <= 1."""
    M = energy.M
    onK = kmask[tuple(energy.index.T)]
    free = ~onK
    p = energy.p
    A = energy.quad
    if mass_weight:
        A = (A + sps.identity(M, format="csr") * mass_weight).tocsr()

    # p = 2: the constrained quadratic problem is an M-matrix Dirichlet problem,
    # whose solution already lies in [0, 1]; solve the optimality system directly
    v = np.zeros(M)
    v[onK] = 1.0
    if free.any():
        Aff = A[free][:, free].tocsc()
        rhs = -(A[free][:, onK] @ np.ones(onK.sum()))
        v[free] = spla.spsolve(Aff, rhs)
    v = np.clip(v, 0.0, 1.0)
    if p == 2.0:
        g = 2.0 * (A @ v)
        res = float(np.abs(g[free]).max()) if free.any() else 0.0
        value = float(v @ (A @ v))
        meas = np.where(onK, g / 2.0, 0.0)
        return v, value, meas, 1, res, True, [value]

    def f(x):
        return energy.value(x) + mass_weight * float(np.sum(np.abs(x) ** p))

    def grad(x):
        return energy.grad(x) + mass_weight * p * np.sign(x) * np.abs(x) ** (p - 1)

    x = v
    fx = f(x)
    g = grad(x)
    alpha = 1.0 / max(np.abs(g[free]).max(), 1e-300) * 1e-2
    history = [fx]
    converged = False
    step = np.inf
    calm = 0
    it = 0
    for it in range(1, max_iter + 1):
        while True:
            y = x.copy()
            y[free] = np.clip(x[free] - alpha * g[free], 0.0, 1.0)
            fy = f(y)
            if fy <= fx + 1e-4 * float(g[free] @ (y[free] - x[free])) or alpha < 1e-300:
                break
            alpha *= 0.5
        s = y[free] - x[free]
        gy = grad(y)
        yk = gy[free] - g[free]
        step = float(np.abs(s).max())
        rel = abs(fx - fy) / max(abs(fy), 1e-300)
        x, g, fold, fx = y, gy, fx, fy
        history.append(fx)
        calm = calm + 1 if rel < tol else 0
        pg = np.clip(x[free] - g[free], 0.0, 1.0) - x[free]
        if calm >= 3 or (pg.size and np.abs(pg).max() < 1e-12 * max(1.0, abs(fx))):
            converged = True
            break
        sy = float(s @ yk)
        alpha = float(s @ s) / sy if sy > 0 else alpha * 2.0
    meas = np.where(onK, g / p, 0.0)
    return x, energy.value(x), meas, it, step, converged, history


def _check_same_grid(a: DiscreteSet, b: DiscreteSet):
    if a.grid != b.grid:
        raise ValueError("sets live on different grids")


def besov_capacity(K: DiscreteSet, omega: DiscreteSet, ctx: ExponentContext,
                   exterior="lattice", tol=1e-9, max_iter=50000, energy=None) -> CapacityResult:
    """Relative capacity R^Omega_{s,p}(K) with s = 2/q, p = q'."""
    _check_same_grid(K, omega)
    if np.any(K.mask & ~omega.mask):
        raise ValueError("K is not contained in Omega")
    if K.is_empty:
        return _zero_result(K.grid.shape)
    energy = energy or make_energy(omega, ctx, exterior)
    v, value, meas, it, step, conv, hist = _minimize(energy, K.mask, 0.0, tol, max_iter)
    return CapacityResult(value, energy.expand(v), energy.expand(meas), it, step, conv, hist)


def _full_box(grid: Grid) -> DiscreteSet:
    return DiscreteSet(grid, np.ones(grid.shape, bool), None)


def bessel_capacity_result(K: DiscreteSet, ctx: ExponentContext, box: Grid | None = None,
                           tol=1e-9, max_iter=50000) -> CapacityResult:
    """Full-norm capacity inf{||phi||_p^p + E(phi)} over the admissible class on a box."""
    if box is not None and box != K.grid:
        if K.source is None:
            raise ValueError("K has no geometric source to move to another box")
        K = rasterize(K.source, box)
    grid = K.grid
    if K.is_empty:
        return _zero_result(grid.shape)
    edge = np.zeros(grid.shape, bool)
    for ax in range(grid.N):
        sl = [slice(None)] * grid.N
        sl[ax] = 0
        edge[tuple(sl)] = True
        sl[ax] = -1
        edge[tuple(sl)] = True
    if np.any(K.mask & edge):
        raise ValueError("K touches the box boundary")
    energy = _box_energy(grid, ctx)
    v, value, meas, it, step, conv, hist = _minimize(energy, K.mask, grid.cell_volume, tol, max_iter)
    return CapacityResult(value, energy.expand(v), energy.expand(meas), it, step, conv, hist)


_BOX_CACHE: dict = {}


def _box_energy(grid, ctx):
    key = (grid, ctx.N, ctx.q)
    e = _BOX_CACHE.get(key)
    if e is None:
        if len(_BOX_CACHE) > 16:
            _BOX_CACHE.clear()
        e = _BOX_CACHE[key] = make_energy(_full_box(grid), ctx)
    return e


def bessel_capacity(K: DiscreteSet, ctx: ExponentContext, box: Grid | None = None, **kw) -> float:
    return bessel_capacity_result(K, ctx, box, **kw).value


def capacitary_measure(K: DiscreteSet, omega: DiscreteSet, ctx: ExponentContext, **kw) -> np.ndarray:
    res = besov_capacity(K, omega, ctx, **kw)
    if not res.converged:
        raise RuntimeError("capacity minimizer did not converge; measure unavailable")
    return res.measure


def scaled_grid(grid: Grid, tau) -> Grid:
    return Grid(tuple(v / tau for v in grid.lo), tuple(v / tau for v in grid.hi),
                grid.h / tau, grid.shape)


def capacity_scaling_check(K: DiscreteSet, omega: DiscreteSet, ctx: ExponentContext, tau,
                           matched=True, **kw) -> float:
    """R(K) / (tau^(N - sp) R(K/tau)) with Omega rescaled alongside.

    matched=True rescales the grid with the sets (same nodes per feature);
    matched=False keeps the spacing and re-rasterizes the shrunken sets.
    """
    if not (tau > 0 and math.isfinite(tau)):
        raise ValueError("tau must be a positive finite number")
    if K.source is None or omega.source is None:
        raise ValueError("scaling needs geometric sources for K and Omega")
    base = besov_capacity(K, omega, ctx, **kw).value
    shift = np.zeros(ctx.N)
    if matched:
        g2 = scaled_grid(K.grid, tau)
    else:
        g = K.grid
        g2 = Grid(tuple(v / tau for v in g.lo), tuple(v / tau for v in g.hi), g.h,
                  tuple(int(round((n - 1) / tau)) + 1 for n in g.shape))
    K2 = rasterize(K.source.affine(shift, tau), g2)
    O2 = rasterize(omega.source.affine(shift, tau), g2)
    other = besov_capacity(K2, O2, ctx, **kw).value
    if other == 0.0:
        return 1.0 if base == 0.0 else math.inf
    return base / (tau ** (ctx.N - ctx.sp) * other)


def quasi_additivity_check(G: DiscreteSet, balls, ctx: ExponentContext, **kw) -> float:
    """sum_j cap(G inside B_j) / cap(G) for a well separated cover of G."""
    balls = [(np.asarray(c, float), float(r)) for c, r in balls]
    theta = 1.0 - 2.0 / (ctx.N * (ctx.q - 1.0))
    for i in range(len(balls)):
        for j in range(i + 1, len(balls)):
            (ci, ri), (cj, rj) = balls[i], balls[j]
            if np.linalg.norm(ci - cj) <= ri ** theta + rj ** theta:
                raise SeparationError(f"dilated balls {i} and {j} overlap")
    pieces = [Ball(tuple(c), r).hits(G.grid) for c, r in balls]
    cover = np.zeros(G.grid.shape, bool)
    for m in pieces:
        cover |= m
    if np.any(G.mask & ~cover):
        raise ValueError("G is not covered by the balls")
    total = bessel_capacity(G, ctx, **kw)
    if total == 0.0:
        return 1.0
    parts = sum(bessel_capacity(G.with_mask(G.mask & m), ctx, **kw) for m in pieces)
    return parts / total


def poincare_constant(energy: FractionalEnergy, iters=400) -> float:
    """Smallest value of E(phi) / (h^N sum |phi|^p) over phi supported in Omega."""
    hN = energy.omega.grid.cell_volume
    if energy.p == 2.0:
        A = energy.quad
        if energy.M <= 2500:
            return float(np.linalg.eigvalsh(A.toarray())[0] / hN)
        return float(spla.eigsh(A.tocsc(), k=1, sigma=0, which="LM")[0][0] / hN)
    # nonnegative minimizer of the p-Rayleigh quotient, by projected descent
    # started from the quadratic ground state
    A = energy.quad.toarray()
    w, vec = np.linalg.eigh(A)
    v = np.abs(vec[:, 0])
    p = energy.p

    def quotient(x):
        return energy.value(x) / (hN * np.sum(x ** p))

    best = quotient(v)
    step = 1e-2
    for _ in range(iters):
        nrm = np.sum(v ** p) ** (1 / p)
        v = v / nrm
        e = energy.value(v)
        g = energy.grad(v) - e * p * v ** (p - 1)
        trial = np.maximum(v - step * g / max(np.abs(g).max(), 1e-300), 0.0)
        qv = quotient(trial)
        if qv < best:
            best, v = qv, trial
            step *= 1.5
        else:
            step *= 0.5
            if step < 1e-12:
                break
    return float(best)
