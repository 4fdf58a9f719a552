"""Heat kernel, heat and Green potentials, and related functionals."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import ExponentContext, Grid, cube_grid


class HypothesisError(ValueError):
    """Input violates the hypothesis of the estimate being checked."""


@dataclass
class AtomicMeasure:
    atoms: list = field(default_factory=list)    # [(location, mass)]
    density: tuple | None = None                 # (Grid, values)

    def __post_init__(self):
        self.atoms = [(np.atleast_1d(np.asarray(a, float)), float(m)) for a, m in self.atoms]
        if any(m < 0 for _, m in self.atoms):
            raise ValueError("atom masses must be nonnegative")
        if self.density is not None and np.any(np.asarray(self.density[1]) < 0):
            raise ValueError("density must be nonnegative")

    @property
    def mass(self):
        total = sum(m for _, m in self.atoms)
        if self.density is not None:
            g, v = self.density
            total += float(np.sum(v)) * g.cell_volume
        return total

    @property
    def is_zero(self):
        return self.mass == 0.0


@dataclass
class SpaceTimeField:
    grid: Grid
    times: np.ndarray
    values: np.ndarray            # shape (len(times),) + grid.shape
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, float)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def at(self, x, t):
        """Value at the node nearest x and the stored time nearest t."""
        k = int(np.argmin(np.abs(self.times - t)))
        return float(self.values[k][self.grid.index_of(x)])


def heat_kernel(x, y, t, N):
    if np.any(np.asarray(t) <= 0):
        raise ValueError("t must be positive")
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    r2 = np.sum((x - y) ** 2, axis=-1) if x.ndim or y.ndim else (x - y) ** 2
    return (4 * math.pi * t) ** (-N / 2) * np.exp(-r2 / (4 * t))


def _lattice_mass(h, t):
    """sum_k h H_1(k h, t); equals 1 to machine precision once sqrt(t) >~ h."""
    m = int(np.ceil(12 * math.sqrt(t) / h)) + 1
    k = np.arange(-m, m + 1) * h
    return float(np.sum(h * np.exp(-k * k / (4 * t)))) / math.sqrt(4 * math.pi * t)


def gauss_matrix(target_axis, source_axis, h, t):
    """Rectangle-rule convolution matrix of the 1-D heat kernel at time t,
    normalized so that a constant on the full lattice is preserved."""
    d = target_axis[:, None] - source_axis[None, :]
    G = h * np.exp(-d * d / (4 * t)) / math.sqrt(4 * math.pi * t)
    if math.sqrt(t) < 4 * h:
        G /= _lattice_mass(h, t)
    return G


def convolve(values, src: Grid, t, dst: Grid | None = None):
    """Heat semigroup at time t applied to a grid function (zero outside src)."""
    dst = dst or src
    out = np.asarray(values, float)
    if t == 0:
        if dst != src:
            raise ValueError("lag 0 needs identical grids")
        return out.copy()
    for ax, (ta, sa) in enumerate(zip(dst.axes(), src.axes())):
        G = gauss_matrix(ta, sa, src.h, t)
        out = np.moveaxis(np.tensordot(G, np.moveaxis(out, ax, 0), axes=(1, 0)), 0, ax)
    return out


def heat_potential(source, t_values, grid: Grid | None = None) -> SpaceTimeField:
    """H[source] at the given times.

    source may be an AtomicMeasure (atoms summed exactly, density convolved),
    a (Grid, values) pair, or a float meaning that constant on all of R^N.
    """
    t_values = np.atleast_1d(np.asarray(t_values, float))
    if t_values.size == 0:
        raise ValueError("no times requested")
    if np.any(t_values <= 0):
        raise ValueError("times must be positive")
    if isinstance(source, (int, float)):
        if grid is None:
            raise ValueError("a constant source needs a target grid")
        vals = np.full((len(t_values),) + grid.shape, float(source))
        return SpaceTimeField(grid, t_values, vals, {"source": "constant"})
    if isinstance(source, tuple):
        source = AtomicMeasure([], source)
    if grid is None:
        if source.density is None:
            raise ValueError("atoms need a target grid")
        grid = source.density[0]
    pts = grid.mesh()
    out = np.zeros((len(t_values),) + grid.shape)
    for k, t in enumerate(t_values):
        for loc, m in source.atoms:
            r2 = sum((pts[i] - loc[i]) ** 2 for i in range(grid.N))
            out[k] += m * (4 * math.pi * t) ** (-grid.N / 2) * np.exp(-r2 / (4 * t))
        if source.density is not None:
            g, v = source.density
            out[k] += convolve(v, g, t, grid)
    return SpaceTimeField(grid, t_values, out, {"source": "heat_potential"})


def gaussian_domination_check(eta, grid: Grid, M, a, b, t_values, tol=1e-12) -> float:
    """Worst value of H[eta](x,t) (4at+1)^(N/2) exp(a(|x|-b)_+^2/(4at+1)) / M."""
    eta = np.asarray(eta, float)
    r = np.sqrt(sum(m * m for m in grid.mesh()))
    bound = M * np.exp(-a * np.maximum(r - b, 0.0) ** 2)
    if np.any(eta < -tol) or np.any(eta > bound * (1 + 1e-12) + tol):
        raise HypothesisError("eta is not dominated by M exp(-a (|x|-b)_+^2)")
    if not np.any(eta):
        return 0.0
    N = grid.N
    worst = 0.0
    for t in np.atleast_1d(t_values):
        H = convolve(eta, grid, t)
        env = (4 * a * t + 1) ** (N / 2) * np.exp(a * np.maximum(r - b, 0.0) ** 2 / (4 * a * t + 1))
        worst = max(worst, float(np.max(H * env)) / M)
    return worst


def green_potential(f: SpaceTimeField) -> SpaceTimeField:
    """G[f](t) = int_0^t H[f(s)](t - s) ds by the trapezoid rule on f.times.

    When f.times does not start at 0, f is held constant on [0, times[0]].
    """
    times = f.times
    if len(times) < 4:
        raise ValueError("need at least 4 time nodes for the s-quadrature")
    nodes = np.concatenate([[0.0], times]) if times[0] > 0 else times
    vals = np.concatenate([f.values[:1], f.values]) if times[0] > 0 else f.values
    out = np.zeros_like(f.values)
    off = len(nodes) - len(times)
    for k in range(len(times)):
        kk = k + off
        tk = nodes[kk]
        acc = np.zeros(f.grid.shape)
        for j in range(kk + 1):
            if j == 0:
                w = (nodes[1] - nodes[0]) / 2 if kk > 0 else 0.0
            elif j == kk:
                w = (nodes[j] - nodes[j - 1]) / 2
            else:
                w = (nodes[j + 1] - nodes[j - 1]) / 2
            if w:
                acc += w * convolve(vals[j], f.grid, tk - nodes[j])
        out[k] = acc
    return SpaceTimeField(f.grid, times, out, {"source": "green_potential"})


def _laplacian(u, h):
    out = np.zeros_like(u)
    for ax in range(u.ndim):
        up = np.pad(u, [(1, 1) if a == ax else (0, 0) for a in range(u.ndim)])
        sl = lambda a, b: tuple(slice(a, b) if k == ax else slice(None) for k in range(u.ndim))
        out += (up[sl(2, None)] - 2 * u + up[sl(0, -2)]) / h ** 2
    return out


def _grad_sq(u, h):
    out = np.zeros_like(u)
    for ax in range(u.ndim):
        up = np.pad(u, [(1, 1) if a == ax else (0, 0) for a in range(u.ndim)])
        sl = lambda a, b: tuple(slice(a, b) if k == ax else slice(None) for k in range(u.ndim))
        out += ((up[sl(2, None)] - up[sl(0, -2)]) / (2 * h)) ** 2
    return out


def _gauss_panels(a, b, panels, order=8):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    xs, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        xs.append(lo + (hi - lo) * (x + 1) / 2)
        ws.append(w * (hi - lo) / 2)
    return np.concatenate(xs), np.concatenate(ws)


def r_functional(eta, grid: Grid, ctx: ExponentContext, t_horizon=1.0, nt=48):
    """(int_Q R[eta]^q' dx dt, ratio to the Besov energy of eta).

    R = |grad H[eta]|^2 + |Laplacian H[eta]| with central differences; the
    time integral runs over log-spaced Gauss panels on (0, t_horizon] plus a
    power-law tail beyond, fitted to the last two panel values.
    """
    from .capacity import as_energy, make_energy
    from .model import DiscreteSet

    eta = np.asarray(eta, float)
    if np.any(eta < 0) or np.any(eta > 1):
        raise ValueError("eta must take values in [0, 1]")
    if not np.any(eta):
        return 0.0, 0.0
    qp = ctx.q_prime
    h = grid.h
    # evaluate H[eta] on a grid reaching 6 sqrt(t_horizon) beyond the support
    idx = np.argwhere(eta > 0)
    pad = int(math.ceil(6 * math.sqrt(t_horizon) / h))
    lo_i = idx.min(axis=0) - pad
    hi_i = idx.max(axis=0) + pad
    big = Grid(tuple(np.asarray(grid.lo) + lo_i * h), tuple(np.asarray(grid.lo) + hi_i * h),
               h, tuple(int(v) for v in hi_i - lo_i + 1))
    src_lo = idx.min(axis=0)
    src_hi = idx.max(axis=0)
    src = Grid(tuple(np.asarray(grid.lo) + src_lo * h), tuple(np.asarray(grid.lo) + src_hi * h),
               h, tuple(int(v) for v in src_hi - src_lo + 1))
    core = eta[tuple(slice(a, b + 1) for a, b in zip(src_lo, src_hi))]
    eta_big = np.zeros(big.shape)
    eta_big[tuple(slice(a - l, b - l + 1) for a, b, l in zip(src_lo, src_hi, lo_i))] = core
    # log-time panels from well below h^2 up to the horizon
    lo = math.log(h * h / 64)
    s, w = _gauss_panels(lo, math.log(t_horizon), nt // 8 if nt >= 8 else 1)
    total = 0.0
    # contribution of (0, e^lo]: H[eta] ~ eta there
    R0 = _grad_sq(eta_big, h) + np.abs(_laplacian(eta_big, h))
    total += math.exp(lo) * float(np.sum(R0 ** qp)) * h ** grid.N
    g_last = []
    for si, wi in zip(s, w):
        t = math.exp(si)
        H = convolve(core, src, t, big)
        R = _grad_sq(H, h) + np.abs(_laplacian(H, h))
        g = float(np.sum(R ** qp)) * h ** grid.N
        total += wi * t * g
        g_last.append((t, g))
    (t1, g1), (t2, g2) = g_last[-2], g_last[-1]
    if g1 > 0 and g2 > 0:
        slope = math.log(g2 / g1) / math.log(t2 / t1)
        # heat decay: the Laplacian term dominates, exponent N/2 - (N/2+1) q'
        gamma = max(-slope, grid.N / 2 * (qp - 1) + qp)
        if gamma > 1:
            total += g2 * t2 / (gamma - 1)
    whole = DiscreteSet(grid, np.ones(grid.shape, bool))
    energy = as_energy(eta, make_energy(whole, ctx))
    return total, total / energy


def _atom_field(mu: AtomicMeasure, t, N, pts_per_width=10):
    """Grid and values of H[mu](t) on a box covering the atoms by 9 sqrt(t)."""
    locs = np.array([a for a, _ in mu.atoms])
    w = math.sqrt(t)
    lo = locs.min(axis=0) - 9 * w
    hi = locs.max(axis=0) + 9 * w
    h = w / pts_per_width
    n = np.ceil((hi - lo) / h).astype(int)
    g = Grid(tuple(lo), tuple(lo + n * h), h, tuple(n + 1))
    pts = g.mesh()
    vals = np.zeros(g.shape)
    for loc, m in mu.atoms:
        r2 = sum((pts[i] - loc[i]) ** 2 for i in range(N))
        vals += m * (4 * math.pi * t) ** (-N / 2) * np.exp(-r2 / (4 * t))
    return g, vals


def lq_slices(mu: AtomicMeasure, ctx: ExponentContext, times, s0=0.0):
    """||H[mu](., t + s0)||_q^q for each t.

    Atoms further apart than 18 sqrt(t) do not interact numerically and use
    the closed form m^q (4 pi t)^(N(1-q)/2) q^(-N/2); otherwise the field is
    summed on a grid and integrated by the rectangle rule.
    """
    if mu.density is not None:
        raise ValueError("only atomic measures are supported here")
    q, N = ctx.q, ctx.N
    locs = np.array([a for a, _ in mu.atoms]) if mu.atoms else np.zeros((0, N))
    gap = math.inf
    if len(locs) > 1:
        d = np.sqrt(np.sum((locs[:, None] - locs[None]) ** 2, axis=-1))
        gap = float(d[np.triu_indices(len(locs), 1)].min())
    out = []
    for t in np.atleast_1d(times):
        tt = t + s0
        if mu.is_zero:
            out.append(0.0)
        elif gap > 18 * math.sqrt(tt):
            out.append(sum(m ** q for _, m in mu.atoms)
                       * (4 * math.pi * tt) ** (N * (1 - q) / 2) * q ** (-N / 2))
        else:
            g, v = _atom_field(mu, tt, N)
            out.append(float(np.sum(v ** q)) * g.cell_volume)
    return np.array(out)


def weighted_lq_norm(mu: AtomicMeasure, ctx: ExponentContext, T, s0=0.0, panels=12):
    """(||H[mu]||_{L^q(Q_T)}, (int_Q_T |t^(1/q) H[mu]|^q e^(-qt) dx dt/t)^(1/q)).

    s0 > 0 replaces H[mu](t) by H[mu](t + s0), a Gaussian mollification of
    the atoms; without it both norms diverge at t = 0 once q >= q_c.
    T = inf is allowed for q > q_c and uses the exact power tail of the
    slices beyond the last panel.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    if mu.is_zero:
        return 0.0, 0.0
    q, N = ctx.q, ctx.N
    decay = N * (q - 1) / 2
    if s0 <= 0 and decay >= 1:
        raise ValueError("H[mu] is not q-integrable near t = 0 for q >= q_c; pass s0 > 0")
    t_end = T if math.isfinite(T) else max(40.0, 50 * s0)
    if not math.isfinite(T) and decay <= 1:
        raise ValueError("the Q_inf norm diverges for q <= q_c")
    t_lo = min(1e-6, t_end * 1e-6) if s0 <= 0 else min(s0 * 1e-3, t_end * 1e-3)
    x, w = _gauss_panels(math.log(t_lo), math.log(t_end), panels)
    ts = np.exp(x)
    g = lq_slices(mu, ctx, ts, s0)
    plain = float(np.sum(w * ts * g))
    weighted = float(np.sum(w * ts * g * np.exp(-q * ts)))
    # (0, t_lo]: slices are at most their t_lo value (s0 > 0) or integrable power
    if s0 > 0:
        g0 = lq_slices(mu, ctx, [0.0], s0)[0]
        plain += t_lo * g0
        weighted += t_lo * g0
    else:
        plain += g[0] * ts[0] / (1 - decay)
        weighted += g[0] * ts[0] / (1 - decay)
    if not math.isfinite(T):
        # slices decay like (t + s0)^(-decay); e^(-qt) kills the weighted tail
        plain += float(lq_slices(mu, ctx, [t_end], s0)[0]) * (t_end + s0) / (decay - 1)
    return plain ** (1 / q), weighted ** (1 / q)
