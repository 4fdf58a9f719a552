"""Solver for u_t - Lap u + u^q = 0 and the solution families built on it.

Time stepping is Strang splitting between the exact semigroup of the
discrete Laplacian (sine transform for Dirichlet walls, cosine transform for
the no-flux box) and the exact flow of u' = -u^q. Both substeps are
order preserving and the absorption flow maps ((q-1)t)^(-1/(q-1)) onto
itself, so comparison and the universal bound hold at the discrete level.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.fft as sfft
from scipy.ndimage import distance_transform_edt

from .heat import AtomicMeasure, SpaceTimeField
from .model import Box, DiscreteSet, ExponentContext, Grid, SetSpec, make_grid, rasterize


class CFLError(ValueError):
    pass


class LadderError(RuntimeError):
    pass


@dataclass(frozen=True)
class SchemeParams:
    h: float
    T: float = 1.0
    margin: float | None = None        # default 6 sqrt(T)
    diffusion: str = "spectral"        # spectral | explicit
    absorption: str = "exact"          # exact | implicit | off
    boundary: str = "dirichlet"        # dirichlet | neumann
    theta: float = 0.02                # dt = theta * t on the graded part
    dt_max: float = 0.01
    dt_min: float | None = None        # default h^2 / 4
    beta: float = 0.2                  # explicit mode: dt = beta h^2
    output_times: tuple = ()

    def __post_init__(self):
        if not (self.h > 0 and self.T > 0):
            raise ValueError("h and T must be positive")
        if self.diffusion not in ("spectral", "explicit"):
            raise ValueError("diffusion must be 'spectral' or 'explicit'")
        if self.absorption not in ("exact", "implicit", "off"):
            raise ValueError("absorption must be 'exact', 'implicit' or 'off'")
        if self.boundary not in ("dirichlet", "neumann"):
            raise ValueError("boundary must be 'dirichlet' or 'neumann'")

    @property
    def margin_value(self):
        return 6.0 * math.sqrt(self.T) if self.margin is None else self.margin

    @property
    def dt_floor(self):
        return self.h * self.h / 4 if self.dt_min is None else self.dt_min


# ---------------------------------------------------------------- traces

@dataclass(frozen=True)
class MeasureTrace:
    mu: AtomicMeasure


@dataclass(frozen=True)
class BlowupTrace:
    K: object            # DiscreteSet or SetSpec
    k: float
    eps: float = 0.0

    def __post_init__(self):
        if self.k < 0 or self.eps < 0:
            raise ValueError("k and eps must be nonnegative")


@dataclass(frozen=True)
class FunctionTrace:
    """Initial datum given as a callable of the node coordinate arrays."""
    f: object
    support: tuple       # (lo, hi) box holding the support


def _support_box(trace, N):
    if isinstance(trace, MeasureTrace):
        pts = [a for a, m in trace.mu.atoms if m > 0]
        if trace.mu.density is not None:
            g, v = trace.mu.density
            idx = np.argwhere(v > 0)
            if len(idx):
                pts += [np.asarray(g.lo) + idx.min(0) * g.h, np.asarray(g.lo) + idx.max(0) * g.h]
        if not pts:
            return None
        P = np.array(pts)
        return P.min(0), P.max(0)
    if isinstance(trace, BlowupTrace):
        K = trace.K
        if isinstance(K, DiscreteSet):
            if K.is_empty:
                return None
            P = K.points()
            return P.min(0) - trace.eps, P.max(0) + trace.eps
        if K.is_empty:
            return None
        return _spec_box(K, N, trace.eps)
    lo, hi = trace.support
    return np.asarray(lo, float), np.asarray(hi, float)


def _spec_box(S, N, pad=0.0):
    from .model import Annulus, Ball, Cantor, PointCloud, Union
    if isinstance(S, Ball) or isinstance(S, Annulus):
        r = S.radius if isinstance(S, Ball) else S.r_out
        c = np.asarray(S.center)
        return c - r - pad, c + r + pad
    if isinstance(S, Box):
        return np.asarray(S.lo) - pad, np.asarray(S.hi) + pad
    if isinstance(S, Cantor):
        lo, hi = (np.zeros(N), np.ones(N)) if S.bbox is None else map(np.asarray, S.bbox)
        return lo - pad, hi + pad
    if isinstance(S, PointCloud):
        P = np.array(S.points)
        return P.min(0) - pad, P.max(0) + pad
    if isinstance(S, Union):
        boxes = [_spec_box(p, N, pad) for p in S.parts if not p.is_empty]
        return np.min([b[0] for b in boxes], 0), np.max([b[1] for b in boxes], 0)
    raise TypeError(f"no bounding box for {S!r}")


def solver_grid(trace, scheme: SchemeParams, N, box=None) -> Grid:
    """Cube centred at the origin with nodes on the lattice h Z^N, reaching
    `margin` beyond the support of the trace."""
    if box is not None:
        return box
    sup = _support_box(trace, N)
    R = 0.0 if sup is None else float(max(np.abs(sup[0]).max(), np.abs(sup[1]).max()))
    L = math.ceil((R + scheme.margin_value) / scheme.h - 1e-9) * scheme.h
    return make_grid(-L * np.ones(N), L * np.ones(N), scheme.h)


def initial_values(trace, grid: Grid) -> np.ndarray:
    if isinstance(trace, MeasureTrace):
        u = np.zeros(grid.shape)
        for loc, m in trace.mu.atoms:
            u[grid.index_of(loc)] += m / grid.cell_volume
        if trace.mu.density is not None:
            g, v = trace.mu.density
            if g == grid:
                u += v
            else:
                for idx in np.argwhere(v > 0):
                    u[grid.index_of(np.asarray(g.lo) + idx * g.h)] += v[tuple(idx)] * g.cell_volume / grid.cell_volume
        return u
    if isinstance(trace, BlowupTrace):
        K = trace.K
        if isinstance(K, DiscreteSet):
            mask = rasterize(K.source, grid).mask if K.grid != grid and K.source is not None else K.mask
            if K.grid != grid and K.source is None:
                raise ValueError("K lives on another grid and has no geometric source")
        else:
            mask = rasterize(K, grid).mask
        if trace.eps > 0 and mask.any():
            mask = distance_transform_edt(~mask) * grid.h <= trace.eps * (1 + 1e-12)
        return trace.k * mask.astype(float)
    return np.asarray(trace.f(*grid.mesh()), float)


# ---------------------------------------------------------------- stepping

class _Heat:
    """Exact semigroup exp(s Lap_h) of the discrete Laplacian on the box."""

    def __init__(self, grid: Grid, boundary):
        self.boundary = boundary
        h = grid.h
        lam = 0.0
        for ax, n in enumerate(grid.shape):
            if boundary == "dirichlet":
                k = np.arange(1, n - 1)
                l1 = 4 / h ** 2 * np.sin(np.pi * k / (2 * (n - 1))) ** 2
            else:
                k = np.arange(n)
                l1 = 4 / h ** 2 * np.sin(np.pi * k / (2 * (n - 1))) ** 2
            shape = [1] * grid.N
            shape[ax] = len(l1)
            lam = lam + l1.reshape(shape)
        self.lam = lam
        self.inner = tuple(slice(1, -1) for _ in grid.shape)

    def __call__(self, u, s):
        if s <= 0:
            return u
        mult = np.exp(-s * self.lam)
        if self.boundary == "dirichlet":
            out = np.zeros_like(u)
            c = sfft.dstn(u[self.inner], type=1, norm="ortho", workers=-1)
            out[self.inner] = sfft.idstn(c * mult, type=1, norm="ortho", workers=-1)
        else:
            c = sfft.dctn(u, type=1, workers=-1)
            out = sfft.idctn(c * mult, type=1, workers=-1)
        # roundoff can leave tiny negative values; the semigroup is positive
        return np.maximum(out, 0.0)


def _explicit_heat(u, dt, h, boundary):
    N = u.ndim
    if dt > h * h / (2 * N) * (1 + 1e-12):
        raise CFLError(f"dt={dt} exceeds the explicit bound h^2/(2N)={h * h / (2 * N)}")
    # ghost values: zero outside (Dirichlet) or the mirrored neighbour (no flux)
    mode = "constant" if boundary == "dirichlet" else "reflect"
    lap = np.zeros_like(u)
    for ax in range(N):
        pad = np.pad(u, [(1, 1) if a == ax else (0, 0) for a in range(N)], mode=mode)
        lap += np.take(pad, range(2, pad.shape[ax]), axis=ax) - 2 * u \
            + np.take(pad, range(0, pad.shape[ax] - 2), axis=ax)
    out = u + dt / (h * h) * lap
    if boundary == "dirichlet":
        _zero_walls(out)
    return out


def _zero_walls(u):
    for ax in range(u.ndim):
        idx = [slice(None)] * u.ndim
        idx[ax] = 0
        u[tuple(idx)] = 0
        idx[ax] = -1
        u[tuple(idx)] = 0


def absorb(u, dt, q, mode="exact"):
    """One absorption substep of length dt."""
    if mode == "off":
        return u
    if mode == "exact":
        # v = (u^(1-q) + (q-1) dt)^(-1/(q-1)), written to avoid overflow
        return u / (1.0 + (q - 1.0) * dt * u ** (q - 1.0)) ** (1.0 / (q - 1.0))
    # backward step v + dt v^q = u by Newton from v = u, where g >= 0; g is
    # convex and increasing, so the iterates decrease monotonically
    v = np.array(u, float)
    for _ in range(200):
        g = v + dt * v ** q - u
        nv = np.maximum(v - g / (1.0 + q * dt * v ** (q - 1.0)), 0.0)
        if np.all(np.abs(nv - v) <= 1e-15 * np.maximum(nv, 1e-300)):
            return nv
        v = nv
    raise RuntimeError("scalar absorption iteration failed to converge")


def time_mesh(scheme: SchemeParams, outputs):
    """Graded mesh: dt = clip(theta t, dt_min, dt_max), landing on every output time."""
    if scheme.diffusion == "explicit":
        dt = scheme.beta * scheme.h ** 2
        n = int(math.ceil(scheme.T / dt - 1e-9))
        mesh = list(np.linspace(0.0, scheme.T, n + 1))
        for t in outputs:
            mesh.append(float(t))
        return np.unique(np.array(mesh))
    t, mesh = 0.0, [0.0]
    targets = sorted(set(float(v) for v in outputs) | {scheme.T})
    j = 0
    while t < scheme.T * (1 - 1e-14):
        dt = min(max(scheme.theta * t, scheme.dt_floor), scheme.dt_max)
        while j < len(targets) and targets[j] <= t * (1 + 1e-14):
            j += 1
        nxt = t + dt
        if j < len(targets) and nxt >= targets[j] * (1 - 1e-12):
            nxt = targets[j]
        elif j < len(targets) and targets[j] - nxt < 0.25 * dt:
            nxt = 0.5 * (t + targets[j]) if targets[j] - t > dt else targets[j]
        mesh.append(nxt)
        t = nxt
    return np.array(mesh)


def default_outputs(T):
    marks = {0.05, 0.1, 0.25, 0.5, 1.0}
    pts = set(np.round(np.geomspace(min(0.01, T / 4), T, 25), 12)) | {m for m in marks if m <= T}
    return tuple(sorted(pts))


def solve_semilinear(trace, scheme: SchemeParams, ctx: ExponentContext, box: Grid | None = None,
                     u0=None) -> SpaceTimeField:
    """Evolve the trace and return snapshots at scheme.output_times (plus T)."""
    grid = solver_grid(trace, scheme, ctx.N, box)
    u = initial_values(trace, grid) if u0 is None else np.array(u0, float)
    if np.any(u < 0):
        raise ValueError("initial data must be nonnegative")
    outs = tuple(t for t in (scheme.output_times or default_outputs(scheme.T)) if 0 < t <= scheme.T)
    outs = tuple(sorted(set(outs) | {scheme.T}))
    mesh = time_mesh(scheme, outs)
    if scheme.boundary == "dirichlet":
        _zero_walls(u)
    snaps, stamp = [], []
    want = set(outs)
    q = ctx.q
    loss = 0.0
    if scheme.diffusion == "spectral":
        # absorption-heat-absorption: large data is cut down before it spreads
        heat = _Heat(grid, scheme.boundary)
        merge = scheme.absorption == "exact"   # the exact flow is a semigroup
        pending = 0.0

        def cut(u, tau):
            v = absorb(u, tau, q, scheme.absorption)
            return v, float(np.sum(u - v)) * grid.cell_volume

        for a, b in zip(mesh[:-1], mesh[1:]):
            dt = b - a
            if merge:
                u, d = cut(u, pending + dt / 2)
            else:
                u, d = cut(u, dt / 2)
                if pending:
                    u, d2 = cut(u, pending)
                    d += d2
            loss += d
            u = heat(u, dt)
            pending = dt / 2
            if b in want:
                u, d = cut(u, pending)
                loss += d
                pending = 0.0
                snaps.append(u.copy())
                stamp.append(b)
    else:
        for a, b in zip(mesh[:-1], mesh[1:]):
            dt = b - a
            u = _explicit_heat(u, dt, grid.h, scheme.boundary)
            v = absorb(u, dt, q, scheme.absorption)
            loss += float(np.sum(u - v)) * grid.cell_volume
            u = v
            if b in want:
                snaps.append(u.copy())
                stamp.append(b)
    meta = {"scheme": scheme, "steps": len(mesh) - 1, "absorbed_mass": loss,
            "trace": type(trace).__name__}
    return SpaceTimeField(grid, np.array(stamp), np.array(snaps), meta)


# ---------------------------------------------------------------- families

def _window_change(a: SpaceTimeField, b: SpaceTimeField, window):
    sel = (a.times >= window[0] - 1e-12) & (a.times <= window[1] + 1e-12)
    num = np.abs(a.values[sel] - b.values[sel]).max(initial=0.0)
    den = np.abs(b.values[sel]).max(initial=0.0)
    return num / den if den > 0 else (0.0 if num == 0 else math.inf)


K_LADDER = (1e1, 1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8)


def maximal_solution(K, scheme: SchemeParams, ctx: ExponentContext, k_ladder=K_LADDER,
                     eps_ladder=None, window=(0.05, 1.0), rtol=1e-3, box=None,
                     mono_tol=1e-9, warm_start=2) -> SpaceTimeField:
    """Limit of u_{k, K_eps} up the k ladder and down the eps ladder.

    Each eps runs the k ladder until the relative sup change on the window
    drops below rtol. Monotonicity in k (up) and eps (down) is checked; a
    violation raises LadderError. With warm_start = m, every eps after the
    first starts its ladder m rungs below where the previous eps stopped
    (None runs the full ladder each time).
    """
    eps_ladder = (scheme.h, 0.0) if eps_ladder is None else tuple(eps_ladder)
    if list(eps_ladder) != sorted(eps_ladder, reverse=True):
        raise ValueError("eps ladder must decrease")
    empty = (K.is_empty if isinstance(K, (DiscreteSet, SetSpec)) else False)
    window = (window[0], min(window[1], scheme.T))
    outs = tuple(sorted(set(scheme.output_times or default_outputs(scheme.T))))
    scheme = replace(scheme, output_times=outs)
    if empty:
        f = solve_semilinear(BlowupTrace(K, 0.0), scheme, ctx, box)
        f.meta["ladder"] = []
        return f
    grid = solver_grid(BlowupTrace(K, 1.0, max(eps_ladder)), scheme, ctx.N, box)
    report, prev_eps_field, final = [], None, None
    start = 0
    for eps in eps_ladder:
        prev = None
        for i, k in enumerate(k_ladder[start:], start):
            f = solve_semilinear(BlowupTrace(K, k, eps), scheme, ctx, grid)
            change = math.inf
            if prev is not None:
                if np.any(f.values < prev.values - mono_tol * max(1.0, prev.values.max())):
                    raise LadderError(f"k ladder not monotone at k={k}, eps={eps}")
                change = _window_change(f, prev, window)
            report.append({"eps": eps, "k": k, "change": change})
            prev = f
            if change < rtol:
                break
        if warm_start is not None:
            start = max(0, i - warm_start)
        if prev_eps_field is not None:
            scale = max(1.0, prev.values.max())
            if np.any(prev.values > prev_eps_field.values + mono_tol * scale):
                raise LadderError(f"eps ladder not monotone at eps={eps}")
        prev_eps_field = prev
        final = prev
    final.meta.update({"ladder": report, "stabilized": report[-1]["change"] < rtol,
                       "eps_ladder": eps_ladder})
    return final


def moderate_solution(mu: AtomicMeasure, scheme: SchemeParams, ctx: ExponentContext, box=None):
    """Solution with measure trace; atoms are spread as mass/h^N on one cell."""
    return solve_semilinear(MeasureTrace(mu), scheme, ctx, box)


def heat_field(mu: AtomicMeasure, scheme: SchemeParams, ctx, box=None):
    """The same discretization with the absorption switched off."""
    return solve_semilinear(MeasureTrace(mu), replace(scheme, absorption="off"), ctx, box)


@dataclass
class LowerConstruction:
    field: SpaceTimeField
    mu: AtomicMeasure
    eps_values: tuple
    heat_at_point: float      # H[mu_{t,K}](x, t), exact kernel sum
    prop32_rhs: float         # (4 pi t)^(-N/2) sum e^(-(n+1)/4) d^gamma c_n
    value_at_point: float
    per_eps: list


def shell_measure(K, x, t, ctx, h_ref=None):
    """Atoms of mu_{t,K}: shell capacitary measures carried back to R^N.

    Returns (AtomicMeasure, list of (n, d_{n+1}, c_n)).
    """
    from .capacity import bessel_capacity_result
    from .potential import DEFAULT_H_REF, _spec, reference_grid, shell_mask

    h_ref = DEFAULT_H_REF if h_ref is None else h_ref
    spec = _spec(K)
    x = np.asarray(x, float)
    grid = reference_grid(ctx.N, h_ref)
    gam = ctx.N - 2.0 / (ctx.q - 1.0)
    atoms, shells = [], []
    if spec.is_empty:
        return AtomicMeasure([]), shells
    D = spec.max_dist(x)
    top = int(math.floor(D * D / t * (1 + 1e-12)))
    for n in range(top + 1):
        mask = shell_mask(spec, x, t, n, grid)
        if not mask.any():
            continue
        res = bessel_capacity_result(DiscreteSet(grid, mask), ctx)
        d = math.sqrt((n + 1) * t)
        shells.append((n, d, res.value))
        idx = np.argwhere(res.measure > 0)
        w = res.measure[tuple(idx.T)]
        pos = x + d * (np.asarray(grid.lo) + idx * grid.h)
        for p, m in zip(pos, w):
            atoms.append((p, d ** gam * m))
    return AtomicMeasure(atoms), shells


def sigma_moderate_lower(K, x, t, scheme: SchemeParams, ctx: ExponentContext,
                         eps_values=(0.25, 0.5, 1.0), h_ref=None, box=None) -> LowerConstruction:
    """Pointwise max over eps of u_{eps mu_{t,K}}, mu_{t,K} built from the
    shell capacitary measures around (x, t)."""
    if not ctx.supercritical:
        raise ValueError("the capacitary construction needs q >= q_c")
    mu, shells = shell_measure(K, x, t, ctx, h_ref)
    N = ctx.N
    gam = N - 2.0 / (ctx.q - 1.0)
    rhs = (4 * math.pi * t) ** (-N / 2) * sum(math.exp(-(n + 1) / 4) * d ** gam * c for n, d, c in shells)
    x = np.asarray(x, float)
    H = sum(m * (4 * math.pi * t) ** (-N / 2) * math.exp(-np.sum((a - x) ** 2) / (4 * t)) for a, m in mu.atoms)
    sch = replace(scheme, output_times=tuple(sorted(set(scheme.output_times) | {t})), T=max(t, 1e-300))
    if mu.is_zero:
        f = solve_semilinear(MeasureTrace(mu), sch, ctx, box)
        return LowerConstruction(f, mu, tuple(eps_values), 0.0, 0.0, 0.0, [])
    best, per = None, []
    for e in eps_values:
        scaled = AtomicMeasure([(a, e * m) for a, m in mu.atoms])
        f = moderate_solution(scaled, sch, ctx, box)
        per.append((e, f.at(x, t)))
        if best is None:
            best = f
        else:
            best = SpaceTimeField(f.grid, f.times, np.maximum(best.values, f.values), dict(f.meta))
    best.meta["eps_values"] = tuple(eps_values)
    return LowerConstruction(best, mu, tuple(eps_values), float(H), float(rhs), best.at(x, t), per)


# ---------------------------------------------------------------- envelopes

def envelope_checks(u: SpaceTimeField, r, ctx: ExponentContext, center=None, profile=None,
                    point_source=False, t_min=0.0):
    """Empirical constants of the decay envelopes of a maximal solution.

    C_239 = max u^(q-1) (t + (|x|-r)^2) over |x| > r.
    C_271 (point_source=True) = max u / (t^(-1/(q-1)) min(1, (|x|/sqrt t)^(2/(q-1)-N) e^(-|x|^2/4t))).
    ratio_272 (profile given) = max over |x| >= r of u / (t^(-1/(q-1)) f1((|x|-r)/sqrt t)).
    """
    if r is None:
        raise ValueError("the radius r of a ball containing K is required")
    q, N = ctx.q, ctx.N
    g = u.grid
    c = np.zeros(N) if center is None else np.asarray(center, float)
    rad = np.sqrt(sum((m - c[i]) ** 2 for i, m in enumerate(g.mesh())))
    out = {"C_239": 0.0}
    if point_source:
        out["C_271"] = 0.0
    if profile is not None:
        out["ratio_272"] = 0.0
    for t, val in zip(u.times, u.values):
        if t < t_min:
            continue
        sel = rad > r
        if sel.any():
            out["C_239"] = max(out["C_239"], float(np.max(val[sel] ** (q - 1) * (t + (rad[sel] - r) ** 2))))
        if point_source:
            y = np.maximum(rad / math.sqrt(t), 1e-300)
            env = t ** (-1 / (q - 1)) * np.minimum(1.0, y ** (2 / (q - 1) - N) * np.exp(-y * y / 4))
            pos = val > 0
            if pos.any():
                out["C_271"] = max(out["C_271"], float(np.max(val[pos] / env[pos])))
        if profile is not None:
            sel = rad >= r
            y = (rad[sel] - r) / math.sqrt(t)
            env = t ** (-1 / (q - 1)) * profile(y)
            ok = env > 0
            if ok.any():
                out["ratio_272"] = max(out["ratio_272"], float(np.max(val[sel][ok] / env[ok])))
    return out


# ---------------------------------------------------------------- export

def field_csv(u: SpaceTimeField, path=None, stride=1):
    """CSV rows (x..., t, u); header x0,..,t,u."""
    import csv
    import io

    g = u.grid
    axes = [a[::stride] for a in g.axes()]
    mesh = np.meshgrid(*axes, indexing="ij")
    cols = [m.ravel() for m in mesh]
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{i}" for i in range(g.N)] + ["t", "u"])
    sl = tuple(slice(None, None, stride) for _ in range(g.N))
    for t, val in zip(u.times, u.values):
        v = val[sl].ravel()
        for i in range(v.size):
            w.writerow([repr(float(c[i])) for c in cols] + [repr(float(t)), repr(float(v[i]))])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def dump_field(u: SpaceTimeField, path):
    """Binary dump, little-endian throughout:
    b"PCAP", u32 version=1, u32 N, u32 n_times, N x u32 shape,
    N x f64 lo, f64 h, n_times x f64 times, then the values row-major
    (time, axis 0, ..., axis N-1) as f64."""
    g = u.grid
    with open(path, "wb") as fh:
        fh.write(b"PCAP")
        fh.write(struct.pack("<III", 1, g.N, len(u.times)))
        fh.write(struct.pack(f"<{g.N}I", *g.shape))
        fh.write(struct.pack(f"<{g.N}d", *g.lo))
        fh.write(struct.pack("<d", g.h))
        fh.write(np.asarray(u.times, "<f8").tobytes())
        fh.write(np.ascontiguousarray(u.values, "<f8").tobytes())


def load_field(path) -> SpaceTimeField:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != b"PCAP":
        raise ValueError("not a PCAP field dump")
    version, N, nt = struct.unpack_from("<III", data, 4)
    if version != 1:
        raise ValueError(f"unsupported dump version {version}")
    off = 16
    shape = struct.unpack_from(f"<{N}I", data, off)
    off += 4 * N
    lo = struct.unpack_from(f"<{N}d", data, off)
    off += 8 * N
    (h,) = struct.unpack_from("<d", data, off)
    off += 8
    times = np.frombuffer(data, "<f8", nt, off)
    off += 8 * nt
    vals = np.frombuffer(data, "<f8", nt * int(np.prod(shape)), off).reshape((nt,) + tuple(shape))
    hi = tuple(l + (n - 1) * h for l, n in zip(lo, shape))
    return SpaceTimeField(Grid(tuple(lo), hi, h, tuple(shape)), times.copy(), vals.copy(), {})
