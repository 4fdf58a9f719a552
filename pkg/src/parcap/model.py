"""Exponents, grids, closed-set descriptions and annular slicing."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

# relative slack used by every cell/membership test, so that rescaled copies
# of a configuration rasterize identically
_REL_EPS = 1e-9


@dataclass(frozen=True)
class ExponentContext:
    N: int
    q: float
    q_prime: float
    s: float
    p: float
    sp: float
    q_c: float
    supercritical: bool

    @property
    def label(self):
        return f"{self.N}:{self.q:g}"


def make_context(N, q) -> ExponentContext:
    """Derived exponents for dimension N and absorption power q.

    The critical exponent is 1 + 2/N (the Brezis-Friedman threshold): this is
    the value for which s*q' <= N is equivalent to q >= q_c.
    """
    if isinstance(N, bool) or int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N!r}")
    q = float(q)
    if not math.isfinite(q) or q <= 1.0:
        raise ValueError(f"q must be a finite real > 1, got {q!r}")
    N = int(N)
    qp = q / (q - 1.0)
    s = 2.0 / q
    sp = 2.0 / (q - 1.0)
    return ExponentContext(N=N, q=q, q_prime=qp, s=s, p=qp, sp=sp,
                           q_c=1.0 + 2.0 / N, supercritical=N * (q - 1.0) >= 2.0)


# ---------------------------------------------------------------- grids

@dataclass(frozen=True)
class Grid:
    """Uniform node lattice on the box [lo, hi]; node i sits at lo + i*h."""
    lo: tuple
    hi: tuple
    h: float
    shape: tuple

    @property
    def N(self):
        return len(self.lo)

    @property
    def cell_volume(self):
        return self.h ** self.N

    def axes(self):
        return [np.linspace(a, b, n) for a, b, n in zip(self.lo, self.hi, self.shape)]

    def mesh(self):
        return np.meshgrid(*self.axes(), indexing="ij")

    def points(self):
        return np.stack([m.ravel() for m in self.mesh()], axis=1)

    def index_of(self, x):
        """Nearest node multi-index to point x (clipped to the grid)."""
        x = np.asarray(x, float)
        idx = np.rint((x - np.asarray(self.lo)) / self.h).astype(int)
        return tuple(int(np.clip(i, 0, n - 1)) for i, n in zip(idx, self.shape))

    def node(self, index):
        return np.asarray(self.lo) + np.asarray(index) * self.h


def make_grid(lo, hi, h) -> Grid:
    lo = tuple(float(v) for v in np.atleast_1d(lo))
    hi = tuple(float(v) for v in np.atleast_1d(hi))
    if len(lo) != len(hi):
        raise ValueError("lo and hi differ in dimension")
    if not (h > 0 and math.isfinite(h)):
        raise ValueError("grid spacing must be positive")
    shape = []
    for a, b in zip(lo, hi):
        if not b > a:
            raise ValueError("grid box has zero volume")
        n = (b - a) / h
        m = int(round(n))
        if abs(n - m) > 1e-6 * max(1.0, n):
            raise ValueError(f"box side {b - a} is not a multiple of h={h}")
        shape.append(m + 1)
    return Grid(lo, hi, float(h), tuple(shape))


def cube_grid(N, half_width, h, center=None) -> Grid:
    """Cube of at least the given half width, widened to a whole number of cells."""
    c = np.zeros(N) if center is None else np.asarray(center, float)
    half = math.ceil(half_width / h - 1e-9) * h
    return make_grid(c - half, c + half, h)


# ---------------------------------------------------------------- sets

class SetSpec:
    """Closed subset of R^N with a cell-intersection test."""

    def hits(self, grid: Grid) -> np.ndarray:
        """Boolean mask of nodes whose closed cell meets the set."""
        raise NotImplementedError

    def contains(self, pts) -> np.ndarray:
        raise NotImplementedError

    def affine(self, shift, scale) -> "SetSpec":
        """Image of the set under y -> (y - shift) / scale."""
        raise NotImplementedError

    def max_dist(self, x) -> float:
        raise NotImplementedError

    def to_text(self) -> str:
        raise NotImplementedError

    @property
    def is_empty(self):
        return False

    def __add__(self, other):
        return Union(_parts(self) + _parts(other))


def _parts(s):
    return list(s.parts) if isinstance(s, Union) else [s]


def _fmt(v):
    return ",".join(repr(float(a)) if float(a) != int(a) else str(int(a)) for a in np.atleast_1d(v))


def _fmt1(a):
    return _fmt([a])


def _index_range(grid, lo, hi, slack):
    """Per-axis index windows of nodes whose cell can meet the box [lo, hi]."""
    h = grid.h
    out = []
    for ax in range(grid.N):
        a = (lo[ax] - grid.lo[ax] - slack) / h - 0.5
        b = (hi[ax] - grid.lo[ax] + slack) / h + 0.5
        i0 = max(int(math.ceil(a - 1e-12)), 0)
        i1 = min(int(math.floor(b + 1e-12)), grid.shape[ax] - 1)
        if i1 < i0:
            return None
        out.append((i0, i1))
    return out


def _window(grid, rng):
    axes = grid.axes()
    sl = tuple(slice(a, b + 1) for a, b in rng)
    coords = np.meshgrid(*[axes[k][a:b + 1] for k, (a, b) in enumerate(rng)], indexing="ij")
    return sl, coords


def _slack(grid, scale=1.0):
    return _REL_EPS * max(grid.h, scale)


@dataclass(frozen=True)
class Ball(SetSpec):
    center: tuple
    radius: float

    def __post_init__(self):
        if not self.radius >= 0:
            raise ValueError("ball radius must be >= 0")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    def hits(self, grid):
        mask = np.zeros(grid.shape, bool)
        c = np.asarray(self.center)
        eps = _slack(grid, self.radius)
        rng = _index_range(grid, c - self.radius, c + self.radius, eps)
        if rng is None:
            return mask
        sl, X = _window(grid, rng)
        half = grid.h / 2
        d2 = 0.0
        for k in range(grid.N):
            gap = np.maximum(np.abs(X[k] - c[k]) - half, 0.0)
            d2 = d2 + gap * gap
        mask[sl] = np.sqrt(d2) <= self.radius + eps
        return mask

    def contains(self, pts):
        pts = np.atleast_2d(pts)
        return np.linalg.norm(pts - np.asarray(self.center), axis=1) <= self.radius * (1 + _REL_EPS) + 1e-300

    def affine(self, shift, scale):
        return Ball(tuple((np.asarray(self.center) - shift) / scale), self.radius / scale)

    def max_dist(self, x):
        return float(np.linalg.norm(np.asarray(self.center) - x) + self.radius)

    def to_text(self):
        return f"ball:{_fmt(self.center)}:{_fmt1(self.radius)}"


@dataclass(frozen=True)
class Box(SetSpec):
    lo: tuple
    hi: tuple

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        if len(self.lo) != len(self.hi) or any(b < a for a, b in zip(self.lo, self.hi)):
            raise ValueError("box needs lo <= hi componentwise")

    def hits(self, grid):
        mask = np.zeros(grid.shape, bool)
        scale = max(max(abs(v) for v in self.lo + self.hi), 1e-300)
        rng = _index_range(grid, self.lo, self.hi, _slack(grid, scale))
        if rng is not None:
            mask[tuple(slice(a, b + 1) for a, b in rng)] = True
        return mask

    def contains(self, pts):
        pts = np.atleast_2d(pts)
        tol = _REL_EPS * max(1e-300, max(abs(v) for v in self.lo + self.hi))
        return np.all((pts >= np.asarray(self.lo) - tol) & (pts <= np.asarray(self.hi) + tol), axis=1)

    def affine(self, shift, scale):
        return Box(tuple((np.asarray(self.lo) - shift) / scale), tuple((np.asarray(self.hi) - shift) / scale))

    def max_dist(self, x):
        x = np.asarray(x, float)
        far = np.maximum(np.abs(np.asarray(self.lo) - x), np.abs(np.asarray(self.hi) - x))
        return float(np.linalg.norm(far))

    def to_text(self):
        return f"box:{_fmt(self.lo)}:{_fmt(self.hi)}"


@dataclass(frozen=True)
class Annulus(SetSpec):
    center: tuple
    r_in: float
    r_out: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not (0 <= self.r_in <= self.r_out):
            raise ValueError("annulus needs 0 <= r_in <= r_out")

    def hits(self, grid):
        mask = np.zeros(grid.shape, bool)
        c = np.asarray(self.center)
        eps = _slack(grid, self.r_out)
        rng = _index_range(grid, c - self.r_out, c + self.r_out, eps)
        if rng is None:
            return mask
        sl, X = _window(grid, rng)
        half = grid.h / 2
        near = 0.0
        far = 0.0
        for k in range(grid.N):
            a = np.abs(X[k] - c[k])
            near = near + np.maximum(a - half, 0.0) ** 2
            far = far + (a + half) ** 2
        mask[sl] = (np.sqrt(near) <= self.r_out + eps) & (np.sqrt(far) >= self.r_in - eps)
        return mask

    def contains(self, pts):
        d = np.linalg.norm(np.atleast_2d(pts) - np.asarray(self.center), axis=1)
        tol = _REL_EPS * self.r_out
        return (d <= self.r_out + tol) & (d >= self.r_in - tol)

    def affine(self, shift, scale):
        return Annulus(tuple((np.asarray(self.center) - shift) / scale), self.r_in / scale, self.r_out / scale)

    def max_dist(self, x):
        return float(np.linalg.norm(np.asarray(self.center) - x) + self.r_out)

    def to_text(self):
        return f"annulus:{_fmt(self.center)}:{_fmt1(self.r_in)}:{_fmt1(self.r_out)}"


@dataclass(frozen=True)
class Cantor(SetSpec):
    """Product Cantor dust: every axis keeps the two outer pieces of relative
    length `ratio` at each iteration. bbox=None means the unit cube."""
    iterations: int
    ratio: float
    bbox: tuple | None = None  # (lo, hi)

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("cantor iterations must be >= 0")
        if not (0 < self.ratio < 0.5):
            raise ValueError("cantor ratio must lie in (0, 1/2)")

    def boxes(self, N):
        if self.bbox is None:
            lo, hi = np.zeros(N), np.ones(N)
        else:
            lo, hi = np.asarray(self.bbox[0], float), np.asarray(self.bbox[1], float)
        segs = [[(lo[k], hi[k])] for k in range(N)]
        for _ in range(self.iterations):
            for k in range(N):
                nxt = []
                for a, b in segs[k]:
                    w = (b - a) * self.ratio
                    nxt += [(a, a + w), (b - w, b)]
                segs[k] = nxt
        out = [((), ())]
        for k in range(N):
            out = [(l + (a,), u + (b,)) for l, u in out for a, b in segs[k]]
        return [Box(l, u) for l, u in out]

    def _dim(self, fallback):
        return len(self.bbox[0]) if self.bbox is not None else fallback

    def hits(self, grid):
        mask = np.zeros(grid.shape, bool)
        for b in self.boxes(grid.N):
            mask |= b.hits(grid)
        return mask

    def contains(self, pts):
        pts = np.atleast_2d(pts)
        out = np.zeros(len(pts), bool)
        for b in self.boxes(pts.shape[1]):
            out |= b.contains(pts)
        return out

    def affine(self, shift, scale):
        shift = np.asarray(shift, float)
        N = self._dim(shift.size)
        lo, hi = (np.zeros(N), np.ones(N)) if self.bbox is None else map(np.asarray, self.bbox)
        return Cantor(self.iterations, self.ratio,
                      (tuple((lo - shift) / scale), tuple((hi - shift) / scale)))

    def max_dist(self, x):
        x = np.asarray(x, float)
        lo, hi = (np.zeros(x.size), np.ones(x.size)) if self.bbox is None else self.bbox
        return Box(lo, hi).max_dist(x)  # the bbox corners belong to the dust

    def to_text(self):
        tail = "box" if self.bbox is None else _fmt(tuple(self.bbox[0]) + tuple(self.bbox[1]))
        return f"cantor:{self.iterations}:{_fmt1(self.ratio)}:{tail}"


@dataclass(frozen=True)
class PointCloud(SetSpec):
    points: tuple

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(tuple(float(c) for c in p) for p in self.points))

    @property
    def is_empty(self):
        return len(self.points) == 0

    def hits(self, grid):
        mask = np.zeros(grid.shape, bool)
        for p in self.points:
            mask |= Box(p, p).hits(grid)
        return mask

    def contains(self, pts):
        pts = np.atleast_2d(pts)
        out = np.zeros(len(pts), bool)
        for p in self.points:
            out |= Ball(p, 0.0).contains(pts)
        return out

    def affine(self, shift, scale):
        return PointCloud(tuple(tuple((np.asarray(p) - shift) / scale) for p in self.points))

    def max_dist(self, x):
        if not self.points:
            return 0.0
        return float(max(np.linalg.norm(np.asarray(p) - x) for p in self.points))

    def to_text(self):
        if not self.points:
            return "empty"
        return "points:" + "/".join(_fmt(p) for p in self.points)


@dataclass(frozen=True)
class Union(SetSpec):
    parts: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))

    @property
    def is_empty(self):
        return all(p.is_empty for p in self.parts)

    def hits(self, grid):
        mask = np.zeros(grid.shape, bool)
        for p in self.parts:
            mask |= p.hits(grid)
        return mask

    def contains(self, pts):
        pts = np.atleast_2d(pts)
        out = np.zeros(len(pts), bool)
        for p in self.parts:
            out |= p.contains(pts)
        return out

    def affine(self, shift, scale):
        return Union(tuple(p.affine(shift, scale) for p in self.parts))

    def max_dist(self, x):
        live = [p.max_dist(x) for p in self.parts if not p.is_empty]
        return max(live) if live else 0.0

    def to_text(self):
        if not self.parts:
            return "empty"
        return "+".join(p.to_text() for p in self.parts)


EMPTY = Union(())


def _nums(text):
    return tuple(float(v) for v in text.split(","))


def parse_set(text: str) -> SetSpec:
    """Parse the textual set grammar, e.g. ``ball:0,0:0.5+box:1,1:2,2``.

    kinds: ``ball:c:r``, ``box:lo:hi``, ``annulus:c:r_in:r_out``,
    ``cantor:iters:ratio:box`` (unit cube) or ``cantor:iters:ratio:lo..,hi..``,
    ``points:p1/p2/...``, ``empty``.  ``+`` joins a union.
    """
    text = text.strip()
    if not text:
        raise ValueError("empty set description")
    pieces = text.split("+")
    if len(pieces) > 1:
        return Union(tuple(parse_set(p) for p in pieces))
    f = text.split(":")
    kind = f[0].lower()
    try:
        if kind == "empty" and len(f) == 1:
            return EMPTY
        if kind == "ball" and len(f) == 3:
            return Ball(_nums(f[1]), float(f[2]))
        if kind == "box" and len(f) == 3:
            return Box(_nums(f[1]), _nums(f[2]))
        if kind == "annulus" and len(f) == 4:
            return Annulus(_nums(f[1]), float(f[2]), float(f[3]))
        if kind == "cantor" and len(f) in (3, 4):
            bbox = None
            if len(f) == 4 and f[3] != "box":
                v = _nums(f[3])
                if len(v) % 2:
                    raise ValueError("cantor box needs 2N coordinates")
                bbox = (v[: len(v) // 2], v[len(v) // 2:])
            return Cantor(int(f[1]), float(f[2]), bbox)
        if kind == "points" and len(f) == 2:
            return PointCloud(tuple(_nums(p) for p in f[1].split("/")))
    except ValueError as e:
        raise ValueError(f"bad set description {text!r}: {e}") from None
    raise ValueError(f"bad set description {text!r}")


# ---------------------------------------------------------------- discrete sets

@dataclass(frozen=True, eq=False)
class DiscreteSet:
    grid: Grid
    mask: np.ndarray
    source: SetSpec | None = None

    @property
    def count(self):
        return int(self.mask.sum())

    @property
    def is_empty(self):
        return not self.mask.any()

    def points(self):
        idx = np.argwhere(self.mask)
        return np.asarray(self.grid.lo) + idx * self.grid.h

    def with_mask(self, mask, source=None):
        return DiscreteSet(self.grid, mask, source)


def rasterize(spec: SetSpec, grid: Grid) -> DiscreteSet:
    if any(n < 2 for n in grid.shape):
        raise ValueError("grid box of zero volume")
    return DiscreteSet(grid, spec.hits(grid), spec)


# ---------------------------------------------------------------- slicing

@dataclass(frozen=True)
class Shell:
    n: int
    d_n: float
    d_next: float
    set: DiscreteSet


@dataclass(frozen=True)
class ShellDecomposition:
    x: tuple
    t: float
    shells: tuple
    a_t: int            # largest nonempty shell index (-1 for empty F)
    d_max: float        # largest node distance from x
    truncated: bool

    def shell(self, n):
        for s in self.shells:
            if s.n == n:
                return s
        return None

    @property
    def a_t_cover(self):
        """min{n : F inside closed ball of radius sqrt((n+1)t)}."""
        if self.a_t < 0:
            return -1
        return max(int(math.ceil(self.d_max ** 2 / self.t * (1 - 1e-12))) - 1, 0)

    @property
    def a_t_ball(self):
        """Smallest j with F inside the closed ball of radius sqrt(j t)."""
        if self.a_t < 0:
            return -1
        return max(int(math.ceil(self.d_max ** 2 / self.t * (1 - 1e-12))), 0)


def series_cutoff(tol=1e-10):
    """First n with exp(-n/4) < tol."""
    return int(math.floor(-4.0 * math.log(tol))) + 1


def annular_slices(F: DiscreteSet, x, t, series_tol=1e-10) -> ShellDecomposition:
    """Split the nodes of F into shells d_n <= |y - x| < d_{n+1}, d_n = sqrt(n t).

    The outermost nonempty shell is closed: nodes lying exactly on its inner
    sphere d_m (and nowhere beyond) are assigned to shell m - 1.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    x = np.asarray(x, float)
    idx = np.argwhere(F.mask)
    if len(idx) == 0:
        return ShellDecomposition(tuple(x), float(t), (), -1, 0.0, False)
    pts = np.asarray(F.grid.lo) + idx * F.grid.h
    r2 = np.sum((pts - x) ** 2, axis=1) / t
    n = np.floor(r2 * (1 + 1e-13)).astype(int)
    top = n.max()
    on_edge = np.abs(r2 - n) <= 1e-12 * np.maximum(r2, 1.0)
    if top > 0 and np.all(on_edge[n == top]):
        n[n == top] -= 1
    n_cut = series_cutoff(series_tol)
    truncated = bool(n.max() > n_cut)
    shells = []
    for k in np.unique(n):
        if k > n_cut:
            break
        m = np.zeros(F.grid.shape, bool)
        m[tuple(idx[n == k].T)] = True
        shells.append(Shell(int(k), math.sqrt(k * t), math.sqrt((k + 1) * t), F.with_mask(m)))
    a_t = shells[-1].n
    return ShellDecomposition(tuple(x), float(t), tuple(shells), a_t,
                              float(np.sqrt(r2.max() * t)), truncated)
