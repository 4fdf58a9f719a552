"""Self-similar profile f of u = t^(-1/(q-1)) f(|x|/sqrt t) by shooting on f(0)."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp, trapezoid
from scipy.interpolate import CubicSpline

from .model import ExponentContext, make_context

Y_START = 1e-3          # series start for N > 1
CROSSING, SLOW = "crossing", "slow"


class BracketError(RuntimeError):
    pass


def _rhs(N, q):
    a = 1.0 / (q - 1.0)

    def f(y, z):
        u, v = z
        w = -(N - 1) / y * v if N > 1 else 0.0
        return [v, w - 0.5 * y * v - a * u + np.abs(u) ** q * np.sign(u)]
    return f


def _start(a, N, q):
    """(y0, f, f') at the series start; y0 = 0 when N = 1."""
    if N == 1:
        return 0.0, a, 0.0
    f2 = (a ** q - a / (q - 1.0)) / N
    y = Y_START
    return y, a + 0.5 * f2 * y * y, f2 * y


def _shoot(a, N, q, y_end, rtol=1e-12, dense=False, events=True):
    """Classify a shot: CROSSING if f reaches 0, SLOW if the log slope y f'/f
    climbs back above -2/(q-1) - 1 (the algebraic branch has slope -2/(q-1),
    the Gaussian one tends to -infinity) or f runs away upward, None if
    neither happens by y_end."""
    k = 2.0 / (q - 1.0)
    y0, f0, d0 = _start(a, N, q)

    def hit_zero(y, z):
        return z[0]
    hit_zero.terminal, hit_zero.direction = True, -1

    def turn_up(y, z):
        return y * z[1] + (k + 1.0) * z[0]
    turn_up.terminal, turn_up.direction = True, 1

    def runaway(y, z):
        return z[0] - 1e6
    runaway.terminal, runaway.direction = True, 1

    sol = solve_ivp(_rhs(N, q), (y0, y_end), [f0, d0], method="DOP853", rtol=rtol,
                    atol=1e-40, first_step=1e-4,
                    events=(hit_zero, turn_up, runaway) if events else None,
                    dense_output=dense)
    if not events:
        kind = None
    elif sol.t_events[0].size:
        kind = CROSSING
    elif sol.t_events[1].size or sol.t_events[2].size:
        kind = SLOW
    else:
        fe, de = sol.y[:, -1]
        kind = SLOW if fe > 0 and sol.t[-1] * de + (k + 1.0) * fe > 0 else None
    return kind, sol


@dataclass
class ProfileSolution:
    q: float
    N: int
    f0: float
    y: np.ndarray
    f: np.ndarray
    df: np.ndarray
    bracket: tuple
    tail_exponent: float = float("nan")
    tail_prefactor: float = float("nan")
    drift: float = float("nan")
    meta: dict = field(default_factory=dict)

    @property
    def y_max(self):
        return float(self.y[-1])

    @property
    def bracket_width(self):
        return self.bracket[1] - self.bracket[0]

    def __call__(self, y):
        """f(y) for y >= 0; beyond the computed range the fitted Gaussian tail is used."""
        y = np.abs(np.asarray(y, float))
        out = np.interp(y, self.y, self.f)
        far = y > self.y_max
        if np.any(far):
            yy = y[far] if out.ndim else y
            tail = self.tail_prefactor * yy ** self.tail_exponent * np.exp(-yy * yy / 4)
            if out.ndim:
                out[far] = tail
            else:
                out = tail
        return out

    def to_csv(self, path=None):
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["y", "f", "df"])
        for row in zip(self.y, self.f, self.df):
            w.writerow([repr(float(v)) for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def tail_fit(y, f, window=(6.0, 10.0)):
    """Least squares of log f + y^2/4 = log C + k log y on the window; returns (k, C)."""
    sel = (y >= window[0]) & (y <= window[1]) & (f > 0)
    if sel.sum() < 3:
        raise ValueError("too few samples in the tail window")
    ly = np.log(y[sel])
    g = np.log(f[sel]) + y[sel] ** 2 / 4
    k, logc = np.polyfit(ly, g, 1)
    return float(k), float(math.exp(logc))


def tail_correction(y, q, N):
    """1 + c/y^2 + d/y^4, the next terms of the Gaussian tail y^k e^(-y^2/4)
    of the linearized equation, k = 2/(q-1) - N."""
    k = 2.0 / (q - 1.0) - N
    c = -k * (k + N - 2.0)
    d = -c * (N * k - 2.0 * N + k * k - 6.0 * k + 8.0) / 2.0
    y = np.asarray(y, float)
    return 1.0 + c / y ** 2 + d / y ** 4


def asymptotic_drift(profile: ProfileSolution, window=(6.0, 10.0), corrected=True):
    """Spread of log f + y^2/4 - (2/(q-1) - N) log y over the window, after
    dividing out the tail correction unless corrected=False."""
    k0 = 2.0 / (profile.q - 1.0) - profile.N
    sel = (profile.y >= window[0]) & (profile.y <= window[1])
    y = profile.y[sel]
    g = np.log(profile.f[sel]) + y ** 2 / 4 - k0 * np.log(y)
    if corrected:
        g = g - np.log(tail_correction(y, profile.q, profile.N))
    return float(g.max() - g.min())


def vss_profile(ctx: ExponentContext, y_max=12.0, tol=1e-8, samples=2001) -> ProfileSolution:
    """Bisect f(0) between a zero-crossing shot and a shot that stays on the
    slow algebraic branch; the profile is the positive endpoint's trajectory."""
    N, q = ctx.N, ctx.q
    if not (1.0 < q < ctx.q_c):
        raise ValueError(f"a decaying profile needs 1 < q < {ctx.q_c:g}")
    if y_max < 10:
        raise ValueError("y_max must be at least 10")
    y_end = y_max + 10.0
    cap = (q - 1.0) ** (-1.0 / (q - 1.0))
    lo, hi = 1e-6, 10.0 * cap
    klo, _ = _shoot(lo, N, q, y_end)
    khi, _ = _shoot(hi, N, q, y_end)
    if klo != CROSSING or khi != SLOW:
        raise BracketError(f"no sign change of the shot class on [{lo:g}, {hi:g}]: {klo}, {khi}")
    steps = 0
    while hi - lo > max(tol, 4 * np.spacing(hi)):
        mid = 0.5 * (lo + hi)
        kind, _ = _shoot(mid, N, q, y_end)
        steps += 1
        if kind == CROSSING:
            lo = mid
        elif kind == SLOW:
            hi = mid
        else:
            break       # indistinguishable from the profile up to y_end
    # keep narrowing to machine precision so the tail window is clean
    while True:
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        kind, _ = _shoot(mid, N, q, y_end)
        steps += 1
        if kind == CROSSING:
            lo = mid
        elif kind == SLOW:
            hi = mid
        else:
            break
    _, sol = _shoot(hi, N, q, y_max, dense=True, events=False)
    y0 = sol.t[0]
    y = np.linspace(0.0, y_max, samples)
    z = np.empty((2, samples))
    inner = y < y0
    z[:, ~inner] = sol.sol(y[~inner])
    if inner.any():
        f2 = (hi ** q - hi / (q - 1.0)) / N
        z[0, inner] = hi + 0.5 * f2 * y[inner] ** 2
        z[1, inner] = f2 * y[inner]
    z[1, 0] = 0.0
    prof = ProfileSolution(q, N, hi, y, z[0], z[1], (lo, hi), meta={"shots": steps + 2})
    if np.any(prof.f <= 0):
        raise BracketError("profile endpoint is not positive on the computed range")
    if np.any(prof.f > cap * (1 + 1e-9)):
        raise BracketError("profile exceeds the flat solution (q-1)^(-1/(q-1))")
    w = (6.0, min(10.0, y_max))
    prof.tail_exponent, prof.tail_prefactor = tail_fit(prof.y, prof.f, w)
    prof.drift = asymptotic_drift(prof, w)
    return prof


def flat_profile(q, y_max=12.0, tol=1e-8) -> ProfileSolution:
    """One-dimensional profile f_1 used by the flat barrier."""
    if not (1.0 < q < 3.0):
        raise ValueError("the one-dimensional profile needs 1 < q < 3")
    return vss_profile(make_context(1, q), y_max, tol)


def insertion_residual(profile: ProfileSolution, x_max=3.0, t_range=(0.25, 1.0), n=81):
    """L^2 norm over |x| <= x_max, t in t_range of u_t - Lap u + u^q for
    u = t^(-1/(q-1)) f(|x|/sqrt t); f'' is taken from a spline of f', not
    from the ODE, so the residual is a genuine consistency check."""
    q, N = profile.q, profile.N
    ys, fs, ds = profile.y, profile.f, profile.df
    d2 = CubicSpline(ys, ds)(ys, 1)
    r_y = np.empty_like(ys)
    r_y[1:] = d2[1:] + (N - 1) / ys[1:] * ds[1:] + 0.5 * ys[1:] * ds[1:] + fs[1:] / (q - 1) - fs[1:] ** q
    r_y[0] = N * d2[0] + fs[0] / (q - 1) - fs[0] ** q
    x = np.linspace(0.0, x_max, n)
    t = np.linspace(*t_range, n)
    X, T = np.meshgrid(x, t, indexing="ij")
    Y = X / np.sqrt(T)
    # u_t - Lap u + u^q = -t^(-q/(q-1)) * (ODE residual at y)
    R = T ** (-q / (q - 1)) * np.interp(Y, ys, r_y, right=0.0)
    wx = X ** (N - 1) * (2.0 if N == 1 else 2.0 * math.pi ** (N / 2) / math.gamma(N / 2))
    integ = trapezoid(trapezoid(R * R * wx, x, axis=0), t)
    return float(math.sqrt(integ))


def self_similar_field(profile: ProfileSolution, grid_points, t):
    """t^(-1/(q-1)) f(|x - a|/sqrt t) on an array of points (last axis = coordinates)."""
    r = np.sqrt(np.sum(np.asarray(grid_points) ** 2, axis=-1))
    return t ** (-1.0 / (profile.q - 1)) * profile(r / math.sqrt(t))


def dirac_limit_compare(ctx: ExponentContext, scheme, profile: ProfileSolution | None = None,
                        window=((0.25, 1.0), 3.0), k_ladder=None, source=None):
    """Maximal solution of one cell against the self-similar solution.

    Returns a dict with the per-k deviations (sup relative on the window),
    the final deviation, and the worst excess of the self-similar lower
    bound over the computed solution."""
    from .model import DiscreteSet, PointCloud
    from .pde import K_LADDER, BlowupTrace, LadderError, solve_semilinear, solver_grid

    if ctx.supercritical:
        raise ValueError("the Dirac limit is only nontrivial for q < q_c")
    profile = vss_profile(ctx) if profile is None else profile
    a = np.zeros(ctx.N) if source is None else np.asarray(source, float)
    K = PointCloud((tuple(a),))
    ladder = K_LADDER if k_ladder is None else tuple(k_ladder)
    (t0, t1), rmax = window
    grid = solver_grid(BlowupTrace(K, 1.0), scheme, ctx.N)
    pts = grid.points().reshape(grid.shape + (ctx.N,)) - a
    rad = np.sqrt(np.sum(pts ** 2, axis=-1))
    sel = rad <= rmax
    report, prev = [], None
    for k in ladder:
        f = solve_semilinear(BlowupTrace(K, k), scheme, ctx, grid)
        if prev is not None and np.any(f.values < prev.values - 1e-9 * max(1.0, prev.values.max())):
            raise LadderError(f"k ladder not monotone at k={k}")
        dev, excess = 0.0, 0.0
        for t, val in zip(f.times, f.values):
            if t < t0 - 1e-12 or t > t1 + 1e-12:
                continue
            ref = self_similar_field(profile, pts, t)
            dev = max(dev, float(np.max(np.abs(val[sel] - ref[sel]) / ref[sel])))
            excess = max(excess, float(np.max(ref - val)))
        change = math.inf if prev is None else _rel_change(f, prev, t0, t1)
        report.append({"k": k, "deviation": dev, "lower_excess": excess, "change": change})
        prev = f
        if change < 1e-3:
            break
    return {"ladder": report, "deviation": report[-1]["deviation"],
            "lower_excess": report[-1]["lower_excess"], "stabilized": report[-1]["change"] < 1e-3,
            "f0": profile.f0, "field": prev}


def _rel_change(a, b, t0, t1):
    sel = (a.times >= t0 - 1e-12) & (a.times <= t1 + 1e-12)
    den = np.abs(b.values[sel]).max(initial=0.0)
    return float(np.abs(a.values[sel] - b.values[sel]).max(initial=0.0) / den) if den else math.inf
