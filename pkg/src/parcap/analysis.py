"""Verification suites: bilateral and Wiener-type bounds, blow-up
classification, and the elementary lemmas behind the estimates."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .model import DiscreteSet, ExponentContext, PointCloud, SetSpec
from .potential import (DEFAULT_H_REF, capacity_density, cover_indices, density_integral,
                        w_series, _spec)


# ---------------------------------------------------------------- reports

@dataclass
class RatioReport:
    suite: str
    params: dict
    samples: list                 # [(x tuple, t)]
    ratios: dict                  # name -> list of ratios at the finest level
    levels: dict = field(default_factory=dict)   # h -> {name: list}
    bounds: tuple = (0.0, math.inf)
    refinement_delta: float = 0.0
    passed: bool = True
    extra: dict = field(default_factory=dict)

    def stats(self, name):
        """(min, geometric mean, max) of one ratio series."""
        r = np.asarray(self.ratios[name], float)
        if r.size == 0:
            return (math.nan, math.nan, math.nan)
        gm = float(np.exp(np.mean(np.log(r)))) if np.all(r > 0) and np.all(np.isfinite(r)) else math.nan
        return (float(r.min()), gm, float(r.max()))

    def to_dict(self):
        return {"suite": self.suite, "params": self.params,
                "samples": [[list(map(float, x)), float(t)] for x, t in self.samples],
                "ratios": {k: [float(v) for v in vals] for k, vals in self.ratios.items()},
                "levels": {repr(float(h)): {k: [float(v) for v in vals] for k, vals in d.items()}
                           for h, d in self.levels.items()},
                "bounds": [float(b) for b in self.bounds],
                "refinement_delta": float(self.refinement_delta),
                "extra": _jsonable(self.extra),
                "pass": bool(self.passed)}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=1, allow_nan=True)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer, int)) and not isinstance(v, bool):
        return int(v)
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    return v


def _interval_delta(coarse, fine):
    """Largest relative move of the min and max of each series."""
    worst = 0.0
    for name, c in coarse.items():
        f = fine[name]
        if not len(c):
            continue
        for a, b in ((min(c), min(f)), (max(c), max(f))):
            if not (math.isfinite(a) and math.isfinite(b)) or a == 0:
                return math.inf
            worst = max(worst, abs(b / a - 1.0))
    return worst


# ---------------------------------------------------------------- samples

def sample_points(K, N, times=(0.05, 0.1, 0.25, 0.5), offsets=(0.0, 1.0, 1.6), seed=None, count=3):
    """Sample (x, t) pairs for a suite.

    Without a seed the points sit on the first axis at the given multiples
    of the half-width of K's bounding box, measured from its center. With a
    seed, `count` points are drawn uniformly from the box widened by 60%.
    """
    from .pde import _spec_box
    lo, hi = _spec_box(_spec(K), N)
    c, half = (lo + hi) / 2, (hi - lo) / 2
    if seed is None:
        xs = []
        for o in offsets:
            p = c.copy()
            p[0] += o * half[0]
            xs.append(tuple(float(v) for v in p))
    else:
        rng = np.random.default_rng(seed)
        xs = [tuple(float(v) for v in c + 1.6 * half * (2 * rng.random(N) - 1)) for _ in range(count)]
    return [(x, float(t)) for x in xs for t in times]


def _is_empty(K):
    return K.is_empty if isinstance(K, (SetSpec, DiscreteSet)) else False


def _scheme(h, samples, T=None, scheme_kw=None):
    from .pde import SchemeParams, default_outputs
    T = max(t for _, t in samples) if T is None else T
    outs = tuple(sorted(set(t for _, t in samples) | set(o for o in default_outputs(T) if o <= T)))
    return SchemeParams(h=h, T=T, output_times=outs, **(scheme_kw or {}))


# ---------------------------------------------------------------- bilateral

def _bilateral_level(K, ctx, samples, h, eps_values, h_ref, tol, scheme_kw, ladder_kw):
    from .pde import maximal_solution, sigma_moderate_lower
    sch = _scheme(h, samples, scheme_kw=scheme_kw)
    ubar = maximal_solution(K, sch, ctx, **(ladder_kw or {}))
    out = {"U/W": [], "L/W": [], "U/L": []}
    info = []
    for x, t in samples:
        W = w_series(K, x, t, ctx, h_ref).value
        U = ubar.at(x, t)
        low = sigma_moderate_lower(K, x, t, sch, ctx, eps_values=eps_values, h_ref=h_ref)
        L = low.value_at_point
        if W == 0:
            if U > tol:
                raise AssertionError(f"W vanishes at {x}, t={t} while the maximal solution is {U:g}")
            continue
        out["U/W"].append(U / W)
        out["L/W"].append(L / W)
        out["U/L"].append(U / L if L > 0 else math.inf)
        info.append({"x": list(x), "t": t, "U": U, "L": L, "W": W, "heat": low.heat_at_point,
                     "prop32_rhs": low.prop32_rhs, "L_le_U": bool(L <= U * (1 + 1e-6) + tol)})
    return out, info, ubar.meta.get("ladder", [])


def bilateral_suite(K, ctx: ExponentContext, samples, h=1 / 32, refine=True, R=1000.0,
                    ul_max=10.0, stability=0.25, eps_values=(1.0,), h_ref=DEFAULT_H_REF,
                    tol=1e-8, scheme_kw=None, ladder_kw=None) -> RatioReport:
    """Maximal solution, sigma-moderate lower solution and the series
    potential at each sample; ratios at h and (if refine) h/2."""
    if not ctx.supercritical:
        raise ValueError("the bilateral estimate needs q >= q_c")
    params = {"N": ctx.N, "q": ctx.q, "h": h, "refine": refine, "R": R, "ul_max": ul_max,
              "stability": stability, "eps_values": list(eps_values), "h_ref": h_ref}
    if _is_empty(K):
        return RatioReport("bilateral", params, [], {"U/W": [], "L/W": [], "U/L": []},
                           bounds=(1 / R, R), passed=True, extra={"vacuous": True})
    hs = (h, h / 2) if refine else (h,)
    levels, infos = {}, {}
    for hh in hs:
        levels[hh], infos[hh], _ = _bilateral_level(K, ctx, samples, hh, eps_values, h_ref, tol,
                                                    scheme_kw, ladder_kw)
    fine = levels[hs[-1]]
    delta = _interval_delta(levels[hs[0]], fine) if refine else 0.0
    vals = [v for series in fine.values() for v in series]
    ok = all(math.isfinite(v) and 1 / R <= v <= R for v in vals)
    ok = ok and all(v <= ul_max for v in fine["U/L"]) and delta < stability
    ok = ok and all(i["L_le_U"] for i in infos[hs[-1]])
    return RatioReport("bilateral", params, list(samples), fine, levels, (1 / R, R), delta, ok,
                       {"points": {repr(k): v for k, v in infos.items()}})


# ---------------------------------------------------------------- Wiener upper bound

def _wiener_level(K, ctx, samples, h, h_ref, tol, scheme_kw, ladder_kw):
    from .pde import maximal_solution
    ubar = maximal_solution(K, _scheme(h, samples, scheme_kw=scheme_kw), ctx, **(ladder_kw or {}))
    out = {"U/series": [], "U/integral": [], "series/integral": []}
    for x, t in samples:
        S = w_series(K, x, t, ctx, h_ref).value
        _, a_cov = cover_indices(K, x, t)
        I = density_integral(K, x, t, ctx, math.sqrt(t), math.sqrt(t * (a_cov + 2)), h_ref)
        U = ubar.at(x, t)
        if S == 0 or I == 0:
            if U > tol:
                raise AssertionError(f"bound vanishes at {x}, t={t} while the maximal solution is {U:g}")
            continue
        out["U/series"].append(U / S)
        out["U/integral"].append(U / I)
        out["series/integral"].append(S / I)
    return out


def wiener_upper_suite(K, ctx: ExponentContext, samples, h=1 / 32, refine=True, stability=0.25,
                       h_ref=DEFAULT_H_REF, tol=1e-8, scheme_kw=None, ladder_kw=None) -> RatioReport:
    """Smallest empirical constants in u <= C * series and u <= C* * integral."""
    if not ctx.supercritical:
        raise ValueError("the Wiener-type bound needs q >= q_c")
    params = {"N": ctx.N, "q": ctx.q, "h": h, "refine": refine, "stability": stability, "h_ref": h_ref}
    names = ("U/series", "U/integral", "series/integral")
    if _is_empty(K):
        return RatioReport("wiener_upper", params, [], {n: [] for n in names}, passed=True,
                           extra={"vacuous": True})
    hs = (h, h / 2) if refine else (h,)
    levels = {hh: _wiener_level(K, ctx, samples, hh, h_ref, tol, scheme_kw, ladder_kw) for hh in hs}
    fine = levels[hs[-1]]
    delta = _interval_delta(levels[hs[0]], fine) if refine else 0.0
    vals = [v for s in fine.values() for v in s]
    ok = all(math.isfinite(v) and v > 0 for v in vals) and delta < stability
    x0, t0 = samples[0]
    shells = w_series(K, x0, t0, ctx, h_ref).to_csv()
    extra = {"C": max(fine["U/series"], default=0.0), "C_star": max(fine["U/integral"], default=0.0),
             "shell_csv": shells}
    return RatioReport("wiener_upper", params, list(samples), fine, levels, (0.0, math.inf),
                       delta, ok, extra)


# ---------------------------------------------------------------- classification

@dataclass
class BlowupClass:
    x: tuple
    kind: str                       # "strong", "bounded" or "indeterminate"
    gamma: float = 0.0
    rate_exponent: float = math.nan
    taus: np.ndarray | None = None
    curve: np.ndarray | None = None          # Phi at h_ref
    curve_fine: np.ndarray | None = None     # Phi at h_ref / 2
    weighted_plus: np.ndarray | None = None  # tau^(2/(q-1)) Phi
    weighted_minus: np.ndarray | None = None  # tau^(-2/(q-1)) Phi
    null_set: bool = False
    details: dict = field(default_factory=dict)


DEFAULT_TAUS = tuple(0.5 ** k for k in range(1, 9))


def _spread(v):
    v = np.asarray(v, float)
    return float((v.max() - v.min()) / v.max()) if v.max() > 0 else 0.0


def rate_fit(F, x, ctx, h=1 / 64, t_window=(2e-3, 2e-2), points=8):
    """Slope of log u_F(x, t) against log t on the window."""
    from .pde import SchemeParams, maximal_solution
    ts = tuple(float(v) for v in np.geomspace(*t_window, points))
    u = maximal_solution(F, SchemeParams(h=h, T=t_window[1], output_times=ts), ctx,
                         window=t_window)
    vals = np.array([u.at(x, t) for t in ts])
    if np.any(vals <= 0):
        return math.nan, vals
    slope = np.polyfit(np.log(ts), np.log(vals), 1)[0]
    return float(slope), vals


def classify_point(F, x, ctx: ExponentContext, taus=DEFAULT_TAUS, h_ref=DEFAULT_H_REF,
                   spread_tol=0.10, null_drop=0.10, rate=True, rate_h=1 / 64) -> BlowupClass:
    """Classify x from the capacity density curve Phi(tau) = C((F - x)/tau cap B_1).

    A curve that shrinks by more than null_drop when h_ref is halved is
    resolution-driven (the set is capacity-null there) and is read as
    Phi = 0. Otherwise the last three values decide: spread below
    spread_tol gives strong with gamma their mean. Null curves give
    bounded; everything else is indeterminate.
    """
    taus = np.asarray(taus, float)
    if taus.size < 6:
        raise ValueError("need at least 6 scales")
    x = tuple(float(v) for v in x)
    curve = capacity_density(F, x, taus, ctx, h_ref)
    fine = capacity_density(F, x, taus[-3:], ctx, h_ref / 2)
    coarse3 = curve.values[-3:]
    k = 2.0 / (ctx.q - 1.0)
    res = BlowupClass(x, "indeterminate", taus=taus, curve=curve.values, curve_fine=fine.values,
                      weighted_plus=curve.weighted(ctx, +1), weighted_minus=curve.weighted(ctx, -1))
    if coarse3.max() == 0:
        res.null_set = True
    else:
        res.null_set = bool(np.all(fine.values < (1 - null_drop) * np.maximum(coarse3, 1e-300)))
    res.details = {"spread": _spread(coarse3), "refine_ratio": (fine.values / np.where(coarse3 > 0, coarse3, 1)).tolist(),
                   "exponent": k}
    if res.null_set:
        res.kind, res.gamma = "bounded", 0.0
        return res
    if _spread(coarse3) < spread_tol:
        res.kind, res.gamma = "strong", float(np.mean(coarse3))
        if rate:
            res.rate_exponent, vals = rate_fit(F, x, ctx, rate_h)
            res.details["rate_values"] = vals.tolist()
        return res
    # literal (4.63) reading: bounded if tau^(-2/(q-1)) Phi stays bounded
    wm = res.weighted_minus[-3:]
    if np.all(np.diff(wm) <= 0):
        res.kind = "bounded"
    return res


def point_refinement(x, ctx, t=0.25, h_refs=(1 / 16, 1 / 32, 1 / 64)):
    """Series potential of the single point {x} at (x, t) on refined reference grids."""
    F = PointCloud((tuple(float(v) for v in x),))
    return [w_series(F, x, t, ctx, hr).value for hr in h_refs]


def point_solution_max(x, ctx, hs=(1 / 32, 1 / 64), t_window=(1e-3, 1.0)):
    """max over t in the window of the single-cell maximal solution at x, per h."""
    from .pde import SchemeParams, maximal_solution
    F = PointCloud((tuple(float(v) for v in x),))
    out = []
    for h in hs:
        ts = tuple(float(v) for v in np.geomspace(*t_window, 13))
        sch = SchemeParams(h=h, T=t_window[1], output_times=ts, margin=3.0)
        u = maximal_solution(F, sch, ctx, eps_ladder=(0.0,), window=t_window)
        out.append(max(u.at(x, t) for t in ts))
    return out


# ---------------------------------------------------------------- Lemma 3.3

def lemma33_closed(a, b, t, N):
    if not 0 < a < b:
        raise ValueError("need 0 < a < b")
    if a / (2 * N) > 1:
        return math.exp(0.25) * t ** (-N / 2) * math.exp(-a / 4)
    return math.exp(0.25) * (2 * N / (a * t)) ** (N / 2) * math.exp(-N / 2)


def lemma33_brute(a, b, t, N, n=2000, sigma_min_ratio=1e-6):
    """max of s^(-N/2) exp(-rho^2/4s) on a log-spaced (sigma, rho^2 + sigma) grid."""
    sig = np.geomspace(sigma_min_ratio * t, t, n)[:, None]
    tot = np.geomspace(a * t, b * t, n)[None, :]
    rho2 = tot - sig
    with np.errstate(over="ignore", invalid="ignore"):
        val = np.where(rho2 >= 0, sig ** (-N / 2) * np.exp(-rho2 / (4 * sig)), 0.0)
    return float(val.max())


def lemma33_max(a, b, t, N, n=2000):
    """(closed form, brute-force grid maximum)."""
    return lemma33_closed(a, b, t, N), lemma33_brute(a, b, t, N, n)


def lemma33_variant_bound(a, t, N, theta):
    """Right side of the variant bound, valid for theta a >= 1 and theta >= 1/2N."""
    if theta * a < 1 or theta < 1 / (2 * N):
        raise ValueError("need theta a >= 1 and theta >= 1/(2N)")
    return math.exp(0.25) * (2 * N * theta / t) ** (N / 2) * math.exp(-a / 4)


# ---------------------------------------------------------------- Lemma A.1

def romberg(f, a, b, rtol=1e-10, max_level=22):
    """Romberg extrapolation of the trapezoid rule with interval doubling."""
    if b <= a:
        return 0.0
    R = [[0.5 * (b - a) * (f(np.array([a]))[0] + f(np.array([b]))[0])]]
    for k in range(1, max_level + 1):
        n = 2 ** (k - 1)
        hk = (b - a) / n
        mids = a + hk * (np.arange(n) + 0.5)
        row = [0.5 * R[-1][0] + 0.5 * hk * float(np.sum(f(mids)))]
        for j in range(1, k + 1):
            row.append(row[j - 1] + (row[j - 1] - R[-1][j - 1]) / (4 ** j - 1))
        R.append(row)
        if k >= 4 and abs(row[-1] - R[-2][-1]) <= rtol * abs(row[-1]):
            return row[-1]
    raise RuntimeError("Romberg quadrature did not converge")


def lemmaA1_integrand(a, b, A, B):
    def phi(x):
        x = np.asarray(x, float)
        out = np.zeros_like(x)
        ok = (x > 0) & (x < 1)
        xi = x[ok]
        out[ok] = np.exp(-a * np.log1p(-xi) - b * np.log(xi) - A * A / (4 * (1 - xi)) - B * B / (4 * xi))
        return out
    return phi


def lemmaA1_lhs(a, b, A, B, rtol=1e-10):
    x0 = B / (A + B)
    f = lemmaA1_integrand(a, b, A, B)
    return romberg(f, 0.0, x0, rtol) + romberg(f, x0, 1.0, rtol)


def lemmaA1_rhs(a, b, A, B):
    return math.exp(-(A + B) ** 2 / 4) * A ** (1 - a) * B ** (1 - b) * (A + B) ** (a + b - 2)


def lemmaA1_check(a, b, A, B, kappa=1.0, rtol=1e-10):
    """LHS / RHS of the Gaussian product integral bound."""
    if not (a > 0 and kappa > 0 and A > 0 and B > kappa / A):
        raise ValueError("need a > 0, kappa > 0, A > 0 and B > kappa / A")
    return lemmaA1_lhs(a, b, A, B, rtol) / lemmaA1_rhs(a, b, A, B)


def lemmaA1_peak(A, B):
    """(numerical argmax, numerical max, B/(A+B), exp(-(A+B)^2/4)) of the
    exponential product, the numerical pair from a bounded scalar search."""
    from scipy.optimize import minimize_scalar

    def g(x):
        return A * A / (4 * (1 - x)) + B * B / (4 * x)
    r = minimize_scalar(g, bounds=(1e-12, 1 - 1e-12), method="bounded", options={"xatol": 1e-14})
    return float(r.x), math.exp(-float(r.fun)), B / (A + B), math.exp(-(A + B) ** 2 / 4)


A1_AB = (0.5, 1.0, 1.5, 2.5)


def lemmaA1_sweep(kappa=1.0, ab=A1_AB, A_values=(1.0, 2.0, 4.0), B_offsets=(1.0, 2.0, 4.0)):
    """Per-(a, b) supremum of LHS/RHS over the (A, B) sweep, B = kappa/A + offset."""
    sup = {}
    for a in ab:
        for b in ab:
            best = 0.0
            for A in A_values:
                for off in B_offsets:
                    best = max(best, lemmaA1_check(a, b, A, kappa / A + off, kappa))
            sup[(a, b)] = best
    return sup


def densify(values):
    """Insert geometric midpoints between consecutive sweep values."""
    v = list(values)
    out = [v[0]]
    for lo, hi in zip(v[:-1], v[1:]):
        out += [math.sqrt(lo * hi), hi]
    return tuple(out)


# ---------------------------------------------------------------- Lemma A.2

def lemmaA2_lhs(alpha, beta, gamma, delta, l, n):
    p = np.arange(1, n - l + 1, dtype=float)
    e = np.sqrt(p) + math.sqrt(gamma) * (math.sqrt(n) - np.sqrt(p + 1))
    return float(np.sum(p ** alpha * (math.sqrt(n) - np.sqrt(p)) ** beta * np.exp(-delta * e * e)))


def lemmaA2_check(alpha, beta, gamma, delta, l, n):
    """Sum over p of the Gaussian-weighted terms divided by n^(alpha - beta/2) e^(-delta n)."""
    if not (gamma > 1 and delta > 0 and l >= 2 and n > l):
        raise ValueError("need gamma > 1, delta > 0, l >= 2 and n > l")
    # ratio in log form: the scale e^(-delta n) underflows long before the ratio does
    p = np.arange(1, n - l + 1, dtype=float)
    e = np.sqrt(p) + math.sqrt(gamma) * (math.sqrt(n) - np.sqrt(p + 1))
    logs = (alpha * np.log(p) + beta * np.log(math.sqrt(n) - np.sqrt(p)) - delta * e * e
            - (alpha - beta / 2) * math.log(n) + delta * n)
    m = logs.max()
    return float(math.exp(m) * np.sum(np.exp(logs - m)))


def lemmaA2_instance(q=2.0, N=2, eps=0.1):
    """(alpha, beta, gamma, delta) used for the Gaussian sum estimate of the lower bound."""
    return (2 * q - 3) / 4, (1 - (q - 1) * (N - 1)) / 2, (1 - eps) * q, 0.25


# ---------------------------------------------------------------- Lemma A.3

def sphere_integral(N, m):
    """int_0^pi e^(m cos th) sin^(N-2) th dth by adaptive quadrature.

    The factor e^m is pulled out so large m stays in range."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    if N < 2:
        raise ValueError("N must be at least 2")
    val, _ = quad(lambda th: math.exp(m * (math.cos(th) - 1)) * math.sin(th) ** (N - 2), 0, math.pi,
                  epsabs=0, epsrel=1e-13, limit=200)
    return val * math.exp(m)


def sphere_integral_3(m):
    """Closed form for N = 3."""
    return 2.0 if m == 0 else 2 * math.sinh(m) / m


def sphere_integral_5_displayed(m):
    """The displayed N = 5 expression (sinh in both terms)."""
    return 4 * math.sinh(m) / m ** 2 - 4 * math.sinh(m) / m ** 3


def sphere_integral_5(m):
    """N = 5 by integrating by parts twice: 4 cosh m / m^2 - 4 sinh m / m^3."""
    return 4 * math.cosh(m) / m ** 2 - 4 * math.sinh(m) / m ** 3


def sphere_recursion_displayed(N, m):
    """The displayed two-step recursion (N-3)(N-5)/m^2 (I_{N-4} - I_{N-2}),
    with the lower orders taken from quadrature."""
    if N < 6:
        raise ValueError("the two-step recursion starts at N = 6")
    return (N - 3) * (N - 5) / m ** 2 * (sphere_integral(N - 4, m) - sphere_integral(N - 2, m))


def sphere_recursion(N, m):
    """I_N = (N-3)/m^2 ((N-5) I_{N-4} - (N-4) I_{N-2}) for N >= 6, from
    d/dth(cos th sin^(N-5) th) = (N-5) sin^(N-6) th - (N-4) sin^(N-4) th."""
    if N < 6:
        raise ValueError("the two-step recursion starts at N = 6")
    return (N - 3) / m ** 2 * ((N - 5) * sphere_integral(N - 4, m) - (N - 4) * sphere_integral(N - 2, m))


def sphere_bound_profile(N, ms=None):
    """I_N(m) (1+m)^((N-1)/2) e^(-m) on a grid of m in [0, 100]."""
    ms = np.linspace(0.0, 100.0, 401) if ms is None else np.asarray(ms, float)
    return ms, np.array([sphere_integral(N, m) * (1 + m) ** ((N - 1) / 2) * math.exp(-m) for m in ms])


# ---------------------------------------------------------------- appendix suite

LEMMA33_GRID = {"a": (0.5, 3.0, 10.0), "t": (0.25, 1.0, 4.0), "N": (1, 2)}


def appendix_suite(lemma33_grid=LEMMA33_GRID, lemma33_tol=1e-3, lemma33_n=2000, a1_kappa=1.0,
                   a1_stability=0.10, peak_tol=1e-10, a2_ladder=(20, 40, 80, 160, 320),
                   sphere_ms=(0.1, 1.0, 10.0), sphere_tol=1e-8, recursion_tol=1e-6):
    """All appendix-level checks; returns a dict of per-suite reports."""
    out = {}
    rows, ok = [], True
    for a in lemma33_grid["a"]:
        for t in lemma33_grid["t"]:
            for N in lemma33_grid["N"]:
                c, b = lemma33_max(a, 2 * a, t, N, lemma33_n)
                err = abs(b - c) / c
                ok &= err <= lemma33_tol
                rows.append({"a": a, "b": 2 * a, "t": t, "N": N, "closed": c, "brute": b, "rel_err": err})
    out["lemma33"] = {"suite": "lemma33", "params": {"tol": lemma33_tol, "n": lemma33_n},
                      "samples": rows, "ratios": [r["brute"] / r["closed"] for r in rows], "pass": bool(ok)}

    base = lemmaA1_sweep(a1_kappa)
    dense = lemmaA1_sweep(a1_kappa, A_values=densify((1.0, 2.0, 4.0)), B_offsets=densify((1.0, 2.0, 4.0)))
    moves = {f"{a},{b}": abs(dense[(a, b)] / base[(a, b)] - 1) for a, b in base}
    xn, vn, x0, v0 = lemmaA1_peak(1.0, 2.0)
    peak_err = abs(vn - v0) / v0
    ok = (all(math.isfinite(v) for v in base.values()) and max(moves.values()) < a1_stability
          and peak_err <= peak_tol)
    out["lemmaA1"] = {"suite": "lemmaA1", "params": {"kappa": a1_kappa, "stability": a1_stability},
                      "samples": [{"a": a, "b": b, "sup": base[(a, b)], "sup_dense": dense[(a, b)]}
                                  for a, b in base],
                      "ratios": [base[k] for k in base], "peak": {"x_num": xn, "x0": x0, "value_num": vn,
                                                                   "value": v0, "rel_err": peak_err},
                      "pass": bool(ok)}

    al, be, ga, de = lemmaA2_instance()
    ratios = [lemmaA2_check(al, be, ga, de, 2, n) for n in a2_ladder]
    # bounded along the ladder: the last doubling does not raise the ratio by more than 5%
    ok = all(math.isfinite(r) for r in ratios) and ratios[-1] <= 1.05 * max(ratios[:-1])
    out["lemmaA2"] = {"suite": "lemmaA2", "params": {"alpha": al, "beta": be, "gamma": ga, "delta": de,
                                                     "l": 2}, "samples": list(a2_ladder),
                      "ratios": ratios, "pass": bool(ok)}

    q3 = [abs(sphere_integral(3, m) - sphere_integral_3(m)) / sphere_integral_3(m) for m in sphere_ms]
    ms, prof = sphere_bound_profile(6)
    tail_growth = prof[-1] / prof[len(prof) // 2]
    rec = abs(sphere_recursion_displayed(6, 2.0) - sphere_integral(6, 2.0)) / sphere_integral(6, 2.0)
    rec_fixed = abs(sphere_recursion(6, 2.0) - sphere_integral(6, 2.0)) / sphere_integral(6, 2.0)
    i5 = {"quadrature": sphere_integral(5, 2.0), "displayed": sphere_integral_5_displayed(2.0),
          "corrected": sphere_integral_5(2.0)}
    ok = max(q3) <= sphere_tol and math.isfinite(prof.max()) and tail_growth < 1.05 and rec <= recursion_tol
    out["sphere_integral"] = {"suite": "sphere_integral",
                              "params": {"tol": sphere_tol, "recursion_tol": recursion_tol},
                              "samples": list(sphere_ms), "ratios": q3,
                              "bound_max": float(prof.max()), "tail_growth": float(tail_growth),
                              "recursion_displayed_rel_err": rec, "recursion_corrected_rel_err": rec_fixed,
                              "I5_at_2": i5, "pass": bool(ok)}
    return out
