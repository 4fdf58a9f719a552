"""Command line: parcap {context, capacity, potential, solve, profile, classify, verify, report}."""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import threading
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from importlib import resources

import numpy as np

from .model import ExponentContext, make_context, parse_set

SCHEMA_FILE = "runconfig.schema.json"

SET_HELP = ("set grammar: kind:args joined by '+', e.g. ball:0,0:0.5+ball:2,0:0.3; kinds are "
            "ball:c:r, box:lo:hi, annulus:c:r_in:r_out, cantor:iterations:ratio[:box|lo..,hi..], "
            "points:p1/p2/..., empty")

DEFAULT_THRESHOLDS = {
    "R": 1000.0,              # bilateral ratios must lie in [1/R, R]
    "ul_max": 10.0,           # maximal over sigma-moderate
    "stability": 0.25,        # interval move under one refinement
    "capacity_rel": 0.03,     # condenser against the radial formula
    "lemma33_tol": 1e-3,
    "a1_stability": 0.10,
    "peak_tol": 1e-10,
    "sphere_tol": 1e-8,
    "recursion_tol": 1e-6,
    "vss_bracket": 1e-8,
    "vss_residual": 1e-3,
    "vss_drift": 0.05,
    "dirac_deviation": 0.10,
    "rate_tol": 0.05,
    "spread_tol": 0.10,
    "null_drop": 0.10,
}

ALL_SUITES = ("appendix", "vss", "capacity", "bilateral", "wiener", "classify")


@dataclass
class RunConfig:
    N: int = 2
    q: float = 2.0
    K: str = "ball:0,0:0.5"
    omega: str = "ball:0,0:1"
    h: float = 1 / 32
    h_ref: float = 1 / 32
    capacity_h: float = 1 / 128
    theta: float = 0.02
    dt_max: float = 0.01
    k_ladder: list = field(default_factory=lambda: [10.0 ** k for k in range(1, 9)])
    ladder_rtol: float = 1e-3
    times: list = field(default_factory=lambda: [0.05, 0.1, 0.25, 0.5])
    offsets: list = field(default_factory=lambda: [0.0, 1.0, 1.6])
    sample_count: int = 3
    refine: bool = True
    eps_values: list = field(default_factory=lambda: [1.0])
    vss_N: int = 1
    vss_q: float = 2.0
    vss_h: float = 1 / 64
    rate_h: float = 1 / 64
    suites: list = field(default_factory=lambda: list(ALL_SUITES))
    thresholds: dict = field(default_factory=lambda: dict(DEFAULT_THRESHOLDS))
    output_dir: str = "parcap-out"
    seed: int | None = None
    jobs: int = 1

    def __post_init__(self):
        th = dict(DEFAULT_THRESHOLDS)
        th.update(self.thresholds)
        self.thresholds = th

    @property
    def ctx(self) -> ExponentContext:
        return make_context(self.N, self.q)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, d):
        validate_config(d)
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def load_schema():
    return json.loads(resources.files("parcap").joinpath(SCHEMA_FILE).read_text())


def validate_config(d):
    import jsonschema
    jsonschema.validate(d, load_schema())
    names = {f.name for f in fields(RunConfig)}
    extra = set(d) - names
    if extra:
        raise ValueError(f"unknown config keys: {sorted(extra)}")


# ---------------------------------------------------------------- results

class ResultStore:
    """Run directory keyed by the config hash; every file write is recorded
    with its sha256 in manifest.json."""

    def __init__(self, root, config: RunConfig | None = None, run_id=None):
        text = config.to_json() if config is not None else "{}"
        self.config_text = text
        self.run_id = run_id or hashlib.sha256(text.encode()).hexdigest()[:12]
        self.dir = os.path.join(root, self.run_id)
        self.files = {}
        self._lock = threading.Lock()

    def write(self, name, data):
        if isinstance(data, str):
            data = data.encode()
        path = os.path.join(self.dir, name)
        with self._lock:
            os.makedirs(os.path.dirname(path), exist_ok=True)
            with open(path, "wb") as fh:
                fh.write(data)
            self.files[name] = hashlib.sha256(data).hexdigest()
        return path

    def write_json(self, name, obj):
        return self.write(name, json.dumps(_plain(obj), sort_keys=True, indent=1) + "\n")

    def manifest(self):
        return {"run_id": self.run_id, "config": json.loads(self.config_text),
                "files": dict(sorted(self.files.items()))}

    def finalize(self):
        self.write("config.json", self.config_text + "\n")
        m = self.manifest()
        text = json.dumps(m, sort_keys=True, indent=1) + "\n"
        path = os.path.join(self.dir, "manifest.json")
        with open(path, "w") as fh:
            fh.write(text)
        return hashlib.sha256(text.encode()).hexdigest()


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    return v


def output_root(flag=None, cfg_dir=None):
    """--out flag, then PARCAP_OUT, then the config's output_dir."""
    return flag or os.environ.get("PARCAP_OUT") or cfg_dir or "parcap-out"


# ---------------------------------------------------------------- plot data

def _csv_text(header, rows):
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def plot_tables(report):
    """{file name: csv text} for a report; unknown or empty reports give a header-only table."""
    from .analysis import RatioReport
    from .vss import ProfileSolution

    if isinstance(report, ProfileSolution):
        return {"profile.csv": report.to_csv()}
    if isinstance(report, RatioReport):
        names = list(report.ratios)
        N = len(report.samples[0][0]) if report.samples else 0
        rows = []
        for i, (x, t) in enumerate(report.samples):
            if all(i < len(report.ratios[n]) for n in names):
                rows.append(list(x) + [t] + [report.ratios[n][i] for n in names])
        return {f"{report.suite}_ratios.csv": _csv_text([f"x{i}" for i in range(N)] + ["t"] + names, rows)}
    if isinstance(report, dict) and report.get("kind") == "density":
        rows = zip(report["taus"], report["curve"], report["weighted_plus"], report["weighted_minus"])
        return {"density.csv": _csv_text(["tau", "phi", "weighted_plus", "weighted_minus"], rows)}
    if isinstance(report, dict) and report.get("kind") == "field":
        from .pde import field_csv
        return {"field.csv": field_csv(report["field"], stride=report.get("stride", 1))}
    return {"empty.csv": _csv_text(["x", "y"], [])}


def emit_plot_data(report, out_dir):
    """Write the CSV tables of a report into out_dir; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for name, text in plot_tables(report).items():
        p = os.path.join(out_dir, name)
        with open(p, "w", newline="") as fh:
            fh.write(text)
        paths.append(p)
    return paths


# ---------------------------------------------------------------- suites

def _domain_grid(spec, N, h):
    from .model import cube_grid
    from .pde import _spec_box
    lo, hi = _spec_box(spec, N)
    c = (lo + hi) / 2
    return cube_grid(N, float(np.max(hi - lo)) / 2 + 2 * h, h, c)


def condenser_oracle(K, omega, N):
    """Radial capacity of concentric balls for s = 1, p = 2, or None."""
    from .model import Ball
    if not (isinstance(K, Ball) and isinstance(omega, Ball)) or K.center != omega.center:
        return None
    r, R = K.radius, omega.radius
    if N == 1:
        return 2.0 / (R - r)
    if N == 2:
        return 2 * math.pi / math.log(R / r)
    area = 2 * math.pi ** (N / 2) / math.gamma(N / 2)
    return area * (N - 2) / (r ** (2 - N) - R ** (2 - N))


def suite_capacity(cfg: RunConfig):
    from .capacity import besov_capacity
    from .model import rasterize
    ctx = cfg.ctx
    K, om = parse_set(cfg.K), parse_set(cfg.omega)
    g = _domain_grid(om, ctx.N, cfg.capacity_h)
    res = besov_capacity(rasterize(K, g), rasterize(om, g), ctx)
    oracle = condenser_oracle(K, om, ctx.N) if ctx.q == 2.0 else None
    rel = abs(res.value / oracle - 1) if oracle else None
    ok = res.converged and (rel is None or rel <= cfg.thresholds["capacity_rel"])
    return {"suite": "capacity", "params": {"K": cfg.K, "omega": cfg.omega, "h": cfg.capacity_h},
            "samples": [], "ratios": [res.value / oracle] if oracle else [],
            "value": res.value, "oracle": oracle, "rel_err": rel, "iterations": res.iterations,
            "pass": bool(ok)}, {}


def suite_appendix(cfg: RunConfig):
    from .analysis import appendix_suite
    th = cfg.thresholds
    parts = appendix_suite(lemma33_tol=th["lemma33_tol"], a1_stability=th["a1_stability"],
                           peak_tol=th["peak_tol"], sphere_tol=th["sphere_tol"],
                           recursion_tol=th["recursion_tol"])
    return {"suite": "appendix", "params": {}, "parts": parts,
            "pass_by_suite": {k: v["pass"] for k, v in parts.items()},
            "pass": all(v["pass"] for v in parts.values())}, {}


def suite_vss(cfg: RunConfig):
    from .pde import SchemeParams
    from .vss import dirac_limit_compare, insertion_residual, vss_profile
    th = cfg.thresholds
    ctx = make_context(cfg.vss_N, cfg.vss_q)
    prof = vss_profile(ctx, tol=th["vss_bracket"])
    res = insertion_residual(prof)
    sch = SchemeParams(h=cfg.vss_h, T=1.0, theta=cfg.theta, dt_max=cfg.dt_max)
    cmp_ = dirac_limit_compare(ctx, sch, prof, k_ladder=cfg.k_ladder)
    ok = (prof.bracket_width < th["vss_bracket"] and res < th["vss_residual"]
          and prof.drift < th["vss_drift"] and cmp_["deviation"] < th["dirac_deviation"])
    rep = {"suite": "vss", "params": {"N": cfg.vss_N, "q": cfg.vss_q, "h": cfg.vss_h},
           "samples": [r["k"] for r in cmp_["ladder"]],
           "ratios": [r["deviation"] for r in cmp_["ladder"]],
           "f0": prof.f0, "bracket_width": prof.bracket_width, "residual": res, "drift": prof.drift,
           "tail_exponent": prof.tail_exponent, "deviation": cmp_["deviation"],
           "lower_excess": cmp_["lower_excess"], "pass": bool(ok)}
    return rep, {"vss_profile.csv": prof.to_csv()}


def _pde_kw(cfg):
    return ({"theta": cfg.theta, "dt_max": cfg.dt_max},
            {"k_ladder": tuple(cfg.k_ladder), "rtol": cfg.ladder_rtol})


def _samples(cfg, K):
    from .analysis import sample_points
    return sample_points(K, cfg.N, tuple(cfg.times), tuple(cfg.offsets), cfg.seed, cfg.sample_count)


def suite_bilateral(cfg: RunConfig):
    from .analysis import bilateral_suite
    K = parse_set(cfg.K)
    th = cfg.thresholds
    skw, lkw = _pde_kw(cfg)
    rep = bilateral_suite(K, cfg.ctx, _samples(cfg, K), cfg.h, cfg.refine, th["R"], th["ul_max"],
                          th["stability"], tuple(cfg.eps_values), cfg.h_ref,
                          scheme_kw=skw, ladder_kw=lkw)
    return rep.to_dict(), plot_tables(rep)


def suite_wiener(cfg: RunConfig):
    from .analysis import wiener_upper_suite
    K = parse_set(cfg.K)
    skw, lkw = _pde_kw(cfg)
    rep = wiener_upper_suite(K, cfg.ctx, _samples(cfg, K), cfg.h, cfg.refine,
                             cfg.thresholds["stability"], cfg.h_ref, scheme_kw=skw, ladder_kw=lkw)
    files = plot_tables(rep)
    files["wiener_shells.csv"] = rep.extra["shell_csv"]
    return rep.to_dict(), files


def suite_classify(cfg: RunConfig):
    from .analysis import classify_point, point_refinement
    from .pde import _spec_box
    th = cfg.thresholds
    ctx = cfg.ctx
    K = parse_set(cfg.K)
    lo, hi = _spec_box(K, ctx.N)
    c = tuple(float(v) for v in (lo + hi) / 2)
    fat = classify_point(K, c, ctx, h_ref=cfg.h_ref, spread_tol=th["spread_tol"],
                         null_drop=th["null_drop"], rate_h=cfg.rate_h)
    from .model import PointCloud
    pt = classify_point(PointCloud((c,)), c, ctx, h_ref=cfg.h_ref, spread_tol=th["spread_tol"],
                        null_drop=th["null_drop"], rate=False)
    pots = point_refinement(c, ctx, h_refs=(cfg.h_ref, cfg.h_ref / 2))
    target = -1.0 / (ctx.q - 1.0)
    ok_fat = fat.kind == "strong" and abs(fat.rate_exponent / target - 1) <= th["rate_tol"]
    ok_pt = pt.kind == "bounded" and all(b < a for a, b in zip(pots[:-1], pots[1:]))
    rep = {"suite": "classify", "params": {"K": cfg.K, "x": list(c), "h_ref": cfg.h_ref},
           "samples": ["interior", "point"], "ratios": [fat.rate_exponent / target],
           "interior": {"kind": fat.kind, "gamma": fat.gamma, "rate_exponent": fat.rate_exponent},
           "point": {"kind": pt.kind, "potentials": pots},
           "pass": bool(ok_fat and ok_pt)}
    dens = {"kind": "density", "taus": fat.taus, "curve": fat.curve,
            "weighted_plus": fat.weighted_plus, "weighted_minus": fat.weighted_minus}
    return rep, plot_tables(dens)


SUITES = {"appendix": suite_appendix, "vss": suite_vss, "capacity": suite_capacity,
          "bilateral": suite_bilateral, "wiener": suite_wiener, "classify": suite_classify}


def _run_suite(args):
    name, cfg_json = args
    return name, SUITES[name](RunConfig.from_json(cfg_json))


def run_suites(cfg: RunConfig, names, store: ResultStore, jobs=1):
    """Run suites (concurrently up to jobs) and write reports in suite order."""
    todo = [(n, cfg.to_json()) for n in names]
    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_suite, todo))
    else:
        results = [_run_suite(t) for t in todo]
    summary = {}
    for name, (rep, files) in results:
        store.write_json(f"{name}.json", rep)
        for fname, text in files.items():
            store.write(f"{name}/{fname}", text)
        summary[name] = bool(rep["pass"])
    store.write_json("summary.json", {"suites": summary, "pass": all(summary.values())})
    return summary


# ---------------------------------------------------------------- commands

def _ctx(text):
    try:
        n, q = text.split(":")
        return make_context(int(n), float(q))
    except Exception as e:
        raise argparse.ArgumentTypeError(f"--ctx expects N:q ({e})")


def _set(text):
    try:
        return parse_set(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def _point(text):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad point {text!r}")


def _load_cfg(args) -> RunConfig:
    if getattr(args, "config", None):
        with open(args.config) as fh:
            cfg = RunConfig.from_json(fh.read())
    else:
        cfg = RunConfig()
    return cfg


def _store(args, cfg=None, tag=None):
    root = output_root(getattr(args, "out", None), cfg.output_dir if cfg else None)
    return ResultStore(root, cfg, None if cfg is not None else tag)


def cmd_context(args):
    ctx = args.ctx
    print(json.dumps(asdict(ctx) | {"label": ctx.label}, sort_keys=True))
    return 0


def cmd_capacity(args):
    from .capacity import besov_capacity, bessel_capacity_result
    from .model import rasterize
    ctx, K = args.ctx, args.set
    if args.omega is None:
        g = _bessel_grid(K, ctx.N, args.h)
        res = bessel_capacity_result(rasterize(K, g), ctx)
        kind = "bessel"
    else:
        g = _domain_grid(args.omega, ctx.N, args.h)
        res = besov_capacity(rasterize(K, g), rasterize(args.omega, g), ctx)
        kind = "besov"
    out = {"kind": kind, "ctx": ctx.label, "set": K.to_text(), "h": args.h,
           "omega": args.omega.to_text() if args.omega is not None else None,
           "value": res.value, "mass": res.mass, "iterations": res.iterations,
           "converged": res.converged}
    print(f"{res.value:.6f}")
    key = hashlib.sha256(json.dumps(out, sort_keys=True).encode()).hexdigest()[:12]
    store = _store(args, tag=f"capacity-{key}")
    store.write_json("capacity.json", out)
    store.finalize()
    return 0 if res.converged else 1


def _bessel_grid(K, N, h):
    """Cube around K with one unit of room on every side."""
    from .model import cube_grid
    from .pde import _spec_box
    lo, hi = _spec_box(K, N)
    c = (lo + hi) / 2
    return cube_grid(N, float(np.max(hi - lo)) / 2 + 1.0, h, c)


def cmd_potential(args):
    from .potential import w_integral, w_series, w_tilde_series
    ctx, F = args.ctx, args.set
    if args.kind == "W":
        s = w_series(F, args.x, args.t, ctx, args.h_ref)
    elif args.kind == "Wtilde":
        s = w_tilde_series(F, args.x, args.t, ctx, args.h_ref)
    else:
        v = w_integral(F, args.x, args.t, ctx, args.h_ref)
        print(f"{v:.6e}")
        return 0
    print(f"{s.value:.6e}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            fh.write(s.to_csv())
    return 0


def cmd_solve(args):
    from .pde import SchemeParams, dump_field, field_csv, maximal_solution
    ctx = args.ctx
    sch = SchemeParams(h=args.h, T=args.T)
    u = maximal_solution(args.set, sch, ctx)
    bound = max(float(np.max(v)) - ((ctx.q - 1) * t) ** (-1 / (ctx.q - 1)) for t, v in zip(u.times, u.values))
    print(json.dumps({"ctx": ctx.label, "set": args.set.to_text(), "h": args.h, "T": args.T,
                      "stabilized": bool(u.meta["stabilized"]), "max_excess_over_flat": bound}))
    if args.dump:
        dump_field(u, args.dump)
    if args.csv:
        field_csv(u, args.csv, stride=args.stride)
    return 0


def cmd_profile(args):
    from .vss import vss_profile
    p = vss_profile(make_context(args.N, args.q), y_max=args.y_max)
    if args.csv:
        p.to_csv(args.csv)
    print(json.dumps({"f0": p.f0, "bracket_width": p.bracket_width, "tail_exponent": p.tail_exponent,
                      "drift": p.drift}))
    return 0


def cmd_classify(args):
    from .analysis import classify_point
    c = classify_point(args.set, args.x, args.ctx, h_ref=args.h_ref, rate=not args.no_rate)
    print(json.dumps({"x": list(c.x), "class": c.kind, "gamma": c.gamma,
                      "rate_exponent": None if math.isnan(c.rate_exponent) else c.rate_exponent,
                      "null_set": c.null_set}))
    return 0


def cmd_verify(args):
    cfg = _load_cfg(args)
    names = list(cfg.suites) if args.what == "all" else [args.what]
    for n in names:
        if n not in SUITES:
            print(f"unknown suite {n!r}", file=sys.stderr)
            return 2
    store = _store(args, cfg)
    jobs = args.jobs if args.jobs is not None else cfg.jobs
    summary = run_suites(cfg, names, store, jobs)
    digest = store.finalize()
    for n, ok in summary.items():
        print(f"{n}: {'pass' if ok else 'FAIL'}")
    print(f"manifest {digest} in {store.dir}")
    return 0 if all(summary.values()) else 1


def cmd_report(args):
    path = os.path.join(args.run_dir, "manifest.json")
    with open(path) as fh:
        m = json.load(fh)
    summ = os.path.join(args.run_dir, "summary.json")
    status = {}
    if os.path.exists(summ):
        with open(summ) as fh:
            status = json.load(fh)["suites"]
    for name in sorted(m["files"]):
        print(f"{m['files'][name][:16]}  {name}")
    for n, ok in status.items():
        print(f"{n}: {'pass' if ok else 'FAIL'}")
    return 0 if all(status.values()) else 1


def build_parser():
    p = argparse.ArgumentParser(prog="parcap", description="Capacity potentials and blow-up sets "
                                "for the heat equation with absorption.", epilog=SET_HELP)
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("context", help="derived exponents for N:q")
    s.add_argument("--ctx", type=_ctx, required=True)
    s.set_defaults(func=cmd_context)

    s = sub.add_parser("capacity", help="relative (with --omega) or Bessel capacity", epilog=SET_HELP)
    s.add_argument("--ctx", type=_ctx, required=True)
    s.add_argument("--set", type=_set, required=True)
    s.add_argument("--omega", type=_set)
    s.add_argument("--h", type=float, default=1 / 32)
    s.add_argument("--out")
    s.set_defaults(func=cmd_capacity)

    s = sub.add_parser("potential", help="capacitary potential at (x, t)", epilog=SET_HELP)
    s.add_argument("--ctx", type=_ctx, required=True)
    s.add_argument("--set", type=_set, required=True)
    s.add_argument("--x", type=_point, required=True)
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--kind", choices=("W", "Wtilde", "integral"), default="W")
    s.add_argument("--h-ref", type=float, default=1 / 32)
    s.add_argument("--csv")
    s.set_defaults(func=cmd_potential)

    s = sub.add_parser("solve", help="maximal solution with blow-up set", epilog=SET_HELP)
    s.add_argument("--ctx", type=_ctx, required=True)
    s.add_argument("--set", type=_set, required=True)
    s.add_argument("--h", type=float, default=1 / 32)
    s.add_argument("--T", type=float, default=1.0)
    s.add_argument("--dump")
    s.add_argument("--csv")
    s.add_argument("--stride", type=int, default=4)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("profile", help="self-similar profile by shooting")
    s.add_argument("--N", type=int, default=1)
    s.add_argument("--q", type=float, default=2.0)
    s.add_argument("--y-max", type=float, default=12.0)
    s.add_argument("--csv")
    s.set_defaults(func=cmd_profile)

    s = sub.add_parser("classify", help="blow-up class of a point", epilog=SET_HELP)
    s.add_argument("--ctx", type=_ctx, required=True)
    s.add_argument("--set", type=_set, required=True)
    s.add_argument("--x", type=_point, required=True)
    s.add_argument("--h-ref", type=float, default=1 / 32)
    s.add_argument("--no-rate", action="store_true")
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("verify", help="run verification suites")
    s.add_argument("what", choices=("all",) + ALL_SUITES)
    s.add_argument("--config")
    s.add_argument("--out")
    s.add_argument("--jobs", type=int)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("report", help="summarize a run directory")
    s.add_argument("run_dir")
    s.set_defaults(func=cmd_report)
    return p


def run_command(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else 2
    try:
        return args.func(args)
    except (ValueError, OSError) as e:
        print(f"parcap: {e}", file=sys.stderr)
        return 2


def main():
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
