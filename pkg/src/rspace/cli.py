"""Command-line entry point: verification suites, nets, KdV runs and a cross-ratio calculator.

Exit codes: 0 success, 1 a check or a geometric construction failed, 2 usage error.
Written files are deterministic given the seed; the only varying content is
the "metadata" block (timestamp and wall time).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import Instability, RSpaceError


class UsageError(Exception):
    pass


# reports

@dataclass
class RunReport:
    suite: str
    seed: int
    cases: list = field(default_factory=list)
    wall_time: float = 0.0

    def add(self, name: str, residual: float, tolerance: float, above: bool = False):
        """Record a case; above=True means the residual must exceed the tolerance."""
        residual = float(residual)
        ok = residual > tolerance if above else residual <= tolerance
        self.cases.append({"name": name, "residual": residual, "tolerance": float(tolerance),
                           "pass": bool(ok)})

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.cases)

    def to_json(self) -> str:
        doc = {"suite": self.suite, "seed": self.seed, "cases": self.cases,
               "all_pass": self.passed, "metadata": _metadata(wall_time=self.wall_time)}
        return dumps(doc)


def dumps(doc) -> str:
    # json writes floats with repr, the shortest round-trip form
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def _metadata(**extra) -> dict:
    out = {"timestamp": datetime.now(timezone.utc).isoformat()}
    out.update(extra)
    return out


# suites

def _random_pairs(model, rng, count):
    from .models import point_to_parabolic, random_complementary_pair
    from .parabolic import make_pair
    for _ in range(count):
        p, q = random_complementary_pair(model, rng)
        yield make_pair(point_to_parabolic(p), point_to_parabolic(q))


def _algebras():
    from .liealg import build_algebra
    return [("sl(2)", build_algebra("sl", 2)), ("sl(3)", build_algebra("sl", 3)),
            ("so(3,1)", build_algebra("so", 3, 1)), ("so(4,1)", build_algebra("so", 4, 1))]


def _pair_models():
    from .models import conformal, grassmannian, rp1
    return [rp1(), grassmannian(2, 4), conformal(3, 0), conformal(2, 1), conformal(3, 1)]


def suite_algebra_core(report: RunReport, rng: np.random.Generator, cases: int = 100):
    from .liealg import jacobi_defect, killing_polar
    from .numerics import Subspace, subspace_distance
    for name, g in _algebras():
        jac = inv = pol = 0.0
        for _ in range(cases):
            x, y, z = (g.random_element(rng).coords for _ in range(3))
            jac = max(jac, jacobi_defect(g, x, y, z))
            inv = max(inv, abs(g.kill(g.br(x, y), z) + g.kill(y, g.br(x, z))))
            k = int(rng.integers(1, g.dim))
            s = Subspace(np.linalg.qr(rng.standard_normal((g.dim, k)))[0])
            pol = max(pol, subspace_distance(killing_polar(g, killing_polar(g, s)), s))
        report.add(f"jacobi/{name}", jac, 1e-10)
        report.add(f"ad-invariance/{name}", inv, 1e-10)
        report.add(f"polar-involution/{name}", pol, 1e-10)


def suite_grading_elements(report, rng, cases: int = 100):
    from .parabolic import grading_residual
    for model in _pair_models():
        worst = max(grading_residual(pr) for pr in _random_pairs(model, rng, cases))
        report.add(f"make-pair/{model.tag}", worst, 1e-8)


def suite_gamma_homomorphism(report, rng, cases: int = 30):
    from scipy.linalg import expm
    from .liealg import Automorphism
    for model in _pair_models():
        hom = orth = expo = 0.0
        for pr in _random_pairs(model, rng, cases):
            s, s2 = rng.uniform(0.2, 3.0, 2) * rng.choice([-1.0, 1.0], 2)
            hom = max(hom, float(np.abs(pr.gamma_matrix(s) @ pr.gamma_matrix(s2)
                                        - pr.gamma_matrix(s * s2)).max()))
            orth = max(orth, Automorphism(pr.algebra, pr.gamma_matrix(s)).killing_defect())
            sp = abs(s)
            expo = max(expo, float(np.abs(pr.gamma_matrix(sp) - expm(math.log(sp) * pr.ad_xi)).max()))
        report.add(f"homomorphism/{model.tag}", hom, 1e-10)
        report.add(f"killing-orthogonal/{model.tag}", orth, 1e-10)
        report.add(f"exponential/{model.tag}", expo, 1e-10)


def suite_circles(report, rng, cases: int = 50):
    from .circles import circle_point, circle_through, cross_ratio
    from .models import point_to_parabolic, random_triple
    for model in _pair_models():
        worst = 0.0
        for _ in range(cases):
            p0, p1, pinf = (point_to_parabolic(pt) for pt in random_triple(model, rng))
            c = circle_through(p0, p1, pinf)
            t = float(rng.uniform(-3.0, 3.0))
            worst = max(worst, abs(float(cross_ratio(p1, pinf, circle_point(c, t), p0)) - t))
        report.add(f"cross-ratio/{model.tag}", worst, 1e-9)


def suite_net(rng=None):
    """10x10 conformal(2,1) net close to a timelike lattice with m ~ 81 (spacing 1/9).

    The Darboux recurrences below are well conditioned here; with rng the
    factorising function gets a small random modulation.
    """
    from .models import conformal
    from .nets import lattice_net
    k = np.arange(9)
    ph, pv = (0.0, 0.0) if rng is None else rng.uniform(0, 2 * np.pi, 2)
    return lattice_net(conformal(2, 1), 81 * (1 + 0.2 * np.sin(k + ph)), 81 * (1 + 0.2 * np.cos(k + pv)))


NET_SEEDS = ((0.5, -0.3, 0.1), (-0.4, 0.6, -0.05))


def net_seed(model, i: int):
    from .models import conformal_point, point_to_parabolic
    return point_to_parabolic(conformal_point(model, np.array(NET_SEEDS[i])))


def _seed_point(model, rng):
    from .models import point_to_parabolic, random_point
    return point_to_parabolic(random_point(model, rng))


def suite_net_flatness(report, rng):
    from .nets import net_flatness_residual
    net = suite_net(rng)
    for t in rng.uniform(-3.0, 3.0, 5):
        report.add(f"flatness/t={float(t)!r}", net_flatness_residual(net, float(t)), 1e-8)


def suite_net_darboux(report, rng):
    from .nets import darboux_edge_residual, net_darboux, net_distance, tetrahedron_residual
    net = suite_net(rng)
    m_hat = 2.5
    dual = net_darboux(net, m_hat, net_seed(net.model, 0))
    report.add("edge-cross-ratio", darboux_edge_residual(net, dual, m_hat), 1e-8)
    report.add("tetrahedron", tetrahedron_residual(net, dual, m_hat), 1e-8)
    back = net_darboux(dual, m_hat, net.at((0, 0)))
    report.add("involutivity", net_distance(back, net), 1e-7)


def suite_net_t_transform(report, rng):
    from .nets import net_invariant_residual, net_t_transform, t_transform_gauge_residual
    net = suite_net(rng)
    s = 0.4
    res = net_t_transform(net, s)
    report.add("factorising-m-minus-s", net_invariant_residual(res.net), 1e-8)
    for t in (0.1, -0.3, 2.0):
        report.add(f"gauge/t={t!r}", t_transform_gauge_residual(net, res, s, t), 1e-8)


def suite_net_consistency(report, rng):
    from .nets import net_3d_consistency
    net = suite_net(rng)
    out = net_3d_consistency(net, 2.0, 5.0, net_seed(net.model, 0), net_seed(net.model, 1))
    report.add("two-way", out["two_way"], 1e-7)
    report.add("pointwise-formula", out["pointwise_formula"], 1e-7)


def suite_cartan_rank(report, rng):
    from .errors import NotCartan
    from .models import conformal, rank_z, rp1
    from .transforms import conformal_cartan_subspace, rp1_cartan_subspace
    for model in (conformal(2, 1), conformal(3, 1), conformal(3, 0)):
        cs = conformal_cartan_subspace(model)
        report.add(f"dim-equals-rank/{model.tag}", abs(cs.dim - rank_z(model)), 0.0)
        try:
            conformal_cartan_subspace(model, dim=3)
            refused = 0.0
        except NotCartan:
            refused = 1.0
        report.add(f"three-dim-refused/{model.tag}", 1.0 - refused, 0.0)
    report.add("dim-equals-rank/rp1", abs(rp1_cartan_subspace().dim - rank_z(rp1())), 0.0)


def suite_kdv_backlund(report, rng):
    from .kdvlab import PeriodicGrid, backlund, lift_from_curvature, soliton
    grid = PeriodicGrid(40.0, 512)
    x0 = float(rng.uniform(-2.0, 2.0))
    base = grid.n // 2
    res = backlund(np.zeros(grid.n), grid, 1.0, -math.tanh(grid.x[base] - x0), base=base)
    report.add("backlund-from-zero", np.max(np.abs(res.p_hat - soliton(grid.x, 1.0, x0))), 1e-6)
    lift = lift_from_curvature(res.p_hat, grid, [1.0, 0.0], [0.0, 1.0], base=base)
    report.add("wronskian-drift", lift.wronskian_drift, 1e-8)


SUITES = {
    "algebra-core": suite_algebra_core,
    "grading-elements": suite_grading_elements,
    "gamma-homomorphism": suite_gamma_homomorphism,
    "circles": suite_circles,
    "net-flatness": suite_net_flatness,
    "net-darboux": suite_net_darboux,
    "net-t-transform": suite_net_t_transform,
    "net-consistency": suite_net_consistency,
    "cartan-rank": suite_cartan_rank,
    "kdv-backlund": suite_kdv_backlund,
}


def run_suite(name: str, seed: int) -> RunReport:
    if name not in SUITES:
        raise UsageError(f"unknown suite {name!r}; known: {', '.join(SUITES)}")
    report = RunReport(suite=name, seed=seed)
    start = time.perf_counter()
    SUITES[name](report, np.random.default_rng(seed))
    report.wall_time = time.perf_counter() - start
    return report


def cmd_verify(args) -> int:
    if args.list:
        print("\n".join(SUITES))
        return 0
    if not args.suite:
        raise UsageError("--suite is required")
    report = run_suite(args.suite, args.seed)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(report.to_json())
    for c in report.cases:
        print(f"{'PASS' if c['pass'] else 'FAIL'} {c['name']} residual={c['residual']:.3e} "
              f"tol={c['tolerance']:.1e}")
    return 0 if report.passed else 1


# nets

def parse_size(text: str):
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"size must look like 10x10, got {text!r}") from None
    if w < 2 or h < 2:
        raise UsageError("net size needs at least 2 vertices per side")
    return w, h


def parse_floats(text: str, count: int | None = None):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"cannot parse numbers from {text!r}") from None
    if count is not None and len(vals) != count:
        raise UsageError(f"expected {count} comma-separated numbers, got {text!r}")
    if not all(math.isfinite(v) for v in vals):
        raise UsageError("numbers must be finite")
    return vals


def parse_model(tag: str):
    from .errors import UnsupportedModel
    from .models import model_from_tag
    try:
        return model_from_tag(tag)
    except (UnsupportedModel, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _edge_cross_ratios(net, dual):
    from .circles import cross_ratio
    out = []
    w, h = net.shape
    for a, b in net.vertices():
        for j in ((a + 1, b), (a, b + 1)):
            if j[0] < w and j[1] < h:
                cr = float(cross_ratio(net.at((a, b)), net.at(j), dual.at(j), dual.at((a, b))))
                out.append({"edge": [[a, b], list(j)], "cross_ratio": cr})
    return out


def cmd_net(args) -> int:
    from .models import conformal
    from .nets import lattice_net, net_darboux, net_t_transform, net_to_json, net_to_obj
    model = parse_model(args.model)
    w, h = parse_size(args.size)
    m_h, m_v = parse_floats(args.m, 2)
    if m_h == 0 or m_v == 0:
        raise UsageError("m values must be nonzero")
    darboux_m = parse_floats(args.darboux, 1)[0] if args.darboux is not None else None
    t_s = parse_floats(args.t_transform, 1)[0] if args.t_transform is not None else None
    rng = np.random.default_rng(args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    net = lattice_net(model, [m_h] * (w - 1), [m_v] * (h - 1))
    chain = [{"step": "lattice", "m_horizontal": m_h, "m_vertical": m_v}]
    if t_s is not None:
        net = net_t_transform(net, t_s).net
        chain.append({"step": "t_transform", "s": t_s})
    meta = {"seed": args.seed, "transforms": chain}
    written = [out]
    out.write_text(net_to_json(net, _metadata(**meta)))
    if model is conformal(3, 1):
        obj = out.with_suffix(".obj")
        obj.write_text(net_to_obj(net))
        written.append(obj)
    if darboux_m is not None:
        seed = _seed_point(model, rng)
        dual = net_darboux(net, darboux_m, seed)
        dmeta = dict(meta, transforms=chain + [{"step": "darboux", "m_hat": darboux_m}],
                     edge_cross_ratios=_edge_cross_ratios(net, dual),
                     wall_time=time.perf_counter() - start)
        dpath = out.with_name(out.stem + ".darboux.json")
        dpath.write_text(net_to_json(dual, _metadata(**dmeta)))
        written.append(dpath)
    for p in written:
        print(p)
    return 0


# KdV

KDV_DEFAULT_T = {"soliton": 1.0, "backlund-from-zero": 0.1, "miura-check": 0.05, "custom": 0.1}


def _read_custom(path: str, length: float):
    from .kdvlab import PeriodicGrid
    try:
        data = np.loadtxt(path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None
    p = data[:, -1]
    return PeriodicGrid(length, p.size), p


def cmd_kdv(args) -> int:
    from .kdvlab import (FlowConfig, PeriodicGrid, backlund, evolve, miura, miura_refinement,
                         series_to_csv, soliton, soliton_center)
    scenario = args.scenario
    custom = None
    if scenario.startswith("custom:"):
        scenario, custom = "custom", scenario.split(":", 1)[1]
    if scenario not in KDV_DEFAULT_T:
        raise UsageError(f"unknown scenario {args.scenario!r}")
    if args.n < 16 or not args.length > 0 or args.mhat == 0:
        raise UsageError("need n >= 16, L > 0 and mhat != 0")
    t_end = KDV_DEFAULT_T[scenario] if args.T is None else args.T
    if not t_end > 0:
        raise UsageError("T must be positive")
    if custom is not None:
        grid, p0 = _read_custom(custom, args.length)
    else:
        grid = PeriodicGrid(args.length, args.n)
    bound = FlowConfig.stability_bound(grid, args.scheme)
    if args.dt is None:
        config = FlowConfig.for_time(grid, t_end, scheme=args.scheme)
    else:
        if not args.dt > 0:
            raise UsageError("dt must be positive")
        if args.dt > bound:
            print(f"warning: dt = {args.dt!r} exceeds the {args.scheme} stability bound {bound!r}",
                  file=sys.stderr)
        config = FlowConfig(dt=args.dt, steps=max(1, round(t_end / args.dt)))
    frames = args.frames
    config = FlowConfig(dt=config.dt, steps=config.steps, scheme=args.scheme,
                        save_every=max(1, config.steps // max(1, frames)))
    m_hat, x = args.mhat, grid.x
    summary = {"scenario": args.scenario, "n": grid.n, "L": grid.length, "dt": config.dt,
               "steps": config.steps, "scheme": config.scheme, "m_hat": m_hat}
    start = time.perf_counter()
    try:
        if scenario == "soliton":
            series = evolve(grid, config, "kdv", p0=soliton(x, m_hat, args.center))
            t_run = series.times[-1]
            summary["measured_speed"] = (soliton_center(series.p[-1], grid)
                                         - soliton_center(series.p[0], grid)) / t_run
        elif scenario == "backlund-from-zero":
            base = grid.n // 2
            r = math.sqrt(abs(m_hat))
            a0 = -r * math.tanh(r * (x[base] - args.center))
            res = backlund(np.zeros(grid.n), grid, m_hat, a0, base=base)
            summary["soliton_sup_error"] = float(np.max(np.abs(res.p_hat - soliton(x, m_hat, args.center))))
            series = evolve(grid, config, "coupled", p0=np.zeros(grid.n), a0=res.a, m_hat=m_hat)
        elif scenario == "miura-check":
            a_init = lambda xx: 0.6 + 0.4 * np.sin(2 * np.pi * xx / grid.length)
            errs, ratios = miura_refinement(a_init, m_hat, t_end, grid.length,
                                            [grid.n // 2, grid.n], scheme="fd2")
            summary["sup_differences"] = errs
            summary["refinement_ratio"] = ratios[-1]
            series = evolve(grid, config, "mkdv", a0=a_init(x), m_hat=m_hat)
        else:
            series = evolve(grid, config, "kdv", p0=p0)
    except Instability as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    summary["conserved_drift"] = series.drift
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = scenario.replace("-", "_")
    (out / f"{stem}.csv").write_text(series_to_csv(series))
    meta_doc = dict(summary, seed=args.seed,
                    metadata=_metadata(wall_time=time.perf_counter() - start))
    (out / f"{stem}.json").write_text(dumps(meta_doc))
    for key in sorted(summary):
        print(f"{key}: {summary[key]}")
    return 0


# cross-ratio calculator

def _parse_point(model, text: str):
    from .models import conformal_point, point_to_parabolic, rp1_point
    if model.kind == "grassmannian" and model.params == (1, 2):
        v = math.inf if text.strip().lower() in ("inf", "infinity") else parse_floats(text, 1)[0]
        return point_to_parabolic(rp1_point(v))
    if model.kind != "conformal":
        raise UsageError("the calculator takes conformal models or rp1")
    coords = parse_floats(text, sum(model.params))
    return point_to_parabolic(conformal_point(model, np.array(coords)))


def cmd_cross_ratio(args) -> int:
    from .circles import cross_ratio
    model = parse_model(args.model)
    if len(args.points) != 4:
        raise UsageError("give exactly four points")
    pts = [_parse_point(model, t) for t in args.points]
    print(repr(float(cross_ratio(*pts))))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rspace", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("--suite")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out")
    v.add_argument("--list", action="store_true", help="list the suites")
    v.set_defaults(func=cmd_verify)

    n = sub.add_parser("net", help="build a discrete isothermic net")
    n.add_argument("--model", required=True)
    n.add_argument("--size", required=True)
    n.add_argument("--m", required=True, help="horizontal,vertical factorising values")
    n.add_argument("--darboux", help="also write the Darboux transform with this parameter")
    n.add_argument("--t-transform", dest="t_transform", help="apply the T-transform with this s")
    n.add_argument("--seed", type=int, default=0)
    n.add_argument("--out", required=True)
    n.set_defaults(func=cmd_net)

    k = sub.add_parser("kdv", help="KdV / mKdV experiments")
    k.add_argument("--scenario", required=True,
                   help="soliton, miura-check, backlund-from-zero or custom:FILE")
    k.add_argument("--mhat", type=float, default=1.0)
    k.add_argument("--n", type=int, default=512)
    k.add_argument("--L", dest="length", type=float, default=40.0)
    k.add_argument("--dt", type=float)
    k.add_argument("--T", type=float)
    k.add_argument("--center", type=float, default=0.0)
    k.add_argument("--scheme", choices=("fd4", "fd2", "spectral"), default="fd4")
    k.add_argument("--frames", type=int, default=10, help="number of saved frames after the first")
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--out", required=True)
    k.set_defaults(func=cmd_kdv)

    c = sub.add_parser("cross-ratio", help="cross-ratio of four points")
    c.add_argument("--model", required=True)
    c.add_argument("points", nargs="+")
    c.set_defaults(func=cmd_cross_ratio)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    env_tol = os.environ.get("RSPACE_TOL")
    if env_tol:
        try:
            if not float(env_tol) > 0:
                raise ValueError
        except ValueError:
            print(f"error: RSPACE_TOL must be a positive number, got {env_tol!r}", file=sys.stderr)
            return 2
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RSpaceError as exc:
        where = getattr(exc, "location", None)
        suffix = f" (at {where})" if where is not None else ""
        print(f"error: {type(exc).__name__}: {exc}{suffix}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
