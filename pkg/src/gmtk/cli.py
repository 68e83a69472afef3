"""Batch command-line front end.

Exit status: 0 on success, 1 on invalid input or parameters, 2 when an
internal invariant check fails.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import carleson, choquet, content, cubes, fractals, martingale, metric
from .errors import InvariantError, ValidationError
from .report import dumps_json, emit_plot, envelope, rows_to_csv, write_text


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


# ---------------------------------------------------------------- flag types

def _unit(name):
    def conv(text):
        try:
            v = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be a number, got {text!r}")
        if not 0 < v < 1:
            raise argparse.ArgumentTypeError(f"{name} must lie in (0, 1), got {v}")
        return v
    return conv


def _at_least_one(text):
    v = float(text)
    if not v >= 1:
        raise argparse.ArgumentTypeError(f"--A must be >= 1, got {v}")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be an integer >= 1, got {v}")
    return v


def _positive(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {v}")
    return v


def _int_list(text):
    try:
        out = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError(f"entries must be integers >= 1, got {text!r}")
    return out


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--out", default=None, help="report path (default: stdout)")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--dat", default=None, metavar="STEM",
                        help="write two-column plot data files STEM_<name>_<series>.dat")
    common.add_argument("--plot", action="store_true", help="also render PNGs next to the .dat files")
    common.add_argument("--threads", type=_positive_int, default=None,
                        help="worker cap (default: $GMT_THREADS or 1)")

    p = _Parser(prog="gmtk", description="Hausdorff content, Carleson packing and cube experiments.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", parents=[common], help="generate a test set as a point cloud")
    g.add_argument("--kind", required=True, choices=fractals.KINDS)
    g.add_argument("--n", type=_positive_int, default=None, help="depth (alias of --depth)")
    g.add_argument("--depth", type=_positive_int, default=None)
    g.add_argument("--lam", default="1/3")
    g.add_argument("--h", type=_positive, default=None)
    g.add_argument("--points", type=_positive_int, default=None)

    def with_in(name, help_):
        q = sub.add_parser(name, parents=[common], help=help_)
        q.add_argument("--in", dest="input", required=True, help="point cloud JSON")
        q.add_argument("--s", type=float, default=None)
        return q

    n = with_in("net", "nested or independent net hierarchy")
    n.add_argument("--n-min", type=int, default=0)
    n.add_argument("--n-max", type=int, default=None)
    n.add_argument("--nested", action="store_true")
    n.add_argument("--seed", type=int, default=None)

    c = with_in("cubes", "Schul or Christ-David cubes with the axiom check")
    c.add_argument("--kind", choices=("schul", "christ-david"), default="schul")
    c.add_argument("--M", type=float, default=16)
    c.add_argument("--c", type=_positive, default=2.0**-5)
    c.add_argument("--K", type=_positive, default=1.0)

    k = with_in("classify", "label Schul cubes G / B1 / B2")
    k.add_argument("--A", type=_at_least_one, default=1.0)
    k.add_argument("--eps", type=_unit("--eps"), required=True)
    k.add_argument("--rho", type=_unit("--rho"), required=True)
    k.add_argument("--M", type=float, default=16)
    k.add_argument("--c", type=_positive, default=2.0**-5)

    cn = sub.add_parser("carleson", parents=[common], help="truncated Carleson norm of the WLD-bad pairs")
    cn.add_argument("mode", nargs="?", choices=("norm", "counterexample"), default="norm")
    cn.add_argument("--in", dest="input", default=None)
    cn.add_argument("--s", type=float, default=None)
    cn.add_argument("--eps", type=_unit("--eps"), default=0.2)
    cn.add_argument("--r-min", type=_positive, default=None)
    cn.add_argument("--r-max", type=_positive, default=0.5)
    cn.add_argument("--x", type=float, default=0.5)
    cn.add_argument("--R", type=_positive, default=0.5)
    cn.add_argument("--n", type=_int_list, default=None)

    ce = sub.add_parser("counterexample", parents=[common], help="E_n scan of the truncated Carleson integral")
    ce.add_argument("--in", dest="input", default=None)
    ce.add_argument("--n", type=_int_list, default=None)
    ce.add_argument("--eps", type=_unit("--eps"), default=0.2)
    ce.add_argument("--x", type=float, default=0.5)
    ce.add_argument("--R", type=_positive, default=0.5)

    t = with_in("thm-main", "sum of r^s over high-content net balls")
    t.add_argument("--A", type=_at_least_one, default=1.0)
    t.add_argument("--eps", type=_unit("--eps"), required=True)
    t.add_argument("--rho", type=_unit("--rho"), required=True)
    t.add_argument("--bracket", action="store_true")

    w = with_in("weights", "weight martingales and the packing bound per cube family")
    w.add_argument("--A", type=_at_least_one, default=1.0)
    w.add_argument("--eps", type=_unit("--eps"), required=True)
    w.add_argument("--rho", type=_unit("--rho"), required=True)
    w.add_argument("--csv", default=None, help="weight-sequence CSV path")

    q = with_in("choquet-check", "Choquet integrals, quasi-subadditivity and separated additivity")
    q.add_argument("--f", required=True, help="simple function JSON {levels, carriers}")
    q.add_argument("--g", default=None)
    q.add_argument("--gamma", type=_unit("--gamma"), default=0.5)
    q.add_argument("--backend", choices=("mass", "greedy", "oracle", "interval"), default="mass")
    q.add_argument("--rho", type=_positive, default=None, help="cap; with it the separated additivity is checked")

    r = with_in("regularity", "empirical Ahlfors-regularity constant")
    r.add_argument("--radii", default=None, help="comma-separated radii")
    return p


# ---------------------------------------------------------------- helpers

def _load(path: str) -> metric.PointCloud:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise CliError(f"--in: cannot read {path}: {e.strerror}")
    try:
        return metric.PointCloud.from_json(text)
    except (ValueError, KeyError, TypeError) as e:
        raise CliError(f"--in: not a point cloud document: {e}")


def _emit(args, params: dict, result, csv_rows=None) -> None:
    if args.format == "csv":
        if csv_rows is None:
            raise CliError(f"--format: csv is not available for {args.command}")
        text = rows_to_csv(*csv_rows)
    else:
        text = dumps_json(envelope(args.command, params, result))
    write_text(args.out, text)


def _params(args) -> dict:
    d = {k: v for k, v in vars(args).items() if k not in ("out", "dat", "plot", "format")}
    d["threads"] = args.threads or int(os.environ.get("GMT_THREADS", "1") or 1)
    return d


# ---------------------------------------------------------------- commands

def cmd_gen(args) -> None:
    depth = args.depth or args.n
    params = {}
    if args.kind == "cantor":
        params["lam"] = Fraction(args.lam)
    if args.kind == "parallel_segments":
        if args.h is None:
            raise CliError("--h is required for parallel_segments")
        params["h"] = args.h
    if args.kind == "interval_grid":
        if args.points is None:
            raise CliError("--points is required for interval_grid")
        params["n_points"] = args.points
        depth = 1
    if depth is None:
        raise CliError("--depth (or --n) is required")
    cloud = fractals.generate_fractal(fractals.FractalSpec(args.kind, depth, params))
    if args.format == "csv":
        rows = [[i, *np.atleast_1d(p).tolist(), w] for i, (p, w) in enumerate(zip(cloud.points, cloud.weights))]
        write_text(args.out, rows_to_csv(["index"] + [f"x{d}" for d in range(cloud.dim)] + ["weight"], rows))
    else:
        write_text(args.out, cloud.to_json() + "\n")


def cmd_net(args) -> None:
    cloud = _load(args.input)
    H = metric.build_net_hierarchy(cloud, args.n_min, args.n_max, args.nested, args.seed)
    levels = []
    for n in H.levels():
        net = H.level(n)
        sep, maxi = metric.check_net(cloud, net)
        levels.append({"n": n, "separation": net.separation, "size": len(net),
                       "members": net.member_indices.tolist(), "separated": sep, "maximal": maxi})
        if not (sep and maxi):
            raise InvariantError(f"net at level {n} is not a maximal separated net")
    emit_plot(args.dat, "net", {"size": ([r["n"] for r in levels], [r["size"] for r in levels])},
              "n", "net size", args.plot, logy=True)
    _emit(args, _params(args), {"nested": H.nested, "levels": levels},
          (["n", "separation", "size"], [[r["n"], r["separation"], r["size"]] for r in levels]))


def cmd_cubes(args) -> None:
    cloud = _load(args.input)
    if args.kind == "schul":
        tree = cubes.build_schul_cubes(cloud, None, args.K, args.M, args.c)
    else:
        tree = cubes.build_christ_david_cubes(cloud, metric.build_net_hierarchy(cloud, 0, nested=True))
    rep = cubes.verify_cube_axioms(tree)
    if not rep.ok:
        raise InvariantError("; ".join(rep.violations[:3]))
    lv = tree.levels()
    counts = [len(tree.at_level(n)) for n in lv]
    emit_plot(args.dat, "cubes", {"count": (lv, counts)}, "level", "cubes", args.plot, logy=True)
    result = {"tree": tree.to_dict(), "axioms": {"ok": rep.ok, "checked_pairs": rep.checked_pairs,
                                                 "n_cubes": rep.n_cubes, "c0": rep.c0,
                                                 "outer_factor": rep.outer_factor}}
    _emit(args, _params(args), result,
          (["id", "level", "center", "size", "diam", "parent"],
           [[q.id, q.level, q.center, int(q.members.size), q.diam, "" if q.parent is None else q.parent]
            for q in tree.cubes]))


def cmd_classify(args) -> None:
    cloud = _load(args.input)
    tree = cubes.build_schul_cubes(cloud, None, 1.0, args.M, args.c)
    cls = carleson.classify_cubes(tree, cloud, args.A, args.eps, args.rho, args.s)
    by = {q.id: q for q in tree.cubes}
    counts = {lab: len(cls.ids(lab)) for lab in ("G", "B1", "B2", "B1∩B2")}
    _emit(args, _params(args), {"counts": counts, "labels": cls.labels},
          (["id", "level", "label"], [[q, by[q].level, lab] for q, lab in sorted(cls.labels.items())]))


def cmd_carleson(args) -> None:
    if args.mode == "counterexample":
        return cmd_counterexample(args)
    if args.input is None:
        raise CliError("--in is required")
    cloud = _load(args.input)
    s = cloud.s if args.s is None else args.s
    r_min = args.r_min if args.r_min is not None else max(2 * float(cloud.atom_diameters.max(initial=0)), 1e-6)
    grid = carleson.make_pair_grid(cloud, r_min, args.r_max)
    grid = carleson.wld_bad_pairs(cloud, args.eps, grid, s=s)
    center = np.full(cloud.dim, args.x) if cloud.points is not None else 0
    rep = carleson.carleson_norm(grid, cloud, s, r_min, args.r_max, witnesses=[(center, args.R)])
    frac = grid.flags.mean(axis=0) if grid.flags.size else np.zeros(0)
    emit_plot(args.dat, "flags", {"fraction": (grid.radii, frac)}, "r", "flagged fraction", args.plot, logx=True)
    _emit(args, _params(args), {"report": rep.to_dict(), "flagged": int(grid.flags.sum()),
                                "pairs": int(grid.flags.size)},
          (["r", "flagged_fraction"], [[float(r), float(f)] for r, f in zip(grid.radii, frac)]))


def _n_from_label(label: str) -> int | None:
    if label.startswith("E_"):
        try:
            return int(label[2:])
        except ValueError:
            return None
    return None


def cmd_counterexample(args) -> None:
    ns = args.n
    if ns is None and getattr(args, "input", None):
        n = _n_from_label(_load(args.input).label)
        if n is None:
            raise CliError("--in: the cloud is not an E_n set")
        ns = [n]
    if ns is None:
        ns = [4, 6, 8, 10]
    rows = carleson.counterexample_scan(ns, args.eps, args.R, args.x)
    emit_plot(args.dat, "counterexample",
              {"exact": ([r.n for r in rows], [r.exact for r in rows]),
               "sampled": ([r.n for r in rows], [r.sampled for r in rows])},
              "n", "truncated Carleson integral", args.plot)
    _emit(args, _params(args), {"rows": [r.to_dict() for r in rows]},
          (["n", "exact", "sampled", "all_flagged", "pairs"],
           [[r.n, r.exact, r.sampled, r.all_flagged, r.n_pairs] for r in rows]))


def cmd_thm_main(args) -> None:
    cloud = _load(args.input)
    res = carleson.theorem_main_sum(cloud, args.s, args.A, args.eps, args.rho, bracket=args.bracket)
    lv = sorted(res.per_level)
    emit_plot(args.dat, "thm_main", {"per_level": (lv, [res.per_level[n] for n in lv])},
              "n", "sum of r^s", args.plot)
    _emit(args, _params(args), res.to_dict(),
          (["n", "per_level"], [[n, res.per_level[n]] for n in lv]))


def cmd_weights(args) -> None:
    cloud = _load(args.input)
    s = cloud.s if args.s is None else args.s
    H = metric.build_net_hierarchy(cloud, 0)
    fam = cubes.thin_nets(cloud, H, args.A, args.eps, args.rho, s)
    fp = martingale.packing_over_families(cloud, fam, s, args.eps, args.rho)
    if not fp.ok:
        raise InvariantError("packing bound fails")
    if args.csv:
        parts = []
        for key in sorted(fp.reports):
            for t in sorted(fp.reports[key].sequences):
                text = fp.reports[key].sequences[t].to_csv()
                parts.append(text if not parts else text.split("\n", 1)[1])
        Path(args.csv).write_text("".join(parts) if parts else "cube_id,stage,cell_id,cell_mass,value\n")
    fams = sorted(fp.reports)
    emit_plot(args.dat, "weights", {"lhs": (list(range(len(fams))), [fp.reports[k].lhs for k in fams])},
              "family", "sum of diam^s", args.plot)
    result = {"N": fp.N, "J": fp.J, "alpha": fp.alpha, "mass": fp.mass, "total": fp.total,
              "bound": fp.bound, "ok": fp.ok,
              "families": {f"{i},{j}": r.to_dict() for (i, j), r in sorted(fp.reports.items())}}
    _emit(args, _params(args), result,
          (["i", "j", "selected", "lhs", "bound"],
           [[i, j, r.n_selected, r.lhs, r.bound] for (i, j), r in sorted(fp.reports.items())]))


def _backend(name: str, cloud, s, rho):
    cap = math.inf if rho is None else rho
    if name == "mass":
        return choquet.discrete_mass(cloud)
    if name == "greedy":
        return choquet.greedy_content(cloud, s, cap)
    if name == "interval":
        return choquet.interval_content(cloud, 1.0 if s is None else s, cap)
    depth = int(math.ceil(-math.log2(max(float(cloud.atom_diameters.max(initial=0)), 2.0**-20))))
    pool = content.dyadic_interval_pool(cloud, depth)
    return choquet.oracle_content(cloud, pool, s, cap)


def cmd_choquet(args) -> None:
    cloud = _load(args.input)
    mu = _backend(args.backend, cloud, args.s, args.rho)
    try:
        f = choquet.SimpleFunction.from_json(args.f)
        g = choquet.SimpleFunction.from_json(args.g) if args.g else None
    except (ValueError, KeyError, TypeError) as e:
        raise CliError(f"--f/--g: invalid simple function: {e}")
    result = {"integral_f": choquet.choquet_integral(f, mu)}
    if g is not None:
        rep = choquet.check_quasi_subadditivity(f, g, mu, args.gamma)
        if not rep.ok:
            raise InvariantError("quasi-subadditivity fails")
        result["quasi_subadditivity"] = {"lhs": float(rep.lhs), "rhs": float(rep.rhs), "slack": rep.slack}
    if args.rho is not None:
        add = choquet.check_separated_additivity(f, mu, cloud, args.rho)
        if not add.ok:
            raise InvariantError("separated additivity fails")
        result["separated_additivity"] = {"integral": add.integral, "weighted": add.weighted,
                                          "subsets": add.subsets_checked, "max_defect": add.max_defect}
    _emit(args, _params(args), result, (["key", "value"], [[k, str(v)] for k, v in result.items()]))


def cmd_regularity(args) -> None:
    cloud = _load(args.input)
    radii = [float(t) for t in args.radii.split(",")] if args.radii else None
    rep = fractals.check_ahlfors_regularity(cloud, args.s, radii)
    _emit(args, _params(args), rep, (["key", "value"], [[k, rep[k]] for k in ("C0", "worst_center", "worst_radius", "s")]))


COMMANDS = {"gen": cmd_gen, "net": cmd_net, "cubes": cmd_cubes, "classify": cmd_classify,
            "carleson": cmd_carleson, "counterexample": cmd_counterexample, "thm-main": cmd_thm_main,
            "weights": cmd_weights, "choquet-check": cmd_choquet, "regularity": cmd_regularity}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args)
    except (CliError, ValidationError) as e:
        print(f"gmtk: error: {e}".splitlines()[0], file=sys.stderr)
        return 1
    except (InvariantError, AssertionError) as e:
        print(f"gmtk: invariant violated: {e}".splitlines()[0], file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
