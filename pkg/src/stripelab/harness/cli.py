"""Command line entry point ``stripelab``.

Exit codes: 0 success, 1 numerical failure (a JSON error record is printed),
2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from ..pattern import ResonanceError

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _common(suppress: bool = False) -> argparse.ArgumentParser:
    # subcommand copies suppress defaults so flags given before the command survive
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS if suppress else None)
    p.add_argument("--config", metavar="PATH", help="study configuration file")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--h", type=float, help="grid spacing (default eps / h_ratio)")
    p.add_argument("--eps", type=str, help="stripe scale, e.g. 1/16 (default: first of the schedule)")
    p.add_argument("--exact-cap", type=int, help="atom cap of the exact transport solver")
    p.add_argument("--strict-k0", action="store_true", help="limit energy is inf outside the limit class")
    p.add_argument("--format", choices=("csv", "json"), help="stdout format (default json)")
    p.add_argument("--plot", action=argparse.BooleanOptionalAction, help="write SVG plots")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stripelab", parents=[_common()],
                                 description="Stripe patterns and their sharp-interface limit on tubes.")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, help_):
        return sub.add_parser(name, parents=[_common(suppress=True)], help=help_)

    add("gen", "write the recovery pattern for one eps (PGM + JSON)")
    src_help = "pattern file written by gen (PGM)"
    e = add("energy", "energy report of one pattern")
    e.add_argument("--pattern", metavar="PGM", help=src_help)
    e.add_argument("--recovery", action="store_true", help="use the recovery pattern of the config")
    e.add_argument("--d-source", choices=("exact", "upper-bound-map", "bracket"), default="exact")
    e.add_argument("--reg", type=float, default=0.5, help="entropic regularisation in grid units")
    e.add_argument("--sigma", type=float, default=1.0, help="pre-contour blur in cells")
    t = add("transport", "exact d_1 with potentials and transport rays")
    t.add_argument("--pattern", metavar="PGM", help=src_help)
    t.add_argument("--recovery", action="store_true", help="use the recovery pattern of the config")
    add("limit", "limit energy of the canonical line field")
    add("study", "Gamma-convergence sweep")
    b = add("baseline", "zero-energy check on straight periodic stripes")
    b.add_argument("--period-factor", type=float, help="period in units of 4 eps")
    b.add_argument("--angle", type=float, help="stripe normal angle in degrees")
    b.add_argument("--width", type=float)
    b.add_argument("--height", type=float)
    d = add("defect", "alignment defect and pair-convergence gaps of the recovery family")
    d.add_argument("--k", type=str, default=None, help="comma-separated mollifier scales")
    f = add("firstvar", "first variation of interface polylines")
    f.add_argument("--ngon", type=int, help="use a regular n-gon instead of the recovery interfaces")
    f.add_argument("--radius", type=float, default=0.9)
    return ap


# helpers

def _config(args):
    from .config import ConfigError, load_config

    over = {}
    if args.exact_cap is not None:
        over["exact_cap"] = args.exact_cap
    if args.out:
        over["out_dir"] = args.out
    try:
        return load_config(args.config, over)
    except (ConfigError, ResonanceError) as exc:
        raise UsageError(str(exc)) from exc


def _eps(args, cfg) -> float:
    from .config import eval_fraction

    if args.eps is None:
        return cfg.eps_values[0]
    try:
        e = eval_fraction(args.eps)
    except ValueError as exc:
        raise UsageError(f"bad --eps value {args.eps!r}") from exc
    q = cfg.half_width / (2 * e)
    if not e > 0 or abs(q - round(q)) > 1e-9 * max(1.0, q):
        raise UsageError(f"eps = {e!r} violates the resonance condition for half_width {cfg.half_width:g}")
    return e


def _h(args, cfg, eps) -> float:
    h = args.h if args.h is not None else cfg.h_for(eps)
    if h > eps / 4 + 1e-15:
        raise UsageError(f"h = {h:g} exceeds eps/4; at least 4 cells per half-stripe needed")
    return h


def _emit(args, record: dict) -> None:
    if args.format != "csv":
        print(json.dumps(record, indent=2, sort_keys=True, default=float))
        return
    flat = {k: v for k, v in record.items() if not isinstance(v, (dict, list, tuple))}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(flat))
    w.writerow([("%.12g" % v) if isinstance(v, float) else v for v in flat.values()])
    sys.stdout.write(buf.getvalue())


def _out_dir(args, cfg) -> Path:
    p = Path(args.out or cfg.out_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _pattern(args, cfg):
    """Pattern from ``--pattern`` or ``--recovery``; returns ``(pattern, family or None)``."""
    from ..pattern import load_pattern, stripe_recovery

    if getattr(args, "pattern", None):
        path = Path(args.pattern)
        if not path.exists():
            raise UsageError(f"pattern file not found: {path}")
        return load_pattern(path), None
    if getattr(args, "recovery", False):
        eps = _eps(args, cfg)
        fam, pat = stripe_recovery(cfg.domain(), eps, _h(args, cfg, eps), samples=cfg.samples)
        return pat, fam
    raise UsageError("no pattern source: pass --pattern PGM or --recovery")


# commands

def cmd_gen(args, cfg) -> int:
    from ..pattern import save_pattern, stripe_recovery

    eps = _eps(args, cfg)
    h = _h(args, cfg, eps)
    fam, pat = stripe_recovery(cfg.domain(), eps, h, samples=cfg.samples)
    out = _out_dir(args, cfg) / "pattern.pgm"
    save_pattern(pat, out)
    _emit(args, {"eps": eps, "h": h, "n_stripes": fam.n_stripes, "u_cells": pat.u_count,
                 "v_cells": pat.v_count, "flips": pat.meta.get("flips", 0), "file": str(out)})
    return EXIT_OK


def cmd_energy(args, cfg) -> int:
    from ..energy import family_energy, functional
    from ..transport import approx_d1

    pat, fam = _pattern(args, cfg)
    cap = args.exact_cap or max(cfg.exact_cap, 1)
    if args.d_source == "upper-bound-map":
        if fam is None:
            raise UsageError("the upper-bound map needs --recovery (a stripe family)")
        rep = family_energy(fam)
    elif args.d_source == "bracket":
        (lo, hi), _ = approx_d1(pat, reg=args.reg)
        rep = functional(pat, "bracket", d=(lo, hi), sigma=args.sigma)
    else:
        rep = functional(pat, "exact", sigma=args.sigma, cap=cap)
    _emit(args, rep.to_dict())
    return EXIT_OK


def cmd_transport(args, cfg) -> int:
    from ..pattern import extract_interfaces
    from ..transport import (dual_potential, exact_d1, extract_rays, save_plan_csv, save_potential_csv,
                             save_rays_csv)

    pat, _ = _pattern(args, cfg)
    cap = args.exact_cap or max(cfg.exact_cap, 1)
    d, plan = exact_d1(pat, cap=cap)
    pot = dual_potential(plan)
    out = _out_dir(args, cfg)
    save_plan_csv(plan, out / "plan.csv")
    save_potential_csv(pot, out / "potential.csv")
    rec = {"d": d, "relative_gap": pot.gap, "atoms": pat.u_count,
           "marginal_errors": list(map(float, plan.marginal_errors()))}
    if pat.periodic:
        rec["rays"] = "skipped on periodic patterns"
    else:
        rays = extract_rays(pot, extract_interfaces(pat, sigma=1.0), plan, pat.epsilon, pat.grid.h)
        save_rays_csv(rays, out / "rays.csv")
        rec["excluded_fraction"] = rays.excluded_fraction
        rec["ray_reasons"] = rays.reason_counts
    _emit(args, rec)
    return EXIT_OK


def cmd_limit(args, cfg) -> int:
    from ..energy import limit_energy_tube
    from ..geometry import rasterize
    from ..linefield import canonical_field, check_K0, limit_energy

    dom = cfg.domain()
    h = args.h if args.h is not None else cfg.limit_h
    field = canonical_field(dom, rasterize(dom, h))
    rep = check_K0(field)
    val, reason = limit_energy(field, strict=args.strict_k0, check=True, with_reason=True)
    _emit(args, {"G0": val, "G0_tube": limit_energy_tube(dom), "h": h, "in_limit_class": rep.ok,
                 "reason": reason or "", "residuals": rep.residuals})
    return EXIT_NUMERIC if math.isinf(val) else EXIT_OK


def cmd_study(args, cfg) -> int:
    from .study import run_gamma_study

    if args.eps is not None:
        cfg.eps_list = [_eps(args, cfg)]
    if args.h is not None:
        raise UsageError("study uses the h_ratio grid rule; set h_ratio in the config")
    res = run_gamma_study(cfg, args.out, plot=args.plot is not False)
    failed = [r for r in res.rows if r.error]
    rec = {"rows": len(res.rows), "failed": len(failed), "files": {k: str(v) for k, v in res.files.items()},
           "G": [r.G for r in res.rows], "G0": res.rows[0].G0 if res.rows else float("nan")}
    if args.format == "csv":
        sys.stdout.write(Path(res.files["study.csv"]).read_text())
    else:
        _emit(args, rec)
    return EXIT_NUMERIC if len(failed) == len(res.rows) else EXIT_OK


def cmd_baseline(args, cfg) -> int:
    from dataclasses import replace

    from .study import BaselineError, run_baseline_torus

    tc = cfg.torus
    upd = {}
    if args.eps is not None:
        from .config import eval_fraction

        upd["eps"] = eval_fraction(args.eps)
    if args.h is not None:
        upd["h_ratio"] = upd.get("eps", tc.eps) / args.h
    for key, val in (("period_factor", args.period_factor), ("angle_deg", args.angle),
                     ("width", args.width), ("height", args.height)):
        if val is not None:
            upd[key] = val
    tc = replace(tc, **upd)
    cap = args.exact_cap or 20000
    optimal = abs(tc.period_factor - 1.0) < 1e-12
    try:
        row = run_baseline_torus(tc, cap=cap, check=optimal)
    except BaselineError as exc:
        _error(exc)
        return EXIT_NUMERIC
    _emit(args, dict(zip(row.columns(), row.values())))
    return EXIT_OK


def cmd_defect(args, cfg) -> int:
    from ..energy import alignment_defect, pair_convergence_gap, tube_quadrature
    from ..geometry import DomainDistance
    from ..pattern import jump_measure, stripe_family
    from .config import parse_list

    dd = DomainDistance(cfg.domain(), "inner")
    ks = parse_list(args.k, int) if args.k else [cfg.defect_k]
    quad = tube_quadrature(dd, *cfg.tube_samples)
    eps_list = [_eps(args, cfg)] if args.eps else cfg.eps_values
    rows = []
    for eps in eps_list:
        jm = jump_measure(stripe_family(dd, eps, cfg.samples).interface_set(), eps)
        weak, strong = pair_convergence_gap(jm, quad)
        rec = {"eps": eps, "weak_gap": weak, "strong_gap": strong}
        for k in ks:
            rec[f"D_{k}"] = alignment_defect(jm, k).value
        rows.append(rec)
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(rows[0]))
        for r in rows:
            w.writerow(["%.12g" % v for v in r.values()])
        sys.stdout.write(buf.getvalue())
    else:
        print(json.dumps(rows, indent=2))
    return EXIT_OK


def cmd_firstvar(args, cfg) -> int:
    from ..energy import first_variation
    from ..geometry import DomainDistance
    from ..pattern import InterfaceCurve, InterfaceSet, stripe_family

    if args.ngon:
        a = 2 * np.pi * np.arange(args.ngon) / args.ngon
        v = args.radius * np.column_stack([np.cos(a), np.sin(a)])
        iset = InterfaceSet([InterfaceCurve(v)])
        eps = _eps(args, cfg) if args.eps else 1.0
    else:
        eps = _eps(args, cfg)
        iset = stripe_family(DomainDistance(cfg.domain(), "inner"), eps, cfg.samples).interface_set()
    rep = first_variation(iset, eps)
    Hn = np.concatenate([np.linalg.norm(H, axis=1) for H in rep.H])
    rec = rep.to_dict()
    rec.pop("sigma")
    rec.update(H_min=float(Hn.min()), H_max=float(Hn.max()))
    _emit(args, rec)
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "energy": cmd_energy, "transport": cmd_transport, "limit": cmd_limit,
            "study": cmd_study, "baseline": cmd_baseline, "defect": cmd_defect, "firstvar": cmd_firstvar}


def _error(exc, code: int = EXIT_NUMERIC) -> None:
    rec = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(rec, sort_keys=True))


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        _error(exc, EXIT_USAGE)
        return EXIT_USAGE
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        _error(exc, EXIT_NUMERIC)
        return EXIT_NUMERIC


def cli(argv=None) -> int:
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
