"""Acceptance checks with pinned tolerances; each prints one PASS/FAIL line."""
import math
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from stripelab.energy import first_variation
from stripelab.geometry import rasterize, rasterize_rectangle
from stripelab.harness import TorusConfig, load_config, run_baseline_torus, run_gamma_study
from stripelab.linefield import K0Tolerances, canonical_field, check_K0, divergence
from stripelab.pattern import BinaryPattern, InterfaceCurve, InterfaceSet, straight_stripes
from stripelab.transport import exact_d1, inverse_mass_values, mass_coordinate_values, solve_exact

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "annulus.cfg"
G0 = math.pi / 4 * math.log(5 / 3)


def _record(log, n, checks):
    ok = all(v for _, v in checks)
    detail = "; ".join(f"{name} {'ok' if v else 'FAILED'}" for name, v in checks)
    log.append((n, ok, detail))
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    failed = [name for name, v in checks if not v]
    assert not failed, failed


@pytest.fixture(scope="module")
def study(tmp_path_factory):
    cfg = load_config(str(CONFIG))
    out = tmp_path_factory.mktemp("study_a")
    return cfg, run_gamma_study(cfg, str(out))


def _rows(study):
    return {r.N: r for r in study[1].rows}


def test_criterion_1_gamma_limit(study, criterion_log):
    rows = _rows(study)
    err = [rows[n].abs_err for n in (2, 4, 8)]
    r2 = rows[2]
    runtime = study[1].manifest["total_time_s"]
    print(f"G = {[rows[n].G for n in (2, 4, 8)]}, G0 = {G0:.7f}, F_exact = {r2.F_exact:.6f}, "
          f"F_upper = {r2.F_upper_raster:.6f}, runtime {runtime:.0f} s")
    _record(criterion_log, 1, [
        ("no row errors", all(not r.error for r in rows.values())),
        ("|G - G0| decreasing", err[0] > err[1] > err[2]),
        (f"|G_1/64 - G0| = {err[2]:.3g} <= 0.15 G0", err[2] <= 0.15 * G0),
        ("exact d at N=2", np.isfinite(r2.F_exact)),
        ("F_exact <= F_upper", r2.F_exact <= r2.F_upper_raster),
        ("runtime <= 600 s", runtime <= 600),
    ])


def test_criterion_2_torus_baseline(criterion_log):
    row = run_baseline_torus(TorusConfig(eps=1 / 16, h_ratio=8), check=False)
    _record(criterion_log, 2, [(f"|G| = {abs(row.G):.3g} <= 0.05", abs(row.G) <= 0.05),
                               ("exact solve gap <= 1e-6", row.rel_gap <= 1e-6)])


def test_criterion_3_lower_bound(study, criterion_log):
    r = _rows(study)[2]
    rhs = r.G_exact + 0.1 * (1 + r.G_exact)
    print(f"T1 {r.lb_T1:.4f} T2 {r.lb_T2:.4f} T3 {r.lb_T3:.4f} sum {r.lb_sum:.4f}; G_exact {r.G_exact:.4f}")
    _record(criterion_log, 3, [
        (f"T1+T2+T3 = {r.lb_sum:.4f} <= {rhs:.4f}", r.lb_sum <= rhs),
        (f"excluded fraction {r.excluded_fraction:.3f} <= 0.2", r.excluded_fraction <= 0.2),
    ])


def test_criterion_4_upper_bound(study, criterion_log):
    rows = _rows(study)
    gaps = [rows[n].map_gap_per_eps3 for n in (2, 4)]
    tot8 = rows[8].upper_total
    _record(criterion_log, 4, [
        (f"map gap / eps^3 = {max(gaps):.3g} <= 5", max(gaps) <= 5),
        (f"upper total N=8 {tot8:.5f} within 10% of G0", abs(tot8 - G0) <= 0.1 * G0),
    ])


def test_criterion_5_transport_solver(criterion_log):
    rng = np.random.default_rng(2024)
    gaps, oracle_ok, marg = [], True, 0.0
    for n in (64, 512, 2048):
        x = rng.random((n, 2))
        y = rng.random((n, 2)) + 0.3
        plan = solve_exact(x, y, 1.0 / n, scale=0.05)
        gaps.append(plan.stats["gap"])
        marg = max(marg, *plan.marginal_errors())
        if n <= 512:
            C = cdist(x, y)
            r, c = linear_sum_assignment(C)
            oracle_ok &= abs(plan.cost - C[r, c].sum() / n) <= 1e-9 * plan.cost
    g = rasterize_rectangle(0, 0, 2, 1, 0.05)
    X, _ = g.cell_centers()
    d_rect, plan = exact_d1(BinaryPattern(g, X < 1, 0.05))
    gaps.append(plan.stats["gap"])
    marg = max(marg, *plan.marginal_errors())
    p = straight_stripes((0, 0, 1, 1), 0.25, 1 / 16, 1 / 64)
    d_strip, plan = exact_d1(p)
    gaps.append(plan.stats["gap"])
    oracle = 4 * 0.25 ** 2 / 8
    _record(criterion_log, 5, [
        (f"duality gap {max(gaps):.2g} <= 1e-6", max(gaps) <= 1e-6),
        (f"marginals {marg:.2g} <= 1e-9", marg <= 1e-9),
        ("assignment oracle", bool(oracle_ok)),
        (f"two rectangles d = {d_rect:.4f}", abs(d_rect - 1) <= 0.01),
        (f"stripe CDF oracle d = {d_strip:.5f} vs {oracle:.5f}", abs(d_strip - oracle) <= 0.01 * oracle),
    ])


def test_criterion_6_mass_chart(criterion_log):
    rng = np.random.default_rng(7)
    n = 1000
    sb = rng.uniform(0.05, 1.0, n)
    ap = rng.uniform(-20.0, 20.0, n)
    ap[::10] = 0.0
    tmax = np.where(ap > 0, np.minimum(0.5, sb / np.where(ap > 0, ap, 1.0)), 0.5)
    t = rng.uniform(0.0, 0.99, n) * tmax
    back = inverse_mass_values(mass_coordinate_values(t, sb, ap), sb, ap)
    err = float(np.max(np.abs(back - t)))
    err0 = float(np.max(np.abs(back[ap == 0] - t[ap == 0])))
    _record(criterion_log, 6, [(f"roundtrip {err:.2g} <= 1e-10", err <= 1e-10),
                               (f"linear branch {err0:.2g}", err0 <= 1e-10 and (ap == 0).sum() == 100)])


def test_criterion_7_line_field(annulus, criterion_log):
    tol = K0Tolerances()
    reps = {}
    for h in (0.01, 0.005):
        field = canonical_field(annulus, rasterize(annulus, h))
        reps[h] = (field, check_K0(field, tol))
    field, rep = reps[0.005]
    res = rep.residuals
    alg = max(res["idempotent"], res["rank"], res["symmetric"])
    g = field.grid
    dv = divergence(field)
    pts = g.inside_points()
    r = np.linalg.norm(pts, axis=1)
    inner = (np.abs(r - 1) < 0.25 - 3 * g.h) & dv.valid[g.mask]
    rel = float(np.max(np.abs(dv.magnitude()[g.mask][inner] * r[inner] - 1)))
    pdp = [reps[h][1].residuals["p_div_p"] for h in (0.01, 0.005)]
    trace_ok = all(reps[h][1].residuals["boundary_trace"] <= tol.trace_c * h for h in reps)
    _record(criterion_log, 7, [
        ("all five checks at h=0.005", rep.ok),
        (f"algebraic {alg:.2g} <= 1e-9", alg <= 1e-9),
        (f"|div P| r - 1 = {rel:.3g} <= 2%", rel <= 0.02),
        (f"P div P {pdp[0]:.3g} -> {pdp[1]:.3g}", pdp[1] < pdp[0]),
        ("trace <= C h at two h", trace_ok),
    ])


def test_criterion_8_first_variation(criterion_log):
    a = 2 * np.pi * np.arange(1000) / 1000
    v = 0.9 * np.column_stack([np.cos(a), np.sin(a)])
    rep = first_variation(InterfaceSet([InterfaceCurve(v)]), 1.0)
    Hn = np.linalg.norm(rep.H[0], axis=1)
    dev = float(np.max(np.abs(Hn - 1 / 0.9)))
    _record(criterion_log, 8, [(f"|H| - 1/0.9 = {dev:.2g} <= 1e-3", dev <= 1e-3),
                               (f"tangential {rep.max_tangential:.2g} <= 1e-9", rep.max_tangential <= 1e-9),
                               (f"closedness {rep.max_closedness:.2g} <= 1e-9", rep.max_closedness <= 1e-9)])


def test_criterion_9_diagnostics(study, criterion_log):
    rows = _rows(study)
    checks = []
    for name in ("D_k", "weak_gap", "strong_gap"):
        vals = [getattr(rows[n], name) for n in (2, 4, 8)]
        ratios = [vals[1] / vals[0], vals[2] / vals[1]]
        checks.append((f"{name} ratios {ratios[0]:.3f}, {ratios[1]:.3f} <= 0.8", max(ratios) <= 0.8))
    _record(criterion_log, 9, checks)


def test_criterion_10_reproducible(study, tmp_path, criterion_log):
    cfg, first = study
    again = run_gamma_study(cfg, str(tmp_path / "again"))
    same = first.files["study.csv"].read_bytes() == again.files["study.csv"].read_bytes()
    _record(criterion_log, 10, [("byte-identical study.csv", same)])
