"""Gamma-convergence sweeps and the zero-energy torus baseline.

Every row is computed independently; a failing stage is recorded in the
row's ``error`` field and the sweep moves on. CSV tables hold numbers only
(runtimes go to the manifest) so that repeated runs are byte-identical.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import platform
import time
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .. import __version__
from ..energy import (alignment_defect, energy_from_parts, family_energy, limit_energy_tube,
                      lower_bound_terms, pair_convergence_gap, richardson_constant, tube_quadrature,
                      upper_bound_report)
from ..geometry import DomainDistance, rasterize, rasterize_rectangle
from ..linefield import canonical_field, limit_energy
from ..pattern import (extract_interfaces, jump_measure, perimeter, straight_stripes, stripe_family,
                       stripe_recovery)
from ..transport import (approx_d1, discrete_map_plan, dual_potential, exact_d1,
                         extract_rays, ray_cost_lower_bound, stripe_transport_map)
from ..transport.entropic import DENSE_CAP
from .config import StudyConfig, TorusConfig

__all__ = ["StudyRow", "StudyResult", "BaselineRow", "run_gamma_study", "run_baseline_torus", "BaselineError",
           "write_rows_csv", "reference_energy"]

log = logging.getLogger(__name__)


class BaselineError(AssertionError):
    """The torus baseline exceeded its zero-energy tolerance."""


def _nan():
    return float("nan")


@dataclass
class StudyRow:
    """One eps of a sweep. Columns left at NaN were not computed for this row."""

    N: int
    eps: float
    h: float
    atoms: int = -1
    perimeter_term: float = field(default_factory=_nan)
    transport_term: float = field(default_factory=_nan)
    d_source: str = "upper-bound-map"
    F: float = field(default_factory=_nan)
    G: float = field(default_factory=_nan)
    G0: float = field(default_factory=_nan)
    abs_err: float = field(default_factory=_nan)
    upper_total: float = field(default_factory=_nan)
    upper_mu_tilde: float = field(default_factory=_nan)
    upper_residual: float = field(default_factory=_nan)
    map_gap_per_eps3: float = field(default_factory=_nan)
    D_k: float = field(default_factory=_nan)
    weak_gap: float = field(default_factory=_nan)
    strong_gap: float = field(default_factory=_nan)
    d_exact: float = field(default_factory=_nan)
    exact_rel_gap: float = field(default_factory=_nan)
    F_exact: float = field(default_factory=_nan)
    G_exact: float = field(default_factory=_nan)
    d_map_raster: float = field(default_factory=_nan)
    F_upper_raster: float = field(default_factory=_nan)
    d_lower: float = field(default_factory=_nan)
    d_upper: float = field(default_factory=_nan)
    lb_T1: float = field(default_factory=_nan)
    lb_T2: float = field(default_factory=_nan)
    lb_T3: float = field(default_factory=_nan)
    lb_sum: float = field(default_factory=_nan)
    lb_basic: float = field(default_factory=_nan)
    excluded_fraction: float = field(default_factory=_nan)
    ray_cost_lb: float = field(default_factory=_nan)
    error: str = ""

    @classmethod
    def columns(cls) -> list:
        return [f.name for f in fields(cls)]

    def values(self) -> list:
        return [getattr(self, c) for c in self.columns()]


@dataclass
class StudyResult:
    rows: list
    manifest: dict
    files: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    return "nan" if math.isnan(v) else "%.12g" % v


def write_rows_csv(rows, path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = type(rows[0]).columns() if rows else StudyRow.columns()
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(v) for v in r.values()])
    Path(path).write_text(buf.getvalue())


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _versions() -> dict:
    import matplotlib
    import numba
    import scipy

    return {"artifact": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__, "matplotlib": matplotlib.__version__}


def reference_energy(cfg: StudyConfig) -> dict:
    """``G0`` of the canonical field: tube quadrature, and the grid value at ``limit_h``."""
    dom = cfg.domain()
    out = {"tube": limit_energy_tube(dom)}
    if cfg.limit_h and cfg.limit_h > 0:
        grid = rasterize(dom, cfg.limit_h)
        out["grid"] = float(limit_energy(canonical_field(dom, grid), check=False))
        out["grid_h"] = cfg.limit_h
    return out


def _eps_to_n(cfg: StudyConfig, eps: float) -> int:
    return int(round(cfg.half_width / (2.0 * eps)))


def _raster_stage(row: StudyRow, cfg: StudyConfig, dom, family_eps, timings: dict) -> None:
    """Exact transport, raster upper bound and lower-bound terms on the recovery pattern."""
    t0 = time.perf_counter()
    fam, pat = stripe_recovery(dom, row.eps, row.h, samples=cfg.samples)
    row.atoms = pat.u_count
    timings["recovery"] = time.perf_counter() - t0
    use_exact = cfg.d_solver in ("auto", "exact") and pat.u_count <= cfg.exact_cap
    per_cont = perimeter(fam.interface_set())
    area = pat.grid.mask_area
    if not use_exact:
        if cfg.d_solver == "upper":
            return
        # escalation: bracket on the raster when the dense solver can hold it
        if pat.u_count <= DENSE_CAP:
            t0 = time.perf_counter()
            (lo, hi), _ = approx_d1(pat, reg=0.5)
            row.d_lower, row.d_upper = lo, hi
            timings["bracket"] = time.perf_counter() - t0
        return
    t0 = time.perf_counter()
    d, plan = exact_d1(pat, cap=cfg.exact_cap)
    timings["exact"] = time.perf_counter() - t0
    row.d_exact = d
    row.exact_rel_gap = float(plan.stats.get("gap", float("nan")))
    ex = energy_from_parts(row.eps, per_cont, d, area, "exact")
    row.F_exact, row.G_exact = ex.F, ex.G
    t0 = time.perf_counter()
    mp = discrete_map_plan(fam, pat)
    row.d_map_raster = mp.cost
    row.F_upper_raster = energy_from_parts(row.eps, per_cont, mp.cost, area, "upper-bound-map").F
    timings["map_plan"] = time.perf_counter() - t0
    if cfg.rays:
        t0 = time.perf_counter()
        pot = dual_potential(plan)
        iset = extract_interfaces(pat, sigma=1.0)
        rays = extract_rays(pot, iset, plan, row.eps, row.h)
        lb = lower_bound_terms(rays)
        tot = lb.totals()
        row.lb_T1, row.lb_T2, row.lb_T3 = tot["T1"], tot["T2"], tot["T3"]
        row.lb_sum, row.lb_basic = tot["sum"], tot["basic"]
        row.excluded_fraction = lb.excluded_fraction
        row.ray_cost_lb = ray_cost_lower_bound(rays)
        timings["rays"] = time.perf_counter() - t0


def _row(cfg: StudyConfig, eps: float, G0: float, dom, dd, quad, timings: dict) -> StudyRow:
    row = StudyRow(N=_eps_to_n(cfg, eps), eps=eps, h=cfg.h_for(eps), G0=G0)
    try:
        t0 = time.perf_counter()
        fam = stripe_family(dd, eps, cfg.samples)
        rep = family_energy(fam)
        row.perimeter_term, row.transport_term = rep.perimeter_term, rep.transport_term
        row.F, row.G = rep.F, rep.G
        row.abs_err = abs(rep.G - G0)
        ub = upper_bound_report(fam)
        row.upper_total, row.upper_mu_tilde = ub.total, ub.mu_tilde_form
        row.upper_residual = rep.G - ub.total
        mp, _ = stripe_transport_map(fam)
        row.map_gap_per_eps3 = mp.max_cost_gap_per_length() / eps ** 3
        jm = jump_measure(fam.interface_set(), eps)
        row.D_k = alignment_defect(jm, cfg.defect_k).value
        row.weak_gap, row.strong_gap = pair_convergence_gap(jm, quad)
        timings["continuum"] = time.perf_counter() - t0
        if cfg.d_solver != "upper":
            _raster_stage(row, cfg, dom, eps, timings)
    except Exception as exc:  # recorded per row, the sweep continues
        log.warning("row eps=%g failed: %s", eps, exc)
        row.error = f"{type(exc).__name__}: {exc}".replace("\n", " ")
    return row


def _plot(rows, G0: float, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "stripelab"
    eps = np.array([r.eps for r in rows])
    G = np.array([r.G for r in rows])
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(eps, G, "o-", label="G (stripe map)")
    ge = np.array([r.G_exact for r in rows])
    if np.any(np.isfinite(ge)):
        ax.plot(eps, ge, "s", label="G (exact d)")
    ax.axhline(G0, color="k", lw=0.8, ls="--", label="G0")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("eps")
    ax.set_ylabel("G")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def run_gamma_study(cfg: StudyConfig, out_dir: Optional[str] = None, plot: bool = True) -> StudyResult:
    """Sweep the eps schedule on the configured tube and write CSV, manifest and plot."""
    cfg.validate()
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t_start = time.perf_counter()
    dom = cfg.domain()
    dd = DomainDistance(dom, "inner")
    ref = reference_energy(cfg)
    G0 = ref["tube"]
    quad = tube_quadrature(dd, *cfg.tube_samples)
    rows, timings = [], {}
    for eps in cfg.eps_values:
        tm = {}
        rows.append(_row(cfg, eps, G0, dom, dd, quad, tm))
        timings[_fmt(eps)] = tm
        log.info("eps=%g G=%.6g %s", eps, rows[-1].G, rows[-1].error)
    files = {}
    csv_path = out / "study.csv"
    write_rows_csv(rows, csv_path)
    files["study.csv"] = csv_path
    if plot:
        svg = out / "G_vs_eps.svg"
        _plot(rows, G0, svg)
        files["G_vs_eps.svg"] = svg
    ok = [r for r in rows if np.isfinite(r.upper_residual)]
    rich = richardson_constant([r.eps for r in ok], [r.upper_residual for r in ok]) if len(ok) >= 2 else None
    manifest = {
        "kind": "gamma_study",
        "config": cfg.to_dict(),
        "config_sha256": cfg.digest(),
        "versions": _versions(),
        "reference": ref,
        "upper_bound_constant": rich,
        "timings_s": timings,
        "total_time_s": time.perf_counter() - t_start,
        "files": {k: _sha256(p) for k, p in files.items()},
    }
    mpath = out / "manifest.json"
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=float))
    files["manifest.json"] = mpath
    return StudyResult(rows, manifest, files)


# torus baseline

@dataclass
class BaselineRow:
    eps: float
    period: float
    h: float
    angle_deg: float
    width: float
    height: float
    atoms: int
    perimeter_term: float
    transport_term: float
    F: float
    G: float
    area: float
    rel_gap: float

    @classmethod
    def columns(cls) -> list:
        return [f.name for f in fields(cls)]

    def values(self) -> list:
        return [getattr(self, c) for c in self.columns()]


def run_baseline_torus(tc: TorusConfig, cap: int = 20000, check: bool = True) -> BaselineRow:
    """Exact energy of straight periodic stripes of period ``4 eps * period_factor``.

    With ``check`` a ``|G| > tol_zero`` result raises :class:`BaselineError`
    (only meaningful for the optimal period).
    """
    ang = math.radians(tc.angle_deg)
    p = straight_stripes((0.0, 0.0, tc.width, tc.height), tc.period, tc.eps, tc.h, angle=ang)
    if p.u_count != p.v_count:
        raise BaselineError(f"unbalanced stripes: {p.u_count} vs {p.v_count}")
    d, plan = exact_d1(p, cap=cap)
    per = perimeter(extract_interfaces(p, sigma=0.0))
    rep = energy_from_parts(tc.eps, per, d, tc.width * tc.height, "exact")
    row = BaselineRow(tc.eps, tc.period, tc.h, tc.angle_deg, tc.width, tc.height, p.u_count,
                      rep.perimeter_term, rep.transport_term, rep.F, rep.G, rep.area,
                      float(plan.stats.get("gap", float("nan"))))
    if check and abs(row.G) > tc.tol_zero:
        raise BaselineError(f"|G| = {abs(row.G):.4g} exceeds tol_zero = {tc.tol_zero:g}")
    return row
