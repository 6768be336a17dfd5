"""Energies, lower/upper-bound decompositions and convergence diagnostics.

``F = eps * Per(u) + d_1(u, 1 - u) / eps`` and ``G = (F - |Omega|) / eps^2``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .geometry import DomainDistance
from .linefield import LineField, divergence
from .pattern import (BinaryPattern, InterfaceSet, JumpMeasure, StripeFamily, extract_interfaces,
                      perimeter as _perimeter)

__all__ = [
    "EnergyReport",
    "energy_from_parts",
    "functional",
    "family_energy",
    "LowerBoundReport",
    "lower_bound_terms",
    "UpperBoundReport",
    "upper_bound_report",
    "richardson_constant",
    "AlignmentDefect",
    "mollifier",
    "alignment_defect",
    "QuadratureField",
    "field_quadrature",
    "tube_quadrature",
    "limit_energy_tube",
    "test_dictionary",
    "pair_convergence_gap",
    "FirstVariationReport",
    "first_variation",
]

D_SOURCES = ("exact", "upper-bound-map", "bracket")


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


@dataclass(frozen=True)
class EnergyReport:
    """Perimeter and transport parts of ``F`` and the rescaled ``G``.

    For ``d_source == "bracket"`` the ``*_interval`` fields hold the values
    at the two ends of the transport bracket and ``G`` is their midpoint.
    """

    eps: float
    perimeter: float
    d: float
    area: float
    d_source: str
    d_interval: Optional[tuple] = None

    @property
    def perimeter_term(self) -> float:
        return self.eps * self.perimeter

    @property
    def transport_term(self) -> float:
        return self.d / self.eps

    @property
    def F(self) -> float:
        return self.perimeter_term + self.transport_term

    @property
    def G(self) -> float:
        return (self.F - self.area) / self.eps ** 2

    @property
    def G_interval(self) -> Optional[tuple]:
        if self.d_interval is None:
            return None
        lo, hi = self.d_interval
        g = lambda d: (self.perimeter_term + d / self.eps - self.area) / self.eps ** 2  # noqa: E731
        return (g(lo), g(hi))

    def to_dict(self) -> dict:
        out = asdict(self)
        out.update(perimeter_term=self.perimeter_term, transport_term=self.transport_term,
                   F=self.F, G=self.G, G_interval=self.G_interval)
        return out

    def to_json(self) -> str:
        return _json(self.to_dict())


def energy_from_parts(eps: float, perimeter: float, d, area: float, d_source: str) -> EnergyReport:
    """Assemble a report; ``d`` is a number, or a ``(lo, hi)`` pair for brackets."""
    if d_source not in D_SOURCES:
        raise ValueError(f"unknown d source {d_source!r}; expected one of {D_SOURCES}")
    if d is None:
        raise ValueError("missing transport value d")
    if d_source == "bracket":
        lo, hi = (float(d[0]), float(d[1]))
        return EnergyReport(float(eps), float(perimeter), 0.5 * (lo + hi), float(area), d_source, (lo, hi))
    return EnergyReport(float(eps), float(perimeter), float(d), float(area), d_source)


def functional(p: BinaryPattern, d_source: str = "exact", d=None, perimeter: Optional[float] = None,
               area: Optional[float] = None, sigma: float = 1.0, cap: Optional[int] = None) -> EnergyReport:
    """Energy of a raster pattern.

    Parameters
    ----------
    d_source : {"exact", "upper-bound-map", "bracket"}
        With ``"exact"`` and no ``d`` the exact solver is run.
    perimeter : float, optional
        Interface length; defaults to the contour length of the pattern
        blurred by ``sigma`` cells.
    area : float, optional
        ``|Omega|``; defaults to the mask area (pass the continuum value when
        it is known).
    """
    if d is None:
        if d_source != "exact":
            raise ValueError(f"d source {d_source!r} needs an explicit d value")
        from .transport.exact import DEFAULT_CAP, exact_d1

        d, _ = exact_d1(p, cap=cap or DEFAULT_CAP)
    if perimeter is None:
        perimeter = _perimeter(extract_interfaces(p, sigma=sigma))
    if area is None:
        area = p.grid.mask_area
    return energy_from_parts(p.epsilon, perimeter, d, area, d_source)


def family_energy(family: StripeFamily, n_gauss: int = 8) -> EnergyReport:
    """Continuum energy of a recovery family: edge-curve length and stripe-map cost."""
    from .transport.stripe_map import upper_bound_d1

    per = _perimeter(family.interface_set())
    d = upper_bound_d1(family, n_gauss)
    return energy_from_parts(family.eps, per, d, family.domain.area, "upper-bound-map")


# lower bound

@dataclass
class LowerBoundReport:
    """Integrated lower-bound terms over the E-samples of a ray field.

    ``T1 = int (1/sin b - 1)(M/eps)^2 eps ds / eps^2``,
    ``T2 = int (M/eps - 1)^2 eps ds / eps^2``,
    ``T3 = int (M/(eps sin b))^4 alpha'^2 eps ds / (4 sin b)``; the basic
    variant is ``int [(M/eps - 1)^2 + (1/sin b - 1) + eps^2 alpha'^2 / 4] eps ds / eps^2``.
    """

    eps: float
    T1: dict
    T2: dict
    T3: dict
    basic: dict
    excluded_fraction: float
    n_samples: int
    unreliable: bool

    @property
    def total(self) -> float:
        return float(sum(self.T1.values()) + sum(self.T2.values()) + sum(self.T3.values()))

    @property
    def basic_total(self) -> float:
        return float(sum(self.basic.values()))

    def totals(self) -> dict:
        return {"T1": float(sum(self.T1.values())), "T2": float(sum(self.T2.values())),
                "T3": float(sum(self.T3.values())), "sum": self.total, "basic": self.basic_total}

    def to_dict(self) -> dict:
        return {"eps": self.eps, "per_curve": {"T1": self.T1, "T2": self.T2, "T3": self.T3,
                                               "basic": self.basic},
                "totals": self.totals(), "excluded_fraction": self.excluded_fraction,
                "n_samples": self.n_samples, "unreliable": self.unreliable}

    def to_json(self) -> str:
        return _json(self.to_dict())


def lower_bound_terms(rays, eps: Optional[float] = None, max_excluded: float = 0.5) -> LowerBoundReport:
    """Integrate the lower-bound terms over the E-samples of ``rays``."""
    eps = float(eps if eps is not None else rays.eps)
    e = rays.in_E
    cid = rays.curve_id
    T1, T2, T3, B = {}, {}, {}, {}
    for c in np.unique(cid):
        sel = e & (cid == c)
        ds = rays.ds[sel]
        sb = rays.sin_beta[sel]
        q = rays.M[sel] / eps
        ap = rays.alpha_prime[sel]
        t1 = np.sum((1.0 / sb - 1.0) * q ** 2 * eps * ds) / eps ** 2
        t2 = np.sum((q - 1.0) ** 2 * eps * ds) / eps ** 2
        t3 = np.sum(0.25 / sb * (q / sb) ** 4 * ap ** 2 * eps * ds)
        b = np.sum(((q - 1.0) ** 2 + (1.0 / sb - 1.0) + 0.25 * eps ** 2 * ap ** 2) * eps * ds) / eps ** 2
        key = int(c)
        T1[key], T2[key], T3[key], B[key] = float(t1), float(t2), float(t3), float(b)
    frac = rays.excluded_fraction
    return LowerBoundReport(eps, T1, T2, T3, B, frac, int(len(rays)), bool(frac > max_excluded))


# upper bound

def _dual_lengths(v):
    e = np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1)
    return 0.5 * (e + np.roll(e, 1))


@dataclass
class UpperBoundReport:
    """Curvature form of the upper bound, per stripe and in total."""

    eps: float
    per_stripe: list
    total: float
    mu_tilde_form: float
    div_source: str

    @property
    def discrepancy(self) -> float:
        return abs(self.total - self.mu_tilde_form)

    def to_dict(self) -> dict:
        return {"eps": self.eps, "per_stripe": self.per_stripe, "total": self.total,
                "mu_tilde_form": self.mu_tilde_form, "discrepancy": self.discrepancy,
                "div_source": self.div_source}

    def to_json(self) -> str:
        return _json(self.to_dict())


def _bilinear(values, valid, grid, pts):
    """Bilinear interpolation of cell-centred ``values`` using valid cells only."""
    fx = (pts[:, 0] - grid.x0) / grid.h - 0.5
    fy = (pts[:, 1] - grid.y0) / grid.h - 0.5
    i0 = np.floor(fx).astype(int)
    j0 = np.floor(fy).astype(int)
    ax = fx - i0
    ay = fy - j0
    num = np.zeros(len(pts))
    den = np.zeros(len(pts))
    nx, ny = grid.shape
    for di, wx in ((0, 1 - ax), (1, ax)):
        for dj, wy in ((0, 1 - ay), (1, ay)):
            ii = np.clip(i0 + di, 0, nx - 1)
            jj = np.clip(j0 + dj, 0, ny - 1)
            w = wx * wy * valid[ii, jj]
            num += w * values[ii, jj]
            den += w
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / den, np.nan)


def upper_bound_report(family: StripeFamily, field: Optional[LineField] = None) -> UpperBoundReport:
    """``sum_h int kappa_h^2 / 2 eps ds`` and the same integral as ``1/2 int |div P|^2 d mu~``.

    ``mu~`` is ``eps`` times arclength on the stripe centres. ``|div P|`` comes
    from ``field`` (interpolated grid divergence) when given, otherwise from
    the level-set curvature of the distance function at the projection foot.
    """
    eps = family.eps
    per, tot, mu = [], 0.0, 0.0
    dd: DomainDistance = family.distance
    if field is not None:
        dv = divergence(field)
        mag = dv.magnitude()
        valid = dv.valid & field.grid.mask
    for st in family.stripes:
        v = st.center.vertices
        ds = _dual_lengths(v)
        val = float(np.sum(0.5 * st.kappa ** 2 * eps * ds))
        if field is not None:
            dvm = _bilinear(mag, valid, field.grid, v)
            ok = np.isfinite(dvm)
            dvm = np.where(ok, dvm, np.abs(st.kappa))
            src = "grid"
        else:
            _, pr = dd.evaluate(v, tol=1e-6)
            kl = family.domain.center.curvature_at(pr.s)
            tl = pr.t
            dvm = np.abs(kl / (1.0 - tl * kl))
            src = "distance"
        m = float(0.5 * np.sum(dvm ** 2 * eps * ds))
        per.append({"index": st.index, "length": float(ds.sum()), "kappa_term": val, "mu_tilde_term": m})
        tot += val
        mu += m
    return UpperBoundReport(float(eps), per, float(tot), float(mu), src)


def richardson_constant(eps_values: Sequence[float], residuals: Sequence[float], order: float = 1.0) -> dict:
    """Empirical constant of ``residual(eps) ~ C eps^order`` from two or more eps values.

    Returns the per-eps ratios ``residual / eps^order`` and the two-point
    extrapolated constant and order from the last pair.
    """
    e = np.asarray(eps_values, dtype=float)
    r = np.asarray(residuals, dtype=float)
    ratios = r / e ** order
    out = {"eps": e.tolist(), "residual": r.tolist(), "C": ratios.tolist()}
    if len(e) >= 2 and np.all(r[-2:] != 0) and np.sign(r[-1]) == np.sign(r[-2]):
        p = math.log(abs(r[-2] / r[-1])) / math.log(e[-2] / e[-1])
        out["observed_order"] = p
    out["C_max"] = float(np.max(np.abs(ratios)))
    return out


# alignment defect

def mollifier(r, k: float):
    """Quartic bump ``(3 k^2 / pi)(1 - (k r)^2)^2`` on ``r < 1/k`` (unit integral)."""
    x = (k * np.asarray(r, dtype=float)) ** 2
    return np.where(x < 1.0, 3.0 * k * k / math.pi * (1.0 - x) ** 2, 0.0)


@dataclass(frozen=True)
class AlignmentDefect:
    k: int
    value: float
    n_pairs: int

    def to_dict(self):
        return asdict(self)


def _pairs(points, radius, period):
    if period is not None:
        box = np.asarray(period, dtype=float)
        q = np.mod(points, box)
        q[q >= box] = 0.0
        tree = cKDTree(q, boxsize=box)
    else:
        tree = cKDTree(points)
    pr = tree.query_pairs(radius, output_type="ndarray")
    if len(pr) == 0:
        return pr.reshape(0, 2)
    order = np.lexsort((pr[:, 1], pr[:, 0]))
    return pr[order]


def _sep(points, i, j, period):
    d = points[i] - points[j]
    if period is not None:
        box = np.asarray(period, dtype=float)
        d -= box * np.round(d / box)
    return np.linalg.norm(d, axis=1)


def alignment_defect(jm: JumpMeasure, k: int) -> AlignmentDefect:
    """``sum_{x != y} rho_k(x - y) |P(x) - P(y)| w_x w_y`` over jump-measure atoms."""
    if k < 1:
        raise ValueError("k must be >= 1")
    pr = _pairs(jm.points, 1.0 / k, jm.period)
    if len(pr) == 0:
        return AlignmentDefect(int(k), 0.0, 0)
    i, j = pr[:, 0], pr[:, 1]
    r = _sep(jm.points, i, j, jm.period)
    dP = np.linalg.norm((jm.P[i] - jm.P[j]).reshape(len(i), 4), axis=1)
    terms = mollifier(r, k) * dP * jm.weights[i] * jm.weights[j]
    # each unordered pair counts twice in the double sum
    return AlignmentDefect(int(k), float(2.0 * math.fsum(terms)), int(len(i)))


# pair convergence

@dataclass(frozen=True, eq=False)
class QuadratureField:
    """Line field sampled at quadrature nodes of ``mu = 1/2 Lebesgue``."""

    points: np.ndarray
    weights: np.ndarray
    P: np.ndarray


def field_quadrature(field: LineField) -> QuadratureField:
    """Cell-centre quadrature of ``1/2 Lebesgue`` restricted to the mask."""
    g = field.grid
    return QuadratureField(g.inside_points(), np.full(g.count, 0.5 * g.cell_area), field.inside_values())


def tube_quadrature(dd: DomainDistance, n_s: int = 1024, n_t: int = 16) -> QuadratureField:
    """Gauss-Legendre quadrature in tube coordinates with the canonical field.

    Nodes ``gamma(s) + t n(s)`` with Jacobian ``1 - t kappa(s)``; ``P`` is the
    tangent projection of the centre curve at the foot point.
    """
    curve = dd.domain.center
    delta = dd.domain.half_width
    L = curve.total_length
    s = (np.arange(n_s) + 0.5) * (L / n_s)
    xg, wg = np.polynomial.legendre.leggauss(n_t)
    t = delta * xg
    wt = delta * wg
    foot = curve.point_at(s)
    tan = curve.tangent_at(s)
    nrm = np.column_stack([-tan[:, 1], tan[:, 0]])
    kap = curve.curvature_at(s)
    pts = foot[:, None, :] + t[None, :, None] * nrm[:, None, :]
    w = (L / n_s) * wt[None, :] * (1.0 - t[None, :] * kap[:, None])
    P = np.einsum("ni,nj->nij", tan, tan)
    P = np.broadcast_to(P[:, None], (n_s, n_t, 2, 2))
    return QuadratureField(pts.reshape(-1, 2), 0.5 * w.ravel(), np.ascontiguousarray(P).reshape(-1, 2, 2))


def limit_energy_tube(domain, n_s: int = 4096, n_t: int = 32) -> float:
    """``(1/8) int |div P|^2 dx`` of the canonical field by tube quadrature.

    ``|div P| = |kappa / (1 - t kappa)|`` and the area element is
    ``(1 - t kappa) dt ds``, so the inner integral is ``kappa^2 / (1 - t kappa)``.
    """
    curve = domain.center
    L = curve.total_length
    s = (np.arange(n_s) + 0.5) * (L / n_s)
    k = curve.curvature_at(s)
    xg, wg = np.polynomial.legendre.leggauss(n_t)
    t = domain.half_width * xg
    inner = (domain.half_width * wg[None, :] * k[:, None] ** 2 / (1.0 - t[None, :] * k[:, None])).sum(axis=1)
    return float(inner.sum() * (L / n_s) / 8.0)


_E11 = np.array([[1.0, 0.0], [0.0, 0.0]])
_ESYM = np.array([[0.0, 1.0], [1.0, 0.0]])


def test_dictionary() -> list:
    """Ten matrix-valued test functions ``f(x) E`` with ``f in {1, x, y, sin pi x, sin pi y}``."""
    fs = [("1", lambda p: np.ones(len(p))), ("x", lambda p: p[:, 0]), ("y", lambda p: p[:, 1]),
          ("sin(pi x)", lambda p: np.sin(np.pi * p[:, 0])), ("sin(pi y)", lambda p: np.sin(np.pi * p[:, 1]))]
    out = []
    for fname, f in fs:
        for ename, E in (("E11", _E11), ("E12+E21", _ESYM)):
            out.append((f"{fname}*{ename}", f, E))
    return out


def pair_convergence_gap(jm: JumpMeasure, reference, dictionary=None) -> tuple:
    """``(weak_gap, strong_gap)`` of ``(mu_eps, P_eps)`` against ``(1/2 Lebesgue, P)``.

    ``reference`` is a :class:`LineField` (cell quadrature) or a
    :class:`QuadratureField`.
    """
    q = field_quadrature(reference) if isinstance(reference, LineField) else reference
    dictionary = dictionary or test_dictionary()
    gaps = []
    for _, f, E in dictionary:
        a = float(np.sum(jm.weights * f(jm.points) * np.einsum("nij,ij->n", jm.P, E)))
        b = float(np.sum(q.weights * f(q.points) * np.einsum("nij,ij->n", q.P, E)))
        gaps.append(abs(a - b))
    sa = float(np.sum(jm.weights * np.einsum("nij,nij->n", jm.P, jm.P)))
    sb = float(np.sum(q.weights * np.einsum("nij,nij->n", q.P, q.P)))
    return max(gaps), abs(sa - sb)


# first variation

@dataclass
class FirstVariationReport:
    """Discrete curvature vectors of interface polylines (weight ``eps`` per length)."""

    eps: float
    H: list = field(repr=False)
    dual_lengths: list = field(repr=False)
    tangential: list = field(repr=False)
    closedness: list
    sigma: list
    total_mass: float
    delta_V: Optional[float] = None
    delta_V_direct: Optional[float] = None

    @property
    def max_tangential(self) -> float:
        return max((float(np.max(np.abs(t))) for t in self.tangential if len(t)), default=0.0)

    @property
    def max_closedness(self) -> float:
        return max(self.closedness, default=0.0)

    def to_dict(self) -> dict:
        return {"eps": self.eps, "n_curves": len(self.H), "max_tangential": self.max_tangential,
                "max_closedness": self.max_closedness, "total_mass": self.total_mass,
                "sigma": [np.asarray(s).tolist() for s in self.sigma],
                "delta_V": self.delta_V, "delta_V_direct": self.delta_V_direct}

    def to_json(self) -> str:
        return _json(self.to_dict())


def _polyline_variation(v, closed, shift):
    if closed:
        nxt = np.vstack([v[1:], v[:1] + shift])
        e = nxt - v
    else:
        e = v[1:] - v[:-1]
    ell = np.linalg.norm(e, axis=1)
    t = e / ell[:, None]
    if closed:
        tp = np.roll(t, 1, axis=0)
        lp = np.roll(ell, 1)
        turn = t - tp
        dual = 0.5 * (ell + lp)
        bis = t + tp
    else:
        turn = t[1:] - t[:-1]
        dual = 0.5 * (ell[1:] + ell[:-1])
        bis = t[1:] + t[:-1]
    H = turn / dual[:, None]
    bn = np.linalg.norm(bis, axis=1)
    bn[bn == 0] = 1.0
    tang = np.einsum("ij,ij->i", H, bis / bn[:, None])
    return H, dual, tang, turn, t, e


def first_variation(iset: InterfaceSet, eps: float, eta: Optional[Callable] = None,
                    open_curves: Sequence = (), rel_tol: float = 1e-6) -> FirstVariationReport:
    """Curvature vectors ``H = (t_i - t_{i-1}) / ((l_{i-1} + l_i) / 2)`` per vertex.

    When ``eta`` (a vector field, ``(n, 2) -> (n, 2)``) is given,
    ``delta V(eta) = -sum eps H . eta dual`` is compared with the direct edge
    sum ``eps sum_e (eta(b) - eta(a)) . t_e``; a relative mismatch above
    ``rel_tol`` raises. Open polylines contribute endpoint forces to ``sigma``.
    """
    Hs, duals, tangs, closed_res, sigma = [], [], [], [], []
    mass = 0.0
    dv = 0.0
    dv_direct = 0.0
    for c in iset.curves:
        v = np.asarray(c.vertices, dtype=float)
        shift = np.asarray(c.shift, dtype=float)
        H, dual, tang, turn, t, e = _polyline_variation(v, True, shift)
        Hs.append(H)
        duals.append(dual)
        tangs.append(tang)
        closed_res.append(float(np.linalg.norm(turn.sum(axis=0))))
        mass += float(eps * np.sum(np.linalg.norm(H, axis=1) * dual))
        if eta is not None:
            ev = np.asarray(eta(v), dtype=float)
            nxt = np.vstack([v[1:], v[:1] + shift])
            en = np.asarray(eta(nxt), dtype=float)
            dv += -eps * float(np.sum(np.einsum("ij,ij->i", H, ev) * dual))
            dv_direct += eps * float(np.sum(np.einsum("ij,ij->i", en - ev, t)))
    for v in open_curves:
        v = np.asarray(v, dtype=float)
        H, dual, tang, turn, t, e = _polyline_variation(v, False, None)
        Hs.append(H)
        duals.append(dual)
        tangs.append(tang)
        closed_res.append(float(np.linalg.norm(turn.sum(axis=0) - (t[-1] - t[0]))))
        # boundary forces: outward unit tangents at the ends
        sig = eps * np.vstack([-t[0], t[-1]])
        sigma.append(sig)
        mass += float(eps * np.sum(np.linalg.norm(H, axis=1) * dual)) + float(np.linalg.norm(sig, axis=1).sum())
        if eta is not None:
            ev = np.asarray(eta(v), dtype=float)
            dv += -eps * float(np.sum(np.einsum("ij,ij->i", H, ev[1:-1]) * dual))
            dv += float(np.einsum("ij,ij->", sig, ev[[0, -1]]))
            dv_direct += eps * float(np.sum(np.einsum("ij,ij->i", ev[1:] - ev[:-1], t)))
    rep = FirstVariationReport(float(eps), Hs, duals, tangs, closed_res, sigma, mass,
                               dv if eta is not None else None, dv_direct if eta is not None else None)
    if eta is not None:
        scale = max(abs(dv_direct), abs(dv), 1e-300)
        if abs(dv - dv_direct) > rel_tol * scale and abs(dv - dv_direct) > 1e-14:
            raise ArithmeticError(f"first variation mismatch: {dv!r} vs direct {dv_direct!r}")
    return rep
