"""Binary patterns on grids, interface tracing, jump measures and the stripe recovery construction."""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import ndimage

from .geometry import (ClosedCurve, DomainDistance, GeometryError, Grid, TubularDomain,
                       offset_curve, rasterize, rasterize_rectangle)
from .linefield import projection_from_direction

__all__ = [
    "ResonanceError",
    "rho_plus",
    "rho_minus",
    "stripe_mass",
    "Stripe",
    "StripeFamily",
    "BinaryPattern",
    "AdmissibilityReport",
    "InterfaceCurve",
    "InterfaceSet",
    "JumpMeasure",
    "stripe_family",
    "stripe_recovery",
    "straight_stripes",
    "check_admissible",
    "extract_interfaces",
    "jump_measure",
    "perimeter",
    "save_pattern",
    "load_pattern",
    "save_interfaces_csv",
]

SERIES_SWITCH = 1e-4


class ResonanceError(ValueError):
    """``delta / (2 eps)`` is not a positive integer."""


def rho_plus(eps, kappa):
    """Upper edge of the u-band, ``(1 - sqrt(1 - 2 eps k + 2 eps^2 k^2)) / k``.

    Uses a fourth-order series in ``eps * kappa`` when that product is tiny.
    """
    eps = np.asarray(eps, float)
    kappa = np.asarray(kappa, float)
    x = eps * kappa
    small = np.abs(x) < SERIES_SWITCH
    ks = np.where(small, 1.0, kappa)
    closed = (1.0 - np.sqrt(1.0 - 2.0 * x + 2.0 * x * x)) / ks
    series = eps * (1.0 - x / 2 - x ** 2 / 2 - 3 * x ** 3 / 8 - x ** 4 / 8)
    return np.where(small, series, closed)


def rho_minus(eps, kappa):
    """Lower edge of the u-band; ``rho_minus(eps, k) = -rho_plus(eps, -k)``."""
    return -rho_plus(eps, -np.asarray(kappa, float))


def stripe_mass(t, kappa):
    """Area coordinate ``t - t^2 kappa / 2`` of the normal chart around a stripe center."""
    t = np.asarray(t, float)
    return t - 0.5 * t * t * np.asarray(kappa, float)


@dataclass(frozen=True, eq=False)
class Stripe:
    """One stripe: center level curve with curvature and band edges per vertex.

    ``kappa`` is measured against ``nu = grad phi``; ``nu`` holds that
    normal at the vertices of ``center``.
    """

    index: int
    level: float
    center: ClosedCurve
    nu: np.ndarray = field(repr=False)
    kappa: np.ndarray = field(repr=False)
    rho_plus: np.ndarray = field(repr=False)
    rho_minus: np.ndarray = field(repr=False)

    @property
    def length(self) -> float:
        return self.center.total_length

    def edge_curve(self, which: str) -> np.ndarray:
        r = self.rho_plus if which == "plus" else self.rho_minus
        return self.center.vertices + r[:, None] * self.nu


@dataclass(frozen=True, eq=False)
class StripeFamily:
    """The ``N = delta / (2 eps)`` stripes of width ``4 eps`` filling a tube."""

    distance: DomainDistance
    eps: float
    stripes: tuple

    @property
    def domain(self) -> TubularDomain:
        return self.distance.domain

    @property
    def n_stripes(self) -> int:
        return len(self.stripes)

    def defining_residual(self) -> float:
        """Largest violation of ``m(rho+) = eps(1 - eps k)``, ``m(rho-) = -eps(1 + eps k)``."""
        e = self.eps
        out = 0.0
        for st in self.stripes:
            r1 = stripe_mass(st.rho_plus, st.kappa) - e * (1 - e * st.kappa)
            r2 = stripe_mass(st.rho_minus, st.kappa) + e * (1 + e * st.kappa)
            out = max(out, float(np.abs(r1).max()), float(np.abs(r2).max()))
        return out

    def interface_set(self) -> "InterfaceSet":
        """Continuum interfaces ``gamma_h + rho(s) nu(s)``, oriented with u = 1 on the left."""
        curves = []
        flip = self.distance.sign < 0
        for st in self.stripes:
            for which in ("plus", "minus"):
                v = st.edge_curve(which)
                # the band sits on the -nu side of the plus edge
                reverse = (which == "plus") != flip
                if reverse:
                    v = v[::-1]
                curves.append(InterfaceCurve(v, np.zeros(2)))
        return InterfaceSet(curves, periodic=False)

    def band_lengths(self) -> list:
        """Per stripe ``(L+, L-)`` from the continuum edge polylines."""
        out = []
        for st in self.stripes:
            lp = _closed_length(st.edge_curve("plus"))
            lm = _closed_length(st.edge_curve("minus"))
            out.append((lp, lm))
        return out


def _closed_length(v) -> float:
    return float(np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1).sum())


def _resonance(delta: float, eps: float) -> int:
    if not (eps > 0):
        raise ResonanceError("eps must be positive")
    q = delta / (2.0 * eps)
    n = int(round(q))
    if n < 1 or abs(q - n) > 1e-9 * max(1.0, q):
        raise ResonanceError(
            f"resonance condition violated: delta/(2 eps) = {q:.6g} must be a positive integer")
    return n


def stripe_family(dd: DomainDistance, eps: float, samples: Optional[int] = None) -> StripeFamily:
    """Build the stripes ``{4 eps h <= phi <= 4 eps (h + 1)}`` and their band edges."""
    dom = dd.domain
    n = _resonance(dom.half_width, eps)
    gam = dom.center
    count = samples or gam.n
    stripes = []
    for h in range(n):
        level = 2.0 * eps * (2 * h + 1)
        tau = dd.level_offset(level)
        c = offset_curve(gam, tau, count) if tau != 0 else (gam if count == gam.n else gam.resampled(count))
        kl = c.vertex_curvature
        kappa = dd.sign * kl
        if np.any(np.abs(2.0 * eps * kappa) >= 1.0):
            raise GeometryError("eps * curvature too large for the stripe chart (|2 eps kappa| < 1 needed)")
        nu = dd.sign * c.normals
        stripes.append(Stripe(h, level, c, nu, kappa, rho_plus(eps, kappa), rho_minus(eps, kappa)))
    return StripeFamily(dd, float(eps), tuple(stripes))


@dataclass(frozen=True, eq=False)
class BinaryPattern:
    """Bit field ``u`` on a grid. ``meta`` records construction details."""

    grid: Grid
    cells: np.ndarray = field(repr=False)
    epsilon: float
    periodic: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        u = np.array(self.cells, dtype=bool)
        if u.shape != self.grid.shape:
            raise ValueError("cells must match the grid shape")
        u &= self.grid.mask
        u.setflags(write=False)
        object.__setattr__(self, "cells", u)

    @property
    def u_count(self) -> int:
        return int(self.cells.sum())

    @property
    def v_count(self) -> int:
        return int((self.grid.mask & ~self.cells).sum())

    @property
    def mean(self) -> float:
        return self.u_count / max(self.grid.count, 1)

    def sources(self) -> np.ndarray:
        i, j = np.nonzero(self.cells)
        return np.column_stack([self.grid.xs[i], self.grid.ys[j]])

    def sinks(self) -> np.ndarray:
        i, j = np.nonzero(self.grid.mask & ~self.cells)
        return np.column_stack([self.grid.xs[i], self.grid.ys[j]])

    @property
    def period(self):
        if not self.periodic:
            return None
        nx, ny = self.grid.shape
        return (nx * self.grid.h, ny * self.grid.h)

    def with_cells(self, cells, **meta) -> "BinaryPattern":
        m = dict(self.meta)
        m.update(meta)
        return BinaryPattern(self.grid, cells, self.epsilon, self.periodic, m)


def _balance(grid: Grid, u: np.ndarray, dist_to_boundary: np.ndarray, protect: np.ndarray):
    """Flip interface-adjacent cells until both phases have equal counts.

    Cells farthest from the boundary go first; ties break by flat cell index.
    Returns the new bit field and the number of flips.
    """
    m = grid.mask
    excess = int(u.sum()) - int((m & ~u).sum())
    if excess == 0:
        return u, 0
    k = abs(excess) // 2
    p = np.pad(u, 1, constant_values=False)
    pm = np.pad(m, 1, constant_values=False)
    nb_zero = np.zeros_like(u)
    nb_one = np.zeros_like(u)
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        su = p[1 + di:p.shape[0] - 1 + di, 1 + dj:p.shape[1] - 1 + dj]
        sm = pm[1 + di:pm.shape[0] - 1 + di, 1 + dj:pm.shape[1] - 1 + dj]
        nb_zero |= sm & ~su
        nb_one |= su
    if excess > 0:
        cand = u & nb_zero
    else:
        cand = m & ~u & nb_one & ~protect
    flat = np.flatnonzero(cand.ravel())
    if len(flat) < k:
        raise RuntimeError("not enough interface cells to restore the mass balance")
    d = dist_to_boundary.ravel()[flat]
    order = np.lexsort((flat, -d))
    chosen = flat[order[:k]]
    out = u.copy().ravel()
    out[chosen] = not excess > 0
    return out.reshape(u.shape), int(k)


def stripe_recovery(domain: TubularDomain, eps: float, grid_h: float, reference: str = "inner",
                    samples: Optional[int] = None, balance: bool = True):
    """Recovery pattern: ``u = 1`` on ``rho- < t < rho+`` around every stripe center.

    Returns ``(family, pattern)``. The raster uses cell-center membership;
    mass balance is restored by deterministic cell flips (and, for an odd
    number of inside cells, one boundary cell is dropped from the mask).
    """
    dd = DomainDistance(domain, reference)
    fam = stripe_family(dd, eps, samples)
    grid = rasterize(domain, grid_h)
    pts = grid.inside_points()
    phi, pr = dd.evaluate(pts, tol=1e-9)
    n = fam.n_stripes
    h_idx = np.clip(np.floor(phi / (4 * eps)).astype(int), 0, n - 1)
    t = phi - 2 * eps * (2 * h_idx + 1)
    kl = domain.center.curvature_at(pr.s)
    tau = np.array([dd.level_offset(st.level) for st in fam.stripes])[h_idx]
    kappa = dd.sign * kl / (1.0 - tau * kl)
    inside = (t > rho_minus(eps, kappa)) & (t < rho_plus(eps, kappa))
    u = np.zeros(grid.shape, dtype=bool)
    ii, jj = grid.inside_index
    u[ii, jj] = inside
    meta = {"source": "stripe_recovery", "reference": reference, "n_stripes": n, "h": grid_h,
            "trimmed_cells": 0, "flips": 0}
    if balance:
        if grid.count % 2:
            b = grid.boundary_cells & ~u
            first = int(np.flatnonzero(b.ravel())[0])
            mask = grid.mask.copy().ravel()
            mask[first] = False
            grid = grid.with_mask(mask.reshape(grid.shape))
            meta["trimmed_cells"] = 1
            meta["trimmed_index"] = first
        dist = np.zeros(grid.shape)
        dist[ii, jj] = np.minimum(phi, 2 * domain.half_width - phi)
        u &= grid.mask
        u, flips = _balance(grid, u, dist, grid.boundary_cells)
        meta["flips"] = flips
    pat = BinaryPattern(grid, u, float(eps), False, meta)
    return fam, pat


def straight_stripes(rect, period: float, eps: float, h: float, phase: float = 0.0,
                     angle: float = 0.0, exact: bool = True) -> BinaryPattern:
    """Periodic bands of width ``period / 2`` with normal direction ``angle`` (radians).

    ``u = 1`` where ``frac((x . n - phase) / period) < 1/2``. The rectangle
    ``(x0, y0, x1, y1)`` must hold an integer number of periods along both
    axes (projected on the band normal). With ``exact`` the raster must also
    resolve the bands: for axis-aligned bands the edges must fall on cell
    faces, otherwise the cells must split evenly between the phases.
    """
    x0, y0, x1, y1 = rect
    W, H = x1 - x0, y1 - y0
    c, s = math.cos(angle), math.sin(angle)
    for side, comp in ((W, c), (H, s)):
        q = side * comp / period
        if abs(q - round(q)) > 1e-9 * max(1.0, abs(q)):
            raise GeometryError(f"rectangle side {side} is not commensurate with period {period}")
    if exact and min(abs(c), abs(s)) < 1e-12:
        q = 0.5 * period / h
        if abs(q - round(q)) > 1e-9 * max(1.0, q):
            raise GeometryError(f"band width {period / 2} is not a multiple of h = {h}")
    grid = rasterize_rectangle(x0, y0, x1, y1, h)
    X, Y = grid.cell_centers()
    # the cell of a band edge is decided on a slightly shifted coordinate so
    # that centers exactly on an edge are attributed consistently
    z = ((X - x0) * c + (Y - y0) * s - phase) / period
    frac = np.mod(np.round(z * 2 ** 40) / 2 ** 40, 1.0)
    u = frac < 0.5
    if exact and 2 * int(u.sum()) != u.size:
        raise GeometryError(f"period {period} is not commensurate with the grid h = {h}: "
                            f"{int(u.sum())} of {u.size} cells in u")
    meta = {"source": "straight_stripes", "period": period, "phase": phase, "angle": angle, "h": h}
    return BinaryPattern(grid, u, float(eps), True, meta)


@dataclass
class AdmissibilityReport:
    boundary_violations: int
    mass_imbalance: float
    balance_tol: float
    periodic: bool

    @property
    def boundary_ok(self) -> bool:
        return self.periodic or self.boundary_violations == 0

    @property
    def mass_ok(self) -> bool:
        return abs(self.mass_imbalance) <= self.balance_tol

    @property
    def ok(self) -> bool:
        return self.boundary_ok and self.mass_ok

    def to_dict(self):
        return {"boundary_violations": self.boundary_violations, "mass_imbalance": self.mass_imbalance,
                "balance_tol": self.balance_tol, "periodic": self.periodic,
                "boundary_ok": self.boundary_ok, "mass_ok": self.mass_ok, "ok": self.ok,
                "boundary_condition": "suspended (periodic mode)" if self.periodic else "u = 0"}


def check_admissible(p: BinaryPattern, balance_tol: Optional[float] = None) -> AdmissibilityReport:
    """Boundary condition ``u = 0`` on boundary cells and ``mean(u) = 1/2``."""
    g = p.grid
    viol = 0 if p.periodic else int((p.cells & g.boundary_cells).sum())
    imb = p.mean - 0.5
    if balance_tol is None:
        if g.domain is not None:
            balance_tol = g.h * g.domain.perimeter / max(g.domain.area, 1e-300)
        else:
            nx, ny = g.shape
            balance_tol = g.h * 2 * (nx + ny) * g.h / max(g.mask_area, 1e-300)
    return AdmissibilityReport(viol, float(imb), float(balance_tol), p.periodic)


@dataclass(frozen=True, eq=False)
class InterfaceCurve:
    """Closed interface polyline; ``u = 1`` lies to the left of the traversal.

    ``shift`` is zero for loops closed in the plane; for loops that wrap a
    torus the closing edge joins ``vertices[-1]`` to ``vertices[0] + shift``.
    """

    vertices: np.ndarray = field(repr=False)
    shift: np.ndarray = field(default_factory=lambda: np.zeros(2))

    @cached_property
    def segments(self):
        v = self.vertices
        nxt = np.vstack([v[1:], v[:1] + np.asarray(self.shift)])
        return v, nxt

    @cached_property
    def edge_vectors(self) -> np.ndarray:
        a, b = self.segments
        return b - a

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.edge_vectors, axis=1)

    @property
    def length(self) -> float:
        return float(self.edge_lengths.sum())

    @property
    def wraps(self) -> bool:
        return bool(np.any(np.asarray(self.shift) != 0))

    @cached_property
    def segment_normals(self) -> np.ndarray:
        """Unit normals from ``u = 1`` into ``u = 0`` (right of the traversal)."""
        d = self.edge_vectors / self.edge_lengths[:, None]
        return np.column_stack([d[:, 1], -d[:, 0]])

    @cached_property
    def vertex_normals(self) -> np.ndarray:
        n = self.segment_normals
        w = n + np.roll(n, 1, axis=0)
        nrm = np.linalg.norm(w, axis=1)
        bad = nrm < 1e-12
        w[bad] = n[bad]
        nrm[bad] = 1.0
        return w / nrm[:, None]

    def cumulative_arclength(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.edge_lengths)[:-1]])


@dataclass(frozen=True, eq=False)
class InterfaceSet:
    curves: list
    periodic: bool = False
    period: Optional[tuple] = None

    def __len__(self):
        return len(self.curves)

    @property
    def total_length(self) -> float:
        return float(sum(c.length for c in self.curves))


def _marching_squares(f, level, periodic, x0, y0, h):
    """Trace closed contours of the cell-centred field ``f`` at ``level``.

    Returns a list of ``(vertices, shift)`` in world coordinates. Saddle
    squares keep the high corners separated.
    """
    f = np.asarray(f, float)
    if not periodic:
        f = np.pad(f, 1, constant_values=min(float(f.min()), level - 1.0))
        x0 -= h
        y0 -= h
    nx, ny = f.shape
    hi = f > level
    # squares (i, j) span cells i..i+1, j..j+1
    if periodic:
        sx, sy = nx, ny
    else:
        sx, sy = nx - 1, ny - 1
    I, J = np.meshgrid(np.arange(sx), np.arange(sy), indexing="ij")
    I1 = (I + 1) % nx
    J1 = (J + 1) % ny
    a = hi[I, J]
    b = hi[I1, J]
    c = hi[I1, J1]
    d = hi[I, J1]
    case = a.astype(np.int64) | (b << 1) | (c << 2) | (d << 3)
    nh = nx * ny

    # edge ids: bottom (i, j)->(i+1, j) is horizontal edge h(i, j); left (i, j)->(i, j+1) is v(i, j)
    def hid(i, j):
        return i * ny + j

    def vid(i, j):
        return nh + i * ny + j

    E = {
        "B": hid(I, J),
        "R": vid(I1, J),
        "T": hid(I, J1),
        "L": vid(I, J),
    }
    # (from, to) with the high side on the left of travel
    table = {
        1: [("B", "L")], 2: [("R", "B")], 3: [("R", "L")], 4: [("T", "R")],
        5: [("B", "L"), ("T", "R")], 6: [("T", "B")], 7: [("T", "L")], 8: [("L", "T")],
        9: [("B", "T")], 10: [("R", "B"), ("L", "T")], 11: [("R", "T")], 12: [("L", "R")],
        13: [("B", "R")], 14: [("L", "B")],
    }
    nxt = np.full(2 * nh, -1, dtype=np.int64)
    for cs, segs in table.items():
        sel = case == cs
        if not np.any(sel):
            continue
        for s0, s1 in segs:
            src = E[s0][sel]
            dst = E[s1][sel]
            if np.any(nxt[src] >= 0):
                raise RuntimeError("inconsistent contour topology")
            nxt[src] = dst

    # vertex positions on crossing edges (linear interpolation)
    ids = np.flatnonzero(nxt >= 0)
    vert = ids >= nh
    k = np.where(vert, ids - nh, ids)
    i0, j0 = k // ny, k % ny
    i1 = np.where(vert, i0, (i0 + 1) % nx)
    j1 = np.where(vert, (j0 + 1) % ny, j0)
    f0, f1 = f[i0, j0], f[i1, j1]
    lam = (level - f0) / (f1 - f0)
    px = x0 + (i0 + 0.5 + np.where(vert, 0.0, lam)) * h
    py = y0 + (j0 + 0.5 + np.where(vert, lam, 0.0)) * h
    pos = np.zeros((2 * nh, 2))
    pos[ids, 0] = px
    pos[ids, 1] = py

    visited = np.zeros(2 * nh, dtype=bool)
    W, H = nx * h, ny * h
    out = []
    for start in ids:
        if visited[start]:
            continue
        chain = []
        e = start
        while not visited[e]:
            visited[e] = True
            chain.append(e)
            e = nxt[e]
            if e < 0:
                raise RuntimeError("open contour encountered")
        if e != start:
            raise RuntimeError("contour did not close")
        p = pos[np.asarray(chain)]
        if periodic:
            step = np.diff(p, axis=0)
            step[:, 0] -= W * np.round(step[:, 0] / W)
            step[:, 1] -= H * np.round(step[:, 1] / H)
            p = np.vstack([p[:1], p[0] + np.cumsum(step, axis=0)])
            close = pos[start] - p[-1]
            close_w = close.copy()
            close_w[0] -= W * np.round(close[0] / W)
            close_w[1] -= H * np.round(close[1] / H)
            shift = (p[-1] + close_w) - p[0]
            shift = np.array([W * np.round(shift[0] / W), H * np.round(shift[1] / H)])
        else:
            shift = np.zeros(2)
        out.append((p, shift))
    return out


def extract_interfaces(p: BinaryPattern, sigma: float = 0.0) -> InterfaceSet:
    """Marching-squares contours of ``u`` at level 1/2.

    ``sigma`` (in cells) optionally blurs the bit field with a Gaussian
    before tracing, which gives sub-cell interface positions. The default
    traces the raw bit field.
    """
    g = p.grid
    f = p.cells.astype(float)
    if sigma > 0:
        f = ndimage.gaussian_filter(f, sigma, mode="wrap" if p.periodic else "constant")
    if not p.cells.any() or p.cells[g.mask].all():
        warnings.warn("pattern has a single phase; interface set is empty", RuntimeWarning, stacklevel=2)
        return InterfaceSet([], p.periodic, p.period)
    loops = _marching_squares(f, 0.5, p.periodic, g.x0, g.y0, g.h)
    curves = [InterfaceCurve(v, s) for v, s in loops]
    return InterfaceSet(curves, p.periodic, p.period)


@dataclass(frozen=True, eq=False)
class JumpMeasure:
    """Atoms of ``eps |grad u|``: segment midpoints, weights, projections and normals."""

    points: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    P: np.ndarray = field(repr=False)
    normals: np.ndarray = field(repr=False)
    eps: float = 0.0
    period: Optional[tuple] = None

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    def __len__(self):
        return len(self.weights)


def jump_measure(iset: InterfaceSet, eps: float) -> JumpMeasure:
    """One atom per interface segment with weight ``eps * length`` and ``P = d (x) d``."""
    pts, w, dirs, nrm = [], [], [], []
    for c in iset.curves:
        a, b = c.segments
        pts.append(0.5 * (a + b))
        w.append(eps * c.edge_lengths)
        dirs.append(c.edge_vectors / c.edge_lengths[:, None])
        nrm.append(c.segment_normals)
    if not pts:
        z = np.zeros((0, 2))
        return JumpMeasure(z, np.zeros(0), np.zeros((0, 2, 2)), z, eps, iset.period)
    pts = np.vstack(pts)
    if iset.period is not None:
        pts = np.mod(pts, np.asarray(iset.period)) if iset.periodic else pts
    d = np.vstack(dirs)
    # renormalise tiny rounding so the unit-length check is exact
    d /= np.linalg.norm(d, axis=1)[:, None]
    return JumpMeasure(pts, np.concatenate(w), projection_from_direction(d), np.vstack(nrm),
                       float(eps), iset.period)


def perimeter(iset: InterfaceSet) -> float:
    """Total interface length ``int |grad u|``."""
    return iset.total_length


def save_pattern(p: BinaryPattern, path) -> None:
    """ASCII PGM raster (``u`` as 0/1, outside mask as 2) plus a JSON sidecar."""
    path = Path(path)
    g = p.grid
    img = np.where(g.mask, p.cells.astype(int), 2)
    nx, ny = g.shape
    lines = ["P2", f"{nx} {ny}", "2"]
    # rows from top (largest y) to bottom, columns along x
    for j in range(ny - 1, -1, -1):
        lines.append(" ".join(str(int(v)) for v in img[:, j]))
    path.write_text("\n".join(lines) + "\n")
    side = {"epsilon": p.epsilon, "periodic": p.periodic, "x0": g.x0, "y0": g.y0, "h": g.h,
            "shape": [nx, ny], "meta": p.meta}
    path.with_suffix(".json").write_text(json.dumps(side, indent=2, sort_keys=True, default=float))


def load_pattern(path) -> BinaryPattern:
    path = Path(path)
    side = json.loads(path.with_suffix(".json").read_text())
    tok = path.read_text().split()
    nx, ny = int(tok[1]), int(tok[2])
    vals = np.array([int(t) for t in tok[4:]]).reshape(ny, nx)[::-1].T
    grid = Grid(side["x0"], side["y0"], side["h"], vals != 2)
    return BinaryPattern(grid, vals == 1, side["epsilon"], side["periodic"], side.get("meta", {}))


def save_interfaces_csv(iset: InterfaceSet, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["curve_id", "vertex", "x", "y"])
        for cid, c in enumerate(iset.curves):
            for k, (x, y) in enumerate(c.vertices):
                w.writerow([cid, k, f"{x:.12g}", f"{y:.12g}"])
