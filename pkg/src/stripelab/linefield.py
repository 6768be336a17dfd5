"""Projection-valued line fields on grids, the limit-class checks and the limit energy."""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .geometry import Grid, TubularDomain

__all__ = [
    "projection_from_direction",
    "projection_defects",
    "LineField",
    "DivergenceField",
    "K0Tolerances",
    "K0Report",
    "canonical_field",
    "constant_field",
    "field_from_directions",
    "divergence",
    "check_K0",
    "limit_energy",
    "boundary_normals",
    "save_field_csv",
]


def projection_from_direction(e) -> np.ndarray:
    """Rank-one projection ``e (x) e`` for a unit vector ``e``.

    Accepts a single vector or an array of shape ``(..., 2)``.
    """
    e = np.asarray(e, dtype=float)
    nrm = np.linalg.norm(e, axis=-1)
    if np.any(nrm == 0):
        raise ValueError("direction must be non-zero")
    if np.any(np.abs(nrm - 1.0) > 1e-9):
        raise ValueError("direction must have unit length (within 1e-9)")
    return e[..., :, None] * e[..., None, :]


def projection_defects(P) -> dict:
    """Pointwise algebraic defects of 2x2 matrices ``P`` (shape ``(..., 2, 2)``).

    Returns arrays for the idempotency, symmetry and rank-one defects.
    """
    P = np.asarray(P, dtype=float)
    idem = np.abs(P @ P - P).max(axis=(-2, -1))
    sym = np.abs(P - np.swapaxes(P, -1, -2)).max(axis=(-2, -1))
    a, b, c = P[..., 0, 0], 0.5 * (P[..., 0, 1] + P[..., 1, 0]), P[..., 1, 1]
    mean = 0.5 * (a + c)
    rad = np.sqrt(0.25 * (a - c) ** 2 + b * b)
    lam_min = mean - rad
    lam_max = mean + rad
    # rank one with unit trace: eigenvalues {0, 1}
    rank = np.maximum(np.abs(lam_min), np.abs(lam_max - 1.0))
    return {"idempotent": idem, "symmetric": sym, "rank": rank}


@dataclass(frozen=True, eq=False)
class LineField:
    """Grid line field; ``values[i, j]`` is the 2x2 matrix at cell ``(i, j)``.

    Cells outside the mask carry zeros.
    """

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.shape + (2, 2):
            raise ValueError("values must have shape grid.shape + (2, 2)")
        v[~self.grid.mask] = 0.0
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def inside_values(self) -> np.ndarray:
        return self.values[self.grid.mask]


@dataclass(frozen=True, eq=False)
class DivergenceField:
    """Row-wise divergence of a line field with a validity mask.

    ``valid`` is False for isolated cells, which are excluded from norms.
    Values are zero outside the domain.
    """

    grid: Grid
    values: np.ndarray = field(repr=False)
    valid: np.ndarray = field(repr=False)

    @property
    def isolated(self) -> int:
        return int((self.grid.mask & ~self.valid).sum())

    def magnitude(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=-1)

    def l2_norm(self) -> float:
        sq = (self.values[self.valid] ** 2).sum(axis=-1)
        return float(math.sqrt(_fixed_sum(sq) * self.grid.cell_area))


def _fixed_sum(a) -> float:
    # numpy's pairwise summation in a fixed (row-major) order
    return float(np.sum(np.ascontiguousarray(a, dtype=float).ravel()))


def field_from_directions(grid: Grid, directions) -> LineField:
    """Line field ``d (x) d`` from per-cell directions of shape grid.shape + (2,)."""
    d = np.array(directions, dtype=float)
    nrm = np.linalg.norm(d, axis=-1)
    m = grid.mask
    if np.any(nrm[m] == 0):
        raise ValueError("zero direction inside the mask")
    d[m] /= nrm[m][:, None]
    d[~m] = 0.0
    vals = d[..., :, None] * d[..., None, :]
    return LineField(grid, vals)


def constant_field(grid: Grid, e) -> LineField:
    P = projection_from_direction(e)
    vals = np.broadcast_to(P, grid.shape + (2, 2)).copy()
    return LineField(grid, vals)


def canonical_field(domain: TubularDomain, grid: Grid) -> LineField:
    """``P(x) = tau(pi x) (x) tau(pi x)`` with ``pi`` the projection onto the center curve."""
    pts = grid.inside_points()
    pr = domain.project(pts)
    vals = np.zeros(grid.shape + (2, 2))
    vals[grid.mask] = projection_from_direction(pr.tangent)
    return LineField(grid, vals)


def _axis_derivative(f, m, h, axis):
    """Derivative of ``f`` along ``axis`` restricted to mask ``m``.

    Centred where both neighbours are inside; second-order one-sided when two
    cells are available on one side; first-order with one; invalid otherwise.
    """
    def shift(a, k, fill):
        out = np.full_like(a, fill)
        src = [slice(None)] * a.ndim
        dst = [slice(None)] * a.ndim
        if k > 0:
            src[axis] = slice(k, None)
            dst[axis] = slice(None, -k)
        else:
            src[axis] = slice(None, k)
            dst[axis] = slice(-k, None)
        out[tuple(dst)] = a[tuple(src)]
        return out

    bshape = m.shape + (1,) * (f.ndim - m.ndim)
    fm = np.where(m.reshape(bshape), f, 0.0)
    mp1, mp2 = shift(m, 1, False), shift(m, 2, False)
    mm1, mm2 = shift(m, -1, False), shift(m, -2, False)
    fp1, fp2 = shift(fm, 1, 0.0), shift(fm, 2, 0.0)
    fm1, fm2 = shift(fm, -1, 0.0), shift(fm, -2, 0.0)
    c = (mp1 & mm1).reshape(bshape)
    f2 = (~(mp1 & mm1) & mp1 & mp2).reshape(bshape)
    f1 = (~(mp1 & mm1) & mp1 & ~mp2).reshape(bshape)
    b2 = (~(mp1 & mm1) & ~mp1 & mm1 & mm2).reshape(bshape)
    b1 = (~(mp1 & mm1) & ~mp1 & mm1 & ~mm2).reshape(bshape)
    d = np.zeros_like(fm)
    d = np.where(c, (fp1 - fm1) / (2 * h), d)
    d = np.where(f2, (-3 * fm + 4 * fp1 - fp2) / (2 * h), d)
    d = np.where(f1, (fp1 - fm) / h, d)
    d = np.where(b2, (3 * fm - 4 * fm1 + fm2) / (2 * h), d)
    d = np.where(b1, (fm - fm1) / h, d)
    valid = m & (mp1 | mm1)
    return d, valid


def divergence(field: LineField) -> DivergenceField:
    """Row-wise divergence ``(div P)_i = sum_j d_j P_ij`` by finite differences."""
    g = field.grid
    m = g.mask
    P = field.values
    dx, vx = _axis_derivative(P[..., :, 0], m, g.h, 0)
    dy, vy = _axis_derivative(P[..., :, 1], m, g.h, 1)
    div = dx + dy
    valid = vx & vy
    div[~valid] = 0.0
    return DivergenceField(g, div, valid)


def boundary_normals(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Outward unit normals at boundary cells.

    With a tubular domain attached the normal is geometric (the normal of the
    center curve at the foot point, pointing away from it); otherwise it is
    the normalised sum of axis directions towards outside neighbours.
    Returns ``(cell_indices, normals)``.
    """
    bmask = grid.boundary_cells
    idx = np.nonzero(bmask)
    if grid.domain is not None:
        pts = np.column_stack([grid.xs[idx[0]], grid.ys[idx[1]]])
        pr = grid.domain.project(pts, check=False)
        n = np.sign(pr.t)[:, None] * pr.normal
        n[pr.t == 0] = pr.normal[pr.t == 0]
        return idx, n
    m = np.pad(grid.mask, 1, constant_values=False)
    i, j = idx[0] + 1, idx[1] + 1
    n = np.zeros((len(i), 2))
    n[:, 0] += ~m[i + 1, j]
    n[:, 0] -= ~m[i - 1, j]
    n[:, 1] += ~m[i, j + 1]
    n[:, 1] -= ~m[i, j - 1]
    nrm = np.linalg.norm(n, axis=1)
    ok = nrm > 0
    n[ok] /= nrm[ok, None]
    return idx, n


@dataclass
class K0Tolerances:
    """Tolerances of the limit-class membership checks."""

    algebraic: float = 1e-9
    p_div_p: float = 5e-2
    trace_c: float = 1.0
    div_l2_max: float = 1e12
    interior_margin: int = 0


@dataclass
class K0Report:
    """Residuals of the five membership checks and their verdicts."""

    residuals: dict
    tolerances: dict
    passed: dict
    isolated_cells: int
    h: float

    @property
    def ok(self) -> bool:
        return all(self.passed.values())

    def failures(self) -> list:
        return [k for k, v in self.passed.items() if not v]

    def to_dict(self) -> dict:
        return {"residuals": self.residuals, "tolerances": self.tolerances, "passed": self.passed,
                "ok": self.ok, "isolated_cells": self.isolated_cells, "h": self.h}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _interior(grid: Grid, margin: int) -> np.ndarray:
    m = grid.mask.copy()
    for _ in range(margin):
        p = np.pad(m, 1, constant_values=False)
        m = p[1:-1, 1:-1] & p[:-2, 1:-1] & p[2:, 1:-1] & p[1:-1, :-2] & p[1:-1, 2:]
    return m


def check_K0(field: LineField, tol: Optional[K0Tolerances] = None,
             check_boundary: bool = True) -> K0Report:
    """Evaluate the projection, rank, symmetry, divergence and ``P div P`` checks.

    The divergence check combines finiteness of the interior L2 norm with the
    boundary trace ``max |P n|`` over boundary cells, compared to ``trace_c * h``.
    """
    tol = tol or K0Tolerances()
    g = field.grid
    vals = field.inside_values()
    if len(vals) == 0:
        raise ValueError("field has no inside cells")
    dfx = projection_defects(vals)
    div = divergence(field)
    l2 = div.l2_norm()
    if check_boundary:
        idx, n = boundary_normals(g)
        Pn = np.einsum("kij,kj->ki", field.values[idx], n)
        trace = float(np.linalg.norm(Pn, axis=1).max()) if len(n) else 0.0
    else:
        trace = 0.0
    inner = _interior(g, tol.interior_margin) & div.valid
    pdp = np.einsum("...ij,...j->...i", field.values, div.values)[inner]
    pdp_max = float(np.abs(pdp).max()) if len(pdp) else 0.0
    residuals = {
        "idempotent": float(dfx["idempotent"].max()),
        "rank": float(dfx["rank"].max()),
        "symmetric": float(dfx["symmetric"].max()),
        "div_l2": l2,
        "boundary_trace": trace,
        "p_div_p": pdp_max,
    }
    tols = {
        "idempotent": tol.algebraic,
        "rank": tol.algebraic,
        "symmetric": tol.algebraic,
        "div_l2": tol.div_l2_max,
        "boundary_trace": tol.trace_c * g.h,
        "p_div_p": tol.p_div_p,
    }
    passed = {
        "idempotent": residuals["idempotent"] <= tols["idempotent"],
        "rank": residuals["rank"] <= tols["rank"],
        "symmetric": residuals["symmetric"] <= tols["symmetric"],
        "divergence": bool(np.isfinite(l2) and l2 <= tols["div_l2"]
                           and residuals["boundary_trace"] <= tols["boundary_trace"]),
        "p_div_p": residuals["p_div_p"] <= tols["p_div_p"],
    }
    return K0Report(residuals, tols, {k: bool(v) for k, v in passed.items()}, div.isolated, g.h)


def limit_energy(field: LineField, strict: bool = False, tol: Optional[K0Tolerances] = None,
                 check: bool = True, with_reason: bool = False):
    """``(1/8) sum |div P|^2 h^2``, the limit energy for ``mu = area / 2``.

    With ``check`` the membership report is evaluated first. A non-member
    gives ``inf`` in strict mode and a warning otherwise. ``with_reason``
    returns ``(value, reason)`` where reason is ``None`` for members.
    """
    reason = None
    if check:
        rep = check_K0(field, tol)
        if not rep.ok:
            reason = "not in the limit class: failed " + ", ".join(rep.failures())
            if strict:
                return (math.inf, reason) if with_reason else math.inf
            warnings.warn(reason, RuntimeWarning, stacklevel=2)
    div = divergence(field)
    sq = (div.values[div.valid] ** 2).sum(axis=-1)
    val = 0.125 * _fixed_sum(sq) * field.grid.cell_area
    return (val, reason) if with_reason else val


def save_field_csv(field: LineField, path) -> None:
    g = field.grid
    i, j = g.inside_index
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "x", "y", "P11", "P12", "P22"])
        for a, b in zip(i, j):
            P = field.values[a, b]
            w.writerow([int(a), int(b), f"{g.xs[a]:.12g}", f"{g.ys[b]:.12g}",
                        f"{P[0, 0]:.12g}", f"{P[0, 1]:.12g}", f"{P[1, 1]:.12g}"])
