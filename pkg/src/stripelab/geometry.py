"""Closed plane curves, tubular domains and the boundary distance potential.

Conventions used throughout the package:

* closed curves are stored counter-clockwise;
* the curve normal is the left normal ``J t`` (inward for a convex curve),
  so a circle of radius ``r`` has curvature ``+1/r``;
* ``offset_curve(c, t)`` moves every point by ``t`` along that normal.

The distance potential ``phi`` of a tubular domain is measured from the
selected boundary component; with the inner component as reference its
gradient is the outward (right) normal of the center curve.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree

__all__ = [
    "GeometryError",
    "SelfIntersectionError",
    "ClosedCurve",
    "TubularDomain",
    "DomainDistance",
    "Grid",
    "build_curve",
    "circle_curve",
    "ellipse_curve",
    "rounded_rectangle_curve",
    "curvature",
    "offset_curve",
    "jacobian",
    "signed_distance",
    "level_curve",
    "project_to_center",
    "rasterize",
    "rasterize_rectangle",
    "menger_curvature",
    "segment_intersections",
    "save_curve_csv",
]


class GeometryError(ValueError):
    """Invalid geometric input or a violated precondition."""


class SelfIntersectionError(GeometryError):
    """Raised for non-simple polylines; ``pairs`` holds segment indices."""

    def __init__(self, pairs):
        self.pairs = [tuple(int(v) for v in p) for p in pairs]
        shown = ", ".join(str(p) for p in self.pairs[:8])
        more = "" if len(self.pairs) <= 8 else f" (+{len(self.pairs) - 8} more)"
        super().__init__(f"polyline self-intersects at segment pairs {shown}{more}")


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _left(v):
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def menger_curvature(a, b, c):
    """Signed circumscribed-circle curvature of the triples ``(a, b, c)``.

    Positive for a left turn. Collinear (or coincident) triples give 0.
    """
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    c = np.asarray(c, float)
    ab = b - a
    bc = c - b
    ca = a - c
    cr = _cross(ab, bc)
    la = np.linalg.norm(ab, axis=-1)
    lb = np.linalg.norm(bc, axis=-1)
    den = la * lb * np.linalg.norm(ca, axis=-1)
    flat = (np.abs(cr) <= 1e-14 * la * lb) | (den <= 0)
    return np.where(flat, 0.0, 2.0 * cr / np.where(flat, 1.0, den))


def segment_intersections(vertices, closed=True, max_pairs=64):
    """Return index pairs of intersecting non-adjacent segments.

    A sweep over segments sorted by their minimal x coordinate limits the
    candidate pairs; the exact test uses orientation predicates. Adjacent
    segments are flagged only when they fold back onto each other.
    """
    v = np.asarray(vertices, float)
    n = len(v)
    if closed:
        a, b = v, np.roll(v, -1, axis=0)
        nseg = n
    else:
        a, b = v[:-1], v[1:]
        nseg = n - 1
    if nseg < 2:
        return []
    span = np.ptp(v, axis=0).max() if n else 1.0
    tol = 1e-12 * max(span, 1e-300)
    d = b - a
    found = []

    # folded adjacent segments
    nxt = np.arange(nseg) + 1
    if closed:
        nxt %= nseg
        idx = np.arange(nseg)
    else:
        idx = np.arange(nseg - 1)
        nxt = nxt[:-1]
    cr = _cross(d[idx], d[nxt])
    dt = np.einsum("ij,ij->i", d[idx], d[nxt])
    fold = (np.abs(cr) <= tol * np.linalg.norm(d[idx], axis=1)) & (dt < 0)
    for i in np.flatnonzero(fold):
        found.append((int(idx[i]), int(nxt[i])))

    xmin = np.minimum(a[:, 0], b[:, 0])
    xmax = np.maximum(a[:, 0], b[:, 0])
    ymin = np.minimum(a[:, 1], b[:, 1])
    ymax = np.maximum(a[:, 1], b[:, 1])
    order = np.argsort(xmin, kind="stable")
    xs = xmin[order]
    end = np.searchsorted(xs, xmax[order] + tol, side="right")
    counts = end - np.arange(nseg) - 1
    counts = np.maximum(counts, 0)
    total = int(counts.sum())
    if total == 0:
        return sorted(found)[:max_pairs]
    chunk = 4_000_000
    starts = np.arange(nseg)
    pos = 0
    while pos < nseg and len(found) < max_pairs:
        # choose a block of sweep positions with bounded pair count
        cum = np.cumsum(counts[pos:])
        stop = pos + max(1, int(np.searchsorted(cum, chunk)))
        stop = min(stop, nseg)
        cnt = counts[pos:stop]
        ii = np.repeat(starts[pos:stop], cnt)
        if len(ii) == 0:
            pos = stop
            continue
        offs = np.arange(len(ii)) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        jj = ii + 1 + offs
        si, sj = order[ii], order[jj]
        keep = (ymin[si] <= ymax[sj] + tol) & (ymin[sj] <= ymax[si] + tol)
        si, sj = si[keep], sj[keep]
        diff = np.abs(si - sj)
        adj = diff == 1
        if closed:
            adj |= diff == nseg - 1
        si, sj = si[~adj], sj[~adj]
        if len(si):
            p1, p2, p3, p4 = a[si], b[si], a[sj], b[sj]
            d1 = _cross(p4 - p3, p1 - p3)
            d2 = _cross(p4 - p3, p2 - p3)
            d3 = _cross(p2 - p1, p3 - p1)
            d4 = _cross(p2 - p1, p4 - p1)
            hit = (d1 * d2 <= 0) & (d3 * d4 <= 0)
            col = (np.abs(d1) <= tol) & (np.abs(d2) <= tol)
            if np.any(col & hit):
                # collinear: require overlapping projections
                ax = np.where(np.abs(p2[:, 0] - p1[:, 0]) >= np.abs(p2[:, 1] - p1[:, 1]), 0, 1)
                r = np.arange(len(si))
                lo1 = np.minimum(p1[r, ax], p2[r, ax])
                hi1 = np.maximum(p1[r, ax], p2[r, ax])
                lo2 = np.minimum(p3[r, ax], p4[r, ax])
                hi2 = np.maximum(p3[r, ax], p4[r, ax])
                overlap = (lo1 <= hi2 + tol) & (lo2 <= hi1 + tol)
                hit = np.where(col, hit & overlap, hit)
            for i, j in zip(si[hit], sj[hit]):
                found.append((int(min(i, j)), int(max(i, j))))
                if len(found) >= max_pairs:
                    break
        pos = stop
    return sorted(set(found))[:max_pairs]


@dataclass(frozen=True, eq=False)
class ClosedCurve:
    """Closed, simple, counter-clockwise polyline.

    Parameters
    ----------
    vertices : ndarray, shape (n, 2)
        Ordered vertices; the closing edge ``v[-1] -> v[0]`` is implicit.
    """

    vertices: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise GeometryError("a closed curve needs at least 3 two-dimensional vertices")
        if not np.all(np.isfinite(v)):
            raise GeometryError("vertices must be finite")
        diag = float(np.hypot(*np.ptp(v, axis=0)))
        steps = np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1)
        if diag <= 0 or np.any(steps <= 1e-12 * diag):
            raise GeometryError("consecutive vertices must be distinct")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @property
    def n(self) -> int:
        return len(self.vertices)

    @cached_property
    def edges(self) -> np.ndarray:
        return np.roll(self.vertices, -1, axis=0) - self.vertices

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.edges, axis=1)

    @cached_property
    def cumulative_arclength(self) -> np.ndarray:
        """Arclength at each vertex, starting with 0 at vertex 0."""
        return np.concatenate([[0.0], np.cumsum(self.edge_lengths)[:-1]])

    @cached_property
    def total_length(self) -> float:
        return float(self.edge_lengths.sum())

    @property
    def closed(self) -> bool:
        return True

    @cached_property
    def signed_area(self) -> float:
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        return 0.5 * float(np.sum(v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]))

    @cached_property
    def tangents(self) -> np.ndarray:
        """Unit tangents at the vertices from the centred chord."""
        v = self.vertices
        d = np.roll(v, -1, axis=0) - np.roll(v, 1, axis=0)
        return d / np.linalg.norm(d, axis=1)[:, None]

    @cached_property
    def normals(self) -> np.ndarray:
        """Left (inward for convex curves) unit normals at the vertices."""
        return _left(self.tangents)

    @cached_property
    def vertex_curvature(self) -> np.ndarray:
        """Menger curvature of each vertex with its two neighbours."""
        v = self.vertices
        return menger_curvature(np.roll(v, 1, axis=0), v, np.roll(v, -1, axis=0))

    @cached_property
    def turning_angles(self) -> np.ndarray:
        e = self.edges
        ep = np.roll(e, 1, axis=0)
        return np.arctan2(_cross(ep, e), np.einsum("ij,ij->i", ep, e))

    @cached_property
    def kappa_max(self) -> float:
        return float(np.max(np.abs(self.vertex_curvature)))

    @cached_property
    def curvature_derivative(self) -> np.ndarray:
        """Centred difference of the vertex curvature along arclength."""
        k = self.vertex_curvature
        ds = self.edge_lengths
        span = ds + np.roll(ds, 1)
        return (np.roll(k, -1) - np.roll(k, 1)) / span

    @cached_property
    def spline(self) -> CubicSpline:
        s = np.concatenate([self.cumulative_arclength, [self.total_length]])
        pts = np.vstack([self.vertices, self.vertices[:1]])
        return CubicSpline(s, pts, bc_type="periodic")

    def wrap(self, s):
        return np.mod(np.asarray(s, float), self.total_length)

    def point_at(self, s) -> np.ndarray:
        """Point on the smooth periodic interpolant at arclength ``s``."""
        return self.spline(self.wrap(s))

    def tangent_at(self, s) -> np.ndarray:
        d = self.spline(self.wrap(s), 1)
        return d / np.linalg.norm(d, axis=-1)[..., None]

    def normal_at(self, s) -> np.ndarray:
        return _left(self.tangent_at(s))

    def curvature_at(self, s) -> np.ndarray:
        """Vertex Menger curvature, linearly interpolated in arclength."""
        s = self.wrap(s)
        knots = np.concatenate([self.cumulative_arclength, [self.total_length]])
        vals = np.concatenate([self.vertex_curvature, self.vertex_curvature[:1]])
        return np.interp(s, knots, vals)

    def resampled(self, count: int, method: str = "spline") -> "ClosedCurve":
        return ClosedCurve(_resample_closed(self.vertices, count, method))

    def to_rows(self):
        k = self.vertex_curvature
        s = self.cumulative_arclength
        return [(float(s[i]), float(x), float(y), float(k[i])) for i, (x, y) in enumerate(self.vertices)]


def _resample_closed(points, count, method="linear"):
    """Uniform-arclength resampling of a closed polyline."""
    p = np.asarray(points, float)
    closed = np.vstack([p, p[:1]])
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    keep = seg > 0
    if not np.all(keep):
        p = p[keep]
        closed = np.vstack([p, p[:1]])
        seg = seg[keep]
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    target = np.arange(count) * (total / count)
    if method == "linear":
        x = np.interp(target, s, closed[:, 0])
        y = np.interp(target, s, closed[:, 1])
        return np.column_stack([x, y])
    if method != "spline":
        raise GeometryError(f"unknown resampling method {method!r}")
    spl = CubicSpline(s, closed, bc_type="periodic")
    # invert the arclength of the smooth interpolant on a fine table
    uu = np.linspace(0.0, total, 16 * len(p) + 1)
    speed = np.linalg.norm(spl(uu, 1), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(uu))])
    u = np.interp(np.arange(count) * (arc[-1] / count), arc, uu)
    return spl(u)


def build_curve(points, resample_count: Optional[int] = None, method: str = "linear") -> ClosedCurve:
    """Validate a closed loop, orient it counter-clockwise and resample.

    Parameters
    ----------
    points : array_like, shape (n, 2)
        Ordered loop; a repeated closing point is dropped.
    resample_count : int, optional
        Number of uniform-arclength samples. ``None`` keeps the input vertices.
    method : {"linear", "spline"}
        Interpolant used for resampling. Linear keeps polygon corners.

    Raises
    ------
    SelfIntersectionError
        If the input polyline is not simple.
    """
    p = np.asarray(points, float)
    if p.ndim != 2 or p.shape[1] != 2:
        raise GeometryError("points must have shape (n, 2)")
    if len(p) > 1 and np.allclose(p[0], p[-1], rtol=0, atol=1e-12 * max(np.ptp(p), 1e-300)):
        p = p[:-1]
    if len(np.unique(p, axis=0)) < 3:
        raise GeometryError("need at least 3 distinct points")
    pairs = segment_intersections(p, closed=True)
    if pairs:
        raise SelfIntersectionError(pairs)
    area = 0.5 * np.sum(p[:, 0] * np.roll(p[:, 1], -1) - np.roll(p[:, 0], -1) * p[:, 1])
    if area < 0:
        # reverse while keeping vertex 0 first
        p = np.concatenate([p[:1], p[:0:-1]])
    if resample_count is not None:
        if resample_count < 3:
            raise GeometryError("resample_count must be at least 3")
        p = _resample_closed(p, int(resample_count), method)
        pairs = segment_intersections(p, closed=True)
        if pairs:
            raise SelfIntersectionError(pairs)
    return ClosedCurve(p)


def circle_curve(radius: float, n: int = 1000, center=(0.0, 0.0)) -> ClosedCurve:
    """Exact circle samples at uniform arclength, starting at angle 0."""
    if radius <= 0:
        raise GeometryError("radius must be positive")
    th = 2.0 * np.pi * np.arange(n) / n
    pts = np.column_stack([center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)])
    return ClosedCurve(pts)


def ellipse_curve(a: float, b: float, n: int = 1000, center=(0.0, 0.0)) -> ClosedCurve:
    """Ellipse points at (numerically) uniform arclength, starting at ``(a, 0)``."""
    if a <= 0 or b <= 0:
        raise GeometryError("semi-axes must be positive")
    m = 64 * n
    t = np.linspace(0.0, 2.0 * np.pi, m + 1)
    speed = np.hypot(a * np.sin(t), b * np.cos(t))
    arc = np.concatenate([[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(t))])
    tt = np.interp(np.arange(n) * arc[-1] / n, arc, t)
    pts = np.column_stack([center[0] + a * np.cos(tt), center[1] + b * np.sin(tt)])
    return ClosedCurve(pts)


def rounded_rectangle_curve(width: float, height: float, radius: float, n: int = 800,
                            center=(0.0, 0.0)) -> ClosedCurve:
    """Rectangle with circular corners, sampled at exact uniform arclength."""
    if not (0 < radius <= 0.5 * min(width, height)):
        raise GeometryError("corner radius must lie in (0, min(width, height)/2]")
    sx = width - 2 * radius
    sy = height - 2 * radius
    arc = 0.5 * np.pi * radius
    pieces = [sx, arc, sy, arc, sx, arc, sy, arc]
    cum = np.concatenate([[0.0], np.cumsum(pieces)])
    total = cum[-1]
    s = np.arange(n) * total / n
    cx, cy = 0.5 * sx, 0.5 * sy
    corners = [(cx, cy), (-cx, cy), (-cx, -cy), (cx, -cy)]
    starts = [(-cx, -cy - radius), None, (cx + radius, -cy), None,
              (cx, cy + radius), None, (-cx - radius, cy), None]
    dirs = [(1, 0), None, (0, 1), None, (-1, 0), None, (0, -1), None]
    corner_of = {1: (3, -0.5 * np.pi), 3: (0, 0.0), 5: (1, 0.5 * np.pi), 7: (2, np.pi)}
    pts = np.empty((n, 2))
    k = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, 7)
    local = s - cum[k]
    for piece in range(8):
        sel = k == piece
        if not np.any(sel):
            continue
        if piece % 2 == 0:
            x0, y0 = starts[piece]
            dx, dy = dirs[piece]
            pts[sel, 0] = x0 + dx * local[sel]
            pts[sel, 1] = y0 + dy * local[sel]
        else:
            ci, ang0 = corner_of[piece]
            ang = ang0 + local[sel] / radius
            pts[sel, 0] = corners[ci][0] + radius * np.cos(ang)
            pts[sel, 1] = corners[ci][1] + radius * np.sin(ang)
    pts += np.asarray(center, float)
    return ClosedCurve(pts)


def curvature(curve: ClosedCurve, s) -> np.ndarray:
    """Signed curvature at arclength ``s`` (Menger estimator, left normal)."""
    s = np.asarray(s, float)
    if np.any(s < 0) or np.any(s >= curve.total_length):
        raise GeometryError("arclength must lie in [0, L)")
    return curve.curvature_at(s)


def offset_curve(curve: ClosedCurve, t: float, count: Optional[int] = None) -> ClosedCurve:
    """The curve ``s -> gamma(s) + t * n(s)`` with its own arclength chart."""
    if abs(t) * curve.kappa_max >= 1.0:
        raise GeometryError(f"offset {t} exceeds the curvature radius 1/{curve.kappa_max:.6g}")
    if t == 0:
        return curve
    pts = curve.vertices + t * curve.normals
    count = curve.n if count is None else count
    return ClosedCurve(_resample_closed(pts, count, "spline"))


def jacobian(curve: ClosedCurve, s, t) -> np.ndarray:
    """Area element ``1 - t kappa(s)`` of the normal-coordinate chart."""
    k = curve.curvature_at(s)
    t = np.asarray(t, float)
    if np.any(np.abs(t * k) >= 1.0):
        raise GeometryError("|t kappa| must stay below 1")
    return 1.0 - t * k


@dataclass(frozen=True)
class Projection2Curve:
    """Result of projecting points onto a curve."""

    foot: np.ndarray
    s: np.ndarray
    t: np.ndarray
    tangent: np.ndarray

    @property
    def normal(self):
        return _left(self.tangent)


def _project(curve: ClosedCurve, x, newton: int = 4, k: int = 4, check_radius=None):
    x = np.atleast_2d(np.asarray(x, float))
    v = curve.vertices
    n = curve.n
    tree = _curve_tree(curve)
    k = min(k, n)
    _, idx = tree.query(x, k=k)
    idx = np.atleast_2d(idx).reshape(len(x), k)
    best_d = np.full(len(x), np.inf)
    best_s = np.zeros(len(x))
    second = np.full(len(x), np.inf)
    second_s = np.zeros(len(x))
    cum = curve.cumulative_arclength
    ell = curve.edge_lengths
    for col in range(k):
        for seg in (idx[:, col], (idx[:, col] - 1) % n):
            a = v[seg]
            e = curve.edges[seg]
            u = np.clip(np.einsum("ij,ij->i", x - a, e) / ell[seg] ** 2, 0.0, 1.0)
            p = a + u[:, None] * e
            d = np.linalg.norm(x - p, axis=1)
            sv = cum[seg] + u * ell[seg]
            better = d < best_d - 1e-15
            # keep the runner-up from a different part of the curve
            far = np.abs(_circ_diff(sv, best_s, curve.total_length)) > 4.0 * ell.max()
            demote = better & far
            second = np.where(demote, best_d, second)
            second_s = np.where(demote, best_s, second_s)
            upd2 = (~better) & (d < second) & (np.abs(_circ_diff(sv, best_s, curve.total_length)) > 4.0 * ell.max())
            second = np.where(upd2, d, second)
            second_s = np.where(upd2, sv, second_s)
            best_d = np.where(better, d, best_d)
            best_s = np.where(better, sv, best_s)
    if check_radius is not None:
        inside = best_d <= check_radius
        amb = inside & (np.abs(second - best_d) <= 1e-9 * max(curve.total_length, 1.0))
        if np.any(amb):
            raise AssertionError("ambiguous nearest point on the center curve")
    spl = curve.spline
    L = curve.total_length
    s = best_s.copy()
    for _ in range(newton):
        g = spl(np.mod(s, L))
        g1 = spl(np.mod(s, L), 1)
        g2 = spl(np.mod(s, L), 2)
        r = g - x
        f = np.einsum("ij,ij->i", r, g1)
        fp = np.einsum("ij,ij->i", g1, g1) + np.einsum("ij,ij->i", r, g2)
        step = np.where(fp > 0, f / np.where(fp > 0, fp, 1.0), 0.0)
        step = np.clip(step, -ell.max(), ell.max())
        s = s - step
    s = np.mod(s, L)
    foot = spl(s)
    tan = spl(s, 1)
    tan /= np.linalg.norm(tan, axis=1)[:, None]
    t = np.einsum("ij,ij->i", x - foot, _left(tan))
    return Projection2Curve(foot=foot, s=s, t=t, tangent=tan)


def _circ_diff(a, b, period):
    d = np.mod(a - b + 0.5 * period, period) - 0.5 * period
    return d


_TREES: dict = {}


def _curve_tree(curve: ClosedCurve) -> cKDTree:
    key = id(curve)
    hit = _TREES.get(key)
    if hit is not None and hit[0] is curve:
        return hit[1]
    tree = cKDTree(curve.vertices)
    if len(_TREES) > 64:
        _TREES.clear()
    _TREES[key] = (curve, tree)
    return tree


@dataclass(frozen=True, eq=False)
class TubularDomain:
    """Tube ``center + B(0, half_width)`` around a simple closed curve."""

    center: ClosedCurve
    half_width: float

    def __post_init__(self):
        d = float(self.half_width)
        if not d > 0:
            raise GeometryError("half_width must be positive")
        object.__setattr__(self, "half_width", d)
        if d * self.kappa_max >= 1.0:
            raise GeometryError(
                f"half_width * kappa_max = {d * self.kappa_max:.4g} must be < 1 for a tubular domain")
        # global reach: distant parts of the curve must stay 2*delta apart
        c = self.center
        tree = _curve_tree(c)
        pairs = tree.query_pairs(2.0 * d, output_type="ndarray")
        if len(pairs):
            s = c.cumulative_arclength
            sep = np.abs(_circ_diff(s[pairs[:, 0]], s[pairs[:, 1]], c.total_length))
            limit = np.pi * d * 1.01 + 2.0 * c.edge_lengths.max()
            if np.any(sep > limit):
                raise GeometryError("tube overlaps itself: distant curve parts are closer than 2*delta")

    @property
    def delta(self) -> float:
        return self.half_width

    @property
    def kappa_max(self) -> float:
        return self.center.kappa_max

    @property
    def area(self) -> float:
        """Continuum area ``2 delta L``."""
        return 2.0 * self.half_width * self.center.total_length

    @property
    def perimeter(self) -> float:
        """Continuum boundary length ``2L`` (the curvature terms cancel)."""
        return 2.0 * self.center.total_length

    def project(self, x, check: bool = True) -> Projection2Curve:
        return _project(self.center, x, check_radius=self.half_width if check else None)

    def contains(self, x, tol: float = 1e-12) -> np.ndarray:
        pr = self.project(x, check=False)
        return np.abs(pr.t) <= self.half_width + tol

    def bounding_box(self):
        v = self.center.vertices
        lo = v.min(axis=0) - self.half_width
        hi = v.max(axis=0) + self.half_width
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    def boundary(self, which: str = "inner") -> ClosedCurve:
        sign = 1.0 if which == "inner" else -1.0
        return offset_curve(self.center, sign * self.half_width)


def project_to_center(domain: TubularDomain, x) -> np.ndarray:
    """Nearest point on the center curve for points within ``delta``."""
    x = np.asarray(x, float)
    pr = domain.project(x)
    far = np.abs(pr.t) > domain.half_width * (1 + 1e-12)
    if np.any(far):
        raise GeometryError("points must lie within half_width of the center curve")
    return pr.foot[0] if x.ndim == 1 else pr.foot


@dataclass(frozen=True, eq=False)
class DomainDistance:
    """Distance ``phi`` to one boundary component of a tubular domain.

    ``reference="inner"`` selects the component on the left-normal side of
    the center curve; then ``phi = delta - t`` with ``t`` the left-normal
    coordinate and ``grad phi`` is the right normal.
    """

    domain: TubularDomain
    reference: str = "inner"

    def __post_init__(self):
        if self.reference not in ("inner", "outer"):
            raise GeometryError("reference must be 'inner' or 'outer'")

    @property
    def sign(self) -> float:
        """``t = sign * (phi - delta)``; also ``grad phi = sign * left normal``."""
        return -1.0 if self.reference == "inner" else 1.0

    def evaluate(self, x, tol: float = 1e-12):
        pr = self.domain.project(x, check=False)
        d = self.domain.half_width
        if np.any(np.abs(pr.t) > d + tol * max(1.0, d)):
            raise GeometryError("point outside the closed domain")
        phi = d + self.sign * pr.t
        return np.clip(phi, 0.0, 2 * d), pr

    def gradient(self, x) -> np.ndarray:
        pr = self.domain.project(x, check=False)
        return self.sign * pr.normal

    def level_offset(self, t: float) -> float:
        """Left-normal offset of the level set ``{phi = t}``."""
        return self.sign * (t - self.domain.half_width)


def signed_distance(dd: DomainDistance, x):
    """``phi(x)``, the distance to the reference boundary component."""
    phi, _ = dd.evaluate(x)
    return float(phi[0]) if np.asarray(x).ndim == 1 else phi


def level_curve(dd: DomainDistance, t: float, count: Optional[int] = None) -> ClosedCurve:
    """The closed level curve ``{phi = t}`` for ``0 < t < 2 delta``."""
    d = dd.domain.half_width
    if not (0.0 < t < 2.0 * d):
        raise GeometryError(f"level {t} outside (0, {2 * d})")
    return offset_curve(dd.domain.center, dd.level_offset(t), count)


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform cell grid with an inside mask.

    Cell ``(i, j)`` has center ``(x0 + (i + 1/2) h, y0 + (j + 1/2) h)``.
    """

    x0: float
    y0: float
    h: float
    mask: np.ndarray = field(repr=False)
    domain: Optional[TubularDomain] = field(default=None, repr=False)

    def __post_init__(self):
        m = np.array(self.mask, dtype=bool)
        if m.ndim != 2:
            raise GeometryError("mask must be two-dimensional")
        if not self.h > 0:
            raise GeometryError("h must be positive")
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)

    @property
    def shape(self):
        return self.mask.shape

    @property
    def cell_area(self) -> float:
        return self.h * self.h

    @property
    def box(self):
        nx, ny = self.shape
        return (self.x0, self.y0, self.x0 + nx * self.h, self.y0 + ny * self.h)

    @cached_property
    def xs(self):
        return self.x0 + (np.arange(self.shape[0]) + 0.5) * self.h

    @cached_property
    def ys(self):
        return self.y0 + (np.arange(self.shape[1]) + 0.5) * self.h

    def cell_centers(self):
        return np.meshgrid(self.xs, self.ys, indexing="ij")

    @cached_property
    def inside_index(self):
        """Row-major (i, j) indices of inside cells."""
        return np.nonzero(self.mask)

    def inside_points(self) -> np.ndarray:
        i, j = self.inside_index
        return np.column_stack([self.xs[i], self.ys[j]])

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    @property
    def mask_area(self) -> float:
        return self.count * self.cell_area

    @cached_property
    def boundary_cells(self) -> np.ndarray:
        """Inside cells with a 4-neighbour outside the mask (or the array)."""
        m = np.pad(self.mask, 1, constant_values=False)
        inner = m[1:-1, 1:-1]
        full = m[:-2, 1:-1] & m[2:, 1:-1] & m[1:-1, :-2] & m[1:-1, 2:]
        return inner & ~full

    def with_mask(self, mask) -> "Grid":
        return Grid(self.x0, self.y0, self.h, mask, self.domain)


def rasterize(domain: TubularDomain, h: float, pad: int = 2) -> Grid:
    """Cell-center membership raster of a tubular domain."""
    if not h > 0:
        raise GeometryError("h must be positive")
    x0, y0, x1, y1 = domain.bounding_box()
    nx = int(np.ceil((x1 - x0) / h)) + 2 * pad
    ny = int(np.ceil((y1 - y0) / h)) + 2 * pad
    cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    gx0 = cx - 0.5 * nx * h
    gy0 = cy - 0.5 * ny * h
    xs = gx0 + (np.arange(nx) + 0.5) * h
    ys = gy0 + (np.arange(ny) + 0.5) * h
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    mask = np.zeros(len(pts), dtype=bool)
    c = domain.center
    tree = _curve_tree(c)
    # coarse filter on the vertex distance, then exact normal coordinate
    sag = c.edge_lengths.max() ** 2 * c.kappa_max + c.edge_lengths.max()
    dv, _ = tree.query(pts, k=1, distance_upper_bound=domain.half_width + sag)
    cand = np.flatnonzero(np.isfinite(dv))
    for lo in range(0, len(cand), 200_000):
        sub = cand[lo:lo + 200_000]
        pr = _project(c, pts[sub])
        mask[sub] = np.abs(pr.t) < domain.half_width
    mask = mask.reshape(nx, ny)
    grid = Grid(gx0, gy0, h, mask, domain)
    if grid.count == 0 or 2 * domain.half_width < 2 * h:
        warnings.warn(f"raster with h={h} resolves the domain poorly ({grid.count} inside cells)",
                      RuntimeWarning, stacklevel=2)
    return grid


def rasterize_rectangle(x0: float, y0: float, x1: float, y1: float, h: float) -> Grid:
    """Full-mask grid covering ``[x0, x1] x [y0, y1]`` (sides multiple of h)."""
    nx = int(round((x1 - x0) / h))
    ny = int(round((y1 - y0) / h))
    if nx < 1 or ny < 1 or abs(nx * h - (x1 - x0)) > 1e-9 * h * nx or abs(ny * h - (y1 - y0)) > 1e-9 * h * ny:
        raise GeometryError("rectangle sides must be positive integer multiples of h")
    return Grid(float(x0), float(y0), float(h), np.ones((nx, ny), dtype=bool))


def save_curve_csv(curve: ClosedCurve, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "x", "y", "kappa"])
        for row in curve.to_rows():
            w.writerow([f"{v:.12g}" for v in row])
