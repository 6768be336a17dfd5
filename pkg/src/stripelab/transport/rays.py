"""Transport rays of a Kantorovich potential seen from an interface.

For every sample ``gamma(s)`` of an interface (``u = 1`` on the left) the
ray direction is ``theta = grad phi``, which points into ``{u = 1}``. Along
``+theta`` the potential grows with unit slope up to ``ell+``; along
``-theta`` it drops with unit slope down to ``-ell-``. ``l+`` is the extent
of ``{u = 1}`` along ``+theta``. The mass coordinate of the ray is
``m(t) = t sin(beta) - t^2 alpha' / 2`` with ``sin(beta) = det(gamma', theta)``
and ``alpha`` the angle of ``theta``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.signal import savgol_filter
from scipy.spatial import cKDTree

from ..pattern import InterfaceSet
from .exact import KantorovichPotential, TransportPlan, _tree_coords, _wrap
from .stripe_map import ChartError

__all__ = [
    "RayOptions",
    "RayField",
    "MassChart",
    "mass_coordinate",
    "inverse_mass_coordinate",
    "mass_coordinate_values",
    "inverse_mass_values",
    "extract_rays",
    "ray_cost_lower_bound",
    "ray_crossings",
    "save_rays_csv",
]


def mass_coordinate_values(t, sin_beta, alpha_prime):
    """``m = t sin(beta) - t^2 alpha' / 2``."""
    t = np.asarray(t, dtype=float)
    return t * sin_beta - 0.5 * t * t * alpha_prime


def inverse_mass_values(m, sin_beta, alpha_prime):
    """Inverse of :func:`mass_coordinate_values` on the branch through 0.

    ``t = (sin b / a') [1 - sqrt(1 - 2 a' m / sin^2 b)]``, evaluated in the
    rationalised form that reduces to ``m / sin b`` when ``a' = 0``.
    """
    m = np.asarray(m, dtype=float)
    sb = np.asarray(sin_beta, dtype=float)
    ap = np.asarray(alpha_prime, dtype=float)
    disc = 1.0 - 2.0 * ap * m / (sb * sb)
    if np.any(disc < 0):
        raise ChartError("mass coordinate beyond the focal point (negative discriminant)")
    return 2.0 * m / (sb * (1.0 + np.sqrt(disc)))


@dataclass(frozen=True)
class RayOptions:
    """Numerical parameters of the ray extraction."""

    grad_radius: float = 3.0      # in units of h
    slope_tol: float = 0.02
    step: float = 0.5             # marching step in units of h
    max_length: Optional[float] = None   # default 4 eps
    min_sin_beta: float = 0.05
    alpha_window: int = 5
    tangent_window: int = 15
    sample_spacing: float = 1.0   # in units of h
    theta_source: str = "lsq"     # "lsq" | "argmin"
    smooth_length: float = 1.0    # along-curve averaging window, in units of eps


@dataclass(eq=False)
class RayField:
    """Per-sample ray data; arrays are concatenated over the interface curves."""

    curve_id: np.ndarray = field(repr=False)
    s: np.ndarray = field(repr=False)
    ds: np.ndarray = field(repr=False)
    points: np.ndarray = field(repr=False)
    tangent: np.ndarray = field(repr=False)
    theta: np.ndarray = field(repr=False)
    grad_norm: np.ndarray = field(repr=False)
    n_atoms: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    alpha_prime: np.ndarray = field(repr=False)
    sin_beta: np.ndarray = field(repr=False)
    ell_plus: np.ndarray = field(repr=False)
    ell_minus: np.ndarray = field(repr=False)
    l_plus: np.ndarray = field(repr=False)
    M: np.ndarray = field(repr=False)
    in_E: np.ndarray = field(repr=False)
    reason: np.ndarray = field(repr=False)
    eps: float
    h: float
    options: RayOptions = field(default_factory=RayOptions)

    def __len__(self):
        return len(self.s)

    @property
    def beta(self) -> np.ndarray:
        return np.arcsin(np.clip(self.sin_beta, -1.0, 1.0))

    @property
    def excluded_fraction(self) -> float:
        return float(1.0 - self.in_E.mean()) if len(self.in_E) else 1.0

    @property
    def degenerate(self) -> np.ndarray:
        """Samples rejected because the ray is (nearly) tangent to the interface."""
        return self.reason == "tangent"

    def reason_counts(self) -> dict:
        keys, cnt = np.unique(self.reason, return_counts=True)
        return {str(k): int(c) for k, c in zip(keys, cnt)}

    def chart(self) -> "MassChart":
        e = self.in_E
        return MassChart(self.sin_beta[e], self.alpha_prime[e], -self.ell_minus[e], self.ell_plus[e],
                         np.flatnonzero(e))

    def segments(self):
        a = self.points - self.ell_minus[:, None] * self.theta
        b = self.points + self.ell_plus[:, None] * self.theta
        return a, b


@dataclass(eq=False)
class MassChart:
    """Mass coordinates ``m(s, t)`` of the E-samples of a ray field."""

    sin_beta: np.ndarray
    alpha_prime: np.ndarray
    t_min: np.ndarray
    t_max: np.ndarray
    index: np.ndarray = field(repr=False, default=None)

    def m(self, i, t):
        return mass_coordinate_values(t, self.sin_beta[i], self.alpha_prime[i])

    def t(self, i, m):
        return inverse_mass_values(m, self.sin_beta[i], self.alpha_prime[i])

    def is_monotone(self, n: int = 33) -> bool:
        """``dm/dt = sin b - t a' > 0`` on every sampled ray interval."""
        u = np.linspace(0.0, 1.0, n)
        t = self.t_min[:, None] + (self.t_max - self.t_min)[:, None] * u[None, :]
        dm = self.sin_beta[:, None] - t * self.alpha_prime[:, None]
        return bool(np.all(dm > 0))


def mass_coordinate(chart: MassChart, s, t):
    """Forward chart ``m(s, t)``; ``s`` indexes the chart samples."""
    return chart.m(s, t)


def inverse_mass_coordinate(chart: MassChart, s, m):
    """Inverse chart ``t(s, m)``; rejects masses beyond the focal point."""
    return chart.t(s, m)


def _resample(curve, spacing):
    """Uniform arclength samples of a (possibly torus-wrapping) closed polyline."""
    v = np.asarray(curve.vertices, dtype=float)
    shift = np.asarray(curve.shift, dtype=float)
    closed = np.vstack([v, v[:1] + shift])
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    L = float(cum[-1])
    n = max(8, int(round(L / spacing)))
    s = np.arange(n) * (L / n)
    pts = np.column_stack([np.interp(s, cum, closed[:, 0]), np.interp(s, cum, closed[:, 1])])
    return s, pts, L, shift


def _smooth_tangent(s, pts, L, shift, window):
    n = len(s)
    drift = shift[None, :] * (s / L)[:, None]
    q = pts - drift
    w = min(window if window % 2 else window + 1, n - (1 - n % 2))
    if w < 5:
        d = np.roll(pts, -1, axis=0) - np.roll(pts, 1, axis=0)
        d[0] += shift
        d[-1] += shift
    else:
        ds = L / n
        d = savgol_filter(q, w, 2, deriv=1, delta=ds, axis=0, mode="wrap") + shift[None, :] / L
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def _lsq_gradient(points, atoms, values, tree, radius, period, origin):
    q = _tree_coords(points.copy(), period, origin) if period is not None else points
    lists = tree.query_ball_point(q, radius)
    g = np.full((len(points), 2), np.nan)
    cnt = np.zeros(len(points), dtype=int)
    for i, lst in enumerate(lists):
        cnt[i] = len(lst)
        if len(lst) < 3:
            continue
        idx = np.sort(np.asarray(lst))
        d = _wrap(atoms[idx] - points[i], period)
        A = np.column_stack([np.ones(len(idx)), d])
        sol, *_ = np.linalg.lstsq(A, values[idx], rcond=None)
        g[i] = sol[1:]
    return g, cnt


def _window_slope(s, a, L, window):
    """Least-squares slope of ``a(s)`` over a centred periodic window."""
    n = len(s)
    k = window // 2
    if n < window:
        k = max(1, (n - 1) // 2)
    offs = np.arange(-k, k + 1)
    idx = (np.arange(n)[:, None] + offs[None, :]) % n
    ss = s[idx] + L * np.floor_divide(np.arange(n)[:, None] + offs[None, :], n)
    aa = a[idx]
    ss = ss - ss.mean(axis=1, keepdims=True)
    aa = aa - aa.mean(axis=1, keepdims=True)
    return np.sum(ss * aa, axis=1) / np.sum(ss * ss, axis=1)


def _march_unit_slope(pot, points, direction, sign, dt, nsteps, tol):
    """Length over which ``sign * (phi(x + t d) - phi(x)) = t`` holds."""
    n = len(points)
    t = dt * np.arange(nsteps + 1)
    z = points[:, None, :] + t[None, :, None] * direction[:, None, :]
    phi = sign * pot(z.reshape(-1, 2)).reshape(n, nsteps + 1)
    slope = np.diff(phi, axis=1) / dt
    bad = slope < 1.0 - tol
    out = np.full(n, t[-1])
    has = bad.any(axis=1)
    k = np.argmax(bad, axis=1)
    rows = np.flatnonzero(has)
    kk = k[rows]
    nxt = np.where(kk + 1 < nsteps, slope[rows, np.minimum(kk + 1, nsteps - 1)], 0.0)
    sb = np.minimum(nxt, 1.0 - tol)
    jump = phi[rows, kk + 1] - phi[rows, kk]
    frac = np.clip((jump - sb * dt) / ((1.0 - sb) * dt), 0.0, 1.0)
    out[rows] = t[kk] + frac * dt
    return out


def _march_support(points, direction, is_source, tree, period, origin, dt, nsteps, h, bisect=8):
    """Extent along ``direction`` over which the nearest atom is a source.

    Points farther than ``h / sqrt(2)`` from every atom lie outside the
    raster and end the support.
    """
    n = len(points)
    reach = h * (0.5 ** 0.5) * (1 + 1e-9)

    def inside(z):
        q = _tree_coords(z.copy(), period, origin) if period is not None else z
        d, j = tree.query(q, k=1)
        return is_source[j] & (d <= reach)

    t = dt * np.arange(1, nsteps + 1)
    z = points[:, None, :] + t[None, :, None] * direction[:, None, :]
    ins = inside(z.reshape(-1, 2)).reshape(n, nsteps)
    out_ = ~ins
    has = out_.any(axis=1)
    k = np.argmax(out_, axis=1)
    lo = np.where(k > 0, t[np.maximum(k - 1, 0)], 0.0)
    hi = t[k]
    lo = np.where(has, lo, t[-1])
    hi = np.where(has, hi, t[-1])
    for _ in range(bisect):
        mid = 0.5 * (lo + hi)
        m_in = inside(points + mid[:, None] * direction)
        lo = np.where(m_in, mid, lo)
        hi = np.where(m_in, hi, mid)
    return 0.5 * (lo + hi)


def extract_rays(pot: KantorovichPotential, iset: InterfaceSet, plan: TransportPlan,
                 eps: float, h: Optional[float] = None, options: Optional[RayOptions] = None) -> RayField:
    """Rays of ``pot`` through uniform samples of the interfaces ``iset``.

    A sample belongs to ``E`` when its gradient neighbourhood holds at least
    three atoms, ``||grad phi| - 1| <= slope_tol`` and
    ``sin(beta) >= min_sin_beta``.
    """
    opt = options or RayOptions()
    h = float(h if h is not None else plan.scale)
    period = plan.period
    atoms = pot.points
    values = pot.values
    origin = atoms.min(axis=0)
    if period is not None:
        tree = cKDTree(_tree_coords(atoms.copy(), period, origin), boxsize=np.array(period))
    else:
        tree = cKDTree(atoms)
    is_source = np.zeros(len(atoms), dtype=bool)
    is_source[: len(pot.sources)] = True
    tmax = opt.max_length if opt.max_length is not None else 4.0 * eps
    dt = opt.step * h
    nsteps = int(np.ceil(tmax / dt))

    cols = {k: [] for k in ("cid", "s", "ds", "pts", "tan", "alpha_p")}
    for cid, c in enumerate(iset.curves):
        s, pts, L, shift = _resample(c, opt.sample_spacing * h)
        cols["cid"].append(np.full(len(s), cid))
        cols["s"].append(s)
        cols["ds"].append(np.full(len(s), L / len(s)))
        cols["pts"].append(pts)
        cols["tan"].append(_smooth_tangent(s, pts, L, shift, opt.tangent_window))
    cid = np.concatenate(cols["cid"]) if cols["cid"] else np.zeros(0, int)
    s = np.concatenate(cols["s"]) if cols["s"] else np.zeros(0)
    ds = np.concatenate(cols["ds"]) if cols["ds"] else np.zeros(0)
    pts = np.vstack(cols["pts"]) if cols["pts"] else np.zeros((0, 2))
    tan = np.vstack(cols["tan"]) if cols["tan"] else np.zeros((0, 2))

    if opt.theta_source == "argmin":
        _, j = pot.argmin(pts)
        d = _wrap(pts - pot.sinks[j], period)
        g = d / np.maximum(np.linalg.norm(d, axis=1, keepdims=True), 1e-300)
        cnt = np.full(len(pts), 99)
        grad = np.ones(len(pts))
    else:
        g, cnt = _lsq_gradient(pts, atoms, values, tree, opt.grad_radius * h, period, origin)
        grad = np.linalg.norm(g, axis=1)
    ok_grad = np.isfinite(grad) & (grad > 0)
    theta = np.zeros_like(pts)
    theta[ok_grad] = g[ok_grad] / grad[ok_grad, None]
    sinb = tan[:, 0] * theta[:, 1] - tan[:, 1] * theta[:, 0]

    alpha = np.zeros(len(pts))
    alpha_p = np.zeros(len(pts))
    for c in np.unique(cid):
        sel = np.flatnonzero(cid == c)
        th = theta[sel]
        a = np.arctan2(th[:, 1], th[:, 0])
        # fall back to the tangent-normal angle where no gradient exists
        miss = ~ok_grad[sel]
        if miss.any():
            tn = tan[sel][miss]
            a[miss] = np.arctan2(tn[:, 0], -tn[:, 1])
        au = np.unwrap(a)
        L = float(ds[sel].sum())
        # remove the winding so the periodic window fit sees a periodic signal
        wind = np.round((au[-1] - au[0] + (au[1] - au[0] if len(au) > 1 else 0)) / (2 * np.pi))
        ramp = 2 * np.pi * wind * s[sel] / L
        alpha[sel] = au
        alpha_p[sel] = _window_slope(s[sel], au - ramp, L, opt.alpha_window) + 2 * np.pi * wind / L

    reason = np.full(len(pts), "", dtype=object)
    reason[cnt < 3] = "deficient"
    slope_bad = (reason == "") & (~ok_grad | (np.abs(grad - 1.0) > opt.slope_tol))
    reason[slope_bad] = "slope"
    tangent_bad = (reason == "") & (sinb < opt.min_sin_beta)
    reason[tangent_bad] = "tangent"
    in_E = reason == ""
    reason[in_E] = "ok"

    ell_p = np.zeros(len(pts))
    ell_m = np.zeros(len(pts))
    l_p = np.zeros(len(pts))
    idx = np.flatnonzero(ok_grad)
    if len(idx):
        ell_p[idx] = _march_unit_slope(pot, pts[idx], theta[idx], 1.0, dt, nsteps, opt.slope_tol)
        ell_m[idx] = _march_unit_slope(pot, pts[idx], -theta[idx], -1.0, dt, nsteps, opt.slope_tol)
        l_p[idx] = _march_support(pts[idx], theta[idx], is_source, tree, period, origin, dt, nsteps, h)
    if opt.smooth_length > 0:
        for c in np.unique(cid):
            sel = np.flatnonzero(cid == c)
            w = int(round(opt.smooth_length * eps / ds[sel][0]))
            if w >= 2:
                for arr in (ell_p, ell_m, l_p, sinb, alpha_p):
                    arr[sel] = uniform_filter1d(arr[sel], w, mode="wrap")
    top = np.minimum(l_p, ell_p)
    M = np.where(in_E, mass_coordinate_values(top, sinb, alpha_p), 0.0)
    return RayField(cid, s, ds, pts, tan, theta, grad, cnt, alpha, alpha_p, sinb, ell_p, ell_m, l_p, M,
                    in_E, reason.astype(str), float(eps), h, opt)


def ray_cost_lower_bound(rays: RayField) -> float:
    """``sum ds int_0^M t(s, m) dm`` over E-samples.

    Uses ``int_0^M t dm = sin(b) T^2 / 2 - a' T^3 / 3`` with ``T = t(M)``.
    """
    e = rays.in_E
    T = inverse_mass_values(rays.M[e], rays.sin_beta[e], rays.alpha_prime[e])
    inner = rays.sin_beta[e] * T ** 2 / 2 - rays.alpha_prime[e] * T ** 3 / 3
    return float(np.sum(rays.ds[e] * inner))


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def ray_crossings(rays: RayField, tol: Optional[float] = None, only_E: bool = True) -> int:
    """Number of ray pairs crossing farther than ``tol`` from all endpoints."""
    tol = rays.h if tol is None else tol
    a, b = rays.segments()
    sel = np.flatnonzero(rays.in_E) if only_E else np.arange(len(a))
    a, b = a[sel], b[sel]
    if len(a) < 2:
        return 0
    mid = 0.5 * (a + b)
    half = 0.5 * np.linalg.norm(b - a, axis=1)
    tree = cKDTree(mid)
    pairs = tree.query_pairs(2 * float(half.max()) + tol, output_type="ndarray")
    if len(pairs) == 0:
        return 0
    i, j = pairs[:, 0], pairs[:, 1]
    d1 = b[i] - a[i]
    d2 = b[j] - a[j]
    den = _cross(d1, d2)
    okd = np.abs(den) > 1e-14
    w = a[j] - a[i]
    safe = np.where(okd, den, 1.0)
    u1 = np.where(okd, _cross(w, d2) / safe, -1.0)
    u2 = np.where(okd, _cross(w, d1) / safe, -1.0)
    hit = okd & (u1 >= 0) & (u1 <= 1) & (u2 >= 0) & (u2 <= 1)
    p = a[i] + u1[:, None] * d1
    ends = np.stack([a[i], b[i], a[j], b[j]], axis=1)
    dend = np.linalg.norm(ends - p[:, None, :], axis=2).min(axis=1)
    return int(np.sum(hit & (dend > tol)))


def save_rays_csv(rays: RayField, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["curve_id", "s", "in_E", "theta_x", "theta_y", "alpha", "beta",
                    "ell_plus", "ell_minus", "l_plus", "M"])
        beta = rays.beta
        for k in range(len(rays)):
            w.writerow([int(rays.curve_id[k]), f"{rays.s[k]:.12g}", int(rays.in_E[k]),
                        f"{rays.theta[k, 0]:.12g}", f"{rays.theta[k, 1]:.12g}", f"{rays.alpha[k]:.12g}",
                        f"{beta[k]:.12g}", f"{rays.ell_plus[k]:.12g}", f"{rays.ell_minus[k]:.12g}",
                        f"{rays.l_plus[k]:.12g}", f"{rays.M[k]:.12g}"])
