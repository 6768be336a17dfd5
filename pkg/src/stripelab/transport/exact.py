"""Exact discrete Wasserstein-1 transport between equal-mass atom sets.

All atoms carry the same mass ``h^2``, so optimal plans can be taken to be
permutations. The assignment is solved with a forward auction with
epsilon scaling on a sparse candidate graph; optimality on the complete
bipartite instance is then certified by the c-transform of the sink prices,
which is a globally 1-Lipschitz potential. Missing arcs that violate the
certificate are added and the auction is resumed.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit
from scipy.spatial import cKDTree

__all__ = [
    "TransportError",
    "CapExceededError",
    "ImbalanceError",
    "TransportPlan",
    "KantorovichPotential",
    "solve_exact",
    "exact_d1",
    "dual_potential",
    "c_transform",
    "save_plan_csv",
    "save_potential_csv",
]

DEFAULT_CAP = 4096


class TransportError(RuntimeError):
    """Solver failure or an uncertified plan."""


class CapExceededError(TransportError):
    """Instance larger than the configured exact-solver cap."""


class ImbalanceError(ValueError):
    """Source and sink masses differ."""


@njit(cache=True)
def _dist(ax, ay, bx, by, px, py):
    dx = ax - bx
    dy = ay - by
    if px > 0:
        dx -= px * np.floor(dx / px + 0.5)
    if py > 0:
        dy -= py * np.floor(dy / py + 0.5)
    return math.sqrt(dx * dx + dy * dy)


@njit(cache=True)
def _auction_phase(indptr, indices, cost, prices, owner, assign, eps, bigm, max_bids):
    n = assign.shape[0]
    for i in range(n):
        assign[i] = -1
    for j in range(owner.shape[0]):
        owner[j] = -1
    stack = np.empty(n, np.int64)
    top = 0
    for i in range(n - 1, -1, -1):
        stack[top] = i
        top += 1
    bids = 0
    while top > 0:
        top -= 1
        i = stack[top]
        best = -1e300
        second = -1e300
        jb = -1
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            v = -cost[k] - prices[j]
            if v > best:
                second = best
                best = v
                jb = j
            elif v > second:
                second = v
        if jb < 0:
            return -1
        if second < -1e299:
            second = best - bigm
        prices[jb] += best - second + eps
        prev = owner[jb]
        owner[jb] = i
        assign[i] = jb
        if prev >= 0:
            assign[prev] = -1
            stack[top] = prev
            top += 1
        bids += 1
        if bids > max_bids:
            return -2
    return bids


@njit(cache=True)
def _hopcroft_karp(indptr, indices, n_right):
    """Size of a maximum matching of the bipartite graph given in CSR form."""
    n = indptr.shape[0] - 1
    INF = 1 << 60
    match_l = np.full(n, -1, np.int64)
    match_r = np.full(n_right, -1, np.int64)
    dist = np.empty(n, np.int64)
    queue = np.empty(n, np.int64)
    it = np.empty(n, np.int64)
    stack = np.empty(n + 1, np.int64)
    size = 0
    # greedy start
    for u in range(n):
        for k in range(indptr[u], indptr[u + 1]):
            v = indices[k]
            if match_r[v] < 0:
                match_r[v] = u
                match_l[u] = v
                size += 1
                break
    while True:
        head = 0
        tail = 0
        for u in range(n):
            if match_l[u] < 0:
                dist[u] = 0
                queue[tail] = u
                tail += 1
            else:
                dist[u] = INF
        found = INF
        while head < tail:
            u = queue[head]
            head += 1
            if dist[u] >= found:
                continue
            for k in range(indptr[u], indptr[u + 1]):
                w = match_r[indices[k]]
                if w < 0:
                    if found == INF:
                        found = dist[u] + 1
                elif dist[w] == INF:
                    dist[w] = dist[u] + 1
                    queue[tail] = w
                    tail += 1
        if found == INF:
            break
        for u in range(n):
            it[u] = indptr[u]
        for root in range(n):
            if match_l[root] >= 0:
                continue
            top = 0
            stack[0] = root
            done = False
            while top >= 0 and not done:
                u = stack[top]
                advanced = False
                while it[u] < indptr[u + 1]:
                    v = indices[it[u]]
                    it[u] += 1
                    w = match_r[v]
                    if w < 0:
                        if dist[u] + 1 == found:
                            # augment along the stack
                            for q in range(top, -1, -1):
                                uu = stack[q]
                                nv = indices[it[uu] - 1]
                                match_r[nv] = uu
                                match_l[uu] = nv
                            size += 1
                            done = True
                            break
                    elif dist[w] == dist[u] + 1:
                        top += 1
                        stack[top] = w
                        advanced = True
                        break
                if done:
                    break
                if not advanced:
                    dist[u] = INF
                    top -= 1
    return size


@njit(cache=True)
def _arc_costs(rows, cols, sx, sy, tx, ty, px, py, scale):
    out = np.empty(rows.shape[0])
    for k in range(rows.shape[0]):
        i = rows[k]
        j = cols[k]
        out[k] = _dist(sx[i], sy[i], tx[j], ty[j], px, py) / scale
    return out


@njit(cache=True)
def _ctransform_lists(zx, zy, tx, ty, p, indptr, indices, px, py, scale, out, arg):
    for i in range(zx.shape[0]):
        best = 1e300
        bj = -1
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            v = _dist(zx[i], zy[i], tx[j], ty[j], px, py) / scale + p[j]
            if v < best:
                best = v
                bj = j
        out[i] = best
        arg[i] = bj


def _as_period(period):
    if period is None:
        return 0.0, 0.0
    px, py = float(period[0]), float(period[1])
    if px <= 0 or py <= 0:
        raise ValueError("periodic support needs both side lengths positive")
    return px, py


def _tree_coords(pts, period, origin):
    if period is None:
        return pts
    px, py = _as_period(period)
    q = pts - origin
    q[:, 0] = np.mod(q[:, 0], px)
    q[:, 1] = np.mod(q[:, 1], py)
    # mod can round up to the box side itself
    q[q[:, 0] >= px, 0] = 0.0
    q[q[:, 1] >= py, 1] = 0.0
    return q


def _make_tree(pts, period, origin):
    if period is None:
        return cKDTree(pts)
    q = _tree_coords(pts.copy(), period, origin)
    return cKDTree(q, boxsize=np.array(_as_period(period)))


def c_transform(z, sinks, prices, period=None, scale=1.0, chunk=4096, tree=None, origin=None):
    """``min_j |z - y_j| + p_j`` (costs in units of ``scale``) with the minimising sink.

    Exact: a k-nearest search gives an upper bound ``U`` and every sink
    within ``U - min(p)`` is then examined.
    """
    z = np.ascontiguousarray(np.atleast_2d(z), dtype=float)
    sinks = np.ascontiguousarray(sinks, dtype=float)
    prices = np.ascontiguousarray(prices, dtype=float)
    px, py = _as_period(period)
    if origin is None:
        origin = sinks.min(axis=0) if len(sinks) else np.zeros(2)
    if tree is None:
        tree = _make_tree(sinks, period, origin)
    zq = _tree_coords(z.copy(), period, origin)
    pmin = float(prices.min())
    k = min(8, len(sinks))
    out = np.empty(len(z))
    arg = np.empty(len(z), dtype=np.int64)
    for lo in range(0, len(z), chunk):
        zz = zq[lo:lo + chunk]
        d, idx = tree.query(zz, k=k)
        d = d.reshape(len(zz), k)
        idx = idx.reshape(len(zz), k)
        ub = (d / scale + prices[idx]).min(axis=1)
        rad = (ub - pmin) * scale * (1 + 1e-12) + 1e-12 * scale
        lists = tree.query_ball_point(zz, rad)
        lens = np.fromiter((len(x) for x in lists), dtype=np.int64, count=len(lists))
        indptr = np.concatenate([[0], np.cumsum(lens)])
        indices = np.fromiter((j for x in lists for j in x), dtype=np.int64, count=int(indptr[-1]))
        o = np.empty(len(zz))
        a = np.empty(len(zz), dtype=np.int64)
        _ctransform_lists(z[lo:lo + chunk, 0], z[lo:lo + chunk, 1], sinks[:, 0], sinks[:, 1], prices,
                          indptr, indices, px, py, scale, o, a)
        out[lo:lo + chunk] = o
        arg[lo:lo + chunk] = a
    return out, arg


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Optimal coupling of equal-mass atoms (a permutation ``sources[i] -> sinks[assign[i]]``)."""

    sources: np.ndarray = field(repr=False)
    sinks: np.ndarray = field(repr=False)
    assign: np.ndarray = field(repr=False)
    mass: float
    cost: float
    prices: np.ndarray = field(repr=False)
    scale: float = 1.0
    period: Optional[tuple] = None
    stats: dict = field(default_factory=dict)

    @property
    def flows(self):
        """``(i, j, mass)`` arrays of the coupling."""
        n = len(self.assign)
        return np.arange(n), self.assign.copy(), np.full(n, self.mass)

    def lengths(self) -> np.ndarray:
        d = self.sinks[self.assign] - self.sources
        d = _wrap(d, self.period)
        return np.linalg.norm(d, axis=1)

    def marginal_errors(self):
        """Max relative deviation of per-atom outflow and inflow from ``mass``."""
        i, j, m = self.flows
        out = np.bincount(i, weights=m, minlength=len(self.sources))
        inn = np.bincount(j, weights=m, minlength=len(self.sinks))
        return (float(np.abs(out / self.mass - 1).max()), float(np.abs(inn / self.mass - 1).max()))


def _wrap(d, period):
    if period is None:
        return d
    d = d.copy()
    px, py = _as_period(period)
    d[:, 0] -= px * np.round(d[:, 0] / px)
    d[:, 1] -= py * np.round(d[:, 1] / py)
    return d


@dataclass(frozen=True, eq=False)
class KantorovichPotential:
    """1-Lipschitz potential ``phi(z) = min_j |z - y_j| + p_j``.

    ``phi`` decreases with unit slope from a source to its sink.
    ``values`` holds ``phi`` on sources followed by sinks.
    """

    sources: np.ndarray = field(repr=False)
    sinks: np.ndarray = field(repr=False)
    sink_values: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    mass: float
    primal: float
    dual: float
    period: Optional[tuple] = None

    @property
    def gap(self) -> float:
        return (self.primal - self.dual) / self.primal if self.primal > 0 else abs(self.dual)

    @property
    def points(self) -> np.ndarray:
        return np.vstack([self.sources, self.sinks])

    @property
    def duality_value(self) -> float:
        return self.dual

    def __post_init__(self):
        origin = self.sinks.min(axis=0) if len(self.sinks) else np.zeros(2)
        object.__setattr__(self, "_origin", origin)
        object.__setattr__(self, "_tree", _make_tree(self.sinks, self.period, origin) if len(self.sinks) else None)

    def __call__(self, z) -> np.ndarray:
        v, _ = c_transform(z, self.sinks, self.sink_values, self.period, 1.0,
                           tree=self._tree, origin=self._origin)
        return v

    def argmin(self, z):
        return c_transform(z, self.sinks, self.sink_values, self.period, 1.0,
                           tree=self._tree, origin=self._origin)

    def lipschitz_violation(self, n_pairs: int = 20000, seed: int = 0) -> float:
        """Largest ``|phi(x) - phi(y)| - |x - y|`` over random atom pairs."""
        pts = self.points
        rng = np.random.default_rng(seed)
        a = rng.integers(0, len(pts), n_pairs)
        b = rng.integers(0, len(pts), n_pairs)
        d = np.linalg.norm(_wrap(pts[a] - pts[b], self.period), axis=1)
        return float((np.abs(self.values[a] - self.values[b]) - d).max())


def solve_exact(sources, sinks, mass: float = 1.0, period=None, scale: Optional[float] = None,
                gap_tol: float = 1e-9, max_rounds: int = 8) -> TransportPlan:
    """Optimal assignment between equal-size atom sets under the Euclidean cost.

    Parameters
    ----------
    sources, sinks : ndarray, shape (n, 2)
    mass : float
        Mass of every atom.
    period : tuple, optional
        Torus side lengths; distances are then periodic.
    scale : float, optional
        Length unit for the internal costs (defaults to the typical spacing).
    gap_tol : float
        Target relative duality gap of the certificate.
    """
    src = np.ascontiguousarray(sources, dtype=float)
    snk = np.ascontiguousarray(sinks, dtype=float)
    n = len(src)
    if len(snk) != n:
        raise ImbalanceError(f"mass balance violated: {n} sources vs {len(snk)} sinks")
    if n == 0:
        raise ValueError("empty instance")
    px, py = _as_period(period)
    origin = np.minimum(src.min(axis=0), snk.min(axis=0))
    ts = _make_tree(snk, period, origin)
    tsrc = _make_tree(src, period, origin)
    if scale is None:
        if n > 1:
            dd, _ = tsrc.query(_tree_coords(src.copy(), period, origin), k=2)
            scale = float(np.median(dd[:, 1])) or 1.0
        else:
            scale = 1.0
    d_s, _ = ts.query(_tree_coords(src.copy(), period, origin), k=1)
    d_t, _ = tsrc.query(_tree_coords(snk.copy(), period, origin), k=1)
    radius = 2.0 * max(float(d_s.max()), float(d_t.max())) + 3.0 * scale
    sq = _tree_coords(src.copy(), period, origin)
    for _ in range(12):
        lists = ts.query_ball_point(sq, radius)
        rows = np.repeat(np.arange(n, dtype=np.int64), [len(x) for x in lists])
        cols = np.fromiter((j for x in lists for j in sorted(x)), dtype=np.int64, count=len(rows))
        del lists
        # the candidate graph must carry a perfect matching
        ptr = np.searchsorted(rows, np.arange(n + 1)).astype(np.int64)
        if _hopcroft_karp(ptr, cols, n) == n:
            break
        radius *= 2.0
    else:
        raise TransportError("no perfect matching on the candidate graph")
    prices = np.zeros(n)
    rounds = 0
    history = []
    while True:
        rounds += 1
        order = np.lexsort((cols, rows))
        rows, cols = rows[order], cols[order]
        cost = _arc_costs(rows, cols, src[:, 0], src[:, 1], snk[:, 0], snk[:, 1], px, py, scale)
        indptr = np.searchsorted(rows, np.arange(n + 1)).astype(np.int64)
        cmax = float(cost.max()) if len(cost) else 1.0
        owner = np.full(n, -1, dtype=np.int64)
        assign = np.full(n, -1, dtype=np.int64)
        eps = max(cmax / 4.0, 1e-12) if rounds == 1 else max(cmax / 64.0, 1e-12)
        eps_final = 1e-9 * max(cmax, 1e-12)
        max_bids = 200 * n * max(1, int(math.log(max(n, 2))))
        while True:
            b = _auction_phase(indptr, cols, cost, prices, owner, assign, eps, max(cmax, 1.0), max_bids)
            if b == -1:
                raise TransportError("candidate graph has a source without arcs")
            if b == -2:
                raise TransportError("auction did not converge (no perfect matching on candidate arcs?)")
            if eps <= eps_final:
                break
            eps = max(eps / 7.0, eps_final)
        # certificate on the complete bipartite instance
        f_src, _ = c_transform(src, snk, prices, period, scale, tree=ts, origin=origin)
        f_snk, _ = c_transform(snk, snk, prices, period, scale, tree=ts, origin=origin)
        assigned = _arc_costs(np.arange(n, dtype=np.int64), assign, src[:, 0], src[:, 1],
                              snk[:, 0], snk[:, 1], px, py, scale)
        primal_u = float(np.sum(assigned))
        dual_u = float(np.sum(f_src) - np.sum(f_snk))
        gap = (primal_u - dual_u) / primal_u if primal_u > 0 else abs(dual_u)
        history.append({"round": rounds, "arcs": int(len(cols)), "gap": gap})
        if gap <= gap_tol or rounds >= max_rounds:
            break
        # add arcs that beat the current assignment by more than eps
        slack = assigned + prices[assign] - f_src
        bad = np.flatnonzero(slack > 2 * eps_final + 1e-12 * cmax)
        if len(bad) == 0:
            break
        add_r, add_c = [], []
        sq = _tree_coords(src[bad].copy(), period, origin)
        lists = ts.query_ball_point(sq, (assigned[bad] + prices[assign[bad]] - prices.min()) * scale)
        for i, lst in zip(bad, lists):
            lst = np.asarray(lst, dtype=np.int64)
            c = _arc_costs(np.full(len(lst), i, dtype=np.int64), lst, src[:, 0], src[:, 1],
                           snk[:, 0], snk[:, 1], px, py, scale)
            good = lst[c + prices[lst] < assigned[i] + prices[assign[i]] - eps_final]
            add_r.append(np.full(len(good), i, dtype=np.int64))
            add_c.append(good)
        add_r = np.concatenate(add_r)
        add_c = np.concatenate(add_c)
        key = np.unique(np.concatenate([rows * n + cols, add_r * n + add_c]))
        rows, cols = key // n, key % n
    cost_len = float(np.sum(assigned)) * scale
    plan = TransportPlan(src, snk, assign, float(mass), cost_len * mass, prices * scale, float(scale),
                         None if period is None else (px, py),
                         {"rounds": rounds, "history": history, "gap": gap, "arcs": int(len(cols)),
                          "radius": radius})
    return plan


def exact_d1(p, cap: int = DEFAULT_CAP, gap_tol: float = 1e-9):
    """Exact ``d_1(u, 1 - u)`` of a binary pattern; returns ``(cost, plan)``.

    Raises
    ------
    ImbalanceError
        When the two phases have different cell counts.
    CapExceededError
        When the number of atoms per side exceeds ``cap`` (use ``approx_d1``).
    """
    nu, nv = p.u_count, p.v_count
    if nu != nv:
        raise ImbalanceError(f"mass balance violated: {nu} u-cells vs {nv} complementary cells")
    if nu > cap:
        raise CapExceededError(f"{nu} atoms per side exceed the exact-solver cap {cap}; use approx_d1")
    h = p.grid.h
    plan = solve_exact(p.sources(), p.sinks(), h * h, p.period, h, gap_tol)
    return plan.cost, plan


def dual_potential(plan: TransportPlan, tol: float = 1e-6) -> KantorovichPotential:
    """Kantorovich potential from the solver duals, with the duality gap check."""
    f_src, _ = c_transform(plan.sources, plan.sinks, plan.prices, plan.period, 1.0)
    f_snk, _ = c_transform(plan.sinks, plan.sinks, plan.prices, plan.period, 1.0)
    primal = float(plan.lengths().sum()) * plan.mass
    dual = float(np.sum(f_src) - np.sum(f_snk)) * plan.mass
    pot = KantorovichPotential(plan.sources, plan.sinks, f_snk, np.concatenate([f_src, f_snk]),
                               plan.mass, primal, dual, plan.period)
    if primal > 0 and (primal - dual) > tol * primal:
        raise TransportError(f"duality gap {(primal - dual) / primal:.3e} exceeds {tol:g}: plan not optimal")
    if primal == 0 and abs(dual) > tol:
        raise TransportError("non-zero dual value for a zero-cost plan")
    return pot


def save_plan_csv(plan: TransportPlan, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["xi", "yi", "xj", "yj", "mass"])
        for a, b in zip(plan.sources, plan.sinks[plan.assign]):
            w.writerow([f"{a[0]:.12g}", f"{a[1]:.12g}", f"{b[0]:.12g}", f"{b[1]:.12g}", f"{plan.mass:.12g}"])


def save_potential_csv(pot: KantorovichPotential, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "phi"])
        for (x, y), v in zip(pot.points, pot.values):
            w.writerow([f"{x:.12g}", f"{y:.12g}", f"{v:.12g}"])
