"""Explicit transport map of a recovery stripe family and its cost.

Inside one stripe, points are written as ``gamma(s) + t nu(s)`` with mass
coordinate ``m = t - t^2 kappa / 2`` (Jacobian ``1 - t kappa``). The map
shifts mass coordinates by ``+eps(1 - eps kappa)`` on the ``t > 0`` half of
the ``u = 1`` band and by ``-eps(1 + eps kappa)`` on the ``t < 0`` half,
which sends ``{u = 1}`` exactly onto ``{u = 0}`` inside the stripe.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..pattern import StripeFamily, stripe_mass

__all__ = [
    "ChartError",
    "transverse_from_mass",
    "box_cost",
    "box_expansion",
    "StripeCost",
    "StripeTransportMap",
    "stripe_transport_map",
    "upper_bound_d1",
    "discrete_map_plan",
]

# coefficients of ((1-4x)^{3/2} - 2(1-2x)^{3/2} + 1) / (3 x^2) around x = 0
_BOX_SERIES = np.array([1.0, 1.0, 7 / 4, 15 / 4, 217 / 24, 189 / 8, 4191 / 64, 12155 / 64, 73073 / 128])
_BOX_SWITCH = 5e-3


class ChartError(ValueError):
    """Quadrature node outside the domain of the stripe chart."""


def transverse_from_mass(m, kappa):
    """Inverse of ``m = t - t^2 kappa / 2`` on the branch through 0."""
    m = np.asarray(m, dtype=float)
    disc = 1.0 - 2.0 * m * kappa
    if np.any(disc < 0):
        raise ChartError("mass coordinate beyond the focal point of the chart")
    # rationalised form, stable as kappa -> 0
    return 2.0 * m / (1.0 + np.sqrt(disc))


def box_cost(M, kappa):
    """``int_M^{2M} t dm - int_0^M t dm`` for one half-stripe (closed form).

    With ``M = eps(1 - eps kappa)`` this is the cost density of the ``t > 0``
    half; with ``M = -eps(1 + eps kappa)`` the ``t < 0`` half.
    """
    M = np.asarray(M, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    xi = M * kappa
    if np.any(1.0 - 4.0 * xi < 0):
        raise ChartError("half-stripe reaches the focal point")
    small = np.abs(xi) < _BOX_SWITCH
    out = np.empty(np.broadcast(M, kappa).shape)
    xs = np.where(small, xi, 0.0)
    ser = np.polynomial.polynomial.polyval(xs, _BOX_SERIES)
    with np.errstate(divide="ignore", invalid="ignore"):
        k2 = np.where(small, 1.0, kappa) ** 2
        xl = np.where(small, 0.0, xi)
        full = ((1 - 4 * xl) ** 1.5 - 2 * (1 - 2 * xl) ** 1.5 + 1) / (3 * k2)
    out[...] = np.where(small, M * M * ser, full)
    return out


def box_expansion(eps, kappa, side: int):
    """Truncated expansion ``eps^2 -/+ eps^3 kappa - eps^4 kappa^2 / 4``.

    ``side = +1`` for the ``t > 0`` half, ``-1`` for the ``t < 0`` half.
    """
    kappa = np.asarray(kappa, dtype=float)
    return eps ** 2 - side * eps ** 3 * kappa - 0.25 * eps ** 4 * kappa ** 2


def _dual_lengths(v):
    e = np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1)
    return 0.5 * (e + np.roll(e, 1))


@dataclass
class StripeCost:
    """Cost of one stripe, computed three ways (all integrated over ``ds``)."""

    index: int
    length: float
    quadrature: float
    closed_form: float
    expansion: float

    @property
    def difference(self) -> float:
        return self.quadrature - self.expansion

    def to_dict(self):
        return {"index": self.index, "length": self.length, "quadrature": self.quadrature,
                "closed_form": self.closed_form, "expansion": self.expansion,
                "difference": self.difference}


@dataclass(eq=False)
class StripeTransportMap:
    """Quadrature nodes ``x`` of ``D+ u D-``, their images ``T(x)`` and weights."""

    family: StripeFamily = field(repr=False)
    nodes: np.ndarray = field(repr=False)
    images: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    stripe_id: np.ndarray = field(repr=False)
    target_nodes: np.ndarray = field(repr=False)
    target_weights: np.ndarray = field(repr=False)
    costs: list

    @property
    def total(self) -> float:
        return float(sum(c.quadrature for c in self.costs))

    def __call__(self, x):
        """Image of nodes; ``x`` must be (a subset of) ``nodes`` given by index."""
        return self.images[np.asarray(x)]

    def pushforward_residual(self, g) -> float:
        """``int g(T(x)) u dx - int g (1 - u) dx`` over the stripes."""
        a = float(np.sum(self.weights * g(self.images)))
        b = float(np.sum(self.target_weights * g(self.target_nodes)))
        return a - b

    def max_cost_gap_per_length(self) -> float:
        return max(abs(c.difference) / c.length for c in self.costs)


def _gauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1), 0.5 * w


def stripe_transport_map(family: StripeFamily, n_gauss: int = 8):
    """Evaluate the stripe map on tensor Gauss nodes; returns ``(map, cost)``.

    The cost is the quadrature value of ``int |x - T(x)| u dx`` summed over
    the stripes. Each :class:`StripeCost` also carries the closed form and the
    truncated expansion of the same integral.
    """
    eps = family.eps
    gx, gw = _gauss(n_gauss)
    nodes, images, weights, sid, tn, tw, costs = [], [], [], [], [], [], []
    for st in family.stripes:
        c = np.asarray(st.center.vertices, dtype=float)
        nu = np.asarray(st.nu, dtype=float)
        k = np.asarray(st.kappa, dtype=float)
        ds = _dual_lengths(c)
        if np.any(2 * eps * np.abs(k) >= 1):
            raise ChartError("stripe half-width exceeds the focal distance")
        q = 0.0
        for side, rho, shift, outer in ((1, st.rho_plus, eps * (1 - eps * k), 2 * eps),
                                        (-1, st.rho_minus, -eps * (1 + eps * k), -2 * eps)):
            t = rho[:, None] * gx[None, :]
            w = np.abs(rho)[:, None] * gw[None, :] * (1 - t * k[:, None]) * ds[:, None]
            tt = transverse_from_mass(stripe_mass(t, k[:, None]) + shift[:, None], k[:, None])
            x = c[:, None, :] + t[..., None] * nu[:, None, :]
            y = c[:, None, :] + tt[..., None] * nu[:, None, :]
            q += float(np.sum(w * np.linalg.norm(y - x, axis=-1)))
            nodes.append(x.reshape(-1, 2))
            images.append(y.reshape(-1, 2))
            weights.append(w.ravel())
            sid.append(np.full(w.size, st.index))
            # complementary band rho..outer carries 1 - u
            t2 = rho[:, None] + (outer - rho)[:, None] * gx[None, :]
            w2 = np.abs(outer - rho)[:, None] * gw[None, :] * (1 - t2 * k[:, None]) * ds[:, None]
            tn.append((c[:, None, :] + t2[..., None] * nu[:, None, :]).reshape(-1, 2))
            tw.append(w2.ravel())
        cf = float(np.sum(ds * (box_cost(eps * (1 - eps * k), k) + box_cost(-eps * (1 + eps * k), k))))
        ex = float(np.sum(ds * (box_expansion(eps, k, 1) + box_expansion(eps, k, -1))))
        costs.append(StripeCost(st.index, float(ds.sum()), q, cf, ex))
    tmap = StripeTransportMap(family, np.vstack(nodes), np.vstack(images), np.concatenate(weights),
                              np.concatenate(sid), np.vstack(tn), np.concatenate(tw), costs)
    return tmap, tmap.total


def upper_bound_d1(family: StripeFamily, n_gauss: int = 8) -> float:
    """Cost of the stripe map, an upper bound for ``d_1(u, 1 - u)``."""
    return stripe_transport_map(family, n_gauss)[1]


def discrete_map_plan(family: StripeFamily, pattern, gap_tol: float = 1e-9):
    """Feasible raster plan that follows the stripe map.

    Every ``u = 1`` atom is pushed by the map (using its own chart
    coordinates), the images are matched to the ``u = 0`` atoms by an
    optimal assignment on ``|T(x) - y|``, and the plan cost is evaluated on
    the original pairs ``|x - y|``. The result bounds ``d_1`` of the raster
    pattern from above.
    """
    from .exact import ImbalanceError, TransportPlan, solve_exact

    if pattern.u_count != pattern.v_count:
        raise ImbalanceError("mass balance violated")
    dd = family.distance
    eps = family.eps
    h = pattern.grid.h
    src = pattern.sources()
    snk = pattern.sinks()
    phi, pr = dd.evaluate(src, tol=1e-9)
    n = family.n_stripes
    k_idx = np.clip(np.floor(phi / (4 * eps)).astype(int), 0, n - 1)
    t = phi - 2 * eps * (2 * k_idx + 1)
    kl = family.domain.center.curvature_at(pr.s)
    tau = np.array([dd.level_offset(st.level) for st in family.stripes])[k_idx]
    kappa = dd.sign * kl / (1.0 - tau * kl)
    shift = np.where(t >= 0, eps * (1 - eps * kappa), -eps * (1 + eps * kappa))
    tt = transverse_from_mass(stripe_mass(t, kappa) + shift, kappa)
    nu = dd.sign * pr.normal
    images = src + (tt - t)[:, None] * nu
    inner = solve_exact(images, snk, h * h, None, h, gap_tol)
    assign = inner.assign
    lengths = np.linalg.norm(snk[assign] - src, axis=1)
    cost = float(lengths.sum()) * h * h
    return TransportPlan(src, snk, assign, h * h, cost, np.zeros(len(snk)), float(h), None,
                         {"feasible_only": True, "matching_cost": inner.cost,
                          "image_offset_max": float(np.linalg.norm(snk[assign] - images, axis=1).max())})
