"""Entropic transport with a certified cost bracket.

Log-domain Sinkhorn iterations on the dense cost matrix. The upper end of
the bracket is the cost of the Sinkhorn plan after rounding it onto the
exact marginals; the lower end is the dual value of the c-transformed
Sinkhorn potentials, which are feasible for the unregularised dual.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .exact import ImbalanceError, TransportError, _wrap

__all__ = ["ConvergenceError", "EntropicPlan", "sinkhorn_bracket", "approx_d1", "DENSE_CAP"]

DENSE_CAP = 6000


class ConvergenceError(TransportError):
    """Sinkhorn did not reach the marginal tolerance; ``residual`` holds the last value."""

    def __init__(self, msg, residual):
        super().__init__(msg)
        self.residual = residual


@dataclass(eq=False)
class EntropicPlan:
    sources: np.ndarray = field(repr=False)
    sinks: np.ndarray = field(repr=False)
    plan: np.ndarray = field(repr=False)
    lower: float
    upper: float
    reg: float
    iterations: int
    residual: float

    @property
    def bracket(self) -> tuple:
        return (self.lower, self.upper)

    @property
    def width(self) -> float:
        return self.upper - self.lower


def _cost_matrix(x, y, period):
    if period is None:
        return cdist(x, y)
    d = x[:, None, :] - y[None, :, :]
    d = _wrap(d.reshape(-1, 2), period).reshape(d.shape)
    return np.sqrt(np.einsum("ijk,ijk->ij", d, d))


def _round_to_marginals(P, a, b):
    """Feasible coupling close to ``P`` with marginals exactly ``a`` and ``b``."""
    r = P.sum(axis=1)
    P = P * np.minimum(a / np.maximum(r, 1e-300), 1.0)[:, None]
    c = P.sum(axis=0)
    P = P * np.minimum(b / np.maximum(c, 1e-300), 1.0)[None, :]
    ea = a - P.sum(axis=1)
    eb = b - P.sum(axis=0)
    s = ea.sum()
    if s > 0:
        P = P + np.outer(ea, eb) / s
    return P


def sinkhorn_bracket(sources, sinks, mass: float, reg: float, tol: float = 1e-9,
                     max_iter: int = 100000, period=None) -> EntropicPlan:
    """Entropic solve with ``reg`` in length units; returns a certified bracket."""
    if not reg > 0:
        raise ValueError("reg must be positive")
    x = np.asarray(sources, dtype=float)
    y = np.asarray(sinks, dtype=float)
    n, m = len(x), len(y)
    if n != m:
        raise ImbalanceError(f"mass balance violated: {n} sources vs {m} sinks")
    if n > DENSE_CAP:
        raise TransportError(f"{n} atoms per side exceed the dense entropic cap {DENSE_CAP}")
    C = _cost_matrix(x, y, period)
    a = np.full(n, 1.0 / n)
    b = np.full(m, 1.0 / m)
    la, lb = np.log(a), np.log(b)
    K = -C / reg
    f = np.zeros(n)
    g = np.zeros(m)
    res = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        f = reg * (la - logsumexp(K + g[None, :] / reg, axis=1))
        g = reg * (lb - logsumexp(K + f[:, None] / reg, axis=0))
        if it % 10 == 0 or it == max_iter:
            logP = K + (f[:, None] + g[None, :]) / reg
            res = float(np.abs(np.exp(logsumexp(logP, axis=1)) - a).sum())
            if res <= tol:
                break
    else:
        raise ConvergenceError(f"Sinkhorn marginal residual {res:.3e} above {tol:g} after {max_iter} iterations",
                               res)
    if res > tol:
        raise ConvergenceError(f"Sinkhorn marginal residual {res:.3e} above {tol:g}", res)
    P = np.exp(K + (f[:, None] + g[None, :]) / reg)
    R = _round_to_marginals(P, a, b)
    upper = float(np.sum(R * C))
    # c-transforms make the pair dual feasible: f'(x) + g'(y) <= C(x, y)
    gc = np.min(C - f[:, None], axis=0)
    fc = np.min(C - gc[None, :], axis=1)
    lower = max(float(a @ fc + b @ gc), 0.0)
    total = n * mass
    return EntropicPlan(x, y, R * total, lower * total, upper * total, float(reg), it, res)


def approx_d1(p, reg: float, tol: float = 1e-9, max_iter: int = 100000):
    """Entropic bracket ``(lower, upper)`` on ``d_1(u, 1 - u)`` and the rounded plan.

    ``reg`` is measured in units of the grid spacing.
    """
    if not reg > 0:
        raise ValueError("reg must be positive")
    if p.u_count != p.v_count:
        raise ImbalanceError(f"mass balance violated: {p.u_count} vs {p.v_count}")
    h = p.grid.h
    ep = sinkhorn_bracket(p.sources(), p.sinks(), h * h, reg * h, tol, max_iter, p.period)
    return ep.bracket, ep
