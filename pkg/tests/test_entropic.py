import numpy as np
import pytest

from stripelab.geometry import rasterize_rectangle
from stripelab.pattern import BinaryPattern, straight_stripes
from stripelab.transport import ConvergenceError, approx_d1, exact_d1, sinkhorn_bracket


def test_two_rectangles_bracket():
    h = 0.05
    g = rasterize_rectangle(0, 0, 2, 1, h)
    X, _ = g.cell_centers()
    p = BinaryPattern(g, X < 1, h)
    exact, _ = exact_d1(p)
    (lo, hi), plan = approx_d1(p, reg=0.5)
    assert lo <= exact <= hi
    assert plan.residual <= 1e-9


def test_bracket_shrinks_with_reg():
    p = straight_stripes((0, 0, 1, 1), 0.25, 1 / 16, 1 / 16)
    exact, _ = exact_d1(p)
    widths = []
    for reg in (2.0, 1.0, 0.5):
        (lo, hi), _ = approx_d1(p, reg=reg)
        assert lo - 1e-12 <= exact <= hi + 1e-12
        widths.append(hi - lo)
    assert widths[0] > widths[1] > widths[2]


def test_identical_marginals():
    x = np.random.default_rng(0).random((30, 2))
    ep = sinkhorn_bracket(x, x, 1.0, reg=0.05)
    assert ep.lower == 0.0
    assert ep.upper < 0.05 * 30


def test_nonconvergence_reported():
    x = np.random.default_rng(1).random((40, 2))
    y = np.random.default_rng(2).random((40, 2))
    with pytest.raises(ConvergenceError) as info:
        sinkhorn_bracket(x, y, 1.0, reg=1e-3, max_iter=20)
    assert info.value.residual > 1e-9
