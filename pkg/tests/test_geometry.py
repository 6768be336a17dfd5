import math
import warnings

import numpy as np
import pytest

from stripelab.geometry import (DomainDistance, GeometryError, SelfIntersectionError, TubularDomain,
                                build_curve, circle_curve, curvature, ellipse_curve, jacobian, level_curve,
                                menger_curvature, offset_curve, project_to_center, rasterize,
                                rasterize_rectangle, rounded_rectangle_curve, signed_distance)


def test_square_perimeter():
    c = build_curve([(0, 0), (1, 0), (1, 1), (0, 1)], resample_count=400)
    assert abs(c.total_length - 4.0) < 1e-9
    assert c.n == 400


def test_circle_length():
    c = circle_curve(1.0, 1000)
    chord = 1000 * 2 * math.sin(math.pi / 1000)
    assert abs(c.total_length - chord) < 1e-12
    assert abs(c.total_length - 2 * math.pi) < 1e-4


def test_figure_eight_rejected():
    t = np.linspace(0, 2 * np.pi, 200, endpoint=False)
    pts = np.column_stack([np.sin(t), np.sin(t) * np.cos(t)])
    with pytest.raises(SelfIntersectionError):
        build_curve(pts)


def test_clockwise_input_reoriented():
    c = build_curve([(0, 0), (0, 1), (1, 1), (1, 0)])
    assert c.signed_area > 0


def test_resampled_tangents_unit():
    c = build_curve(ellipse_curve(2, 1, 300).vertices, resample_count=500, method="spline")
    assert np.all(np.abs(np.linalg.norm(c.tangents, axis=1) - 1) < 1e-9)
    assert np.all(np.diff(c.cumulative_arclength) > 0)


def test_circle_curvature_vs_menger():
    r = 0.7
    c = circle_curve(r, 1000)
    s = np.linspace(0, c.total_length, 37, endpoint=False)
    k = curvature(c, s)
    # Menger oracle on exact circle points
    th = np.array([0.0, 0.01, 0.02])
    a, b, d = (np.array([r * math.cos(x), r * math.sin(x)]) for x in th)
    km = menger_curvature(a, b, d)
    assert abs(km - 1 / r) < 1e-9
    assert np.all(np.abs(k - 1 / r) < 1e-6)


def test_rounded_rectangle_flat_side():
    c = rounded_rectangle_curve(2.0, 1.0, 0.3, 800)
    # first straight piece starts at s = 0 and has length 2 - 0.6
    s = np.linspace(0.2, 1.2, 5)
    assert np.all(np.abs(curvature(c, s)) < 1e-8)


def test_ellipse_vertex_curvature():
    a, b = 2.0, 1.0
    c = ellipse_curve(a, b, 4000)
    kk = curvature(c, np.array([0.0]))[0]
    t = 0.0
    oracle = a * b / (a * a * math.sin(t) ** 2 + b * b * math.cos(t) ** 2) ** 1.5
    assert abs(kk - oracle) < 1e-3
    assert abs(oracle - a / b ** 2) < 1e-15


def test_offset_circle():
    c = circle_curve(1.0, 1000)
    o = offset_curve(c, 0.25)
    assert np.allclose(np.linalg.norm(o.vertices, axis=1), 0.75, atol=1e-9)
    assert abs(o.total_length - 1.5 * math.pi) < 1e-3
    assert offset_curve(c, 0.0) is c
    with pytest.raises(GeometryError):
        offset_curve(c, 1.5)


def test_jacobian_values():
    c = circle_curve(1.0, 1000)
    assert np.allclose(jacobian(c, np.array([0.3]), 0.0), 1.0)
    assert np.allclose(jacobian(c, np.array([0.3]), 0.1), 0.9, atol=1e-8)


@pytest.mark.parametrize("curve", [circle_curve(1.0, 1500), ellipse_curve(1.5, 1.0, 3000)])
def test_jacobian_integral_tube_area(curve):
    eps = 1 / 16
    L = curve.total_length
    n = 4000
    s = (np.arange(n) + 0.5) * L / n
    xg, wg = np.polynomial.legendre.leggauss(4)
    t = 2 * eps * xg
    J = jacobian(curve, s[:, None], t[None, :])
    integral = float((J * 2 * eps * wg).sum() * L / n)
    # polygon-area oracle on the two offset boundaries
    outer = offset_curve(curve, -2 * eps, 4000)
    inner = offset_curve(curve, 2 * eps, 4000)
    area = outer.signed_area - inner.signed_area
    assert abs(integral - 4 * eps * L) < 1e-9 * L
    assert abs(area - 4 * eps * L) < 1e-3 * area


def test_signed_distance_annulus(annulus_dd):
    assert abs(signed_distance(annulus_dd, np.array([1.0, 0.0])) - 0.25) < 1e-9
    assert abs(signed_distance(annulus_dd, np.array([0.75, 0.0]))) < 1e-9
    assert abs(signed_distance(annulus_dd, np.array([1.1, 0.0])) - 0.35) < 1e-9


def test_distance_gradient_unit(annulus_dd):
    rng = np.random.default_rng(1)
    r = rng.uniform(0.8, 1.2, 200)
    a = rng.uniform(0, 2 * np.pi, 200)
    x = np.column_stack([r * np.cos(a), r * np.sin(a)])
    h = 1e-5
    e = np.array([[h, 0.0], [0.0, h]])
    g = np.column_stack([(signed_distance(annulus_dd, x + e[i]) - signed_distance(annulus_dd, x - e[i]))
                         / (2 * h) for i in range(2)])
    assert np.all(np.abs(np.linalg.norm(g, axis=1) - 1) < 1e-4)
    phi = signed_distance(annulus_dd, x)
    assert np.all((phi >= 0) & (phi <= 0.5))


def test_level_curve(annulus_dd):
    mid = level_curve(annulus_dd, 0.25)
    assert np.allclose(np.linalg.norm(mid.vertices, axis=1), 1.0, atol=1e-9)
    c = level_curve(annulus_dd, 0.1)
    assert np.allclose(np.linalg.norm(c.vertices, axis=1), 0.85, atol=1e-9)
    assert abs(c.total_length - 1.7 * math.pi) < 1e-3
    with pytest.raises(GeometryError):
        level_curve(annulus_dd, 0.6)


def test_project_to_center(annulus):
    assert np.allclose(project_to_center(annulus, np.array([1.2, 0.0])), [1.0, 0.0], atol=1e-9)
    x = annulus.center.vertices[17]
    assert np.allclose(project_to_center(annulus, x), x, atol=1e-12)


def test_project_ellipse_bruteforce():
    c = ellipse_curve(1.5, 1.0, 2000)
    dom = TubularDomain(c, 0.2)
    rng = np.random.default_rng(3)
    th = rng.uniform(0, 2 * np.pi, 50)
    x = np.column_stack([1.5 * np.cos(th), np.sin(th)]) * rng.uniform(0.9, 1.08, (50, 1))
    foot = project_to_center(dom, x)
    dense = ellipse_curve(1.5, 1.0, 200000).vertices
    h = 2e-4
    for xi, fi in zip(x, foot):
        d = np.linalg.norm(dense - xi, axis=1)
        assert abs(np.linalg.norm(fi - xi) - d.min()) < h


def test_rasterize_annulus_area(annulus):
    g = rasterize(annulus, 0.01)
    assert abs(g.mask_area - math.pi) < 0.02 * math.pi
    assert abs(g.mask_area - math.pi) <= annulus.perimeter * 0.01


def test_rasterize_coarse_warns(annulus):
    with pytest.warns(RuntimeWarning):
        rasterize(annulus, 0.6)


def test_rectangle_full_mask():
    g = rasterize_rectangle(0, 0, 1, 0.5, 0.125)
    assert g.shape == (8, 4) and g.mask.all()


def test_tube_admissibility():
    with pytest.raises(GeometryError):
        TubularDomain(circle_curve(0.2, 500), 0.25)
