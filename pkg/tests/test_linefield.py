import math

import numpy as np
import pytest

from stripelab.geometry import rasterize, rasterize_rectangle
from stripelab.linefield import (K0Tolerances, canonical_field, check_K0, constant_field, divergence,
                                 field_from_directions, limit_energy, projection_defects,
                                 projection_from_direction)

G0 = math.pi / 4 * math.log(5 / 3)


@pytest.fixture(scope="module")
def grid005(annulus):
    return rasterize(annulus, 0.005)


@pytest.fixture(scope="module")
def field005(annulus, grid005):
    return canonical_field(annulus, grid005)


def test_projection_examples():
    assert np.array_equal(projection_from_direction([1.0, 0.0]), [[1, 0], [0, 0]])
    assert np.allclose(projection_from_direction([0.0, 1.0]), projection_from_direction([0.0, -1.0]))
    assert np.allclose(projection_from_direction(np.array([1.0, 1.0]) / math.sqrt(2)), 0.5)


def test_projection_invariants(rng):
    e = rng.normal(size=(500, 2))
    e /= np.linalg.norm(e, axis=1)[:, None]
    P = projection_from_direction(e)
    d = projection_defects(P)
    assert d["idempotent"].max() <= 1e-12
    assert d["symmetric"].max() == 0
    assert np.allclose(np.trace(P, axis1=1, axis2=2), 1.0)


def test_canonical_field_axis_points(annulus):
    g = rasterize(annulus, 0.02)
    f = canonical_field(annulus, g)
    pts = g.inside_points()
    vals = f.inside_values()
    i = np.argmin(np.linalg.norm(pts - [1.0, 0.0], axis=1))
    j = np.argmin(np.linalg.norm(pts - [0.0, 1.0], axis=1))
    assert np.allclose(vals[i], [[0, 0], [0, 1]], atol=2e-2)
    assert np.allclose(vals[j], [[1, 0], [0, 0]], atol=2e-2)


def test_constant_field_divergence_free():
    g = rasterize_rectangle(0, 0, 1, 1, 0.05)
    dv = divergence(constant_field(g, [1.0, 0.0]))
    assert np.abs(dv.values).max() == 0.0
    assert limit_energy(constant_field(g, [1.0, 0.0]), check=False) == 0.0


def test_divergence_one_over_r(grid005, field005):
    dv = divergence(field005)
    pts = grid005.inside_points()
    r = np.linalg.norm(pts, axis=1)
    inner = (np.abs(r - 1) < 0.25 - 3 * 0.005) & dv.valid[grid005.mask]
    mag = dv.magnitude()[grid005.mask][inner]
    assert np.all(np.abs(mag * r[inner] - 1) < 0.02)


def test_p_div_p_refines(annulus):
    vals = []
    for h in (0.01, 0.005):
        rep = check_K0(canonical_field(annulus, rasterize(annulus, h)))
        vals.append(rep.residuals["p_div_p"])
    assert vals[1] < vals[0]
    assert vals[1] <= 5e-2


def test_k0_pass(field005):
    rep = check_K0(field005)
    assert rep.ok, rep.failures()


def test_k0_constant_field_fails_trace(annulus):
    g = rasterize(annulus, 0.01)
    rep = check_K0(constant_field(g, [1.0, 0.0]))
    assert not rep.passed["divergence"]
    assert rep.residuals["boundary_trace"] > 0.5


def test_k0_radial_field_fails_pdivp(annulus):
    g = rasterize(annulus, 0.01)
    X, Y = g.cell_centers()
    d = np.stack([X, Y], axis=-1)
    rep = check_K0(field_from_directions(g, d))
    assert not rep.passed["p_div_p"]


def test_limit_energy_annulus(field005):
    val = limit_energy(field005)
    assert abs(val - G0) < 0.02 * G0


def test_limit_energy_strict_non_member(annulus):
    g = rasterize(annulus, 0.01)
    assert limit_energy(constant_field(g, [1.0, 0.0]), strict=True) == math.inf
    with pytest.warns(RuntimeWarning):
        limit_energy(constant_field(g, [1.0, 0.0]))


def test_trace_bound_two_h(annulus):
    # boundary trace stays below C h at two resolutions
    tol = K0Tolerances()
    for h in (0.01, 0.005):
        rep = check_K0(canonical_field(annulus, rasterize(annulus, h)), tol)
        assert rep.residuals["boundary_trace"] <= tol.trace_c * h
