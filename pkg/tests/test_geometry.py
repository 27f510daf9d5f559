"""Frame invariants, curvature and derivative consistency of the surface geometry."""

from __future__ import annotations

import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from klshell.errors import GeometryError
from klshell.geometry import (Chart, boundary_frame, evaluate_frame, frame_from_jets, projector_derivatives,
                              surface_jet, tangential_gradient)

from conftest import R_, S_, cylinder_chart, sphere_chart

coef = st.floats(-1.5, 1.5, allow_nan=False)
unit = st.floats(0.05, 0.95)


def graph_chart(a, b, c, d, e):
    """Graph ``z = a r^2 + b rs + c s^2 + d r^3 + e sin(rs)`` with hand-written derivatives."""

    def evaluator(r, s, order):
        r, s = np.broadcast_arrays(np.asarray(r, float), np.asarray(s, float))
        sn, cs = np.sin(r * s), np.cos(r * s)
        shape = r.shape
        x0 = np.stack([r, s, a * r ** 2 + b * r * s + c * s ** 2 + d * r ** 3 + e * sn], -1)
        x1 = np.zeros(shape + (3, 2))
        x1[..., 0, 0] = x1[..., 1, 1] = 1.0
        x1[..., 2, 0] = 2 * a * r + b * s + 3 * d * r ** 2 + e * s * cs
        x1[..., 2, 1] = b * r + 2 * c * s + e * r * cs
        x2 = np.zeros(shape + (3, 2, 2))
        x2[..., 2, 0, 0] = 2 * a + 6 * d * r - e * s ** 2 * sn
        x2[..., 2, 0, 1] = x2[..., 2, 1, 0] = b + e * cs - e * r * s * sn
        x2[..., 2, 1, 1] = 2 * c - e * r ** 2 * sn
        x3 = np.zeros(shape + (3, 2, 2, 2))
        x3[..., 2, 0, 0, 0] = 6 * d - e * s ** 3 * cs
        x3[..., 2, 1, 1, 1] = -e * r ** 3 * cs
        rrs = -2 * e * s * sn - e * r * s ** 2 * cs
        rss = -2 * e * r * sn - e * r ** 2 * s * cs
        x3[..., 2, 0, 0, 1] = x3[..., 2, 0, 1, 0] = x3[..., 2, 1, 0, 0] = rrs
        x3[..., 2, 0, 1, 1] = x3[..., 2, 1, 0, 1] = x3[..., 2, 1, 1, 0] = rss
        return [x0, x1, x2, x3][: order + 1]

    return Chart(evaluator, ((0.0, 1.0), (0.0, 1.0)), name="graph")


UNIT_SPHERE = sphere_chart(1.0)
UNIT_CYLINDER = cylinder_chart(1.0)


def scaled(chart: Chart, factor: float) -> Chart:
    """The chart dilated by ``factor`` about the origin."""
    return Chart(lambda r, s, order: [factor * a for a in chart.evaluator(r, s, order)], chart.box,
                 chart.periodic, chart.name)


def test_hand_written_graph_matches_symbolic_chart():
    args = (0.4, -0.3, 0.7, 0.5, -0.8)
    a, b, c, d, e = args
    z = a * R_ ** 2 + b * R_ * S_ + c * S_ ** 2 + d * R_ ** 3 + e * sp.sin(R_ * S_)
    sym_chart = Chart.from_sympy([R_, S_, z], (R_, S_), ((0.0, 1.0), (0.0, 1.0)))
    r = np.random.default_rng(3).uniform(0, 1, (7, 2))
    for A, B in zip(graph_chart(*args).jets(r, 3), sym_chart.jets(r, 3)):
        assert np.allclose(A, B, atol=1e-13)


def _invariant_residuals(f):
    I = np.eye(3)
    P, n, H = f.P, f.n, f.H
    return [
        np.abs(P @ P - P).max(),
        np.abs(P - P.swapaxes(-1, -2)).max(),
        np.abs(np.einsum("...ij,...j->...i", P, n)).max(),
        np.abs(np.linalg.norm(n, axis=-1) - 1.0).max(),
        np.abs(H - H.swapaxes(-1, -2)).max(),
        np.abs(np.einsum("...ij,...j->...i", H, n)).max(),
        np.abs(P @ H @ P - H).max(),
        np.abs(np.einsum("...ia,...ib->...ab", f.J, f.A) - np.broadcast_to(I[:2, :2], f.G.shape)).max(),
    ]


@given(coef, coef, coef, coef, coef, unit, unit)
def test_frame_invariants_on_graph_surfaces(a, b, c, d, e, r, s):
    f = evaluate_frame(graph_chart(a, b, c, d, e), np.array([[r, s]]))
    assert max(_invariant_residuals(f)) <= 1e-10


@given(st.floats(0.3, 5.0), unit, unit)
def test_sphere_weingarten_map_is_isotropic(radius, r, s):
    chart = scaled(UNIT_SPHERE, radius)
    (r0, r1), (s0, s1) = chart.box
    f = evaluate_frame(chart, np.array([[r0 + r * (r1 - r0), s0 + s * (s1 - s0)]]))
    assert max(_invariant_residuals(f)) <= 1e-10
    assert abs(abs(f.kappa[0]) - 2.0 / radius) <= 1e-10 / radius
    assert np.abs(f.H[0] - 0.5 * f.kappa[0] * f.P[0]).max() <= 1e-10 / radius


@given(st.floats(0.3, 5.0), unit)
def test_cylinder_principal_curvatures(radius, r):
    f = evaluate_frame(scaled(UNIT_CYLINDER, radius), np.array([[r - 0.5, 1.0]]))
    lam = np.sort(np.linalg.eigvalsh(f.H[0]))
    assert np.allclose(np.sort(np.abs(lam)), [0.0, 0.0, 1.0 / radius], atol=1e-10 / radius)


@given(coef, coef, coef, coef, coef, unit, unit)
def test_projector_derivatives_match_parametric_derivatives(a, b, c, d, e, r, s):
    chart = graph_chart(a, b, c, d, e)
    jet = surface_jet(*chart.jets(np.array([[r, s]]), 3))
    dP_tan = projector_derivatives(jet.frame)  # [m, i, j]
    dP_par = np.einsum("...mij,...mc->...ijc", dP_tan, jet.frame.J)
    assert np.abs(dP_par - jet.dP).max() <= 1e-10


@pytest.mark.parametrize("chart", [graph_chart(0.4, -0.3, 0.7, 0.5, -0.8), sphere_chart(1.3), cylinder_chart(0.8)])
def test_surface_jet_against_finite_differences(chart):
    (r0, r1), (s0, s1) = chart.box
    r = np.array([0.4 * r0 + 0.6 * r1, 0.3 * s0 + 0.7 * s1])
    jet = surface_jet(*chart.jets(r[None], 3))
    h = 1e-5
    for c in range(2):
        e = np.zeros(2)
        e[c] = h
        fp = evaluate_frame(chart, (r + e)[None])
        fm = evaluate_frame(chart, (r - e)[None])
        assert np.allclose((fp.A - fm.A) / (2 * h), jet.dA[..., c], atol=1e-7)
        assert np.allclose((fp.H - fm.H) / (2 * h), jet.dH[..., c], atol=1e-7)
        assert np.allclose((fp.dn - fm.dn) / (2 * h), jet.ddn[..., c], atol=1e-7)


@given(coef, coef, coef, unit, unit, st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_tangential_gradient_of_linear_function_is_projection(a, b, c, r, s, g):
    chart = graph_chart(a, b, c, 0.0, 0.0)
    x, xr, xrr = chart.jets(np.array([[r, s]]), 2)
    f = frame_from_jets(x, xr, xrr)
    g = np.asarray(g)
    ref_grad = np.einsum("...ia,i->...a", xr, g)  # chain rule of x -> g.x
    assert np.allclose(tangential_gradient(f, ref_grad), f.P @ g, atol=1e-10)


@given(coef, coef, coef, unit, unit, st.floats(0.0, 2 * np.pi))
def test_boundary_frame_is_orthonormal(a, b, c, r, s, angle):
    chart = graph_chart(a, b, c, 0.0, 0.0)
    f = evaluate_frame(chart, np.array([[r, s]]))
    bf = boundary_frame(f, np.array([np.cos(angle), np.sin(angle)]))
    basis = np.stack([bf.q[0], bf.t[0], bf.n[0]])
    assert np.allclose(basis @ basis.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(basis) > 0  # q = t x n


def test_degenerate_chart_raises():
    chart = Chart.from_sympy([R_, R_, 0 * S_], (R_, S_), ((0.0, 1.0), (0.0, 1.0)), name="flat line")
    with pytest.raises(GeometryError, match="degenerate"):
        evaluate_frame(chart, np.array([[0.5, 0.5]]))


def test_chart_batched_shapes():
    chart = sphere_chart()
    r = np.random.default_rng(0).uniform(0.2, 0.8, size=(4, 5, 2))
    x, xr, xrr, xrrr = chart.jets(r, 3)
    assert x.shape == (4, 5, 3) and xr.shape == (4, 5, 3, 2)
    assert xrr.shape == (4, 5, 3, 2, 2) and xrrr.shape == (4, 5, 3, 2, 2, 2)
    assert np.allclose(np.linalg.norm(x, axis=-1), 1.0)
