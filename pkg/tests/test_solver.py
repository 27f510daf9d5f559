"""Condensation, Dirichlet elimination and full solves against independent references."""

from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sparse
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from klshell import postproc
from klshell.assembly import AssemblyOptions, element_matrices, neumann_loads, volume_data
from klshell.benchmarks import make_case
from klshell.errors import SolverError
from klshell.mechanics import MaterialParams
from klshell.mesh import BcSpec, SegmentBC
from klshell.solver import (apply_dirichlet, assemble_global, condense, dirichlet_mask, solve_shell, solve_spd,
                            solve_uncondensed)

from conftest import ALL_SIDES, clamped_left_spec, cylinder_chart, mesh_of, plate_chart, sphere_chart

MAT = MaterialParams(E=1.0e4, nu=0.3, t=0.05)


@pytest.mark.parametrize("name,p", [("scordelis_lo", 2), ("hemisphere_navier", 3), ("extruded_arc", 3),
                                    ("ring_3", 2), ("hyperbolic_paraboloid_1", 2)])
def test_stored_energy_is_half_the_external_work(name, p):
    case = make_case(name)
    sol = solve_shell(case.mesh(2, p), case.material, case.bc, case.body_load)
    q = sol.opts.q(p)
    energy, work = postproc.stored_energy(sol, quad=q), postproc.external_work(sol, quad=q)
    assert energy > 0
    assert abs(energy - 0.5 * work) <= 1e-8 * energy


def test_unconstrained_plate_is_rejected():
    mesh = mesh_of(plate_chart(), 2, 2, 2)
    spec = BcSpec({k: SegmentBC.free() for k in ALL_SIDES})
    with pytest.raises(SolverError):
        solve_shell(mesh, MAT, spec, np.array([0.0, 0.0, 1.0]))


def test_zero_load_gives_zero_solution():
    mesh = mesh_of(plate_chart(), 2, 2, 2)
    sol = solve_shell(mesh, MAT, clamped_left_spec())
    assert not sol.x.any() and not sol.m.any()


def test_conjugate_gradients_match_direct_solver():
    mesh = mesh_of(cylinder_chart(), 3, 3, 2)
    load = np.array([0.0, 0.0, -1.0])
    a = solve_shell(mesh, MAT, clamped_left_spec(), load)
    b = solve_shell(mesh, MAT, clamped_left_spec(), load, method="cg")
    assert np.abs(a.x - b.x).max() <= 1e-7 * np.abs(a.x).max()
    assert a.info.min_pivot > 0 and a.info.residual < 1e-10


def test_unknown_solver_method():
    K = sparse.identity(3, format="csc")
    with pytest.raises(ValueError):
        solve_spd(K, np.ones(3), method="gmres")


def test_indefinite_matrix_fails_pivot_check():
    K = sparse.csc_matrix(np.diag([2.0, -1.0, 3.0]))
    with pytest.raises(SolverError, match="positive definite"):
        solve_spd(K, np.ones(3))


@given(st.integers(3, 8).flatmap(lambda n: st.tuples(
    arrays(float, (n, n), elements=st.floats(-1, 1)),
    arrays(bool, n),
    arrays(float, n, elements=st.floats(-1, 1)),
    arrays(float, n, elements=st.floats(-1, 1)))))
def test_dirichlet_elimination_solves_constrained_system(data):
    B, fixed, values, b = data
    n = len(b)
    K = B @ B.T + n * np.eye(n)
    Kr, br, free = apply_dirichlet(sparse.csr_matrix(K), b, fixed, np.where(fixed, values, 0.0))
    x = np.where(fixed, values, 0.0)
    x[free] = np.linalg.solve(Kr.toarray(), br) if free.size else x[free]
    # the free equations hold and the fixed values are kept
    assert np.allclose((K @ x - b)[free], 0.0, atol=1e-10)
    assert np.array_equal(x[fixed], values[fixed])


def test_prescribed_displacement_is_imposed():
    mesh = mesh_of(plate_chart(), 3, 2, 2)
    moved = SegmentBC("navier", (0, 1, 2), False, value=(0.0, 0.0, 0.01))
    free = SegmentBC.free()
    spec = BcSpec({"left": SegmentBC.clamped(), "right": moved, "bottom": free, "top": free})
    sol = solve_shell(mesh, MAT, spec)
    right = np.isclose(mesh.coords[:, 0], 1.0)
    assert np.allclose(sol.u[right], [0.0, 0.0, 0.01], atol=1e-15)
    assert np.abs(sol.u[~right, 2]).max() < 0.01 and np.abs(sol.u[~right, 2]).max() > 0


def test_cantilever_strip_matches_beam_theory():
    """With nu = 0 a clamped strip under uniform pressure is an Euler-Bernoulli beam."""
    L, width, f = 2.0, 0.25, 1.0e-3
    mat = MaterialParams(E=1.0e4, nu=0.0, t=0.05)
    mesh = mesh_of(plate_chart(L, width), 4, 1, 4)
    sol = solve_shell(mesh, mat, clamped_left_spec(), np.array([0.0, 0.0, f]))
    tip = np.isclose(mesh.coords[:, 0], L)
    w_tip = f * L ** 4 / (8.0 * mat.E * mat.t ** 3 / 12.0)
    assert np.allclose(sol.u[tip, 2], w_tip, rtol=1e-9)
    # the clamped root carries the full beam moment f L^2 / 2
    root = postproc.evaluate_fields(sol, [0], np.array([[-1.0, 0.0]]))
    m11 = root.m[0, 0, 0, 0]
    assert np.isclose(abs(m11), f * L ** 2 / 2, rtol=1e-6)


@pytest.mark.parametrize("chart,p", [(plate_chart(1.0, 0.6), 2), (cylinder_chart(), 3), (sphere_chart(1.3), 2)])
def test_condensed_matches_uncondensed(chart, p):
    mesh = mesh_of(chart, 2, 2, p)
    load = lambda x: np.stack([0.2 * x[..., 1], 0 * x[..., 0], -1.0 - x[..., 0]], -1)  # noqa: E731
    sol = solve_shell(mesh, MAT, clamped_left_spec(), load)
    u, omega, m = solve_uncondensed(mesh, MAT, clamped_left_spec(), load)
    assert np.abs(sol.u - u).max() <= 1e-8 * np.abs(u).max()
    assert np.abs(sol.omega - omega).max() <= 1e-8 * np.abs(omega).max()
    assert np.abs(sol.m - m).max() <= 1e-8 * np.abs(m).max()


def test_variants_coincide_on_flat_plates():
    mesh = mesh_of(plate_chart(1.0, 0.6), 2, 2, 3)
    load = np.array([0.1, 0.0, -1.0])
    a = solve_shell(mesh, MAT, clamped_left_spec(), load)
    b = solve_shell(mesh, MAT, clamped_left_spec(), load, AssemblyOptions(variant="full_trace"))
    assert b.info.method == "direct-lu"
    assert np.abs(a.x - b.x).max() <= 1e-10 * np.abs(a.x).max()


def test_extended_precision_solve_agrees_with_double():
    mesh = mesh_of(sphere_chart(1.3), 2, 2, 3)
    load = np.array([0.0, 0.0, -1.0])
    a = solve_shell(mesh, MAT, clamped_left_spec(), load)
    b = solve_shell(mesh, MAT, clamped_left_spec(), load, AssemblyOptions(precision="extended"))
    assert b.x.dtype == np.float64 and b.m.dtype == np.float64
    assert np.abs(a.x - b.x).max() <= 1e-9 * np.abs(a.x).max()


def _reactions(case, n, p):
    """Nodal reaction forces ``K x - b`` on the constrained displacement DOFs."""
    mesh = case.mesh(n, p)
    sol = solve_shell(mesh, case.material, case.bc, case.body_load)
    blocks = element_matrices(mesh, np.arange(mesh.n_elems), case.material, sol.opts, case.body_load)
    cond = condense(blocks)
    K, b = assemble_global(mesh, [(blocks.elems, cond.K, cond.b)])
    b += neumann_loads(mesh, sol.bc, sol.opts)
    fixed, _ = dirichlet_mask(mesh, sol.bc)
    r = np.where(fixed, K @ sol.x - b, 0.0)
    return sol, r[: sol.layout.n_u].reshape(-1, 3)


@pytest.mark.parametrize("name", ["extruded_arc", "hemisphere_clamped", "scordelis_lo"])
def test_reactions_balance_the_applied_load(name):
    case = make_case(name)
    sol, reactions = _reactions(case, 2, 3)
    area = volume_data(sol.mesh, np.arange(sol.mesh.n_elems), sol.opts).weights.sum()
    total_load = area * np.asarray(case.body_load)
    assert np.allclose(reactions.sum(0), -total_load, rtol=0, atol=1e-9 * np.abs(total_load).max())


def test_moments_become_tangential_under_refinement():
    ratios = []
    for n in (2, 4, 8):
        sol = solve_shell(mesh_of(cylinder_chart(), n, n, 2), MAT, clamped_left_spec(), np.array([0.0, 0.0, -1.0]))
        normal = postproc.integrate(sol, lambda pf: np.sum(np.einsum("eqij,eqj->eqi", pf.m, pf.frame.n) ** 2, -1))
        total = postproc.integrate(sol, lambda pf: np.sum(pf.m ** 2, (-1, -2)))
        ratios.append(np.sqrt(normal / total))
    assert ratios[0] > ratios[1] > ratios[2]
