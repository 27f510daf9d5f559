"""Structured meshing, node merging, skeleton bookkeeping and boundary classification."""

from __future__ import annotations

import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from klshell.benchmarks import make_case
from klshell.errors import MeshError, SpecificationError
from klshell.geometry import Chart
from klshell.mesh import (BcSpec, CornerBC, Patch, SegmentBC, boundary_corners, build_skeleton,
                          build_structured_mesh, classify_boundary, write_vtk_mesh)

from conftest import ALL_SIDES, R_, S_, cylinder_chart, mesh_of, plate_chart


@pytest.mark.parametrize("p,n,m", [(1, 3, 2), (2, 2, 3), (4, 1, 1)])
def test_single_patch_counts(p, n, m):
    mesh = mesh_of(plate_chart(2.0, 1.0), n, m, p)
    assert mesh.n_nodes == (n * p + 1) * (m * p + 1)
    assert mesh.n_elems == n * m
    sk = mesh.skeleton
    assert sk.n_edges == n * (m + 1) + m * (n + 1)
    assert len(sk.boundary) == 2 * (n + m)
    assert sorted(set(mesh.edge_tags.values())) == ["bottom", "left", "right", "top"]


def test_periodic_seam_is_merged():
    chart = Chart.from_sympy([sp.cos(R_), sp.sin(R_), S_], (R_, S_),
                             ((0.0, 2 * np.pi), (0.0, 1.0)), periodic=(True, False), name="tube")
    mesh = build_structured_mesh([Patch(chart, 6, 2, {"bottom": "bottom", "top": "top"})], 2)
    assert mesh.n_nodes == 12 * 5
    assert len(mesh.skeleton.boundary) == 12
    # annulus: V - E + F = 0 for the vertex mesh
    p1 = build_structured_mesh([Patch(chart, 6, 2, {"bottom": "bottom", "top": "top"})], 1)
    assert p1.n_nodes - p1.skeleton.n_edges + p1.n_elems == 0


def test_multipatch_hemisphere_is_a_disk():
    case = make_case("hemisphere_clamped")
    mesh = case.mesh(3, 1)
    assert mesh.n_nodes - mesh.skeleton.n_edges + mesh.n_elems == 1
    assert set(mesh.edge_tags.values()) == {"equator"}
    assert np.allclose(np.linalg.norm(mesh.coords, axis=1), 10.0)


def test_unmatched_periodic_seam_raises():
    chart = Chart.from_sympy([sp.cos(R_), sp.sin(R_), S_], (R_, S_),
                             ((0.0, 6.0), (0.0, 1.0)), periodic=(True, False))
    with pytest.raises(MeshError, match="seam"):
        build_structured_mesh([Patch(chart, 4, 1)], 1)


def test_invalid_mesh_parameters_raise():
    with pytest.raises(MeshError):
        build_structured_mesh([Patch(plate_chart(), 2, 2)], 0)
    with pytest.raises(MeshError):
        build_structured_mesh([Patch(plate_chart(), 0, 2)], 1)


def test_skeleton_parents_traverse_edges_oppositely():
    mesh = mesh_of(cylinder_chart(), 3, 3, 3)
    sk, ref = mesh.skeleton, mesh.ref
    for k in sk.interior:
        plus = mesh.elements[sk.plus[k], ref.edge_nodes[sk.plus_local[k]]]
        minus = mesh.elements[sk.minus[k], ref.edge_nodes[sk.minus_local[k]]]
        assert np.array_equal(plus, minus[::-1])
        assert np.array_equal(plus, sk.nodes[k])
    assert np.all(sk.elem_sign[sk.plus, sk.plus_local] == 1)
    assert np.all(sk.elem_sign[sk.minus[sk.interior], sk.minus_local[sk.interior]] == -1)


def test_inconsistent_orientation_is_detected():
    elements = np.array([[0, 1, 2, 3], [3, 4, 1, 5]])  # second element mirrored
    with pytest.raises(MeshError, match="orientation"):
        build_skeleton(elements, 1)


MESH = mesh_of(plate_chart(), 3, 2, 2)


@given(arrays(float, (MESH.n_elems, 4, 3), elements=st.floats(-5, 5)), st.data())
def test_jump_antisymmetry(values, data):
    sk = MESH.skeleton
    flip = data.draw(st.lists(st.sampled_from(sk.interior.tolist()), unique=True))
    swapped = sk.swapped(flip)
    j0, j1 = sk.jump(values), swapped.jump(values)
    flip = np.array(flip, dtype=int)
    keep = np.setdiff1d(np.arange(sk.n_edges), flip)
    assert np.allclose(j1[flip], -j0[flip])
    assert np.allclose(j1[keep], j0[keep])
    # a continuous field has no interior jumps
    cont = np.broadcast_to(np.arange(sk.n_edges)[:, None], (sk.n_edges, 3))
    per_elem = cont[sk.elem_edges]
    assert np.allclose(sk.jump(per_elem)[sk.interior], 0.0)


def test_swapping_boundary_edge_raises():
    with pytest.raises(MeshError):
        MESH.skeleton.swapped(MESH.skeleton.boundary[:1])


def test_corners_of_a_square_plate():
    corners = boundary_corners(MESH)
    assert len(corners) == 4
    assert all(abs(c.kink_deg - 90.0) < 1e-8 for c in corners)
    xs = sorted(tuple(np.round(MESH.coords[c.node], 12)) for c in corners)
    assert xs == [(0.0, 0.0, 0.0), (0.0, 1.0, 0.0), (1.0, 0.0, 0.0), (1.0, 1.0, 0.0)]


def test_classify_boundary_partitions_segments():
    free = SegmentBC.free()
    spec = BcSpec({"left": SegmentBC.clamped(), "right": SegmentBC.roller((2,)), "bottom": free, "top": free})
    bc = classify_boundary(MESH, spec)
    left_nodes = np.flatnonzero(np.isclose(MESH.coords[:, 0], 0.0))
    right_nodes = np.flatnonzero(np.isclose(MESH.coords[:, 0], 1.0))
    assert bc.u_fixed[left_nodes].all()
    assert bc.u_fixed[right_nodes, 2].all() and not bc.u_fixed[np.setdiff1d(right_nodes, left_nodes), :2].any()
    tags = MESH.edge_tags
    assert {tags[k] for k in bc.dirichlet_omega_edges} == {"left"}
    assert {tags[k] for k, _ in bc.neumann_u_edges} == {"right", "bottom", "top"}
    assert {tags[k] for k, _ in bc.neumann_omega_edges} == {"right", "bottom", "top"}


def test_classify_boundary_errors():
    with pytest.raises(SpecificationError, match="not covered"):
        classify_boundary(MESH, BcSpec({"left": SegmentBC.clamped()}))
    moved = SegmentBC("navier", (0, 1, 2), False, value=(0.0, 0.0, 1.0))
    with pytest.raises(SpecificationError, match="conflicting"):
        classify_boundary(MESH, BcSpec({"left": SegmentBC.clamped(), "bottom": moved,
                                        "right": SegmentBC.free(), "top": SegmentBC.free()}))
    free = {k: SegmentBC.free() for k in ALL_SIDES}
    interior_corner = int(np.argmin(np.linalg.norm(MESH.coords - [0.5, 0.5, 0.0], axis=1)))
    with pytest.raises(SpecificationError, match="corner"):
        classify_boundary(MESH, BcSpec(free, {interior_corner: CornerBC("force", 1.0)}))


def test_point_fix_and_corner_conditions():
    free = {k: SegmentBC.free() for k in ALL_SIDES}
    corner = [c.node for c in boundary_corners(MESH)][0]
    bc = classify_boundary(MESH, BcSpec(free, {corner: CornerBC("pinned")}, (((0.5, 0.49, 0.0), (1,)),)))
    centre = int(np.argmin(np.linalg.norm(MESH.coords - [0.5, 0.5, 0.0], axis=1)))
    assert bc.u_fixed[centre].tolist() == [False, True, False]
    assert bc.u_fixed[corner].all()
    assert bc.u_fixed.sum() == 4


def test_vtk_mesh_file(tmp_path):
    path = tmp_path / "plate.vtk"
    write_vtk_mesh(MESH, path, {"u": MESH.coords, "s": MESH.coords[:, 0]}, {"e": np.arange(MESH.n_elems)})
    lines = path.read_text().splitlines()
    ncells = MESH.n_elems * MESH.p ** 2
    assert lines[4] == f"POINTS {MESH.n_nodes} double"
    assert f"CELLS {ncells} {5 * ncells}" in lines
    assert f"CELL_DATA {ncells}" in lines and f"POINT_DATA {MESH.n_nodes}" in lines
    with pytest.raises(OSError):
        write_vtk_mesh(MESH, tmp_path / "missing" / "x.vtk")
