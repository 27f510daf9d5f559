"""Shared fixtures: small flat and curved meshes and their boundary conditions."""

from __future__ import annotations

import numpy as np
import pytest
import sympy as sp
from hypothesis import HealthCheck, settings

from klshell.geometry import Chart
from klshell.mechanics import MaterialParams
from klshell.mesh import BcSpec, Patch, SegmentBC, build_structured_mesh

settings.register_profile("klshell", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("klshell")

R_, S_ = sp.symbols("r s", real=True)

ALL_SIDES = {"bottom": "bottom", "right": "right", "top": "top", "left": "left"}


def plate_chart(a: float = 1.0, b: float = 1.0) -> Chart:
    return Chart.from_sympy([R_, S_, 0 * R_], (R_, S_), ((0.0, a), (0.0, b)), name="plate")


def cylinder_chart(radius: float = 1.0, angle: float = 1.2, length: float = 2.0) -> Chart:
    return Chart.from_sympy([radius * sp.sin(R_), S_, radius * sp.cos(R_)], (R_, S_),
                            ((-angle / 2, angle / 2), (0.0, length)), name="cylinder")


def sphere_chart(radius: float = 1.0) -> Chart:
    # longitude-colatitude patch away from the poles
    th, ph = S_, R_
    return Chart.from_sympy(
        [radius * sp.sin(th) * sp.cos(ph), radius * sp.sin(th) * sp.sin(ph), radius * sp.cos(th)],
        (R_, S_), ((0.0, 1.0), (0.9, 2.2)), name="sphere",
    )


def mesh_of(chart: Chart, n: int, m: int, p: int):
    return build_structured_mesh([Patch(chart, n, m, ALL_SIDES)], p)


@pytest.fixture
def material():
    return MaterialParams(E=1.0e4, nu=0.3, t=0.05)


def clamped_left_spec() -> BcSpec:
    free = SegmentBC.free()
    return BcSpec({"left": SegmentBC.clamped(), "right": free, "bottom": free, "top": free})


def rigid_modes(mesh) -> np.ndarray:
    """Six rigid-body displacement fields ``(6, n_nodes, 3)``."""
    x = mesh.coords
    modes = [np.broadcast_to(np.eye(3)[k], x.shape) for k in range(3)]
    modes += [np.cross(np.eye(3)[k], x) for k in range(3)]
    return np.array(modes)
