"""Error measures, derived fields, point probes and VTK export.

All volume quantities are evaluated at Gauss points from the element
polynomials of ``u`` and ``m``.  Tangential derivatives of first and second
order are formed with the chain rule

.. math:: \\partial_j g_i = \\sum_c (\\partial_c A_{ia} \\phi_{,a} + A_{ia} \\phi_{,ac}) A_{jc},

where ``A = J G^{-1}`` and ``phi_{,a}`` are reference derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .basis import (EDGE_TANGENTS, edge_points, gauss_line, gauss_rule, invert_map,
                    lagrange_jets)
from .errors import ProbeError, SpecificationError
from .geometry import SurfaceFrame, boundary_frame, frame_from_jets, surface_jet
from .mechanics import (SYM_BASIS, bending_strain_from_m, effective_boundary_force, membrane_strain,
                        physical_normal_force, stress, sym)
from .mesh import write_vtk_mesh


def _es(*args):
    return np.einsum(*args, optimize=True)


class Measure(float):
    """A float error value that remembers whether it is relative."""

    def __new__(cls, value, relative: bool = True):
        obj = super().__new__(cls, value)
        obj.relative = relative
        return obj


# ---------------------------------------------------------------------------
# field evaluation


@dataclass
class PointFields:
    """Solution fields at the quadrature points of a batch of elements.

    Arrays carry leading axes ``(ne, nq)``.  Second-order quantities
    (``eps_bend_u``, ``div_n_real`` and ``normal_div``) are ``None`` unless
    requested.
    """

    frame: SurfaceFrame
    weights: np.ndarray
    u: np.ndarray
    grad_u: np.ndarray
    eps_memb: np.ndarray
    n_tilde: np.ndarray
    m: np.ndarray
    eps_bend_m: np.ndarray
    div_m: np.ndarray
    n_real: np.ndarray
    eps_bend_u: Optional[np.ndarray] = None
    div_n_real: Optional[np.ndarray] = None
    normal_div: Optional[np.ndarray] = None  # div(P div m)

    @property
    def x(self) -> np.ndarray:
        return self.frame.x

    @property
    def shear(self) -> np.ndarray:
        """Transverse shear ``q = P div m``."""
        return _es("eqij,eqj->eqi", self.frame.P, self.div_m)


def _trace_mode(sol) -> str:
    return "projected" if sol.opts.variant == "symmetric" else "full"


def evaluate_fields(sol, elems, r, weights=None, second: bool = False) -> PointFields:
    """Evaluate ``u``, ``m`` and derived quantities at reference points ``r``.

    Parameters
    ----------
    sol : Solution
    elems : array of element ids
    r : (nq, 2) reference points
    weights : (nq,) quadrature weights; the returned weights include the
        surface element.
    second : bool
        Also form the second-derivative quantities used by the residuals.
    """
    mesh = sol.mesh
    p = mesh.p
    elems = np.atleast_1d(np.asarray(elems, dtype=int))
    r = np.asarray(r, dtype=float)
    geom = mesh.geometry(elems, sol.opts.geometry)
    jets = geom.jets(r, 3 if second else 2)
    if second:
        sj = surface_jet(*jets, where=geom.name)
        f = sj.frame
    else:
        f = frame_from_jets(*jets[:3], where=geom.name)
    B = lagrange_jets(p, r, 2 if second else 1)
    ue = sol.u[mesh.elements[elems]]  # (ne, nn, 3)
    me = sol.m[elems]  # (ne, nn, 6)
    u = _es("qI,eIi->eqi", B[0], ue)
    ur = _es("qIa,eIi->eqia", B[1], ue)
    m = _es("qI,eIc,cij->eqij", B[0], me, SYM_BASIS)
    mr = _es("qIa,eIc,cij->eqija", B[1], me, SYM_BASIS)
    A, P, H, n = f.A, f.P, f.H, f.n
    grad_u = _es("eqia,eqja->eqij", ur, A)
    eps_m = membrane_strain(f, grad_u)
    mat = sol.mat
    n_tilde = mat.t * stress(mat, eps_m, f)
    eps_b_m = bending_strain_from_m(mat, m, f, _trace_mode(sol))
    div_m = _es("eqijc,eqjc->eqi", mr, A)
    n_real = physical_normal_force(n_tilde, m, f)
    w = None if weights is None else np.asarray(weights) * f.area
    out = PointFields(f, w, u, grad_u, eps_m, n_tilde, m, eps_b_m, div_m, n_real)
    if not second:
        return out

    dA, dP, dH = sj.dA, sj.dP, sj.dH
    urr = _es("qIab,eIi->eqiab", B[2], ue)
    mrr = _es("qIab,eIc,cij->eqijab", B[2], me, SYM_BASIS)
    # reference derivative of grad_u along c, then tangential second gradients
    dgrad = _es("eqiac,eqja->eqijc", urr, A) + _es("eqia,eqjac->eqijc", ur, dA)
    D = _es("eqijc,eqkc->eqijk", dgrad, A)  # D[i] = grad(grad u_i)
    out.eps_bend_u = -_es("eqjl,eqilk,eqi->eqjk", P, D, n)

    # div(P div m)
    ddiv = _es("eqijcd,eqjc->eqid", mrr, A) + _es("eqijc,eqjcd->eqid", mr, dA)
    dv = _es("eqikd,eqk->eqid", dP, div_m) + _es("eqik,eqkd->eqid", P, ddiv)
    out.normal_div = _es("eqid,eqid->eq", A, dv)

    # div(H m)
    dHm = _es("eqikc,eqkj->eqijc", dH, m) + _es("eqik,eqkjc->eqijc", H, mr)
    div_Hm = _es("eqijc,eqjc->eqi", dHm, A)

    # div(n_tilde)
    G1 = _es("eqikc,eqkl,eqlj->eqcij", dP, grad_u, P)
    G2 = _es("eqik,eqklc,eqlj->eqcij", P, dgrad, P)
    G3 = _es("eqik,eqkl,eqljc->eqcij", P, grad_u, dP)
    deps = sym(G1 + G2 + G3)  # (e, q, c, i, j)
    dtr = np.trace(deps, axis1=-2, axis2=-1)
    tr = np.trace(eps_m, axis1=-2, axis2=-1)
    dn_t = mat.t * (2.0 * mat.mu * deps + mat.lam * (dtr[..., None, None] * P[:, :, None]
                                                     + tr[..., None, None, None] * np.moveaxis(dP, -1, 2)))
    div_nt = _es("eqcij,eqjc->eqi", dn_t, A)
    out.div_n_real = div_nt + div_Hm
    return out


def _quad(sol, quad):
    return gauss_rule(quad if quad is not None else sol.opts.q(sol.mesh.p) + 1)


def _batches(sol):
    ne, chunk = sol.mesh.n_elems, sol.opts.chunk
    for start in range(0, ne, chunk):
        yield np.arange(start, min(start + chunk, ne))


def integrate(sol, integrand: Callable[[PointFields], np.ndarray], second: bool = False,
              quad: Optional[int] = None) -> float:
    """Sum over elements of the quadrature of ``integrand(fields)`` (shape ``(ne, nq)``)."""
    rule = _quad(sol, quad)
    total = 0.0
    for elems in _batches(sol):
        pf = evaluate_fields(sol, elems, rule.points, rule.weights, second)
        total += float(np.sum(pf.weights * integrand(pf)))
    return total


# ---------------------------------------------------------------------------
# error measures


def l2_error(sol, field_h: Callable[[PointFields], np.ndarray], field_exact: Callable[[np.ndarray], np.ndarray],
             quad: Optional[int] = None) -> Measure:
    """Relative L2 error ``sqrt(int |f_ex - f_h|^2 / int |f_ex|^2)``.

    ``field_h`` maps :class:`PointFields` to values ``(ne, nq, ...)`` and
    ``field_exact`` maps points ``x`` to values of the same shape.  When the
    exact field vanishes identically the absolute error is returned with
    ``relative = False``.
    """
    rule = _quad(sol, quad)
    num = den = 0.0
    for elems in _batches(sol):
        pf = evaluate_fields(sol, elems, rule.points, rule.weights)
        fh = np.asarray(field_h(pf), dtype=float)
        fe = np.asarray(field_exact(pf.x), dtype=float)
        ax = tuple(range(2, fh.ndim))
        num += float(np.sum(pf.weights * np.sum((fe - fh) ** 2, axis=ax)))
        den += float(np.sum(pf.weights * np.sum(fe ** 2, axis=ax)))
    if den == 0.0:
        return Measure(np.sqrt(num), relative=False)
    return Measure(np.sqrt(num / den))


def residual_1(pf: PointFields) -> np.ndarray:
    """``r1 = -eps_B(m) + eps_B(u)`` at the points of ``pf``."""
    return -pf.eps_bend_m + pf.eps_bend_u


def residual_2(pf: PointFields, f_vals) -> np.ndarray:
    """``r2 = div n_real + n div(P div m) + H div m + f``."""
    return (pf.div_n_real + pf.frame.n * pf.normal_div[..., None]
            + _es("eqij,eqj->eqi", pf.frame.H, pf.div_m) + f_vals)


def _load(sol, x):
    from .assembly import _eval_load

    return _eval_load(sol.body_load, x, 3)


def residual_error_1(sol, quad: Optional[int] = None) -> Measure:
    """Absolute residual error of the bending constitutive equation."""
    val = integrate(sol, lambda pf: np.sum(residual_1(pf) ** 2, axis=(-2, -1)), second=True, quad=quad)
    return Measure(np.sqrt(max(val, 0.0)), relative=False)


def residual_error_2(sol, relative: bool = True, quad: Optional[int] = None) -> Measure:
    """Residual error of the equilibrium equation.

    With ``relative=True`` the squared error is divided by ``int |f|^2``;
    for a vanishing load the absolute value is returned with
    ``relative = False``.
    """
    num = integrate(sol, lambda pf: np.sum(residual_2(pf, _load(sol, pf.x)) ** 2, axis=-1), second=True,
                    quad=quad)
    num = max(num, 0.0)
    if not relative:
        return Measure(np.sqrt(num), relative=False)
    den = integrate(sol, lambda pf: np.sum(_load(sol, pf.x) ** 2, axis=-1), quad=quad)
    if den <= 0.0:
        return Measure(np.sqrt(num), relative=False)
    return Measure(np.sqrt(num / den))


def _edge_fields(sol, edge: int, quad: Optional[int] = None):
    """Effective boundary force and quadrature weights along one boundary edge."""
    mesh, p = sol.mesh, sol.mesh.p
    sk = mesh.skeleton
    e, le = int(sk.plus[edge]), int(sk.plus_local[edge])
    line = gauss_line(quad if quad is not None else sol.opts.q(p) + 1)
    r = edge_points(le, line.points)
    That = EDGE_TANGENTS[le]
    geom = mesh.geometry([e], sol.opts.geometry)
    x, xr, xrr = (a[0] for a in geom.jets(r, 2))
    f = frame_from_jets(x, xr, xrr, geom.name)
    bf = boundary_frame(f, That)
    pf = evaluate_fields(sol, [e], r)
    B = lagrange_jets(p, r, 1)
    me = sol.m[e]
    mr = _es("qIa,Ic,cij->qija", B[1], me, SYM_BASIS)
    m = pf.m[0]
    tv = _es("qia,a->qi", xr, That)
    jac = np.linalg.norm(tv, axis=-1)
    dtv = _es("qiab,a,b->qi", xrr, That, That)
    t, q, n = bf.t, bf.q, bf.n
    dt = (dtv - np.sum(dtv * t, axis=-1)[:, None] * t) / jac[:, None]
    dn = _es("qia,a->qi", f.dn, That)
    dq = np.cross(dt, n) + np.cross(t, dn)
    dm = _es("qija,a->qij", mr, That)
    dmq = (_es("qi,qij,qj->q", dt, m, q) + _es("qi,qij,qj->q", t, dm, q) + _es("qi,qij,qj->q", t, m, dq))
    p_tilde = effective_boundary_force(bf, f.H, pf.n_real[0], m, pf.div_m[0], dmq / jac)
    return x, p_tilde, line.weights * jac


def boundary_residual(sol, relative: bool = True, quad: Optional[int] = None) -> Measure:
    """Residual of the effective force condition on the Neumann part of the boundary.

    Only displacement components that are not prescribed on an edge
    contribute.  Without Neumann edges the value is 0 with
    ``relative = False``; for a vanishing prescribed force the absolute value
    is returned.
    """
    from .assembly import _eval_load

    mesh = sol.mesh
    num = den = 0.0
    edges = [(k, tr) for k, tr in sol.bc.neumann_u_edges]
    if not edges:
        return Measure(0.0, relative=False)
    for k, traction in edges:
        seg = sol.spec.segments[mesh.edge_tags[int(k)]]
        free = np.ones(3, dtype=bool)
        free[list(seg.fixed)] = False
        x, p_tilde, w = _edge_fields(sol, int(k), quad)
        p_hat = _eval_load(traction, x, 3)
        res = (p_tilde - p_hat)[:, free]
        num += float(np.sum(w * np.sum(res ** 2, axis=-1)))
        den += float(np.sum(w * np.sum(p_hat[:, free] ** 2, axis=-1)))
    if not relative or den == 0.0:
        return Measure(np.sqrt(num), relative=False)
    return Measure(np.sqrt(num / den))


def stored_energy(sol, quad: Optional[int] = None) -> float:
    """``1/2 int eps_M(u) : n_tilde(u) + eps_B(m) : m``."""
    return 0.5 * integrate(
        sol,
        lambda pf: _es("eqij,eqij->eq", pf.eps_memb, pf.n_tilde) + _es("eqij,eqij->eq", pf.eps_bend_m, pf.m),
        quad=quad,
    )


def energy_error(energy: float, energy_ref: float) -> float:
    """Relative stored-energy error ``|e_ref - e| / e_ref``."""
    if not energy_ref > 0:
        raise SpecificationError(f"reference energy must be positive, got {energy_ref}")
    return abs(energy_ref - energy) / energy_ref


def external_work(sol, quad: Optional[int] = None) -> float:
    """Work of body loads, edge forces, edge moments and corner forces on the solution."""
    from .assembly import neumann_loads

    body = integrate(sol, lambda pf: np.sum(pf.u * _load(sol, pf.x), axis=-1), quad=quad)
    b = neumann_loads(sol.mesh, sol.bc, sol.opts)
    return body + float(b @ sol.x)


# ---------------------------------------------------------------------------
# probing


def locate_point(mesh, x_ref, geometry: str = "iso", tol: Optional[float] = None, candidates: int = 8):
    """Element and reference coordinates of the surface point closest to ``x_ref``.

    Raises :class:`ProbeError` when no element contains a point within
    ``tol`` (default ``1e-3`` times the largest element size).
    """
    x_ref = np.asarray(x_ref, dtype=float)
    centroids = mesh.coords[mesh.elements].mean(axis=1)
    k = min(candidates, mesh.n_elems)
    _, idx = cKDTree(centroids).query(x_ref, k=k)
    idx = np.atleast_1d(idx)
    tol = 1e-3 * float(mesh.element_size().max()) if tol is None else tol
    best = None
    for e in idx:
        geom = mesh.geometry([int(e)], geometry)
        try:
            r, dist = invert_map(geom, x_ref)
        except Exception:
            continue
        if np.max(np.abs(r)) > 1.0 + 1e-8:
            continue
        if best is None or dist < best[2]:
            best = (int(e), r, dist)
    if best is None or best[2] > tol:
        raise ProbeError(f"no element contains the point {x_ref.tolist()} within {tol:.3e}")
    return best


def probe_displacement(sol, x_ref, component: Optional[int] = 2, tol: Optional[float] = None):
    """Displacement (or one component of it) at a surface point."""
    e, r, _ = locate_point(sol.mesh, x_ref, sol.opts.geometry, tol)
    N = lagrange_jets(sol.mesh.p, r[None], 0)[0][0]
    u = N @ sol.u[sol.mesh.elements[e]]
    return u if component is None else float(u[component])


# ---------------------------------------------------------------------------
# derived fields


@dataclass
class DerivedFields:
    """Per-quadrature-point derived quantities of all elements ``(n_elems, nq, ...)``."""

    x: np.ndarray
    n_real: np.ndarray
    m_eigenvalues: np.ndarray  # two largest in magnitude
    n_eigenvalues: np.ndarray  # of sym(n_real), two largest in magnitude
    shear: np.ndarray
    shear_norm: np.ndarray


def principal_values(T: np.ndarray, count: int = 2) -> np.ndarray:
    """Eigenvalues of symmetric tensors sorted by decreasing magnitude (first ``count``)."""
    lam = np.linalg.eigvalsh(sym(T))
    order = np.argsort(-np.abs(lam), axis=-1)
    return np.take_along_axis(lam, order, axis=-1)[..., :count]


def aligned_eigenvalue(T: np.ndarray, direction: np.ndarray) -> np.ndarray:
    """Eigenvalue of ``sym(T)`` whose eigenvector is most parallel to ``direction``."""
    lam, vec = np.linalg.eigh(sym(T))
    score = np.abs(np.einsum("...ik,...i->...k", vec, direction))
    k = np.argmax(score, axis=-1)
    return np.take_along_axis(lam, k[..., None], axis=-1)[..., 0]


def derived_fields(sol, quad: Optional[int] = None) -> DerivedFields:
    rule = _quad(sol, quad)
    parts = []
    for elems in _batches(sol):
        pf = evaluate_fields(sol, elems, rule.points)
        q = pf.shear
        parts.append((pf.x, pf.n_real, principal_values(pf.m), principal_values(pf.n_real), q,
                      np.linalg.norm(q, axis=-1)))
    return DerivedFields(*(np.concatenate(a, axis=0) for a in zip(*parts)))


# ---------------------------------------------------------------------------
# benchmark evaluation


def arc_l2_errors(sol, arc, quad: Optional[int] = None) -> dict:
    """Relative L2 errors of ``u``, hoop moment, hoop normal force and shear norm."""
    return {
        "l2_u": l2_error(sol, lambda pf: pf.u, arc.displacement, quad),
        "l2_m": l2_error(sol, lambda pf: aligned_eigenvalue(pf.m, arc.hoop_direction(pf.x)),
                         arc.moment_eigenvalue, quad),
        "l2_n": l2_error(sol, lambda pf: aligned_eigenvalue(pf.n_real, arc.hoop_direction(pf.x)),
                         arc.normal_force_eigenvalue, quad),
        "l2_q": l2_error(sol, lambda pf: np.linalg.norm(pf.shear, axis=-1), arc.shear_norm, quad),
    }


def evaluate_errors(sol, case, errors: Sequence[str]) -> dict:
    """Evaluate the named error groups (``l2``, ``res1``, ``res2``, ``bound``, ``energy``, ``probe``)."""
    out = {}
    for name in errors:
        if name == "l2":
            if case.analytic is None:
                raise SpecificationError(f"case {case.name} has no analytic solution for L2 errors")
            out.update({k: float(v) for k, v in arc_l2_errors(sol, case.analytic).items()})
        elif name == "res1":
            out["res1"] = float(residual_error_1(sol))
        elif name == "res2":
            out["res2"] = float(residual_error_2(sol))
        elif name == "bound":
            out["bound"] = float(boundary_residual(sol))
        elif name == "energy":
            e = stored_energy(sol)
            out["energy"] = e
            if case.energy_ref is not None:
                out["energy_error"] = energy_error(e, case.energy_ref)
        elif name == "probe":
            w = probe_displacement(sol, case.probe_point, case.probe_component)
            out["probe"] = w
            if case.w_ref is not None:
                out["probe_error"] = abs(w - case.w_ref) / abs(case.w_ref)
        else:
            raise SpecificationError(f"unknown error measure {name!r}")
    return out


# ---------------------------------------------------------------------------
# output


def export_vtk(sol, path) -> None:
    """Write displacements and element-averaged moment eigenvalues and shear norm to VTK."""
    d = derived_fields(sol)
    u = sol.u
    point = {"u": u, "u_norm": np.linalg.norm(u, axis=-1)}
    cell = {
        "m_eig1": d.m_eigenvalues[..., 0].mean(axis=1),
        "m_eig2": d.m_eigenvalues[..., 1].mean(axis=1),
        "q_norm": d.shear_norm.mean(axis=1),
    }
    try:
        write_vtk_mesh(sol.mesh, path, point, cell)
    except OSError as exc:
        raise OSError(f"cannot write VTK file {path}: {exc}") from exc
