"""Static condensation, global assembly, Dirichlet elimination and solution.

The moment unknowns are eliminated element by element; the global system
couples only displacements and edge rotations.  After Dirichlet elimination
the condensed matrix is symmetric positive definite (for the symmetric
variant), which is verified through the pivots of a symmetric-mode sparse LU
factorization without row pivoting.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (AssemblyOptions, DofLayout, ElementBlocks, Load, dof_layout, element_dofs,
                       element_matrices, neumann_loads)
from .errors import ConditioningError, SolverError
from .mechanics import MaterialParams
from .mesh import BcSpec, BoundaryClassification, ShellMesh, classify_boundary


@dataclass
class Condensed:
    """Condensed element matrices and the recovery operators.

    ``recovery[e] = K_mm^{-1} [K_mu, K_mw]`` so that the element moments are
    ``m = -recovery[e] @ [u_e; omega_e]``.
    """

    K: np.ndarray
    b: np.ndarray
    recovery: np.ndarray


def _refined_solve(A: np.ndarray, B: np.ndarray, sweeps: int = 3) -> np.ndarray:
    """Batched ``A^{-1} B``; extended-precision input is refined against its own residual."""
    if A.dtype == np.float64:
        return np.linalg.solve(A, B)
    A64 = A.astype(np.float64)
    X = np.linalg.solve(A64, B.astype(np.float64)).astype(A.dtype)
    for _ in range(sweeps):
        X = X + np.linalg.solve(A64, (B - A @ X).astype(np.float64))
    return X


def condense(blocks: ElementBlocks, symmetric: bool = True) -> Condensed:
    """Schur complement of the moment block for a batch of elements."""
    nu = blocks.K_uu.shape[-1]
    ne = len(blocks.elems)
    rhs = np.concatenate([blocks.K_mu, blocks.K_mw], axis=2)
    left = np.concatenate([blocks.K_um, blocks.K_wm], axis=1)
    try:
        S = _refined_solve(blocks.K_mm, rhs)
    except np.linalg.LinAlgError:
        bad = []
        for i in range(ne):
            try:
                np.linalg.solve(blocks.K_mm[i], rhs[i])
            except np.linalg.LinAlgError:
                bad.append(int(blocks.elems[i]))
        raise ConditioningError(f"moment block singular on elements {bad}") from None
    K = -left @ S
    K[:, :nu, :nu] += blocks.K_uu
    if symmetric:
        K = 0.5 * (K + np.swapaxes(K, 1, 2))
    b = np.zeros(K.shape[:2], dtype=K.dtype)
    b[:, :nu] = blocks.b_u
    return Condensed(K, b, S)


def assemble_global(mesh: ShellMesh, data, layout: Optional[DofLayout] = None) -> tuple:
    """Scatter-add element matrices ``data = [(elems, K_el, b_el), ...]``."""
    lay = layout or dof_layout(mesh)
    n = lay.n_condensed
    dtype = data[0][1].dtype if data else np.float64
    K = sp.csr_matrix((n, n), dtype=dtype)
    b = np.zeros(n, dtype=dtype)
    for elems, Ke, be in data:
        dofs = element_dofs(mesh, elems)
        if dofs.max(initial=-1) >= n or dofs.min(initial=0) < 0:
            raise SolverError("element DOF index out of range")
        nl = dofs.shape[1]
        rows = np.repeat(dofs, nl, axis=1).ravel()
        cols = np.tile(dofs, (1, nl)).ravel()
        K = K + sp.csr_matrix((Ke.ravel(), (rows, cols)), shape=(n, n))
        np.add.at(b, dofs.ravel(), be.ravel())
    return K.tocsr(), b


def dirichlet_mask(mesh: ShellMesh, bc: BoundaryClassification) -> tuple:
    lay = dof_layout(mesh)
    fixed = np.zeros(lay.n_condensed, dtype=bool)
    values = np.zeros(lay.n_condensed)
    fixed[: lay.n_u] = bc.u_fixed.ravel()
    values[: lay.n_u] = np.where(bc.u_fixed, bc.u_value, 0.0).ravel()
    for edge in bc.dirichlet_omega_edges:
        fixed[lay.omega_dof(edge, np.arange(mesh.p + 1))] = True
    return fixed, values


def apply_dirichlet(K: sp.spmatrix, b: np.ndarray, fixed: np.ndarray, values: np.ndarray):
    """Eliminate prescribed DOFs: returns ``(K_FF, b_F - K_FD x_D, free_index)``."""
    free = np.flatnonzero(~fixed)
    dof_fixed = np.flatnonzero(fixed)
    K = sp.csr_matrix(K)
    rhs = b[free] - K[free][:, dof_fixed] @ values[dof_fixed]
    return K[free][:, free].tocsc(), rhs, free


@dataclass
class SolveInfo:
    method: str
    residual: float
    min_pivot: float = float("nan")
    max_pivot: float = float("nan")


def solve_spd(K: sp.spmatrix, b: np.ndarray, method: str = "direct", symmetric: bool = True,
              tol: float = 1e-10) -> tuple:
    """Solve the reduced condensed system.

    ``method="direct"`` uses a fill-reducing sparse LU with diagonal pivoting
    only, whose pivots are checked for positivity (an LDL^T-type definiteness
    test).  ``method="cg"`` runs Jacobi-preconditioned conjugate gradients.
    An extended-precision ``K`` is factorized in double precision and the
    direct solution is refined against extended-precision residuals.
    """
    n = K.shape[0]
    if n == 0:
        return np.zeros(0), SolveInfo(method, 0.0)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n), SolveInfo(method, 0.0)
    K_ext = sp.csc_matrix(K) if K.dtype != np.float64 else None
    K = sp.csc_matrix(K, dtype=np.float64)
    b_ext = b
    b = np.asarray(b, dtype=np.float64)
    if method == "direct":
        if symmetric:
            try:
                lu = spla.splu(K, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                               options={"SymmetricMode": True})
            except RuntimeError as exc:
                raise SolverError(f"factorization failed ({exc}); a rigid-body mode is probably unconstrained") from exc
            piv = lu.U.diagonal()
            scale = abs(K).max()
            if np.any(piv <= 1e-14 * scale) or np.any(lu.perm_r != lu.perm_c):
                raise SolverError(
                    f"condensed matrix is not positive definite: smallest pivot {piv.min():.3e} "
                    f"(matrix scale {scale:.3e}); check for missing Dirichlet conditions"
                )
            x = lu.solve(b)
            if K_ext is not None:
                x = _refine(K_ext, b_ext, x, lu.solve)
            info = SolveInfo("direct", 0.0, float(piv.min()), float(piv.max()))
        else:
            lu = spla.splu(K)
            x = lu.solve(b)
            if K_ext is not None:
                x = _refine(K_ext, b_ext, x, lu.solve)
            info = SolveInfo("direct-lu", 0.0)
    elif method == "cg":
        d = K.diagonal()
        if np.any(d <= 0):
            raise SolverError("non-positive diagonal entry; conjugate gradients not applicable")
        M = sp.diags(1.0 / d)
        x, flag = spla.cg(K, b, rtol=tol * 1e-2, atol=0.0, M=M, maxiter=20 * n)
        if flag != 0:
            raise SolverError(f"conjugate gradients did not converge (flag {flag})")
        info = SolveInfo("cg", 0.0)
    else:
        raise ValueError(f"unknown solver method {method!r}")
    if not np.all(np.isfinite(x)):
        raise SolverError("solution contains non-finite values")
    if K_ext is not None:
        info.residual = float(np.linalg.norm(K_ext @ x - b_ext) / bnorm)
    else:
        info.residual = float(np.linalg.norm(K @ x - b) / bnorm)
    return x, info


def _refine(K, b, x, solve, sweeps: int = 6):
    """Iterative refinement of ``K x = b`` with residuals in the precision of ``K``."""
    x = x.astype(K.dtype)
    eps = float(np.finfo(K.dtype).eps)
    for _ in range(sweeps):
        dx = solve(np.asarray(b - K @ x, dtype=np.float64))
        x = x + dx
        if np.linalg.norm(dx) <= 10 * eps * np.linalg.norm(x.astype(np.float64)):
            break
    return x


@dataclass
class Solution:
    """Solved fields of one run.

    ``u`` is nodal ``(n_nodes, 3)``, ``omega`` per skeleton edge
    ``(n_edges, p+1)``, ``m`` per element node ``(n_elems, nn, 6)``.
    """

    mesh: ShellMesh
    mat: MaterialParams
    opts: AssemblyOptions
    bc: BoundaryClassification
    spec: BcSpec
    body_load: Load
    u: np.ndarray
    omega: np.ndarray
    m: np.ndarray
    x: np.ndarray
    layout: DofLayout
    info: SolveInfo
    timings: dict = field(default_factory=dict)


def recover_moments(recovery: np.ndarray, x_local: np.ndarray) -> np.ndarray:
    """Element moments ``m = -K_mm^{-1} (K_mu u + K_mw omega)``."""
    return -np.einsum("eij,ej->ei", recovery, x_local)


def solve_shell(mesh: ShellMesh, mat: MaterialParams, spec: BcSpec, body_load: Load = None,
                opts: AssemblyOptions = AssemblyOptions(), method: str = "direct") -> Solution:
    """Full pipeline: element blocks, condensation, assembly, BCs, solve, recovery."""
    t0 = time.perf_counter()
    bc = classify_boundary(mesh, spec)
    lay = dof_layout(mesh)
    symmetric = opts.variant == "symmetric"
    data, recs = [], []
    for start in range(0, mesh.n_elems, opts.chunk):
        elems = np.arange(start, min(start + opts.chunk, mesh.n_elems))
        blocks = element_matrices(mesh, elems, mat, opts, body_load)
        cond = condense(blocks, symmetric)
        data.append((elems, cond.K, cond.b))
        recs.append(cond.recovery)
    t1 = time.perf_counter()
    K, b = assemble_global(mesh, data, lay)
    b += neumann_loads(mesh, bc, opts)
    fixed, values = dirichlet_mask(mesh, bc)
    Kr, br, free = apply_dirichlet(K, b, fixed, values)
    xr, info = solve_spd(Kr, br, method=method, symmetric=symmetric)
    x_full = values.astype(xr.dtype)
    x_full[free] = xr
    x = x_full.astype(np.float64)
    t2 = time.perf_counter()
    recovery = np.concatenate(recs, axis=0)
    dofs = element_dofs(mesh, np.arange(mesh.n_elems))
    m = recover_moments(recovery, x_full[dofs]).astype(np.float64).reshape(mesh.n_elems, -1, 6)
    t3 = time.perf_counter()
    return Solution(
        mesh=mesh, mat=mat, opts=opts, bc=bc, spec=spec, body_load=body_load,
        u=x[: lay.n_u].reshape(-1, 3), omega=x[lay.n_u:].reshape(-1, mesh.p + 1), m=m, x=x,
        layout=lay, info=info,
        timings={"assembly": t1 - t0, "solve": t2 - t1, "recovery": t3 - t2},
    )


def solve_uncondensed(mesh: ShellMesh, mat: MaterialParams, spec: BcSpec, body_load: Load = None,
                      opts: AssemblyOptions = AssemblyOptions()):
    """Reference solve of the full saddle-point system with global moment DOFs.

    Intended as a test oracle on small meshes.  Returns ``(u, omega, m)``
    shaped as in :class:`Solution`.
    """
    bc = classify_boundary(mesh, spec)
    lay = dof_layout(mesh)
    nm_el = 6 * (mesh.p + 1) ** 2
    ntot = lay.n_condensed + lay.n_m
    blocks = element_matrices(mesh, np.arange(mesh.n_elems), mat, opts, body_load)
    Kel = blocks.full_matrix()
    dofs_c = element_dofs(mesh, np.arange(mesh.n_elems))
    mdofs = lay.n_condensed + np.arange(lay.n_m).reshape(mesh.n_elems, nm_el)
    dofs = np.concatenate([mdofs, dofs_c], axis=1)
    nl = dofs.shape[1]
    K = sp.csr_matrix((Kel.ravel(), (np.repeat(dofs, nl, axis=1).ravel(), np.tile(dofs, (1, nl)).ravel())),
                      shape=(ntot, ntot))
    b = np.zeros(ntot)
    np.add.at(b, dofs_c[:, : blocks.b_u.shape[1]].ravel(), blocks.b_u.astype(np.float64).ravel())
    b[: lay.n_condensed] += neumann_loads(mesh, bc, opts)
    fixed_c, values_c = dirichlet_mask(mesh, bc)
    fixed = np.concatenate([fixed_c, np.zeros(lay.n_m, bool)])
    values = np.concatenate([values_c, np.zeros(lay.n_m)])
    Kr, br, free = apply_dirichlet(K, b, fixed, values)
    xr = spla.spsolve(Kr.tocsc(), br)
    x = values.copy()
    x[free] = xr
    u = x[: lay.n_u].reshape(-1, 3)
    omega = x[lay.n_u: lay.n_condensed].reshape(-1, mesh.p + 1)
    m = x[lay.n_condensed:].reshape(mesh.n_elems, -1, 6)
    return u, omega, m
