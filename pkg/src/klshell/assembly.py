"""Element blocks of the hybridized mixed system and load vectors.

Unknowns per element: six moment components per node (element-local,
ordered ``(11, 22, 33, 12, 13, 23)``), three displacement components per
node and ``p + 1`` tangential-rotation multipliers on each of the four edges.
Local vectors are ordered ``[m (I, c) | u (I, k) | omega (edge, k)]``.

Two variants of the moment coupling are available:

``"symmetric"`` (default)
    Uses ``P : m`` as the trace in the inverse bending law and
    ``div(P m P)`` in the displacement equation, which makes ``K_mm``
    symmetric and ``K_um = K_mu^T`` exactly.
``"full_trace"``
    Uses the full ``tr(m)`` and ``div(m)`` without projection; ``K_mm`` and
    the coupling blocks are then non-symmetric on curved surfaces.  On flat
    surfaces both variants coincide.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .basis import EDGE_TANGENTS, edge_points, gauss_line, gauss_rule, lagrange_1d, lagrange_jets
from .geometry import SurfaceFrame, boundary_frame, frame_from_jets, projector_derivatives
from .mechanics import SYM_BASIS, MaterialParams
from .mesh import BoundaryClassification, ShellMesh

Load = Union[None, float, np.ndarray, Callable]


def _es(*args):
    return np.einsum(*args, optimize=True)


# (P : B_c) = weight_c * P_ij and B_c : B_d = weight_c * delta_cd
_OFFDIAG = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])


@dataclass(frozen=True)
class AssemblyOptions:
    """Discretization choices.

    ``quad`` is the number of Gauss points per direction (default ``p + 2``),
    ``geometry`` is ``"iso"`` or ``"exact"``, ``chunk`` bounds the number of
    elements processed in one vectorized batch.

    ``precision="extended"`` accumulates element integrals, the condensation
    and the global matrix in ``np.longdouble`` and refines the double
    precision factorization against extended-precision residuals.  This
    lowers the round-off floor of thin, stiff problems at several times the
    cost; it has no effect where ``np.longdouble`` is plain double.
    """

    variant: str = "symmetric"
    geometry: str = "iso"
    quad: Optional[int] = None
    chunk: int = 64
    precision: str = "double"

    def __post_init__(self):
        if self.variant not in ("symmetric", "full_trace"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.geometry not in ("iso", "exact"):
            raise ValueError(f"unknown geometry mode {self.geometry!r}")
        if self.precision not in ("double", "extended"):
            raise ValueError(f"unknown precision {self.precision!r}")

    @property
    def dtype(self):
        return np.longdouble if self.precision == "extended" else np.float64

    def q(self, p: int) -> int:
        return self.quad if self.quad is not None else p + 2


@dataclass
class ElementBlocks:
    """Blocks of a batch of element systems (leading axis = element)."""

    elems: np.ndarray
    K_mm: np.ndarray
    K_mu: np.ndarray
    K_mw: np.ndarray
    K_um: np.ndarray
    K_uu: np.ndarray
    K_wm: np.ndarray
    b_u: np.ndarray

    @property
    def n_m(self) -> int:
        return self.K_mm.shape[-1]

    def full_matrix(self) -> np.ndarray:
        """Uncondensed element matrices ``(ne, nm + nu + nw, nm + nu + nw)``."""
        ne, nm = self.K_mm.shape[:2]
        nu, nw = self.K_uu.shape[-1], self.K_mw.shape[-1]
        K = np.zeros((ne, nm + nu + nw, nm + nu + nw))
        K[:, :nm, :nm] = self.K_mm
        K[:, :nm, nm:nm + nu] = self.K_mu
        K[:, :nm, nm + nu:] = self.K_mw
        K[:, nm:nm + nu, :nm] = self.K_um
        K[:, nm:nm + nu, nm:nm + nu] = self.K_uu
        K[:, nm + nu:, :nm] = self.K_wm
        return K


@dataclass
class VolumeData:
    """Frames and shape-function data at volume quadrature points of a batch."""

    frame: SurfaceFrame
    weights: np.ndarray  # (ne, nq), includes area element
    N: np.ndarray  # (nq, nn)
    gradN: np.ndarray  # (ne, nq, nn, 3)


@dataclass
class EdgeData:
    frame: SurfaceFrame
    t: np.ndarray
    q: np.ndarray
    ds: np.ndarray  # (ne, ql) quadrature weight times line element
    N: np.ndarray  # (ql, nn)
    gradN: np.ndarray  # (ne, ql, nn, 3)
    L: np.ndarray  # (ql, p+1) edge basis in element traversal direction
    xi: np.ndarray


def volume_data(mesh: ShellMesh, elems, opts: AssemblyOptions) -> VolumeData:
    p = mesh.p
    rule = gauss_rule(opts.q(p))
    geom = mesh.geometry(elems, opts.geometry)
    x, xr, xrr = geom.jets(rule.points, 2)
    f = frame_from_jets(x, xr, xrr, geom.name)
    N, dN = lagrange_jets(p, rule.points, 1)
    gradN = _es("eqia,qIa->eqIi", f.A, dN)
    return VolumeData(f, rule.weights * f.area, N, gradN)


def edge_data(mesh: ShellMesh, elems, le: int, opts: AssemblyOptions) -> EdgeData:
    p = mesh.p
    line = gauss_line(opts.q(p))
    r = edge_points(le, line.points)
    geom = mesh.geometry(elems, opts.geometry)
    x, xr, xrr = geom.jets(r, 2)
    f = frame_from_jets(x, xr, xrr, geom.name)
    bf = boundary_frame(f, EDGE_TANGENTS[le])
    jac = np.linalg.norm(_es("eqia,a->eqi", xr, EDGE_TANGENTS[le]), axis=-1)
    N, dN = lagrange_jets(p, r, 1)
    gradN = _es("eqia,qIa->eqIi", f.A, dN)
    L = lagrange_1d(p, line.points)[0]
    return EdgeData(f, bf.t, bf.q, line.weights * jac, N, gradN, L, line.points)


def _eval_load(load: Load, x: np.ndarray, width: int) -> np.ndarray:
    shape = x.shape[:-1] + ((width,) if width > 1 else ())
    if load is None:
        return np.zeros(shape)
    if callable(load):
        return np.broadcast_to(np.asarray(load(x), dtype=float), shape)
    return np.broadcast_to(np.asarray(load, dtype=float), shape)


def _qsum(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``out[e, X, Y] = sum_q a[e, q, X] b[e, q, Y]`` as a batched matrix product."""
    ne, nq = a.shape[:2]
    return np.matmul(a.reshape(ne, nq, -1).transpose(0, 2, 1), b.reshape(ne, nq, -1))


def element_matrices(mesh: ShellMesh, elems, mat: MaterialParams, opts: AssemblyOptions = AssemblyOptions(),
                     body_load: Load = None) -> ElementBlocks:
    """Evaluate all element blocks for a batch of elements by quadrature."""
    elems = np.atleast_1d(np.asarray(elems, dtype=int))
    p = mesh.p
    nn = (p + 1) ** 2
    ne = len(elems)
    vd = volume_data(mesh, elems, opts)
    f = vd.frame
    dt = opts.dtype
    w, N, G = (a.astype(dt) for a in (vd.weights, vd.N, vd.gradN))
    nq = len(N)
    P, H, n = (a.astype(dt) for a in (f.P, f.H, f.n))
    c = mat.bending_compliance
    wN = w[:, :, None] * N[None]  # (ne, nq, nn)

    # moment block
    PB = P[..., [0, 1, 2, 0, 0, 1], [0, 1, 2, 1, 2, 2]] * _OFFDIAG  # (ne, nq, 6): P : B_c
    trB = np.broadcast_to(np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0]), PB.shape)
    g = PB if opts.variant == "symmetric" else trB
    C = c * (mat.nu * PB[..., :, None] * g[..., None, :] - (1.0 + mat.nu) * np.diag(_OFFDIAG))
    NwN = wN[:, :, :, None] * N[None, :, None, :]  # (ne, nq, I, J)
    K_mm = _qsum(NwN, C).reshape(ne, nn, nn, 6, 6).transpose(0, 1, 3, 2, 4).reshape(ne, 6 * nn, 6 * nn)

    # moment-displacement coupling, volume part; layout (e, I, c, J, k)
    HB = _es("eqik,cij->eqckj", H, SYM_BASIS)  # (H e_k) . B_c as a vector in j
    PBP = _es("eqai,cij,eqjb->eqcab", P, SYM_BASIS, P)
    dP = projector_derivatives(f).astype(dt)  # [m, i, j]
    divPBP = _es("eqbai,cij,eqjb->eqca", dP, SYM_BASIS, P) + _es(
        "eqai,cij,eqbjb->eqca", P, SYM_BASIS, dP
    )
    Gt = G.swapaxes(-1, -2)  # (ne, nq, 3, nn)
    HBG = np.matmul(HB.reshape(ne, nq, 18, 3), Gt).reshape(ne, nq, 6, 3, nn)  # [c, k, J]
    vol_H = _qsum(wN, HBG.transpose(0, 1, 2, 4, 3)).reshape(ne, nn, 6, nn, 3)

    def _pbp_term(T):
        # sum_q w n_k G_J . T_c . G_I  ->  (e, I, c, J, k)
        TG = np.matmul(T.reshape(ne, nq, 18, 3), Gt).reshape(ne, nq, 6, 3, nn)  # [c, a, I]
        GTG = np.matmul(G[:, :, None], TG)  # (ne, nq, 6, J, I)
        wn = w[:, :, None] * n
        return _qsum(GTG.transpose(0, 1, 4, 2, 3), wn).reshape(ne, nn, 6, nn, 3)

    t1 = _pbp_term(PBP)
    divG = np.matmul(divPBP, Gt)  # (ne, nq, 6, nn) [c, J]
    wNn = wN[:, :, :, None] * n[:, :, None, :]  # (ne, nq, I, k)
    t2 = _qsum(wNn, divG).reshape(ne, nn, 3, 6, nn).transpose(0, 1, 3, 4, 2)
    K_mu = vol_H + t1 + t2
    if opts.variant == "symmetric":
        K_um_vol = None
    else:
        Bfull = np.ascontiguousarray(np.broadcast_to(SYM_BASIS.astype(dt), (ne, nq, 6, 3, 3)))
        K_um_vol = vol_H + _pbp_term(Bfull)

    # edge terms
    K_mw = np.zeros((ne, nn, 6, 4, p + 1), dtype=dt)
    edge_mu = np.zeros((ne, nn, 6, nn, 3), dtype=dt)
    sign = mesh.skeleton.elem_sign[elems]  # (ne, 4)
    for le in range(4):
        ed = edge_data(mesh, elems, le, opts)
        et, eq, en, egN = (a.astype(dt) for a in (ed.t, ed.q, ed.frame.n, ed.gradN))
        tBq = _es("eqi,cij,eqj->eqc", et, SYM_BASIS, eq)
        qBq = _es("eqi,cij,eqj->eqc", eq, SYM_BASIS, eq)
        dNt = _es("eqJi,eqi->eqJ", egN, et)
        dsN = ed.ds.astype(dt)[:, :, None] * ed.N.astype(dt)[None]  # (ne, ql, I)
        nql = dsN.shape[1]
        a = dsN[:, :, :, None] * en[:, :, None, :]  # (I, k)
        b = tBq[:, :, :, None] * dNt[:, :, None, :]  # (c, J)
        edge_mu -= _qsum(a, b).reshape(ne, nn, 3, 6, nn).transpose(0, 1, 3, 4, 2)
        Lq = np.broadcast_to(ed.L.astype(dt), (ne, nql, p + 1))
        K_mw[:, :, :, le, :] = sign[:, le, None, None, None] * _qsum(
            dsN[:, :, :, None] * qBq[:, :, None, :], Lq
        ).reshape(ne, nn, 6, p + 1)
    K_mu = (K_mu + edge_mu).reshape(ne, 6 * nn, 3 * nn)
    K_mw = K_mw.reshape(ne, 6 * nn, 4 * (p + 1))
    if K_um_vol is None:
        K_um = np.swapaxes(K_mu, 1, 2)
    else:
        K_um = np.swapaxes((K_um_vol + edge_mu).reshape(ne, 6 * nn, 3 * nn), 1, 2)

    # membrane block, layout (e, I, i, J, j)
    wG = w[:, :, None, None] * G
    gg = np.matmul(wG, Gt)  # (ne, nq, I, J), weighted
    Kp = _qsum(gg, P).reshape(ne, nn, nn, 3, 3).transpose(0, 1, 3, 2, 4)
    Kx = _qsum(wG, G).reshape(ne, nn, 3, nn, 3)  # [I, a, J, b] = sum w G_Ia G_Jb
    K_uu = mat.t * (
        mat.mu * (Kp + Kx.transpose(0, 1, 4, 3, 2)) + mat.lam * Kx
    ).reshape(ne, 3 * nn, 3 * nn)

    fx = _eval_load(body_load, f.x, 3).astype(dt)
    b_u = _qsum(wN, fx).reshape(ne, 3 * nn)
    return ElementBlocks(elems, K_mm, K_mu, K_mw, K_um, K_uu, np.swapaxes(K_mw, 1, 2), b_u)


# ---------------------------------------------------------------------------
# DOF layout


@dataclass
class DofLayout:
    """Global numbering of the condensed unknowns ``[u | omega_t]``."""

    n_nodes: int
    n_edges: int
    p: int
    n_elems: int

    @property
    def n_u(self) -> int:
        return 3 * self.n_nodes

    @property
    def n_omega(self) -> int:
        return self.n_edges * (self.p + 1)

    @property
    def n_condensed(self) -> int:
        return self.n_u + self.n_omega

    @property
    def n_m(self) -> int:
        return 6 * (self.p + 1) ** 2 * self.n_elems

    @property
    def n_uncondensed(self) -> int:
        return self.n_condensed + self.n_m

    def omega_dof(self, edge, k):
        return self.n_u + np.asarray(edge) * (self.p + 1) + np.asarray(k)


def dof_layout(mesh: ShellMesh) -> DofLayout:
    return DofLayout(mesh.n_nodes, mesh.skeleton.n_edges, mesh.p, mesh.n_elems)


def element_dofs(mesh: ShellMesh, elems) -> np.ndarray:
    """Global condensed DOFs of each element, ordered ``[u (I, k) | omega (edge, k)]``."""
    elems = np.atleast_1d(elems)
    p = mesh.p
    lay = dof_layout(mesh)
    conn = mesh.elements[elems]
    udofs = (3 * conn[:, :, None] + np.arange(3)).reshape(len(elems), -1)
    sk = mesh.skeleton
    edges = sk.elem_edges[elems]
    sgn = sk.elem_sign[elems]
    k = np.arange(p + 1)
    kk = np.where(sgn[:, :, None] > 0, k, p - k)
    wdofs = lay.omega_dof(edges[:, :, None], kk).reshape(len(elems), -1)
    return np.concatenate([udofs, wdofs], axis=1)


# ---------------------------------------------------------------------------
# boundary loads


def neumann_loads(mesh: ShellMesh, bc: BoundaryClassification, opts: AssemblyOptions = AssemblyOptions()) -> np.ndarray:
    """Global load vector from prescribed edge forces, edge moments and corner forces."""
    lay = dof_layout(mesh)
    b = np.zeros(lay.n_condensed)
    sk = mesh.skeleton
    p = mesh.p
    ref = mesh.ref
    for edge, traction in bc.neumann_u_edges:
        if traction is None:
            continue
        e, le = sk.plus[edge], sk.plus_local[edge]
        fixed = bc.u_fixed[sk.nodes[edge]]
        ed = edge_data(mesh, [e], le, opts)
        val = _eval_load(traction, ed.frame.x[0], 3)
        Lw = ed.L * ed.ds[0][:, None]
        contrib = Lw.T @ val  # (p+1, 3) on edge nodes in traversal order
        contrib[fixed] = 0.0
        np.add.at(b, (3 * sk.nodes[edge][:, None] + np.arange(3)).ravel(), contrib.ravel())
    for edge, moment in bc.neumann_omega_edges:
        if moment is None:
            continue
        e, le = sk.plus[edge], sk.plus_local[edge]
        ed = edge_data(mesh, [e], le, opts)
        val = _eval_load(moment, ed.frame.x[0], 1)
        b[lay.omega_dof(edge, np.arange(p + 1))] += (ed.L * ed.ds[0][:, None]).T @ val
    for node, e, local, force in bc.corner_forces:
        x, xr, xrr = mesh.geometry([e], opts.geometry).jets(ref.nodes[local][None], 2)
        n = frame_from_jets(x, xr, xrr).n[0, 0]
        b[3 * node:3 * node + 3] += force * n
    return b


def corner_forces(mesh: ShellMesh, corners, opts: AssemblyOptions = AssemblyOptions()) -> np.ndarray:
    """Load vector of ``F_C n`` at the given ``(node, elem, local_node, F_C)`` corners."""
    bc = BoundaryClassification(np.zeros((mesh.n_nodes, 3), bool), np.zeros((mesh.n_nodes, 3)),
                                [], [], [], [], [], list(corners))
    return neumann_loads(mesh, bc, opts)
