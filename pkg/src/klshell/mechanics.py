"""Pointwise kinematics and constitutive relations of the Kirchhoff-Love shell.

Tensors are plain ``(..., 3, 3)`` arrays in global Cartesian components.
``grad_u`` always denotes the directional gradient with entries
``grad_u[i, j] = d u_i / d x_j`` restricted to the tangent plane.
Symmetric tensors are stored in six components ordered
``(11, 22, 33, 12, 13, 23)`` where needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import BoundaryFrame, SurfaceFrame

VOIGT = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


def _basis_tensors() -> np.ndarray:
    B = np.zeros((6, 3, 3))
    for c, (i, j) in enumerate(VOIGT):
        B[c, i, j] = 1.0
        B[c, j, i] = 1.0
    return B


SYM_BASIS = _basis_tensors()
"""``SYM_BASIS[c]`` is the symmetric tensor with unit component c (both off-diagonal slots set)."""


def to_components(T: np.ndarray) -> np.ndarray:
    """Six independent components of a symmetric tensor."""
    T = np.asarray(T)
    return np.stack([T[..., i, j] for i, j in VOIGT], axis=-1)


def from_components(c: np.ndarray) -> np.ndarray:
    """Symmetric 3x3 tensor from its six components."""
    return np.einsum("...c,cij->...ij", np.asarray(c, dtype=float), SYM_BASIS)


def sym(T: np.ndarray) -> np.ndarray:
    return 0.5 * (T + np.swapaxes(T, -1, -2))


@dataclass(frozen=True)
class MaterialParams:
    """Isotropic linear material and thickness.

    ``lam`` is the plane-stress Lame parameter ``E nu / (1 - nu^2)``.
    """

    E: float
    nu: float
    t: float

    def __post_init__(self):
        if not self.E > 0 or not self.t > 0:
            raise ValueError("E and t must be positive")
        if not 0.0 <= self.nu < 0.5:
            raise ValueError("Poisson's ratio must lie in [0, 0.5)")

    @property
    def mu(self) -> float:
        return self.E / (2.0 * (1.0 + self.nu))

    @property
    def lam(self) -> float:
        return self.E * self.nu / (1.0 - self.nu ** 2)

    @property
    def bending_compliance(self) -> float:
        return 12.0 / (self.E * self.t ** 3)


def membrane_strain(frame: SurfaceFrame, grad_u) -> np.ndarray:
    """Symmetric in-plane part ``sym(P grad_u P)``."""
    P = frame.P
    return sym(P @ grad_u @ P)


def bending_strain_from_u(frame: SurfaceFrame, grad_u, second_grads) -> np.ndarray:
    """``-sum_i cov(grad u_i) n_i`` from covariant second gradients.

    ``second_grads[..., i, :, :]`` is the covariant Hessian of component i.
    ``grad_u`` is accepted for signature symmetry with the other strains.
    """
    E = -np.einsum("...iab,...i->...ab", second_grads, frame.n)
    return E


def stress(mat: MaterialParams, eps, frame: SurfaceFrame) -> np.ndarray:
    """Plane-stress surface Hooke law ``2 mu eps + lam tr(eps) P``."""
    tr = np.trace(eps, axis1=-2, axis2=-1)
    return 2.0 * mat.mu * eps + mat.lam * tr[..., None, None] * frame.P


def resultants(mat: MaterialParams, eps_memb, eps_bend, frame: SurfaceFrame):
    """Effective normal force ``t sigma(eps_M)`` and moment ``t^3/12 sigma(eps_B)``."""
    n_eff = mat.t * stress(mat, eps_memb, frame)
    m = mat.t ** 3 / 12.0 * stress(mat, eps_bend, frame)
    return n_eff, m


def bending_strain_from_m(mat: MaterialParams, m, frame: SurfaceFrame, trace: str = "projected") -> np.ndarray:
    """Inverse bending law ``12/(E t^3) [(1+nu) m - nu tr(m) P]``.

    ``trace="projected"`` uses ``P : m`` (equal to ``tr m`` for in-plane
    moments and the choice that keeps the discrete moment block symmetric);
    ``trace="full"`` uses the plain trace.
    """
    if trace == "projected":
        tr = np.einsum("...ij,...ij->...", frame.P, m)
    elif trace == "full":
        tr = np.trace(m, axis1=-2, axis2=-1)
    else:
        raise ValueError(f"unknown trace mode {trace!r}")
    return mat.bending_compliance * ((1.0 + mat.nu) * m - mat.nu * tr[..., None, None] * frame.P)


def physical_normal_force(n_eff, m, frame: SurfaceFrame) -> np.ndarray:
    """Physical (generally non-symmetric) normal force ``n_eff + H m``."""
    return n_eff + frame.H @ m


def difference_vector(frame: SurfaceFrame, grad_u) -> np.ndarray:
    """Rotation measure ``w = -grad_u^T n``."""
    return -np.einsum("...ji,...j->...i", grad_u, frame.n)


def boundary_rotations(bframe: BoundaryFrame, w):
    """``(omega_t, omega_q) = (w . q, w . t)``."""
    return np.einsum("...i,...i->...", w, bframe.q), np.einsum("...i,...i->...", w, bframe.t)


def effective_boundary_force(bframe: BoundaryFrame, H, n_real, m, div_m, dmq_ds) -> np.ndarray:
    """Effective Kirchhoff-Love edge force as a Cartesian 3-vector.

    Parameters
    ----------
    bframe : BoundaryFrame
    H : (..., 3, 3) Weingarten map at the boundary point.
    n_real : (..., 3, 3) physical normal force.
    m : (..., 3, 3) moment tensor.
    div_m : (..., 3) surface divergence of m (projected internally).
    dmq_ds : (...,) derivative of ``m_q = t.m.q`` along the edge tangent.
    """
    t, q, n = bframe.t, bframe.q, bframe.n
    nq = np.einsum("...ij,...j->...i", n_real, q)
    p_t = np.einsum("...i,...i->...", nq, t)
    p_q = np.einsum("...i,...i->...", nq, q)
    Pdiv = div_m - np.einsum("...i,...i->...", div_m, n)[..., None] * n
    p_n = np.einsum("...i,...i->...", Pdiv, q)
    m_q = np.einsum("...i,...ij,...j->...", t, m, q)
    Ht = np.einsum("...ij,...j->...i", H, t)
    pt = p_t + np.einsum("...i,...i->...", Ht, t) * m_q
    pq = p_q + np.einsum("...i,...i->...", Ht, q) * m_q
    pn = p_n + dmq_ds
    return pt[..., None] * t + pq[..., None] * q + pn[..., None] * n


def kirchhoff_force(m_q_minus: float, m_q_plus: float) -> float:
    """Corner force from the jump of the conormal moment, ``m_q(C+) - m_q(C-)``."""
    return m_q_plus - m_q_minus
