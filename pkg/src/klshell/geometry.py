"""Pointwise surface geometry in tangential-differential-calculus form.

Every routine here accepts arrays with arbitrary leading batch dimensions, so a
single call evaluates a frame at one point or at all quadrature points of a
chunk of elements.  Reference coordinates always come last: ``r[..., 2]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import GeometryError

DET_GUARD = 1e-14

# Evaluator signature: (r, s, order) -> [x, x_r, x_rr, x_rrr][: order + 1]
JetFn = Callable[[np.ndarray, np.ndarray, int], list]


@dataclass(frozen=True)
class Chart:
    """Analytic map from a 2D parameter box to a surface in 3D.

    ``evaluator(r, s, order)`` returns the point and its parametric
    derivatives up to ``order`` (at most 3), shaped ``(..., 3)``,
    ``(..., 3, 2)``, ``(..., 3, 2, 2)`` and ``(..., 3, 2, 2, 2)``.
    """

    evaluator: JetFn
    box: tuple[tuple[float, float], tuple[float, float]]
    periodic: tuple[bool, bool] = (False, False)
    name: str = ""

    def jets(self, r, order: int = 2) -> list:
        r = np.asarray(r, dtype=float)
        return self.evaluator(r[..., 0], r[..., 1], order)

    def __call__(self, r) -> np.ndarray:
        return self.jets(r, 0)[0]

    @classmethod
    def from_sympy(cls, exprs: Sequence, symbols: Sequence, box, periodic=(False, False), name: str = "") -> "Chart":
        """Build a chart whose derivatives are generated symbolically."""
        import sympy as sp

        r, s = symbols
        x = [sp.sympify(e) for e in exprs]
        levels = [x]
        for _ in range(3):
            prev = levels[-1]
            levels.append([sp.diff(e, v) for e in prev for v in (r, s)])
        fns = [sp.lambdify((r, s), lvl, modules="numpy", cse=True) for lvl in levels]

        def evaluator(rr, ss, order):
            rr = np.asarray(rr, dtype=float)
            ss = np.asarray(ss, dtype=float)
            shape = np.broadcast(rr, ss).shape
            out = []
            for k in range(order + 1):
                vals = fns[k](rr, ss)
                arr = np.stack([np.broadcast_to(np.asarray(v, dtype=float), shape) for v in vals], axis=-1)
                out.append(arr.reshape(shape + (3,) + (2,) * k))
            return out

        return cls(evaluator, (tuple(map(float, box[0])), tuple(map(float, box[1]))), tuple(periodic), name)


@dataclass(frozen=True)
class SurfaceFrame:
    """Geometric quantities at one or many surface points.

    ``A = J G^{-1}`` maps reference gradients to tangential gradients and
    ``area`` is the surface element ``sqrt(det G)``.
    """

    x: np.ndarray
    J: np.ndarray
    G: np.ndarray
    Ginv: np.ndarray
    n: np.ndarray
    P: np.ndarray
    H: np.ndarray
    kappa: np.ndarray
    A: np.ndarray
    area: np.ndarray
    dn: np.ndarray  # parametric derivatives of n, (..., 3, 2)


@dataclass(frozen=True)
class BoundaryFrame:
    t: np.ndarray
    q: np.ndarray
    n: np.ndarray


def _cross(a, b):
    return np.cross(a, b, axis=-1)


def _inv2(G, where="") -> tuple[np.ndarray, np.ndarray]:
    det = G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] * G[..., 1, 0]
    scale = np.einsum("...ab,...ab->...", G, G)
    bad = ~(det > DET_GUARD * scale)
    if np.any(bad):
        idx = np.argwhere(np.atleast_1d(bad))[0]
        raise GeometryError(f"degenerate Jacobian (rank < 2) {where} at batch index {tuple(idx)}")
    inv = np.empty_like(G)
    inv[..., 0, 0] = G[..., 1, 1] / det
    inv[..., 1, 1] = G[..., 0, 0] / det
    inv[..., 0, 1] = -G[..., 0, 1] / det
    inv[..., 1, 0] = -G[..., 1, 0] / det
    return inv, det


def frame_from_jets(x, xr, xrr, where: str = "") -> SurfaceFrame:
    """Assemble a :class:`SurfaceFrame` from the map and its derivatives."""
    G = np.einsum("...ia,...ib->...ab", xr, xr)
    Ginv, _ = _inv2(G, where)
    a = _cross(xr[..., 0], xr[..., 1])
    s = np.linalg.norm(a, axis=-1)
    n = a / s[..., None]
    A = xr @ Ginv
    P = np.eye(3) - n[..., :, None] * n[..., None, :]
    # d(x_r x x_s)/dr_c, then project and normalize for dn
    da = _cross(xrr[..., :, 0, :].swapaxes(-1, -2), xr[..., None, :, 1]) + _cross(
        xr[..., None, :, 0], xrr[..., :, 1, :].swapaxes(-1, -2)
    )  # (..., 2, 3)
    dn = (da - np.einsum("...ci,...i->...c", da, n)[..., None] * n[..., None, :]) / s[..., None, None]
    dn = dn.swapaxes(-1, -2)  # (..., 3, 2)
    H = dn @ A.swapaxes(-1, -2)
    kappa = np.trace(H, axis1=-2, axis2=-1)
    return SurfaceFrame(x=x, J=xr, G=G, Ginv=Ginv, n=n, P=P, H=H, kappa=kappa, A=A, area=s, dn=dn)


def evaluate_frame(source, r, where: str = "") -> SurfaceFrame:
    """Frame of a chart or element geometry at reference point(s) ``r``."""
    x, xr, xrr = source.jets(r, 2)
    return frame_from_jets(x, xr, xrr, where or getattr(source, "name", ""))


def tangential_gradient(frame: SurfaceFrame, ref_grad) -> np.ndarray:
    """Tangential gradient ``J G^{-1} grad_r f`` of a scalar field."""
    return np.einsum("...ia,...a->...i", frame.A, np.asarray(ref_grad, dtype=float))


def projector_derivatives(frame: SurfaceFrame) -> np.ndarray:
    """``dP[..., m, i, j]``: tangential derivative along m of ``P_ij``."""
    H, n = frame.H, frame.n
    return -(H[..., :, :, None] * n[..., None, None, :] + n[..., None, :, None] * H[..., :, None, :])


def boundary_frame(frame: SurfaceFrame, ref_tangent) -> BoundaryFrame:
    ts = np.einsum("...ia,...a->...i", frame.J, np.asarray(ref_tangent, dtype=float))
    norm = np.linalg.norm(ts, axis=-1)
    if np.any(norm == 0.0):
        raise GeometryError("zero mapped boundary tangent")
    t = ts / norm[..., None]
    return BoundaryFrame(t=t, q=_cross(t, frame.n), n=frame.n)


@dataclass(frozen=True)
class SurfaceJet:
    """A frame plus the parametric derivatives needed for second-order residuals.

    ``dA[..., :, :, c]`` is the derivative of ``A`` along reference direction c;
    the same trailing convention is used for ``dP``, ``dH`` and ``ddn``.
    """

    frame: SurfaceFrame
    dA: np.ndarray   # (..., 3, 2, 2)
    dP: np.ndarray   # (..., 3, 3, 2)
    dH: np.ndarray   # (..., 3, 3, 2)
    ddn: np.ndarray  # (..., 3, 2, 2)


def surface_jet(x, xr, xrr, xrrr, where: str = "") -> SurfaceJet:
    """Extend :func:`frame_from_jets` with first parametric derivatives of A, P, H."""
    f = frame_from_jets(x, xr, xrr, where)
    n, A, Ginv, dn = f.n, f.A, f.Ginv, f.dn

    dG = np.einsum("...iac,...ib->...abc", xrr, xr)
    dG = dG + dG.swapaxes(-2, -3)
    dGinv = -np.einsum("...ab,...bdc,...de->...aec", Ginv, dG, Ginv)
    dA = np.einsum("...iac,...ab->...ibc", xrr, Ginv) + np.einsum("...ia,...abc->...ibc", xr, dGinv)

    a = _cross(xr[..., 0], xr[..., 1])
    s = np.linalg.norm(a, axis=-1)
    x_r, x_s = xr[..., 0], xr[..., 1]
    da = np.stack([_cross(xrr[..., :, 0, c], x_s) + _cross(x_r, xrr[..., :, 1, c]) for c in range(2)], axis=-1)
    dda = np.empty(da.shape + (2,))
    for c in range(2):
        for d in range(2):
            dda[..., c, d] = (
                _cross(xrrr[..., :, 0, c, d], x_s)
                + _cross(xrr[..., :, 0, c], xrr[..., :, 1, d])
                + _cross(xrr[..., :, 0, d], xrr[..., :, 1, c])
                + _cross(x_r, xrrr[..., :, 1, c, d])
            )
    ds = np.einsum("...i,...ic->...c", n, da)
    P = f.P
    dP = -(dn[..., :, None, :] * n[..., None, :, None] + n[..., :, None, None] * dn[..., None, :, :])
    Pda = np.einsum("...ij,...jc->...ic", P, da)
    ddn = (
        np.einsum("...ijd,...jc->...icd", dP, da)
        + np.einsum("...ij,...jcd->...icd", P, dda)
    ) / s[..., None, None, None] - Pda[..., :, :, None] * ds[..., None, None, :] / s[..., None, None, None] ** 2
    dH = np.einsum("...icd,...jc->...ijd", ddn, A) + np.einsum("...ic,...jcd->...ijd", dn, dA)
    return SurfaceJet(frame=f, dA=dA, dP=dP, dH=dH, ddn=ddn)
