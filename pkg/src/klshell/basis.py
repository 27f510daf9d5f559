"""Lagrange bases, Gauss-Legendre rules and element geometry maps.

Nodes are equispaced on ``[-1, 1]``.  Quad basis functions are tensor
products ordered lexicographically, ``index = b * (p + 1) + a`` with ``a``
running along the first reference coordinate.

Local quad edges are traversed counter-clockwise::

    edge 0: (xi, -1)    edge 1: (1, xi)    edge 2: (-xi, 1)    edge 3: (-1, -xi)

so that with a right-handed chart the mapped conormal ``t x n`` points out of
the element.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as npleg

from .errors import GeometryError, ProbeError

EDGE_TANGENTS = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])


def edge_points(edge: int, xi) -> np.ndarray:
    """Reference quad coordinates of points ``xi`` on local edge ``edge``."""
    xi = np.asarray(xi, dtype=float)
    one = np.ones_like(xi)
    return np.stack(
        [(xi, -one), (one, xi), (-xi, one), (-one, -xi)][edge], axis=-1
    )


@lru_cache(maxsize=None)
def _lagrange_coeffs(p: int) -> np.ndarray:
    """Legendre coefficients (column j = basis j) of the 1D equispaced Lagrange basis."""
    nodes = np.linspace(-1.0, 1.0, p + 1)
    return np.linalg.inv(npleg.legvander(nodes, p))


def lagrange_1d(p: int, x, order: int = 0) -> list[np.ndarray]:
    """Values and derivatives of the 1D Lagrange basis.

    Returns a list ``[L, L', ..., L^(order)]`` with shapes ``x.shape + (p+1,)``.
    """
    if not 1 <= p <= 10:
        raise ValueError(f"order p must lie in [1, 10], got {p}")
    x = np.asarray(x, dtype=float)
    C = _lagrange_coeffs(p)
    V = npleg.legvander(x, p)
    out = [V @ C]
    for k in range(1, order + 1):
        Ck = npleg.legder(C, k, axis=0)
        out.append(npleg.legvander(x, p - k) @ Ck if k <= p else np.zeros(x.shape + (p + 1,)))
    return out


def lagrange_jets(p: int, r, order: int = 2) -> list[np.ndarray]:
    """Tensor-product basis and reference derivatives up to ``order`` (max 3).

    Shapes are ``(..., nn)``, ``(..., nn, 2)``, ``(..., nn, 2, 2)`` and
    ``(..., nn, 2, 2, 2)`` with ``nn = (p+1)**2``.
    """
    r = np.asarray(r, dtype=float)
    Lr = lagrange_1d(p, r[..., 0], order)
    Ls = lagrange_1d(p, r[..., 1], order)
    shape = r.shape[:-1]
    nn = (p + 1) ** 2

    def prod(i, j):
        return (Ls[j][..., :, None] * Lr[i][..., None, :]).reshape(shape + (nn,))

    out = [prod(0, 0)]
    for k in range(1, order + 1):
        arr = np.empty(shape + (nn,) + (2,) * k)
        for idx in np.ndindex(*(2,) * k):
            nr = idx.count(0)
            arr[(Ellipsis, slice(None)) + idx] = prod(nr, k - nr)
        out.append(arr)
    return out


def lagrange_eval(p: int, r):
    """Values, first and second reference derivatives of the quad basis."""
    return tuple(lagrange_jets(p, r, 2))


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray


@lru_cache(maxsize=None)
def gauss_line(q: int) -> QuadratureRule:
    """Gauss-Legendre rule with ``q`` points on ``[-1, 1]``."""
    if not 1 <= q <= 30:
        raise ValueError(f"quadrature points per direction must lie in [1, 30], got {q}")
    x, w = npleg.leggauss(q)
    return QuadratureRule(x, w)


@lru_cache(maxsize=None)
def gauss_rule(q: int) -> QuadratureRule:
    """Tensor Gauss-Legendre rule on ``[-1, 1]^2`` (points ordered s-major)."""
    g = gauss_line(q)
    R, S = np.meshgrid(g.points, g.points)
    W = np.outer(g.weights, g.weights)
    return QuadratureRule(np.stack([R.ravel(), S.ravel()], axis=-1), W.ravel())


@dataclass(frozen=True)
class ReferenceElement:
    """Order-p quad and its edge node layout."""

    p: int
    nodes: np.ndarray = field(init=False)
    edge_nodes: np.ndarray = field(init=False)

    def __post_init__(self):
        p = self.p
        t = np.linspace(-1.0, 1.0, p + 1)
        R, S = np.meshgrid(t, t)
        object.__setattr__(self, "nodes", np.stack([R.ravel(), S.ravel()], axis=-1))
        idx = np.arange((p + 1) ** 2).reshape(p + 1, p + 1)  # [b, a]
        edges = np.stack([idx[0, :], idx[:, p], idx[p, ::-1], idx[::-1, 0]])
        object.__setattr__(self, "edge_nodes", edges)

    @property
    def n_nodes(self) -> int:
        return (self.p + 1) ** 2


class ElementGeometry:
    """Batched geometry map of a set of elements.

    Parameters
    ----------
    coords : ndarray, shape (ne, nn, 3)
        Nodal coordinates of each element (isoparametric mode).
    p : int
        Element order.
    chart, boxes : optional
        In exact mode, the patch chart of each element and the element's
        parameter sub-box ``(ne, 2, 2)`` as ``[[r0, r1], [s0, s1]]``.
    """

    def __init__(self, coords, p, charts=None, boxes=None, name: str = "element"):
        self.coords = np.asarray(coords, dtype=float)
        self.p = p
        self.charts = charts
        self.boxes = None if boxes is None else np.asarray(boxes, dtype=float)
        self.name = name

    @property
    def exact(self) -> bool:
        return self.charts is not None

    def jets(self, r, order: int = 2) -> list:
        """Map and derivatives at reference points ``r`` of shape ``(nq, 2)``.

        Returned arrays carry a leading element axis: ``(ne, nq, 3, ...)``.
        """
        r = np.asarray(r, dtype=float)
        if self.exact:
            return self._exact_jets(r, order)
        basis = lagrange_jets(self.p, r, order)
        out = []
        letters = "abc"
        for k, B in enumerate(basis):
            idx = letters[:k]
            out.append(np.einsum(f"qI{idx},eIi->eqi{idx}", B, self.coords))
        return out

    def _exact_jets(self, r, order):
        ne = len(self.boxes)
        out = [np.empty((ne, len(r), 3) + (2,) * k) for k in range(order + 1)]
        for e in range(ne):
            box = self.boxes[e]
            c = box.mean(axis=1)
            h = 0.5 * (box[:, 1] - box[:, 0])
            js = self.charts[e].jets(c + h * r, order)
            for k, J in enumerate(js):
                scale = np.ones((2,) * k)
                for axis in range(k):
                    shp = [1] * k
                    shp[axis] = 2
                    scale = scale * h.reshape(shp)
                out[k][e] = J * scale
        return out


def invert_map(geom: ElementGeometry, x_target, r0=None, maxiter: int = 50, tol: float = 1e-12):
    """Closest-point reference coordinates of ``x_target`` on one element.

    Gauss-Newton iteration on ``min |x(r) - x_target|^2``.  ``geom`` must hold
    a single element.  Returns ``(r, distance)``.
    """
    x_target = np.asarray(x_target, dtype=float)
    r = np.zeros(2) if r0 is None else np.array(r0, dtype=float)
    for _ in range(maxiter):
        x, xr = geom.jets(r[None], 1)
        x, xr = x[0, 0], xr[0, 0]
        G = xr.T @ xr
        try:
            dr = np.linalg.solve(G, xr.T @ (x_target - x))
        except np.linalg.LinAlgError as exc:
            raise GeometryError(f"singular Jacobian while probing {geom.name}") from exc
        # keep iterates in a neighbourhood of the element
        step = np.max(np.abs(dr))
        if step > 1.0:
            dr = dr / step
        r = r + dr
        if np.max(np.abs(dr)) < tol:
            x = geom.jets(r[None], 0)[0][0, 0]
            return r, float(np.linalg.norm(x - x_target))
    raise ProbeError(f"point inversion did not converge in {maxiter} iterations on {geom.name}")
