"""Structured multi-patch quadrilateral meshes, skeleton and boundary tagging.

A mesh is built from one or more :class:`Patch` objects, each a chart sampled
on a regular grid of order-p elements.  Nodes of different patches (and of the
two sides of a periodic seam) are merged by coordinate proximity.  The
skeleton stores every element edge once together with its ``T+`` and ``T-``
parents; the edge inherits the traversal direction of ``T+``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, Union

import numpy as np
from scipy.spatial import cKDTree

from .basis import ElementGeometry, ReferenceElement, lagrange_1d
from .errors import MeshError, SpecificationError
from .geometry import Chart

SIDE_NAMES = ("bottom", "right", "top", "left")


@dataclass(frozen=True)
class Patch:
    """A chart meshed with ``n`` x ``m`` elements.

    ``side_tags`` names the boundary segment of each chart side
    (``bottom``: s = s0, ``right``: r = r1, ``top``: s = s1, ``left``: r = r0).
    Sides that end up interior (patch interfaces, periodic seams) need no tag.
    """

    chart: Chart
    n: int
    m: int
    side_tags: Mapping[str, str] = field(default_factory=dict)


@dataclass
class Skeleton:
    """Element edges with parent/orientation bookkeeping.

    Attributes
    ----------
    nodes : (n_edges, p+1) int
        Mesh node ids along the edge, ordered along the ``T+`` traversal.
    plus, plus_local : (n_edges,) int
        Parent element ``T+`` and its local edge id.
    minus, minus_local : (n_edges,) int
        Parent ``T-`` (``-1`` on boundary edges).
    elem_edges, elem_sign : (n_elems, 4) int
        Skeleton edge of each local element edge and its jump sign (+1 for
        ``T+``, -1 for ``T-``).
    """

    nodes: np.ndarray
    plus: np.ndarray
    plus_local: np.ndarray
    minus: np.ndarray
    minus_local: np.ndarray
    elem_edges: np.ndarray
    elem_sign: np.ndarray

    @property
    def n_edges(self) -> int:
        return len(self.plus)

    @property
    def boundary(self) -> np.ndarray:
        return np.flatnonzero(self.minus < 0)

    @property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(self.minus >= 0)

    def jump(self, values: np.ndarray) -> np.ndarray:
        """Discrete jump of per-element-edge data ``values[elem, local_edge, ...]``.

        Interior edges return ``f|T+ - f|T-`` and boundary edges ``f|T``.
        """
        values = np.asarray(values)
        out = values[self.plus, self.plus_local].copy()
        inner = self.interior
        out[inner] -= values[self.minus[inner], self.minus_local[inner]]
        return out

    def swapped(self, edges) -> "Skeleton":
        """Copy with the ``T+``/``T-`` roles exchanged on the given interior edges."""
        edges = np.asarray(edges, dtype=int)
        if np.any(self.minus[edges] < 0):
            raise MeshError("cannot swap parents of a boundary edge")
        sk = Skeleton(*(a.copy() for a in (self.nodes, self.plus, self.plus_local, self.minus,
                                            self.minus_local, self.elem_edges, self.elem_sign)))
        sk.plus[edges], sk.minus[edges] = self.minus[edges], self.plus[edges]
        sk.plus_local[edges], sk.minus_local[edges] = self.minus_local[edges], self.plus_local[edges]
        sk.nodes[edges] = self.nodes[edges, ::-1]
        for e in edges:
            sk.elem_sign[sk.plus[e], sk.plus_local[e]] = 1
            sk.elem_sign[sk.minus[e], sk.minus_local[e]] = -1
        return sk


@dataclass
class ShellMesh:
    """Order-p quadrilateral surface mesh.

    ``boxes[e]`` is the element's parameter sub-box in its patch chart,
    ``[[r0, r1], [s0, s1]]``, so an exact-chart geometry can be evaluated.
    """

    p: int
    coords: np.ndarray
    elements: np.ndarray
    patches: list
    elem_patch: np.ndarray
    boxes: np.ndarray
    skeleton: Skeleton
    edge_tags: dict  # boundary edge id -> segment name

    @property
    def n_nodes(self) -> int:
        return len(self.coords)

    @property
    def n_elems(self) -> int:
        return len(self.elements)

    @property
    def ref(self) -> ReferenceElement:
        return ReferenceElement(self.p)

    def geometry(self, elems=None, mode: str = "iso") -> ElementGeometry:
        """Batched geometry map of ``elems`` (all elements by default)."""
        elems = np.arange(self.n_elems) if elems is None else np.atleast_1d(elems)
        coords = self.coords[self.elements[elems]]
        if mode in ("iso", "isoparametric"):
            return ElementGeometry(coords, self.p, name=f"elements {elems[:4].tolist()}")
        if mode in ("exact", "exact-chart"):
            charts = [self.patches[self.elem_patch[e]].chart for e in elems]
            return ElementGeometry(coords, self.p, charts=charts, boxes=self.boxes[elems],
                                   name=f"elements {elems[:4].tolist()}")
        raise ValueError(f"unknown geometry mode {mode!r}")

    def element_size(self) -> np.ndarray:
        """Diameter estimate per element (longest corner-to-corner diagonal)."""
        p = self.p
        c = self.coords[self.elements[:, [0, p, (p + 1) ** 2 - 1, p * (p + 1)]]]
        return np.maximum(np.linalg.norm(c[:, 0] - c[:, 2], axis=-1), np.linalg.norm(c[:, 1] - c[:, 3], axis=-1))


def _lattice(patch: Patch, p: int):
    (r0, r1), (s0, s1) = patch.chart.box
    nr, ns = patch.n * p + 1, patch.m * p + 1
    rr = np.linspace(r0, r1, nr)
    ss = np.linspace(s0, s1, ns)
    R, S = np.meshgrid(rr, ss)  # [j, i]
    x = patch.chart(np.stack([R, S], axis=-1))
    return rr, ss, x


def build_structured_mesh(patches: Sequence[Patch], p: int, merge_tol: float = 1e-9) -> ShellMesh:
    """Mesh a list of patches with order-p elements and merge coincident nodes.

    Nodes closer than ``merge_tol`` times the local lattice spacing are
    identified.  For periodic chart directions every node on the first side
    must merge with its partner on the opposite side.
    """
    if p < 1:
        raise MeshError("element order must be at least 1")
    all_x, lat_index, spacing = [], [], []
    offset = 0
    boxes, elem_patch, elems = [], [], []
    for k, patch in enumerate(patches):
        if patch.n < 1 or patch.m < 1:
            raise MeshError(f"patch {k}: grid counts must be >= 1")
        rr, ss, x = _lattice(patch, p)
        ns, nr = x.shape[:2]
        ids = offset + np.arange(ns * nr).reshape(ns, nr)
        # local spacing per lattice node: smallest distance to a lattice neighbour
        d = np.full((ns, nr), np.inf)
        dr = np.linalg.norm(np.diff(x, axis=1), axis=-1)
        ds = np.linalg.norm(np.diff(x, axis=0), axis=-1)
        d[:, :-1] = np.minimum(d[:, :-1], dr)
        d[:, 1:] = np.minimum(d[:, 1:], dr)
        d[:-1, :] = np.minimum(d[:-1, :], ds)
        d[1:, :] = np.minimum(d[1:, :], ds)
        all_x.append(x.reshape(-1, 3))
        spacing.append(d.ravel() * p)
        lat_index.append(ids)
        for j in range(patch.m):
            for i in range(patch.n):
                blk = ids[j * p:(j + 1) * p + 1, i * p:(i + 1) * p + 1]
                elems.append(blk.ravel())
                boxes.append([[rr[i * p], rr[(i + 1) * p]], [ss[j * p], ss[(j + 1) * p]]])
                elem_patch.append(k)
        offset += ns * nr
    X = np.concatenate(all_x)
    h = np.concatenate(spacing)
    if not np.all(np.isfinite(X)):
        raise MeshError("chart produced non-finite coordinates")
    # union-find over close pairs
    parent = np.arange(len(X))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    tree = cKDTree(X)
    pairs = tree.query_pairs(merge_tol * float(h.max()), output_type="ndarray")
    if len(pairs):
        dist = np.linalg.norm(X[pairs[:, 0]] - X[pairs[:, 1]], axis=-1)
        keep = dist <= merge_tol * np.minimum(h[pairs[:, 0]], h[pairs[:, 1]])
        for a, b in pairs[keep]:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(a) for a in range(len(X))])
    uniq, new_id = np.unique(roots, return_inverse=True)
    coords = X[uniq]
    elements = new_id[np.array(elems)]

    for e, conn in enumerate(elements):
        if len(np.unique(conn)) != len(conn):
            raise MeshError(f"element {e} has coincident nodes (degenerate chart or grid too coarse)")

    # periodic seams must have merged completely
    for k, patch in enumerate(patches):
        ids = lat_index[k]
        for axis in range(2):
            if not patch.chart.periodic[axis]:
                continue
            a = ids[:, 0] if axis == 0 else ids[0, :]
            b = ids[:, -1] if axis == 0 else ids[-1, :]
            bad = [(int(i), int(j)) for i, j in zip(a, b) if new_id[i] != new_id[j]]
            if bad:
                detail = ", ".join(f"{X[i].round(12).tolist()} vs {X[j].round(12).tolist()}" for i, j in bad[:5])
                raise MeshError(f"patch {k}: {len(bad)} seam node pairs do not match: {detail}")

    skeleton = build_skeleton(elements, p)
    edge_tags = _tag_boundary(skeleton, elements, np.array(elem_patch), patches, p)
    return ShellMesh(p=p, coords=coords, elements=elements, patches=list(patches),
                     elem_patch=np.array(elem_patch), boxes=np.array(boxes, dtype=float),
                     skeleton=skeleton, edge_tags=edge_tags)


def build_skeleton(elements: np.ndarray, p: int) -> Skeleton:
    """Collect unique element edges and assign ``T+``/``T-`` parents.

    The first element to visit an edge becomes ``T+``; the second one must
    traverse the same nodes in the opposite direction.
    """
    ref = ReferenceElement(p)
    ne = len(elements)
    lookup: dict = {}
    nodes, plus, plus_local, minus, minus_local = [], [], [], [], []
    elem_edges = np.empty((ne, 4), dtype=int)
    elem_sign = np.empty((ne, 4), dtype=int)
    for e in range(ne):
        for le in range(4):
            en = elements[e, ref.edge_nodes[le]]
            key = tuple(sorted(en.tolist()))
            k = lookup.get(key)
            if k is None:
                k = len(plus)
                lookup[key] = k
                nodes.append(en)
                plus.append(e)
                plus_local.append(le)
                minus.append(-1)
                minus_local.append(-1)
                elem_sign[e, le] = 1
            else:
                if minus[k] >= 0:
                    raise MeshError(f"non-manifold edge shared by more than two elements (nodes {key})")
                if not np.array_equal(en[::-1], nodes[k]):
                    raise MeshError(
                        f"inconsistent orientation between elements {plus[k]} and {e} on edge {key}"
                    )
                minus[k] = e
                minus_local[k] = le
                elem_sign[e, le] = -1
            elem_edges[e, le] = k
    return Skeleton(np.array(nodes), np.array(plus), np.array(plus_local), np.array(minus),
                    np.array(minus_local), elem_edges, elem_sign)


def _tag_boundary(sk: Skeleton, elements, elem_patch, patches, p) -> dict:
    # local edge id coincides with the patch side it lies on for boundary elements
    tags = {}
    for k in sk.boundary:
        e, le = sk.plus[k], sk.plus_local[k]
        patch = patches[elem_patch[e]]
        tags[int(k)] = patch.side_tags.get(SIDE_NAMES[le], "untagged")
    return tags


# ---------------------------------------------------------------------------
# boundary conditions

Value = Union[float, Sequence[float], Callable]


@dataclass(frozen=True)
class SegmentBC:
    """Boundary condition of one named segment.

    ``fixed`` lists the constrained Cartesian displacement components,
    ``rotation_fixed`` clamps the tangential rotation ``omega_t``.
    ``traction`` (a 3-vector or callable of x) and ``moment`` (a scalar or
    callable) are the prescribed effective edge force and bending moment on
    the free parts.
    """

    kind: str
    fixed: tuple = ()
    rotation_fixed: bool = False
    traction: Value = None
    moment: Value = None
    value: tuple = (0.0, 0.0, 0.0)

    @classmethod
    def clamped(cls):
        return cls("clamped", (0, 1, 2), True)

    @classmethod
    def navier(cls):
        return cls("navier", (0, 1, 2), False)

    @classmethod
    def rigid_diaphragm(cls, components=(0, 2)):
        return cls("rigid-diaphragm", tuple(components), False)

    @classmethod
    def roller(cls, components):
        return cls("roller", tuple(components), False)

    @classmethod
    def free(cls):
        return cls("free")

    @classmethod
    def neumann(cls, traction=None, moment=None):
        return cls("neumann", (), False, traction, moment)


@dataclass(frozen=True)
class CornerBC:
    """Corner condition at a mesh node: ``pinned`` or a ``force`` F_C along n."""

    kind: str
    force: float = 0.0


@dataclass(frozen=True)
class BcSpec:
    """Boundary conditions by segment name, plus optional corner and point conditions.

    ``point_fixes`` holds ``(x, components)`` pairs: the displacement
    components of the mesh node nearest to ``x`` are set to zero.  It is
    meant for removing rigid-body modes that the segment conditions leave
    free.
    """

    segments: Mapping[str, SegmentBC]
    corners: Mapping[int, CornerBC] = field(default_factory=dict)
    point_fixes: tuple = ()


@dataclass
class Corner:
    node: int
    tags: tuple
    kink_deg: float
    elem: int  # element owning the incoming boundary edge
    local_node: int


@dataclass
class BoundaryClassification:
    """Partition of the boundary into Dirichlet and Neumann parts.

    ``u_fixed[node, k]`` marks constrained displacement components with
    prescribed values ``u_value``; ``omega_fixed`` lists skeleton edges with
    ``omega_t = 0``.  The Neumann lists hold ``(edge, load)`` pairs.
    """

    u_fixed: np.ndarray
    u_value: np.ndarray
    dirichlet_u_edges: list
    neumann_u_edges: list
    dirichlet_omega_edges: list
    neumann_omega_edges: list
    corners: list
    corner_forces: list  # (node, elem, local_node, F_C)


def boundary_corners(mesh: ShellMesh, kink_deg: float = 1.0) -> list:
    """Boundary vertices where the segment tag changes or the tangent kinks."""
    sk, p = mesh.skeleton, mesh.p
    L = lagrange_1d(p, np.array([-1.0, 1.0]), 1)[1]  # derivative at edge ends
    incoming, outgoing = {}, {}
    for k in sk.boundary:
        en = sk.nodes[k]
        x = mesh.coords[en]
        t0, t1 = L[0] @ x, L[1] @ x
        outgoing[int(en[0])] = (int(k), t0 / np.linalg.norm(t0))
        incoming[int(en[-1])] = (int(k), t1 / np.linalg.norm(t1))
    corners = []
    ref = mesh.ref
    for node in sorted(incoming):
        if node not in outgoing:
            continue
        ki, ti = incoming[node]
        ko, to = outgoing[node]
        angle = np.degrees(np.arccos(np.clip(ti @ to, -1.0, 1.0)))
        tags = (mesh.edge_tags[ki], mesh.edge_tags[ko])
        if tags[0] != tags[1] or angle > kink_deg:
            e, le = sk.plus[ki], sk.plus_local[ki]
            corners.append(Corner(node, tags, float(angle), int(e), int(ref.edge_nodes[le][-1])))
    return corners


def classify_boundary(mesh: ShellMesh, spec: BcSpec) -> BoundaryClassification:
    """Resolve segment kinds into Dirichlet/Neumann sets for u and omega_t."""
    sk = mesh.skeleton
    u_fixed = np.zeros((mesh.n_nodes, 3), dtype=bool)
    u_value = np.zeros((mesh.n_nodes, 3))
    d_u, n_u, d_w, n_w = [], [], [], []
    for k in sk.boundary:
        tag = mesh.edge_tags[int(k)]
        if tag not in spec.segments:
            raise SpecificationError(f"boundary edge {k} with segment {tag!r} is not covered by the BC spec")
        bc = spec.segments[tag]
        en = sk.nodes[k]
        if bc.fixed:
            d_u.append(int(k))
            for c in bc.fixed:
                val = bc.value[c]
                prev = u_fixed[en, c] & (u_value[en, c] != val)
                if np.any(prev):
                    raise SpecificationError(f"conflicting prescribed values for u_{c} at nodes {en[prev].tolist()}")
                u_fixed[en, c] = True
                u_value[en, c] = val
        if len(bc.fixed) < 3:
            n_u.append((int(k), bc.traction))
        if bc.rotation_fixed:
            d_w.append(int(k))
        else:
            n_w.append((int(k), bc.moment))
    for x, comps in spec.point_fixes:
        node = int(np.argmin(np.linalg.norm(mesh.coords - np.asarray(x, dtype=float), axis=-1)))
        for c in comps:
            if u_fixed[node, c] and u_value[node, c] != 0.0:
                raise SpecificationError(f"point constraint conflicts with prescribed u_{c} at node {node}")
            u_fixed[node, c] = True
            u_value[node, c] = 0.0
    corners = boundary_corners(mesh)
    forces = []
    by_node = {c.node: c for c in corners}
    for node, cbc in spec.corners.items():
        if cbc.kind == "pinned":
            u_fixed[node] = True
            u_value[node] = 0.0
        elif cbc.kind == "force":
            c = by_node.get(node)
            if c is None:
                raise SpecificationError(f"node {node} is not a boundary corner")
            if np.all(u_fixed[node]):
                raise SpecificationError(f"corner force at node {node} lies on a Dirichlet boundary")
            forces.append((node, c.elem, c.local_node, float(cbc.force)))
        else:
            raise SpecificationError(f"unknown corner kind {cbc.kind!r}")
    return BoundaryClassification(u_fixed, u_value, d_u, n_u, d_w, n_w, corners, forces)


def write_vtk_mesh(mesh: ShellMesh, path, point_data=None, cell_data=None) -> None:
    """Write the mesh as a legacy ASCII VTK unstructured grid.

    Order-p elements are split into p x p bilinear display cells.  Point data
    is given per mesh node, cell data per element (repeated on sub-cells).
    """
    p = mesh.p
    cells = []
    owner = []
    for e, conn in enumerate(mesh.elements):
        grid = conn.reshape(p + 1, p + 1)
        for j in range(p):
            for i in range(p):
                cells.append([grid[j, i], grid[j, i + 1], grid[j + 1, i + 1], grid[j + 1, i]])
                owner.append(e)
    lines = ["# vtk DataFile Version 3.0", "klshell mesh", "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.n_nodes} double"]
    lines += [" ".join(f"{v:.17g}" for v in x) for x in mesh.coords]
    lines.append(f"CELLS {len(cells)} {5 * len(cells)}")
    lines += ["4 " + " ".join(str(int(i)) for i in c) for c in cells]
    lines.append(f"CELL_TYPES {len(cells)}")
    lines += ["9"] * len(cells)

    def block(data, n, index=None):
        out = []
        for name, arr in (data or {}).items():
            arr = np.asarray(arr, dtype=float)
            if index is not None:
                arr = arr[index]
            if arr.ndim == 1:
                out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                out += [f"{v:.17g}" for v in arr]
            elif arr.shape[1] == 3:
                out.append(f"VECTORS {name} double")
                out += [" ".join(f"{v:.17g}" for v in row) for row in arr]
            else:
                out += [f"SCALARS {name} double {arr.shape[1]}", "LOOKUP_TABLE default"]
                out += [" ".join(f"{v:.17g}" for v in row) for row in arr]
        return out

    if point_data:
        lines.append(f"POINT_DATA {mesh.n_nodes}")
        lines += block(point_data, mesh.n_nodes)
    if cell_data:
        lines.append(f"CELL_DATA {len(cells)}")
        lines += block(cell_data, len(cells), np.array(owner))
    try:
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"could not write VTK file {path}: {exc}") from exc
