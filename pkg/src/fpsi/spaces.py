"""Nodal Lagrange function spaces on mesh subdomains.

A space lives on all cells of one subdomain tag (or the whole mesh when the
tag is None, used for the displacement field).  Scalar degrees of freedom sit
on geometric entities: subdomain vertices first (ascending global id), then
for P2 the subdomain edges (ascending sorted vertex pair).  Vector spaces
interleave components node-major: dof(node, comp) = node * dim + comp.

Keying DOFs by entity makes transfer between overlapping spaces exact: the
interface trace of the solid velocity lands on the fluid-side extension
space by matching vertex/edge ids, never by coordinate lookups.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Optional, Tuple

import numpy as np

from .elements import LOCAL_EDGES, eval_basis, reference_element, simplex_quadrature
from .errors import AssemblyError
from .mesh import Mesh


@dataclass
class FunctionSpace:
    mesh: Mesh
    degree: int
    rank: int                 # 0 scalar, 1 vector
    tag: Optional[int]        # FLUID, SOLID or None for the whole mesh
    cells: np.ndarray         # global cell ids of the subdomain
    cell_nodes: np.ndarray    # (ncells, nloc) scalar node ids
    node_coords: np.ndarray   # (nnodes, dim)
    vertex_node: Dict[int, int] = field(repr=False, default_factory=dict)
    edge_node: Dict[tuple, int] = field(repr=False, default_factory=dict)

    @property
    def dim(self) -> int:
        return self.mesh.dim

    @property
    def ncomp(self) -> int:
        return self.dim if self.rank == 1 else 1

    @property
    def num_scalar_nodes(self) -> int:
        return self.node_coords.shape[0]

    @property
    def num_dofs(self) -> int:
        return self.num_scalar_nodes * self.ncomp

    def dofs_of_nodes(self, nodes, comp=None) -> np.ndarray:
        """Interleaved dof ids for the given scalar nodes."""
        nodes = np.asarray(nodes, dtype=np.int64)
        if self.rank == 0:
            return nodes
        if comp is not None:
            return nodes * self.ncomp + comp
        return (nodes[:, None] * self.ncomp + np.arange(self.ncomp)).ravel()

    def cell_dofs(self, cells_index=None) -> np.ndarray:
        """(ncells, nloc*ncomp) interleaved dof map, all components."""
        nodes = self.cell_nodes if cells_index is None else self.cell_nodes[cells_index]
        if self.rank == 0:
            return nodes
        nc, nloc = nodes.shape
        d = self.ncomp
        return (nodes[:, :, None] * d + np.arange(d)).reshape(nc, nloc * d)

    def nodes_on_markers(self, markers: Iterable[int]) -> np.ndarray:
        """Scalar nodes lying on facets carrying any of the given markers."""
        markers = set(int(m) for m in markers)
        out = set()
        for fverts, m in zip(self.mesh.facets, self.mesh.facet_markers):
            if int(m) not in markers:
                continue
            fv = [int(v) for v in fverts]
            for v in fv:
                node = self.vertex_node.get(v)
                if node is not None:
                    out.add(node)
            if self.degree == 2:
                if self.dim == 2:
                    pairs = [tuple(sorted(fv))]
                else:
                    pairs = [tuple(sorted((fv[a], fv[b]))) for a, b in ((0, 1), (0, 2), (1, 2))]
                for key in pairs:
                    node = self.edge_node.get(key)
                    if node is not None:
                        out.add(node)
        return np.array(sorted(out), dtype=np.int64)


def build_space(mesh: Mesh, degree: int, rank: int = 0, tag: Optional[int] = None) -> FunctionSpace:
    """Build a P1/P2 scalar or vector space on one subdomain (or the whole mesh)."""
    if rank not in (0, 1):
        raise ValueError("rank must be 0 (scalar) or 1 (vector)")
    if tag is None:
        cells = np.arange(mesh.num_cells, dtype=np.int64)
    else:
        cells = mesh.cells_with_tag(tag)
    if len(cells) == 0:
        raise AssemblyError("empty subdomain: no cells with tag %r" % tag)

    cellverts = mesh.cells[cells]
    verts = np.unique(cellverts)
    vertex_node = {int(v): i for i, v in enumerate(verts)}
    coords = [mesh.vertices[verts]]
    edge_node: Dict[tuple, int] = {}

    nloc_v = mesh.dim + 1
    if degree == 1:
        cell_nodes = np.empty((len(cells), nloc_v), dtype=np.int64)
        for i in range(nloc_v):
            cell_nodes[:, i] = [vertex_node[int(v)] for v in cellverts[:, i]]
    elif degree == 2:
        local_edges = LOCAL_EDGES[mesh.dim]
        keys = set()
        for cv in cellverts:
            for a, b in local_edges:
                keys.add(tuple(sorted((int(cv[a]), int(cv[b])))))
        sorted_keys = sorted(keys)
        base = len(verts)
        edge_node = {k: base + i for i, k in enumerate(sorted_keys)}
        mids = np.array([(mesh.vertices[a] + mesh.vertices[b]) / 2.0 for a, b in sorted_keys])
        if len(mids):
            coords.append(mids)
        nloc = nloc_v + len(local_edges)
        cell_nodes = np.empty((len(cells), nloc), dtype=np.int64)
        for i in range(nloc_v):
            cell_nodes[:, i] = [vertex_node[int(v)] for v in cellverts[:, i]]
        for e, (a, b) in enumerate(local_edges):
            cell_nodes[:, nloc_v + e] = [
                edge_node[tuple(sorted((int(cv[a]), int(cv[b]))))] for cv in cellverts
            ]
    else:
        raise ValueError("only degree 1 and 2 spaces are provided")

    return FunctionSpace(
        mesh=mesh,
        degree=degree,
        rank=rank,
        tag=tag,
        cells=cells,
        cell_nodes=cell_nodes,
        node_coords=np.vstack(coords),
        vertex_node=vertex_node,
        edge_node=edge_node,
    )


def transfer_nodes(src: FunctionSpace, dst: FunctionSpace) -> Tuple[np.ndarray, np.ndarray]:
    """Scalar nodes shared by two spaces (same degree), matched by entity."""
    if src.degree != dst.degree:
        raise AssemblyError("cannot transfer between spaces of different degree")
    pairs = []
    for v, n_src in src.vertex_node.items():
        n_dst = dst.vertex_node.get(v)
        if n_dst is not None:
            pairs.append((n_src, n_dst))
    for key, n_src in src.edge_node.items():
        n_dst = dst.edge_node.get(key)
        if n_dst is not None:
            pairs.append((n_src, n_dst))
    pairs.sort(key=lambda p: p[1])
    arr = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


def _batch_eval(fn: Callable, X: np.ndarray, ncomp: int) -> np.ndarray:
    """Evaluate a field at points (N, d); accepts batched or per-point callables."""
    want = (X.shape[0],) if ncomp == 1 else (X.shape[0], ncomp)
    try:
        out = np.asarray(fn(X), dtype=float)
        if out.shape == want:
            return out
    except Exception:
        pass
    out = np.array([fn(x) for x in X], dtype=float)
    return out.reshape(want)


def interpolate(space: FunctionSpace, fn: Callable) -> np.ndarray:
    """Nodal interpolation; fn maps points to scalars/vectors."""
    vals = _batch_eval(fn, space.node_coords, space.ncomp)
    return vals.ravel().astype(float)


def cell_geometry(mesh: Mesh, cells: np.ndarray):
    """Affine maps of the listed cells: origin, Jacobian B, |det B|, inv(B)."""
    cv = mesh.cells[cells]
    x0 = mesh.vertices[cv[:, 0]]
    B = np.transpose(mesh.vertices[cv[:, 1:]] - x0[:, None, :], (0, 2, 1))  # columns = edges
    det = np.linalg.det(B)
    Binv = np.linalg.inv(B)
    return x0, B, np.abs(det), Binv


def error_L2(space: FunctionSpace, vec: np.ndarray, exact: Callable, quad_degree: int = 8) -> float:
    """L2 norm of (u_h - exact) over the space's subdomain."""
    rule = simplex_quadrature(space.dim, quad_degree)
    vals, _ = eval_basis(space.dim, space.degree, rule.points)    # (nq, nloc)
    x0, B, adet, _ = cell_geometry(space.mesh, space.cells)
    # physical quadrature points per cell: (nc, nq, d)
    X = x0[:, None, :] + np.einsum("cde,qe->cqd", B, rule.points)
    nc, nq, d = X.shape
    ncomp = space.ncomp
    ex = _batch_eval(exact, X.reshape(nc * nq, d), ncomp).reshape(
        (nc, nq) if ncomp == 1 else (nc, nq, ncomp)
    )
    local = vec.reshape(-1, ncomp)[space.cell_nodes]              # (nc, nloc, ncomp)
    uh = np.einsum("qi,cim->cqm", vals, local)                    # (nc, nq, ncomp)
    if ncomp == 1:
        diff2 = (uh[:, :, 0] - ex) ** 2
    else:
        diff2 = ((uh - ex) ** 2).sum(axis=2)
    return float(np.sqrt(np.einsum("cq,q,c->", diff2, rule.weights, adet)))


def norm_L2(space: FunctionSpace, vec: np.ndarray, quad_degree: int = 8) -> float:
    zero = (lambda X: np.zeros(X.shape[0])) if space.rank == 0 else (
        lambda X: np.zeros((X.shape[0], space.ncomp))
    )
    return error_L2(space, vec, zero, quad_degree)


def locate_cell(space: FunctionSpace, x: np.ndarray, tol: float = 1e-10) -> int:
    """Index (into space.cells) of a cell containing x; nearest match wins."""
    x = np.asarray(x, dtype=float)
    x0, _, _, Binv = cell_geometry(space.mesh, space.cells)
    xi = np.einsum("cde,ce->cd", Binv, x[None, :] - x0)
    lam_min = np.minimum(xi.min(axis=1), 1.0 - xi.sum(axis=1))
    best = int(np.argmax(lam_min))
    if lam_min[best] < -tol:
        raise ValueError("point %s lies outside the subdomain" % (x,))
    return best


def eval_at_point(space: FunctionSpace, vec: np.ndarray, x: np.ndarray,
                  cell_index: Optional[int] = None):
    """Evaluate the FE field at one physical point."""
    if cell_index is None:
        cell_index = locate_cell(space, x)
    x0, _, _, Binv = cell_geometry(space.mesh, space.cells[cell_index: cell_index + 1])
    xi = Binv[0] @ (np.asarray(x, dtype=float) - x0[0])
    xi = np.clip(xi, 0.0, None)
    s = xi.sum()
    if s > 1.0:
        xi = xi / s
    vals, _ = eval_basis(space.dim, space.degree, xi[None, :])
    local = vec.reshape(-1, space.ncomp)[space.cell_nodes[cell_index]]
    out = vals[0] @ local
    return float(out[0]) if space.rank == 0 else out
