"""Monolithic assembly of the semi-implicit coupled system.

One time step solves a single linear system for (v_f, v_s, q, p_f, p_d) on
the reference mesh.  All geometric weights (J~, F(u~), interface normal and
area scaling) are evaluated at the *extrapolated* displacement u~, so every
form is linear in the step-k unknowns:

    mass      m:   rho-weighted J~ masses of the BDF time derivatives
    elastic   a_s: F(u~) S(E(u_k, u~)) : grad(psi_s), with the implicit
                   displacement u_k = beta v_s^k + history (beta = dt/a0)
    darcy     a_d: J~ K^-1 q . psi_d
    viscous   a_f: 2 mu_f J~ D_u(v_f) : D_u(psi_f)
    advection c_f: rho_f J~ (grad v_f F~^-1 (v~_f - w~)) . psi_f
    pressure  b_a: p J~ F~^-T : grad(psi), tested against psi_s, psi_d, psi_f,
                   with transposed constraint rows on (q_f, q_d)
    interface d:   penalty tau ((v_f - v_s - q).n)((...).n), pressure coupling
                   p_d (psi_f - psi_s - psi_d).n, kinetic correction
                   (rho_f/2)(v~_f . v_f)(psi_s - psi_f).n, and the tangential
                   slip term gamma K^-1/2 P(v_f - v_s).P(psi_f - psi_s),
                   all weighted by the deformed area J~_s

Note the pore pressure is tested against both psi_s and psi_d: the momentum
equation of the skeleton carries sigma_p = sigma_s - p_d I, and the energy
balance needs the constraint block to be the exact transpose of the pressure
blocks.

Dirichlet conditions are applied by identity-row replacement with column
symmetrization (known values move to the right-hand side).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.io import mmwrite

from . import mesh as meshmod
from .elements import eval_basis, reference_element, simplex_quadrature, facet_quadrature
from .errors import AssemblyError
from .kinematics import MaterialParams, deformation_state, green_lagrange, svk_stress
from .mesh import FLUID, GAMMA_FS, GAMMA_OUT, SOLID, InterfaceFacet, Mesh, extract_interface
from .spaces import FunctionSpace, build_space, transfer_nodes, _batch_eval

FIELD_ORDER = ("v_f", "v_s", "q", "p_f", "p_d")


# ---------------------------------------------------------------------------
# Block layout and system container
# ---------------------------------------------------------------------------

@dataclass
class BlockLayout:
    names: Tuple[str, ...]
    sizes: Dict[str, int]
    offsets: Dict[str, int]
    total: int

    @classmethod
    def build(cls, sizes: Dict[str, int]) -> "BlockLayout":
        names = tuple(n for n in FIELD_ORDER if n in sizes)
        offsets = {}
        pos = 0
        for n in names:
            offsets[n] = pos
            pos += sizes[n]
        return cls(names, dict(sizes), offsets, pos)

    def slice_of(self, name: str) -> slice:
        off = self.offsets[name]
        return slice(off, off + self.sizes[name])

    def split(self, x: np.ndarray) -> Dict[str, np.ndarray]:
        return {n: x[self.slice_of(n)].copy() for n in self.names}

    def pack(self, fields: Dict[str, np.ndarray]) -> np.ndarray:
        x = np.zeros(self.total)
        for n in self.names:
            x[self.slice_of(n)] = fields[n]
        return x


@dataclass
class BlockSystem:
    A: sparse.csr_matrix
    b: np.ndarray
    layout: BlockLayout


# ---------------------------------------------------------------------------
# Precomputed subdomain / facet data (geometry of the reference mesh only)
# ---------------------------------------------------------------------------

@dataclass
class SubdomainData:
    cells: np.ndarray      # global cell ids
    w: np.ndarray          # (nc, nq) quadrature weights incl. |det B|
    X: np.ndarray          # (nc, nq, d) reference-domain coordinates
    val2: np.ndarray       # (nq, n2) P2 values
    grad2: np.ndarray      # (nc, nq, n2, d) P2 gradients in domain coords
    val1: np.ndarray       # (nq, n1) P1 values
    nodes2: np.ndarray     # (nc, n2) scalar nodes of the subdomain P2 space
    nodes1: np.ndarray     # (nc, n1) scalar nodes of the subdomain P1 space
    nodes_u: np.ndarray    # (nc, n2) scalar nodes of the global displacement space
    vdofs: np.ndarray      # (nc, n2*d) interleaved vector dofs
    pdofs: np.ndarray      # (nc, n1)


@dataclass
class FacetTraces:
    """Traces of cell bases on a batch of straight facets."""

    cells_global: np.ndarray   # (nf,)
    w: np.ndarray              # (nf, nq) facet weights incl. length/area
    X: np.ndarray              # (nf, nq, d)
    nref: np.ndarray           # (nf, d) unit reference normal
    val2: np.ndarray           # (nf, nq, n2)
    grad2: np.ndarray          # (nf, nq, n2, d)
    val1: np.ndarray           # (nf, nq, n1)
    nodes2: np.ndarray         # (nf, n2) nodes in the subdomain P2 space
    nodes1: np.ndarray         # (nf, n1)
    nodes_u: np.ndarray        # (nf, n2)
    vdofs: np.ndarray          # (nf, n2*d)
    pdofs: np.ndarray          # (nf, n1)


@dataclass
class InterfaceData:
    facets: List[InterfaceFacet]
    fluid: FacetTraces
    solid: FacetTraces
    h: np.ndarray             # (nf,)
    tau: np.ndarray           # (nf,) penalty weights


@dataclass
class PressureLoad:
    """Natural boundary load  b += sign * p(t) * int J~ (F~^-T n_ref).psi ds."""

    marker: int
    value: Callable[[float], float]
    sign: float = 1.0


@dataclass
class DirichletBC:
    field: str
    markers: Tuple[int, ...]
    value: Callable[[np.ndarray, float], np.ndarray]


@dataclass
class StepInputs:
    """Everything the assembler needs about time level k.

    dt None means a steady solve: no mass terms, beta = 1.  hist entries hold
    a1 f^{k-1} + a2 f^{k-2}; the extrapolated fields are full dof vectors.
    """

    t: float
    dt: Optional[float]
    a0: float
    beta: float
    u_tilde: np.ndarray
    u_impl_hist: np.ndarray
    hist: Dict[str, np.ndarray] = field(default_factory=dict)
    vf_tilde: Optional[np.ndarray] = None
    w_tilde: Optional[np.ndarray] = None

    @classmethod
    def steady(cls, problem: "Problem", t: float = 0.0) -> "StepInputs":
        nu = problem.spaces["u"].num_dofs
        return cls(t=t, dt=None, a0=1.0, beta=1.0,
                   u_tilde=np.zeros(nu), u_impl_hist=np.zeros(nu))


@dataclass
class Geometry:
    """Deformation-dependent weights at quadrature points, one time level."""

    fluid: Optional[dict] = None
    solid: Optional[dict] = None
    iface: Optional[dict] = None
    loads: Dict[int, dict] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Problem container
# ---------------------------------------------------------------------------

@dataclass
class Problem:
    mesh: Mesh
    params: MaterialParams
    quad_degree: int
    spaces: Dict[str, FunctionSpace]
    fluid: Optional[SubdomainData]
    solid: Optional[SubdomainData]
    iface: Optional[InterfaceData]
    load_data: Dict[int, FacetTraces]
    loads: List[PressureLoad]
    dirichlet: List[DirichletBC]
    forcing: Dict[str, Callable]
    include_inertia: bool
    frozen_geometry: bool
    pin_pf: Optional[Tuple[int, Callable[[float], float]]]
    layout: BlockLayout
    solver_rtol: float = 1e-9
    open_data: Dict[int, FacetTraces] = field(default_factory=dict)
    map_vs_to_u: Optional[Tuple[np.ndarray, np.ndarray]] = None
    map_vf_to_u: Optional[Tuple[np.ndarray, np.ndarray]] = None
    map_vs_to_vf: Optional[Tuple[np.ndarray, np.ndarray]] = None

    @property
    def dim(self) -> int:
        return self.mesh.dim

    def zero_fields(self) -> Dict[str, np.ndarray]:
        out = {n: np.zeros(self.layout.sizes[n]) for n in self.layout.names}
        out["u"] = np.zeros(self.spaces["u"].num_dofs)
        out["w"] = np.zeros(self.spaces["u"].num_dofs)
        return out


def _subdomain_data(mesh, cells, space2, space1, space_u, degree) -> SubdomainData:
    d = mesh.dim
    rule = simplex_quadrature(d, degree)
    ref2 = reference_element(d, 2)
    v2, g2hat = ref2.tabulate(rule.points)
    v1, _ = eval_basis(d, 1, rule.points)

    cv = mesh.cells[cells]
    x0 = mesh.vertices[cv[:, 0]]
    B = np.transpose(mesh.vertices[cv[:, 1:]] - x0[:, None, :], (0, 2, 1))
    detB = np.abs(np.linalg.det(B))
    Binv = np.linalg.inv(B)

    w = rule.weights[None, :] * detB[:, None]                       # (nc, nq)
    X = x0[:, None, :] + np.einsum("cde,qe->cqd", B, rule.points)   # (nc, nq, d)
    grad2 = np.einsum("qne,ced->cqnd", g2hat, Binv)                 # (nc, nq, n2, d)

    loc2 = _local_index(mesh.num_cells, space2.cells)
    loc1 = _local_index(mesh.num_cells, space1.cells)
    nodes2 = space2.cell_nodes[loc2[cells]]
    nodes1 = space1.cell_nodes[loc1[cells]]
    nodes_u = space_u.cell_nodes[cells]
    vdofs = (nodes2[:, :, None] * d + np.arange(d)).reshape(len(cells), -1)
    return SubdomainData(cells, w, X, v2, grad2, v1, nodes2, nodes1, nodes_u, vdofs, nodes1)


def _local_index(n, ids):
    loc = np.full(n, -1, dtype=np.int64)
    loc[ids] = np.arange(len(ids))
    return loc


def _facet_traces(mesh, fverts_list, cell_ids, space2, space1, space_u, degree,
                  normals=None) -> FacetTraces:
    """Quadrature and basis traces of the given cells on straight facets."""
    d = mesh.dim
    rule = facet_quadrature(d, degree)
    nf = len(cell_ids)
    nq = rule.points.shape[0]
    fverts = np.asarray(fverts_list, dtype=np.int64).reshape(nf, d)
    p = mesh.vertices[fverts]                                       # (nf, d, d)

    if d == 2:
        t = p[:, 1] - p[:, 0]
        length = np.linalg.norm(t, axis=1)
        X = p[:, None, 0, :] + rule.points[None, :, 0, None] * t[:, None, :]
        w = rule.weights[None, :] * length[:, None]
        if normals is None:
            normals = np.column_stack([t[:, 1], -t[:, 0]]) / length[:, None]
    else:
        raise AssemblyError("facet assembly is implemented for 2D meshes only")

    cells = np.asarray(cell_ids, dtype=np.int64)
    cv = mesh.cells[cells]
    x0 = mesh.vertices[cv[:, 0]]
    B = np.transpose(mesh.vertices[cv[:, 1:]] - x0[:, None, :], (0, 2, 1))
    Binv = np.linalg.inv(B)
    xi = np.einsum("fde,fqe->fqd", Binv, X - x0[:, None, :])        # (nf, nq, d)
    xi = np.clip(xi, 0.0, 1.0)

    v2, g2hat = eval_basis(d, 2, xi.reshape(nf * nq, d))
    v1, _ = eval_basis(d, 1, xi.reshape(nf * nq, d))
    n2 = v2.shape[1]
    val2 = v2.reshape(nf, nq, n2)
    grad2 = np.einsum("fqne,fed->fqnd", g2hat.reshape(nf, nq, n2, d), Binv)
    val1 = v1.reshape(nf, nq, d + 1)

    loc2 = _local_index(mesh.num_cells, space2.cells)
    loc1 = _local_index(mesh.num_cells, space1.cells)
    nodes2 = space2.cell_nodes[loc2[cells]]
    nodes1 = space1.cell_nodes[loc1[cells]]
    nodes_u = space_u.cell_nodes[cells]
    vdofs = (nodes2[:, :, None] * d + np.arange(d)).reshape(nf, -1)
    return FacetTraces(cells, w, X, normals, val2, grad2, val1,
                       nodes2, nodes1, nodes_u, vdofs, nodes1)


def build_problem(mesh: Mesh, params: MaterialParams, *,
                  quad_degree: int = 6,
                  penalty_scale: float = 1.0,
                  penalty_const: Optional[float] = None,
                  include_inertia: bool = True,
                  frozen_geometry: bool = False,
                  dirichlet: Optional[Sequence[DirichletBC]] = None,
                  loads: Optional[Sequence[PressureLoad]] = None,
                  open_markers: Sequence[int] = (),
                  forcing: Optional[Dict[str, Callable]] = None,
                  pin_pf="auto",
                  solver_rtol: float = 1e-9) -> Problem:
    """Build spaces, quadrature caches and the block layout for one mesh.

    penalty defaults to tau = penalty_scale * h^-2 per interface facet;
    penalty_const overrides it with a constant.  pin_pf="auto" pins one p_f
    DOF to zero exactly when the fluid has no natural boundary (no GAMMA_OUT
    facet and no pressure load), which is when p_f is only defined up to a
    constant.  open_markers lists natural fluid boundaries that get the
    directional (backflow-stabilized) treatment in transient runs.
    """
    d = mesh.dim
    if d != 2:
        raise AssemblyError("assembly is implemented for 2D meshes only")
    has_fluid = np.any(mesh.cell_tags == FLUID)
    has_solid = np.any(mesh.cell_tags == SOLID)
    loads = list(loads or [])
    dirichlet = list(dirichlet or [])
    forcing = dict(forcing or {})

    spaces: Dict[str, FunctionSpace] = {}
    sizes: Dict[str, int] = {}
    spaces["u"] = build_space(mesh, 2, rank=1, tag=None)
    if has_fluid:
        spaces["v_f"] = build_space(mesh, 2, rank=1, tag=FLUID)
        spaces["p_f"] = build_space(mesh, 1, rank=0, tag=FLUID)
        sizes["v_f"] = spaces["v_f"].num_dofs
        sizes["p_f"] = spaces["p_f"].num_dofs
    if has_solid:
        spaces["v_s"] = build_space(mesh, 2, rank=1, tag=SOLID)
        spaces["p_d"] = build_space(mesh, 1, rank=0, tag=SOLID)
        spaces["q"] = spaces["v_s"]
        sizes["v_s"] = spaces["v_s"].num_dofs
        sizes["q"] = spaces["v_s"].num_dofs
        sizes["p_d"] = spaces["p_d"].num_dofs
    layout = BlockLayout.build(sizes)

    fluid = solid = None
    if has_fluid:
        fluid = _subdomain_data(mesh, mesh.cells_with_tag(FLUID),
                                spaces["v_f"], spaces["p_f"], spaces["u"], quad_degree)
    if has_solid:
        solid = _subdomain_data(mesh, mesh.cells_with_tag(SOLID),
                                spaces["v_s"], spaces["p_d"], spaces["u"], quad_degree)

    iface = None
    facets = extract_interface(mesh) if (has_fluid and has_solid) else []
    if facets:
        ftr = _facet_traces(mesh, [f.vertices for f in facets],
                            [f.fluid_cell for f in facets],
                            spaces["v_f"], spaces["p_f"], spaces["u"], quad_degree,
                            normals=np.array([f.normal for f in facets]))
        # Solid-side traces share the fluid-oriented normal.
        str_ = _facet_traces(mesh, [f.vertices for f in facets],
                             [f.solid_cell for f in facets],
                             spaces["v_s"], spaces["p_d"], spaces["u"], quad_degree,
                             normals=np.array([f.normal for f in facets]))
        h = np.array([f.h for f in facets])
        tau = np.full(len(facets), float(penalty_const)) if penalty_const is not None \
            else penalty_scale * h ** -2.0
        iface = InterfaceData(facets, ftr, str_, h, tau)

    def natural_traces(marker: int, what: str) -> FacetTraces:
        if not has_fluid:
            raise AssemblyError("%s on a mesh without fluid cells" % what)
        idx = mesh.facets_with_marker(marker)
        if len(idx) == 0:
            raise AssemblyError("%s marker %d has no facets" % (what, marker))
        table = mesh.facet_to_cells()
        cells = [table[tuple(sorted(mesh.facets[i].tolist()))][0] for i in idx]
        tr = _facet_traces(mesh, [mesh.facets[i] for i in idx], cells,
                           spaces["v_f"], spaces["p_f"], spaces["u"], quad_degree)
        # Orient reference normals outward (away from the owning cell centroid).
        cen = mesh.vertices[mesh.cells[cells]].mean(axis=1)
        mid = tr.X.mean(axis=1)
        flip = np.einsum("fd,fd->f", tr.nref, mid - cen) < 0.0
        tr.nref[flip] *= -1.0
        return tr

    load_data: Dict[int, FacetTraces] = {}
    for load in loads:
        load_data[load.marker] = natural_traces(load.marker, "pressure load")
    open_data: Dict[int, FacetTraces] = {}
    for marker in open_markers:
        open_data[marker] = load_data.get(marker) \
            or natural_traces(marker, "open boundary")

    if pin_pf == "auto":
        natural = len(loads) > 0 or len(mesh.facets_with_marker(GAMMA_OUT)) > 0
        pin = (0, lambda t: 0.0) if (has_fluid and not natural) else None
    else:
        pin = pin_pf

    prob = Problem(mesh=mesh, params=params, quad_degree=quad_degree, spaces=spaces,
                   fluid=fluid, solid=solid, iface=iface, load_data=load_data,
                   loads=loads, dirichlet=dirichlet, forcing=forcing,
                   include_inertia=include_inertia, frozen_geometry=frozen_geometry,
                   pin_pf=pin, layout=layout, solver_rtol=solver_rtol,
                   open_data=open_data)
    if has_solid:
        prob.map_vs_to_u = transfer_nodes(spaces["v_s"], spaces["u"])
    if has_fluid:
        prob.map_vf_to_u = transfer_nodes(spaces["v_f"], spaces["u"])
    if has_fluid and has_solid:
        prob.map_vs_to_vf = transfer_nodes(spaces["v_s"], spaces["v_f"])
    return prob


# ---------------------------------------------------------------------------
# Geometry at the extrapolated displacement
# ---------------------------------------------------------------------------

def _grads_on_cells(sub: SubdomainData, uvec: np.ndarray, d: int) -> np.ndarray:
    """grad u at cell quadrature points: (nc, nq, d, d), du_m/dx_e."""
    uloc = uvec.reshape(-1, d)[sub.nodes_u]                  # (nc, n2, d)
    return np.einsum("cnm,cqne->cqme", uloc, sub.grad2)


def _grads_on_facets(tr: FacetTraces, uvec: np.ndarray, d: int) -> np.ndarray:
    uloc = uvec.reshape(-1, d)[tr.nodes_u]
    return np.einsum("fnm,fqne->fqme", uloc, tr.grad2)


def build_geometry(problem: Problem, u_tilde: np.ndarray) -> Geometry:
    """F, J and derived weights at every quadrature point, checked positive."""
    d = problem.dim
    geo = Geometry()
    if problem.fluid is not None:
        gu = _grads_on_cells(problem.fluid, u_tilde, d)
        F, J, Finv, FinvT = deformation_state(gu, cell_ids=problem.fluid.cells)
        geo.fluid = {"F": F, "J": J, "Finv": Finv, "FinvT": FinvT}
    if problem.solid is not None:
        gu = _grads_on_cells(problem.solid, u_tilde, d)
        F, J, Finv, FinvT = deformation_state(gu, cell_ids=problem.solid.cells)
        geo.solid = {"F": F, "J": J, "Finv": Finv, "FinvT": FinvT}
    if problem.iface is not None:
        tr = problem.iface.fluid
        gu = _grads_on_facets(tr, u_tilde, d)
        F, J, Finv, FinvT = deformation_state(gu, cell_ids=tr.cells_global)
        nvec = np.einsum("fqab,fb->fqa", FinvT, tr.nref)
        mag = np.linalg.norm(nvec, axis=-1)
        n = nvec / mag[..., None]
        Js = J * mag
        P = np.eye(d)[None, None] - np.einsum("fqa,fqb->fqab", n, n)
        geo.iface = {"F": F, "J": J, "Js": Js, "n": n, "P": P}
    natural = dict(problem.open_data)
    natural.update(problem.load_data)
    for marker, tr in natural.items():
        gu = _grads_on_facets(tr, u_tilde, d)
        F, J, Finv, FinvT = deformation_state(gu, cell_ids=tr.cells_global)
        vn = np.einsum("fqab,fb->fqa", FinvT, tr.nref)   # F^-T n_ref, unnormalized
        geo.loads[marker] = {"J": J, "vn": vn}
    return geo


# ---------------------------------------------------------------------------
# Element kernels
# ---------------------------------------------------------------------------

class _Triplets:
    def __init__(self):
        self.rows: list = []
        self.cols: list = []
        self.vals: list = []

    def add(self, rows: np.ndarray, cols: np.ndarray, vals: np.ndarray):
        nb, ni = rows.shape
        nj = cols.shape[1]
        self.rows.append(np.repeat(rows[:, :, None], nj, axis=2).ravel())
        self.cols.append(np.repeat(cols[:, None, :], ni, axis=1).ravel())
        self.vals.append(vals.reshape(-1))

    def tocsr(self, n: int) -> sparse.csr_matrix:
        if not self.rows:
            return sparse.csr_matrix((n, n))
        rows = np.concatenate(self.rows)
        cols = np.concatenate(self.cols)
        vals = np.concatenate(self.vals)
        A = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        A.sum_duplicates()
        return A


def _kron_eye(M: np.ndarray, d: int) -> np.ndarray:
    """Embed a scalar element matrix as M (x) I_d with interleaved components."""
    nb, ni, nj = M.shape
    out = np.zeros((nb, ni * d, nj * d))
    for a in range(d):
        out[:, a::d, a::d] = M
    return out


def _vec_mass(sub: SubdomainData, wJ: np.ndarray, d: int) -> np.ndarray:
    Ms = np.einsum("cq,qi,qj->cij", wJ, sub.val2, sub.val2)
    return _kron_eye(Ms, d)


def _add_rhs(b, rows, vals):
    np.add.at(b, rows.ravel(), vals.ravel())


def _field_at_qp(val, nodes, vec, d):
    """FE field at quadrature points from interleaved dofs: (..., nq, d)."""
    loc = vec.reshape(-1, d)[nodes]                  # (nb, nloc, d)
    if val.ndim == 2:      # shared table (nq, nloc)
        return np.einsum("qn,bnd->bqd", val, loc)
    return np.einsum("bqn,bnd->bqd", val, loc)       # per-facet table


def _scalar_at_qp(val, nodes, vec):
    loc = vec[nodes]
    if val.ndim == 2:
        return np.einsum("qn,bn->bq", val, loc)
    return np.einsum("bqn,bn->bq", val, loc)


# ---------------------------------------------------------------------------
# Assembly of the monolithic system
# ---------------------------------------------------------------------------

def assemble_system(problem: Problem, inp: StepInputs,
                    dump_matrix: Optional[str] = None) -> Tuple[BlockSystem, Geometry]:
    """Assemble A, b for one step (or a steady solve when inp.dt is None)."""
    lay = problem.layout
    geo = build_geometry(problem, inp.u_tilde)
    T = _Triplets()
    b = np.zeros(lay.total)
    transient = inp.dt is not None

    if problem.fluid is not None:
        _fluid_terms(problem, inp, geo, T, b, transient)
    if problem.solid is not None:
        _solid_terms(problem, inp, geo, T, b, transient)
    if problem.iface is not None:
        _interface_terms(problem, inp, geo, T)
    _load_terms(problem, inp, geo, b)
    _backflow_terms(problem, inp, geo, T)

    A = T.tocsr(lay.total)
    dofs, vals = _dirichlet_data(problem, inp.t)
    A, b = apply_dirichlet(A, b, dofs, vals)
    if dump_matrix:
        mmwrite(dump_matrix, A.tocoo())
    return BlockSystem(A, b, lay), geo


def _fluid_terms(problem, inp, geo, T, b, transient):
    sub = problem.fluid
    prm = problem.params
    d = problem.dim
    lay = problem.layout
    J = geo.fluid["J"]
    Finv = geo.fluid["Finv"]
    wJ = sub.w * J
    vd = sub.vdofs + lay.offsets["v_f"]
    pd = sub.pdofs + lay.offsets["p_f"]

    # G_n = grad(phi_n) F^-1: the reference gradient pushed to spatial coords.
    G = np.einsum("cqne,cqep->cqnp", sub.grad2, Finv)

    if transient:
        M = _vec_mass(sub, wJ * (prm.rho_f * inp.a0 / inp.dt), d)
        T.add(vd, vd, M)
        hist = inp.hist.get("v_f")
        if hist is not None and np.any(hist):
            hq = _field_at_qp(sub.val2, sub.nodes2, hist, d)
            rhs = -np.einsum("cq,qi,cqa->cia", wJ * (prm.rho_f / inp.dt), sub.val2, hq)
            _add_rhs(b, vd, rhs)

    # a_f: 2 mu J D:D = mu J [delta_ab Gi.Gj + Gj_a Gi_b]
    muwJ = wJ * prm.mu_f
    A1 = np.einsum("cq,cqid,cqjd->cij", muwJ, G, G)
    A2 = np.einsum("cq,cqja,cqib->ciajb", muwJ, G, G)
    nloc = G.shape[2]
    T.add(vd, vd, _kron_eye(A1, d) + A2.reshape(-1, nloc * d, nloc * d))

    # c_f with the extrapolated advective field v~_f - w~
    if problem.include_inertia and transient and inp.vf_tilde is not None:
        adv = _field_at_qp(sub.val2, sub.nodes2, inp.vf_tilde, d)
        if inp.w_tilde is not None:
            adv = adv - _field_at_qp(sub.val2, sub.nodes_u, inp.w_tilde, d)
        t1 = np.einsum("cqjd,cqd->cqj", G, adv)
        C = np.einsum("cq,qi,cqj->cij", wJ * prm.rho_f, sub.val2, t1)
        T.add(vd, vd, _kron_eye(C, d))

    # pressure block and its transposed constraint: B[j,(i,a)] = w J p_j G_i[a]
    B = np.einsum("cq,qj,cqia->cjia", wJ, sub.val1, G).reshape(len(sub.cells), -1, nloc * d)
    T.add(pd, vd, B)                                   # + b_f(q_f, v_f)
    T.add(vd, pd, -np.transpose(B, (0, 2, 1)))         # - b_f(p_f, psi_f)

    fn = problem.forcing.get("v_f")
    if fn is not None:
        fq = _forcing_at(fn, sub.X, inp.t, d)
        _add_rhs(b, vd, np.einsum("cq,qi,cqa->cia", sub.w, sub.val2, fq))
    gn = problem.forcing.get("mass_f")
    if gn is not None:
        gq = _forcing_at(gn, sub.X, inp.t, 1)
        _add_rhs(b, pd, np.einsum("cq,qj,cq->cj", sub.w, sub.val1, gq))


def _solid_terms(problem, inp, geo, T, b, transient):
    sub = problem.solid
    prm = problem.params
    d = problem.dim
    lay = problem.layout
    J = geo.solid["J"]
    Ft = geo.solid["F"]
    Finv = geo.solid["Finv"]
    FinvT = geo.solid["FinvT"]
    wJ = sub.w * J
    vsd = sub.vdofs + lay.offsets["v_s"]
    qd = sub.vdofs + lay.offsets["q"]
    pdd = sub.pdofs + lay.offsets["p_d"]
    nloc = sub.val2.shape[1]

    if transient:
        c = inp.a0 / inp.dt
        Ms = np.einsum("cq,qi,qj->cij", wJ, sub.val2, sub.val2)
        Mv = _kron_eye(Ms, d)
        T.add(vsd, vsd, (prm.rho_p * c) * Mv)
        T.add(vsd, qd, (prm.rho_f * c) * Mv)
        T.add(qd, vsd, (prm.rho_f * c) * Mv)
        T.add(qd, qd, (prm.rho_f / prm.phi * c) * Mv)
        M1 = np.einsum("cq,qi,qj->cij", wJ, sub.val1, sub.val1)
        T.add(pdd, pdd, (prm.s0 * c) * M1)

        nv = lay.sizes["v_s"]
        hv = inp.hist.get("v_s", np.zeros(nv))
        hq = inp.hist.get("q", np.zeros(nv))
        if np.any(hv) or np.any(hq):
            comb_s = prm.rho_p * hv + prm.rho_f * hq
            comb_d = prm.rho_f * hv + (prm.rho_f / prm.phi) * hq
            hs = _field_at_qp(sub.val2, sub.nodes2, comb_s, d)
            hd = _field_at_qp(sub.val2, sub.nodes2, comb_d, d)
            _add_rhs(b, vsd, -np.einsum("cq,qi,cqa->cia", wJ / inp.dt, sub.val2, hs))
            _add_rhs(b, qd, -np.einsum("cq,qi,cqa->cia", wJ / inp.dt, sub.val2, hd))
        hp = inp.hist.get("p_d")
        if hp is not None and np.any(hp):
            hpq = _scalar_at_qp(sub.val1, sub.nodes1, hp)
            _add_rhs(b, pdd, -np.einsum("cq,qj,cq->cj", wJ * (prm.s0 / inp.dt), sub.val1, hpq))

    # a_s: F~ S(E(u_k, u~)) : grad(psi), linear in v_s through u_k = beta v_s + u_hist.
    # Trial (j,b): E = 1/4 (g_j (x) F~_b + F~_b (x) g_j), tr E = 1/2 g_j.F~_b.
    g = sub.grad2
    E4 = 0.25 * (np.einsum("cqjm,cqbn->cqjbmn", g, Ft) + np.einsum("cqbm,cqjn->cqjbmn", Ft, g))
    tr4 = 0.5 * np.einsum("cqjm,cqbm->cqjb", g, Ft)
    S4 = 2.0 * prm.mu_s * E4
    idx = np.arange(d)
    S4[..., idx, idx] += prm.lam_s * tr4[..., None]
    Ael = inp.beta * np.einsum("cq,cqam,cqjbmn,cqin->ciajb", sub.w, Ft, S4, g, optimize=True)
    T.add(vsd, vsd, Ael.reshape(-1, nloc * d, nloc * d))

    # History part of the elastic stress moves to the right-hand side.
    gh = _grads_on_cells(sub, inp.u_impl_hist, d)
    Fh = gh + np.eye(d)
    Ec = green_lagrange(Fh, Ft)
    if np.any(Ec):
        Sc = svk_stress(Ec, prm.lam_s, prm.mu_s)
        rhs = -np.einsum("cq,cqam,cqmn,cqin->cia", sub.w, Ft, Sc, g, optimize=True)
        _add_rhs(b, vsd, rhs)

    # a_d: J K^-1 q . psi_d
    Kinv = prm.K_inv(d)
    Ms = np.einsum("cq,qi,qj->cij", wJ, sub.val2, sub.val2)
    Ad = np.einsum("cij,ab->ciajb", Ms, Kinv)
    T.add(qd, qd, Ad.reshape(-1, nloc * d, nloc * d))

    # pressure blocks (tested against psi_s and psi_d) and the constraint rows
    G = np.einsum("cqne,cqep->cqnp", sub.grad2, Finv)
    B = np.einsum("cq,qj,cqia->cjia", wJ, sub.val1, G).reshape(len(sub.cells), -1, nloc * d)
    BT = np.transpose(B, (0, 2, 1))
    T.add(pdd, vsd, B)             # + b_s(q_d, v_s)
    T.add(pdd, qd, B)              # + b_s(q_d, q)
    T.add(vsd, pdd, -BT)           # - b_s(p_d, psi_s)  (sigma_p = sigma_s - p_d I)
    T.add(qd, pdd, -BT)            # - b_s(p_d, psi_d)

    for name, dofs in (("v_s", vsd), ("q", qd)):
        fn = problem.forcing.get(name)
        if fn is not None:
            fq = _forcing_at(fn, sub.X, inp.t, d)
            _add_rhs(b, dofs, np.einsum("cq,qi,cqa->cia", sub.w, sub.val2, fq))
    gn = problem.forcing.get("mass_s")
    if gn is not None:
        gq = _forcing_at(gn, sub.X, inp.t, 1)
        _add_rhs(b, pdd, np.einsum("cq,qj,cq->cj", sub.w, sub.val1, gq))


def _interface_terms(problem, inp, geo, T):
    ifd = problem.iface
    prm = problem.params
    d = problem.dim
    lay = problem.layout
    ftr, str_ = ifd.fluid, ifd.solid
    Js = geo.iface["Js"]
    n = geo.iface["n"]
    P = geo.iface["P"]
    w = ftr.w
    nf, nq = w.shape
    nloc = ftr.val2.shape[2]

    fd = ftr.vdofs + lay.offsets["v_f"]
    sd = str_.vdofs + lay.offsets["v_s"]
    qd = str_.vdofs + lay.offsets["q"]
    pdd = str_.pdofs + lay.offsets["p_d"]

    # (value . n) traces, interleaved (node, comp) ordering
    TF = np.einsum("fqi,fqa->fqia", ftr.val2, n).reshape(nf, nq, nloc * d)
    TS = np.einsum("fqi,fqa->fqia", str_.val2, n).reshape(nf, nq, nloc * d)

    # penalty tau ((w_f - w_s - w_d).n)((psi_f - psi_s - psi_d).n)
    wpen = w * Js * ifd.tau[:, None]
    sets = ((TF, fd, 1.0), (TS, sd, -1.0), (TS, qd, -1.0))
    for TX, dX, sX in sets:
        for TY, dY, sY in sets:
            vals = (sX * sY) * np.einsum("fq,fqi,fqj->fij", wpen, TX, TY)
            T.add(dX, dY, vals)

    # pressure coupling  p_d (psi_f - psi_s - psi_d).n
    wJs = w * Js
    for TX, dX, sX in sets:
        vals = sX * np.einsum("fq,fqi,fqj->fij", wJs, TX, str_.val1)
        T.add(dX, pdd, vals)

    # kinetic correction (rho_f/2)(v~_f . w_f)(psi_s - psi_f).n, linearized
    if inp.vf_tilde is not None:
        vt = _field_at_qp(ftr.val2, ftr.nodes2, inp.vf_tilde, d)     # (nf, nq, d)
        VJ = np.einsum("fqj,fqb->fqjb", ftr.val2, vt).reshape(nf, nq, nloc * d)
        wkin = wJs * (0.5 * prm.rho_f)
        T.add(sd, fd, np.einsum("fq,fqi,fqj->fij", wkin, TS, VJ))
        T.add(fd, fd, -np.einsum("fq,fqi,fqj->fij", wkin, TF, VJ))

    # slip term gamma K^-1/2 P(w_f - w_s) . P(psi_f - psi_s)
    if prm.gamma > 0.0:
        Kis = prm.K_inv_sqrt(d)
        M = np.einsum("fqam,mn,fqnb->fqab", P, Kis, P)
        wbjs = wJs * prm.gamma
        pairs = ((ftr.val2, fd, 1.0), (str_.val2, sd, -1.0))
        for vX, dX, sX in pairs:
            for vY, dY, sY in pairs:
                vals = (sX * sY) * np.einsum("fq,fqi,fqj,fqab->fiajb", wbjs, vX, vY, M)
                T.add(dX, dY, vals.reshape(nf, nloc * d, nloc * d))


def _backflow_terms(problem, inp, geo, T):
    """Directional treatment of open boundaries.

    Where the extrapolated velocity re-enters through an open end
    (v~ . n < 0) the plain traction condition feeds kinetic energy into the
    domain; adding rho_f/2 (v~ . n)_- (w_f . psi_f) on those facets removes
    exactly that inflow and keeps the step energy balance one-sided.
    Inactive at outflow and in steady problems.
    """
    if inp.vf_tilde is None or not problem.open_data:
        return
    prm = problem.params
    d = problem.dim
    lay = problem.layout
    eye = np.eye(d)
    for marker, tr in problem.open_data.items():
        g = geo.loads[marker]
        vt = _field_at_qp(tr.val2, tr.nodes2, inp.vf_tilde, d)       # (nf, nq, d)
        # v~ . n ds on the deformed facet via Nanson: v~ . (J F^-T n_ref) ds_ref
        flux = g["J"] * np.einsum("fqa,fqa->fq", vt, g["vn"])
        wq = (-0.5 * prm.rho_f) * tr.w * np.minimum(flux, 0.0)
        if not np.any(wq):
            continue
        nf, nq, nloc = tr.val2.shape
        M = np.einsum("fq,fqi,fqj->fij", wq, tr.val2, tr.val2)
        vals = np.einsum("fij,ab->fiajb", M, eye).reshape(nf, nloc * d, nloc * d)
        dofs = tr.vdofs + lay.offsets["v_f"]
        T.add(dofs, dofs, vals)


def _load_terms(problem, inp, geo, b):
    lay = problem.layout
    d = problem.dim
    for load in problem.loads:
        tr = problem.load_data[load.marker]
        g = geo.loads[load.marker]
        p = load.value(inp.t)
        if p == 0.0:
            continue
        coef = load.sign * p * tr.w * g["J"]
        rhs = np.einsum("fq,fqi,fqa->fia", coef, tr.val2, g["vn"])
        _add_rhs(b, tr.vdofs + lay.offsets["v_f"], rhs)


def _forcing_at(fn, X, t, ncomp):
    nc, nq, d = X.shape
    flat = X.reshape(nc * nq, d)
    vals = _batch_eval(lambda pts: fn(pts, t), flat, ncomp)
    return vals.reshape((nc, nq) if ncomp == 1 else (nc, nq, ncomp))


# ---------------------------------------------------------------------------
# Dirichlet conditions
# ---------------------------------------------------------------------------

def _dirichlet_data(problem: Problem, t: float) -> Tuple[np.ndarray, np.ndarray]:
    """Global Dirichlet dofs and values at time t (later entries win)."""
    lay = problem.layout
    table: Dict[int, float] = {}
    for bc in problem.dirichlet:
        if bc.field not in lay.offsets:
            raise AssemblyError("Dirichlet condition on absent field %r" % bc.field)
        space = problem.spaces[bc.field]
        nodes = space.nodes_on_markers(bc.markers)
        if len(nodes) == 0:
            continue
        vals = _batch_eval(lambda X: bc.value(X, t), space.node_coords[nodes], space.ncomp)
        dofs = space.dofs_of_nodes(nodes) + lay.offsets[bc.field]
        for dof, v in zip(dofs, vals.ravel()):
            table[int(dof)] = float(v)
    if problem.pin_pf is not None:
        node, fn = problem.pin_pf
        table[lay.offsets["p_f"] + int(node)] = float(fn(t))
    if not table:
        return np.empty(0, dtype=np.int64), np.empty(0)
    dofs = np.array(sorted(table), dtype=np.int64)
    return dofs, np.array([table[int(i)] for i in dofs])


def apply_dirichlet(A: sparse.csr_matrix, b: np.ndarray,
                    dofs: np.ndarray, values: np.ndarray):
    """Identity-row replacement with column symmetrization."""
    if len(dofs) == 0:
        return A.tocsr(), b
    n = A.shape[0]
    x0 = np.zeros(n)
    x0[dofs] = values
    b = b - A @ x0
    keep = np.ones(n)
    keep[dofs] = 0.0
    D = sparse.diags(keep)
    mark = np.zeros(n)
    mark[dofs] = 1.0
    A = (D @ A @ D + sparse.diags(mark)).tocsr()
    A.eliminate_zeros()
    b[dofs] = values
    return A, b
