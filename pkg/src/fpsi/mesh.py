"""Simplicial meshes with subdomain tags and boundary/interface markers.

All computations run on the fixed reference mesh; deformation enters through
the displacement field, never by moving vertices.  Units are mm throughout.

Cell tags split the mesh into the fluid and the poroelastic subdomain.
Facet markers identify the Dirichlet/outflow parts of the outer boundary and
the fluid-solid interface:

    FLUID, SOLID           cell tags
    GAMMA_F0               fluid inflow/Dirichlet boundary
    GAMMA_OUT              fluid outflow boundary (natural)
    GAMMA_S0               fixed structure boundary (v_s = 0, p_d = 0)
    GAMMA_FS               fluid-solid interface (internal)

Two file formats are supported: a plain-text native format (sections
VERTICES / CELLS / FACETS, 0-based indices, tag names spelled out) and
ASCII gmsh MSH 2.2, whose integer physical tags are mapped to the names
above through a caller-supplied table.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .errors import MeshError

FLUID = 1
SOLID = 2

GAMMA_F0 = 10
GAMMA_OUT = 11
GAMMA_S0 = 12
GAMMA_FS = 13

CELL_TAG_NAMES = {"FLUID": FLUID, "SOLID": SOLID}
MARKER_NAMES = {
    "GAMMA_F0": GAMMA_F0,
    "GAMMA_OUT": GAMMA_OUT,
    "GAMMA_S0": GAMMA_S0,
    "GAMMA_FS": GAMMA_FS,
}
TAG_TO_NAME = {v: k for k, v in CELL_TAG_NAMES.items()}
MARKER_TO_NAME = {v: k for k, v in MARKER_NAMES.items()}

# All marker names accepted when mapping gmsh physical groups.
_ALL_NAMES = dict(CELL_TAG_NAMES, **MARKER_NAMES)


@dataclass
class Mesh:
    """Simplicial mesh: vertices, cells with subdomain tags, marked facets.

    vertices      (nv, d) float64
    cells         (nc, d+1) int64, positively oriented after validation
    cell_tags     (nc,) int64, FLUID or SOLID
    facets        (nf, d) int64 vertex ids of marked facets
    facet_markers (nf,) int64
    """

    vertices: np.ndarray
    cells: np.ndarray
    cell_tags: np.ndarray
    facets: np.ndarray
    facet_markers: np.ndarray
    _facet_cells: Optional[Dict[tuple, list]] = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_cells(self) -> int:
        return self.cells.shape[0]

    def cells_with_tag(self, tag: int) -> np.ndarray:
        return np.flatnonzero(self.cell_tags == tag)

    def facets_with_marker(self, marker: int) -> np.ndarray:
        return np.flatnonzero(self.facet_markers == marker)

    def facet_to_cells(self) -> Dict[tuple, list]:
        """Map sorted facet vertex tuple -> list of adjacent cell ids."""
        if self._facet_cells is None:
            table: Dict[tuple, list] = {}
            for c, cell in enumerate(self.cells):
                for fac in _cell_facets(cell):
                    table.setdefault(fac, []).append(c)
            self._facet_cells = table
        return self._facet_cells

    def cell_volumes(self) -> np.ndarray:
        return _signed_volumes(self.vertices, self.cells)


@dataclass
class InterfaceFacet:
    """One GAMMA_FS facet with its two cells and fluid->solid reference normal."""

    vertices: np.ndarray      # (d,) vertex ids
    fluid_cell: int
    solid_cell: int
    normal: np.ndarray        # unit normal in reference coords, fluid -> solid
    h: float                  # facet diameter


def _cell_facets(cell) -> List[tuple]:
    """Sorted vertex tuples of the (d-1)-faces of one simplex."""
    n = len(cell)
    return [tuple(sorted([cell[j] for j in range(n) if j != i])) for i in range(n)]


def _signed_volumes(vertices, cells) -> np.ndarray:
    v0 = vertices[cells[:, 0]]
    edges = vertices[cells[:, 1:]] - v0[:, None, :]
    d = vertices.shape[1]
    if d == 2:
        det = edges[:, 0, 0] * edges[:, 1, 1] - edges[:, 0, 1] * edges[:, 1, 0]
        return det / 2.0
    return np.linalg.det(edges) / 6.0


def facet_local_size(coords: np.ndarray) -> float:
    """Facet diameter: segment length in 2D, longest edge of a triangle in 3D."""
    coords = np.asarray(coords, dtype=float)
    n = coords.shape[0]
    h = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            h = max(h, float(np.linalg.norm(coords[i] - coords[j])))
    return h


def _facet_normal(mesh: Mesh, fverts) -> np.ndarray:
    """Unit normal of a straight facet (sign not yet oriented)."""
    pts = mesh.vertices[np.asarray(fverts)]
    if mesh.dim == 2:
        t = pts[1] - pts[0]
        n = np.array([t[1], -t[0]])
    else:
        n = np.cross(pts[1] - pts[0], pts[2] - pts[0])
    return n / np.linalg.norm(n)


def extract_interface(mesh: Mesh) -> List[InterfaceFacet]:
    """Ordered GAMMA_FS facets with normals oriented fluid -> solid.

    Orientation rule: the normal points from the fluid cell centroid towards
    the solid cell centroid.  Repeated calls on the same mesh return the
    facets in the stored marker order, so downstream assembly is
    deterministic.
    """
    table = mesh.facet_to_cells()
    out: List[InterfaceFacet] = []
    for idx in mesh.facets_with_marker(GAMMA_FS):
        fverts = mesh.facets[idx]
        adj = table.get(tuple(sorted(fverts.tolist())), [])
        tags = [mesh.cell_tags[c] for c in adj]
        if len(adj) != 2 or sorted(tags) != [FLUID, SOLID]:
            raise MeshError(
                "interface facet not between subdomains: facet %s touches cells %s"
                % (fverts.tolist(), adj)
            )
        cf, cs = (adj[0], adj[1]) if tags[0] == FLUID else (adj[1], adj[0])
        n = _facet_normal(mesh, fverts)
        cen_f = mesh.vertices[mesh.cells[cf]].mean(axis=0)
        cen_s = mesh.vertices[mesh.cells[cs]].mean(axis=0)
        if np.dot(n, cen_s - cen_f) < 0.0:
            n = -n
        out.append(
            InterfaceFacet(
                vertices=fverts.copy(),
                fluid_cell=int(cf),
                solid_cell=int(cs),
                normal=n,
                h=facet_local_size(mesh.vertices[fverts]),
            )
        )
    return out


def validate_mesh(mesh: Mesh) -> Mesh:
    """Run all structural checks; repairs orientation in place.

    Raises MeshError on: empty mesh, invalid vertex references, degenerate
    cells, facets shared by more than two cells, missing/contradictory
    facet markers, marker adjacency violations, boundary hanging nodes.
    """
    if mesh.num_cells == 0 or mesh.num_vertices == 0:
        raise MeshError("empty mesh")
    if mesh.cells.min() < 0 or mesh.cells.max() >= mesh.num_vertices:
        raise MeshError("cell references vertex id out of range")
    for tag in np.unique(mesh.cell_tags):
        if tag not in (FLUID, SOLID):
            raise MeshError("unknown cell tag %r" % tag)

    # Orientation repair: swap the last two vertices of inverted cells.
    vols = _signed_volumes(mesh.vertices, mesh.cells)
    scale = float(np.abs(vols).max())
    if scale == 0.0 or np.any(np.abs(vols) < 1e-12 * scale):
        bad = int(np.argmin(np.abs(vols)))
        raise MeshError("degenerate cell %d with volume %g" % (bad, vols[bad]))
    flip = vols < 0.0
    if np.any(flip):
        mesh.cells[flip, -2:] = mesh.cells[flip, -2:][:, ::-1]
        mesh._facet_cells = None

    # Facet sharing: conforming simplicial meshes never exceed two cells.
    table = mesh.facet_to_cells()
    for fac, cs in table.items():
        if len(cs) > 2:
            raise MeshError("non-conforming mesh: facet %s shared by %d cells" % (fac, len(cs)))

    # Marker table: no contradictions, every marked facet is a real facet.
    marker_of: Dict[tuple, int] = {}
    for fverts, m in zip(mesh.facets, mesh.facet_markers):
        key = tuple(sorted(fverts.tolist()))
        if key in marker_of and marker_of[key] != m:
            raise MeshError("contradictory markers on facet %s" % (key,))
        marker_of[key] = int(m)
        if key not in table:
            raise MeshError("marked facet %s is not a facet of any cell" % (key,))
        if m not in MARKER_TO_NAME:
            raise MeshError("unknown facet marker %r" % m)

    # Every outer-boundary facet needs a marker; every internal fluid/solid
    # facet must be marked GAMMA_FS, otherwise the subdomains silently decouple.
    for fac, cs in table.items():
        if len(cs) == 1 and fac not in marker_of:
            raise MeshError("facet with missing marker: boundary facet %s" % (fac,))
        if len(cs) == 2:
            t0, t1 = mesh.cell_tags[cs[0]], mesh.cell_tags[cs[1]]
            if t0 != t1 and marker_of.get(fac) != GAMMA_FS:
                raise MeshError("facet with missing marker: interface facet %s" % (fac,))

    # Marker adjacency rules.
    for fverts, m in zip(mesh.facets, mesh.facet_markers):
        key = tuple(sorted(fverts.tolist()))
        cs = table[key]
        tags = sorted(mesh.cell_tags[c] for c in cs)
        if m == GAMMA_FS:
            if len(cs) != 2 or tags != [FLUID, SOLID]:
                raise MeshError(
                    "interface facet not between subdomains: %s (tags %s)" % (key, tags)
                )
        elif m in (GAMMA_F0, GAMMA_OUT):
            if len(cs) != 1 or tags != [FLUID]:
                raise MeshError(
                    "%s facet %s must belong to exactly one FLUID cell"
                    % (MARKER_TO_NAME[m], key)
                )
        elif m == GAMMA_S0:
            if len(cs) != 1 or tags != [SOLID]:
                raise MeshError("GAMMA_S0 facet %s must belong to exactly one SOLID cell" % (key,))

    _check_hanging_nodes(mesh, marker_of)
    return mesh


def _check_hanging_nodes(mesh: Mesh, marker_of: Dict[tuple, int]) -> None:
    """Reject vertices sitting strictly inside a marked facet.

    A hanging node on the boundary is always a vertex of some marked facet,
    so only those vertices need testing; the check is O(nb^2) on boundary
    entities only.
    """
    if not marker_of:
        return
    bverts = sorted({v for fac in marker_of for v in fac})
    pts = mesh.vertices[bverts]
    for fac in marker_of:
        a = mesh.vertices[fac[0]]
        b = mesh.vertices[fac[-1]]
        if mesh.dim != 2:
            continue  # 3D hanging-face detection is covered by the sharing checks
        t = b - a
        L2 = float(np.dot(t, t))
        rel = pts - a
        s = (rel @ t) / L2
        dist2 = np.einsum("id,id->i", rel, rel) - s * s * L2
        inside = (s > 1e-10) & (s < 1.0 - 1e-10) & (dist2 < 1e-20 * L2)
        for k in np.flatnonzero(inside):
            if bverts[k] not in fac:
                raise MeshError(
                    "non-conforming mesh: vertex %d hangs on facet %s" % (bverts[k], fac)
                )


# ---------------------------------------------------------------------------
# Native plain-text format
# ---------------------------------------------------------------------------

def _tokenize(text: str):
    for line in text.splitlines():
        body = line.split("#", 1)[0].strip()
        if body:
            yield body.split()


def parse_native(text: str) -> Mesh:
    """Parse the native format: VERTICES / CELLS / FACETS sections."""
    rows = list(_tokenize(text))
    pos = 0

    def expect(section):
        nonlocal pos
        if pos >= len(rows) or rows[pos][0] != section:
            raise MeshError("expected %s section" % section)
        header = rows[pos]
        pos += 1
        return header

    head = expect("VERTICES")
    try:
        nv, dim = int(head[1]), int(head[2])
    except (IndexError, ValueError):
        raise MeshError("VERTICES header must be 'VERTICES <count> <dim>'")
    if dim not in (2, 3):
        raise MeshError("dimension must be 2 or 3, got %d" % dim)
    verts = np.empty((nv, dim))
    for i in range(nv):
        row = rows[pos + i]
        if len(row) != dim:
            raise MeshError("vertex row %d has %d coordinates, expected %d" % (i, len(row), dim))
        verts[i] = [float(x) for x in row]
    pos += nv

    head = expect("CELLS")
    nc = int(head[1])
    cells = np.empty((nc, dim + 1), dtype=np.int64)
    tags = np.empty(nc, dtype=np.int64)
    for i in range(nc):
        row = rows[pos + i]
        if len(row) != dim + 2:
            raise MeshError("cell row %d malformed" % i)
        cells[i] = [int(v) for v in row[: dim + 1]]
        name = row[dim + 1]
        if name not in CELL_TAG_NAMES:
            raise MeshError("unknown cell tag %r in row %d" % (name, i))
        tags[i] = CELL_TAG_NAMES[name]
    pos += nc

    head = expect("FACETS")
    nf = int(head[1])
    facets = np.empty((nf, dim), dtype=np.int64)
    markers = np.empty(nf, dtype=np.int64)
    for i in range(nf):
        row = rows[pos + i]
        if len(row) != dim + 1:
            raise MeshError("facet row %d malformed" % i)
        facets[i] = [int(v) for v in row[:dim]]
        name = row[dim]
        if name not in MARKER_NAMES:
            raise MeshError("unknown facet marker %r in row %d" % (name, i))
        markers[i] = MARKER_NAMES[name]
    pos += nf
    if pos != len(rows):
        raise MeshError("trailing content after FACETS section")

    return Mesh(verts, cells, tags, facets, markers)


def write_native(mesh: Mesh, path: str) -> None:
    """Write the native format with full-precision coordinates."""
    lines = ["VERTICES %d %d" % (mesh.num_vertices, mesh.dim)]
    for v in mesh.vertices:
        lines.append(" ".join(repr(float(x)) for x in v))
    lines.append("CELLS %d" % mesh.num_cells)
    for cell, tag in zip(mesh.cells, mesh.cell_tags):
        lines.append(" ".join(str(int(v)) for v in cell) + " " + TAG_TO_NAME[int(tag)])
    lines.append("FACETS %d" % len(mesh.facets))
    for fac, m in zip(mesh.facets, mesh.facet_markers):
        lines.append(" ".join(str(int(v)) for v in fac) + " " + MARKER_TO_NAME[int(m)])
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# gmsh MSH 2.2 (ASCII)
# ---------------------------------------------------------------------------

_MSH_TYPE_NODES = {1: 2, 2: 3, 4: 4, 15: 1}  # line, triangle, tet, point


def parse_msh(text: str, physical_map: Dict[int, str]) -> Mesh:
    """Parse ASCII MSH 2.2; physical ids resolve through physical_map."""
    lines = text.splitlines()
    sections: Dict[str, List[str]] = {}
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        if line.startswith("$") and not line.startswith("$End"):
            name = line[1:]
            j = i + 1
            body = []
            endtag = "$End" + name
            while j < len(lines) and lines[j].strip() != endtag:
                body.append(lines[j].strip())
                j += 1
            if j == len(lines):
                raise MeshError("unterminated section $%s" % name)
            sections[name] = body
            i = j + 1
        else:
            i += 1

    if "MeshFormat" not in sections:
        raise MeshError("missing $MeshFormat section")
    fmt = sections["MeshFormat"][0].split()
    if not fmt[0].startswith("2.2") or fmt[1] != "0":
        raise MeshError("only ASCII MSH 2.2 is supported, got %s" % " ".join(fmt[:2]))

    if "Nodes" not in sections or "Elements" not in sections:
        raise MeshError("missing $Nodes or $Elements section")

    body = sections["Nodes"]
    nn = int(body[0])
    ids = np.empty(nn, dtype=np.int64)
    xyz = np.empty((nn, 3))
    for k in range(nn):
        parts = body[1 + k].split()
        ids[k] = int(parts[0])
        xyz[k] = [float(x) for x in parts[1:4]]
    id_map = {int(g): k for k, g in enumerate(ids)}

    body = sections["Elements"]
    ne = int(body[0])
    tris, tri_phys = [], []
    tets, tet_phys = [], []
    segs, seg_phys = [], []
    for k in range(ne):
        parts = [int(x) for x in body[1 + k].split()]
        etype, ntags = parts[1], parts[2]
        if etype not in _MSH_TYPE_NODES:
            raise MeshError("unsupported MSH element type %d" % etype)
        phys = parts[3] if ntags >= 1 else 0
        nodes = parts[3 + ntags:]
        if len(nodes) != _MSH_TYPE_NODES[etype]:
            raise MeshError("element %d has wrong node count" % parts[0])
        nodes = [id_map[n] for n in nodes]
        if etype == 2:
            tris.append(nodes)
            tri_phys.append(phys)
        elif etype == 4:
            tets.append(nodes)
            tet_phys.append(phys)
        elif etype == 1:
            segs.append(nodes)
            seg_phys.append(phys)

    def resolve(phys, kind):
        if phys not in physical_map:
            raise MeshError("unmapped physical tag %d on %s" % (phys, kind))
        name = physical_map[phys]
        if name not in _ALL_NAMES:
            raise MeshError("physical tag %d maps to unknown name %r" % (phys, name))
        return _ALL_NAMES[name]

    if tets:
        dim = 3
        cells = np.asarray(tets, dtype=np.int64)
        cellp = tet_phys
        faces, facep = tris, tri_phys
    else:
        if not tris:
            raise MeshError("no cells found in MSH file")
        dim = 2
        cells = np.asarray(tris, dtype=np.int64)
        cellp = tri_phys
        faces, facep = segs, seg_phys

    verts = xyz[:, :dim].copy()
    if dim == 2 and np.abs(xyz[:, 2]).max(initial=0.0) > 0.0:
        raise MeshError("2D MSH mesh has nonzero z coordinates")

    tags = np.array([resolve(p, "cell") for p in cellp], dtype=np.int64)
    if np.any((tags != FLUID) & (tags != SOLID)):
        raise MeshError("cell physical tag did not map to FLUID or SOLID")
    facets = np.asarray(faces, dtype=np.int64).reshape(len(faces), dim)
    markers = np.array([resolve(p, "facet") for p in facep], dtype=np.int64)
    if np.any(markers < GAMMA_F0):
        raise MeshError("facet physical tag mapped to a cell tag name")
    return Mesh(verts, cells, tags, facets, markers)


def load_mesh(path: str, physical_map: Optional[Dict[int, str]] = None) -> Mesh:
    """Load and validate a mesh from native text or MSH 2.2 format.

    Format is chosen by extension (.msh) or by a $MeshFormat sniff; MSH needs
    physical_map to translate integer physical groups to tag/marker names.
    """
    if not os.path.exists(path):
        raise MeshError("mesh file not found: %s" % path)
    with open(path) as fh:
        text = fh.read()
    is_msh = path.endswith(".msh") or text.lstrip().startswith("$MeshFormat")
    if is_msh:
        if physical_map is None:
            raise MeshError("MSH input requires a physical tag mapping")
        mesh = parse_msh(text, physical_map)
    else:
        mesh = parse_native(text)
    return validate_mesh(mesh)
