"""Function spaces: DOF layout, transfer, interpolation and point evaluation."""

import numpy as np
import pytest

from fpsi.errors import AssemblyError
from fpsi.mesh import FLUID, GAMMA_F0, GAMMA_FS, GAMMA_S0, SOLID
from fpsi.scenarios import unit_square_mesh
from fpsi.spaces import (build_space, error_L2, eval_at_point, interpolate,
                         locate_cell, norm_L2, transfer_nodes)
from tests.test_mesh import two_triangle_mesh


# ---------------------------------------------------------------------------
# DOF counts and layout
# ---------------------------------------------------------------------------

def test_dof_counts_single_triangle():
    mesh = two_triangle_mesh((FLUID, SOLID))
    p1 = build_space(mesh, 1, rank=0, tag=FLUID)
    assert p1.num_scalar_nodes == 3 and p1.num_dofs == 3
    p2v = build_space(mesh, 2, rank=1, tag=FLUID)
    assert p2v.num_scalar_nodes == 6 and p2v.num_dofs == 12


def test_dof_counts_square():
    mesh = two_triangle_mesh()
    # 4 vertices + 5 edges
    p2 = build_space(mesh, 2, rank=0)
    assert p2.num_scalar_nodes == 9
    n = 3
    mesh = unit_square_mesh(n)
    p1 = build_space(mesh, 1)
    assert p1.num_scalar_nodes == (n + 1) ** 2
    p2 = build_space(mesh, 2, rank=1)
    edges = n * n + 2 * n * (n + 1)              # diagonals + axis-aligned
    assert p2.num_scalar_nodes == (n + 1) ** 2 + edges
    assert p2.num_dofs == 2 * p2.num_scalar_nodes


def test_vector_dofs_interleave():
    mesh = two_triangle_mesh()
    v = build_space(mesh, 1, rank=1)
    assert list(v.dofs_of_nodes([2])) == [4, 5]
    assert list(v.dofs_of_nodes([0, 2], comp=1)) == [1, 5]
    dm = v.cell_dofs()
    assert dm.shape == (2, 6)
    assert list(dm[0]) == [0, 1, 2, 3, 4, 5]


def test_empty_subdomain_rejected():
    mesh = two_triangle_mesh((FLUID, FLUID))
    with pytest.raises(AssemblyError, match="empty subdomain"):
        build_space(mesh, 1, tag=SOLID)
    with pytest.raises(ValueError):
        build_space(mesh, 3)
    with pytest.raises(ValueError):
        build_space(mesh, 1, rank=2)


def test_nodes_on_markers_picks_up_edge_nodes():
    mesh = two_triangle_mesh((FLUID, SOLID))
    vf = build_space(mesh, 2, rank=1, tag=FLUID)
    iface = vf.nodes_on_markers([GAMMA_FS])
    # diagonal facet (0, 2): endpoints + its midpoint node
    assert len(iface) == 3
    coords = vf.node_coords[iface]
    assert np.allclose(coords[:, 0], coords[:, 1])
    p1 = build_space(mesh, 1, tag=FLUID)
    assert len(p1.nodes_on_markers([GAMMA_FS])) == 2
    # marker queries act on facet closures: the two solid-wall facets end at
    # the interface corners, which the fluid space also owns
    corners = p1.nodes_on_markers([GAMMA_S0])
    assert np.allclose(sorted(p1.node_coords[corners][:, 0]), [0.0, 1.0])


# ---------------------------------------------------------------------------
# transfer between overlapping spaces
# ---------------------------------------------------------------------------

def test_transfer_fluid_to_global():
    mesh = two_triangle_mesh((FLUID, SOLID))
    vs = build_space(mesh, 2, rank=1, tag=SOLID)
    whole = build_space(mesh, 2, rank=1, tag=None)
    src, dst = transfer_nodes(vs, whole)
    assert len(src) == vs.num_scalar_nodes       # solid is a subset of the whole mesh
    assert np.allclose(vs.node_coords[src], whole.node_coords[dst])
    with pytest.raises(AssemblyError, match="different degree"):
        transfer_nodes(build_space(mesh, 1, tag=FLUID), whole)


def test_transfer_across_interface():
    mesh = two_triangle_mesh((FLUID, SOLID))
    vf = build_space(mesh, 2, tag=FLUID)
    vs = build_space(mesh, 2, tag=SOLID)
    src, dst = transfer_nodes(vs, vf)
    # only the interface entities are shared: 2 vertices + 1 edge midpoint
    assert len(src) == 3
    assert np.allclose(vs.node_coords[src], vf.node_coords[dst])


# ---------------------------------------------------------------------------
# interpolation, norms, point evaluation
# ---------------------------------------------------------------------------

def test_interpolate_exactness():
    mesh = unit_square_mesh(3)
    p2 = build_space(mesh, 2)

    def quad(X):
        return X[:, 0] ** 2 + 2.0 * X[:, 0] * X[:, 1] - X[:, 1]

    vec = interpolate(p2, quad)
    assert error_L2(p2, vec, quad) < 1e-13

    v2 = build_space(mesh, 2, rank=1)

    def vfield(X):
        return np.stack([X[:, 0] * X[:, 1], X[:, 1] ** 2], axis=1)

    vvec = interpolate(v2, vfield)
    assert error_L2(v2, vvec, vfield) < 1e-13
    # per-point (non-batched) callables work too
    vvec2 = interpolate(v2, lambda x: [x[0] * x[1], x[1] ** 2])
    assert np.allclose(vvec, vvec2)


def test_p1_interpolation_error_scales():
    def f(X):
        return np.sin(np.pi * X[:, 0]) * np.sin(np.pi * X[:, 1])

    errs = []
    for n in (4, 8, 16):
        sp = build_space(unit_square_mesh(n), 1)
        errs.append(error_L2(sp, interpolate(sp, f), f))
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(rates > 1.8)


def test_norm_of_constant():
    sp = build_space(unit_square_mesh(2), 1)
    one = np.ones(sp.num_dofs)
    assert norm_L2(sp, one) == pytest.approx(1.0, rel=1e-12)


def test_locate_and_eval():
    mesh = unit_square_mesh(4)
    p2 = build_space(mesh, 2)
    vec = interpolate(p2, lambda X: X[:, 0] ** 2 - X[:, 1])
    for pt in ([0.3, 0.7], [0.0, 0.0], [1.0, 1.0], [0.25, 0.25]):
        got = eval_at_point(p2, vec, np.array(pt))
        assert got == pytest.approx(pt[0] ** 2 - pt[1], abs=1e-12)
    with pytest.raises(ValueError, match="outside"):
        locate_cell(p2, np.array([2.0, 0.5]))

    v2 = build_space(mesh, 2, rank=1)
    vvec = interpolate(v2, lambda X: np.stack([X[:, 1], -X[:, 0]], axis=1))
    out = eval_at_point(v2, vvec, np.array([0.5, 0.25]))
    assert np.allclose(out, [0.25, -0.5], atol=1e-12)


def test_eval_reuses_given_cell():
    mesh = unit_square_mesh(2)
    p1 = build_space(mesh, 1)
    vec = interpolate(p1, lambda X: X[:, 0])
    idx = locate_cell(p1, np.array([0.5, 0.5]))
    assert eval_at_point(p1, vec, np.array([0.5, 0.5]), cell_index=idx) == pytest.approx(0.5)
