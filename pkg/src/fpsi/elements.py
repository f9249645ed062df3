"""Reference simplex elements (P1/P2 Lagrange) and quadrature rules.

The reference simplex has vertices at the origin and the unit points of each
axis (area 1/2 in 2D, volume 1/6 in 3D).  P2 nodes are the vertices followed
by edge midpoints in the fixed local edge order below, which every function
space relies on when matching degrees of freedom across subdomains.

Quadrature is a conical (Duffy) product of Gauss-Legendre and Gauss-Jacobi
rules, exact to any requested polynomial degree.  Facet rules are simplex
rules one dimension down, parametrized over the unit interval / triangle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

LOCAL_EDGES = {
    2: ((0, 1), (0, 2), (1, 2)),
    3: ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)),
}

_SIMPLEX_MEASURE = {1: 1.0, 2: 0.5, 3: 1.0 / 6.0}


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray   # (nq, dim)
    weights: np.ndarray  # (nq,)
    degree: int          # exact for polynomials up to this total degree

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def _gauss01(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre on [0,1]."""
    x, w = roots_legendre(n)
    return (x + 1.0) / 2.0, w / 2.0


def _jacobi01(n: int, alpha: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Jacobi on [0,1] with weight (1-t)^alpha."""
    x, w = roots_jacobi(n, alpha, 0.0)
    return (x + 1.0) / 2.0, w / 2.0 ** (alpha + 1)


def simplex_quadrature(dim: int, degree: int) -> QuadratureRule:
    """Conical-product rule on the unit simplex, exact up to `degree`."""
    if degree < 0:
        raise ValueError("quadrature degree must be nonnegative")
    n = max(1, (degree + 2) // 2)  # 2n-1 >= degree
    if dim == 1:
        x, w = _gauss01(n)
        return QuadratureRule(x[:, None].copy(), w.copy(), degree)
    if dim == 2:
        # x = xi*(1-eta), y = eta; Jacobian (1-eta) absorbed by the Jacobi weight.
        xi, wxi = _gauss01(n)
        eta, weta = _jacobi01(n, 1)
        X = np.outer(1.0 - eta, xi).ravel()
        Y = np.repeat(eta, n)
        W = np.outer(weta, wxi).ravel()
        return QuadratureRule(np.column_stack([X, Y]), W, degree)
    if dim == 3:
        xi, wxi = _gauss01(n)
        eta, weta = _jacobi01(n, 1)
        zeta, wz = _jacobi01(n, 2)
        pts = []
        wts = []
        for c, wc in zip(zeta, wz):
            for b, wb in zip(eta, weta):
                for a, wa in zip(xi, wxi):
                    pts.append((a * (1.0 - b) * (1.0 - c), b * (1.0 - c), c))
                    wts.append(wa * wb * wc)
        return QuadratureRule(np.asarray(pts), np.asarray(wts), degree)
    raise ValueError("unsupported dimension %d" % dim)


def facet_quadrature(cell_dim: int, degree: int) -> QuadratureRule:
    """Rule on the reference facet of a `cell_dim`-simplex (one dim lower)."""
    return simplex_quadrature(cell_dim - 1, degree)


def _barycentric(dim: int, points: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lam = np.empty((pts.shape[0], dim + 1))
    lam[:, 0] = 1.0 - pts.sum(axis=1)
    lam[:, 1:] = pts
    return lam


def _check_inside(dim: int, points: np.ndarray, tol: float = 1e-12) -> None:
    lam = _barycentric(dim, points)
    if lam.min() < -tol:
        bad = np.unravel_index(np.argmin(lam), lam.shape)[0]
        raise ValueError(
            "point %s lies outside the closed reference simplex" % (np.atleast_2d(points)[bad],)
        )


@dataclass(frozen=True)
class ReferenceElement:
    """Scalar Lagrange element on the reference simplex."""

    dim: int
    degree: int
    nodes: np.ndarray  # (n_nodes, dim)

    @property
    def num_nodes(self) -> int:
        return self.nodes.shape[0]

    def tabulate(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Values (nq, nb) and gradients (nq, nb, dim) at the given points."""
        return eval_basis(self.dim, self.degree, points)


def reference_element(dim: int, degree: int) -> ReferenceElement:
    if dim not in (2, 3):
        raise ValueError("dimension must be 2 or 3")
    if degree not in (1, 2):
        raise ValueError("only P1 and P2 elements are provided")
    verts = np.vstack([np.zeros(dim), np.eye(dim)])
    if degree == 1:
        nodes = verts
    else:
        mids = np.array([(verts[a] + verts[b]) / 2.0 for a, b in LOCAL_EDGES[dim]])
        nodes = np.vstack([verts, mids])
    return ReferenceElement(dim, degree, nodes)


def eval_basis(dim: int, degree: int, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Evaluate P1/P2 basis values and gradients at reference points.

    Rejects points outside the closed simplex (tolerance 1e-12); quadrature
    and facet-trace callers only ever ask for interior/boundary points.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != dim:
        raise ValueError("points have dimension %d, element has %d" % (pts.shape[1], dim))
    _check_inside(dim, pts)
    lam = _barycentric(dim, pts)                      # (nq, dim+1)
    dlam = np.zeros((dim + 1, dim))
    dlam[0, :] = -1.0
    dlam[1:, :] = np.eye(dim)

    if degree == 1:
        vals = lam.copy()
        grads = np.broadcast_to(dlam, (pts.shape[0], dim + 1, dim)).copy()
        return vals, grads
    if degree != 2:
        raise ValueError("only P1 and P2 elements are provided")

    edges = LOCAL_EDGES[dim]
    nb = (dim + 1) + len(edges)
    nq = pts.shape[0]
    vals = np.empty((nq, nb))
    grads = np.empty((nq, nb, dim))
    for i in range(dim + 1):
        vals[:, i] = lam[:, i] * (2.0 * lam[:, i] - 1.0)
        grads[:, i, :] = (4.0 * lam[:, i] - 1.0)[:, None] * dlam[i]
    for e, (a, b) in enumerate(edges):
        j = dim + 1 + e
        vals[:, j] = 4.0 * lam[:, a] * lam[:, b]
        grads[:, j, :] = 4.0 * (lam[:, a][:, None] * dlam[b] + lam[:, b][:, None] * dlam[a])
    return vals, grads


def simplex_measure(dim: int) -> float:
    return _SIMPLEX_MEASURE[dim]
