"""Direct solver wrapper: exactness, residual guard, input validation."""

import numpy as np
import pytest
from scipy import sparse

from fpsi.errors import SolverError
from fpsi.solver import solve


def test_solves_small_system_exactly():
    A = sparse.csr_matrix(np.array([[4.0, 1.0], [1.0, 3.0]]))
    b = np.array([1.0, 2.0])
    x, rep = solve(A, b)
    assert np.allclose(A @ x, b, atol=1e-14)
    assert rep.n == 2 and rep.residual < 1e-12


def test_rejects_non_square():
    A = sparse.csr_matrix(np.ones((2, 3)))
    with pytest.raises(SolverError, match="not square"):
        solve(A, np.ones(2))


def test_rejects_size_mismatch():
    A = sparse.identity(3, format="csr")
    with pytest.raises(SolverError, match="mismatch"):
        solve(A, np.ones(2))


def test_rejects_non_finite_inputs():
    A = sparse.identity(2, format="csr")
    with pytest.raises(SolverError, match="right-hand side"):
        solve(A, np.array([1.0, np.nan]))
    B = sparse.csr_matrix(np.array([[1.0, 0.0], [0.0, np.inf]]))
    with pytest.raises(SolverError, match="matrix contains"):
        solve(B, np.ones(2))


def test_singular_matrix_raises():
    A = sparse.csr_matrix(np.array([[1.0, 2.0], [2.0, 4.0]]))
    with pytest.raises(SolverError):
        solve(A, np.ones(2))


def test_unreachable_tolerance_reports_residual():
    # ill conditioned, so the residual is nonzero even after refinement
    from scipy.linalg import hilbert
    A = sparse.csr_matrix(hilbert(12))
    with pytest.raises(SolverError) as exc:
        solve(A, np.ones(12), rtol=1e-300)
    assert exc.value.residual is not None and exc.value.residual > 0.0
