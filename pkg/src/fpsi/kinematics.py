"""Deformation kinematics and material parameters (mm-g-s units).

All integrals run on the reference mesh, so the only geometric inputs are
displacement gradients taken in reference coordinates.  Every function here
broadcasts over leading axes: grad_u may be (d,d) or (ncells, nq, d, d).

Conventions (all discrete-form normative):
    F = I + grad u,  J = det F > 0
    E(u1,u2) = 1/2 {F(u1)^T F(u2) - I}_s,   {A}_s = (A + A^T)/2
    S(E) = lam_s tr(E) I + 2 mu_s E                     (St. Venant-Kirchhoff)
    D_u(v) = {grad v F(u)^-1}_s                         (rate of strain)
    sigma_f = -p I + 2 mu_f D                           (fluid Cauchy stress)
    n = F^-T n_ref / |F^-T n_ref|,  Js = J |F^-T n_ref| (Nanson pushforward)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from .errors import DegenerateDeformationError


def _eye_like(A: np.ndarray) -> np.ndarray:
    d = A.shape[-1]
    return np.broadcast_to(np.eye(d), A.shape)


def deformation_state(grad_u: np.ndarray, j_min: float = 1e-10,
                      cell_ids: Optional[np.ndarray] = None):
    """F, J, F^-1, F^-T from a displacement gradient.

    Rejects J <= j_min; when the caller passes per-entry cell ids the error
    reports which cell degenerated.
    """
    grad_u = np.asarray(grad_u, dtype=float)
    F = grad_u + _eye_like(grad_u)
    J = np.linalg.det(F)
    if np.any(J <= j_min):
        flat = np.argmin(J)
        idx = np.unravel_index(flat, J.shape) if J.ndim else ()
        cell = None
        if cell_ids is not None and len(idx) > 0:
            cell = int(np.asarray(cell_ids)[idx[0]])
        raise DegenerateDeformationError(
            "deformation degenerate: det F = %g at %s (threshold %g)"
            % (float(np.min(J)), "cell %s" % cell if cell is not None else str(idx), j_min),
            cell=cell, value=float(np.min(J)),
        )
    Finv = np.linalg.inv(F)
    FinvT = np.swapaxes(Finv, -1, -2)
    return F, J, Finv, FinvT


def green_lagrange(F1: np.ndarray, F2: np.ndarray) -> np.ndarray:
    """Two-field Green-Lagrange strain 1/2 {F1^T F2 - I}_s.

    Bilinear in the gradients; F1 = F2 = F recovers 1/2 (F^T F - I).
    """
    F1 = np.asarray(F1, dtype=float)
    F2 = np.asarray(F2, dtype=float)
    M = np.swapaxes(F1, -1, -2) @ F2
    return 0.25 * (M + np.swapaxes(M, -1, -2)) - 0.5 * _eye_like(M)


def svk_stress(E: np.ndarray, lam_s: float, mu_s: float) -> np.ndarray:
    """Second Piola-Kirchhoff stress of the St. Venant-Kirchhoff law."""
    E = np.asarray(E, dtype=float)
    tr = np.trace(E, axis1=-2, axis2=-1)
    return lam_s * tr[..., None, None] * _eye_like(E) + 2.0 * mu_s * E


def fluid_rate_of_strain(grad_v: np.ndarray, Finv: np.ndarray) -> np.ndarray:
    """D_u(v) = {grad v F^-1}_s, the ALE rate-of-strain tensor."""
    M = np.asarray(grad_v, dtype=float) @ Finv
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def pushforward_normal(F: np.ndarray, n_ref: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Deformed unit normal and area scaling Js = J |F^-T n_ref| (Nanson)."""
    F = np.asarray(F, dtype=float)
    n_ref = np.asarray(n_ref, dtype=float)
    J = np.linalg.det(F)
    FinvT = np.swapaxes(np.linalg.inv(F), -1, -2)
    v = np.einsum("...ij,...j->...i", FinvT, n_ref)
    mag = np.linalg.norm(v, axis=-1)
    n = v / mag[..., None]
    return n, J * mag


def mixture_density(rho_s: float, rho_f: float, phi: float) -> float:
    """rho_p = (1 - phi) rho_s + phi rho_f."""
    return (1.0 - phi) * rho_s + phi * rho_f


def lame_from_E_nu(E: float, nu: float) -> Tuple[float, float]:
    """(lam_s, mu_s) from Young's modulus and Poisson ratio."""
    if E <= 0.0:
        raise ValueError("Young's modulus must be positive, got %g" % E)
    if not (-1.0 < nu < 0.5):
        raise ValueError("Poisson ratio must lie in (-1, 0.5), got %g" % nu)
    mu = E / (2.0 * (1.0 + nu))
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    return lam, mu


def inv_sqrt_spd(K: np.ndarray) -> np.ndarray:
    """K^(-1/2) of an SPD matrix via eigendecomposition."""
    w, V = np.linalg.eigh(np.asarray(K, dtype=float))
    if np.any(w <= 0.0):
        raise ValueError("permeability matrix is not positive definite")
    return (V * (1.0 / np.sqrt(w))) @ V.T


@dataclass
class MaterialParams:
    """Physical parameters of the coupled problem (mm-g-s units).

    K is the permeability, either a scalar (isotropic) or an SPD (d,d)
    matrix; the Darcy and interface coefficients use K^-1 and K^-1/2 exactly
    as they appear in the discrete forms.
    """

    rho_f: float      # fluid density, g/mm^3
    rho_s: float      # skeleton density, g/mm^3
    mu_f: float       # dynamic viscosity, g/(mm s)
    lam_s: float      # Lame lambda, g/(mm s^2)
    mu_s: float       # Lame mu, g/(mm s^2)
    phi: float        # porosity
    s0: float         # storage coefficient, mm s^2 / g
    K: Union[float, np.ndarray]   # permeability, mm^2
    gamma: float = 1.0            # interface slip coefficient

    def __post_init__(self):
        for name in ("rho_f", "rho_s", "mu_f", "mu_s", "s0"):
            if getattr(self, name) <= 0.0:
                raise ValueError("%s must be positive" % name)
        if self.lam_s < 0.0:
            raise ValueError("lam_s must be nonnegative")
        if not 0.0 < self.phi < 1.0:
            raise ValueError("phi must lie in (0, 1)")
        if self.gamma < 0.0:
            raise ValueError("gamma must be nonnegative")
        if np.isscalar(self.K):
            if self.K <= 0.0:
                raise ValueError("K must be positive")
        else:
            self.K = np.asarray(self.K, dtype=float)
            if not np.allclose(self.K, self.K.T):
                raise ValueError("permeability matrix must be symmetric")
            if np.any(np.linalg.eigvalsh(self.K) <= 0.0):
                raise ValueError("permeability matrix must be positive definite")

    @property
    def rho_p(self) -> float:
        return mixture_density(self.rho_s, self.rho_f, self.phi)

    def K_inv(self, dim: int) -> np.ndarray:
        if np.isscalar(self.K):
            return np.eye(dim) / self.K
        return np.linalg.inv(self.K)

    def K_inv_sqrt(self, dim: int) -> np.ndarray:
        if np.isscalar(self.K):
            return np.eye(dim) / np.sqrt(self.K)
        return inv_sqrt_spd(self.K)
