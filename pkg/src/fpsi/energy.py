"""Discrete energy bookkeeping.

All integrals reuse the geometric weights of the step that produced the
state (J~, F~, interface normal and area scaling at the extrapolated
displacement), so the monitor measures the energy the scheme actually sees,
not a reinterpolated one.  The stored energy splits the solid kinetic part
into skeleton and mixture contributions:

    1/2 rho_p |v_s|^2 + rho_f q.v_s + rho_f/(2 phi) |q|^2
        = 1/2 (1-phi) rho_s |v_s|^2 + 1/2 phi rho_f |v_s + q/phi|^2

Dissipation terms are instantaneous rates (Darcy, viscous, slip); the
elastic power is the rate of working of the effective stress; the penalty
defect integrates |(v_f - v_s - q).n| over the interface and measures how
strongly the normal-flux constraint is violated.
"""

from __future__ import annotations

from dataclasses import dataclass, fields as dc_fields
from typing import Dict

import numpy as np

from .assembly import (Geometry, Problem, _field_at_qp, _grads_on_cells,
                       _scalar_at_qp)
from .kinematics import fluid_rate_of_strain, green_lagrange, svk_stress


@dataclass
class EnergyReport:
    kinetic_fluid: float = 0.0
    kinetic_solid: float = 0.0
    kinetic_mixture: float = 0.0
    pressure_storage: float = 0.0
    viscous_dissipation: float = 0.0
    darcy_dissipation: float = 0.0
    bjs_dissipation: float = 0.0
    elastic_power: float = 0.0
    penalty_defect: float = 0.0

    @property
    def total(self) -> float:
        return (self.kinetic_fluid + self.kinetic_solid
                + self.kinetic_mixture + self.pressure_storage)

    def as_dict(self) -> Dict[str, float]:
        out = {f.name: getattr(self, f.name) for f in dc_fields(self)}
        out["total"] = self.total
        return out


def evaluate_energy(problem: Problem, fields: Dict[str, np.ndarray],
                    geo: Geometry, u_tilde: np.ndarray) -> EnergyReport:
    prm = problem.params
    d = problem.dim
    rep = EnergyReport()

    if problem.fluid is not None:
        sub = problem.fluid
        J = geo.fluid["J"]
        wJ = sub.w * J
        vf = fields["v_f"]
        vq = _field_at_qp(sub.val2, sub.nodes2, vf, d)
        rep.kinetic_fluid = 0.5 * prm.rho_f * float(
            np.einsum("cq,cqa,cqa->", wJ, vq, vq))
        gv = np.einsum("cnm,cqne->cqme", vf.reshape(-1, d)[sub.nodes2], sub.grad2)
        D = fluid_rate_of_strain(gv, geo.fluid["Finv"])
        rep.viscous_dissipation = 2.0 * prm.mu_f * float(
            np.einsum("cq,cqab,cqab->", wJ, D, D))

    if problem.solid is not None:
        sub = problem.solid
        J = geo.solid["J"]
        wJ = sub.w * J
        vs = fields["v_s"]
        qv = fields["q"]
        vsq = _field_at_qp(sub.val2, sub.nodes2, vs, d)
        qq = _field_at_qp(sub.val2, sub.nodes2, qv, d)
        rep.kinetic_solid = 0.5 * (1.0 - prm.phi) * prm.rho_s * float(
            np.einsum("cq,cqa,cqa->", wJ, vsq, vsq))
        mix = vsq + qq / prm.phi
        rep.kinetic_mixture = 0.5 * prm.phi * prm.rho_f * float(
            np.einsum("cq,cqa,cqa->", wJ, mix, mix))
        pdq = _scalar_at_qp(sub.val1, sub.nodes1, fields["p_d"])
        rep.pressure_storage = 0.5 * prm.s0 * float(np.einsum("cq,cq->", wJ, pdq * pdq))
        Kinv = prm.K_inv(d)
        rep.darcy_dissipation = float(
            np.einsum("cq,cqa,ab,cqb->", wJ, qq, Kinv, qq))
        # rate of elastic working: F~ S(E(u_k, u~)) : grad(v_s)
        Ft = geo.solid["F"]
        Fk = _grads_on_cells(sub, fields["u"], d) + np.eye(d)
        E = green_lagrange(Fk, Ft)
        S = svk_stress(E, prm.lam_s, prm.mu_s)
        FS = np.einsum("cqam,cqmn->cqan", Ft, S)
        gvs = np.einsum("cnm,cqne->cqme", vs.reshape(-1, d)[sub.nodes2], sub.grad2)
        rep.elastic_power = float(np.einsum("cq,cqae,cqae->", sub.w, FS, gvs))

    if problem.iface is not None:
        ftr = problem.iface.fluid
        strc = problem.iface.solid
        Js = geo.iface["Js"]
        n = geo.iface["n"]
        P = geo.iface["P"]
        w = ftr.w
        vfq = _field_at_qp(ftr.val2, ftr.nodes2, fields["v_f"], d)
        vsq = _field_at_qp(strc.val2, strc.nodes2, fields["v_s"], d)
        qq = _field_at_qp(strc.val2, strc.nodes2, fields["q"], d)
        rel = vfq - vsq
        M = np.einsum("fqam,mn,fqnb->fqab", P, prm.K_inv_sqrt(d), P)
        rep.bjs_dissipation = prm.gamma * float(
            np.einsum("fq,fqa,fqab,fqb->", w * Js, rel, M, rel))
        jump = np.einsum("fqa,fqa->fq", vfq - vsq - qq, n)
        rep.penalty_defect = float(np.einsum("fq,fq->", w * Js, np.abs(jump)))

    return rep


def dissipation_check(totals, tol_step: float):
    """Largest step-to-step increase of the stored energy vs a tolerance.

    Use on the part of the series after external forcing has stopped; returns
    (ok, worst_increase).
    """
    totals = np.asarray(totals, dtype=float)
    if totals.size < 2:
        return True, 0.0
    inc = np.diff(totals)
    worst = float(inc.max())
    return bool(worst <= tol_step), worst
