"""Semi-implicit BDF stepping with explicit geometry.

Each step k:
  1. take the geometry from the displacement at level k-1 and extrapolate the
     fluid and domain velocities from levels k-1, k-2 (first order for BDF1,
     second order for BDF2),
  2. assemble and solve the monolithic system for (v_f, v_s, q, p_f, p_d),
  3. extend the interface trace of v_s harmonically (Lame-type operator with
     element-volume stiffening) into the fluid to get the domain velocity w,
  4. update the displacement from the BDF identity  [du/dt]^k = w^k,
  5. reject the step if any element of the updated configuration inverts.

BDF2 takes its first step with BDF1 (no older history exists).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np

from .assembly import (Problem, StepInputs, _Triplets, _grads_on_cells, _kron_eye,
                       apply_dirichlet, assemble_system)
from .errors import FpsiError
from .kinematics import deformation_state
from .mesh import GAMMA_F0, GAMMA_OUT
from .solver import solve


@dataclass(frozen=True)
class Scheme:
    order: int
    a0: float
    a1: float
    a2: float
    e1: float
    e2: float


BDF1 = Scheme(1, 1.0, -1.0, 0.0, 1.0, 0.0)
BDF2 = Scheme(2, 1.5, -2.0, 0.5, 2.0, -1.0)


def scheme_for_step(order: int, k: int) -> Scheme:
    """BDF scheme at step k (1-based); BDF2 starts itself with one BDF1 step."""
    if order not in (1, 2):
        raise FpsiError("order must be 1 or 2, got %r" % order)
    if order == 2 and k >= 2:
        return BDF2
    return BDF1


def bdf_rate(sch: Scheme, dt: float, f0, f1, f2=None):
    """Discrete time derivative (a0 f^k + a1 f^(k-1) + a2 f^(k-2)) / dt."""
    out = sch.a0 * np.asarray(f0, dtype=float) + sch.a1 * np.asarray(f1, dtype=float)
    if sch.a2 != 0.0:
        out = out + sch.a2 * np.asarray(f2, dtype=float)
    return out / dt


def extrapolate(sch: Scheme, f1, f2):
    """Predicted value at level k from the two previous levels."""
    if sch.e2 == 0.0:
        return sch.e1 * np.asarray(f1, dtype=float)
    return sch.e1 * np.asarray(f1, dtype=float) + sch.e2 * np.asarray(f2, dtype=float)


def kinematic_update(sch: Scheme, dt: float, v, u1, u2=None):
    """Displacement satisfying the BDF identity [du/dt]^k = v."""
    out = dt * np.asarray(v, dtype=float) - sch.a1 * np.asarray(u1, dtype=float)
    if sch.a2 != 0.0:
        out = out - sch.a2 * np.asarray(u2, dtype=float)
    return out / sch.a0


# ---------------------------------------------------------------------------
# State
# ---------------------------------------------------------------------------

@dataclass
class State:
    """Solution at level k (`fields`) plus level k-1 (`prev`) for BDF2."""

    k: int
    t: float
    fields: Dict[str, np.ndarray]
    prev: Dict[str, np.ndarray]

    @classmethod
    def initial(cls, problem: Problem, fields: Optional[Dict[str, np.ndarray]] = None) -> "State":
        base = problem.zero_fields()
        if fields:
            for name, vec in fields.items():
                if name not in base:
                    raise FpsiError("unknown initial field %r" % name)
                if vec.shape != base[name].shape:
                    raise FpsiError("initial field %r has wrong size" % name)
                base[name] = np.asarray(vec, dtype=float).copy()
        return cls(k=0, t=0.0, fields=base, prev={n: v.copy() for n, v in base.items()})


@dataclass
class StepDiagnostics:
    scheme: Scheme
    residual: float
    refined: bool
    geo: object            # geometry at the extrapolated displacement
    u_tilde: np.ndarray


def _step_inputs(problem: Problem, state: State, sch: Scheme, dt: float) -> StepInputs:
    f1, f2 = state.fields, state.prev
    hist = {}
    for name in problem.layout.names:
        h = sch.a1 * f1[name]
        if sch.a2 != 0.0:
            h = h + sch.a2 * f2[name]
        hist[name] = h
    nu = problem.spaces["u"].num_dofs
    if problem.frozen_geometry:
        u_tilde = np.zeros(nu)
        u_impl_hist = np.zeros(nu)
        w_tilde = None
    else:
        # The displacement is never extrapolated past level k-1.  The elastic
        # stress is linearized about u_tilde, so only half the strain is
        # implicit; with the two-level predictor 2u1 - u2 the stiff elastic
        # limit amplifies by |z| = 1 + sqrt(2) per step regardless of dt.
        # With u_tilde = u1 the same limit is neutral and viscosity damps it.
        u_tilde = f1["u"].copy()
        u_impl_hist = -(sch.a1 * f1["u"] + sch.a2 * f2["u"]) / sch.a0
        w_tilde = extrapolate(sch, f1["w"], f2["w"])
    vf_tilde = extrapolate(sch, f1["v_f"], f2["v_f"]) if "v_f" in f1 else None
    return StepInputs(t=state.t + dt, dt=dt, a0=sch.a0, beta=dt / sch.a0,
                      u_tilde=u_tilde, u_impl_hist=u_impl_hist, hist=hist,
                      vf_tilde=vf_tilde, w_tilde=w_tilde)


# ---------------------------------------------------------------------------
# Mesh extension: harmonic-type lift of the interface velocity
# ---------------------------------------------------------------------------

def extension_stiffness(problem: Problem, geo, u_prev: np.ndarray):
    """Lame-type extension operator on the fluid velocity space.

    Element moduli stiffen as cells compress: mu_m = mu_s |cell|^-1.2 with
    the cell volume taken in the configuration u_prev, lambda_m = 16 mu_m.
    """
    sub = problem.fluid
    prm = problem.params
    d = problem.dim
    gu = _grads_on_cells(sub, u_prev, d)
    F_prev = gu + np.eye(d)
    J_prev = np.linalg.det(F_prev)
    vol = np.einsum("cq,cq->c", sub.w, J_prev)
    mu_m = prm.mu_s * vol ** -1.2
    lam_m = 16.0 * mu_m

    J = geo.fluid["J"]
    Finv = geo.fluid["Finv"]
    wJ = sub.w * J
    G = np.einsum("cqne,cqep->cqnp", sub.grad2, Finv)
    nloc = G.shape[2]

    wmu = wJ * mu_m[:, None]
    wlam = wJ * lam_m[:, None]
    A1 = np.einsum("cq,cqid,cqjd->cij", wmu, G, G)
    A2 = np.einsum("cq,cqja,cqib->ciajb", wmu, G, G)
    Atr = np.einsum("cq,cqia,cqjb->ciajb", wlam, G, G)
    elem = _kron_eye(A1, d) + (A2 + Atr).reshape(-1, nloc * d, nloc * d)

    T = _Triplets()
    T.add(sub.vdofs, sub.vdofs, elem)
    return T.tocsr(problem.spaces["v_f"].num_dofs)


def solve_extension(problem: Problem, geo, v_s: np.ndarray, u_prev: np.ndarray) -> np.ndarray:
    """Domain velocity on the fluid side: trace of v_s on the interface,
    zero on the outer fluid boundary, extension operator in between."""
    vf_space = problem.spaces["v_f"]
    d = problem.dim
    A = extension_stiffness(problem, geo, u_prev)
    b = np.zeros(vf_space.num_dofs)

    # Interface trace: solid and fluid spaces share exactly the interface
    # vertices/edges, so the entity map carries the trace without lookups.
    table: Dict[int, float] = {}
    s2f_src, s2f_dst = problem.map_vs_to_vf
    vs_nodes = v_s.reshape(-1, d)
    for ns, nf in zip(s2f_src, s2f_dst):
        for a in range(d):
            table[int(nf) * d + a] = float(vs_nodes[ns, a])
    # Outer fluid boundary is clamped; corners shared with the interface are
    # clamped too (the solid is clamped there, so the trace is zero anyway).
    outer = vf_space.nodes_on_markers((GAMMA_F0, GAMMA_OUT))
    for n in outer:
        for a in range(d):
            table[int(n) * d + a] = 0.0
    dofs = np.array(sorted(table), dtype=np.int64)
    vals = np.array([table[int(i)] for i in dofs])
    A, b = apply_dirichlet(A, b, dofs, vals)
    x, _ = solve(A, b, rtol=problem.solver_rtol)
    return x


def domain_velocity(problem: Problem, v_s: Optional[np.ndarray],
                    w_f: Optional[np.ndarray]) -> np.ndarray:
    """Assemble the global domain velocity from solid velocity and extension."""
    d = problem.dim
    w = np.zeros(problem.spaces["u"].num_dofs).reshape(-1, d)
    if w_f is not None:
        src, dst = problem.map_vf_to_u
        w[dst] = w_f.reshape(-1, d)[src]
    if v_s is not None:
        src, dst = problem.map_vs_to_u
        w[dst] = v_s.reshape(-1, d)[src]
    return w.ravel()


def check_deformation(problem: Problem, u: np.ndarray) -> float:
    """Raise DegenerateDeformationError if the configuration inverts."""
    d = problem.dim
    jmin = np.inf
    for sub in (problem.fluid, problem.solid):
        if sub is None:
            continue
        gu = _grads_on_cells(sub, u, d)
        _, J, _, _ = deformation_state(gu, cell_ids=sub.cells)
        jmin = min(jmin, float(J.min()))
    return jmin


# ---------------------------------------------------------------------------
# Stepping
# ---------------------------------------------------------------------------

def advance_step(problem: Problem, state: State, dt: float, order: int,
                 dump_matrix: Optional[str] = None):
    """One semi-implicit step; returns (new_state, diagnostics)."""
    k = state.k + 1
    sch = scheme_for_step(order, k)
    inp = _step_inputs(problem, state, sch, dt)
    system, geo = assemble_system(problem, inp, dump_matrix=dump_matrix)
    x, rep = solve(system.A, system.b, rtol=problem.solver_rtol)
    fields = system.layout.split(x)

    nu = problem.spaces["u"].num_dofs
    if problem.frozen_geometry or problem.solid is None:
        u_new = np.zeros(nu)
        w_new = np.zeros(nu)
    else:
        w_f = None
        if problem.fluid is not None:
            w_f = solve_extension(problem, geo, fields["v_s"], state.fields["u"])
        w_new = domain_velocity(problem, fields.get("v_s"), w_f)
        u_new = kinematic_update(sch, dt, w_new, state.fields["u"], state.prev["u"])
        check_deformation(problem, u_new)

    fields["u"] = u_new
    fields["w"] = w_new
    new_state = State(k=k, t=state.t + dt, fields=fields, prev=state.fields)
    diag = StepDiagnostics(scheme=sch, residual=rep.residual, refined=rep.refined,
                           geo=geo, u_tilde=inp.u_tilde)
    return new_state, diag


def run_transient(problem: Problem, dt: float, order: int, n_steps: int,
                  callback: Optional[Callable] = None,
                  state: Optional[State] = None,
                  dump_matrix_first: Optional[str] = None) -> State:
    if state is None:
        state = State.initial(problem)
    for i in range(n_steps):
        dump = dump_matrix_first if (i == 0 and dump_matrix_first) else None
        state, diag = advance_step(problem, state, dt, order, dump_matrix=dump)
        if callback is not None:
            callback(state, diag)
    return state


def solve_steady(problem: Problem, t: float = 0.0):
    """One steady solve (no mass terms, beta = 1, undeformed geometry)."""
    inp = StepInputs.steady(problem, t)
    system, _ = assemble_system(problem, inp)
    x, rep = solve(system.A, system.b, rtol=problem.solver_rtol)
    return system.layout.split(x), rep


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------

def save_checkpoint(path: str, state: State, meta: Optional[dict] = None) -> None:
    arrays = {"cur_" + n: v for n, v in state.fields.items()}
    arrays.update({"prev_" + n: v for n, v in state.prev.items()})
    arrays["step_index"] = np.int64(state.k)
    arrays["time"] = np.float64(state.t)
    arrays["meta"] = np.bytes_(json.dumps(meta or {}).encode())
    np.savez(path, **arrays)


def load_checkpoint(path: str, problem: Problem):
    """Restore a State; field sizes must match the problem."""
    data = np.load(path, allow_pickle=False)
    want = problem.zero_fields()
    fields = {}
    prev = {}
    for name, ref in want.items():
        for prefix, target in (("cur_", fields), ("prev_", prev)):
            key = prefix + name
            if key not in data:
                raise FpsiError("checkpoint is missing field %r" % key)
            vec = np.asarray(data[key], dtype=float)
            if vec.shape != ref.shape:
                raise FpsiError("checkpoint field %r has size %d, expected %d"
                                % (key, vec.size, ref.size))
            target[name] = vec
    meta = json.loads(bytes(data["meta"]).decode()) if "meta" in data else {}
    state = State(k=int(data["step_index"]), t=float(data["time"]),
                  fields=fields, prev=prev)
    return state, meta
