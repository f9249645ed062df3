"""Command-line front end.

    fpsi run <config>          transient scenario or MMS study from a config file
    fpsi mms <case> ...        convergence study (stokes, biot, time)
    fpsi check-mesh <path>     load and validate a mesh file
    fpsi version

Exit codes: 0 success, 1 configuration error, 2 runtime/solver error.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Optional

import numpy as np

from . import __version__
from .config import (RunConfig, default_config_text, load_config, material_params,
                     parse_physical_map)
from .energy import evaluate_energy
from .errors import ConfigError, FpsiError
from .mesh import TAG_TO_NAME, MARKER_TO_NAME, load_mesh
from .mms import biot_trig, stokes_polynomial, stokes_trig, unsteady_fluid
from .reporting import TimeSeries, convergence_table
from .scenarios import (channel_mesh, channel_problem, mms_spatial_study,
                        mms_temporal_study, solve_mms_steady)
from .spaces import eval_at_point, locate_cell
from .stepping import State, advance_step, save_checkpoint
from .vtk_io import write_state


def _scenario_mesh(cfg: RunConfig):
    src = cfg.mesh_source.strip()
    if src.startswith("channel:"):
        try:
            n = int(src.split(":", 1)[1])
        except ValueError:
            raise ConfigError("bad channel resolution in mesh source %r" % src)
        return channel_mesh(n)
    if src.startswith("square:"):
        raise ConfigError("square meshes are for MMS scenarios; "
                          "channel scenarios need 'channel:<n>' or a mesh file")
    return load_mesh(src, parse_physical_map(cfg.msh_physical_map))


def run_scenario(cfg: RunConfig, quiet: bool = False) -> None:
    if cfg.scenario in ("pressure_wave_2d", "decay"):
        _run_transient_scenario(cfg, quiet)
    else:
        _run_mms_scenario(cfg, quiet)


def _run_transient_scenario(cfg: RunConfig, quiet: bool) -> None:
    mesh = _scenario_mesh(cfg)
    params = material_params(cfg)
    penalty_const = cfg.penalty_value if cfg.penalty_rule == "constant" else None
    p_ext = cfg.p_ext if cfg.scenario == "pressure_wave_2d" else 0.0
    problem = channel_problem(mesh, params, p_ext=p_ext, t_pulse=cfg.t_pulse,
                              sign_pext=cfg.sign_pext,
                              penalty_scale=cfg.penalty_scale,
                              penalty_const=penalty_const,
                              quad_degree=cfg.quad_degree)
    problem.solver_rtol = cfg.residual_tol
    os.makedirs(cfg.output_dir, exist_ok=True)

    probe = np.array([cfg.probe_x, cfg.probe_y])
    uspace = problem.spaces["u"]
    probe_cell = locate_cell(uspace, probe)
    series = TimeSeries()
    state = State.initial(problem)
    n_steps = int(round(cfg.t_end / cfg.dt))

    def snapshot(k):
        write_state(os.path.join(cfg.output_dir, "step_%06d.vtk" % k),
                    problem, state.fields, title="t=%.6e" % state.t)

    if cfg.output_every > 0:
        snapshot(0)
    for k in range(1, n_steps + 1):
        dump = cfg.dump_matrix if (k == 1 and cfg.dump_matrix) else None
        try:
            state, diag = advance_step(problem, state, cfg.dt, cfg.order,
                                       dump_matrix=dump)
        except FpsiError as exc:
            raise FpsiError("step %d failed: %s" % (k, exc))
        rep = evaluate_energy(problem, state.fields, diag.geo, diag.u_tilde)
        up = eval_at_point(uspace, state.fields["u"], probe, cell_index=probe_cell)
        series.append(state.t, float(up[0]), float(up[1]), rep)
        if cfg.output_every > 0 and k % cfg.output_every == 0:
            snapshot(k)
        if not quiet and (k % max(1, n_steps // 10) == 0 or k == n_steps):
            print("step %d/%d  t=%.4e  E=%.6e" % (k, n_steps, state.t, rep.total))

    series.save(os.path.join(cfg.output_dir, "timeseries.csv"))
    if cfg.checkpoint:
        path = cfg.checkpoint
        if not os.path.isabs(path):
            path = os.path.join(cfg.output_dir, path)
        save_checkpoint(path, state, meta={"scenario": cfg.scenario,
                                           "dt": cfg.dt, "order": cfg.order})
    if not quiet:
        print("wrote %s" % os.path.join(cfg.output_dir, "timeseries.csv"))


def stokes_report(levels: int = 4, quad_degree: int = 6) -> str:
    exact = solve_mms_steady(stokes_polynomial(), 8, quad_degree)
    lines = ["Stokes, solution inside the FE space (n=8):"]
    lines.append("  v_f error %.3e   p_f error %.3e" % (exact["v_f"], exact["p_f"]))
    lines.append("")
    ns = [4 * 2 ** i for i in range(levels)]
    hs, errors = mms_spatial_study(stokes_trig(), ns, quad_degree)
    lines.append("Stokes, trig solution, velocity:")
    lines.append(convergence_table(hs, errors["v_f"]))
    lines.append("")
    lines.append("Stokes, trig solution, pressure:")
    lines.append(convergence_table(hs, errors["p_f"]))
    return "\n".join(lines)


def biot_report(levels: int = 3, quad_degree: int = 6) -> str:
    ns = [4 * 2 ** i for i in range(levels)]
    hs, errors = mms_spatial_study(biot_trig(), ns, quad_degree)
    lines = []
    for field, label in (("v_s", "displacement"), ("q", "filtration flux"),
                         ("p_d", "pore pressure")):
        lines.append("Poroelastic system, %s:" % label)
        lines.append(convergence_table(hs, errors[field]))
        lines.append("")
    return "\n".join(lines).rstrip()


def time_report(levels: int = 4, orders=(1, 2)) -> str:
    case = unsteady_fluid()
    lines = []
    for order in orders:
        dts, errors = mms_temporal_study(case, order, levels=levels)
        lines.append("BDF%d temporal convergence (velocity L2 at T):" % order)
        lines.append(convergence_table(dts, errors, step_label="dt"))
        lines.append("")
    return "\n".join(lines).rstrip()


def _run_mms_scenario(cfg: RunConfig, quiet: bool) -> None:
    os.makedirs(cfg.output_dir, exist_ok=True)
    if cfg.scenario == "mms_stokes":
        text = stokes_report(quad_degree=cfg.quad_degree)
    elif cfg.scenario == "mms_biot":
        text = biot_report(quad_degree=cfg.quad_degree)
    else:
        text = time_report(orders=(cfg.order,))
    path = os.path.join(cfg.output_dir, "convergence.txt")
    with open(path, "w") as fh:
        fh.write(text + "\n")
    if not quiet:
        print(text)
        print("wrote %s" % path)


def cmd_mms(args) -> None:
    if args.case == "stokes":
        text = stokes_report(levels=args.levels)
    elif args.case == "biot":
        text = biot_report(levels=args.levels)
    else:
        orders = (1, 2) if args.order == 0 else (args.order,)
        text = time_report(levels=args.levels, orders=orders)
    os.makedirs(args.output, exist_ok=True)
    path = os.path.join(args.output, "convergence.txt")
    with open(path, "w") as fh:
        fh.write(text + "\n")
    print(text)
    print("wrote %s" % path)


def cmd_check_mesh(args) -> None:
    pm = parse_physical_map(args.physical_map) if args.physical_map else None
    mesh = load_mesh(args.path, pm)
    tags = {TAG_TO_NAME[int(t)]: int((mesh.cell_tags == t).sum())
            for t in np.unique(mesh.cell_tags)}
    marks = {MARKER_TO_NAME[int(m)]: int((mesh.facet_markers == m).sum())
             for m in np.unique(mesh.facet_markers)}
    print("mesh ok: %d vertices, %d cells (dim %d)"
          % (mesh.num_vertices, mesh.num_cells, mesh.dim))
    print("  cells per subdomain: %s" % tags)
    print("  marked facets: %s" % marks)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fpsi",
        description="Monolithic fluid / poroelastic-structure interaction solver")
    sub = parser.add_subparsers(dest="command")

    p_run = sub.add_parser("run", help="run a scenario from a config file")
    p_run.add_argument("config", help="path to the config file")
    p_run.add_argument("--quiet", action="store_true")

    p_mms = sub.add_parser("mms", help="manufactured-solution convergence study")
    p_mms.add_argument("case", choices=("stokes", "biot", "time"))
    p_mms.add_argument("--levels", type=int, default=3,
                       help="number of refinement levels (>= 3)")
    p_mms.add_argument("--order", type=int, default=0, choices=(0, 1, 2),
                       help="BDF order for the time study (0 = both)")
    p_mms.add_argument("--output", default=".")

    p_chk = sub.add_parser("check-mesh", help="validate a mesh file")
    p_chk.add_argument("path")
    p_chk.add_argument("--physical-map", default="",
                       help="'1:FLUID,2:SOLID,...' for .msh files")

    sub.add_parser("version", help="print the package version")

    p_tpl = sub.add_parser("config-template", help="print a default config file")
    return parser


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 1
    try:
        if args.command == "run":
            run_scenario(load_config(args.config), quiet=args.quiet)
        elif args.command == "mms":
            cmd_mms(args)
        elif args.command == "check-mesh":
            cmd_check_mesh(args)
        elif args.command == "version":
            print(__version__)
        elif args.command == "config-template":
            print(default_config_text())
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 1
    except FpsiError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
