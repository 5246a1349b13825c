"""Command-line front end.

Subcommands:
    mesh                 structured-mesh facts, optional VTK dump
    run {lans,nse}       integrate trajectories, write diagnostics + snapshots
    mc {energy,compare,selfconv}   Monte Carlo studies
    probe infsup         discrete inf-sup constants of a refinement ladder

Successful commands print a JSON summary to stdout and exit 0.  Failures
print a single JSON error object to stderr; configuration problems exit
with 2, solver breakdowns with 3, anything else with 1.
"""

import argparse
import json
import os
import sys
import warnings

import numpy as np

from . import __version__
from .config import ConfigError, apply_overrides, config_hash, parse_config, parse_config_file
from .experiments import (
    compare_models,
    estimate_energy_stats,
    estimate_v_stats,
    infsup_table,
    self_convergence,
)
from .io import (
    OutputDirError,
    RunManifest,
    default_output_root,
    write_diagnostics_csv,
    write_estimates_csv,
    write_vtk,
)
from .linalg import SingularSystemError
from .mesh import triangulate_unit_square
from .stepper import BlowupError, SimContext, run_path


def _load_config(args):
    if getattr(args, "config", None):
        cfg = parse_config_file(args.config)
    else:
        cfg = parse_config("")
    return apply_overrides(cfg, seed=getattr(args, "seed", None),
                           paths=getattr(args, "paths", None),
                           out=getattr(args, "out", None))


def _run_directory(cfg, command):
    if cfg.out:
        return cfg.out
    return os.path.join(default_output_root(), f"{command}-{config_hash(cfg)}")


def _emit(payload):
    json.dump(payload, sys.stdout, indent=2, default=float)
    sys.stdout.write("\n")


def cmd_mesh(args):
    mesh = triangulate_unit_square(args.n)
    info = {
        "n": args.n,
        "vertices": int(mesh.n_vertices),
        "edges": int(mesh.edges.shape[0]),
        "cells": int(mesh.n_cells),
        "h_max": mesh.h_max,
        "h_min": mesh.h_min,
        "quasi_uniformity": mesh.quasi_uniformity(),
        "shape_regularity": mesh.shape_regularity(),
    }
    if args.dump:
        from . import fem

        space = fem.MixedSpace(mesh)
        cfg = parse_config(f"[discretization]\nn = {args.n}\n")
        write_vtk(args.dump, space, title=f"stochlans mesh n={args.n} config {config_hash(cfg)}")
        info["dump"] = args.dump
    _emit(info)
    return 0


def cmd_run(args):
    cfg = _load_config(args)
    directory = _run_directory(cfg, f"run-{args.model}")
    manifest = RunManifest(directory, cfg, f"run {args.model}", argv=sys.argv[1:])
    manifest.open_run()
    try:
        context = SimContext(cfg)
        summaries = []
        for p in range(cfg.paths):
            res = run_path(cfg, path=p, model=args.model, context=context)
            name = "diagnostics.csv" if cfg.paths == 1 else f"diagnostics_p{p}.csv"
            out = os.path.join(directory, name)
            write_diagnostics_csv(out, res.rows, manifest.hash,
                                  extra_comment=f"model {args.model} path {p}")
            manifest.add_output(out)
            for m, U, V in res.snapshots:
                snap = os.path.join(directory, f"snapshot_p{p}_m{m:06d}.vtk")
                if args.model == "lans":
                    fields = {"velocity_u": U, "velocity_v": V}
                else:
                    fields = {"velocity": U}
                if res.Pi is not None and m == res.snapshots[-1][0]:
                    fields["pressure"] = res.Pi
                write_vtk(snap, context.space, fields,
                          title=f"stochlans {args.model} config {manifest.hash} step {m}")
                manifest.add_output(snap)
            summaries.append({
                "path": p,
                "final_norm_u_alpha": res.column("norm_u_alpha")[-1],
                "max_energy_defect": float(np.abs(res.column("energy_defect")).max()),
                "solver_fallbacks": res.fallbacks,
            })
        manifest.finalize("ok")
    except BaseException as err:
        manifest.finalize("error", f"{type(err).__name__}: {err}")
        raise
    _emit({
        "status": "ok",
        "command": f"run {args.model}",
        "config_hash": manifest.hash,
        "directory": directory,
        "defaults_applied": cfg.defaults_applied,
        "paths": summaries,
        "outputs": manifest.outputs,
    })
    return 0


def cmd_mc(args):
    cfg = _load_config(args)
    directory = _run_directory(cfg, f"mc-{args.kind}")
    manifest = RunManifest(directory, cfg, f"mc {args.kind}", argv=sys.argv[1:])
    manifest.open_run()
    try:
        rows, payload = [], {}
        if args.kind == "energy":
            stats = estimate_energy_stats(cfg, model=args.model)
            rows = [("energy", name, est) for name, est in stats.items()]
            vstats = estimate_v_stats(cfg, model=args.model)
            rows += [("data_field", name, est) for name, est in vstats.items()]
            payload["estimates"] = {
                name: {"mean": est.mean, "se": est.se, "n": est.n}
                for name, est in {**stats, **vstats}.items()
            }
        elif args.kind == "compare":
            out = compare_models(cfg)
            est = out["estimate"]
            rows = [("model_distance", "sq_l2_time_integrated", est)]
            payload["estimate"] = {"mean": est.mean, "se": est.se, "n": est.n}
            payload["coupled"] = bool(out["coupled"])
        elif args.kind == "selfconv":
            n_paths = 0 if args.deterministic else cfg.paths
            k0 = 0.9 * (cfg.h_max ** 2)
            steps = cfg.T / k0
            if abs(steps - round(steps)) > 1e-9 * max(1.0, abs(steps)) or round(steps) < 1:
                raise ConfigError(
                    f"selfconv ladder fixes k = 0.9*h^2 = {k0!r} on the coarsest "
                    f"mesh; T = {cfg.T!r} is not an integer multiple "
                    f"(nearest: {max(1, round(steps)) * k0!r})")
            out = self_convergence(cfg, n0=cfg.n, levels=args.levels, T=cfg.T,
                                   n_paths=n_paths, model=args.model)
            diffs = out["diffs"]
            payload["diffs"] = diffs.tolist()
            if "pairs" in out:
                from .experiments import McEstimate

                rows = [(f"refine_pair_{i}", "sq_l2_distance", est)
                        for i, est in enumerate(out["pairs"])]
                payload["pairs"] = [
                    {"mean": e.mean, "se": e.se, "n": e.n} for e in out["pairs"]]
            else:
                from .experiments import McEstimate

                rows = [(f"refine_pair_{i}", "sq_l2_distance",
                         McEstimate(float(diffs[0, i]), 0.0, 1))
                        for i in range(diffs.shape[1])]
        est_path = os.path.join(directory, "estimates.csv")
        write_estimates_csv(est_path, rows, manifest.hash)
        manifest.add_output(est_path)
        manifest.finalize("ok")
    except BaseException as err:
        manifest.finalize("error", f"{type(err).__name__}: {err}")
        raise
    payload.update({
        "status": "ok",
        "command": f"mc {args.kind}",
        "config_hash": manifest.hash,
        "directory": directory,
        "outputs": manifest.outputs,
    })
    _emit(payload)
    return 0


def cmd_probe(args):
    ns = [int(v) for v in args.n_list.split(",") if v]
    results = infsup_table(ns, velocity_degree=args.degree)
    _emit({
        "status": "ok",
        "command": "probe infsup",
        "pairs": [
            {"n": r.n, "velocity_degree": r.velocity_degree,
             "beta": r.beta, "kernel_dim": r.kernel_dim}
            for r in results
        ],
    })
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stochlans",
        description="Finite-element simulator for stochastically forced "
                    "filtered and unfiltered incompressible flow")
    parser.add_argument("--version", action="version", version=f"stochlans {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_mesh = sub.add_parser("mesh", help="structured mesh facts")
    p_mesh.add_argument("--n", type=int, required=True)
    p_mesh.add_argument("--dump", help="write the quadratic mesh as legacy VTK")
    p_mesh.set_defaults(func=cmd_mesh)

    p_run = sub.add_parser("run", help="integrate trajectories")
    p_run.add_argument("model", choices=("lans", "nse"))
    p_run.add_argument("--config")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--paths", type=int)
    p_run.add_argument("--out")
    p_run.set_defaults(func=cmd_run)

    p_mc = sub.add_parser("mc", help="Monte Carlo studies")
    p_mc.add_argument("kind", choices=("energy", "compare", "selfconv"))
    p_mc.add_argument("--config")
    p_mc.add_argument("--seed", type=int)
    p_mc.add_argument("--paths", type=int)
    p_mc.add_argument("--out")
    p_mc.add_argument("--model", choices=("lans", "nse"), default="lans")
    p_mc.add_argument("--levels", type=int, default=3,
                      help="selfconv: number of nested refinements")
    p_mc.add_argument("--deterministic", action="store_true",
                      help="selfconv: single noiseless trajectory")
    p_mc.set_defaults(func=cmd_mc)

    p_probe = sub.add_parser("probe", help="stability probes")
    p_probe.add_argument("what", choices=("infsup",))
    p_probe.add_argument("--n-list", default="2,4,8")
    p_probe.add_argument("--degree", type=int, default=2, choices=(1, 2))
    p_probe.set_defaults(func=cmd_probe)
    return parser


_EXIT_CODES = (
    ((ConfigError, OutputDirError, FileNotFoundError), 2),
    ((BlowupError, SingularSystemError), 3),
)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        # stderr is reserved for the single JSON error object; keep numpy's
        # overflow chatter (it precedes every blow-up abort) out of it.
        with np.errstate(over="ignore", invalid="ignore"), warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return args.func(args)
    except Exception as err:  # noqa: BLE001 - single reporting point
        code = 1
        for classes, c in _EXIT_CODES:
            if isinstance(err, classes):
                code = c
                break
        json.dump({"error": type(err).__name__, "message": str(err), "exit_code": code},
                  sys.stderr)
        sys.stderr.write("\n")
        return code


if __name__ == "__main__":
    sys.exit(main())
