"""Command line driver.

    micstokes run CONFIG [--set key=value ...] [--mode full|solve|advect]
                         [--ranks PXxPY] [--out DIR] [--seed N]
    micstokes bench CONFIG [--warmup N] [--repeat N] [--set ...]

Exit codes: 0 success, 2 configuration error, 3 solver divergence,
4 communication error, 1 anything else.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time

import numpy as np

from . import io
from .config import ConfigError, load_config, parse_schedule, parse_tile, to_json
from .distributed import CommunicationError, ConfigurationError
from .markers import INTEGRATORS, TimeStepPolicy, compute_timestep
from .multigrid import HierarchyError, SmootherConfig
from .scenarios import (build_rotating_slab, build_sinker, marker_hash, run_slab_distributed,
                        run_slab_single, slab_timestep)
from .uzawa import DivergenceError, SolveReport, UzawaConfig
from .accelerators import accelerated_solve

log = logging.getLogger("micstokes")

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_DIVERGED, EXIT_COMM = 0, 1, 2, 3, 4


def solver_settings(cfg):
    factor = cfg["solver.factor"]
    try:
        factor = float(factor)
    except ValueError:
        if factor != "auto":
            raise ConfigError(f"solver.factor must be a number or 'auto', got {factor!r}") from None
    try:
        uz = UzawaConfig(omega_p=cfg["solver.omega_p"], max_cycles=cfg["solver.max_cycles"],
                         vcycles_per_step=cfg["solver.vcycles"], tol=cfg["solver.tol"],
                         rescale_schedule=parse_schedule(cfg["solver.schedule"]),
                         log_every=cfg["solver.log_every"], levels=cfg["solver.levels"],
                         factor=factor)
        sm = SmootherConfig(kind=cfg["smoother.kind"], omega_v=cfg["smoother.omega_v"],
                            pre_iters=cfg["smoother.pre"], post_iters=cfg["smoother.post"],
                            ras_tile=parse_tile(cfg["smoother.ras_tile"]),
                            ras_inner=cfg["smoother.ras_inner"],
                            ras_overlap=cfg["smoother.ras_overlap"],
                            coarsening_growth=cfg["smoother.growth"], seed=cfg["seed"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg["solver.accel"] not in ("none", "gcr", "anderson"):
        raise ConfigError(f"solver.accel must be none, gcr or anderson, got {cfg['solver.accel']!r}")
    accel = (cfg["solver.accel"], {"m": cfg["solver.accel_m"], "beta": cfg["solver.accel_beta"]})
    return uz, sm, accel


def _record_dict(rec):
    return dict(zip(SolveReport.HEADER.split(","), rec)) if rec else None


def _snapshot(out, step, geom, seed, **arrays):
    for name, (arr, role) in arrays.items():
        io.write_field(os.path.join(out, f"snap_{step:04d}_{name}.f64"), arr, role, geom,
                       seed=seed, step=step)


def run_sinker(cfg, mode, out):
    scn = build_sinker(cfg)
    uz, sm, (accel, params) = solver_settings(cfg)
    steps = 1 if mode == "solve" else cfg["advect.steps"]
    if cfg["advect.integrator"] not in INTEGRATORS:
        raise ConfigError(f"advect.integrator must be one of {sorted(INTEGRATORS)}")
    integ = INTEGRATORS[cfg["advect.integrator"]]
    policy = TimeStepPolicy(cfg["advect.cfl"], cfg["advect.max_dt"])
    pool = scn.pool
    seed = cfg["seed"]
    summary = {"scenario": "sinker", "mode": mode, "seed": seed, "steps": [],
               "markers": pool.count}
    every = cfg["output.snapshot_every"]
    t_model = 0.0
    for step in range(steps):
        prob = scn.problem(pool)
        try:
            state, rep = accelerated_solve(prob, uz, sm, accel, params, init=cfg["solver.init"])
        except DivergenceError as exc:
            io.write_log(os.path.join(out, f"residuals_{step:04d}.csv"), exc.report.log_lines())
            summary["steps"].append({"step": step, "diverged": True,
                                     "final": _record_dict(exc.report.final)})
            summary["status"] = "diverged"
            io.write_json(os.path.join(out, "summary.json"), summary)
            raise
        io.write_log(os.path.join(out, f"residuals_{step:04d}.csv"), rep.log_lines())
        info = {"step": step, "cycles": rep.cycles_used, "converged": rep.converged,
                "final": _record_dict(rep.final)}
        last = step == steps - 1
        if (every and step % every == 0) or last:
            _snapshot(out, step, scn.geom, seed, vx=(state.vx, "vx"), vy=(state.vy, "vy"),
                      p=(state.p, "p"), etab=(prob.etab, "basic"))
        if mode == "full":
            dt = compute_timestep(state.vx, state.vy, policy, scn.geom)
            pool = integ(pool, state.vx, state.vy, dt, scn.geom)
            t_model += dt
            info["dt"] = dt
        summary["steps"].append(info)
        log.info("step %d: %d cycles, res_total %.3e", step, rep.cycles_used,
                 rep.final[4] if rep.final else 0.0)
    summary["final"] = summary["steps"][-1]["final"]
    summary["cycles_total"] = sum(s["cycles"] for s in summary["steps"])
    summary["time"] = t_model
    summary["marker_hash"] = marker_hash(pool)
    return summary, pool


def run_slab(cfg, mode, out):
    if mode == "solve":
        raise ConfigError("the rotating slab has a prescribed velocity; use --mode advect")
    scn = build_rotating_slab(cfg)
    px, py = cfg["distributed.px"], cfg["distributed.py"]
    steps = cfg["advect.steps"]
    dt = slab_timestep(scn, cfg["advect.cfl"])
    summary = {"scenario": "rotating-slab", "mode": mode, "seed": cfg["seed"],
               "ranks": [px, py], "dt": dt, "steps": steps}
    if px * py == 1:
        integ = INTEGRATORS.get(cfg["advect.integrator"])
        if integ is None:
            raise ConfigError(f"advect.integrator must be one of {sorted(INTEGRATORS)}")
        pool, eta = run_slab_single(scn, steps, dt, integ)
    else:
        if cfg["advect.integrator"] != "euler":
            raise ConfigError("distributed advection supports advect.integrator = euler only")
        try:
            res = run_slab_distributed(scn, steps, dt, px, py)
        except ConfigurationError as exc:
            raise ConfigError(str(exc)) from None
        pool, eta = res.pool, res.eta
        summary["messages"] = [sum(c.values()) for c in res.messages]
    if eta is not None:
        _snapshot(out, steps, scn.geom, cfg["seed"], eta=(eta, "basic"))
    summary["markers"] = pool.count
    summary["marker_hash"] = marker_hash(pool)
    return summary, pool


def execute(cfg, mode, out):
    os.makedirs(out, exist_ok=True)
    io.atomic_write(os.path.join(out, "config.json"), (to_json(cfg) + "\n").encode())
    t0 = time.perf_counter()
    runner = run_sinker if cfg["scenario"] == "sinker" else run_slab
    summary, pool = runner(cfg, mode, out)
    summary["wall_time"] = time.perf_counter() - t0
    fmt = cfg["output.markers"]
    if fmt in ("csv", "bin"):
        name = "markers." + fmt
        io.write_markers(os.path.join(out, name), pool, fmt, seed=cfg["seed"])
        summary["marker_dump"] = name
    elif fmt != "none":
        raise ConfigError(f"output.markers must be none, csv or bin, got {fmt!r}")
    io.write_json(os.path.join(out, "summary.json"), summary)
    return summary


def _overrides(args):
    sets = list(args.set or [])
    if getattr(args, "seed", None) is not None:
        sets.append(f"seed={args.seed}")
    if getattr(args, "ranks", None):
        try:
            px, py = args.ranks.lower().split("x")
            int(px), int(py)
        except ValueError:
            raise ConfigError(f"--ranks expects PXxPY, got {args.ranks!r}") from None
        sets += [f"distributed.px={px}", f"distributed.py={py}"]
    if getattr(args, "out", None):
        sets.append(f"output.dir={args.out}")
    return sets


def cmd_run(args):
    cfg = load_config(args.config, _overrides(args))
    summary = execute(cfg, args.mode, cfg["output.dir"])
    print(f"done in {summary['wall_time']:.2f} s; summary at "
          f"{os.path.join(cfg['output.dir'], 'summary.json')}")
    return EXIT_OK


def cmd_bench(args):
    cfg = load_config(args.config, _overrides(args))
    if cfg["scenario"] != "sinker":
        raise ConfigError("bench times the sinker solve")
    uz, sm, (accel, params) = solver_settings(cfg)
    prob = build_sinker(cfg).problem()
    for _ in range(args.warmup):
        accelerated_solve(prob, uz, sm, accel, params, init=cfg["solver.init"])
    t0 = time.perf_counter()
    cycles = 0
    for _ in range(args.repeat):
        _, rep = accelerated_solve(prob, uz, sm, accel, params, init=cfg["solver.init"])
        cycles += rep.cycles_used
    total = time.perf_counter() - t0
    print(f"warmup {args.warmup}, repeat {args.repeat}: total {total:.3f} s, "
          f"{cycles} cycles, {total / max(cycles, 1) * 1e3:.2f} ms/cycle")
    return EXIT_OK


def parser():
    ap = argparse.ArgumentParser(prog="micstokes", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run a scenario")
    r.add_argument("config")
    r.add_argument("--set", action="append", metavar="KEY=VALUE")
    r.add_argument("--mode", choices=("full", "solve", "advect"), default="full")
    r.add_argument("--ranks", metavar="PXxPY")
    r.add_argument("--out")
    r.add_argument("--seed", type=int)
    r.set_defaults(fn=cmd_run)
    b = sub.add_parser("bench", help="time repeated sinker solves after a warm-up")
    b.add_argument("config")
    b.add_argument("--set", action="append", metavar="KEY=VALUE")
    b.add_argument("--warmup", type=int, default=1)
    b.add_argument("--repeat", type=int, default=3)
    b.set_defaults(fn=cmd_bench)
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    args = parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ConfigurationError, HierarchyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"solver diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except CommunicationError as exc:
        print(f"communication error: {exc}", file=sys.stderr)
        return EXIT_COMM
    except Exception as exc:  # noqa: BLE001 - reported as a plain failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
