"""Batch command-line front end.

Usage::

    sim run <config.json|preset:NAME> [--out DIR] [--frames N] [--no-bubbles] [--dump-matrix]
    sim compare <config.json|preset:NAME> [--frames N] [--repeats R]
    sim presets
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

import numba
import numpy as np

from .config import ScenarioConfig, parse_config
from .errors import ConfigError, SimError, SolverError
from .output import (
    DIAGNOSTIC_COLUMNS,
    TIMING_COLUMNS,
    CsvWriter,
    diagnostics_row,
    material_image,
    summarize,
    write_json,
    write_pgm,
)
from .presets import build_preset, preset_names
from .timeloop import Simulation

log = logging.getLogger("bubblesim")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2


def load_scenario(spec: str) -> ScenarioConfig:
    """Resolve ``preset:NAME`` or a path to a JSON config."""
    if spec.startswith("preset:"):
        return build_preset(spec[len("preset:"):])
    return parse_config(spec)


def apply_thread_cap(env=None) -> int | None:
    """Honour ``SIM_THREADS`` by capping numba's worker pool; returns the cap applied."""
    env = os.environ if env is None else env
    raw = env.get("SIM_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"SIM_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"SIM_THREADS must be a positive integer, got {raw!r}")
    n = min(n, numba.config.NUMBA_NUM_THREADS)
    # Prefer layers that need no version probe; an old TBB only warns and is skipped anyway.
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
    numba.set_num_threads(n)
    return n


def run_scenario(cfg: ScenarioConfig, out_dir, n_frames=None, dump_matrix=None) -> int:
    """Run ``cfg`` writing all outputs into ``out_dir``; returns the exit code."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n_frames = cfg.physics.n_frames if n_frames is None else n_frames
    dump = cfg.output.dump_matrix if dump_matrix is None else dump_matrix
    stride = cfg.output.frame_stride
    dump_prefix = str(out / "matrix") if dump else None

    sim = Simulation(cfg)
    grid = sim.state.grid
    write_pgm(out / "frame_00000.pgm", material_image(sim.state.labels, sim.state.phi_l, grid.dx))
    error = None
    frames_done = 0
    t_start = time.perf_counter()
    with CsvWriter(out / "diagnostics.csv", DIAGNOSTIC_COLUMNS) as diag, \
            CsvWriter(out / "timings.csv", TIMING_COLUMNS) as tim:
        for f in range(1, n_frames + 1):
            try:
                stats = sim.step_frame(dump_prefix)
            except SolverError as exc:
                error = {"type": "SolverError", "frame": f, "message": str(exc)}
                system = getattr(exc, "system", None)
                if system is not None:
                    system.write_matrix_market(str(out / f"failed_f{f:05d}"))
                log.error("%s", exc)
                break
            except SimError as exc:
                error = {"type": type(exc).__name__, "frame": f, "message": str(exc)}
                log.error("%s", exc)
                break
            for rec, tm in zip(stats.records, stats.timings):
                diag.write(diagnostics_row(rec))
                tim.write([tm.frame, tm.substep, repr(tm.regions_time),
                           repr(tm.assembly_time), repr(tm.solve_time)])
            frames_done = f
            if f % stride == 0:
                st = sim.state
                write_pgm(out / f"frame_{f:05d}.pgm", material_image(st.labels, st.phi_l, grid.dx))
    wall = time.perf_counter() - t_start
    final = sim.state.mmap.bubble_volumes(grid.dx) if sim.state.mmap is not None else []
    write_json(out / "summary.json",
               summarize(sim.records, sim.timings, wall, final, frames_done, error))
    return EXIT_OK if error is None else EXIT_SOLVER


def _measure(cfg: ScenarioConfig, n_frames: int) -> dict:
    sim = Simulation(cfg)
    sim.run(n_frames)
    per_step = [t.assembly_time + t.solve_time for t in sim.timings]
    return {
        "substeps": len(sim.records),
        "mean_step_time": float(np.mean(per_step)),
        "mean_solve_time": float(np.mean([t.solve_time for t in sim.timings])),
        "mean_cg_iterations": float(np.mean([r.cg_iterations for r in sim.records])),
        "mean_active_constraints": float(np.mean([r.n_active for r in sim.records])),
        "total_solid_flux": float(sum(r.solid_flux for r in sim.records)),
        "total_liquid_flux": float(sum(r.liquid_flux for r in sim.records)),
    }


def compare_mode(cfg: ScenarioConfig, n_frames: int = 10, repeats: int = 3) -> dict:
    """Run the first ``n_frames`` with bubbles on and then off; report means and ratios.

    The runs are sequential so their timings do not compete for cores. Each
    variant is repeated ``repeats`` times in alternating order and the
    fastest repeat's per-substep mean is kept, which suppresses scheduler
    noise on a shared machine; CG iteration counts are deterministic and
    identical across repeats. An untimed one-frame warm-up of each variant
    absorbs one-off costs such as compiled-kernel loading.
    """
    variants = {True: cfg.copy(bubbles_enabled=True), False: cfg.copy(bubbles_enabled=False)}
    for c in variants.values():
        Simulation(c).run(1)
    best = {}
    for r in range(repeats):
        order = (True, False) if r % 2 == 0 else (False, True)
        for enabled in order:
            m = _measure(variants[enabled], n_frames)
            if enabled not in best or m["mean_step_time"] < best[enabled]["mean_step_time"]:
                best[enabled] = m
    on, off = best[True], best[False]
    return {
        "scenario": cfg.name,
        "frames": n_frames,
        "repeats": repeats,
        "bubbles": on,
        "no_bubbles": off,
        "time_ratio": on["mean_step_time"] / off["mean_step_time"],
        "iteration_ratio": (on["mean_cg_iterations"] / off["mean_cg_iterations"]
                            if off["mean_cg_iterations"] > 0 else 1.0),
    }


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sim", description="2D free-surface liquid solver with bubble constraints")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO level")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario and write diagnostics and frames")
    r.add_argument("scenario", help="config JSON path or preset:NAME")
    r.add_argument("--out", help="output directory (default: the config's output.directory)")
    r.add_argument("--frames", type=int, help="number of frames (default: physics.n_frames)")
    r.add_argument("--no-bubbles", action="store_true", help="disable bubble constraints")
    r.add_argument("--dump-matrix", action="store_true", help="write each system as Matrix Market")

    c = sub.add_parser("compare", help="time the first frames with and without bubble constraints")
    c.add_argument("scenario", help="config JSON path or preset:NAME")
    c.add_argument("--frames", type=int, default=10, help="frames per run (default 10)")
    c.add_argument("--repeats", type=int, default=3, help="timed repeats per variant (default 3)")
    c.add_argument("--json", help="also write the report to this file")

    sub.add_parser("presets", help="list built-in scenes")
    return p


def _positive(name, value):
    if value is not None and value < 1:
        raise ConfigError(f"--{name} must be at least 1, got {value}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        apply_thread_cap()
        if args.command == "presets":
            for name in preset_names():
                print(name)
            return EXIT_OK
        cfg = load_scenario(args.scenario)
        _positive("frames", args.frames)
        if args.command == "run":
            if args.no_bubbles:
                cfg = cfg.copy(bubbles_enabled=False)
            out = args.out or cfg.output.directory
            code = run_scenario(cfg, out, args.frames, args.dump_matrix or None)
            print(f"{cfg.name}: wrote outputs to {out}" + ("" if code == EXIT_OK else " (solver aborted)"))
            return code
        _positive("repeats", args.repeats)
        report = compare_mode(cfg, args.frames, args.repeats)
        for key in ("bubbles", "no_bubbles"):
            m = report[key]
            print(f"{key:>10}: substeps {m['substeps']}, mean step time {m['mean_step_time'] * 1e3:.3f} ms, "
                  f"mean CG iterations {m['mean_cg_iterations']:.1f}, solid flux {m['total_solid_flux']:.4g}")
        print(f"time ratio {report['time_ratio']:.3f}, iteration ratio {report['iteration_ratio']:.3f}")
        if args.json:
            write_json(args.json, report)
        return EXIT_OK
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
