"""Frame/substep driver: advect, apply forces, project with bubble constraints."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .advection import advect_semilagrangian, advect_velocity, extrapolate_velocity
from .config import ScenarioConfig
from .errors import SolverError
from .fields import (
    StaggeredGrid,
    classify_cells,
    compute_face_geometry,
    solid_phi_cells,
    split_faces,
)
from .geometry import composite_sdf
from .krylov import pcg_solve
from .levelset import liquid_volume, redistance, remove_isolated_cells
from .projection import (
    PhysicsParams,
    apply_pressure_gradient,
    assemble_reduced_system,
    constraint_report,
    fill_face_curvatures,
)
from .regions import MaterialMap, build_material_map

log = logging.getLogger(__name__)

EXTRAPOLATION_LAYERS = 4
# Cubic sampling of the level set: bilinear sampling of a curved distance
# field is biased toward the concave side and erodes small bubbles.
LEVELSET_ORDER = 3
VOLUME_CLAMP = 0.01


@dataclass
class SimState:
    grid: StaggeredGrid
    u: np.ndarray
    v: np.ndarray
    phi_l: np.ndarray
    t: float = 0.0
    frame_index: int = 0
    liquid_volume_target: float = 0.0
    valid_u: np.ndarray = None
    valid_v: np.ndarray = None
    phi_s: np.ndarray = None
    labels: np.ndarray = None
    mmap: MaterialMap = None

    def __post_init__(self):
        if self.valid_u is None:
            self.valid_u = np.ones(self.u.shape, dtype=bool)
        if self.valid_v is None:
            self.valid_v = np.ones(self.v.shape, dtype=bool)

    @property
    def max_speed(self) -> float:
        mu = np.max(np.abs(self.u[self.valid_u]), initial=0.0)
        mv = np.max(np.abs(self.v[self.valid_v]), initial=0.0)
        return float(max(mu, mv))


@dataclass
class SubstepRecord:
    """One diagnostics row; every field is a deterministic function of the inputs."""

    frame: int
    substep: int
    t: float
    dt: float
    n_bubbles: int
    n_active: int
    bubble_volumes: list
    liquid_volume: float
    cg_iterations: int
    relative_residual: float
    max_ustar: float
    max_u: float
    max_divergence: float
    max_constraint_flux: float
    constraint_bound: float
    liquid_flux: float
    solid_flux: float
    volume_source: float
    floating_blocks: int


@dataclass
class SubstepTiming:
    frame: int
    substep: int
    regions_time: float
    assembly_time: float
    solve_time: float


@dataclass
class StepStats:
    substeps: int = 0
    dts: list = field(default_factory=list)
    cg_iterations: list = field(default_factory=list)
    solve_time: float = 0.0
    n_bubbles: int = 0
    bubble_volumes: list = field(default_factory=list)
    liquid_volume: float = 0.0
    records: list = field(default_factory=list)
    timings: list = field(default_factory=list)


def compute_substep_dt(max_speed, dx, cfl, frame_remaining, substeps_taken, max_substeps,
                       dt_limit=None, eps=1e-12, warn=True):
    """CFL-limited substep, stretched when the frame would need more than ``max_substeps``."""
    dt = min(frame_remaining, cfl * dx / (max_speed + eps))
    if dt_limit is not None:
        dt = min(dt, dt_limit)
    left = max(max_substeps - substeps_taken, 1)
    if math.ceil(frame_remaining / dt - 1e-9) > left:
        stretched = frame_remaining / left
        if warn:
            log.warning("substep cap %d: stretching dt from %g to %g (CFL overridden)",
                        max_substeps, dt, stretched)
        dt = stretched
    return dt


def volume_correction_source(current, target, gain, dt, clamp=VOLUME_CLAMP):
    """Uniform divergence source nudging the liquid volume back to ``target``."""
    if gain == 0 or current <= 0:
        return 0.0
    s = gain * (target - current) / current / dt
    lim = clamp / dt
    return float(np.clip(s, -lim, lim))


def surface_tension_dt(rho, dx, sigma):
    if sigma <= 0:
        return None
    return math.sqrt(rho * dx ** 3 / (2.0 * math.pi * sigma))


def initial_state(cfg: ScenarioConfig) -> SimState:
    grid = cfg.grid.make_grid()
    x, y = grid.cell_centers()
    phi = composite_sdf(cfg.liquid, x, y, 0.0)
    phi = np.where(np.isfinite(phi), phi, 10.0 * grid.dx * max(grid.nx, grid.ny))
    phi, _ = redistance(phi, grid.dx)
    phi_s = solid_phi_cells(grid, cfg.solids, 0.0)
    state = SimState(grid, grid.zeros_u(), grid.zeros_v(), phi, phi_s=phi_s)
    state.liquid_volume_target = liquid_volume(phi, phi_s, grid.dx)
    state.labels = classify_cells(phi, phi_s)
    geom = compute_face_geometry(grid, phi, state.labels, cfg.solids, 0.0, cfg.grid.open_sides)
    state.mmap, _ = build_material_map(grid, state.labels, geom, cfg.grid.open_sides,
                                       cfg.freesurface_seeds, cfg.bubbles_enabled)
    return state


def substep(state: SimState, cfg: ScenarioConfig, dt: float, frame: int, k: int, dump_prefix=None):
    """Advance ``state`` by one substep in place; returns ``(record, timing)``."""
    grid = state.grid
    dx = grid.dx
    ph = cfg.physics
    open_sides = cfg.grid.open_sides
    t_new = state.t + dt

    phi = advect_semilagrangian(grid, state.phi_l, state.u, state.v, dt, "cell", LEVELSET_ORDER)
    u, v = advect_velocity(grid, state.u, state.v, dt)
    u = u + ph.gravity[0] * dt
    v = v + ph.gravity[1] * dt
    phi_s = solid_phi_cells(grid, cfg.solids, t_new)
    phi, _ = remove_isolated_cells(phi, phi_s)
    phi, _ = redistance(phi, dx)

    t0 = time.perf_counter()
    labels = classify_cells(phi, phi_s)
    geom = compute_face_geometry(grid, phi, labels, cfg.solids, t_new, open_sides,
                                 t_velocity=state.t + 0.5 * dt)
    mmap, _ = build_material_map(grid, labels, geom, open_sides, cfg.freesurface_seeds,
                                 cfg.bubbles_enabled)
    if ph.sigma > 0:
        fill_face_curvatures(geom, phi, labels, dx)
    t1 = time.perf_counter()

    vol = liquid_volume(phi, phi_s, dx)
    src = volume_correction_source(vol, state.liquid_volume_target, ph.volume_gain, dt)
    params = PhysicsParams(ph.rho, tuple(ph.gravity), ph.sigma, dt)
    ustar = np.concatenate([u.ravel(), v.ravel()])
    system = assemble_reduced_system(grid, ustar, mmap, geom, params, open_sides, src)
    t2 = time.perf_counter()
    if dump_prefix is not None:
        system.write_matrix_market(f"{dump_prefix}_f{frame:05d}_s{k:02d}")
    x, report = pcg_solve(system.A, system.rhs, cfg.solver.tolerance, cfg.solver.max_iterations)
    t3 = time.perf_counter()
    if not report.converged:
        err = SolverError(
            f"pressure solve did not converge at frame {frame} substep {k}: "
            f"relative residual {report.relative_residual:.3e} after {report.iterations} iterations",
            report,
        )
        err.system = system
        raise err

    uflat, valid = apply_pressure_gradient(grid, system, x, mmap, params)
    cons = constraint_report(grid, system, uflat, mmap, open_sides, src)
    max_ustar = float(np.max(np.abs(system.faces.u_eff[valid]), initial=0.0))
    max_u = float(np.max(np.abs(uflat[valid]), initial=0.0))

    u_new, v_new = split_faces(grid, uflat)
    vu, vv = split_faces(grid, valid)
    state.u, state.valid_u = extrapolate_velocity(u_new, vu, EXTRAPOLATION_LAYERS)
    state.v, state.valid_v = extrapolate_velocity(v_new, vv, EXTRAPOLATION_LAYERS)
    state.phi_l = phi
    state.phi_s = phi_s
    state.labels = labels
    state.mmap = mmap
    state.t = t_new

    act = system.bubble_row >= 0
    record = SubstepRecord(
        frame=frame,
        substep=k,
        t=t_new,
        dt=dt,
        n_bubbles=mmap.n_bubbles,
        n_active=system.n_active,
        bubble_volumes=[float(b) for b in mmap.bubble_volumes(dx)],
        liquid_volume=vol,
        cg_iterations=report.iterations,
        relative_residual=report.relative_residual,
        max_ustar=max_ustar,
        max_u=max_u,
        max_divergence=cons.max_divergence,
        max_constraint_flux=cons.max_active_flux,
        constraint_bound=1e-4 * max(1.0, max_ustar) * dx,
        liquid_flux=float(np.sum(cons.bubble_liquid_flux[act])),
        solid_flux=float(np.sum(cons.bubble_solid_flux[act])),
        volume_source=src,
        floating_blocks=system.floating_components,
    )
    timing = SubstepTiming(frame, k, t1 - t0, t2 - t1, t3 - t2)
    return record, timing


def step_frame(state: SimState, cfg: ScenarioConfig, dump_prefix=None):
    """Advance one frame; returns ``(state, StepStats)``."""
    ph = cfg.physics
    frame_dt = 1.0 / ph.frame_rate
    t_end = (state.frame_index + 1) * frame_dt
    dt_limit = surface_tension_dt(ph.rho, state.grid.dx, ph.sigma)
    stats = StepStats()
    frame = state.frame_index + 1
    warned = False
    while t_end - state.t > 1e-12 * frame_dt:
        remaining = t_end - state.t
        dt = compute_substep_dt(state.max_speed, state.grid.dx, ph.cfl, remaining,
                                stats.substeps, ph.max_substeps, dt_limit, warn=not warned)
        warned |= dt > min(remaining, ph.cfl * state.grid.dx / (state.max_speed + 1e-12)) * (1 + 1e-12)
        record, timing = substep(state, cfg, dt, frame, stats.substeps + 1, dump_prefix)
        stats.substeps += 1
        stats.dts.append(dt)
        stats.cg_iterations.append(record.cg_iterations)
        stats.solve_time += timing.solve_time
        stats.records.append(record)
        stats.timings.append(timing)
    state.t = t_end
    state.frame_index = frame
    last = stats.records[-1]
    stats.n_bubbles = last.n_bubbles
    stats.bubble_volumes = last.bubble_volumes
    stats.liquid_volume = last.liquid_volume
    return state, stats


class Simulation:
    """Convenience wrapper holding a config and its evolving state."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.state = initial_state(cfg)
        self.records: list[SubstepRecord] = []
        self.timings: list[SubstepTiming] = []

    def step_frame(self, dump_prefix=None) -> StepStats:
        _, stats = step_frame(self.state, self.cfg, dump_prefix)
        self.records.extend(stats.records)
        self.timings.extend(stats.timings)
        return stats

    def run(self, n_frames=None, callback=None):
        n_frames = self.cfg.physics.n_frames if n_frames is None else n_frames
        for _ in range(n_frames):
            stats = self.step_frame()
            if callback is not None:
                callback(self, stats)
        return self
