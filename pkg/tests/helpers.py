"""Scene builders shared by the unit and acceptance tests."""

from __future__ import annotations

import numpy as np

from bubblesim.fields import AIR, LIQUID, SOLID, FaceGeometry, StaggeredGrid, ghost_theta
from bubblesim.krylov import pcg_solve
from bubblesim.projection import (
    PhysicsParams,
    apply_pressure_gradient,
    assemble_reduced_system,
    unpack_solution,
)
from bubblesim.regions import build_material_map


def labels_from_rows(rows):
    """Build a label array from strings drawn top row first: ``#`` solid, ``~`` liquid, ``.`` air."""
    code = {"#": SOLID, "~": LIQUID, ".": AIR}
    ny = len(rows)
    nx = len(rows[0])
    lab = np.empty((nx, ny), dtype=np.int8)
    for r, line in enumerate(rows):
        for i, ch in enumerate(line):
            lab[i, ny - 1 - r] = code[ch]
    return lab


def phi_from_labels(labels, dx, rng=None):
    """A liquid level set consistent with ``labels`` (random magnitudes when ``rng`` is given)."""
    if rng is None:
        mag = np.full(labels.shape, 0.5 * dx)
    else:
        mag = rng.uniform(0.02, 1.0, labels.shape) * dx
    return np.where(labels == AIR, mag, -mag)


def geometry_from_labels(grid: StaggeredGrid, labels, phi, rng=None, moving=False, sigma=False):
    """Face coefficients built directly from labels.

    With ``rng`` the open fractions of interior faces are random in
    ``[0.25, 1]``; with ``moving`` every face gets a random solid velocity;
    with ``sigma`` liquid-air faces get random curvatures.
    """
    nx, ny = grid.shape
    w_u = np.ones(grid.u_shape)
    w_v = np.ones(grid.v_shape)
    if rng is not None:
        w_u = rng.uniform(0.25, 1.0, grid.u_shape)
        w_v = rng.uniform(0.25, 1.0, grid.v_shape)
    w_u[0, :] = w_u[-1, :] = 0.0
    w_v[:, 0] = w_v[:, -1] = 0.0
    solid_u = rng.normal(size=grid.u_shape) if moving else np.zeros(grid.u_shape)
    solid_v = rng.normal(size=grid.v_shape) if moving else np.zeros(grid.v_shape)
    theta_u = np.ones(grid.u_shape)
    theta_v = np.ones(grid.v_shape)
    for theta, lo, hi, plo, phi_hi in (
        (theta_u[1:-1, :], labels[:-1, :], labels[1:, :], phi[:-1, :], phi[1:, :]),
        (theta_v[:, 1:-1], labels[:, :-1], labels[:, 1:], phi[:, :-1], phi[:, 1:]),
    ):
        la = (lo == LIQUID) & (hi == AIR)
        al = (lo == AIR) & (hi == LIQUID)
        theta[la] = ghost_theta(plo[la], phi_hi[la])
        theta[al] = ghost_theta(phi_hi[al], plo[al])
    geom = FaceGeometry(w_u, w_v, theta_u, theta_v, solid_u, solid_v)
    if sigma:
        geom.kappa_u = rng.uniform(-3.0, 3.0, grid.u_shape)
        geom.kappa_v = rng.uniform(-3.0, 3.0, grid.v_shape)
    return geom


class Scene:
    """A fully specified projection problem."""

    def __init__(self, grid, labels, phi, geom, mmap, u_star, params, source=0.0, open_sides=()):
        self.grid = grid
        self.labels = labels
        self.phi = phi
        self.geom = geom
        self.mmap = mmap
        self.u_star = u_star
        self.params = params
        self.source = source
        self.open_sides = tuple(open_sides)

    def assemble(self):
        return assemble_reduced_system(self.grid, self.u_star, self.mmap, self.geom, self.params,
                                       self.open_sides, self.source)

    def solve(self, tol=1e-13):
        system = self.assemble()
        x, report = pcg_solve(system.A, system.rhs, tol, 20 * max(system.size, 1))
        u, valid = apply_pressure_gradient(self.grid, system, x, self.mmap, self.params)
        p, lam = unpack_solution(system, x, self.mmap, self.grid)
        return system, x, report, p, lam, u, valid


def random_scene(rng, nx=8, ny=8, p_solid=0.15, p_air=0.35, moving=True, sigma=False,
                 bubbles_enabled=True, dt=0.01, rho=1000.0):
    """Random labels, coefficients and ``u*`` on a closed ``nx`` x ``ny`` box (no well-posedness check)."""
    dx = 1.0 / max(nx, ny)
    grid = StaggeredGrid(nx, ny, dx)
    lab = rng.choice([SOLID, LIQUID, AIR], size=(nx, ny),
                     p=[p_solid, 1.0 - p_solid - p_air, p_air]).astype(np.int8)
    phi = phi_from_labels(lab, dx, rng)
    geom = geometry_from_labels(grid, lab, phi, rng, moving=moving, sigma=sigma)
    mmap, _ = build_material_map(grid, lab, geom, (), (), bubbles_enabled)
    u_star = rng.normal(size=grid.n_faces)
    params = PhysicsParams(rho, (0.0, -9.81), 1.5 if sigma else 0.0, dt)
    source = float(rng.normal()) * 0.1
    return Scene(grid, lab, phi, geom, mmap, u_star, params, source)


def well_posed(scene: Scene, need_active=True):
    """True when the reduced system is nonsingular and every liquid cell is an unknown."""
    system = scene.assemble()
    liquid = scene.labels.ravel() == LIQUID
    if np.any(system.cell_row[liquid] < 0):
        return False
    if system.floating_components or system.deactivated:
        return False
    if need_active and system.n_active < 1:
        return False
    return system.n_cells > 0


def random_well_posed_scenes(seed, count, **kwargs):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        s = random_scene(rng, **kwargs)
        if well_posed(s, need_active=kwargs.get("bubbles_enabled", True)):
            out.append(s)
    return out


def rel_err(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = max(float(np.linalg.norm(b)), 1e-300)
    return float(np.linalg.norm(a - b)) / scale


class PresetRun:
    """A finished preset simulation with per-frame snapshots and its diagnostics read back from CSV."""

    def __init__(self, cfg, sim, snapshots, rows, wall_time):
        self.cfg = cfg
        self.sim = sim
        self.snapshots = snapshots
        self.rows = rows
        self.wall_time = wall_time

    @property
    def dx(self):
        return self.sim.state.grid.dx


_RUNS = {}


def run_preset(name, enabled=True, n_frames=None):
    """Run (once per session) a preset, keeping ``(labels, phi)`` after every frame."""
    import tempfile
    import time
    from pathlib import Path

    from bubblesim.output import DIAGNOSTIC_COLUMNS, CsvWriter, diagnostics_row, read_diagnostics
    from bubblesim.presets import build_preset
    from bubblesim.timeloop import Simulation

    key = (name, enabled, n_frames)
    if key in _RUNS:
        return _RUNS[key]
    cfg = build_preset(name).copy(bubbles_enabled=enabled)
    sim = Simulation(cfg)
    snaps = [(sim.state.labels.copy(), sim.state.phi_l.copy(), sim.state.mmap)]
    t0 = time.perf_counter()
    sim.run(n_frames, lambda s, _: snaps.append((s.state.labels.copy(), s.state.phi_l.copy(), s.state.mmap)))
    wall = time.perf_counter() - t0
    path = Path(tempfile.mkdtemp(prefix=f"{name}_")) / "diagnostics.csv"
    with CsvWriter(path, DIAGNOSTIC_COLUMNS) as w:
        for rec in sim.records:
            w.write(diagnostics_row(rec))
    run = PresetRun(cfg, sim, snaps, read_diagnostics(path), wall)
    _RUNS[key] = run
    return run


ACCEPTANCE_LINES = []


def acceptance(number, title, ok, detail):
    """Record one acceptance verdict line and fail the calling test when it does not hold."""
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: {title} [{detail}]"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line
