"""End-to-end acceptance checks; each test prints a single PASS/FAIL line."""

import time

import numpy as np
import pytest
from skimage import measure

from bubblesim.cli import compare_mode, run_scenario
from bubblesim.fields import LIQUID, compute_face_geometry
from bubblesim.krylov import SparseSymMatrix, pcg_solve
from bubblesim.presets import build_preset, preset_names
from bubblesim.projection import PhysicsParams, apply_pressure_gradient, assemble_reduced_system, unpack_solution
from bubblesim.regions import build_material_map
from helpers import acceptance, random_scene, random_well_posed_scenes, rel_err, run_preset, well_posed
from oracles import dense_kkt_solve, free_surface_poisson

pytestmark = pytest.mark.slow

H = 1.0 / 96
RIPPLE = 5e-3


def oracle_solve(scene, system):
    g = scene.geom
    return dense_kkt_solve(scene.labels, scene.mmap.bubble_id, system.bubble_row >= 0, g.flat("w"),
                           g.flat("theta"), scene.u_star, g.flat("solid"), scene.params.rho,
                           scene.params.dt, scene.grid.dx, scene.params.sigma, g.flat("kappa"),
                           scene.source)


def bubble_in_region(mmap, i0, i1, j0, j1):
    """Volume (cells) of the bubble with the most cells in the index box, 0 if none."""
    ids = mmap.bubble_id[i0:i1, j0:j1]
    ids = ids[ids >= 0]
    if ids.size == 0:
        return 0
    b = np.bincount(ids).argmax()
    return int(np.count_nonzero(mmap.bubble_id == b))


def test_criterion_01_kkt_oracle():
    t0 = time.perf_counter()
    scenes = random_well_posed_scenes(2024, 20, sigma=False) + random_well_posed_scenes(7, 5, sigma=True)
    worst = 0.0
    for s in scenes:
        system, _, report, p, lam, u, valid = s.solve()
        assert system.n_active >= 1 and report.converged
        P, L, U, _ = oracle_solve(s, system)
        worst = max(worst, rel_err(p, P.ravel()), rel_err(lam, L), rel_err(u[valid], U[valid]))
    elapsed = time.perf_counter() - t0
    acceptance(1, "reduced solve matches dense KKT solve", worst <= 1e-10 and elapsed < 10,
               f"{len(scenes)} scenes up to 8x8, worst rel err {worst:.2e} <= 1e-10, {elapsed:.1f}s < 10s")


def test_criterion_02_constraint_flux_bound():
    worst = (0.0, None)
    n_rows = 0
    for name in preset_names():
        for r in run_preset(name).rows:
            n_rows += 1
            ratio = r["max_constraint_flux"] / r["constraint_bound"]
            if ratio > worst[0]:
                worst = (ratio, f"{name} frame {r['frame']} substep {r['substep']}")
    acceptance(2, "active bubble flux within 1e-4*max(1,|u*|)*dx on every preset substep", worst[0] <= 1.0,
               f"{n_rows} substeps over {len(preset_names())} presets, worst flux/bound {worst[0]:.3f} at {worst[1]}")


def trapped_pocket(run, k):
    # Cup interior: x in [32, 64) H, y in [22, 44) H.
    return bubble_in_region(run.snapshots[k][2], 32, 64, 22, 44)


def test_criterion_03_collapse_control():
    t0 = time.perf_counter()
    on = run_preset("trapped_bubble", True)
    off = run_preset("trapped_bubble", False)
    elapsed = time.perf_counter() - t0
    v0 = trapped_pocket(on, 0)
    r_on = trapped_pocket(on, -1) / v0
    r_off = trapped_pocket(off, -1) / trapped_pocket(off, 0)
    ok = r_on >= 0.95 and r_off <= 0.5 and len(on.snapshots) == 101 and elapsed < 300
    acceptance(3, "trapped bubble conserved with constraints, collapses without", ok,
               f"100 frames at 96x96: on {r_on:.3f} >= 0.95, off {r_off:.3f} <= 0.5, {elapsed:.0f}s < 300s")


def test_criterion_04_redundancy_and_null_space():
    run = run_preset("trapped_bubble", True)
    cfg = run.cfg
    grid = cfg.grid.make_grid()
    labels, phi, mmap = run.snapshots[0]
    geom = compute_face_geometry(grid, phi, labels, cfg.solids, 0.0, cfg.grid.open_sides)
    n = mmap.n_bubbles
    pruned = int(np.flatnonzero(~mmap.active)[0]) if mmap.n_active < n else None
    forced, _ = build_material_map(grid, labels, geom)
    forced.active[:] = True
    params = PhysicsParams(cfg.physics.rho, cfg.physics.gravity, 0.0, 1.0 / cfg.physics.frame_rate)
    system = assemble_reduced_system(grid, np.zeros(grid.n_faces), forced, geom, params)
    A = system.A.to_dense()
    null = np.linalg.norm(A @ np.ones(system.size))
    bound = 1e-12 * np.abs(A).max() * n
    top = mmap.bubble_id[48, 95]
    pocket = mmap.bubble_id[48, 38]
    vols = {top: [], pocket: []}
    for _, _, m in run.snapshots[:51]:
        vols[top].append(np.count_nonzero(m.bubble_id == m.bubble_id[48, 95]))
        vols[pocket].append(np.count_nonzero(m.bubble_id == m.bubble_id[48, 38]))
    drift = max(max(abs(v / vs[0] - 1) for v in vs) for vs in vols.values())
    ok = (n == 2 and mmap.n_active == 1 and null <= bound and pruned == top
          and mmap.liquid_area[top] > mmap.liquid_area[pocket] and drift <= 0.05)
    acceptance(4, "n-1 constraints, constant null vector, largest-area bubble pruned, volumes kept", ok,
               f"{n} bubbles, {mmap.n_active} active; |A1| {null:.1e} <= {bound:.1e}; pruned id {pruned} "
               f"area {mmap.liquid_area[top]:.3f} vs {mmap.liquid_area[pocket]:.3f}; 50-frame drift {drift:.3f} <= 0.05")


def test_criterion_05_free_surface_equivalence():
    rng = np.random.default_rng(55)
    worst = 0.0
    checked = 0
    pruned_scenes = 0
    while checked < 10:
        s = random_scene(rng, bubbles_enabled=False)
        if not well_posed(s, need_active=False):
            continue
        s.source = 0.0
        system = s.assemble()
        g = s.geom
        A, b, cells = free_surface_poisson(s.labels, g.flat("w"), g.flat("theta"), s.u_star,
                                           g.flat("solid"), s.params.rho, s.params.dt, s.grid.dx)
        Ad = system.A.to_dense()
        x, _ = pcg_solve(system.A, system.rhs, 1e-15, 10 * system.size)
        p, _ = unpack_solution(system, x, s.mmap, s.grid)
        u, valid = apply_pressure_gradient(s.grid, system, x, s.mmap, s.params)
        P, _, U, _ = oracle_solve(s, system)
        idx = [i * s.grid.ny + j for (i, j) in cells]
        worst = max(worst, np.abs(Ad - A).max() / np.abs(A).max(),
                    np.abs(system.rhs - b).max() / max(np.abs(b).max(), 1.0),
                    rel_err(p[idx], np.linalg.solve(A, b)), rel_err(u[valid], U[valid]),
                    rel_err(p, P.ravel()))
        checked += 1
    # With constraints enabled but every bubble pruned, the same rows drop out bit for bit.
    # Sparse air makes it likely that each enclosure holds at most one bubble.
    while pruned_scenes < 5:
        s = random_scene(rng, p_air=0.03, bubbles_enabled=False)
        if not well_posed(s, need_active=False) or s.mmap.n_bubbles == 0:
            continue
        on_map, _ = build_material_map(s.grid, s.labels, s.geom, (), (), True)
        if on_map.n_active:
            continue
        off = s.assemble()
        on = assemble_reduced_system(s.grid, s.u_star, on_map, s.geom, s.params, (), s.source)
        same = np.array_equal(on.A.to_dense(), off.A.to_dense()) and np.array_equal(on.rhs, off.rhs)
        worst = max(worst, 0.0 if same else np.inf)
        pruned_scenes += 1
    acceptance(5, "constraint-free systems equal the plain free-surface Poisson path",
               worst <= 1e-12,
               f"10 scenes, worst rel diff {worst:.2e} <= 1e-12; {pruned_scenes} fully pruned scenes "
               "bitwise equal to the constraint-free system")


@pytest.mark.parametrize("name", ["water_cooler_2d", "moving_platform"])
def test_criterion_06_overhead(name):
    t0 = time.perf_counter()
    rep = compare_mode(build_preset(name), n_frames=10, repeats=3)
    elapsed = time.perf_counter() - t0
    ok = rep["time_ratio"] <= 1.25 and rep["iteration_ratio"] <= 1.20 and elapsed < 600
    acceptance(6, f"bubble overhead on {name}", ok,
               f"time ratio {rep['time_ratio']:.3f} <= 1.25, CG iteration ratio {rep['iteration_ratio']:.3f} <= 1.20, "
               f"{rep['bubbles']['substeps']} substeps, {elapsed:.0f}s < 600s")


def chamber_levels(labels, dx):
    """Equivalent liquid heights left and right of the dividing wall (cells 46 to 49)."""
    left = np.count_nonzero(labels[:46] == LIQUID) / 46 * dx
    right = np.count_nonzero(labels[50:] == LIQUID) / 46 * dx
    return left, right


def test_criterion_07_wall_with_holes():
    t0 = time.perf_counter()
    on = run_preset("wall_with_holes", True)
    off = run_preset("wall_with_holes", False)
    elapsed = time.perf_counter() - t0
    h0 = chamber_levels(on.snapshots[0][0], on.dx)[0]
    d_on = abs(np.subtract(*chamber_levels(on.snapshots[-1][0], on.dx))) / h0
    d_off = abs(np.subtract(*chamber_levels(off.snapshots[-1][0], off.dx))) / h0
    ok = d_on >= 0.20 and d_off <= 0.05 and elapsed < 600
    acceptance(7, "levels stay apart with bubbles, equalize without", ok,
               f"{len(on.snapshots) - 1} frames: level difference / initial height on {d_on:.3f} >= 0.20, "
               f"off {d_off:.3f} <= 0.05, {elapsed:.0f}s < 600s")


def test_criterion_08_piston_flux():
    run = run_preset("moving_platform", True)
    swept = 0.2 * 36 * H
    rows = [r for r in run.rows if r["t"] <= 1.75 and r["solid_flux"] != 0.0]
    worst_balance = max(abs(r["liquid_flux"] + r["solid_flux"]) / abs(r["solid_flux"]) for r in rows)
    worst_swept = max(abs(-r["solid_flux"] - swept) / swept for r in rows)
    ok = len(rows) >= 20 and worst_balance <= 1e-3 and worst_swept <= 1e-3
    acceptance(8, "piston flux passes through the bubble to the liquid surface", ok,
               f"{len(rows)} substeps with the piston on the pocket: |liquid+solid|/|solid| {worst_balance:.1e}, "
               f"|solid-swept|/swept {worst_swept:.1e} (swept {swept:.4f}), both <= 1e-3")


def bubble_shape(phi):
    """Area and isoperimetric ratio of the closed zero contour around the domain centre."""
    c0 = (phi.shape[0] - 1) / 2
    best = None
    for c in measure.find_contours(phi, 0.0):
        if not np.allclose(c[0], c[-1]):
            continue
        x, y = c[:, 0], c[:, 1]
        area = 0.5 * abs(np.dot(x, np.roll(y, 1)) - np.dot(y, np.roll(x, 1)))
        if np.hypot(x.mean() - c0, y.mean() - c0) > 10 or area > 1000:
            continue
        perim = np.hypot(np.diff(x), np.diff(y)).sum()
        best = (area, 4 * np.pi * area / perim ** 2)
    return best


def test_criterion_09_surface_tension():
    run = run_preset("surface_tension_square", True)
    shapes = [bubble_shape(phi) for _, phi, _ in run.snapshots]
    survived = all(s is not None for s in shapes)
    area = np.array([s[0] for s in shapes]) if survived else np.zeros(1)
    iso = np.array([s[1] for s in shapes]) if survived else np.zeros(1)
    area_dev = np.abs(area / area[0] - 1).max() if survived else np.inf
    avg = np.convolve(iso, np.ones(20) / 20, mode="valid")
    # The bubble keeps oscillating once round, which leaves ripples of order 1e-3
    # in the moving average; a drop below the running maximum larger than
    # RIPPLE would mean the shape is regressing.
    dip = float(np.max(np.maximum.accumulate(avg) - avg))
    ok = (survived and len(shapes) == 301 and area_dev <= 0.10 and dip <= RIPPLE
          and avg[-1] > avg[0] and avg[-1] >= 0.9)
    acceptance(9, "square bubble rounds up under tension without collapsing", ok,
               f"300 frames: max area change {area_dev:.3f} <= 0.10; iso {iso[0]:.3f} -> {iso[-1]:.3f}; "
               f"20-frame mean {avg[0]:.3f} -> {avg[-1]:.3f} >= 0.9, largest dip below running max {dip:.1e} <= {RIPPLE}")


def test_criterion_10_solver_suite(tmp_path):
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(5, 80))
        M = rng.normal(size=(n, n))
        D = M.T @ M + n * np.eye(n)
        b = rng.normal(size=n)
        x, _ = pcg_solve(SparseSymMatrix.from_dense(D), b, tol=1e-12)
        worst = max(worst, rel_err(x, np.linalg.solve(D, b)))
    hydro = run_preset("hydrostatic", True)
    umax = max(r["max_u"] for r in hydro.rows if r["frame"] == 10)
    same = []
    for name in ("trapped_bubble", "moving_platform"):
        cfg = build_preset(name)
        outs = []
        for k in range(2):
            out = tmp_path / f"{name}_{k}"
            assert run_scenario(cfg, out, n_frames=5) == 0
            outs.append((out / "diagnostics.csv").read_bytes())
        same.append(outs[0] == outs[1])
    ok = worst <= 1e-8 and umax <= 1e-4 and all(same)
    acceptance(10, "PCG vs dense, hydrostatic rest, byte-identical reruns", ok,
               f"PCG worst rel err {worst:.1e} <= 1e-8; hydrostatic frame-10 max|u| {umax:.1e} <= 1e-4; "
               f"diagnostics identical across reruns: {all(same)}")
