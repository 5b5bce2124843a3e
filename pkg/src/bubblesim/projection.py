"""Constrained pressure projection.

Unknowns are one pressure per liquid cell plus one multiplier per active
bubble. With per-face mass ``rho * w * theta / dt`` and divergence scaled by
``1 / dx``, eliminating the face velocities gives a symmetric positive
(semi-)definite matrix whose entries are assembled face by face:

* liquid-liquid face: the usual 5-point Laplacian stencil, coefficient
  ``c = dt * w / (rho * dx**2)``;
* liquid-air face: ghost-fluid coefficient ``g = c / theta``; if the air
  belongs to an active bubble the face also couples the liquid pressure to
  that bubble's multiplier, otherwise the air side is a Dirichlet value.

The bubble's multiplier acts as a single pressure shared by all of its
air cells. Surface tension enters as a known ghost pressure jump
``sigma * kappa``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import SimError
from .fields import (
    AIR,
    LIQUID,
    OUTSIDE,
    SOLID,
    FaceGeometry,
    StaggeredGrid,
    face_labels,
    face_table,
)
from .krylov import SparseSymMatrix
from .regions import MaterialMap

log = logging.getLogger(__name__)

GRAD_EPS = 1e-8


@dataclass
class PhysicsParams:
    rho: float = 1000.0
    gravity: tuple[float, float] = (0.0, -9.81)
    sigma: float = 0.0
    dt: float = 1.0 / 30.0

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")


@dataclass
class FaceClasses:
    """Per-face roles, indexed in the flat face order of :func:`face_table`."""

    solidish: np.ndarray  # velocity prescribed by the solid
    ll: np.ndarray  # liquid on both sides
    la: np.ndarray  # liquid on one side, air (or open boundary) on the other
    liquid_cell: np.ndarray  # flat index of the liquid cell on LA faces (-1 elsewhere)
    liquid_is_neg: np.ndarray  # LA faces whose liquid cell is on the negative side
    air_bubble: np.ndarray  # bubble id on the air side of LA faces (-1 for open boundary)
    u_eff: np.ndarray  # u* with solid-touching faces overwritten by the solid velocity
    w: np.ndarray
    theta: np.ndarray
    solid: np.ndarray
    kappa: np.ndarray


@dataclass
class ReducedSystem:
    A: SparseSymMatrix
    rhs: np.ndarray
    cell_row: np.ndarray  # flat cell -> row, -1 when not an unknown
    bubble_row: np.ndarray  # bubble id -> row, -1 when inactive
    n_cells: int
    n_active: int
    faces: FaceClasses = None
    floating_components: int = 0
    deactivated: list = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.n_cells + self.n_active

    def write_matrix_market(self, prefix):
        self.A.write_matrix_market(f"{prefix}_A.mtx", comment="reduced pressure/multiplier system")
        np.savetxt(f"{prefix}_rhs.txt", self.rhs, fmt="%.17g")


def classify_faces(grid: StaggeredGrid, u_star_flat, mmap: MaterialMap, geom: FaceGeometry,
                   open_sides=()) -> FaceClasses:
    table = face_table(grid.nx, grid.ny)
    ln, lp = face_labels(mmap.label, table)
    w = geom.flat("w")
    theta = geom.flat("theta")
    solid = geom.flat("solid")
    kappa = geom.flat("kappa")
    open_face = np.isin(table.side, list(open_sides)) if open_sides else np.zeros(len(w), dtype=bool)
    free_n = (ln == AIR) | ((ln == OUTSIDE) & open_face)
    free_p = (lp == AIR) | ((lp == OUTSIDE) & open_face)

    solidish = (ln == SOLID) | (lp == SOLID) | (w <= 0.0) | ((ln == OUTSIDE) | (lp == OUTSIDE)) & ~open_face
    ll = (ln == LIQUID) & (lp == LIQUID) & ~solidish
    la_n = (ln == LIQUID) & free_p & ~solidish
    la_p = (lp == LIQUID) & free_n & ~solidish
    la = la_n | la_p
    liquid_cell = np.where(la_n, table.neg, np.where(la_p, table.pos, -1))
    air_cell = np.where(la_n, table.pos, np.where(la_p, table.neg, -1))
    bid = mmap.bubble_id.ravel()
    air_bubble = np.where(air_cell >= 0, bid[np.maximum(air_cell, 0)], -1)
    air_bubble = np.where(la, air_bubble, -1)
    # Open boundary ghost cells sit at the boundary itself.
    theta = np.where(la & (air_cell < 0), 1.0, theta)
    u_eff = np.where(solidish, solid, u_star_flat)
    return FaceClasses(solidish, ll, la, liquid_cell, la_n, air_bubble, u_eff, w, theta, solid, kappa)


def face_flux(faces: FaceClasses, u_flat):
    """Face-normal volume flux per unit face length: open part plus solid part."""
    return faces.w * u_flat + (1.0 - faces.w) * faces.solid


def cell_divergence(grid: StaggeredGrid, flux):
    """Discrete divergence (outward flux / cell area) of every cell."""
    table = face_table(grid.nx, grid.ny)
    n = grid.nx * grid.ny
    neg, pos = table.neg, table.pos
    mn, mp = neg >= 0, pos >= 0
    out = np.bincount(neg[mn], weights=flux[mn], minlength=n)
    out -= np.bincount(pos[mp], weights=flux[mp], minlength=n)
    return (out / grid.dx).reshape(grid.shape)


def bubble_boundary_flux(grid: StaggeredGrid, mmap: MaterialMap, flux, open_sides=()):
    """Net outward flux (per unit length / cell area) through each bubble's boundary.

    Internal faces between cells of the same bubble cancel and are skipped;
    open-boundary faces are not part of a bubble's closed surface.
    """
    table = face_table(grid.nx, grid.ny)
    bid = mmap.bubble_id.ravel()
    bn = np.where(table.neg >= 0, bid[np.maximum(table.neg, 0)], -1)
    bp = np.where(table.pos >= 0, bid[np.maximum(table.pos, 0)], -1)
    out_n = (bn >= 0) & (bn != bp)
    out_p = (bp >= 0) & (bp != bn)
    if open_sides:
        on_open = np.isin(table.side, list(open_sides))
        out_n &= ~on_open
        out_p &= ~on_open
    nb = mmap.n_bubbles
    total = np.bincount(bn[out_n], weights=flux[out_n], minlength=nb)
    total -= np.bincount(bp[out_p], weights=flux[out_p], minlength=nb)
    return total / grid.dx


def assemble_reduced_system(
    grid: StaggeredGrid,
    u_star_flat,
    mmap: MaterialMap,
    geom: FaceGeometry,
    params: PhysicsParams,
    open_sides=(),
    divergence_source: float = 0.0,
) -> ReducedSystem:
    """Build the symmetric system over liquid pressures and active bubble multipliers."""
    faces = classify_faces(grid, u_star_flat, mmap, geom, open_sides)
    table = face_table(grid.nx, grid.ny)
    dx, dt, rho, sigma = grid.dx, params.dt, params.rho, params.sigma
    n_cells_total = grid.nx * grid.ny
    nb = mmap.n_bubbles
    coef = dt / (rho * dx * dx)

    flux = face_flux(faces, faces.u_eff)
    div = cell_divergence(grid, flux).ravel()
    bubble_flux = bubble_boundary_flux(grid, mmap, flux, open_sides)

    cell_diag = np.zeros(n_cells_total)
    cell_rhs = -div
    dirichlet = np.zeros(n_cells_total, dtype=bool)

    ll = np.flatnonzero(faces.ll)
    c_ll = coef * faces.w[ll]
    cell_diag += np.bincount(table.neg[ll], weights=c_ll, minlength=n_cells_total)
    cell_diag += np.bincount(table.pos[ll], weights=c_ll, minlength=n_cells_total)

    la = np.flatnonzero(faces.la)
    lcell = faces.liquid_cell[la]
    g = coef * faces.w[la] / faces.theta[la]
    jump = sigma * faces.kappa[la] if sigma > 0 else np.zeros(len(la))
    cell_diag += np.bincount(lcell, weights=g, minlength=n_cells_total)
    cell_rhs += np.bincount(lcell, weights=g * jump, minlength=n_cells_total)
    bub = faces.air_bubble[la]

    # Active bubbles need liquid contact to carry a multiplier.
    active = mmap.active.copy()
    touching = np.bincount(bub[bub >= 0], minlength=nb) > 0
    deactivated = [int(b) for b in np.flatnonzero(active & ~touching)]
    for b in deactivated:
        log.warning("bubble %d has no liquid faces; dropping its constraint", b)
    active &= touching

    to_active = np.zeros(len(la), dtype=bool)
    to_active[bub >= 0] = active[bub[bub >= 0]]
    dirichlet[lcell[~to_active]] = True

    is_liquid = mmap.label.ravel() == LIQUID
    cell_row = np.full(n_cells_total, -1, dtype=np.int64)
    unknown = is_liquid & (cell_diag > 0)
    n_cells = int(np.count_nonzero(unknown))
    cell_row[unknown] = np.arange(n_cells)
    bubble_row = np.full(nb, -1, dtype=np.int64)
    n_active = int(np.count_nonzero(active))
    bubble_row[active] = n_cells + np.arange(n_active)
    n = n_cells + n_active

    diag = np.zeros(n)
    rhs = np.zeros(n)
    diag[:n_cells] = cell_diag[unknown]
    rhs[:n_cells] = cell_rhs[unknown] + divergence_source

    ga = g[to_active]
    ba = bub[to_active]
    diag[n_cells:] = np.bincount(bubble_row[ba] - n_cells, weights=ga, minlength=n_active)
    rhs[n_cells:] = -bubble_flux[active]
    rhs[n_cells:] -= np.bincount(bubble_row[ba] - n_cells, weights=ga * jump[to_active], minlength=n_active)

    rows = np.concatenate([cell_row[table.neg[ll]], cell_row[lcell[to_active]]])
    cols = np.concatenate([cell_row[table.pos[ll]], bubble_row[ba]])
    vals = -np.concatenate([c_ll, ga])
    A = SparseSymMatrix.from_parts(n, diag, rows, cols, vals)

    system = ReducedSystem(A, rhs, cell_row, bubble_row, n_cells, n_active, faces,
                           deactivated=deactivated)
    system.floating_components = _project_null_spaces(system, dirichlet[unknown])
    return system


def _project_null_spaces(system: ReducedSystem, cell_dirichlet):
    """Make the rhs consistent on connected blocks that have no Dirichlet row.

    Such blocks (pure Neumann liquid, or an enclosed volume where every bubble
    is constrained) have the constant vector in their null space; removing
    the mean of the rhs lets CG converge to a solution defined up to that
    constant.
    """
    n = system.size
    if n == 0:
        return 0
    ncomp, comp = connected_components(system.A.csr, directed=False)
    anchored = np.zeros(ncomp, dtype=bool)
    rows_d = np.flatnonzero(cell_dirichlet)
    anchored[comp[rows_d]] = True
    floating = np.flatnonzero(~anchored)
    for k in floating:
        m = comp == k
        system.rhs[m] -= system.rhs[m].mean()
    return len(floating)


def unpack_solution(system: ReducedSystem, x, mmap: MaterialMap, grid: StaggeredGrid):
    """Scatter a solution vector into cell pressures and per-bubble multipliers."""
    x = np.asarray(x, dtype=float)
    if x.shape != (system.size,):
        raise SimError(f"solution has {x.shape} entries, system needs {system.size}")
    p = np.zeros(grid.nx * grid.ny)
    rows = system.cell_row
    p[rows >= 0] = x[rows[rows >= 0]]
    lam = np.zeros(mmap.n_bubbles)
    br = system.bubble_row
    lam[br >= 0] = x[br[br >= 0]]
    return p, lam


def apply_pressure_gradient(grid: StaggeredGrid, system: ReducedSystem, x, mmap: MaterialMap,
                            params: PhysicsParams):
    """Recover face velocities from pressures and multipliers.

    Returns ``(u_flat, valid_flat)``; air-air faces carry no velocity and are
    marked invalid for later extrapolation.
    """
    faces = system.faces
    table = face_table(grid.nx, grid.ny)
    p, lam = unpack_solution(system, x, mmap, grid)
    scale = params.dt / (params.rho * grid.dx)
    u = faces.u_eff.copy()

    ll = faces.ll
    u[ll] -= scale * (p[table.pos[ll]] - p[table.neg[ll]])

    la = faces.la
    bub = faces.air_bubble[la]
    ghost = np.where(bub >= 0, lam[np.maximum(bub, 0)], 0.0)
    if params.sigma > 0:
        ghost = ghost + params.sigma * faces.kappa[la]
    pl = p[faces.liquid_cell[la]]
    # Pressure difference taken positive-side minus negative-side.
    dp = np.where(faces.liquid_is_neg[la], ghost - pl, pl - ghost)
    u[la] -= scale / faces.theta[la] * dp

    valid = faces.solidish | ll | la
    return u, valid


# ---------------------------------------------------------------------------
# Curvature


def curvature_field(phi, dx):
    """Mean curvature div(grad phi / |grad phi|) at cell centres by central differences.

    The border is padded by linear extrapolation so planar interfaces touching
    the domain edge keep zero curvature.
    """
    p = np.pad(phi, 1, mode="reflect", reflect_type="odd")
    c = p[1:-1, 1:-1]
    px = (p[2:, 1:-1] - p[:-2, 1:-1]) / (2 * dx)
    py = (p[1:-1, 2:] - p[1:-1, :-2]) / (2 * dx)
    pxx = (p[2:, 1:-1] - 2 * c + p[:-2, 1:-1]) / (dx * dx)
    pyy = (p[1:-1, 2:] - 2 * c + p[1:-1, :-2]) / (dx * dx)
    pxy = (p[2:, 2:] - p[2:, :-2] - p[:-2, 2:] + p[:-2, :-2]) / (4 * dx * dx)
    g2 = px * px + py * py
    g = np.sqrt(g2)
    with np.errstate(divide="ignore", invalid="ignore"):
        k = (pxx * py * py - 2 * px * py * pxy + pyy * px * px) / (g2 * g)
    return np.where(g < GRAD_EPS, 0.0, k)


def _interp_kappa(k_liq, k_air, theta, dx):
    return np.clip(k_liq + theta * (k_air - k_liq), -1.0 / dx, 1.0 / dx)


def face_curvature(phi, dx, axis, i, j, theta):
    """Curvature at the interface crossing of one liquid-air face.

    ``(axis, i, j)`` indexes the face in its component grid; the adjacent
    cells are ``(i-1, j)``/``(i, j)`` for x-faces and ``(i, j-1)``/``(i, j)``
    for y-faces.
    """
    k = curvature_field(phi, dx)
    a = (i - 1, j) if axis == 0 else (i, j - 1)
    b = (i, j)
    if phi[a] < 0 <= phi[b]:
        liq, air = a, b
    else:
        liq, air = b, a
    return float(_interp_kappa(k[liq], k[air], theta, dx))


def fill_face_curvatures(geom: FaceGeometry, phi, labels, dx):
    """Populate ``geom.kappa_u/v`` on liquid-air faces."""
    k = curvature_field(phi, dx)
    geom.kappa_u[:] = 0.0
    geom.kappa_v[:] = 0.0
    for kap, theta, lo, hi, klo, khi in (
        (geom.kappa_u[1:-1, :], geom.theta_u[1:-1, :], labels[:-1, :], labels[1:, :], k[:-1, :], k[1:, :]),
        (geom.kappa_v[:, 1:-1], geom.theta_v[:, 1:-1], labels[:, :-1], labels[:, 1:], k[:, :-1], k[:, 1:]),
    ):
        la = (lo == LIQUID) & (hi == AIR)
        al = (lo == AIR) & (hi == LIQUID)
        kap[la] = _interp_kappa(klo[la], khi[la], theta[la], dx)
        kap[al] = _interp_kappa(khi[al], klo[al], theta[al], dx)
    return geom


# ---------------------------------------------------------------------------
# Post-solve diagnostics


@dataclass
class ConstraintReport:
    max_divergence: float
    bubble_net_flux: np.ndarray  # area / time, per bubble
    bubble_liquid_flux: np.ndarray
    bubble_solid_flux: np.ndarray
    max_active_flux: float


def constraint_report(grid: StaggeredGrid, system: ReducedSystem, u_flat, mmap: MaterialMap,
                      open_sides=(), divergence_source: float = 0.0) -> ConstraintReport:
    """Residual divergence of liquid cells and net flux of every bubble after projection."""
    faces = system.faces
    flux = face_flux(faces, u_flat)
    div = cell_divergence(grid, flux).ravel()
    unknown = system.cell_row >= 0
    maxdiv = float(np.max(np.abs(div[unknown] - divergence_source))) if np.any(unknown) else 0.0
    dx = grid.dx
    total = bubble_boundary_flux(grid, mmap, flux, open_sides) * dx * dx
    liquid_only = np.where(faces.la, faces.w * u_flat, 0.0)
    liquid = bubble_boundary_flux(grid, mmap, liquid_only, open_sides) * dx * dx
    solid = total - liquid
    act = system.bubble_row >= 0
    maxflux = float(np.max(np.abs(total[act]))) if np.any(act) else 0.0
    return ConstraintReport(maxdiv, total, liquid, solid, maxflux)
