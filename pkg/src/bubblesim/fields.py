"""Staggered MAC storage, material labels and cut-cell / ghost-fluid face coefficients.

Layout: cell arrays are ``(nx, ny)`` indexed ``[i, j]`` with ``i`` along x.
x-normal faces live in ``u`` with shape ``(nx + 1, ny)`` (face ``[i, j]`` sits
between cells ``i - 1`` and ``i``); y-normal faces live in ``v`` with shape
``(nx, ny + 1)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConfigError
from .geometry import composite_sdf, owner_index

log = logging.getLogger(__name__)

SOLID = 0
LIQUID = 1
AIR = 2
OUTSIDE = -1

# Smaller floors let a one-cell liquid film between air at different pressures
# amplify the jump enough to blow the film apart within a substep.
THETA_MIN = 0.05

SIDES = ("left", "right", "bottom", "top")

LIQUID_SURFACE = "liquid"
SOLID_SURFACE = "solid"


@dataclass
class StaggeredGrid:
    nx: int
    ny: int
    dx: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ConfigError(f"grid must be at least 3x3, got {self.nx}x{self.ny}")
        if not self.dx > 0:
            raise ConfigError(f"dx must be positive, got {self.dx}")
        self.origin = (float(self.origin[0]), float(self.origin[1]))

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def u_shape(self):
        return (self.nx + 1, self.ny)

    @property
    def v_shape(self):
        return (self.nx, self.ny + 1)

    @property
    def n_faces(self):
        return (self.nx + 1) * self.ny + self.nx * (self.ny + 1)

    @property
    def extent(self):
        ox, oy = self.origin
        return (ox, oy, ox + self.nx * self.dx, oy + self.ny * self.dx)

    def zeros_cells(self):
        return np.zeros(self.shape)

    def zeros_u(self):
        return np.zeros(self.u_shape)

    def zeros_v(self):
        return np.zeros(self.v_shape)

    def cell_centers(self):
        ox, oy = self.origin
        x = ox + (np.arange(self.nx) + 0.5) * self.dx
        y = oy + (np.arange(self.ny) + 0.5) * self.dx
        return np.meshgrid(x, y, indexing="ij")

    def u_positions(self):
        ox, oy = self.origin
        x = ox + np.arange(self.nx + 1) * self.dx
        y = oy + (np.arange(self.ny) + 0.5) * self.dx
        return np.meshgrid(x, y, indexing="ij")

    def v_positions(self):
        ox, oy = self.origin
        x = ox + (np.arange(self.nx) + 0.5) * self.dx
        y = oy + np.arange(self.ny + 1) * self.dx
        return np.meshgrid(x, y, indexing="ij")

    def nodes(self):
        ox, oy = self.origin
        x = ox + np.arange(self.nx + 1) * self.dx
        y = oy + np.arange(self.ny + 1) * self.dx
        return np.meshgrid(x, y, indexing="ij")

    def contains(self, point) -> bool:
        x0, y0, x1, y1 = self.extent
        return x0 <= point[0] <= x1 and y0 <= point[1] <= y1

    def cell_of(self, point):
        ox, oy = self.origin
        i = int(np.clip(np.floor((point[0] - ox) / self.dx), 0, self.nx - 1))
        j = int(np.clip(np.floor((point[1] - oy) / self.dx), 0, self.ny - 1))
        return i, j


@dataclass
class LevelSetField:
    phi: np.ndarray
    kind: str = LIQUID_SURFACE


@dataclass
class FaceGeometry:
    """Per-face coefficients, stored per component grid.

    ``theta`` is 1 on faces that are not liquid-air; ``kappa`` holds the
    interface curvature on liquid-air faces (zero elsewhere).
    """

    w_u: np.ndarray
    w_v: np.ndarray
    theta_u: np.ndarray
    theta_v: np.ndarray
    solid_u: np.ndarray
    solid_v: np.ndarray
    kappa_u: np.ndarray = None
    kappa_v: np.ndarray = None

    def __post_init__(self):
        if self.kappa_u is None:
            self.kappa_u = np.zeros_like(self.w_u)
        if self.kappa_v is None:
            self.kappa_v = np.zeros_like(self.w_v)

    def flat(self, name):
        return np.concatenate([getattr(self, name + "_u").ravel(), getattr(self, name + "_v").ravel()])


@dataclass(frozen=True)
class FaceTable:
    """Flattened view of every face: x-faces first, then y-faces.

    ``neg``/``pos`` are flat cell indices of the cells on the negative and
    positive side of the face, or -1 past the domain boundary. ``side`` names
    the domain side for boundary faces (empty string otherwise).
    """

    neg: np.ndarray
    pos: np.ndarray
    axis: np.ndarray
    side: np.ndarray
    n_u: int


@lru_cache(maxsize=16)
def face_table(nx: int, ny: int) -> FaceTable:
    i, j = np.meshgrid(np.arange(nx + 1), np.arange(ny), indexing="ij")
    neg_u = np.where(i > 0, (i - 1) * ny + j, -1)
    pos_u = np.where(i < nx, i * ny + j, -1)
    side_u = np.where(i == 0, "left", np.where(i == nx, "right", ""))
    i, j = np.meshgrid(np.arange(nx), np.arange(ny + 1), indexing="ij")
    neg_v = np.where(j > 0, i * ny + (j - 1), -1)
    pos_v = np.where(j < ny, i * ny + j, -1)
    side_v = np.where(j == 0, "bottom", np.where(j == ny, "top", ""))
    n_u = (nx + 1) * ny
    table = FaceTable(
        neg=np.concatenate([neg_u.ravel(), neg_v.ravel()]),
        pos=np.concatenate([pos_u.ravel(), pos_v.ravel()]),
        axis=np.concatenate([np.zeros(n_u, dtype=np.int8), np.ones(nx * (ny + 1), dtype=np.int8)]),
        side=np.concatenate([side_u.ravel(), side_v.ravel()]),
        n_u=n_u,
    )
    for arr in (table.neg, table.pos, table.axis, table.side):
        arr.setflags(write=False)
    return table


def split_faces(grid: StaggeredGrid, flat):
    """Inverse of the flat face ordering: returns ``(u, v)`` arrays."""
    n_u = (grid.nx + 1) * grid.ny
    return flat[:n_u].reshape(grid.u_shape), flat[n_u:].reshape(grid.v_shape)


def face_labels(labels: np.ndarray, table: FaceTable):
    """Labels of the negative/positive neighbours of each face (OUTSIDE past the boundary)."""
    flat = labels.ravel()
    ln = np.where(table.neg >= 0, flat[np.maximum(table.neg, 0)], OUTSIDE)
    lp = np.where(table.pos >= 0, flat[np.maximum(table.pos, 0)], OUTSIDE)
    return ln, lp


def classify_cells(phi_liquid, phi_solid) -> np.ndarray:
    """Label each cell SOLID, LIQUID or AIR from the cell-centre level sets (solid wins)."""
    phi_l = np.asarray(getattr(phi_liquid, "phi", phi_liquid))
    phi_s = np.asarray(getattr(phi_solid, "phi", phi_solid))
    if phi_l.shape != phi_s.shape:
        raise ConfigError(f"level set shapes differ: {phi_l.shape} vs {phi_s.shape}")
    labels = np.full(phi_l.shape, AIR, dtype=np.int8)
    labels[phi_l < 0] = LIQUID
    labels[phi_s < 0] = SOLID
    return labels


def face_fraction(phi_a, phi_b):
    """Fraction of a face segment outside the solid, from the solid SDF at its two ends."""
    a = np.asarray(phi_a, dtype=float)
    b = np.asarray(phi_b, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(
            (a >= 0) & (b >= 0),
            1.0,
            np.where((a < 0) & (b < 0), 0.0, np.maximum(a, b) / np.abs(a - b)),
        )
    frac = np.clip(frac, 0.0, 1.0)
    return float(frac) if frac.ndim == 0 else frac


def ghost_theta(phi_liquid_cell, phi_air_cell, theta_min: float = THETA_MIN):
    """Ghost-fluid liquid fraction along the segment joining a liquid and an air cell centre."""
    pl = np.asarray(phi_liquid_cell, dtype=float)
    pa = np.asarray(phi_air_cell, dtype=float)
    bad = ~((pl < 0) & (pa >= 0))
    with np.errstate(divide="ignore", invalid="ignore"):
        theta = np.clip(pl / (pl - pa), theta_min, 1.0)
    if np.any(bad):
        log.warning("ghost_theta: %d faces with labels inconsistent with phi; using theta=1", int(np.sum(bad)))
        theta = np.where(bad, 1.0, theta)
    return float(theta) if theta.ndim == 0 else theta


def sample_solid_velocity(axis: int, x, y, t: float, primitives, t_velocity=None) -> np.ndarray:
    """Prescribed normal velocity of the solid owning each face midpoint.

    ``axis`` is 0 for x-normal faces and 1 for y-normal faces. Static solids
    (and points owned by no solid) give zero.
    """
    tv = t if t_velocity is None else t_velocity
    x = np.asarray(x, dtype=float)
    out = np.zeros(np.broadcast(x, np.asarray(y)).shape)
    if not any(p.is_moving for p in primitives):
        return out
    owner = owner_index(primitives, x, y, t)
    for k, prim in enumerate(primitives):
        if prim.is_moving:
            out[owner == k] = prim.velocity(tv)[axis]
    return out


def solid_phi_cells(grid: StaggeredGrid, solids, t: float = 0.0) -> np.ndarray:
    x, y = grid.cell_centers()
    return composite_sdf(solids, x, y, t)


def compute_face_geometry(
    grid: StaggeredGrid,
    phi_l: np.ndarray,
    labels: np.ndarray,
    solids,
    t: float = 0.0,
    open_sides=(),
    t_velocity: float | None = None,
) -> FaceGeometry:
    """Cut-cell fractions, ghost-fluid thetas and solid velocities for every face.

    Solid positions are taken at ``t``; prescribed velocities at ``t_velocity``
    (defaults to ``t``), which lets a substep use its midpoint velocity.
    """
    tv = t if t_velocity is None else t_velocity
    xn, yn = grid.nodes()
    phi_nodes = composite_sdf(solids, xn, yn, t)
    w_u = face_fraction(phi_nodes[:, :-1], phi_nodes[:, 1:])
    w_v = face_fraction(phi_nodes[:-1, :], phi_nodes[1:, :])
    w_u = np.atleast_2d(w_u).reshape(grid.u_shape)
    w_v = np.atleast_2d(w_v).reshape(grid.v_shape)
    # Closed domain sides behave as static walls.
    if "left" not in open_sides:
        w_u[0, :] = 0.0
    if "right" not in open_sides:
        w_u[-1, :] = 0.0
    if "bottom" not in open_sides:
        w_v[:, 0] = 0.0
    if "top" not in open_sides:
        w_v[:, -1] = 0.0

    xu, yu = grid.u_positions()
    xv, yv = grid.v_positions()
    solid_u = sample_solid_velocity(0, xu, yu, t, solids, tv)
    solid_v = sample_solid_velocity(1, xv, yv, t, solids, tv)
    for side, arr, idx in (("left", solid_u, (0, slice(None))), ("right", solid_u, (-1, slice(None))),
                           ("bottom", solid_v, (slice(None), 0)), ("top", solid_v, (slice(None), -1))):
        if side not in open_sides:
            arr[idx] = 0.0

    theta_u = np.ones(grid.u_shape)
    theta_v = np.ones(grid.v_shape)
    for theta, lo, hi, plo, phi_hi in (
        (theta_u[1:-1, :], labels[:-1, :], labels[1:, :], phi_l[:-1, :], phi_l[1:, :]),
        (theta_v[:, 1:-1], labels[:, :-1], labels[:, 1:], phi_l[:, :-1], phi_l[:, 1:]),
    ):
        la = (lo == LIQUID) & (hi == AIR)
        al = (lo == AIR) & (hi == LIQUID)
        if np.any(la):
            theta[la] = ghost_theta(plo[la], phi_hi[la])
        if np.any(al):
            theta[al] = ghost_theta(phi_hi[al], plo[al])
    return FaceGeometry(w_u, w_v, theta_u, theta_v, solid_u, solid_v)
