"""Semi-Lagrangian transport on the staggered grid and velocity extrapolation."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import map_coordinates

from .fields import StaggeredGrid

# Index-space offset of each staggering relative to cell-corner coordinates.
_STAGGER = {"cell": (0.5, 0.5), "u": (0.0, 0.5), "v": (0.5, 0.0)}


def sample(grid: StaggeredGrid, q, x, y, stagger: str = "cell", order: int = 1):
    """Interpolate a staggered array at world points (clamped to the array).

    ``order=1`` is bilinear; ``order=3`` is an interpolating cubic spline.
    """
    sx, sy = _STAGGER[stagger]
    ox, oy = grid.origin
    fi = (np.asarray(x) - ox) / grid.dx - sx
    fj = (np.asarray(y) - oy) / grid.dx - sy
    return map_coordinates(q, [fi, fj], order=order, mode="nearest")


def sample_velocity(grid: StaggeredGrid, u, v, x, y):
    return sample(grid, u, x, y, "u"), sample(grid, v, x, y, "v")


def _clamp(grid, x, y):
    x0, y0, x1, y1 = grid.extent
    return np.clip(x, x0, x1), np.clip(y, y0, y1)


def backtrace(grid: StaggeredGrid, u, v, x, y, dt):
    """Midpoint (RK2) backtrace of points through the velocity field."""
    ux, vy = sample_velocity(grid, u, v, x, y)
    xm, ym = _clamp(grid, x - 0.5 * dt * ux, y - 0.5 * dt * vy)
    ux, vy = sample_velocity(grid, u, v, xm, ym)
    return _clamp(grid, x - dt * ux, y - dt * vy)


def _positions(grid, stagger):
    return {"cell": grid.cell_centers, "u": grid.u_positions, "v": grid.v_positions}[stagger]()


def advect_semilagrangian(grid: StaggeredGrid, q, u, v, dt, stagger: str = "cell", order: int = 1):
    """Transport a cell or face array through ``(u, v)`` for time ``dt``.

    The backtrace always samples velocity bilinearly; ``order`` selects the
    interpolation of ``q`` at the departure points.
    """
    x, y = _positions(grid, stagger)
    xb, yb = backtrace(grid, u, v, x, y, dt)
    return sample(grid, q, xb, yb, stagger, order)


def advect_velocity(grid: StaggeredGrid, u, v, dt):
    return (advect_semilagrangian(grid, u, u, v, dt, "u"),
            advect_semilagrangian(grid, v, u, v, dt, "v"))


def extrapolate_velocity(q, valid, layers: int = 4):
    """Fill invalid entries layer by layer with the mean of valid 4-neighbours.

    Entries still unreached after ``layers`` passes are set to zero. Returns
    ``(q, valid)`` with the mask grown by the filled layers.
    """
    q = np.where(valid, q, 0.0)
    valid = valid.copy()
    for _ in range(layers):
        acc = np.zeros_like(q)
        cnt = np.zeros(q.shape)
        for axis in (0, 1):
            for shift in (1, -1):
                src = [slice(None), slice(None)]
                dst = [slice(None), slice(None)]
                if shift == 1:
                    src[axis], dst[axis] = slice(None, -1), slice(1, None)
                else:
                    src[axis], dst[axis] = slice(1, None), slice(None, -1)
                src, dst = tuple(src), tuple(dst)
                m = valid[src]
                acc[dst] += np.where(m, q[src], 0.0)
                cnt[dst] += m
        new = ~valid & (cnt > 0)
        if not new.any():
            break
        q[new] = acc[new] / cnt[new]
        valid |= new
    return q, valid
