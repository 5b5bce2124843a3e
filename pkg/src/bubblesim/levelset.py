"""Level-set maintenance: fast-sweeping redistancing and volume measures."""

from __future__ import annotations

import numba
import numpy as np
from scipy.ndimage import spline_filter

REFINE_BAND = 3.0
REFINE_ITERATIONS = 12
FAR_ITERATIONS = 4


@numba.njit(cache=True)
def _init_interface(phi, dx, dist, cpx, cpy, fixed):
    nx, ny = phi.shape
    for i in range(nx):
        for j in range(ny):
            neg = phi[i, j] < 0
            dxc = np.inf
            dyc = np.inf
            sx = 0.0
            sy = 0.0
            for di in (-1, 1):
                ii = i + di
                if 0 <= ii < nx and (phi[ii, j] < 0) != neg:
                    t = phi[i, j] / (phi[i, j] - phi[ii, j])
                    if t * dx < dxc:
                        dxc = t * dx
                        sx = di
            for dj in (-1, 1):
                jj = j + dj
                if 0 <= jj < ny and (phi[i, jj] < 0) != neg:
                    t = phi[i, j] / (phi[i, j] - phi[i, jj])
                    if t * dx < dyc:
                        dyc = t * dx
                        sy = dj
            if dxc == np.inf and dyc == np.inf:
                continue
            x = i * dx
            y = j * dx
            if dxc == 0.0 or dyc == 0.0:
                dist[i, j] = 0.0
                cpx[i, j] = x
                cpy[i, j] = y
                fixed[i, j] = True
                continue
            # Chord estimate: distance to the line through the axis crossings.
            if dyc == np.inf:
                d = dxc
                px, py = x + sx * dxc, y
            elif dxc == np.inf:
                d = dyc
                px, py = x, y + sy * dyc
            else:
                ax = 1.0 / dxc
                ay = 1.0 / dyc
                inv = 1.0 / np.sqrt(ax * ax + ay * ay)
                d = inv
                px = x + d * sx * ax * inv
                py = y + d * sy * ay * inv
            # Gradient estimate |phi| / |grad phi|: exact for smooth distance
            # fields, so convex regions are not eroded by the chord's sagitta.
            i0 = max(i - 1, 0)
            i1 = min(i + 1, nx - 1)
            j0 = max(j - 1, 0)
            j1 = min(j + 1, ny - 1)
            gx = (phi[i1, j] - phi[i0, j]) / ((i1 - i0) * dx)
            gy = (phi[i, j1] - phi[i, j0]) / ((j1 - j0) * dx)
            gn = np.sqrt(gx * gx + gy * gy)
            if gn > 0.5:
                dg = abs(phi[i, j]) / gn
                dmax = min(dxc, dyc)
                if dg > dmax:
                    dg = dmax
                s = 1.0 if phi[i, j] > 0 else -1.0
                d = dg
                px = x - s * dg * gx / gn
                py = y - s * dg * gy / gn
            dist[i, j] = d
            cpx[i, j] = px
            cpy[i, j] = py
            fixed[i, j] = True


@numba.njit(cache=True)
def _sweep(dx, dist, cpx, cpy, fixed, has, iterations):
    nx, ny = dist.shape
    for _ in range(iterations):
        for order in range(4):
            for a in range(nx):
                i = a if order == 0 or order == 2 else nx - 1 - a
                for b in range(ny):
                    j = b if order < 2 else ny - 1 - b
                    if fixed[i, j]:
                        continue
                    x = i * dx
                    y = j * dx
                    for k in range(9):
                        ii = i + k // 3 - 1
                        jj = j + k % 3 - 1
                        if k == 4:
                            continue
                        if ii < 0 or ii >= nx or jj < 0 or jj >= ny or not has[ii, jj]:
                            continue
                        d = np.sqrt((x - cpx[ii, jj]) ** 2 + (y - cpy[ii, jj]) ** 2)
                        if d < dist[i, j]:
                            dist[i, j] = d
                            cpx[i, j] = cpx[ii, jj]
                            cpy[i, j] = cpy[ii, jj]
                            has[i, j] = True


SPLINE_PAD = 3


@numba.njit(cache=True, inline="always")
def _bspline_weights(t):
    """Cubic B-spline weights and their derivatives for offsets -1, 0, 1, 2."""
    t2 = t * t
    t3 = t2 * t
    s = 1.0 - t
    w = (s * s * s / 6.0, (3 * t3 - 6 * t2 + 4) / 6.0, (-3 * t3 + 3 * t2 + 3 * t + 1) / 6.0, t3 / 6.0)
    dw = (-0.5 * s * s, 1.5 * t2 - 2 * t, -1.5 * t2 + t + 0.5, 0.5 * t2)
    return w, dw


def _spline_coefficients(phi):
    """Interpolating cubic B-spline coefficients of ``phi``.

    The field is first padded by linear extrapolation so the spline stays
    accurate up to the domain edge.
    """
    padded = np.pad(phi, SPLINE_PAD, mode="reflect", reflect_type="odd")
    return np.ascontiguousarray(spline_filter(padded, order=3, mode="mirror"))


@numba.njit(cache=True)
def _bicubic(coef, dx, px, py):
    """Spline value and gradient at a world point, from padded B-spline coefficients."""
    nx, ny = coef.shape
    fx = min(max(px / dx + SPLINE_PAD, 1.0), nx - 2.000001)
    fy = min(max(py / dx + SPLINE_PAD, 1.0), ny - 2.000001)
    i0 = int(fx)
    j0 = int(fy)
    wx, dwx = _bspline_weights(fx - i0)
    wy, dwy = _bspline_weights(fy - j0)
    v = 0.0
    gx = 0.0
    gy = 0.0
    for a in range(4):
        ii = i0 + a - 1
        rv = 0.0
        rd = 0.0
        for b in range(4):
            c = coef[ii, j0 + b - 1]
            rv += wy[b] * c
            rd += dwy[b] * c
        v += wx[a] * rv
        gx += dwx[a] * rv
        gy += wx[a] * rd
    return v, gx / dx, gy / dx


@numba.njit(cache=True)
def _refine(coef, dx, dist, cpx, cpy, band, far, iterations):
    """Polish closest points near the interface against the spline's zero set.

    Alternates a normal projection onto ``phi = 0`` with removal of the
    tangential offset, so the foot point ends up where the segment to the
    cell is parallel to the interface normal.
    """
    nx, ny = dist.shape
    for i in range(nx):
        for j in range(ny):
            if dist[i, j] > far:
                continue
            near = dist[i, j] <= band
            x = i * dx
            y = j * dx
            qx = cpx[i, j]
            qy = cpy[i, j]
            ok = False
            for _ in range(iterations):
                v, gx, gy = _bicubic(coef, dx, qx, qy)
                g2 = gx * gx + gy * gy
                if g2 < 1e-12:
                    break
                qx -= v * gx / g2
                qy -= v * gy / g2
                v, gx, gy = _bicubic(coef, dx, qx, qy)
                g2 = gx * gx + gy * gy
                if g2 < 1e-12:
                    break
                gn = np.sqrt(g2)
                nxu = gx / gn
                nyu = gy / gn
                s = (qx - x) * nxu + (qy - y) * nyu
                tx = x + s * nxu
                ty = y + s * nyu
                vt, _, _ = _bicubic(coef, dx, tx, ty)
                ok = abs(v) < 1e-9 * dx
                # Only accept the tangential move if it stays on the interface.
                if abs(vt) < 0.5 * dx:
                    step = abs(tx - qx) + abs(ty - qy)
                    qx = tx
                    qy = ty
                    if ok and step < 1e-9 * dx:
                        break
            # The last tangential move can leave the point slightly off the
            # zero set; finish with normal projections.
            for _ in range(2):
                v, gx, gy = _bicubic(coef, dx, qx, qy)
                g2 = gx * gx + gy * gy
                if g2 < 1e-12:
                    break
                qx -= v * gx / g2
                qy -= v * gy / g2
            v, _, _ = _bicubic(coef, dx, qx, qy)
            if abs(v) > 1e-6 * dx:
                continue
            d = np.sqrt((x - qx) ** 2 + (y - qy) ** 2)
            # Near the interface the polished foot point replaces the estimate;
            # farther out it is only used when it is closer.
            if (near and d <= dist[i, j] + dx) or d < dist[i, j]:
                dist[i, j] = d
                cpx[i, j] = qx
                cpy[i, j] = qy


def redistance(phi, dx: float, iterations: int = 2):
    """Reinitialise ``phi`` to a signed distance, keeping its zero isocontour.

    Cells next to a sign change get a first-order distance estimate from the
    local gradient (or from the linearly interpolated axis crossings where the
    gradient is unreliable); every other cell takes the nearest of its eight
    neighbours' closest interface points, propagated by alternating
    Gauss-Seidel sweeps. Closest points within a few cells of the interface
    are then polished by Newton projection onto the zero set of an
    interpolating cubic B-spline of the input. The far field is propagated
    again from the polished band and each far cell refines its inherited
    foot point. Returns ``(phi, ok)``; ``ok`` is False (and ``phi`` is
    returned unchanged) when the field has no interface.
    """
    phi = np.ascontiguousarray(phi, dtype=float)
    neg = phi < 0
    if neg.all() or not neg.any():
        return phi.copy(), False
    dist = np.full(phi.shape, np.inf)
    cpx = np.zeros(phi.shape)
    cpy = np.zeros(phi.shape)
    fixed = np.zeros(phi.shape, dtype=np.bool_)
    _init_interface(phi, dx, dist, cpx, cpy, fixed)
    has = fixed.copy()
    _sweep(dx, dist, cpx, cpy, fixed, has, iterations)
    band = REFINE_BAND * dx
    coef = _spline_coefficients(phi)
    _refine(coef, dx, dist, cpx, cpy, band, band, REFINE_ITERATIONS)
    # Re-propagate the far field from the polished band only, then let every
    # far cell polish the foot point it inherited.
    near = dist <= band
    dist[~near] = np.inf
    _sweep(dx, dist, cpx, cpy, near.copy(), near.copy(), iterations)
    _refine(coef, dx, dist, cpx, cpy, 0.0, np.inf, FAR_ITERATIONS)
    return np.where(neg, -dist, dist), True


def remove_isolated_cells(phi, phi_solid=None):
    """Flip liquid cells with no liquid 4-neighbour to air.

    Such single-cell specks carry almost no volume but can hover in place:
    a midpoint backtrace from a speck moving faster than the extrapolated
    velocity band returns to its start, so it keeps accumulating gravity.
    Returns ``(phi, n_removed)``.
    """
    liquid = phi < 0
    if phi_solid is not None:
        liquid &= phi_solid >= 0
    nb = np.zeros(phi.shape, dtype=bool)
    nb[1:, :] |= liquid[:-1, :]
    nb[:-1, :] |= liquid[1:, :]
    nb[:, 1:] |= liquid[:, :-1]
    nb[:, :-1] |= liquid[:, 1:]
    speck = liquid & ~nb
    n = int(np.count_nonzero(speck))
    if n:
        phi = phi.copy()
        phi[speck] = np.abs(phi[speck])
    return phi, n


def liquid_fraction(phi, dx):
    """Smeared cell occupancy in [0, 1]: 1 deep inside the liquid."""
    return np.clip(0.5 - phi / dx, 0.0, 1.0)


def liquid_volume(phi, phi_solid, dx):
    """Liquid area (2D volume) over non-solid cells."""
    frac = liquid_fraction(phi, dx)
    return float(np.sum(frac[phi_solid >= 0])) * dx * dx
