"""Signed-distance scene primitives and prescribed rigid motion.

All distances are negative inside a shape. A scene is an ordered list of
primitives folded left to right: UNION takes the pointwise minimum,
SUBTRACT carves the primitive out with ``max(phi, -sdf)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

BOX = "box"
CIRCLE = "circle"
HALF_PLANE = "half_plane"
SHAPES = (BOX, CIRCLE, HALF_PLANE)

UNION = "union"
SUBTRACT = "subtract"
OPS = (UNION, SUBTRACT)


@dataclass(frozen=True)
class MotionSegment:
    """Constant translation velocity starting at ``t_start``."""

    t_start: float
    velocity: tuple[float, float]


@dataclass(frozen=True)
class Primitive:
    shape: str
    op: str = UNION
    params: dict = field(default_factory=dict)
    motion: tuple[MotionSegment, ...] = ()

    def velocity(self, t: float) -> np.ndarray:
        """Prescribed translation velocity at time ``t`` (zero before the first segment)."""
        vel = np.zeros(2)
        for seg in self.motion:
            if t >= seg.t_start:
                vel = np.asarray(seg.velocity, dtype=float)
        return vel

    def offset(self, t: float) -> np.ndarray:
        """Displacement accumulated by the piecewise-constant schedule up to ``t``."""
        disp = np.zeros(2)
        segs = sorted(self.motion, key=lambda s: s.t_start)
        for k, seg in enumerate(segs):
            if t <= seg.t_start:
                break
            end = segs[k + 1].t_start if k + 1 < len(segs) else np.inf
            span = min(t, end) - seg.t_start
            disp += span * np.asarray(seg.velocity, dtype=float)
        return disp

    @property
    def is_moving(self) -> bool:
        return any(np.any(np.asarray(s.velocity) != 0.0) for s in self.motion)

    def sdf(self, x, y, t: float = 0.0):
        """Exact signed distance of the (translated) standalone shape."""
        ox, oy = self.offset(t) if self.motion else (0.0, 0.0)
        x = np.asarray(x, dtype=float) - ox
        y = np.asarray(y, dtype=float) - oy
        p = self.params
        if self.shape == BOX:
            (x0, y0), (x1, y1) = p["min"], p["max"]
            cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
            hx, hy = 0.5 * (x1 - x0), 0.5 * (y1 - y0)
            qx = np.abs(x - cx) - hx
            qy = np.abs(y - cy) - hy
            outside = np.hypot(np.maximum(qx, 0.0), np.maximum(qy, 0.0))
            inside = np.minimum(np.maximum(qx, qy), 0.0)
            return outside + inside
        if self.shape == CIRCLE:
            cx, cy = p["center"]
            return np.hypot(x - cx, y - cy) - p["radius"]
        if self.shape == HALF_PLANE:
            px, py = p["point"]
            nx, ny = p["normal"]
            norm = np.hypot(nx, ny)
            return ((x - px) * nx + (y - py) * ny) / norm
        raise ValueError(f"unknown shape {self.shape!r}")


def box(lo, hi, op=UNION, motion=()) -> Primitive:
    return Primitive(BOX, op, {"min": tuple(lo), "max": tuple(hi)}, tuple(motion))


def circle(center, radius, op=UNION, motion=()) -> Primitive:
    return Primitive(CIRCLE, op, {"center": tuple(center), "radius": float(radius)}, tuple(motion))


def half_plane(point, normal, op=UNION, motion=()) -> Primitive:
    return Primitive(HALF_PLANE, op, {"point": tuple(point), "normal": tuple(normal)}, tuple(motion))


def composite_sdf(prims: Sequence[Primitive], x, y, t: float = 0.0):
    """Fold the primitive list into one signed distance; empty list means "nowhere"."""
    x = np.asarray(x, dtype=float)
    phi = np.full(np.broadcast(x, np.asarray(y)).shape, np.inf)
    for prim in prims:
        d = prim.sdf(x, y, t)
        if prim.op == UNION:
            phi = np.minimum(phi, d)
        else:
            phi = np.maximum(phi, -d)
    return phi


def owner_index(prims: Sequence[Primitive], x, y, t: float = 0.0):
    """Index of the union primitive with the most negative SDF at each point (-1 if none)."""
    x = np.asarray(x, dtype=float)
    shape = np.broadcast(x, np.asarray(y)).shape
    best = np.full(shape, np.inf)
    owner = np.full(shape, -1, dtype=np.int64)
    for k, prim in enumerate(prims):
        if prim.op != UNION:
            continue
        d = prim.sdf(x, y, t)
        better = d < best
        best = np.where(better, d, best)
        owner = np.where(better, k, owner)
    return owner
