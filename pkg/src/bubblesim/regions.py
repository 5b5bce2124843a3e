"""Bubble region identification and redundant-constraint pruning."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numba
import numpy as np

from .fields import AIR, LIQUID, SOLID, FaceGeometry, StaggeredGrid

log = logging.getLogger(__name__)


@dataclass
class MaterialMap:
    label: np.ndarray
    bubble_id: np.ndarray
    n_bubbles: int
    active: np.ndarray = None
    liquid_area: np.ndarray = None

    def __post_init__(self):
        if self.active is None:
            self.active = np.ones(self.n_bubbles, dtype=bool)
        if self.liquid_area is None:
            self.liquid_area = np.zeros(self.n_bubbles)

    @property
    def n_active(self) -> int:
        return int(np.count_nonzero(self.active))

    def bubble_volumes(self, dx: float) -> np.ndarray:
        """Cell-count area of each bubble (world units)."""
        ids = self.bubble_id[self.bubble_id >= 0]
        return np.bincount(ids, minlength=self.n_bubbles).astype(float) * dx * dx


@dataclass
class EnclosureGroup:
    cells: np.ndarray  # flat cell indices
    bubbles: list = field(default_factory=list)
    enclosed: bool = True


@numba.njit(cache=True)
def _flood(mask):
    nx, ny = mask.shape
    out = np.full((nx, ny), -1, dtype=np.int64)
    stack = np.empty(nx * ny, dtype=np.int64)
    n = 0
    for i0 in range(nx):
        for j0 in range(ny):
            if not mask[i0, j0] or out[i0, j0] >= 0:
                continue
            out[i0, j0] = n
            top = 0
            stack[top] = i0 * ny + j0
            top += 1
            while top > 0:
                top -= 1
                c = stack[top]
                i = c // ny
                j = c - i * ny
                if i > 0 and mask[i - 1, j] and out[i - 1, j] < 0:
                    out[i - 1, j] = n
                    stack[top] = c - ny
                    top += 1
                if i < nx - 1 and mask[i + 1, j] and out[i + 1, j] < 0:
                    out[i + 1, j] = n
                    stack[top] = c + ny
                    top += 1
                if j > 0 and mask[i, j - 1] and out[i, j - 1] < 0:
                    out[i, j - 1] = n
                    stack[top] = c - 1
                    top += 1
                if j < ny - 1 and mask[i, j + 1] and out[i, j + 1] < 0:
                    out[i, j + 1] = n
                    stack[top] = c + 1
                    top += 1
            n += 1
    return out, n


def flood_components(mask: np.ndarray):
    """4-connected components of a boolean cell mask, numbered in scan order."""
    ids, n = _flood(np.ascontiguousarray(mask, dtype=np.bool_))
    return ids, int(n)


def label_bubbles(labels: np.ndarray):
    """Flood fill over AIR cells sharing faces; returns ``(bubble_id, n_bubbles)``."""
    return flood_components(labels == AIR)


def find_enclosure_groups(labels: np.ndarray, open_sides=(), bubble_id=None) -> list[EnclosureGroup]:
    """Connected non-solid volumes; a group is enclosed unless it reaches an open domain side."""
    ids, n = flood_components(labels != SOLID)
    touches = np.zeros(n, dtype=bool)
    edges = {"left": ids[0, :], "right": ids[-1, :], "bottom": ids[:, 0], "top": ids[:, -1]}
    for side in open_sides:
        e = edges[side]
        touches[e[e >= 0]] = True
    flat = ids.ravel()
    order = np.argsort(flat, kind="stable")
    starts = np.searchsorted(flat[order], np.arange(n + 1))
    groups = []
    for g in range(n):
        cells = order[starts[g]:starts[g + 1]]
        bubbles = []
        if bubble_id is not None:
            b = bubble_id.ravel()[cells]
            bubbles = sorted(int(x) for x in np.unique(b[b >= 0]))
        groups.append(EnclosureGroup(cells=cells, bubbles=bubbles, enclosed=not touches[g]))
    return groups


def bubble_liquid_area(mmap: MaterialMap, geom: FaceGeometry, dx: float) -> np.ndarray:
    """Total liquid-contact face length (w * dx) for each bubble."""
    area = np.zeros(mmap.n_bubbles)
    lab, bid = mmap.label, mmap.bubble_id
    for w, lo, hi, blo, bhi in (
        (geom.w_u[1:-1, :], lab[:-1, :], lab[1:, :], bid[:-1, :], bid[1:, :]),
        (geom.w_v[:, 1:-1], lab[:, :-1], lab[:, 1:], bid[:, :-1], bid[:, 1:]),
    ):
        la = (lo == LIQUID) & (hi == AIR)
        al = (lo == AIR) & (hi == LIQUID)
        area += np.bincount(bhi[la], weights=w[la] * dx, minlength=mmap.n_bubbles)
        area += np.bincount(blo[al], weights=w[al] * dx, minlength=mmap.n_bubbles)
    return area


def seed_bubble_ids(grid: StaggeredGrid, mmap: MaterialMap, seeds) -> list[int]:
    """Bubble ids of the air regions containing each seed point (seeds off air are ignored)."""
    out = []
    for pt in seeds:
        i, j = grid.cell_of(pt)
        b = int(mmap.bubble_id[i, j])
        if b >= 0 and b not in out:
            out.append(b)
    return out


def prune_constraints(mmap: MaterialMap, groups, freesurface_ids=()) -> np.ndarray:
    """Active-constraint mask after dropping free-surface regions and one bubble per enclosed volume."""
    active = np.ones(mmap.n_bubbles, dtype=bool)
    for b in freesurface_ids:
        active[b] = False
    for g in groups:
        if not g.enclosed:
            continue
        cand = [b for b in g.bubbles if active[b]]
        if not cand or len(cand) < len(g.bubbles):
            # Already anchored by a free-surface region.
            continue
        areas = mmap.liquid_area[cand]
        # argmax returns the first maximum, i.e. the lowest id among ties.
        active[cand[int(np.argmax(areas))]] = False
    return active


def build_material_map(
    grid: StaggeredGrid,
    labels: np.ndarray,
    geom: FaceGeometry,
    open_sides=(),
    freesurface_seeds=(),
    bubbles_enabled: bool = True,
):
    """Label bubbles, measure liquid contact and prune; returns ``(MaterialMap, groups)``."""
    bubble_id, n = label_bubbles(labels)
    mmap = MaterialMap(label=labels, bubble_id=bubble_id, n_bubbles=n)
    mmap.liquid_area = bubble_liquid_area(mmap, geom, grid.dx)
    groups = find_enclosure_groups(labels, open_sides, bubble_id)
    if bubbles_enabled:
        fs = seed_bubble_ids(grid, mmap, freesurface_seeds)
        mmap.active = prune_constraints(mmap, groups, fs)
    else:
        mmap.active = np.zeros(n, dtype=bool)
    return mmap, groups
