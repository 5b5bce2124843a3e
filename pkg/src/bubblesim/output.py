"""Run outputs: diagnostics CSV, timing CSV, PGM frames and a JSON summary.

``diagnostics.csv`` holds only deterministic quantities so that two runs of
the same scenario produce identical bytes; wall-clock timings go to a
separate ``timings.csv``.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .fields import AIR, LIQUID, SOLID

DIAGNOSTIC_COLUMNS = [
    "frame", "substep", "t", "dt", "n_bubbles", "n_active_constraints", "bubble_volumes",
    "liquid_volume", "cg_iterations", "relative_residual", "max_ustar", "max_u",
    "max_divergence", "max_constraint_flux", "constraint_bound", "liquid_flux", "solid_flux",
    "volume_source", "floating_blocks",
]
TIMING_COLUMNS = ["frame", "substep", "regions_time", "assembly_time", "solve_time"]


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def diagnostics_row(rec) -> list:
    """Flatten a substep record; bubble volumes are ``;``-joined and indexed by bubble id."""
    vols = ";".join(_fmt(v) for v in rec.bubble_volumes)
    return [
        _fmt(rec.frame), _fmt(rec.substep), _fmt(rec.t), _fmt(rec.dt), _fmt(rec.n_bubbles),
        _fmt(rec.n_active), vols, _fmt(rec.liquid_volume), _fmt(rec.cg_iterations),
        _fmt(rec.relative_residual), _fmt(rec.max_ustar), _fmt(rec.max_u),
        _fmt(rec.max_divergence), _fmt(rec.max_constraint_flux), _fmt(rec.constraint_bound),
        _fmt(rec.liquid_flux), _fmt(rec.solid_flux), _fmt(rec.volume_source),
        _fmt(rec.floating_blocks),
    ]


class CsvWriter:
    """Append-only CSV writer that flushes each row, so aborted runs keep partial output."""

    def __init__(self, path, columns):
        self.path = Path(path)
        self._fh = open(self.path, "w", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(columns)
        self._fh.flush()

    def write(self, row):
        self._w.writerow(row)
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_diagnostics(path) -> list[dict]:
    """Parse ``diagnostics.csv`` back into typed dicts."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            d = {}
            for k, v in row.items():
                if k == "bubble_volumes":
                    d[k] = [float(s) for s in v.split(";")] if v else []
                elif k in ("frame", "substep", "n_bubbles", "n_active_constraints",
                           "cg_iterations", "floating_blocks"):
                    d[k] = int(v)
                else:
                    d[k] = float(v)
            out.append(d)
    return out


def material_image(labels, phi, dx, depth_cells: float = 8.0) -> np.ndarray:
    """8-bit material map: solid 0, air 255, liquid 128 darkening with depth.

    Rows run top to bottom (``y`` flipped) so the image is upright.
    """
    img = np.full(labels.shape, 255, dtype=np.uint8)
    img[labels == SOLID] = 0
    liq = labels == LIQUID
    depth = np.clip(-phi / (depth_cells * dx), 0.0, 1.0)
    shade = np.rint(128.0 - 64.0 * depth).astype(np.uint8)
    img[liq] = shade[liq]
    img[labels == AIR] = 255
    return np.ascontiguousarray(img.T[::-1])


def write_pgm(path, image: np.ndarray) -> None:
    """Write a binary P5 greymap; ``image`` is (rows, cols) uint8."""
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.asarray(image, dtype=np.uint8).tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary P5 greymap written by :func:`write_pgm`."""
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos].decode("ascii"))
    if tokens[0] != "P5":
        raise ValueError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    body = data[pos + 1:]
    if len(body) != w * h:
        raise ValueError(f"{path}: expected {w * h} pixel bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w)


def summarize(records, timings, wall_time, final_volumes, frames_done, error=None) -> dict:
    cg = [r.cg_iterations for r in records]
    solve = [t.solve_time for t in timings]
    assembly = [t.assembly_time for t in timings]
    return {
        "frames": frames_done,
        "substeps": len(records),
        "wall_time": wall_time,
        "mean_cg_iterations": float(np.mean(cg)) if cg else 0.0,
        "mean_solve_time": float(np.mean(solve)) if solve else 0.0,
        "mean_assembly_time": float(np.mean(assembly)) if assembly else 0.0,
        "final_bubble_volumes": [float(v) for v in final_volumes],
        "error": error,
    }


def write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
