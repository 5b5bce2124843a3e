"""Built-in 2D scenes.

Lengths are in metres on a unit-wide domain; default resolution is 96 cells
across. Geometry is aligned to multiples of ``1/96`` where walls meet air so
that face fractions are exact.
"""

from __future__ import annotations

from .config import ScenarioConfig, config_from_dict
from .errors import ConfigError

H = 1.0 / 96.0


def _box(lo, hi, op="union", motion=None):
    d = {"shape": "box", "op": op, "min": list(lo), "max": list(hi)}
    if motion:
        d["motion"] = motion
    return d


def _base(name, nx=96, ny=96, **physics):
    ph = {"rho": 1000.0, "gravity": [0.0, -9.81], "sigma": 0.0, "cfl": 1.0,
          "max_substeps": 5, "frame_rate": 30.0, "n_frames": 100, "volume_gain": 0.5}
    ph.update(physics)
    return {
        "name": name,
        "grid": {"nx": nx, "ny": ny, "dx": 1.0 / nx, "origin": [0.0, 0.0], "open_sides": []},
        "physics": ph,
        "solids": [],
        "liquid": [],
        "freesurface_seeds": [],
        "bubbles_enabled": True,
        "output": {"directory": f"out/{name}", "frame_stride": 1, "dump_matrix": False},
        "seed": 0,
    }


def hydrostatic():
    doc = _base("hydrostatic", n_frames=10)
    doc["liquid"] = [{"shape": "half_plane", "point": [0.0, 0.5], "normal": [0.0, 1.0]}]
    return doc


def trapped_bubble():
    """Air pocket held under a submerged inverted cup, with free air above the pool."""
    doc = _base("trapped_bubble", n_frames=100)
    doc["solids"] = [
        _box([28 * H, 44 * H], [68 * H, 48 * H]),  # cup roof
        _box([28 * H, 22 * H], [32 * H, 48 * H]),  # left leg
        _box([64 * H, 22 * H], [68 * H, 48 * H]),  # right leg
    ]
    doc["liquid"] = [
        {"shape": "half_plane", "point": [0.0, 76 * H], "normal": [0.0, 1.0]},
        _box([32 * H, 32 * H], [64 * H, 44 * H], op="subtract"),
    ]
    return doc


def rising_bubble():
    doc = _base("rising_bubble", nx=96, ny=192, n_frames=60)
    doc["grid"]["dx"] = H
    doc["liquid"] = [
        {"shape": "half_plane", "point": [0.0, 172 * H], "normal": [0.0, 1.0]},
        _box([36 * H, 16 * H], [60 * H, 40 * H], op="subtract"),
    ]
    return doc


def wall_with_holes():
    """Closed tank split by a wall with a low and a mid-height gap; left side full."""
    doc = _base("wall_with_holes", n_frames=300)
    doc["solids"] = [
        _box([46 * H, -0.1], [50 * H, 1.1]),
        _box([45 * H, 4 * H], [51 * H, 10 * H], op="subtract"),
        _box([45 * H, 18 * H], [51 * H, 24 * H], op="subtract"),
    ]
    doc["liquid"] = [_box([-0.1, -0.1], [46 * H, 86 * H])]
    return doc


def water_cooler_2d():
    """Inverted bottle whose neck opens just above the reservoir surface."""
    doc = _base("water_cooler_2d", n_frames=300)
    doc["solids"] = [
        _box([26 * H, 40 * H], [70 * H, 94 * H]),  # bottle shell
        _box([29 * H, 43 * H], [67 * H, 91 * H], op="subtract"),  # bottle cavity
        _box([44 * H, 40 * H], [52 * H, 43 * H], op="subtract"),  # neck opening
        _box([41 * H, 28 * H], [44 * H, 43 * H]),  # neck walls
        _box([52 * H, 28 * H], [55 * H, 43 * H]),
    ]
    doc["liquid"] = [
        _box([29 * H, 43 * H], [67 * H, 84 * H]),
        _box([44 * H, 28 * H], [52 * H, 43 * H]),
        # Reservoir surface slightly tilted so the neck mouth is not perfectly symmetric.
        {"shape": "half_plane", "point": [0.5, 24 * H], "normal": [-0.02, 1.0]},
    ]
    return doc


def moving_platform():
    """Platform descends in the narrow left chamber, pushing trapped air under a partial divider."""
    doc = _base("moving_platform", n_frames=120)
    doc["solids"] = [
        _box([36 * H, 20 * H], [40 * H, 1.1]),  # divider hanging from the ceiling
        _box([-0.1, 76 * H], [38 * H, 80 * H],
             motion=[{"t": 0.0, "velocity": [0.0, -0.2]}, {"t": 1.75, "velocity": [0.0, 0.0]}]),
    ]
    doc["liquid"] = [{"shape": "half_plane", "point": [0.0, 48 * H], "normal": [0.0, 1.0]}]
    return doc


def surface_tension_square():
    """Square air pocket inside a liquid disk, zero gravity."""
    doc = _base("surface_tension_square", n_frames=300, gravity=[0.0, 0.0], sigma=2.0,
                max_substeps=20, rho=1000.0)
    # Curvature terms dominate the rhs here, so a 1e-5 relative residual
    # leaves more bubble flux error than the per-substep flux bound allows.
    doc["solver"] = {"tolerance": 1e-7}
    doc["liquid"] = [
        {"shape": "circle", "center": [0.5, 0.5], "radius": 0.3},
        _box([40 * H, 40 * H], [56 * H, 56 * H], op="subtract"),
    ]
    return doc


PRESETS = {
    "hydrostatic": hydrostatic,
    "trapped_bubble": trapped_bubble,
    "rising_bubble": rising_bubble,
    "wall_with_holes": wall_with_holes,
    "water_cooler_2d": water_cooler_2d,
    "moving_platform": moving_platform,
    "surface_tension_square": surface_tension_square,
}


def preset_names():
    return sorted(PRESETS)


def preset_document(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return PRESETS[name]()


def build_preset(name: str) -> ScenarioConfig:
    return config_from_dict(preset_document(name))
