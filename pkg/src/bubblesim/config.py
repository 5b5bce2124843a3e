"""Scenario configuration: JSON schema, defaults and strict parsing."""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jsonschema

from .errors import ConfigError
from .fields import SIDES, StaggeredGrid
from .geometry import OPS, SHAPES, MotionSegment, Primitive

_vec2 = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

_primitive = {
    "type": "object",
    "additionalProperties": False,
    "required": ["shape"],
    "properties": {
        "shape": {"enum": list(SHAPES)},
        "op": {"enum": list(OPS)},
        "min": _vec2,
        "max": _vec2,
        "center": _vec2,
        "radius": {"type": "number", "exclusiveMinimum": 0},
        "point": _vec2,
        "normal": _vec2,
        "motion": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["t", "velocity"],
                "properties": {"t": {"type": "number", "minimum": 0}, "velocity": _vec2},
            },
        },
    },
    "allOf": [
        {"if": {"properties": {"shape": {"const": "box"}}}, "then": {"required": ["min", "max"]}},
        {"if": {"properties": {"shape": {"const": "circle"}}}, "then": {"required": ["center", "radius"]}},
        {"if": {"properties": {"shape": {"const": "half_plane"}}}, "then": {"required": ["point", "normal"]}},
    ],
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["grid", "liquid"],
    "properties": {
        "name": {"type": "string"},
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["nx", "ny", "dx"],
            "properties": {
                "nx": {"type": "integer", "minimum": 3},
                "ny": {"type": "integer", "minimum": 3},
                "dx": {"type": "number", "exclusiveMinimum": 0},
                "origin": _vec2,
                "open_sides": {"type": "array", "items": {"enum": list(SIDES)}, "uniqueItems": True},
            },
        },
        "physics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "rho": {"type": "number", "exclusiveMinimum": 0},
                "gravity": _vec2,
                "sigma": {"type": "number", "minimum": 0},
                "cfl": {"type": "number", "exclusiveMinimum": 0},
                "max_substeps": {"type": "integer", "minimum": 1},
                "frame_rate": {"type": "number", "exclusiveMinimum": 0},
                "n_frames": {"type": "integer", "minimum": 1},
                "volume_gain": {"type": "number", "minimum": 0},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tolerance": {"type": "number", "exclusiveMinimum": 0},
                "max_iterations": {"type": ["integer", "null"], "minimum": 1},
            },
        },
        "solids": {"type": "array", "items": _primitive},
        "liquid": {"type": "array", "items": _primitive, "minItems": 1},
        "freesurface_seeds": {"type": "array", "items": _vec2},
        "bubbles_enabled": {"type": "boolean"},
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": "string"},
                "frame_stride": {"type": "integer", "minimum": 1},
                "dump_matrix": {"type": "boolean"},
            },
        },
        "seed": {"type": "integer"},
    },
}


@dataclass
class GridConfig:
    nx: int
    ny: int
    dx: float
    origin: tuple = (0.0, 0.0)
    open_sides: tuple = ()

    def make_grid(self) -> StaggeredGrid:
        return StaggeredGrid(self.nx, self.ny, self.dx, tuple(self.origin))


@dataclass
class PhysicsConfig:
    rho: float = 1000.0
    gravity: tuple = (0.0, -9.81)
    sigma: float = 0.0
    cfl: float = 1.0
    max_substeps: int = 5
    frame_rate: float = 30.0
    n_frames: int = 100
    volume_gain: float = 0.5


@dataclass
class SolverConfig:
    tolerance: float = 1e-5
    max_iterations: int | None = None


@dataclass
class OutputConfig:
    directory: str = "out"
    frame_stride: int = 1
    dump_matrix: bool = False


@dataclass
class ScenarioConfig:
    grid: GridConfig
    liquid: list
    solids: list = field(default_factory=list)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    freesurface_seeds: list = field(default_factory=list)
    bubbles_enabled: bool = True
    output: OutputConfig = field(default_factory=OutputConfig)
    seed: int = 0
    name: str = "scenario"

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "grid": {**asdict(self.grid), "origin": list(self.grid.origin),
                     "open_sides": list(self.grid.open_sides)},
            "physics": {**asdict(self.physics), "gravity": list(self.physics.gravity)},
            "solver": asdict(self.solver),
            "solids": [primitive_to_dict(p) for p in self.solids],
            "liquid": [primitive_to_dict(p) for p in self.liquid],
            "freesurface_seeds": [list(s) for s in self.freesurface_seeds],
            "bubbles_enabled": self.bubbles_enabled,
            "output": asdict(self.output),
            "seed": self.seed,
        }

    def copy(self, **changes) -> "ScenarioConfig":
        out = copy.deepcopy(self)
        for k, v in changes.items():
            setattr(out, k, v)
        return out


def primitive_from_dict(d: dict) -> Primitive:
    params = {k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()
              if k not in ("shape", "op", "motion")}
    motion = tuple(MotionSegment(float(m["t"]), tuple(m["velocity"])) for m in d.get("motion", []))
    return Primitive(d["shape"], d.get("op", "union"), params, motion)


def primitive_to_dict(p: Primitive) -> dict:
    out = {"shape": p.shape, "op": p.op}
    out.update({k: (list(v) if isinstance(v, tuple) else v) for k, v in p.params.items()})
    if p.motion:
        out["motion"] = [{"t": m.t_start, "velocity": list(m.velocity)} for m in p.motion]
    return out


def _field_path(err) -> str:
    return ".".join(str(p) for p in err.absolute_path) or "<root>"


def validate_dict(doc: dict) -> None:
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise ConfigError(f"schema error at {_field_path(err)}: {err.message}")


def config_from_dict(doc: dict) -> ScenarioConfig:
    """Validate a config document and fill in defaults."""
    validate_dict(doc)
    g = doc["grid"]
    grid = GridConfig(g["nx"], g["ny"], float(g["dx"]), tuple(g.get("origin", (0.0, 0.0))),
                      tuple(g.get("open_sides", ())))
    ph = dict(doc.get("physics", {}))
    if "gravity" in ph:
        ph["gravity"] = tuple(ph["gravity"])
    cfg = ScenarioConfig(
        grid=grid,
        liquid=[primitive_from_dict(p) for p in doc["liquid"]],
        solids=[primitive_from_dict(p) for p in doc.get("solids", [])],
        physics=PhysicsConfig(**ph),
        solver=SolverConfig(**doc.get("solver", {})),
        freesurface_seeds=[tuple(s) for s in doc.get("freesurface_seeds", [])],
        bubbles_enabled=doc.get("bubbles_enabled", True),
        output=OutputConfig(**doc.get("output", {})),
        seed=doc.get("seed", 0),
        name=doc.get("name", "scenario"),
    )
    sg = grid.make_grid()
    for k, s in enumerate(cfg.freesurface_seeds):
        if not sg.contains(s):
            raise ConfigError(f"freesurface_seeds.{k}: point {list(s)} lies outside the domain {sg.extent}")
    return cfg


def parse_config(path) -> ScenarioConfig:
    """Strictly parse a JSON scenario file."""
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: malformed JSON: {exc.msg}") from None
    return config_from_dict(doc)
