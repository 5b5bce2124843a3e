"""Free-surface liquid solver with incompressible zero-density bubble constraints (2D)."""

from .config import ScenarioConfig, config_from_dict, parse_config
from .presets import build_preset, preset_names
from .timeloop import Simulation, SimState, step_frame

__all__ = [
    "ScenarioConfig",
    "Simulation",
    "SimState",
    "build_preset",
    "config_from_dict",
    "parse_config",
    "preset_names",
    "step_frame",
]

__version__ = "0.1.0"
