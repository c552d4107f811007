from .simulation import Simulation
from .config import load_config
from .scene_io import load_scene, parse_scene

__all__ = ["Simulation", "load_config", "load_scene", "parse_scene"]
