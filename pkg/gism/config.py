import importlib.resources as importlib_resources
import logging
from collections.abc import Iterable
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List

from . import resources as gism_resources
from .curved_engine import DEFAULT_MAX_PAIR_CANDIDATES, MAX_CURVED_ORDER
from .entities import Interpolation, WeightConvention
from .exceptions import ConfigurationError, ValidationError
from .rir import DEFAULT_SINC_HALF_WIDTH
from .scene_io import OUTPUT_FORMATS
from .utils import check_int, check_positive


__all__ = ["EngineConfig", "RenderConfig", "RunConfig", "load_config", "generate_config_template", "validate_config"]


logger = logging.getLogger(__name__)

# Excitation value that selects a unit impulse instead of a WAV file.
IMPULSE = "impulse"


@dataclass
class EngineConfig:
    max_order: int = None
    curved_max_order: int = None
    lattice_M: int = None
    weight_convention: WeightConvention = WeightConvention.SPACING
    merge_isolated: bool = False
    max_pair_candidates: int = DEFAULT_MAX_PAIR_CANDIDATES
    threads: int = 1


@dataclass
class RenderConfig:
    fs: float = None
    duration: float = None
    excitation: str = None
    interpolation: Interpolation = Interpolation.NEAREST
    sinc_half_width: int = DEFAULT_SINC_HALF_WIDTH
    formats: List[str] = None


@dataclass
class RunConfig:
    scene_path: str = None
    out_dir: str = "."
    seed: int = 0
    engine: EngineConfig = field(default_factory=EngineConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    # Callables receive the boundary element and the incidence angle in radians.
    absorption_hooks: Dict[int, Callable[[object, float], float]] = field(default_factory=dict)


def load_config(paths=()):
    config = RunConfig()

    if not isinstance(paths, Iterable) or isinstance(paths, (str, Path)):
        paths = [paths]

    for path in paths:
        p = Path(path)
        if not (p.exists() and p.is_file()):
            raise ConfigurationError(f"Config file at {path} not found")
        with p.open() as file:
            source = file.read()
        try:
            exec(compile(source, str(p), "exec"), {}, {"c": config})
        except Exception as e:
            raise ConfigurationError(f"Failed executing config file {path}: {e}") from e
        logger.info("Loaded config file %s", path)

    return config


def generate_config_template():
    return importlib_resources.read_text(gism_resources, "config_template.py")


def _check_optional(checker):
    def check(value, field):
        if value is None:
            return None
        return checker(value, field)

    return check


def _check_formats(value, field):
    unknown = sorted(set(value) - set(OUTPUT_FORMATS))
    if unknown:
        raise ValidationError(f"unknown formats {unknown}", field=field)
    return list(value)


def _check_excitation(value, field):
    if value is None or str(value).lower() == IMPULSE:
        return None
    if not isinstance(value, (str, Path)):
        raise ValidationError(f"expected {IMPULSE!r} or a WAV file path, got {value!r}", field=field)
    return str(value)


def _check_bool(value, field):
    if not isinstance(value, bool):
        raise ValidationError(f"expected True or False, got {value!r}", field=field)
    return value


def _check_hooks(value, field):
    for element_id, hook in value.items():
        check_int(element_id, field)
        if not callable(hook):
            raise ValidationError(f"hook for element {element_id} is not callable", field=field)
    return value


_REQUIRED_PARAMETERS = {("scene_path", "scene file path")}

_CHECKED_PARAMETERS = [
    ("seed", "random seed", lambda v, f: check_int(v, f, minimum=0)),
    ("engine.max_order", "maximum reflection order", _check_optional(lambda v, f: check_int(v, f, minimum=0))),
    (
        "engine.curved_max_order",
        "maximum curved reflection order",
        _check_optional(lambda v, f: check_int(v, f, minimum=0, maximum=MAX_CURVED_ORDER)),
    ),
    ("engine.lattice_M", "lattice density", _check_optional(lambda v, f: check_int(v, f, minimum=2))),
    ("engine.weight_convention", "weight convention", lambda v, f: WeightConvention(v)),
    ("engine.merge_isolated", "merge_isolated flag", _check_bool),
    ("engine.max_pair_candidates", "pair candidate limit", lambda v, f: check_int(v, f, minimum=1)),
    ("engine.threads", "thread count", lambda v, f: check_int(v, f, minimum=1)),
    ("render.fs", "output sample rate", _check_optional(check_positive)),
    ("render.duration", "output duration", _check_optional(check_positive)),
    ("render.excitation", "excitation", _check_excitation),
    ("render.interpolation", "interpolation", lambda v, f: Interpolation(v)),
    ("render.sinc_half_width", "sinc half width", lambda v, f: check_int(v, f, minimum=1)),
    ("render.formats", "output formats", _check_optional(_check_formats)),
    ("absorption_hooks", "absorption hooks", _check_hooks),
]


def validate_config(config):
    """
    Checks required and range-limited settings, normalizing enum values given as strings.
    """
    for param, description in _REQUIRED_PARAMETERS:
        if not getattr(config, param):
            raise ConfigurationError(f"Missing {description}, please set c.{param} in your config file")

    for param, description, check in _CHECKED_PARAMETERS:
        *parents, name = param.split(".")
        owner = config
        for part in parents:
            owner = getattr(owner, part)
        try:
            setattr(owner, name, check(getattr(owner, name), param))
        except (ValidationError, ValueError) as e:
            raise ConfigurationError(f"Invalid {description}, please set c.{param} in your config file ({e})") from None

    return config
