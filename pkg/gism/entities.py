from enum import Enum
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .exceptions import DegenerateLine


__all__ = [
    "WeightConvention",
    "DirectivityKind",
    "Interpolation",
    "Line",
    "WallSequence",
    "Reflection",
    "ReflectionPath",
    "PathClassification",
    "VirtualSource",
    "LatticeSampling",
    "WeightedAtom",
    "Tap",
    "Signal",
]


class WeightConvention(Enum):
    SPACING = "spacing"
    BALL_VOLUME = "ball_volume"
    JACOBIAN = "jacobian"

    def __str__(self):
        return self.value


class DirectivityKind(Enum):
    OMNI = "omni"
    CARDIOID = "cardioid"
    TABULATED = "tabulated"

    def __str__(self):
        return self.value


class Interpolation(Enum):
    NEAREST = "nearest"
    SINC = "sinc"

    def __str__(self):
        return self.value


def _frozen_array(values):
    array = np.array(values, dtype=float)
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class Line:
    anchor: np.ndarray
    direction: np.ndarray

    @classmethod
    def through(cls, first, second, tol):
        first = np.asarray(first, dtype=float)
        offset = np.asarray(second, dtype=float) - first
        length = np.linalg.norm(offset)
        if length <= tol:
            raise DegenerateLine(f"Cannot build a line through coincident points {first} and {second}")
        return cls(anchor=_frozen_array(first), direction=_frozen_array(offset / length))

    def point_at(self, distance):
        return self.anchor + distance * self.direction

    def distance_to(self, point):
        offset = np.asarray(point, dtype=float) - self.anchor
        return float(np.linalg.norm(offset - (offset @ self.direction) * self.direction))


@dataclass(frozen=True, order=True)
class WallSequence:
    indices: Tuple[int, ...] = ()

    def __post_init__(self):
        indices = tuple(int(i) for i in self.indices)
        for previous, current in zip(indices, indices[1:]):
            if previous == current:
                raise ValueError(f"Wall sequence {indices} repeats wall {current} consecutively")
        object.__setattr__(self, "indices", indices)

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __str__(self):
        return "(" + ", ".join(str(i) for i in self.indices) + ")"


@dataclass(frozen=True, eq=False)
class Reflection:
    point: np.ndarray
    element_id: int

    def __post_init__(self):
        object.__setattr__(self, "point", _frozen_array(self.point))


@dataclass(frozen=True, eq=False)
class ReflectionPath:
    """
    Polygonal path from ``source`` through the reflection points to ``sink``.
    """

    source: np.ndarray
    reflections: Tuple[Reflection, ...] = ()
    sink: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "source", _frozen_array(self.source))
        object.__setattr__(self, "sink", _frozen_array(self.sink))
        object.__setattr__(self, "reflections", tuple(self.reflections))

    @property
    def order(self):
        return len(self.reflections)

    @property
    def points(self):
        return np.array([self.source] + [r.point for r in self.reflections] + [self.sink])

    @property
    def element_ids(self):
        return tuple(r.element_id for r in self.reflections)

    def reversed(self):
        return ReflectionPath(source=self.sink, reflections=tuple(reversed(self.reflections)), sink=self.source)

    def __str__(self):
        return f"path {self.element_ids} from {self.source.tolist()} to {self.sink.tolist()}"


@dataclass(frozen=True)
class PathClassification:
    valid: bool
    visible: bool
    validity_residual: float
    blocking_element: Optional[int] = None
    grazing: bool = False


@dataclass(frozen=True, eq=False)
class VirtualSource:
    position: np.ndarray
    order: int
    path: ReflectionPath
    wall_sequence: WallSequence = field(default_factory=WallSequence)

    def __str__(self):
        return f"order {self.order} image {self.position.tolist()} via {self.wall_sequence}"


@dataclass(frozen=True, eq=False)
class LatticeSampling:
    """
    Lattice samples of a curved patch.  Row ``i`` of every array describes one sample:
    its parameter, mapped point, assigned vector, quadrature weight and the distance
    to its nearest mapped neighbor.
    """

    patch_id: int
    spacing: float
    params: np.ndarray
    points: np.ndarray
    vectors: np.ndarray
    weights: np.ndarray
    nn_distances: np.ndarray
    convention: WeightConvention = WeightConvention.SPACING

    def __len__(self):
        return len(self.weights)

    @property
    def samples(self):
        return list(zip(self.params, self.points, self.vectors, self.weights))

    @property
    def total_weight(self):
        return float(np.sum(self.weights))


@dataclass(frozen=True, eq=False)
class WeightedAtom:
    position: np.ndarray
    weight: float
    stratum_dim: int
    path: ReflectionPath
    amplitude_factors: Tuple[float, float] = (1.0, 1.0)
    validity_residual: float = 0.0
    grazing: bool = False

    @property
    def order(self):
        return self.path.order

    @property
    def absorption(self):
        return self.amplitude_factors[0]

    @property
    def directivity(self):
        return self.amplitude_factors[1]

    def __str__(self):
        return f"stratum {self.stratum_dim} atom at {self.position.tolist()} (weight {self.weight:.6g})"


@dataclass(frozen=True)
class Tap:
    delay: float
    amplitude: float
    order: int = 0
    stratum_dim: int = 0


@dataclass(frozen=True, eq=False)
class Signal:
    samples: np.ndarray
    sample_rate: float
    t0: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1:
            raise ValueError("Signal samples must be one-dimensional")
        if not self.sample_rate > 0:
            raise ValueError(f"Signal sample rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("Signal samples must be finite")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return len(self.samples)

    @property
    def times(self):
        return self.t0 + np.arange(len(self.samples)) / self.sample_rate

    @property
    def duration(self):
        return len(self.samples) / self.sample_rate
