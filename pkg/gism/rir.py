"""
Source measure assembly and room impulse response rendering.

Each atom of the measure contributes ``weight * absorption * directivity / distance``
at delay ``distance / c``, where ``distance`` is measured from the atom to the receiver.
Continuum atoms carry weights in meter^p; their amplitudes are reported in those units.
"""
import logging
import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Optional, Tuple

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .entities import DirectivityKind, Interpolation, Signal, Tap, WeightedAtom
from .exceptions import CollocatedAtom, ValidationError
from .geometry import DEFAULT_TOL, as_point, as_unit_vector
from .paths import check_validity, incidence_angle, is_grazing
from .utils import check_finite, check_fraction, check_positive


__all__ = [
    "DEFAULT_SPEED_OF_SOUND",
    "DEFAULT_COLLOCATION_EPS",
    "DirectivityPattern",
    "SourceMeasure",
    "assemble_measure",
    "directivity_coeff",
    "absorption_coeff",
    "tap_list",
    "render_rir",
]


logger = logging.getLogger(__name__)

DEFAULT_SPEED_OF_SOUND = 343.0
DEFAULT_COLLOCATION_EPS = 1e-3
DEFAULT_SINC_HALF_WIDTH = 32

_BARYCENTRIC_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DirectivityPattern:
    """
    Gain as a function of the unit direction away from a transducer.

    Cardioid gain is ``(1 + cos(theta)) / 2`` about ``axis``.  Tabulated gains are
    interpolated linearly: periodically in angle for 2D tables, barycentrically over
    the convex-hull facets of the table directions for 3D tables.
    """

    kind: DirectivityKind = DirectivityKind.OMNI
    axis: Optional[np.ndarray] = None
    table: Tuple[Tuple[np.ndarray, float], ...] = ()

    def __post_init__(self):
        kind = DirectivityKind(self.kind)
        object.__setattr__(self, "kind", kind)

        if kind == DirectivityKind.CARDIOID:
            if self.axis is None:
                raise ValidationError("a cardioid pattern needs an axis")
            object.__setattr__(self, "axis", as_unit_vector(self.axis, normalize=True, field="directivity axis"))

        if kind == DirectivityKind.TABULATED:
            entries = []
            for i, (direction, gain) in enumerate(self.table):
                field = f"directivity table[{i}]"
                entries.append((as_unit_vector(direction, field=field), check_finite(gain, field)))
            dimensions = {len(direction) for direction, _ in entries}
            if len(dimensions) != 1:
                raise ValidationError("a directivity table needs entries of one dimension")
            dimension = dimensions.pop()
            if len(entries) < 2 * (dimension - 1):
                raise ValidationError(f"a {dimension}D directivity table needs at least {2 * (dimension - 1)} entries")
            object.__setattr__(self, "table", tuple(entries))
            if dimension == 3:
                self._facets

    @classmethod
    def omni(cls):
        return cls()

    @classmethod
    def cardioid(cls, axis):
        return cls(kind=DirectivityKind.CARDIOID, axis=axis)

    @classmethod
    def tabulated(cls, entries):
        return cls(kind=DirectivityKind.TABULATED, table=tuple(entries))

    def __str__(self):
        return f"{self.kind} pattern"

    def __call__(self, direction):
        if self.kind == DirectivityKind.OMNI:
            return 1.0
        direction = np.asarray(direction, dtype=float)
        if self.kind == DirectivityKind.CARDIOID:
            return 0.5 * (1.0 + float(np.dot(self.axis, direction)))
        if len(direction) == 2:
            angles, gains = self._angles
            return float(np.interp(math.atan2(direction[1], direction[0]), angles, gains, period=2.0 * math.pi))
        return self._barycentric(direction)

    @cached_property
    def _angles(self):
        angles = np.array([math.atan2(d[1], d[0]) for d, _ in self.table])
        gains = np.array([gain for _, gain in self.table])
        order = np.argsort(angles, kind="stable")
        return angles[order], gains[order]

    @cached_property
    def _facets(self):
        directions = np.array([d for d, _ in self.table])
        try:
            hull = ConvexHull(directions)
        except QhullError:
            raise ValidationError("3D directivity table directions must span the sphere") from None
        if np.any(hull.equations[:, -1] >= 0.0):
            raise ValidationError("3D directivity table directions must surround the origin")
        inverses = np.linalg.inv(np.swapaxes(directions[hull.simplices], 1, 2))
        return hull.simplices, inverses

    def _barycentric(self, direction):
        simplices, inverses = self._facets
        gains = np.array([gain for _, gain in self.table])
        coefficients = inverses @ direction
        facet = np.flatnonzero(np.all(coefficients >= -_BARYCENTRIC_TOL, axis=1))[0]
        weights = coefficients[facet] / np.sum(coefficients[facet])
        return float(weights @ gains[simplices[facet]])


@dataclass(frozen=True, eq=False)
class SourceMeasure:
    atoms: Tuple[WeightedAtom, ...]
    source: np.ndarray
    receiver: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(self.atoms))
        object.__setattr__(self, "source", as_point(self.source))
        object.__setattr__(self, "receiver", as_point(self.receiver, dimension=len(self.source)))

    def __len__(self):
        return len(self.atoms)

    def strata(self):
        strata = {}
        for atom in self.atoms:
            strata.setdefault(atom.stratum_dim, []).append(atom)
        return {dim: tuple(strata[dim]) for dim in sorted(strata)}

    def counts_by_stratum(self):
        return {dim: len(atoms) for dim, atoms in self.strata().items()}

    def union(self, other):
        return SourceMeasure(atoms=self.atoms + other.atoms, source=self.source, receiver=self.receiver)


def _gain(pattern, offset):
    norm = np.linalg.norm(offset)
    if norm == 0.0:
        return 1.0
    return pattern(offset / norm)


def directivity_coeff(atom, d_s, d_r):
    path = atom.path
    if path.reflections:
        first, last = path.reflections[0].point, path.reflections[-1].point
    else:
        first, last = path.sink, path.source
    return _gain(d_s, first - path.source) * _gain(d_r, last - path.sink)


def absorption_coeff(atom, boundary, hooks=None):
    """
    Product of the retained-amplitude factors of the elements the path reflects off.
    ``hooks`` maps element ids to ``hook(element, incidence_angle)`` callables that replace
    the element's constant factor.
    """
    hooks = hooks or {}
    points = atom.path.points
    coefficient = 1.0
    for j, reflection in enumerate(atom.path.reflections, start=1):
        element = boundary.element(reflection.element_id)
        hook = hooks.get(element.id)
        if hook is None:
            coefficient *= element.absorption
            continue
        angle = incidence_angle(points[j - 1], points[j], element.vector_at(points[j]))
        coefficient *= check_fraction(hook(element, angle), f"absorption hook of {element}")
    return coefficient


def assemble_measure(
    virtual_sources,
    curved_atoms,
    boundary,
    source,
    receiver,
    source_directivity=None,
    receiver_directivity=None,
    hooks=None,
    tol=DEFAULT_TOL,
):
    d_s = source_directivity or DirectivityPattern.omni()
    d_r = receiver_directivity or DirectivityPattern.omni()

    atoms = []
    for virtual_source in virtual_sources:
        path = virtual_source.path
        residual = check_validity(path, boundary, geom_tol=tol)[1] if path.order else 0.0
        atoms.append(
            WeightedAtom(
                position=virtual_source.position,
                weight=1.0,
                stratum_dim=0,
                path=path,
                validity_residual=residual,
                grazing=bool(path.order) and is_grazing(path, boundary, tol),
            )
        )
    atoms.extend(curved_atoms)

    atoms = [
        replace(
            atom, amplitude_factors=(absorption_coeff(atom, boundary, hooks), directivity_coeff(atom, d_s, d_r))
        )
        for atom in atoms
    ]
    return SourceMeasure(atoms=atoms, source=source, receiver=receiver)


def tap_list(measure, c, collocation_eps=DEFAULT_COLLOCATION_EPS):
    """
    Delay and amplitude of every atom, sorted by delay (ties keep atom order).
    """
    c = check_positive(c, "speed of sound")
    taps = []
    for atom in measure.atoms:
        distance = float(np.linalg.norm(atom.position - measure.receiver))
        absorption, directivity = atom.amplitude_factors
        if distance < collocation_eps:
            if atom.order > 0:
                raise CollocatedAtom(f"{atom} lies within {collocation_eps} m of the receiver")
            taps.append(Tap(delay=0.0, amplitude=atom.weight * absorption * directivity, order=0, stratum_dim=0))
            continue
        taps.append(
            Tap(
                delay=distance / c,
                amplitude=atom.weight * absorption * directivity / distance,
                order=atom.order,
                stratum_dim=atom.stratum_dim,
            )
        )
    taps.sort(key=lambda tap: tap.delay)
    return taps


def _accumulate(buffer, start, values):
    stop = start + len(values)
    low, high = max(start, 0), min(stop, len(buffer))
    if low < high:
        buffer[low:high] += values[low - start : high - start]
    return high - low < len(values)


def render_rir(
    measure,
    excitation=None,
    c=DEFAULT_SPEED_OF_SOUND,
    out_rate=16000.0,
    duration=None,
    interpolation=Interpolation.NEAREST,
    collocation_eps=DEFAULT_COLLOCATION_EPS,
    sinc_half_width=DEFAULT_SINC_HALF_WIDTH,
):
    """
    Renders the response to ``excitation`` (a `~gism.entities.Signal`, or None for a unit
    impulse).  Taps are placed on the nearest sample by default; ``interpolation="sinc"``
    uses a Hann-windowed sinc fractional delay instead.  Without ``duration`` the output
    is long enough to hold every tap.
    """
    out_rate = check_positive(out_rate, "output sample rate")
    interpolation = Interpolation(interpolation)
    taps = tap_list(measure, c, collocation_eps)

    if excitation is None:
        kernel, t0 = np.ones(1), 0.0
    else:
        if not math.isclose(excitation.sample_rate, out_rate):
            raise ValidationError(
                f"excitation sample rate {excitation.sample_rate} Hz differs from the output rate {out_rate} Hz"
            )
        kernel, t0 = excitation.samples, excitation.t0

    spread = sinc_half_width if interpolation == Interpolation.SINC else 0
    if duration is None:
        last = max((tap.delay for tap in taps), default=0.0)
        length = int(math.ceil(last * out_rate)) + len(kernel) + spread + 1
    else:
        length = int(round(check_positive(duration, "duration") * out_rate))

    samples = np.zeros(length)
    truncated = 0
    for tap in taps:
        if interpolation == Interpolation.NEAREST:
            start = int(np.rint(tap.delay * out_rate))
            truncated += _accumulate(samples, start, tap.amplitude * kernel)
            continue

        center = tap.delay * out_rate
        start = int(math.floor(center)) - sinc_half_width + 1
        offsets = np.arange(start, start + 2 * sinc_half_width) - center
        window = 0.5 * (1.0 + np.cos(np.pi * offsets / sinc_half_width))
        truncated += _accumulate(samples, start, np.convolve(tap.amplitude * window * np.sinc(offsets), kernel))

    if truncated:
        logger.warning("%s taps extend beyond the rendered duration of %.6g s", truncated, length / out_rate)
    return Signal(samples=samples, sample_rate=out_rate, t0=t0)
