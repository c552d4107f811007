"""
Scene files and result writers.

A scene is a JSON object::

    {
      "dimension": 2,
      "speed_of_sound": 343.0,
      "walls": [{"id": 0, "vertices": [[0, 0], [1, 0]], "normal": [0, 1], "absorption": 1.0}],
      "patches": [{"type": "circle", "params": {"center": [0, 0], "radius": 2}, "absorption": 1.0, "M": 100}],
      "point_reflectors": [{"position": [0.5, 0.5], "vector": [1, 0], "absorption": 1.0}],
      "source": {"position": [0.3, 0.3], "directivity": "omni"},
      "receiver": {"position": [0.6, 0.4], "directivity": {"kind": "cardioid", "axis": [1, 0]}},
      "simulation": {
        "max_order": 6, "curved_max_order": 1, "lattice_M": 100, "collocated": false,
        "tolerances": {"geom_tol": 1e-9, "angular_tol": null, "collocation_eps": 1e-3},
        "output": {"fs": 16000, "duration": null, "formats": ["csv", "wav"]}
      }
    }

Only ``dimension``, ``source`` and ``receiver`` are required.  Wall normals are inferred
from the vertex winding when omitted: the left-hand normal of the segment in 2D and
Newell's normal of the polygon in 3D.  The sign of a normal never changes a result,
since reflections only depend on the line it spans.
"""
import csv
import json
import logging
import math
from dataclasses import dataclass, field
from numbers import Real
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.io import wavfile

from .curved_engine import MAX_CURVED_ORDER
from .entities import DirectivityKind, Signal
from .exceptions import OutputError, ParseError, ValidationError
from .geometry import DEFAULT_LATTICE_M, DEFAULT_TOL, UNIT_NORM_TOL, Boundary, PlanarWall, PointReflector, as_point
from .patches import make_patch
from .planar_engine import DEFAULT_MAX_ORDER
from .rir import DEFAULT_COLLOCATION_EPS, DEFAULT_SPEED_OF_SOUND, DirectivityPattern
from .utils import check_int, check_positive


__all__ = [
    "OUTPUT_FORMATS",
    "Tolerances",
    "OutputSettings",
    "Scene",
    "parse_scene",
    "serialize_scene",
    "load_scene",
    "read_excitation",
    "path_record",
    "write_outputs",
]


logger = logging.getLogger(__name__)

OUTPUT_FORMATS = ("csv", "wav")

_TOP_LEVEL_FIELDS = {
    "dimension",
    "speed_of_sound",
    "walls",
    "patches",
    "point_reflectors",
    "source",
    "receiver",
    "simulation",
}
_WALL_FIELDS = {"id", "vertices", "normal", "absorption"}
_PATCH_FIELDS = {"id", "type", "params", "absorption", "M"}
_POINT_FIELDS = {"id", "position", "vector", "absorption"}
_TRANSDUCER_FIELDS = {"position", "directivity"}
_SIMULATION_FIELDS = {"max_order", "curved_max_order", "lattice_M", "collocated", "tolerances", "output"}
_TOLERANCE_FIELDS = {"geom_tol", "angular_tol", "collocation_eps"}
_OUTPUT_FIELDS = {"fs", "duration", "formats"}


@dataclass(frozen=True)
class Tolerances:
    geom_tol: float = DEFAULT_TOL
    angular_tol: Optional[float] = None
    collocation_eps: float = DEFAULT_COLLOCATION_EPS

    def __post_init__(self):
        check_positive(self.geom_tol, "tolerances.geom_tol")
        if self.angular_tol is not None:
            check_positive(self.angular_tol, "tolerances.angular_tol")
        check_positive(self.collocation_eps, "tolerances.collocation_eps")


@dataclass(frozen=True)
class OutputSettings:
    fs: float = 16000.0
    duration: Optional[float] = None
    formats: Tuple[str, ...] = OUTPUT_FORMATS

    def __post_init__(self):
        check_positive(self.fs, "output.fs")
        if self.duration is not None:
            check_positive(self.duration, "output.duration")
        formats = tuple(self.formats)
        unknown = sorted(set(formats) - set(OUTPUT_FORMATS))
        if unknown:
            raise ValidationError(f"unknown formats {unknown}, expected a subset of {list(OUTPUT_FORMATS)}", "formats")
        object.__setattr__(self, "formats", formats)


@dataclass(frozen=True, eq=False)
class Scene:
    dimension: int
    boundary: Boundary
    source: np.ndarray
    receiver: np.ndarray
    source_directivity: DirectivityPattern = field(default_factory=DirectivityPattern.omni)
    receiver_directivity: DirectivityPattern = field(default_factory=DirectivityPattern.omni)
    c: float = DEFAULT_SPEED_OF_SOUND
    max_order: int = DEFAULT_MAX_ORDER
    curved_max_order: int = 1
    lattice_M: int = DEFAULT_LATTICE_M
    patch_lattice: Dict[int, int] = field(default_factory=dict)
    collocated: bool = False
    tolerances: Tolerances = field(default_factory=Tolerances)
    output: OutputSettings = field(default_factory=OutputSettings)

    def __post_init__(self):
        check_int(self.dimension, "dimension", minimum=2, maximum=3)
        object.__setattr__(self, "source", as_point(self.source, self.dimension, field="source.position"))
        object.__setattr__(self, "receiver", as_point(self.receiver, self.dimension, field="receiver.position"))
        if len(self.boundary) and self.boundary.dimension != self.dimension:
            raise ValidationError(f"boundary elements are {self.boundary.dimension}D in a {self.dimension}D scene")
        check_positive(self.c, "speed_of_sound")
        check_int(self.max_order, "simulation.max_order", minimum=0)
        check_int(self.curved_max_order, "simulation.curved_max_order", minimum=0, maximum=MAX_CURVED_ORDER)
        check_int(self.lattice_M, "simulation.lattice_M", minimum=2)
        for patch_id, M in self.patch_lattice.items():
            check_int(M, f"patch {patch_id} M", minimum=2)

        if not self.collocated and np.linalg.norm(self.source - self.receiver) < self.tolerances.collocation_eps:
            raise ValidationError(
                "source and receiver coincide; set simulation.collocated to true to simulate this configuration"
            )

    def __str__(self):
        return f"{self.dimension}D scene with {len(self.boundary)} boundary elements"


def _field(path, key):
    return f"{path}.{key}" if path else key


def _object(value, path, allowed):
    if not isinstance(value, dict):
        raise ParseError("expected an object", field=path or None)
    unknown = sorted(set(value) - allowed)
    if unknown:
        raise ParseError(f"unknown fields {unknown}", field=path or None)
    return value


def _require(obj, key, path):
    if key not in obj:
        raise ParseError("missing required field", field=_field(path, key))
    return obj[key]


def _number(value, path):
    if isinstance(value, bool) or not isinstance(value, Real):
        raise ParseError(f"expected a number, got {value!r}", field=path)
    return float(value)


def _integer(value, path):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(f"expected an integer, got {value!r}", field=path)
    return value


def _optional_number(obj, key, path, default):
    value = obj.get(key)
    return default if value is None else _number(value, _field(path, key))


def _list(value, path):
    if not isinstance(value, list):
        raise ParseError("expected an array", field=path)
    return value


def _vector(value, path):
    return [_number(x, f"{path}[{i}]") for i, x in enumerate(_list(value, path))]


def _infer_normal(vertices, path):
    if vertices.shape[1] == 2:
        if len(vertices) != 2:
            raise ValidationError("a 2D wall is a segment with exactly 2 vertices", field=path)
        direction = vertices[1] - vertices[0]
        normal = np.array([-direction[1], direction[0]])
    else:
        normal = 0.5 * np.sum(np.cross(vertices, np.roll(vertices, -1, axis=0)), axis=0)
    norm = np.linalg.norm(normal)
    if norm == 0.0:
        raise ValidationError("wall vertices are degenerate", field=path)
    return normal / norm


def _parse_wall(entry, path, default_id, dimension):
    entry = _object(entry, path, _WALL_FIELDS)
    wall_id = _integer(entry.get("id", default_id), _field(path, "id"))
    vertices = [
        _vector(v, f"{path}.vertices[{i}]") for i, v in enumerate(_list(_require(entry, "vertices", path), path))
    ]
    if not vertices or any(len(v) != dimension for v in vertices):
        raise ValidationError(f"wall vertices must have {dimension} coordinates", field=_field(path, "vertices"))
    vertices = np.array(vertices)

    if entry.get("normal") is None:
        normal = _infer_normal(vertices, path)
    else:
        normal = np.array(_vector(entry["normal"], _field(path, "normal")))
        norm = np.linalg.norm(normal)
        if norm == 0.0:
            raise ValidationError("wall normal must be nonzero", field=_field(path, "normal"))
        if abs(norm - 1.0) > UNIT_NORM_TOL:
            normal = normal / norm

    return PlanarWall(
        normal=normal,
        offset=float(np.dot(normal, vertices[0])),
        vertices=vertices,
        absorption=_optional_number(entry, "absorption", path, 1.0),
        id=wall_id,
    )


def _parse_patch(entry, path, default_id, dimension):
    entry = _object(entry, path, _PATCH_FIELDS)
    patch_id = _integer(entry.get("id", default_id), _field(path, "id"))
    kind = _require(entry, "type", path)
    if not isinstance(kind, str):
        raise ParseError("expected a string", field=_field(path, "type"))
    params = _require(entry, "params", path)
    try:
        patch = make_patch(kind, params, _optional_number(entry, "absorption", path, 1.0), patch_id)
    except ValidationError as e:
        raise ValidationError(str(e), field=path) from None
    if patch.dimension != dimension:
        raise ValidationError(f"a {kind} patch is {patch.dimension}D in a {dimension}D scene", field=path)
    M = entry.get("M")
    return patch, None if M is None else _integer(M, _field(path, "M"))


def _parse_point(entry, path, default_id):
    entry = _object(entry, path, _POINT_FIELDS)
    return PointReflector(
        position=_vector(_require(entry, "position", path), _field(path, "position")),
        vector=_vector(_require(entry, "vector", path), _field(path, "vector")),
        absorption=_optional_number(entry, "absorption", path, 1.0),
        id=_integer(entry.get("id", default_id), _field(path, "id")),
    )


def _parse_directivity(value, path):
    if value is None:
        return DirectivityPattern.omni()
    if isinstance(value, str):
        value = {"kind": value}
    value = _object(value, path, {"kind", "axis", "table"})
    try:
        kind = DirectivityKind(_require(value, "kind", path))
    except ValueError:
        raise ParseError(f"unknown directivity kind {value['kind']!r}", field=_field(path, "kind")) from None

    if kind == DirectivityKind.CARDIOID:
        return DirectivityPattern.cardioid(_vector(_require(value, "axis", path), _field(path, "axis")))
    if kind == DirectivityKind.TABULATED:
        entries = []
        for i, row in enumerate(_list(_require(value, "table", path), _field(path, "table"))):
            row_path = f"{path}.table[{i}]"
            row = _object(row, row_path, {"direction", "gain"})
            entries.append(
                (
                    _vector(_require(row, "direction", row_path), _field(row_path, "direction")),
                    _number(_require(row, "gain", row_path), _field(row_path, "gain")),
                )
            )
        return DirectivityPattern.tabulated(entries)
    return DirectivityPattern.omni()


def _parse_transducer(value, path):
    value = _object(value, path, _TRANSDUCER_FIELDS)
    position = _vector(_require(value, "position", path), _field(path, "position"))
    return position, _parse_directivity(value.get("directivity"), _field(path, "directivity"))


def _parse_simulation(value):
    value = _object(value or {}, "simulation", _SIMULATION_FIELDS)
    tolerances = _object(value.get("tolerances") or {}, "simulation.tolerances", _TOLERANCE_FIELDS)
    output = _object(value.get("output") or {}, "simulation.output", _OUTPUT_FIELDS)

    settings = {}
    for key in ("max_order", "curved_max_order", "lattice_M"):
        if value.get(key) is not None:
            settings[key] = _integer(value[key], f"simulation.{key}")
    collocated = value.get("collocated", False)
    if not isinstance(collocated, bool):
        raise ParseError("expected true or false", field="simulation.collocated")
    settings["collocated"] = collocated

    settings["tolerances"] = Tolerances(
        geom_tol=_optional_number(tolerances, "geom_tol", "simulation.tolerances", DEFAULT_TOL),
        angular_tol=_optional_number(tolerances, "angular_tol", "simulation.tolerances", None),
        collocation_eps=_optional_number(
            tolerances, "collocation_eps", "simulation.tolerances", DEFAULT_COLLOCATION_EPS
        ),
    )

    formats = output.get("formats", list(OUTPUT_FORMATS))
    if not all(isinstance(f, str) for f in _list(formats, "simulation.output.formats")):
        raise ParseError("expected an array of strings", field="simulation.output.formats")
    settings["output"] = OutputSettings(
        fs=_optional_number(output, "fs", "simulation.output", 16000.0),
        duration=_optional_number(output, "duration", "simulation.output", None),
        formats=tuple(formats),
    )
    return settings


def parse_scene(text):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"malformed scene: {e.msg}", line=e.lineno) from None

    data = _object(data, "", _TOP_LEVEL_FIELDS)
    dimension = _integer(_require(data, "dimension", ""), "dimension")
    check_int(dimension, "dimension", minimum=2, maximum=3)

    walls = _list(data.get("walls", []), "walls")
    patches = _list(data.get("patches", []), "patches")
    points = _list(data.get("point_reflectors", []), "point_reflectors")

    parsed_walls = [_parse_wall(entry, f"walls[{i}]", i, dimension) for i, entry in enumerate(walls)]
    parsed_patches = []
    patch_lattice = {}
    for i, entry in enumerate(patches):
        patch, M = _parse_patch(entry, f"patches[{i}]", len(walls) + i, dimension)
        parsed_patches.append(patch)
        if M is not None:
            patch_lattice[patch.id] = M
    parsed_points = [
        _parse_point(entry, f"point_reflectors[{i}]", len(walls) + len(patches) + i) for i, entry in enumerate(points)
    ]

    source, source_directivity = _parse_transducer(_require(data, "source", ""), "source")
    receiver, receiver_directivity = _parse_transducer(_require(data, "receiver", ""), "receiver")

    return Scene(
        dimension=dimension,
        boundary=Boundary(walls=parsed_walls, patches=parsed_patches, points=parsed_points),
        source=source,
        receiver=receiver,
        source_directivity=source_directivity,
        receiver_directivity=receiver_directivity,
        c=_optional_number(data, "speed_of_sound", "", DEFAULT_SPEED_OF_SOUND),
        patch_lattice=patch_lattice,
        **_parse_simulation(data.get("simulation")),
    )


def _serialize_directivity(pattern):
    if pattern.kind == DirectivityKind.CARDIOID:
        return {"kind": str(pattern.kind), "axis": pattern.axis.tolist()}
    if pattern.kind == DirectivityKind.TABULATED:
        return {
            "kind": str(pattern.kind),
            "table": [{"direction": d.tolist(), "gain": gain} for d, gain in pattern.table],
        }
    return {"kind": str(pattern.kind)}


def serialize_scene(scene):
    """
    Canonical JSON for ``scene``, with every id, normal and setting spelled out.
    """
    patches = []
    for patch in scene.boundary.patches:
        entry = {"id": patch.id, "type": patch.kind, "params": patch.params, "absorption": patch.absorption}
        if patch.id in scene.patch_lattice:
            entry["M"] = scene.patch_lattice[patch.id]
        patches.append(entry)

    data = {
        "dimension": scene.dimension,
        "speed_of_sound": scene.c,
        "walls": [
            {"id": w.id, "vertices": w.vertices.tolist(), "normal": w.normal.tolist(), "absorption": w.absorption}
            for w in scene.boundary.walls
        ],
        "patches": patches,
        "point_reflectors": [
            {"id": p.id, "position": p.position.tolist(), "vector": p.vector.tolist(), "absorption": p.absorption}
            for p in scene.boundary.points
        ],
        "source": {"position": scene.source.tolist(), "directivity": _serialize_directivity(scene.source_directivity)},
        "receiver": {
            "position": scene.receiver.tolist(),
            "directivity": _serialize_directivity(scene.receiver_directivity),
        },
        "simulation": {
            "max_order": scene.max_order,
            "curved_max_order": scene.curved_max_order,
            "lattice_M": scene.lattice_M,
            "collocated": scene.collocated,
            "tolerances": {
                "geom_tol": scene.tolerances.geom_tol,
                "angular_tol": scene.tolerances.angular_tol,
                "collocation_eps": scene.tolerances.collocation_eps,
            },
            "output": {
                "fs": scene.output.fs,
                "duration": scene.output.duration,
                "formats": list(scene.output.formats),
            },
        },
    }
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def load_scene(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ParseError(f"cannot read scene file {path}: {e.strerror or e}") from None
    logger.info("Loaded scene from %s", path)
    return parse_scene(text)


def read_excitation(path):
    """
    Reads a WAV file as a `~gism.entities.Signal`.  Integer PCM is scaled to [-1, 1] and only
    the first channel of multichannel files is kept.
    """
    try:
        rate, data = wavfile.read(path)
    except (OSError, ValueError) as e:
        raise ValidationError(f"cannot read excitation file {path}: {e}", field="excitation") from None

    if data.ndim > 1:
        logger.warning("Excitation %s has %s channels, using the first", path, data.shape[1])
        data = data[:, 0]

    if data.dtype == np.uint8:
        samples = (data.astype(float) - 128.0) / 128.0
    elif np.issubdtype(data.dtype, np.integer):
        samples = data.astype(float) / -np.iinfo(data.dtype).min
    else:
        samples = data.astype(float)
    return Signal(samples=samples, sample_rate=float(rate))


def path_record(atom, visible=True):
    return {
        "order": atom.order,
        "wall_sequence": list(atom.path.element_ids),
        "points": atom.path.points.tolist(),
        "image": atom.position.tolist(),
        "weight": atom.weight,
        "stratum_dim": atom.stratum_dim,
        "validity_residual": atom.validity_residual,
        "visible": visible,
        "grazing": atom.grazing,
    }


def _write_taps(path, taps):
    with path.open("w", newline="") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(["delay_s", "amplitude", "order", "stratum_dim"])
        for tap in taps:
            writer.writerow([repr(tap.delay), repr(tap.amplitude), tap.order, tap.stratum_dim])


def _write_signal_csv(path, signal):
    with path.open("w", newline="") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(["t", "value"])
        for t, value in zip(signal.times, signal.samples):
            writer.writerow([repr(float(t)), repr(float(value))])


def _write_wav(path, signal):
    rate = int(round(signal.sample_rate))
    if not math.isclose(rate, signal.sample_rate):
        logger.warning("Rounding sample rate %s Hz to %s Hz for %s", signal.sample_rate, rate, path)
    wavfile.write(path, rate, signal.samples.astype(np.float32))


def _write_paths(path, records):
    with path.open("w") as file:
        for record in records:
            file.write(json.dumps(record, sort_keys=True))
            file.write("\n")


def write_outputs(taps, signal, paths, out_dir, formats=OUTPUT_FORMATS):
    """
    Writes ``taps.csv``, ``rir.csv`` and/or ``rir.wav`` (per ``formats``) and ``paths.jsonl``
    into ``out_dir``.  ``taps`` or ``signal`` may be None to skip their files.  ``paths`` is
    an iterable of `path_record` dicts.  Returns the written paths.
    """
    out_dir = Path(out_dir)
    written = []

    def write(name, writer, payload):
        target = out_dir / name
        try:
            writer(target, payload)
        except OSError as e:
            raise OutputError(f"cannot write {target}: {e.strerror or e}", path=str(target)) from None
        written.append(target)

    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OutputError(f"cannot create output directory {out_dir}: {e.strerror or e}", path=str(out_dir)) from None

    if taps is not None:
        write("taps.csv", _write_taps, taps)
    if signal is not None and "csv" in formats:
        write("rir.csv", _write_signal_csv, signal)
    if signal is not None and "wav" in formats:
        write("rir.wav", _write_wav, signal)
    write("paths.jsonl", _write_paths, paths)

    logger.info("Wrote %s", ", ".join(str(p) for p in written))
    return written
