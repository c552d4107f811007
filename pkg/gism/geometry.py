"""
Euclidean primitives, the reflecting boundary and the symmetric projection.

A boundary is a union of planar walls, curved patches and point reflectors.  Every
element carries the vector field used for reflections; the field is only defined
up to sign, since the symmetric projection does not depend on it.
"""
import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import optimize
from scipy.spatial import ConvexHull, QhullError, cKDTree

from .exceptions import AmbiguousBoundary, ValidationError
from .utils import check_fraction, unit


__all__ = [
    "DEFAULT_TOL",
    "DEFAULT_LATTICE_M",
    "as_point",
    "as_unit_vector",
    "PlanarWall",
    "CurvedPatch",
    "PointReflector",
    "Boundary",
    "shoebox",
    "vector_field",
    "symmetric_project",
    "compose_projections",
    "nearest_neighbor_distances",
]


logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9
DEFAULT_LATTICE_M = 100
UNIT_NORM_TOL = 1e-12
PLANARITY_TOL = 1e-9

_SEARCH_SAMPLES = 64


def as_point(coords, dimension=None, field=None):
    point = np.array(coords, dtype=float)
    if point.ndim != 1 or point.shape[0] not in (2, 3):
        raise ValidationError(f"a point needs 2 or 3 coordinates, got {np.shape(coords)}", field=field)
    if dimension is not None and point.shape[0] != dimension:
        raise ValidationError(f"expected a {dimension}D point, got {point.shape[0]}D", field=field)
    if not np.all(np.isfinite(point)):
        raise ValidationError("point coordinates must be finite", field=field)
    point.flags.writeable = False
    return point


def as_unit_vector(coords, normalize=False, field=None):
    vector = as_point(coords, field=field).copy()
    norm = np.linalg.norm(vector)
    if abs(norm - 1.0) <= UNIT_NORM_TOL:
        pass
    elif normalize:
        if norm == 0.0:
            raise ValidationError("cannot normalize a zero vector", field=field)
        vector = vector / norm
    else:
        raise ValidationError(f"vector must have unit norm, got norm {norm!r}", field=field)
    vector.flags.writeable = False
    return vector


def _plane_basis(normal):
    """
    Orthonormal rows spanning the hyperplane orthogonal to ``normal``.
    """
    if normal.shape[0] == 2:
        return np.array([[-normal[1], normal[0]]])
    helper = np.zeros(3)
    helper[np.argmin(np.abs(normal))] = 1.0
    first = unit(np.cross(normal, helper))
    second = np.cross(normal, first)
    return np.array([first, second])


def _segment_distances(points, start, stop):
    """
    Distance from each row of ``points`` to the closed segment [start, stop].
    """
    offset = stop - start
    fraction = np.clip(((points - start) @ offset) / (offset @ offset), 0.0, 1.0)
    return np.linalg.norm(points - (start + fraction[:, None] * offset), axis=1)


@dataclass(frozen=True, eq=False)
class PlanarWall:
    """
    A wall on the hyperplane ``<normal, v> = offset``.  Its extent is the convex hull of
    ``vertices``: a segment in 2D, a convex polygon in 3D.
    """

    normal: np.ndarray
    offset: float
    vertices: np.ndarray
    absorption: float = 1.0
    id: int = 0

    def __post_init__(self):
        normal = as_unit_vector(self.normal, field=f"wall {self.id} normal")
        vertices = np.array(self.vertices, dtype=float)
        if vertices.ndim != 2 or vertices.shape[1] != normal.shape[0] or len(vertices) < normal.shape[0]:
            raise ValidationError(
                f"wall {self.id} needs at least {normal.shape[0]} vertices with {normal.shape[0]} coordinates"
            )
        if not np.all(np.isfinite(vertices)):
            raise ValidationError(f"vertices of wall {self.id} must be finite")

        deviation = np.abs(vertices @ normal - self.offset)
        if deviation.max() > PLANARITY_TOL:
            raise ValidationError(
                f"vertices of wall {self.id} are not on its hyperplane (non-planar wall vertices, "
                f"deviation {deviation.max():.3g} m)"
            )
        check_fraction(self.absorption, f"wall {self.id} absorption")

        vertices.flags.writeable = False
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "offset", float(self.offset))
        object.__setattr__(self, "vertices", vertices)
        self._check_extent()

    def __str__(self):
        return f"wall {self.id}"

    @property
    def dimension(self):
        return self.normal.shape[0]

    @cached_property
    def _basis(self):
        return _plane_basis(self.normal)

    def _in_plane(self, points):
        return (np.atleast_2d(points) - self.offset * self.normal) @ self._basis.T

    @cached_property
    def _extent(self):
        coords = self._in_plane(self.vertices)
        if self.dimension == 2:
            return np.array([coords[:, 0].min(), coords[:, 0].max()])
        try:
            hull = ConvexHull(coords)
        except QhullError:
            raise ValidationError(f"wall {self.id} has an empty relative interior") from None
        # 2D hull vertices come in counterclockwise order
        return coords[hull.vertices]

    def _check_extent(self):
        extent = self._extent
        if self.dimension == 2:
            if extent[1] - extent[0] <= PLANARITY_TOL:
                raise ValidationError(f"wall {self.id} has an empty relative interior")
            return

        if len(extent) < 3:
            raise ValidationError(f"wall {self.id} has an empty relative interior")
        if np.any(self._edge_distances(self._in_plane(self.vertices)) > PLANARITY_TOL):
            raise ValidationError(f"wall {self.id} is not convex, split it into convex parts")

    def _edge_distances(self, coords):
        if self.dimension == 2:
            low, high = self._extent
            return np.minimum(np.abs(coords[:, 0] - low), np.abs(coords[:, 0] - high))
        extent = self._extent
        edges = zip(extent, np.roll(extent, -1, axis=0))
        return np.min([_segment_distances(coords, start, stop) for start, stop in edges], axis=0)

    def _extent_distances(self, coords):
        if self.dimension == 2:
            low, high = self._extent
            return np.maximum(np.maximum(low - coords[:, 0], coords[:, 0] - high), 0.0)

        extent = self._extent
        edges = np.roll(extent, -1, axis=0) - extent
        relative = coords[:, None, :] - extent[None, :, :]
        cross = edges[None, :, 0] * relative[:, :, 1] - edges[None, :, 1] * relative[:, :, 0]
        inside = np.all(cross >= 0.0, axis=1)
        return np.where(inside, 0.0, self._edge_distances(coords))

    def signed_distances(self, points):
        return np.atleast_2d(points) @ self.normal - self.offset

    def distances(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return np.hypot(self.signed_distances(points), self._extent_distances(self._in_plane(points)))

    def distance(self, point):
        return float(self.distances(point)[0])

    def contains(self, point, tol=DEFAULT_TOL):
        return self.distance(point) <= tol

    def on_seam(self, point, tol=DEFAULT_TOL):
        """
        True if ``point`` is within ``tol`` of the relative boundary of the extent.
        """
        return float(self._edge_distances(self._in_plane(point))[0]) <= tol

    def vector_at(self, point):
        return self.normal

    def reflect(self, point):
        point = np.asarray(point, dtype=float)
        return point - 2.0 * np.dot(point, self.normal) * self.normal + 2.0 * self.offset * self.normal

    def flipped(self):
        return replace(self, normal=-self.normal, offset=-self.offset)


@dataclass(frozen=True, eq=False)
class CurvedPatch:
    """
    Image of the open box ``lower < x < upper`` in R^p under an injective C^1 map.

    The callables work on stacks of parameters: ``param_map`` maps an (S, p) array
    to (S, N) points, ``param_jacobian`` returns (S, p, N) derivatives and
    ``normal_field`` returns (S, N) unit vectors.  ``closest_param`` and
    ``ray_intersect`` are optional analytic helpers supplied by the built-in shapes.
    """

    param_map: Callable
    param_jacobian: Callable
    normal_field: Callable
    lower: np.ndarray
    upper: np.ndarray
    dimension: int
    absorption: float = 1.0
    id: int = 0
    kind: str = "param"
    params: dict = field(default_factory=dict)
    closest_param: Optional[Callable] = None
    ray_intersect: Optional[Callable] = None
    surface_normal: bool = True

    def __post_init__(self):
        lower = np.atleast_1d(np.array(self.lower, dtype=float))
        upper = np.atleast_1d(np.array(self.upper, dtype=float))
        if lower.ndim != 1 or lower.shape != upper.shape:
            raise ValidationError(f"patch {self.id} parameter bounds must be vectors of equal length")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise ValidationError(f"patch {self.id} parameter bounds must be finite")
        if self.dimension not in (2, 3) or not 0 < len(lower) < self.dimension:
            raise ValidationError(f"patch {self.id} needs 0 < p < N with N in (2, 3)")
        check_fraction(self.absorption, f"patch {self.id} absorption")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    def __str__(self):
        return f"{self.kind} patch {self.id}"

    @property
    def param_dim(self):
        return len(self.lower)

    def evaluate(self, params):
        return np.asarray(self.param_map(np.atleast_2d(params)), dtype=float)

    def jacobian(self, params):
        return np.asarray(self.param_jacobian(np.atleast_2d(params)), dtype=float)

    def vectors(self, params):
        return np.asarray(self.normal_field(np.atleast_2d(params)), dtype=float)

    def lattice_params(self, M):
        """
        Parameters of the lattice with spacing ``1/M`` that fall strictly inside the box,
        in lexicographic order.
        """
        axes = []
        for low, high in zip(self.lower, self.upper):
            values = np.arange(math.floor(low * M) + 1, math.ceil(high * M)) / M
            axes.append(values[(values > low) & (values < high)])
        if any(len(axis) == 0 for axis in axes):
            return np.empty((0, self.param_dim))
        grid = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grid], axis=1)

    def nearest_param(self, point):
        point = np.asarray(point, dtype=float)
        if self.closest_param is not None:
            return np.atleast_1d(np.asarray(self.closest_param(point), dtype=float))

        axes = [np.linspace(low, high, _SEARCH_SAMPLES + 2)[1:-1] for low, high in zip(self.lower, self.upper)]
        grid = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
        start = grid[np.argmin(np.linalg.norm(self.evaluate(grid) - point, axis=1))]
        result = optimize.least_squares(
            lambda x: self.evaluate(x)[0] - point,
            start,
            jac=lambda x: self.jacobian(x)[0].T,
            bounds=(self.lower, self.upper),
            xtol=1e-15,
            ftol=1e-15,
            gtol=1e-15,
        )
        return result.x

    def distance(self, point):
        return float(np.linalg.norm(self.evaluate(self.nearest_param(point))[0] - point))

    def contains(self, point, tol=DEFAULT_TOL):
        return self.distance(point) <= tol

    def vector_at(self, point):
        return self.vectors(self.nearest_param(point))[0]


@dataclass(frozen=True, eq=False)
class PointReflector:
    position: np.ndarray
    vector: np.ndarray
    absorption: float = 1.0
    id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "position", as_point(self.position, field=f"point reflector {self.id} position"))
        object.__setattr__(
            self, "vector", as_unit_vector(self.vector, field=f"point reflector {self.id} vector")
        )
        if self.vector.shape != self.position.shape:
            raise ValidationError(f"point reflector {self.id} mixes 2D and 3D coordinates")
        check_fraction(self.absorption, f"point reflector {self.id} absorption")

    def __str__(self):
        return f"point reflector {self.id}"

    @property
    def dimension(self):
        return self.position.shape[0]

    def distance(self, point):
        return float(np.linalg.norm(np.asarray(point, dtype=float) - self.position))

    def contains(self, point, tol=DEFAULT_TOL):
        return self.distance(point) <= tol

    def vector_at(self, point):
        return self.vector


@dataclass(frozen=True, eq=False)
class Boundary:
    walls: Tuple[PlanarWall, ...] = ()
    patches: Tuple[CurvedPatch, ...] = ()
    points: Tuple[PointReflector, ...] = ()

    def __post_init__(self):
        for name in ("walls", "patches", "points"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

        ids = [element.id for element in self.elements]
        duplicates = sorted({i for i in ids if ids.count(i) > 1})
        if duplicates:
            raise ValidationError(f"boundary element ids must be distinct, found duplicates {duplicates}")

        if len({element.dimension for element in self.elements}) > 1:
            raise ValidationError("boundary elements mix 2D and 3D coordinates")

    def __len__(self):
        return len(self.walls) + len(self.patches) + len(self.points)

    @property
    def elements(self):
        return self.walls + self.patches + self.points

    @property
    def dimension(self):
        return self.elements[0].dimension if len(self) else None

    @property
    def is_planar(self):
        return not self.patches

    @cached_property
    def _elements_by_id(self):
        return {element.id: element for element in self.elements}

    def element(self, element_id):
        try:
            return self._elements_by_id[element_id]
        except KeyError:
            raise KeyError(f"Boundary has no element with id {element_id}") from None

    def with_flipped_normals(self):
        return Boundary(walls=[w.flipped() for w in self.walls], patches=self.patches, points=self.points)


def shoebox(lower, upper, absorption=1.0):
    """
    Walls of the axis-aligned box ``lower <= x <= upper``, two per axis (low side first).
    ``absorption`` is a scalar or one value per wall.
    """
    lower = as_point(lower)
    upper = as_point(upper, dimension=len(lower))
    if np.any(upper <= lower):
        raise ValidationError("box sides must have positive length")

    dimension = len(lower)
    absorptions = np.broadcast_to(np.asarray(absorption, dtype=float), (2 * dimension,))

    walls = []
    for axis in range(dimension):
        others = [a for a in range(dimension) if a != axis]
        for side, value in enumerate((lower[axis], upper[axis])):
            vertices = []
            for corner in itertools.product(*[(lower[a], upper[a]) for a in others]):
                vertex = np.empty(dimension)
                vertex[axis] = value
                vertex[others] = corner
                vertices.append(vertex)
            normal = np.zeros(dimension)
            normal[axis] = 1.0
            wall_id = len(walls)
            walls.append(
                PlanarWall(
                    normal=normal, offset=value, vertices=vertices, absorption=float(absorptions[wall_id]), id=wall_id
                )
            )

    return Boundary(walls=walls)


def vector_field(boundary, u, tol=DEFAULT_TOL):
    """
    Assigned vector of the boundary element within ``tol`` of ``u``, or None off the boundary.
    Elements whose vectors agree up to sign are not ambiguous.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")

    u = np.asarray(u, dtype=float)
    hits = [element for element in boundary.elements if element.distance(u) <= tol]
    if not hits:
        return None

    vector = hits[0].vector_at(u)
    for other in hits[1:]:
        if abs(abs(float(np.dot(vector, other.vector_at(u)))) - 1.0) > UNIT_NORM_TOL:
            raise AmbiguousBoundary(
                f"Point {u.tolist()} lies within {tol} of {hits[0]} and {other}, which assign different vectors"
            )
    return vector


def symmetric_project(u, v, n):
    """
    Mirror image of ``u`` across the hyperplane through ``v`` orthogonal to the unit vector ``n``.
    Broadcasts over leading axes, so rows of ``u`` may be paired with rows of ``n``.
    """
    u = np.asarray(u, dtype=float)
    n = np.asarray(n, dtype=float)
    return u - 2.0 * np.sum((u - np.asarray(v, dtype=float)) * n, axis=-1, keepdims=True) * n


def compose_projections(source, reflection_points):
    image = np.asarray(source, dtype=float)
    for point, vector in reflection_points:
        image = symmetric_project(image, point, vector)
    return image


def nearest_neighbor_distances(points):
    points = np.asarray(points, dtype=float)
    if len(points) < 2:
        return np.full(len(points), np.inf)
    distances, _ = cKDTree(points).query(points, k=2)
    return distances[:, 1]
