"""
Validity and visibility predicates for reflection paths.
"""
import logging
import math
from functools import lru_cache

import numpy as np

from .entities import PathClassification
from .exceptions import DegenerateSegment
from .geometry import DEFAULT_LATTICE_M, DEFAULT_TOL, nearest_neighbor_distances, symmetric_project


__all__ = [
    "DEFAULT_VALIDITY_TOL",
    "path_length",
    "check_validity",
    "check_equal_angles",
    "check_visibility",
    "classify_path",
    "incidence_angle",
    "is_grazing",
]


logger = logging.getLogger(__name__)

DEFAULT_VALIDITY_TOL = 1e-9


def path_length(path):
    return float(np.sum(np.linalg.norm(np.diff(path.points, axis=0), axis=1)))


def _segments(path, tol):
    points = path.points
    for j, (start, stop) in enumerate(zip(points[:-1], points[1:])):
        length = float(np.linalg.norm(stop - start))
        if length <= tol:
            raise DegenerateSegment(f"Segment {j} of {path} has length {length:.3g} m")
        yield start, stop, length


def _unit(vector):
    return vector / np.linalg.norm(vector)


def _reflection_vectors(path, boundary):
    return [boundary.element(r.element_id).vector_at(r.point) for r in path.reflections]


def check_validity(path, boundary, tol=DEFAULT_VALIDITY_TOL, geom_tol=DEFAULT_TOL):
    """
    Returns ``(valid, residual)``.  The residual is the largest mismatch, over all reflection
    points, between the outgoing direction and the direction from the mirrored previous
    point through the reflection point.
    """
    list(_segments(path, geom_tol))

    points = path.points
    residual = 0.0
    for j, vector in enumerate(_reflection_vectors(path, boundary), start=1):
        image = symmetric_project(points[j - 1], points[j], vector)
        outgoing = _unit(points[j + 1] - points[j])
        incoming = _unit(points[j] - image)
        residual = max(residual, float(np.linalg.norm(outgoing - incoming)))

    return residual <= tol, residual


def check_equal_angles(path, boundary):
    """
    Largest ``|<d_in + d_out, n>|`` over the reflection points, with ``d_in`` and ``d_out``
    the unit propagation directions before and after the reflection.  Zero for valid paths.
    """
    points = path.points
    residual = 0.0
    for j, vector in enumerate(_reflection_vectors(path, boundary), start=1):
        incoming = _unit(points[j] - points[j - 1])
        outgoing = _unit(points[j + 1] - points[j])
        residual = max(residual, abs(float(np.dot(incoming + outgoing, vector))))
    return residual


def incidence_angle(previous, point, vector):
    """
    Angle in [0, pi/2] between the ray arriving at ``point`` and the line spanned by ``vector``.
    """
    previous = np.asarray(previous, dtype=float)
    image = symmetric_project(previous, point, vector)
    cosine = np.linalg.norm(previous - image) / (2.0 * np.linalg.norm(previous - np.asarray(point, dtype=float)))
    return math.acos(min(max(float(cosine), 0.0), 1.0))


@lru_cache(maxsize=32)
def _occluder_samples(patch, lattice_M):
    params = patch.lattice_params(lattice_M)
    if len(params) == 0:
        empty = np.empty((0, patch.dimension))
        return empty, empty, np.empty(0)
    points = patch.evaluate(params)
    return points, patch.vectors(params), nearest_neighbor_distances(points)


def _wall_blocks(wall, start, direction, length, tol):
    denominator = float(np.dot(wall.normal, direction))
    if abs(denominator) <= tol:
        return False
    fraction = (wall.offset - float(np.dot(wall.normal, start))) / (denominator * length)
    window = tol / length
    if not window < fraction < 1.0 - window:
        return False
    return wall.contains(start + fraction * length * direction, tol)


def _point_blocks(reflector, start, stop, direction, length, tol):
    along = float(np.dot(reflector.position - start, direction))
    if not 0.0 < along < length:
        return False
    if reflector.distance(start) <= tol or reflector.distance(stop) <= tol:
        return False
    offset = reflector.position - (start + along * direction)
    return np.linalg.norm(offset) <= tol and abs(float(np.dot(reflector.vector, direction))) > tol


def _patch_blocks(patch, start, stop, direction, length, tol, lattice_M):
    if patch.ray_intersect is not None:
        distances, normals = patch.ray_intersect(start[None, :], direction[None, :], tol)
        return bool(distances[0] < length - tol and abs(float(normals[0] @ direction)) > tol)

    points, vectors, radii = _occluder_samples(patch, lattice_M)
    if len(points) == 0:
        return False
    relative = points - start
    along = relative @ direction
    offsets = np.linalg.norm(relative - along[:, None] * direction, axis=1)
    near_ends = (np.linalg.norm(relative, axis=1) <= radii + tol) | (
        np.linalg.norm(points - stop, axis=1) <= radii + tol
    )
    hits = (offsets <= radii) & (along > 0.0) & (along < length) & ~near_ends & (np.abs(vectors @ direction) > tol)
    return bool(np.any(hits))


def _blocking_element(start, stop, length, boundary, tol, lattice_M):
    direction = (stop - start) / length
    for wall in boundary.walls:
        if _wall_blocks(wall, start, direction, length, tol):
            return wall.id
    for patch in boundary.patches:
        if _patch_blocks(patch, start, stop, direction, length, tol, lattice_M):
            return patch.id
    for reflector in boundary.points:
        if _point_blocks(reflector, start, stop, direction, length, tol):
            return reflector.id
    return None


def check_visibility(path, boundary, tol=DEFAULT_TOL, lattice_M=DEFAULT_LATTICE_M):
    """
    Returns ``(visible, blocking_element)``.  A segment is blocked when its open interior
    crosses the boundary at a point whose vector is not orthogonal to the segment.
    """
    for start, stop, length in _segments(path, tol):
        blocking = _blocking_element(start, stop, length, boundary, tol, lattice_M)
        if blocking is not None:
            logger.debug("%s is blocked by element %s", path, blocking)
            return False, blocking
    return True, None


def is_grazing(path, boundary, tol):
    for start, stop, length in _segments(path, tol):
        direction = (stop - start) / length
        midpoint = 0.5 * (start + stop)
        for wall in boundary.walls:
            if abs(float(np.dot(wall.normal, direction))) <= tol and wall.contains(midpoint, tol):
                return True
    return False


def classify_path(path, boundary, validity_tol=DEFAULT_VALIDITY_TOL, tol=DEFAULT_TOL, lattice_M=DEFAULT_LATTICE_M):
    valid, residual = check_validity(path, boundary, validity_tol, tol)
    visible, blocking = check_visibility(path, boundary, tol, lattice_M)
    grazing = is_grazing(path, boundary, tol)
    if grazing:
        logger.warning("%s grazes a wall", path)
    return PathClassification(
        valid=valid, visible=visible, validity_residual=residual, blocking_element=blocking, grazing=grazing
    )
