"""
Virtual sources of planar boundaries.

Every wall sequence without immediate repeats is unfolded into its line set; the
sequence is feasible when each line meets its wall in a single interior point and
the points follow each other along the unfolded path.  Feasible paths are valid by
construction, so only visibility remains to be checked.
"""
import itertools
import logging
from collections.abc import Mapping

import numpy as np

from .entities import Line, Reflection, ReflectionPath, VirtualSource, WallSequence
from .exceptions import DegenerateLine
from .geometry import DEFAULT_LATTICE_M, DEFAULT_TOL, as_point, symmetric_project
from .paths import check_validity, check_visibility
from .utils import parallel_map


__all__ = [
    "DEFAULT_MAX_ORDER",
    "image_of_source_through_walls",
    "build_lines",
    "psi",
    "wall_sequences",
    "enumerate_virtual_sources",
]


logger = logging.getLogger(__name__)

DEFAULT_MAX_ORDER = 6


def _wall_lookup(walls):
    if isinstance(walls, Mapping):
        return walls
    if hasattr(walls, "walls"):
        walls = walls.walls
    return {wall.id: wall for wall in walls}


def _unfold(s, r, seq, walls):
    """
    Forward images of ``s`` through the first j walls and backward images of ``r``
    through the last i walls, for j, i = 0..k.
    """
    forward = [np.asarray(s, dtype=float)]
    for index in seq:
        forward.append(walls[index].reflect(forward[-1]))
    backward = [np.asarray(r, dtype=float)]
    for index in reversed(tuple(seq)):
        backward.append(walls[index].reflect(backward[-1]))
    return forward, backward


def image_of_source_through_walls(s, seq, walls):
    walls = _wall_lookup(walls)
    image = np.asarray(s, dtype=float)
    for index in seq:
        image = walls[index].reflect(image)
    return image


def build_lines(s, r, seq, walls, tol=DEFAULT_TOL):
    """
    Lines L_0..L_k of the unfolded path.  L_i passes through the image of ``s`` in the
    first k - i walls and the image of ``r`` in the last i walls.
    """
    if len(seq) == 0:
        raise ValueError("build_lines needs a nonempty wall sequence")
    walls = _wall_lookup(walls)
    forward, backward = _unfold(s, r, seq, walls)
    k = len(seq)
    return [Line.through(forward[k - i], backward[i], tol) for i in range(k + 1)]


def psi(seq, s, r, walls, tol=DEFAULT_TOL):
    """
    The reflection path realizing ``seq``, or None if the sequence is infeasible.
    """
    walls = _wall_lookup(walls)
    k = len(seq)
    forward, backward = _unfold(s, r, seq, walls)
    try:
        lines = [Line.through(forward[k - i], backward[i], tol) for i in range(k + 1)]
    except DegenerateLine as e:
        logger.debug("Sequence %s is degenerate: %s", seq, e)
        return None

    total = float(np.linalg.norm(backward[k] - forward[0]))
    reflections = []
    travelled = 0.0
    for j, index in enumerate(seq, start=1):
        wall = walls[index]
        line = lines[k - j]
        denominator = float(np.dot(wall.normal, line.direction))
        if abs(denominator) <= tol:
            return None

        distance = (wall.offset - float(np.dot(wall.normal, line.anchor))) / denominator
        if not travelled + tol < distance < total - tol:
            return None

        point = line.point_at(distance)
        if not wall.contains(point, tol) or wall.on_seam(point, tol):
            return None

        reflections.append(Reflection(point=point, element_id=index))
        travelled = distance

    return ReflectionPath(source=s, reflections=reflections, sink=r)


def wall_sequences(wall_ids, order):
    """
    Sequences of ``order`` wall ids without immediate repeats, in lexicographic order.
    """
    for candidate in itertools.product(sorted(wall_ids), repeat=order):
        if all(a != b for a, b in zip(candidate, candidate[1:])):
            yield WallSequence(candidate)


def _same_path(first, second, tol):
    first, second = first.path.points, second.path.points
    return first.shape == second.shape and np.allclose(first, second, rtol=0.0, atol=tol)


def enumerate_virtual_sources(
    boundary, s, r, max_order=DEFAULT_MAX_ORDER, tol=DEFAULT_TOL, threads=1, lattice_M=DEFAULT_LATTICE_M
):
    """
    Virtual sources of the planar part of ``boundary`` up to ``max_order`` reflections,
    sorted by order and then by wall sequence.  Curved patches only act as occluders.
    """
    if max_order < 0:
        raise ValueError("max_order must be non-negative")

    s = as_point(s)
    r = as_point(r, dimension=len(s))
    walls = _wall_lookup(boundary.walls)
    sources = []

    direct = ReflectionPath(source=s, sink=r)
    if np.linalg.norm(r - s) <= tol:
        sources.append(VirtualSource(position=s, order=0, path=direct))
    else:
        visible, blocking = check_visibility(direct, boundary, tol, lattice_M)
        if visible:
            sources.append(VirtualSource(position=s, order=0, path=direct))
        else:
            logger.info("Direct path is blocked by element %s", blocking)

    def evaluate(seq):
        path = psi(seq, s, r, walls, tol)
        if path is None:
            return None
        visible, _ = check_visibility(path, boundary, tol, lattice_M)
        if not visible:
            return None
        return VirtualSource(
            position=image_of_source_through_walls(s, seq, walls), order=len(seq), path=path, wall_sequence=seq
        )

    for order in range(1, max_order + 1):
        sequences = list(wall_sequences(walls, order))
        candidates = [c for c in parallel_map(evaluate, sequences, threads) if c is not None]
        if order == 1:
            candidates.extend(_point_reflector_sources(boundary, s, r, tol, lattice_M))
            candidates.sort(key=lambda c: c.wall_sequence)

        kept = []
        for candidate in candidates:
            if any(_same_path(candidate, other, tol) for other in kept):
                logger.debug("Dropping duplicate path %s", candidate.path)
                continue
            kept.append(candidate)

        logger.debug("Order %s: %s of %s sequences survive", order, len(kept), len(sequences))
        sources.extend(kept)

    logger.info("Found %s virtual sources up to order %s", len(sources), max_order)
    return sources


def _point_reflector_sources(boundary, s, r, tol, lattice_M):
    sources = []
    for reflector in boundary.points:
        if reflector.distance(s) <= tol or reflector.distance(r) <= tol:
            continue
        path = ReflectionPath(source=s, reflections=[Reflection(reflector.position, reflector.id)], sink=r)
        valid, _ = check_validity(path, boundary, geom_tol=tol)
        if not valid:
            continue
        visible, _ = check_visibility(path, boundary, tol, lattice_M)
        if visible:
            position = symmetric_project(s, reflector.position, reflector.vector)
            sources.append(
                VirtualSource(position=position, order=1, path=path, wall_sequence=WallSequence((reflector.id,)))
            )
    return sources
