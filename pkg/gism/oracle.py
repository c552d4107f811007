"""
Brute-force references for checking the engines: the closed-form image lattice of an
axis-aligned box and forward ray shooting.
"""
import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError
from .geometry import DEFAULT_TOL, as_point, symmetric_project
from .rir import DEFAULT_SPEED_OF_SOUND


__all__ = ["rect_lattice_images", "Arrival", "ray_shoot", "ray_directions"]


logger = logging.getLogger(__name__)

MIN_RAYS = 1000
DEFAULT_CAPTURE_RADIUS = 0.05

_T_MIN = 1e-9
_PARALLEL_TOL = 1e-12


def _axis_images(s, length, max_order):
    """
    Mirror images of coordinate ``s`` in [0, length] with their reflection counts.
    """
    images = []
    for n in range(-(max_order // 2) - 1, max_order // 2 + 2):
        for coordinate, order in ((s + 2 * n * length, abs(2 * n)), (-s + 2 * n * length, abs(2 * n - 1))):
            if order <= max_order:
                images.append((coordinate, order))
    return images


def rect_lattice_images(lower, upper, s, max_order):
    """
    Image sources of ``s`` in the box ``lower <= x <= upper`` up to ``max_order`` reflections,
    as ``(position, order)`` pairs sorted by order and then by position.
    """
    lower = as_point(lower)
    upper = as_point(upper, dimension=len(lower))
    s = as_point(s, dimension=len(lower))
    if np.any(upper <= lower):
        raise ValueError("box sides must have positive length")
    if np.any(s <= lower) or np.any(s >= upper):
        raise ValueError("the source must lie strictly inside the box")

    per_axis = [_axis_images(s[a] - lower[a], upper[a] - lower[a], max_order) for a in range(len(s))]
    images = []
    for combination in itertools.product(*per_axis):
        order = sum(o for _, o in combination)
        if order <= max_order:
            images.append((lower + np.array([x for x, _ in combination]), order))
    images.sort(key=lambda image: (image[1], tuple(image[0])))
    return images


@dataclass(frozen=True)
class Arrival:
    time: float
    bounces: int


def ray_directions(dimension, n_rays):
    """
    Deterministic, nearly uniform unit directions: evenly spaced angles in 2D and a
    Fibonacci lattice on the sphere in 3D.
    """
    index = np.arange(n_rays) + 0.5
    if dimension == 2:
        angles = 2.0 * math.pi * index / n_rays
        return np.stack([np.cos(angles), np.sin(angles)], axis=1)
    z = 1.0 - 2.0 * index / n_rays
    radius = np.sqrt(1.0 - z ** 2)
    azimuth = math.pi * (1.0 + math.sqrt(5.0)) * index
    return np.stack([radius * np.cos(azimuth), radius * np.sin(azimuth), z], axis=1)


def _nearest_hits(boundary, origins, directions):
    distances = np.full(len(origins), np.inf)
    normals = np.zeros_like(origins)

    for wall in boundary.walls:
        denominator = directions @ wall.normal
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (wall.offset - origins @ wall.normal) / denominator
        candidates = np.flatnonzero((np.abs(denominator) > _PARALLEL_TOL) & (t > _T_MIN) & (t < distances))
        if len(candidates) == 0:
            continue
        hits = origins[candidates] + t[candidates, None] * directions[candidates]
        candidates = candidates[wall.distances(hits) <= DEFAULT_TOL]
        distances[candidates] = t[candidates]
        normals[candidates] = wall.normal

    for patch in boundary.patches:
        if patch.ray_intersect is None:
            raise ConfigurationError(f"{patch} has no ray intersection, it cannot be used for ray shooting")
        t, patch_normals = patch.ray_intersect(origins, directions, _T_MIN)
        closer = t < distances
        distances[closer] = t[closer]
        normals[closer] = patch_normals[closer]

    return distances, normals


def ray_shoot(
    boundary,
    s,
    r,
    n_rays=100_000,
    max_bounces=1,
    capture_radius=DEFAULT_CAPTURE_RADIUS,
    c=DEFAULT_SPEED_OF_SOUND,
):
    """
    Shoots ``n_rays`` rays from ``s`` and records every segment that passes within
    ``capture_radius`` of ``r``.  Each arrival is timed at the point of closest approach,
    so arrival times can undershoot the true delay by up to ``capture_radius / c``.
    Point reflectors are ignored.
    """
    if n_rays < MIN_RAYS:
        raise ValueError(f"ray shooting needs at least {MIN_RAYS} rays, got {n_rays}")

    s = as_point(s)
    r = as_point(r, dimension=len(s))
    directions = ray_directions(len(s), n_rays)
    origins = np.broadcast_to(s, directions.shape).copy()
    travelled = np.zeros(n_rays)

    arrivals = []
    for bounces in range(max_bounces + 1):
        distances, normals = _nearest_hits(boundary, origins, directions)

        along = np.clip(np.einsum("ij,ij->i", r - origins, directions), 0.0, distances)
        closest = origins + along[:, None] * directions
        captured = np.flatnonzero(np.linalg.norm(closest - r, axis=1) <= capture_radius)
        arrivals.extend(Arrival(time=(travelled[i] + along[i]) / c, bounces=bounces) for i in captured)

        alive = np.isfinite(distances)
        if bounces == max_bounces or not np.any(alive):
            break
        origins, directions, normals = origins[alive], directions[alive], normals[alive]
        distances, travelled = distances[alive], travelled[alive]

        origins = origins + distances[:, None] * directions
        directions = symmetric_project(directions, np.zeros(directions.shape[1]), normals)
        travelled = travelled + distances

    arrivals.sort(key=lambda arrival: (arrival.time, arrival.bounces))
    logger.info("%s of %s rays reached the receiver", len(arrivals), n_rays)
    return arrivals
