"""
Virtual-source continua of curved patches.

Patches are sampled on the parameter lattice with spacing ``1/M``.  Every sample carries
a quadrature weight derived from the distance to its nearest mapped neighbor, so that
summing a field against the weights approximates its integral over the patch.  Reflection
paths are searched among the samples and accepted when their direction mismatch is
below the angular tolerance of the lattice.
"""
import logging
import math
from collections import deque

import numpy as np
from scipy import optimize, special

from .entities import LatticeSampling, Reflection, ReflectionPath, WeightConvention, WeightedAtom
from .exceptions import ConfigurationError, InjectivityViolation, RankDeficiency
from .geometry import (
    DEFAULT_LATTICE_M,
    DEFAULT_TOL,
    as_point,
    compose_projections,
    nearest_neighbor_distances,
    symmetric_project,
)
from .paths import check_validity, check_visibility
from .utils import parallel_map, unit


__all__ = [
    "MAX_CURVED_ORDER",
    "DEFAULT_MAX_PAIR_CANDIDATES",
    "ball_volume",
    "sample_patch",
    "integrate",
    "riemann_reference",
    "find_curved_paths",
]


logger = logging.getLogger(__name__)

MAX_CURVED_ORDER = 2
DEFAULT_MAX_PAIR_CANDIDATES = 4_000_000
INJECTIVITY_TOL = 1e-9
RANK_TOL = 1e-12
MERGE_TOL = 1e-6

_PAIR_CHUNK = 2_000_000


def ball_volume(p, radius):
    """
    Volume of the p-dimensional ball of ``radius``.
    """
    return math.pi ** (p / 2) / special.gamma(p / 2 + 1) * np.asarray(radius, dtype=float) ** p


def _jacobian_factors(jacobians):
    gram = jacobians @ np.swapaxes(jacobians, 1, 2)
    return np.sqrt(np.maximum(np.linalg.det(gram), 0.0))


def sample_patch(patch, M, convention=WeightConvention.SPACING):
    if M < 2:
        raise ConfigurationError(f"Lattice density M must be at least 2, got {M}")
    convention = WeightConvention(convention)
    p = patch.param_dim

    params = patch.lattice_params(M)
    if len(params) == 0:
        logger.warning("%s has no lattice samples at M=%s", patch, M)
        empty = np.empty((0, patch.dimension))
        return LatticeSampling(
            patch_id=patch.id,
            spacing=1.0 / M,
            params=params,
            points=empty,
            vectors=empty,
            weights=np.empty(0),
            nn_distances=np.empty(0),
            convention=convention,
        )

    points = patch.evaluate(params)
    jacobians = patch.jacobian(params)
    singular_values = np.linalg.svd(jacobians, compute_uv=False)
    deficient = singular_values[:, -1] <= RANK_TOL * np.maximum(singular_values[:, 0], 1.0)
    if np.any(deficient):
        raise RankDeficiency(f"{patch} has a rank-deficient Jacobian at parameter {params[np.argmax(deficient)]}")

    factors = _jacobian_factors(jacobians)
    if len(points) == 1:
        distances = factors ** (1.0 / p) / M
    else:
        distances = nearest_neighbor_distances(points)
    if np.any(distances <= INJECTIVITY_TOL):
        raise InjectivityViolation(
            f"{patch} maps two lattice samples within {INJECTIVITY_TOL} m near parameter {params[np.argmin(distances)]}"
        )

    if convention == WeightConvention.SPACING:
        weights = distances ** p
    elif convention == WeightConvention.BALL_VOLUME:
        weights = ball_volume(p, distances)
    else:
        weights = factors / M ** p

    logger.debug("Sampled %s at M=%s: %s samples, total weight %.6g", patch, M, len(params), np.sum(weights))
    return LatticeSampling(
        patch_id=patch.id,
        spacing=1.0 / M,
        params=params,
        points=points,
        vectors=patch.vectors(params),
        weights=weights,
        nn_distances=distances,
        convention=convention,
    )


def integrate(sampling, g):
    """
    Sum of ``g`` over the sampled points against the sample weights.  ``g`` maps an
    (S, N) array of points to S values.
    """
    if len(sampling) == 0:
        return 0.0
    return float(np.sum(np.asarray(g(sampling.points), dtype=float) * sampling.weights))


def riemann_reference(patch, g, M):
    params = patch.lattice_params(M)
    if len(params) == 0:
        return 0.0
    values = np.asarray(g(patch.evaluate(params)), dtype=float)
    return float(np.sum(values * _jacobian_factors(patch.jacobian(params))) / M ** patch.param_dim)


def _search_tolerances(angular_tol, nn_distances, shortest):
    if angular_tol is not None:
        return np.full(np.broadcast(nn_distances, shortest).shape, float(angular_tol))
    return 2.0 * nn_distances / shortest


class _CurvedPathSearch:
    def __init__(
        self,
        boundary,
        s,
        r,
        samplings,
        lattice_M,
        angular_tol=None,
        tol=DEFAULT_TOL,
        merge_isolated=False,
        max_pair_candidates=DEFAULT_MAX_PAIR_CANDIDATES,
        threads=1,
    ):
        self._boundary = boundary
        self._s = s
        self._r = r
        self._samplings = samplings
        self._lattice_M = lattice_M
        self._angular_tol = angular_tol
        self._tol = tol
        self._merge_isolated = merge_isolated
        self._max_pair_candidates = max_pair_candidates
        self._threads = threads

    def first_order(self):
        atoms = []
        for patch in self._boundary.patches:
            candidates = self._single_patch(patch, self._samplings[patch.id])
            if self._merge_isolated:
                candidates = self._merge(candidates, self._samplings[patch.id])
            atoms.extend(atom for _, atom in candidates)
        return atoms

    def second_order(self):
        atoms = []
        elements = sorted(self._boundary.walls + self._boundary.patches, key=lambda e: e.id)
        patch_ids = {patch.id for patch in self._boundary.patches}
        for first in elements:
            for second in elements:
                if first.id not in patch_ids and second.id not in patch_ids:
                    continue
                if first.id not in patch_ids:
                    atoms.extend(self._wall_then_patch(first, second))
                elif second.id not in patch_ids:
                    atoms.extend(self._patch_then_wall(first, second))
                else:
                    atoms.extend(self._patch_pair(first, second))
        return atoms

    def _accept(self, path, weight, stratum_dim, tolerance):
        valid, residual = check_validity(path, self._boundary, tolerance, self._tol)
        if not valid:
            logger.debug("Rejecting %s with residual %.3g above %.3g", path, residual, tolerance)
            return None
        visible, blocking = check_visibility(path, self._boundary, self._tol, self._lattice_M)
        if not visible:
            logger.debug("Rejecting %s blocked by element %s", path, blocking)
            return None

        elements = [self._boundary.element(r.element_id) for r in path.reflections]
        reflection_points = [(r.point, e.vector_at(r.point)) for r, e in zip(path.reflections, elements)]
        return WeightedAtom(
            position=compose_projections(self._s, reflection_points),
            weight=float(weight),
            stratum_dim=stratum_dim,
            path=path,
            validity_residual=residual,
        )

    def _single_residuals(self, points, vectors):
        images = symmetric_project(self._s, points, vectors)
        incoming = unit(points - images)
        outgoing = unit(self._r - points)
        return np.linalg.norm(outgoing - incoming, axis=-1)

    def _single_patch(self, patch, sampling):
        if len(sampling) == 0:
            return []

        points = sampling.points
        with np.errstate(invalid="ignore", divide="ignore"):
            residuals = self._single_residuals(points, sampling.vectors)
            shortest = np.minimum(np.linalg.norm(points - self._s, axis=1), np.linalg.norm(self._r - points, axis=1))
            tolerances = _search_tolerances(self._angular_tol, sampling.nn_distances, shortest)
        accepted = np.flatnonzero((shortest > self._tol) & (residuals <= tolerances))
        logger.debug("%s: %s of %s samples pass the first-order search", patch, len(accepted), len(sampling))

        def evaluate(index):
            param = sampling.params[index]
            if patch.surface_normal:
                param = self._refine(patch, param, sampling.spacing)
            point = patch.evaluate(param)[0]
            path = ReflectionPath(source=self._s, reflections=[Reflection(point, patch.id)], sink=self._r)
            atom = self._accept(path, sampling.weights[index], patch.param_dim, tolerances[index])
            return index, atom

        return [(index, atom) for index, atom in parallel_map(evaluate, accepted, self._threads) if atom is not None]

    def _refine(self, patch, param, spacing):
        """
        Moves ``param`` within its lattice cell to where the path length is stationary, if that
        lowers the direction mismatch.
        """
        lower = np.maximum(param - spacing, patch.lower)
        upper = np.minimum(param + spacing, patch.upper)

        def gradient(x):
            point = patch.evaluate(x)[0]
            return patch.jacobian(x)[0] @ (unit(point - self._s) - unit(self._r - point))

        result = optimize.least_squares(gradient, param, bounds=(lower, upper), xtol=1e-15, ftol=1e-15, gtol=1e-15)

        before = self._single_residuals(patch.evaluate(param), patch.vectors(param))[0]
        after = self._single_residuals(patch.evaluate(result.x), patch.vectors(result.x))[0]
        return result.x if after <= before else param

    def _merge(self, candidates, sampling):
        """
        Collapses connected runs of accepted samples whose reflection points coincide into a
        single unit-weight atom.
        """
        if not candidates:
            return candidates

        cells = {}
        for k, (index, _) in enumerate(candidates):
            cells[tuple(np.rint(sampling.params[index] / sampling.spacing).astype(int))] = k

        seen = set()
        merged = []
        for cell in sorted(cells, key=cells.get):
            if cell in seen:
                continue
            component = []
            queue = deque([cell])
            seen.add(cell)
            while queue:
                current = queue.popleft()
                component.append(cells[current])
                for neighbor in cells:
                    if neighbor not in seen and max(abs(a - b) for a, b in zip(neighbor, current)) <= 1:
                        seen.add(neighbor)
                        queue.append(neighbor)

            members = [candidates[k] for k in sorted(component)]
            points = np.array([atom.path.reflections[0].point for _, atom in members])
            if np.max(np.linalg.norm(points - points[0], axis=1)) > MERGE_TOL:
                merged.extend(members)
                continue

            index, best = min(members, key=lambda member: member[1].validity_residual)
            if any(
                atom.stratum_dim == 0
                and np.linalg.norm(atom.path.reflections[0].point - best.path.reflections[0].point) <= MERGE_TOL
                for _, atom in merged
            ):
                continue
            logger.info("Merging %s samples of patch %s into one isolated reflection", len(members), sampling.patch_id)
            merged.append(
                (
                    index,
                    WeightedAtom(
                        position=best.position,
                        weight=1.0,
                        stratum_dim=0,
                        path=best.path,
                        validity_residual=best.validity_residual,
                    ),
                )
            )
        return merged

    def _wall_then_patch(self, wall, patch):
        sampling = self._samplings[patch.id]
        if len(sampling) == 0:
            return []
        points, vectors = sampling.points, sampling.vectors
        image = wall.reflect(self._s)

        with np.errstate(invalid="ignore", divide="ignore"):
            direction = points - image
            denominator = direction @ wall.normal
            fraction = (wall.offset - image @ wall.normal) / denominator
            wall_points = image + fraction[:, None] * direction
            incoming = unit(points - symmetric_project(wall_points, points, vectors))
            residuals = np.linalg.norm(unit(self._r - points) - incoming, axis=1)
            shortest = np.min(
                [
                    np.linalg.norm(wall_points - self._s, axis=1),
                    np.linalg.norm(points - wall_points, axis=1),
                    np.linalg.norm(self._r - points, axis=1),
                ],
                axis=0,
            )
            tolerances = _search_tolerances(self._angular_tol, sampling.nn_distances, shortest)
            usable = (np.abs(denominator) > self._tol) & (fraction > 0.0) & (fraction < 1.0)
            accepted = np.flatnonzero(usable & (shortest > self._tol) & (residuals <= tolerances))

        atoms = []
        for index in accepted:
            wall_point = wall_points[index]
            if not wall.contains(wall_point, self._tol) or wall.on_seam(wall_point, self._tol):
                continue
            path = ReflectionPath(
                source=self._s,
                reflections=[Reflection(wall_point, wall.id), Reflection(points[index], patch.id)],
                sink=self._r,
            )
            atom = self._accept(path, sampling.weights[index], patch.param_dim, tolerances[index])
            if atom is not None:
                atoms.append(atom)
        return atoms

    def _patch_then_wall(self, patch, wall):
        sampling = self._samplings[patch.id]
        if len(sampling) == 0:
            return []
        points, vectors = sampling.points, sampling.vectors
        image = wall.reflect(self._r)

        with np.errstate(invalid="ignore", divide="ignore"):
            direction = image - points
            denominator = direction @ wall.normal
            fraction = (wall.offset - points @ wall.normal) / denominator
            wall_points = points + fraction[:, None] * direction
            residuals = self._single_residuals_towards(points, vectors, image)
            shortest = np.min(
                [
                    np.linalg.norm(points - self._s, axis=1),
                    np.linalg.norm(wall_points - points, axis=1),
                    np.linalg.norm(self._r - wall_points, axis=1),
                ],
                axis=0,
            )
            tolerances = _search_tolerances(self._angular_tol, sampling.nn_distances, shortest)
            usable = (np.abs(denominator) > self._tol) & (fraction > 0.0) & (fraction < 1.0)
            accepted = np.flatnonzero(usable & (shortest > self._tol) & (residuals <= tolerances))

        atoms = []
        for index in accepted:
            wall_point = wall_points[index]
            if not wall.contains(wall_point, self._tol) or wall.on_seam(wall_point, self._tol):
                continue
            path = ReflectionPath(
                source=self._s,
                reflections=[Reflection(points[index], patch.id), Reflection(wall_point, wall.id)],
                sink=self._r,
            )
            atom = self._accept(path, sampling.weights[index], patch.param_dim, tolerances[index])
            if atom is not None:
                atoms.append(atom)
        return atoms

    def _single_residuals_towards(self, points, vectors, target):
        images = symmetric_project(self._s, points, vectors)
        return np.linalg.norm(unit(target - points) - unit(points - images), axis=-1)

    def _patch_pair(self, first, second):
        head, tail = self._samplings[first.id], self._samplings[second.id]
        count = len(head) * len(tail)
        if count == 0:
            return []
        if count > self._max_pair_candidates:
            raise ConfigurationError(
                f"Second-order search over {first} and {second} needs {count} sample pairs, above the cap of "
                f"{self._max_pair_candidates}; lower the lattice density or raise max_pair_candidates"
            )

        dimension = self._boundary.dimension
        stratum_dim = min(first.param_dim + second.param_dim, dimension)
        with np.errstate(invalid="ignore", divide="ignore"):
            incoming_head = unit(head.points - symmetric_project(self._s, head.points, head.vectors))
            outgoing_tail = unit(self._r - tail.points)
            source_lengths = np.linalg.norm(head.points - self._s, axis=1)
            sink_lengths = np.linalg.norm(self._r - tail.points, axis=1)

        candidates = []
        chunk = max(1, _PAIR_CHUNK // len(tail))
        for start in range(0, len(head), chunk):
            rows = slice(start, start + chunk)
            a = head.points[rows][:, None, :]
            b = tail.points[None, :, :]
            with np.errstate(invalid="ignore", divide="ignore"):
                between = b - a
                lengths = np.linalg.norm(between, axis=2)
                head_residuals = np.linalg.norm(between / lengths[..., None] - incoming_head[rows][:, None, :], axis=2)
                incoming_tail = unit(b - symmetric_project(a, b, tail.vectors[None, :, :]))
                tail_residuals = np.linalg.norm(outgoing_tail[None, :, :] - incoming_tail, axis=2)
                head_tolerances = _search_tolerances(
                    self._angular_tol,
                    head.nn_distances[rows][:, None],
                    np.minimum(source_lengths[rows][:, None], lengths),
                )
                tail_tolerances = _search_tolerances(
                    self._angular_tol, tail.nn_distances[None, :], np.minimum(lengths, sink_lengths[None, :])
                )
                mask = (lengths > self._tol) & (head_residuals <= head_tolerances) & (tail_residuals <= tail_tolerances)
            for i, j in np.argwhere(mask):
                candidates.append((start + i, j, max(head_tolerances[i, j], tail_tolerances[i, j])))

        atoms = []
        for i, j, tolerance in candidates:
            path = ReflectionPath(
                source=self._s,
                reflections=[Reflection(head.points[i], first.id), Reflection(tail.points[j], second.id)],
                sink=self._r,
            )
            atom = self._accept(path, head.weights[i] * tail.weights[j], stratum_dim, tolerance)
            if atom is not None:
                atoms.append(atom)
        return atoms


def find_curved_paths(
    boundary,
    s,
    r,
    max_order=1,
    M=DEFAULT_LATTICE_M,
    angular_tol=None,
    convention=WeightConvention.SPACING,
    tol=DEFAULT_TOL,
    merge_isolated=False,
    max_pair_candidates=DEFAULT_MAX_PAIR_CANDIDATES,
    threads=1,
    patch_M=None,
):
    """
    Weighted atoms of the reflection paths that involve at least one curved patch.

    ``angular_tol`` defaults, per sample, to twice its neighbor distance over the shortest
    path segment.  ``patch_M`` optionally overrides the lattice density per patch id.
    """
    if not boundary.patches:
        raise ConfigurationError("find_curved_paths needs a boundary with at least one curved patch")
    if not 1 <= max_order <= MAX_CURVED_ORDER:
        raise ConfigurationError(f"Curved reflection order must be between 1 and {MAX_CURVED_ORDER}, got {max_order}")

    s = as_point(s)
    r = as_point(r, dimension=len(s))
    patch_M = patch_M or {}
    samplings = {patch.id: sample_patch(patch, patch_M.get(patch.id, M), convention) for patch in boundary.patches}

    search = _CurvedPathSearch(
        boundary,
        s,
        r,
        samplings,
        lattice_M=M,
        angular_tol=angular_tol,
        tol=tol,
        merge_isolated=merge_isolated,
        max_pair_candidates=max_pair_candidates,
        threads=threads,
    )
    atoms = search.first_order()
    if max_order >= 2:
        atoms.extend(search.second_order())

    logger.info("Found %s curved-boundary atoms up to order %s", len(atoms), max_order)
    return atoms
