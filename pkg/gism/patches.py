"""
Built-in curved patch constructors.

Each constructor returns a `~gism.geometry.CurvedPatch` with an analytic normal field,
closest-parameter map and ray intersection, and records its own arguments in
``patch.params`` so scenes can be written back out.
"""
import logging
import math

import numpy as np
from scipy import optimize

from .exceptions import ValidationError
from .geometry import CurvedPatch, as_point, as_unit_vector
from .utils import check_positive, unit


__all__ = ["circle", "sphere", "cylinder", "param", "make_patch", "PATCH_TYPES"]


logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi

_BRACKET_SAMPLES = 256
_FACTOR_KINDS = ("pow", "cos", "sin")


def _check_interval(interval, field, low=-math.inf, high=math.inf, max_width=math.inf):
    try:
        start, stop = (float(v) for v in interval)
    except (TypeError, ValueError):
        raise ValidationError("expected a pair of numbers", field=field) from None
    if not (math.isfinite(start) and math.isfinite(stop)) or not low <= start < stop <= high:
        raise ValidationError(f"invalid interval ({start}, {stop})", field=field)
    if stop - start > max_width:
        raise ValidationError(f"interval ({start}, {stop}) is wider than {max_width}", field=field)
    return start, stop


def _wrap_angle(angle, start, stop):
    """
    Representative of ``angle`` in [start, start + 2 pi), clipped to the nearer end of [start, stop].
    """
    wrapped = start + (angle - start) % TWO_PI
    if wrapped <= stop:
        return wrapped
    return stop if wrapped - stop < start + TWO_PI - wrapped else start


def _angles_in_range(angles, start, stop):
    wrapped = start + np.mod(angles - start, TWO_PI)
    return wrapped <= stop


def _sphere_hits(origins, directions, radius, t_min, accept):
    """
    Nearest accepted intersection of unit-speed rays with the sphere of ``radius`` about the origin.
    """
    b = np.einsum("ij,ij->i", origins, directions)
    c = np.einsum("ij,ij->i", origins, origins) - radius ** 2
    discriminant = b ** 2 - c
    root = np.sqrt(np.maximum(discriminant, 0.0))

    distances = np.full(len(origins), np.inf)
    for candidate in (-b + root, -b - root):
        hits = origins + candidate[:, None] * directions
        usable = (discriminant >= 0.0) & (candidate > t_min) & (candidate < distances) & accept(hits)
        distances = np.where(usable, candidate, distances)
    return distances, origins + np.where(np.isfinite(distances), distances, 0.0)[:, None] * directions


def circle(center, radius, arc=(0.0, TWO_PI), absorption=1.0, id=0):
    center = as_point(center, dimension=2, field="circle center")
    radius = check_positive(radius, "circle radius")
    start, stop = _check_interval(arc, "circle arc", max_width=TWO_PI)

    def param_map(params):
        theta = params[:, 0]
        return center + radius * np.stack([np.cos(theta), np.sin(theta)], axis=1)

    def param_jacobian(params):
        theta = params[:, 0]
        return radius * np.stack([-np.sin(theta), np.cos(theta)], axis=1)[:, None, :]

    def normal_field(params):
        theta = params[:, 0]
        return np.stack([np.cos(theta), np.sin(theta)], axis=1)

    def closest_param(point):
        offset = point - center
        return np.array([_wrap_angle(math.atan2(offset[1], offset[0]), start, stop)])

    def ray_intersect(origins, directions, t_min):
        def accept(hits):
            return _angles_in_range(np.arctan2(hits[:, 1], hits[:, 0]), start, stop)

        distances, hits = _sphere_hits(origins - center, directions, radius, t_min, accept)
        return distances, hits / radius

    return CurvedPatch(
        param_map=param_map,
        param_jacobian=param_jacobian,
        normal_field=normal_field,
        lower=[start],
        upper=[stop],
        dimension=2,
        absorption=absorption,
        id=id,
        kind="circle",
        params={"center": center.tolist(), "radius": radius, "arc": [start, stop]},
        closest_param=closest_param,
        ray_intersect=ray_intersect,
    )


def sphere(center, radius, cap=(0.0, math.pi), absorption=1.0, id=0):
    """
    Sphere parametrized by polar angle (restricted to ``cap``) and azimuth in (0, 2 pi).
    """
    center = as_point(center, dimension=3, field="sphere center")
    radius = check_positive(radius, "sphere radius")
    start, stop = _check_interval(cap, "sphere cap", low=0.0, high=math.pi)

    def directions(params):
        theta, phi = params[:, 0], params[:, 1]
        return np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], axis=1)

    def param_map(params):
        return center + radius * directions(params)

    def param_jacobian(params):
        theta, phi = params[:, 0], params[:, 1]
        d_theta = np.stack([np.cos(theta) * np.cos(phi), np.cos(theta) * np.sin(phi), -np.sin(theta)], axis=1)
        d_phi = np.stack([-np.sin(theta) * np.sin(phi), np.sin(theta) * np.cos(phi), np.zeros_like(theta)], axis=1)
        return radius * np.stack([d_theta, d_phi], axis=1)

    def closest_param(point):
        offset = point - center
        norm = np.linalg.norm(offset)
        theta = math.acos(np.clip(offset[2] / norm, -1.0, 1.0)) if norm > 0 else start
        phi = math.atan2(offset[1], offset[0]) % TWO_PI
        return np.array([min(max(theta, start), stop), phi])

    def ray_intersect(origins, rays, t_min):
        def accept(hits):
            polar = np.arccos(np.clip(hits[:, 2] / radius, -1.0, 1.0))
            return (polar >= start) & (polar <= stop)

        distances, hits = _sphere_hits(origins - center, rays, radius, t_min, accept)
        return distances, hits / radius

    return CurvedPatch(
        param_map=param_map,
        param_jacobian=param_jacobian,
        normal_field=directions,
        lower=[start, 0.0],
        upper=[stop, TWO_PI],
        dimension=3,
        absorption=absorption,
        id=id,
        kind="sphere",
        params={"center": center.tolist(), "radius": radius, "cap": [start, stop]},
        closest_param=closest_param,
        ray_intersect=ray_intersect,
    )


def cylinder(origin, axis, radius, height, arc=(0.0, TWO_PI), absorption=1.0, id=0):
    """
    Lateral surface of the cylinder of ``radius`` around the line through ``origin`` along ``axis``,
    parametrized by angle (restricted to ``arc``) and height in (0, height).
    """
    origin = as_point(origin, dimension=3, field="cylinder origin")
    axis = as_unit_vector(axis, normalize=True, field="cylinder axis")
    radius = check_positive(radius, "cylinder radius")
    height = check_positive(height, "cylinder height")
    start, stop = _check_interval(arc, "cylinder arc", max_width=TWO_PI)

    helper = np.zeros(3)
    helper[np.argmin(np.abs(axis))] = 1.0
    first = unit(np.cross(axis, helper))
    second = np.cross(axis, first)

    def normal_field(params):
        phi = params[:, 0]
        return np.cos(phi)[:, None] * first + np.sin(phi)[:, None] * second

    def param_map(params):
        return origin + radius * normal_field(params) + params[:, 1][:, None] * axis

    def param_jacobian(params):
        phi = params[:, 0]
        d_phi = radius * (-np.sin(phi)[:, None] * first + np.cos(phi)[:, None] * second)
        d_height = np.broadcast_to(axis, d_phi.shape)
        return np.stack([d_phi, d_height], axis=1)

    def closest_param(point):
        offset = point - origin
        phi = _wrap_angle(math.atan2(offset @ second, offset @ first), start, stop)
        return np.array([phi, min(max(offset @ axis, 0.0), height)])

    def ray_intersect(origins, rays, t_min):
        relative = origins - origin
        across = np.stack([relative @ first, relative @ second], axis=1)
        speed = np.stack([rays @ first, rays @ second], axis=1)
        a = np.einsum("ij,ij->i", speed, speed)
        b = np.einsum("ij,ij->i", across, speed)
        c = np.einsum("ij,ij->i", across, across) - radius ** 2
        discriminant = b ** 2 - a * c
        root = np.sqrt(np.maximum(discriminant, 0.0))
        moving = a > 1e-15
        safe_a = np.where(moving, a, 1.0)

        distances = np.full(len(origins), np.inf)
        for candidate in ((-b + root) / safe_a, (-b - root) / safe_a):
            hits = across + candidate[:, None] * speed
            along = relative @ axis + candidate * (rays @ axis)
            usable = (
                moving
                & (discriminant >= 0.0)
                & (candidate > t_min)
                & (candidate < distances)
                & (along >= 0.0)
                & (along <= height)
                & _angles_in_range(np.arctan2(hits[:, 1], hits[:, 0]), start, stop)
            )
            distances = np.where(usable, candidate, distances)

        hits = across + np.where(np.isfinite(distances), distances, 0.0)[:, None] * speed
        normals = (hits[:, 0:1] * first + hits[:, 1:2] * second) / radius
        return distances, normals

    return CurvedPatch(
        param_map=param_map,
        param_jacobian=param_jacobian,
        normal_field=normal_field,
        lower=[start, 0.0],
        upper=[stop, height],
        dimension=3,
        absorption=absorption,
        id=id,
        kind="cylinder",
        params={
            "origin": origin.tolist(),
            "axis": axis.tolist(),
            "radius": radius,
            "height": height,
            "arc": [start, stop],
        },
        closest_param=closest_param,
        ray_intersect=ray_intersect,
    )


def _factor(kind, value, x):
    """
    Value and derivative of a single coefficient-table factor.
    """
    if kind == "pow":
        power = int(value)
        if power == 0:
            return np.ones_like(x), np.zeros_like(x)
        return x ** power, power * x ** (power - 1)
    if kind == "cos":
        return np.cos(value * x), -value * np.sin(value * x)
    return np.sin(value * x), value * np.cos(value * x)


def _parse_terms(components, param_dim):
    parsed = []
    for i, terms in enumerate(components):
        component = []
        for j, term in enumerate(terms):
            field = f"components[{i}][{j}]"
            if not isinstance(term, dict) or "coef" not in term:
                raise ValidationError("a term needs a 'coef' entry", field=field)
            factors = list(term.get("factors", []))
            if len(factors) > param_dim:
                raise ValidationError(f"a term has at most {param_dim} factors", field=field)
            checked = []
            for factor in factors:
                if (
                    not isinstance(factor, (list, tuple))
                    or len(factor) != 2
                    or factor[0] not in _FACTOR_KINDS
                    or isinstance(factor[1], bool)
                    or not isinstance(factor[1], (int, float))
                ):
                    raise ValidationError(f"factors must be [kind, value] with kind in {_FACTOR_KINDS}", field=field)
                kind, value = factor
                if kind == "pow" and (isinstance(value, bool) or int(value) != value or value < 0):
                    raise ValidationError("powers must be non-negative integers", field=field)
                checked.append((kind, float(value)))
            checked.extend([("pow", 0.0)] * (param_dim - len(checked)))
            component.append((float(term["coef"]), checked))
        parsed.append(component)
    return parsed


def param(components, domain, absorption=1.0, id=0):
    """
    Patch whose coordinates are sums of products of powers, cosines and sines of the parameters.

    ``components`` holds one term list per ambient coordinate; a term is
    ``{"coef": c, "factors": [[kind, value], ...]}`` with one factor per parameter
    (missing factors are 1).  ``domain`` lists the (low, high) bounds of each parameter.
    The normal field is the unit normal of the mapped surface, so p must be N - 1.
    """
    dimension = len(components)
    domain = [_check_interval(interval, f"param domain[{i}]") for i, interval in enumerate(domain)]
    param_dim = len(domain)
    if dimension not in (2, 3) or param_dim != dimension - 1:
        raise ValidationError("param patches need N in (2, 3) coordinates and N - 1 parameters")
    terms = _parse_terms(components, param_dim)

    def _evaluate(params):
        values = np.zeros((len(params), dimension))
        derivatives = np.zeros((len(params), param_dim, dimension))
        for i, component in enumerate(terms):
            for coef, factors in component:
                evaluated = [_factor(kind, value, params[:, d]) for d, (kind, value) in enumerate(factors)]
                products = np.prod([f for f, _ in evaluated], axis=0)
                values[:, i] += coef * products
                for d in range(param_dim):
                    others = [f for e, (f, _) in enumerate(evaluated) if e != d]
                    rest = np.prod(others, axis=0) if others else 1.0
                    derivatives[:, d, i] += coef * evaluated[d][1] * rest
        return values, derivatives

    def param_map(params):
        return _evaluate(params)[0]

    def param_jacobian(params):
        return _evaluate(params)[1]

    def normal_field(params):
        jacobian = param_jacobian(params)
        if dimension == 2:
            tangent = jacobian[:, 0, :]
            return unit(np.stack([tangent[:, 1], -tangent[:, 0]], axis=1))
        return unit(np.cross(jacobian[:, 0, :], jacobian[:, 1, :]))

    ray_intersect = None
    if dimension == 2:
        grid = np.linspace(domain[0][0], domain[0][1], _BRACKET_SAMPLES)[:, None]

        def ray_intersect(origins, rays, t_min):
            points = param_map(grid)
            distances = np.full(len(origins), np.inf)
            normals = np.zeros((len(origins), 2))
            for k, (start, ray) in enumerate(zip(origins, rays)):

                def side(x):
                    offset = param_map(np.array([[x]]))[0] - start
                    return ray[0] * offset[1] - ray[1] * offset[0]

                offsets = points - start
                sides = ray[0] * offsets[:, 1] - ray[1] * offsets[:, 0]
                for j in np.flatnonzero(np.sign(sides[:-1]) * np.sign(sides[1:]) <= 0):
                    if sides[j] == 0.0:
                        root = grid[j, 0]
                    elif sides[j + 1] == 0.0:
                        continue
                    else:
                        root = optimize.brentq(side, grid[j, 0], grid[j + 1, 0], xtol=1e-15)
                    distance = (param_map(np.array([[root]]))[0] - start) @ ray
                    if t_min < distance < distances[k]:
                        distances[k] = distance
                        normals[k] = normal_field(np.array([[root]]))[0]
            return distances, normals

    return CurvedPatch(
        param_map=param_map,
        param_jacobian=param_jacobian,
        normal_field=normal_field,
        lower=[low for low, _ in domain],
        upper=[high for _, high in domain],
        dimension=dimension,
        absorption=absorption,
        id=id,
        kind="param",
        params={
            "components": [
                [{"coef": coef, "factors": [[kind, value] for kind, value in factors]} for coef, factors in component]
                for component in terms
            ],
            "domain": [[low, high] for low, high in domain],
        },
        ray_intersect=ray_intersect,
    )


PATCH_TYPES = {"circle": circle, "sphere": sphere, "cylinder": cylinder, "param": param}


def make_patch(kind, params, absorption=1.0, id=0):
    try:
        constructor = PATCH_TYPES[kind]
    except KeyError:
        raise ValidationError(f"unknown patch type {kind!r}, expected one of {sorted(PATCH_TYPES)}") from None
    if not isinstance(params, dict):
        raise ValidationError(f"{kind} patch params must be an object")
    try:
        return constructor(**params, absorption=absorption, id=id)
    except TypeError as e:
        raise ValidationError(f"invalid {kind} patch params: {e}") from None
