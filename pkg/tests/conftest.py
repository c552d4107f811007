import json

import numpy as np
import pytest

from gism.entities import Reflection, ReflectionPath
from gism.geometry import Boundary, PlanarWall, shoebox
from gism.patches import circle

from . import constants


@pytest.fixture
def create_wall():
    def _create_wall(vertices, normal=None, absorption=1.0, id=0):
        vertices = np.array(vertices, dtype=float)
        if normal is None:
            direction = vertices[1] - vertices[0]
            normal = np.array([-direction[1], direction[0]]) / np.linalg.norm(direction)
        normal = np.asarray(normal, dtype=float)
        return PlanarWall(
            normal=normal, offset=float(normal @ vertices[0]), vertices=vertices, absorption=absorption, id=id
        )

    return _create_wall


@pytest.fixture
def create_path():
    def _create_path(source, reflections, sink):
        return ReflectionPath(
            source=source,
            reflections=[Reflection(point=point, element_id=element_id) for element_id, point in reflections],
            sink=sink,
        )

    return _create_path


@pytest.fixture
def shoebox_boundary():
    return shoebox(constants.SHOEBOX_LOWER, constants.SHOEBOX_UPPER)


@pytest.fixture
def corridor_boundary(create_wall):
    return Boundary(
        walls=[
            create_wall([[-5.0, 0.0], [5.0, 0.0]], id=0),
            create_wall([[-2.5, 1.0], [2.5, 1.0]], id=1),
        ]
    )


@pytest.fixture
def two_wall_boundary(create_wall):
    return Boundary(
        walls=[
            create_wall([[-5.0, 0.0], [5.0, 0.0]], id=0),
            create_wall([[0.0, 0.5], [0.0, 1.5]], id=1),
        ]
    )


@pytest.fixture
def circle_boundary():
    return Boundary(patches=[circle((0.0, 0.0), constants.CIRCLE_RADIUS, arc=constants.CIRCLE_ARC)])


@pytest.fixture
def shoebox_scene_data():
    return {
        "dimension": 2,
        "speed_of_sound": constants.SPEED_OF_SOUND,
        "walls": [
            {"vertices": [[0, 0], [1, 0]]},
            {"vertices": [[1, 0], [1, 1]]},
            {"vertices": [[1, 1], [0, 1]]},
            {"vertices": [[0, 1], [0, 0]]},
        ],
        "source": {"position": list(constants.SHOEBOX_SOURCE)},
        "receiver": {"position": list(constants.SHOEBOX_RECEIVER)},
        "simulation": {"max_order": 1, "output": {"fs": 16000}},
    }


@pytest.fixture
def write_scene(tmp_path):
    next_id = 1

    def _write_scene(data):
        nonlocal next_id

        path = tmp_path / f"scene{next_id}.json"
        next_id += 1
        path.write_text(json.dumps(data))
        return path

    return _write_scene
