import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st

from gism.exceptions import ConfigurationError
from gism.geometry import Boundary, shoebox
from gism.oracle import ray_directions, ray_shoot, rect_lattice_images
from gism.patches import param
from gism.planar_engine import enumerate_virtual_sources

from . import constants


def test_rect_lattice_images_counts():
    images = rect_lattice_images(constants.SHOEBOX_LOWER, constants.SHOEBOX_UPPER, constants.SHOEBOX_SOURCE, 3)
    orders = [order for _, order in images]
    assert [orders.count(n) for n in range(4)] == [1, 4, 8, 12]

    first = sorted(tuple(np.round(position, 12)) for position, order in images if order == 1)
    assert first == sorted(constants.SHOEBOX_FIRST_ORDER_IMAGES)


def test_rect_lattice_images_3d():
    images = rect_lattice_images([0, 0, 0], [4, 3, 2.5], [1, 1, 1], 2)
    orders = [order for _, order in images]
    assert [orders.count(n) for n in range(3)] == [1, 6, 18]


@pytest.mark.parametrize(
    "lower, upper, s",
    [
        ([0, 0], [1, 0], [0.5, 0.0]),
        ([0, 0], [1, 1], [1.5, 0.5]),
        ([0, 0], [1, 1], [0.0, 0.5]),
    ],
)
def test_rect_lattice_images_invalid(lower, upper, s):
    with pytest.raises(ValueError):
        rect_lattice_images(lower, upper, s, 1)


@st.composite
def boxes(draw):
    dimension = draw(st.sampled_from([2, 3]))
    upper = np.array(draw(st.lists(st.floats(2.0, 10.0), min_size=dimension, max_size=dimension)))
    s = np.array(draw(st.lists(st.floats(0.1, 0.9), min_size=dimension, max_size=dimension))) * upper
    r = np.array(draw(st.lists(st.floats(0.1, 0.9), min_size=dimension, max_size=dimension))) * upper
    return upper, s, r


@seed(constants.FUZZ_SEED)
@settings(max_examples=20, deadline=None)
@given(boxes())
def test_engine_matches_image_lattice(box):
    upper, s, r = box
    max_order = 5
    lower = np.zeros(len(upper))
    expected = rect_lattice_images(lower, upper, s, max_order)
    sources = enumerate_virtual_sources(shoebox(lower, upper), s, r, max_order=max_order)

    assert len(sources) == len(expected)
    for order in range(max_order + 1):
        found = np.array([source.position for source in sources if source.order == order])
        reference = np.array([position for position, o in expected if o == order])
        assert len(found) == len(reference)
        for position in reference:
            assert np.min(np.linalg.norm(found - position, axis=1)) <= 1e-9


@pytest.mark.parametrize("dimension", [2, 3])
def test_ray_directions(dimension):
    directions = ray_directions(dimension, 1000)
    assert directions.shape == (1000, dimension)
    np.testing.assert_allclose(np.linalg.norm(directions, axis=1), 1.0)
    assert np.linalg.norm(directions.mean(axis=0)) < 1e-2


class TestRayShoot:
    def test_free_field(self):
        s, r = [0.0, 0.0], [constants.FREE_FIELD_DISTANCE, 0.0]
        arrivals = ray_shoot(Boundary(), s, r, n_rays=10_000, max_bounces=0)
        assert arrivals
        assert all(arrival.bounces == 0 for arrival in arrivals)
        for arrival in arrivals:
            assert arrival.time == pytest.approx(0.01, abs=0.05 / constants.SPEED_OF_SOUND)

    def test_shoebox_first_order(self, shoebox_boundary):
        s, r = constants.SHOEBOX_SOURCE, constants.SHOEBOX_RECEIVER
        arrivals = ray_shoot(shoebox_boundary, s, r, n_rays=100_000, capture_radius=0.01)
        reflected = [arrival.time for arrival in arrivals if arrival.bounces == 1]
        expected = [
            np.linalg.norm(np.subtract(image, r)) / constants.SPEED_OF_SOUND
            for image in constants.SHOEBOX_FIRST_ORDER_IMAGES
        ]
        for delay in expected:
            assert min(abs(time - delay) for time in reflected) <= 0.01 / constants.SPEED_OF_SOUND

    def test_too_few_rays(self):
        with pytest.raises(ValueError):
            ray_shoot(Boundary(), [0.0, 0.0], [1.0, 0.0], n_rays=999)

    def test_patch_without_ray_intersection(self):
        patch = param(
            [
                [{"coef": 1, "factors": [["pow", 1], ["pow", 0]]}],
                [{"coef": 1, "factors": [["pow", 0], ["pow", 1]]}],
                [],
            ],
            [[-1, 1], [-1, 1]],
        )
        with pytest.raises(ConfigurationError):
            ray_shoot(Boundary(patches=[patch]), [0.0, 0.0, 1.0], [0.0, 0.5, 1.0])
