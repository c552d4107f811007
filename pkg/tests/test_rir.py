import math

import numpy as np
import pytest

from gism.entities import Interpolation, ReflectionPath, Signal, VirtualSource, WeightedAtom
from gism.exceptions import CollocatedAtom, ValidationError
from gism.geometry import Boundary, shoebox
from gism.planar_engine import enumerate_virtual_sources
from gism.rir import (
    DirectivityPattern,
    SourceMeasure,
    absorption_coeff,
    assemble_measure,
    directivity_coeff,
    render_rir,
    tap_list,
)

from . import constants


FS = 16000.0
OCTAHEDRON = [
    ([1, 0, 0], 1.0),
    ([-1, 0, 0], 0.1),
    ([0, 1, 0], 0.5),
    ([0, -1, 0], 0.2),
    ([0, 0, 1], 0.3),
    ([0, 0, -1], 0.4),
]


@pytest.fixture
def free_field_measure():
    s = np.array([0.0, 0.0])
    r = np.array([constants.FREE_FIELD_DISTANCE, 0.0])
    direct = VirtualSource(position=s, order=0, path=ReflectionPath(source=s, sink=r))
    return assemble_measure([direct], [], Boundary(), s, r)


@pytest.fixture
def shoebox_measure(shoebox_boundary):
    def _shoebox_measure(max_order=1, boundary=None, **kwargs):
        boundary = boundary or shoebox_boundary
        s, r = constants.SHOEBOX_SOURCE, constants.SHOEBOX_RECEIVER
        sources = enumerate_virtual_sources(boundary, s, r, max_order=max_order)
        return assemble_measure(sources, [], boundary, s, r, **kwargs)

    return _shoebox_measure


class TestDirectivityPattern:
    def test_omni(self):
        assert DirectivityPattern.omni()([0.0, 1.0]) == 1.0
        assert str(DirectivityPattern.omni()) == "omni pattern"

    def test_cardioid(self):
        pattern = DirectivityPattern.cardioid([2.0, 0.0, 0.0])
        assert pattern.axis == pytest.approx([1.0, 0.0, 0.0])
        assert pattern([1.0, 0.0, 0.0]) == pytest.approx(1.0)
        assert pattern([0.0, 1.0, 0.0]) == pytest.approx(0.5)
        assert abs(pattern([-1.0, 0.0, 0.0])) <= 1e-12

    def test_cardioid_needs_axis(self):
        with pytest.raises(ValidationError):
            DirectivityPattern(kind="cardioid")

    def test_tabulated_2d(self):
        pattern = DirectivityPattern.tabulated([([1.0, 0.0], 1.0), ([0.0, 1.0], 0.5)])
        diagonal = np.array([1.0, 1.0]) / math.sqrt(2.0)
        assert pattern(diagonal) == pytest.approx(0.75)
        assert pattern([0.0, 1.0]) == pytest.approx(0.5)

    def test_tabulated_2d_wraps(self):
        pattern = DirectivityPattern.tabulated(
            [([1.0, 0.0], 1.0), ([0.0, 1.0], 0.5), ([-1.0, 0.0], 0.0), ([0.0, -1.0], 0.5)]
        )
        below = np.array([1.0, -1.0]) / math.sqrt(2.0)
        assert pattern(below) == pytest.approx(0.75)
        assert pattern([-1.0, 1e-12]) == pytest.approx(0.0, abs=1e-9)

    def test_tabulated_3d(self):
        pattern = DirectivityPattern.tabulated(OCTAHEDRON)
        assert pattern([0.0, 1.0, 0.0]) == pytest.approx(0.5)
        corner = np.ones(3) / math.sqrt(3.0)
        assert pattern(corner) == pytest.approx((1.0 + 0.5 + 0.3) / 3.0)

    @pytest.mark.parametrize(
        "entries",
        [
            [([1.0, 0.0], 1.0)],
            [([1.0, 0.0, 0.0], 1.0), ([0.0, 1.0, 0.0], 1.0), ([0.0, 0.0, 1.0], 1.0)],
            [([1.0, 0.0], 1.0), ([0.0, 1.0, 0.0], 1.0)],
            [([2.0, 0.0], 1.0), ([0.0, 1.0], 1.0)],
            [([1.0, 0.0], math.nan), ([0.0, 1.0], 1.0)],
        ],
    )
    def test_tabulated_invalid(self, entries):
        with pytest.raises(ValidationError):
            DirectivityPattern.tabulated(entries)

    def test_tabulated_3d_must_surround_origin(self):
        entries = [
            ([1.0, 0.0, 0.0], 1.0),
            ([0.0, 1.0, 0.0], 1.0),
            ([0.0, 0.0, 1.0], 1.0),
            (np.array([1.0, 1.0, 1.0]) / math.sqrt(3.0), 1.0),
        ]
        with pytest.raises(ValidationError):
            DirectivityPattern.tabulated(entries)


class TestCoefficients:
    def test_absorption_product(self):
        boundary = shoebox(constants.SHOEBOX_LOWER, constants.SHOEBOX_UPPER, absorption=0.5)
        sources = enumerate_virtual_sources(
            boundary, constants.SHOEBOX_SOURCE, constants.SHOEBOX_RECEIVER, max_order=2
        )
        second = next(source for source in sources if source.order == 2)
        atom = WeightedAtom(position=second.position, weight=1.0, stratum_dim=0, path=second.path)
        assert absorption_coeff(atom, boundary) == pytest.approx(0.25)

    @pytest.mark.parametrize("wall_id", range(4))
    def test_lower_absorption_never_raises_a_tap(self, wall_id):
        s, r = constants.SHOEBOX_SOURCE, constants.SHOEBOX_RECEIVER

        def taps(absorption):
            boundary = shoebox(constants.SHOEBOX_LOWER, constants.SHOEBOX_UPPER, absorption=absorption)
            sources = enumerate_virtual_sources(boundary, s, r, max_order=3)
            return tap_list(assemble_measure(sources, [], boundary, s, r), constants.SPEED_OF_SOUND)

        absorption = np.full(4, 0.8)
        before = taps(absorption)
        absorption[wall_id] = 0.3
        after = taps(absorption)

        assert [tap.delay for tap in after] == [tap.delay for tap in before]
        assert all(lowered.amplitude <= tap.amplitude for lowered, tap in zip(after, before))
        assert any(lowered.amplitude < tap.amplitude for lowered, tap in zip(after, before))

    def test_absorption_hook(self, shoebox_boundary):
        sources = enumerate_virtual_sources(
            shoebox_boundary, constants.SHOEBOX_SOURCE, constants.SHOEBOX_RECEIVER, max_order=1
        )
        floor = next(source for source in sources if tuple(source.wall_sequence) == (2,))
        atom = WeightedAtom(position=floor.position, weight=1.0, stratum_dim=0, path=floor.path)

        angles = []

        def hook(element, angle):
            angles.append(angle)
            return math.cos(angle)

        coefficient = absorption_coeff(atom, shoebox_boundary, hooks={2: hook})
        incidence = math.atan2(0.3 * 3 / 7, 0.3)
        assert angles == [pytest.approx(incidence)]
        assert coefficient == pytest.approx(math.cos(incidence))

    def test_absorption_hook_out_of_range(self, shoebox_boundary):
        sources = enumerate_virtual_sources(
            shoebox_boundary, constants.SHOEBOX_SOURCE, constants.SHOEBOX_RECEIVER, max_order=1
        )
        atom = WeightedAtom(position=sources[1].position, weight=1.0, stratum_dim=0, path=sources[1].path)
        hooks = {element_id: (lambda element, angle: 2.0) for element_id in range(4)}
        with pytest.raises(ValidationError):
            absorption_coeff(atom, shoebox_boundary, hooks=hooks)

    def test_directivity_direct_path(self):
        s, r = np.zeros(3), np.array([2.0, 0.0, 0.0])
        atom = WeightedAtom(position=s, weight=1.0, stratum_dim=0, path=ReflectionPath(source=s, sink=r))
        front = DirectivityPattern.cardioid([1.0, 0.0, 0.0])
        back = DirectivityPattern.cardioid([-1.0, 0.0, 0.0])
        assert directivity_coeff(atom, front, DirectivityPattern.omni()) == pytest.approx(1.0)
        assert abs(directivity_coeff(atom, back, DirectivityPattern.omni())) <= 1e-12
        assert directivity_coeff(atom, DirectivityPattern.omni(), back) == pytest.approx(1.0)

    def test_directivity_uses_reflection_points(self, create_path):
        path = create_path([0.0, 1.0], [(0, [1.0, 0.0])], [2.0, 1.0])
        atom = WeightedAtom(position=np.array([0.0, -1.0]), weight=1.0, stratum_dim=0, path=path)
        down = DirectivityPattern.cardioid([0.0, -1.0])
        expected = 0.5 * (1.0 + 1.0 / math.sqrt(2.0))
        assert directivity_coeff(atom, down, down) == pytest.approx(expected ** 2)

    def test_omni_is_neutral(self, shoebox_measure):
        plain = tap_list(shoebox_measure(max_order=2), constants.SPEED_OF_SOUND)
        omni = tap_list(
            shoebox_measure(
                max_order=2,
                source_directivity=DirectivityPattern.omni(),
                receiver_directivity=DirectivityPattern.omni(),
            ),
            constants.SPEED_OF_SOUND,
        )
        assert plain == omni


class TestSourceMeasure:
    def test_strata(self, shoebox_measure, create_path):
        measure = shoebox_measure(max_order=1)
        continuum = WeightedAtom(
            position=np.array([0.0, -1.0]), weight=0.01, stratum_dim=1, path=create_path([0.0, 1.0], [], [0.5, 0.5])
        )
        combined = measure.union(
            SourceMeasure(atoms=[continuum], source=measure.source, receiver=measure.receiver)
        )
        assert len(combined) == 6
        assert combined.counts_by_stratum() == {0: 5, 1: 1}
        assert list(combined.strata()) == [0, 1]

    def test_planar_atoms(self, shoebox_measure):
        measure = shoebox_measure(max_order=2)
        for atom in measure.atoms:
            assert atom.weight == 1.0
            assert atom.stratum_dim == 0
            assert atom.validity_residual <= 1e-10
            assert atom.amplitude_factors == (1.0, 1.0)


class TestTapList:
    def test_free_field(self, free_field_measure):
        taps = tap_list(free_field_measure, constants.SPEED_OF_SOUND)
        assert len(taps) == 1
        assert taps[0].delay == pytest.approx(0.01)
        assert taps[0].amplitude == pytest.approx(1.0 / constants.FREE_FIELD_DISTANCE)

    def test_shoebox_first_order(self, shoebox_measure):
        measure = shoebox_measure(max_order=1)
        taps = tap_list(measure, constants.SPEED_OF_SOUND)
        assert len(taps) == 5
        assert [tap.delay for tap in taps] == sorted(tap.delay for tap in taps)
        r = np.array(constants.SHOEBOX_RECEIVER)
        distances = sorted(np.linalg.norm(atom.position - r) for atom in measure.atoms)
        assert [tap.amplitude for tap in taps] == [1.0 / d for d in distances]

    def test_rigid_walls_are_silent(self):
        boundary = shoebox(constants.SHOEBOX_LOWER, constants.SHOEBOX_UPPER, absorption=0.0)
        sources = enumerate_virtual_sources(
            boundary, constants.SHOEBOX_SOURCE, constants.SHOEBOX_RECEIVER, max_order=3
        )
        measure = assemble_measure(sources, [], boundary, constants.SHOEBOX_SOURCE, constants.SHOEBOX_RECEIVER)
        taps = tap_list(measure, constants.SPEED_OF_SOUND)
        assert len(taps) == len(sources)
        assert sum(tap.amplitude != 0.0 for tap in taps) == 1

    def test_collocated_direct(self):
        s = np.array([0.5, 0.5])
        direct = VirtualSource(position=s, order=0, path=ReflectionPath(source=s, sink=s))
        measure = assemble_measure([direct], [], Boundary(), s, s)
        taps = tap_list(measure, constants.SPEED_OF_SOUND)
        assert taps[0].delay == 0.0
        assert taps[0].amplitude == 1.0

    def test_collocated_reflection(self, create_path):
        r = np.array([1.0, 1.0])
        atom = WeightedAtom(
            position=r + 1e-4, weight=1.0, stratum_dim=0, path=create_path([0.0, 1.0], [(0, [0.5, 0.0])], r)
        )
        measure = SourceMeasure(atoms=[atom], source=[0.0, 1.0], receiver=r)
        with pytest.raises(CollocatedAtom):
            tap_list(measure, constants.SPEED_OF_SOUND)

    def test_speed_of_sound(self, free_field_measure):
        with pytest.raises(ValidationError):
            tap_list(free_field_measure, 0.0)


class TestRenderRir:
    def test_free_field(self, free_field_measure):
        signal = render_rir(free_field_measure, out_rate=FS)
        assert signal.sample_rate == FS
        assert np.flatnonzero(signal.samples).tolist() == [160]
        assert signal.samples[160] == pytest.approx(1.0 / constants.FREE_FIELD_DISTANCE)

    def test_shoebox_taps_land_on_distinct_samples(self, shoebox_measure):
        signal = render_rir(shoebox_measure(max_order=1), out_rate=FS)
        assert len(np.flatnonzero(signal.samples)) == 5
        assert len(signal) >= 63

    def test_duration(self, free_field_measure, caplog):
        signal = render_rir(free_field_measure, out_rate=FS, duration=0.005)
        assert len(signal) == 80
        assert not np.any(signal.samples)
        assert "extend beyond" in caplog.text

    def test_additivity(self, shoebox_measure):
        first = shoebox_measure(max_order=1)
        second = shoebox_measure(max_order=2)
        second = SourceMeasure(
            atoms=[atom for atom in second.atoms if atom.order == 2], source=second.source, receiver=second.receiver
        )
        for interpolation in Interpolation:
            whole = render_rir(first.union(second), out_rate=FS, duration=0.01, interpolation=interpolation)
            parts = [render_rir(m, out_rate=FS, duration=0.01, interpolation=interpolation) for m in (first, second)]
            np.testing.assert_allclose(whole.samples, parts[0].samples + parts[1].samples, rtol=1e-12, atol=1e-15)

    def test_excitation(self, free_field_measure):
        excitation = Signal(samples=[1.0, 0.5], sample_rate=FS)
        signal = render_rir(free_field_measure, excitation, out_rate=FS)
        amplitude = 1.0 / constants.FREE_FIELD_DISTANCE
        assert signal.samples[160:162] == pytest.approx([amplitude, 0.5 * amplitude])
        assert np.count_nonzero(signal.samples) == 2

    def test_excitation_rate_mismatch(self, free_field_measure):
        with pytest.raises(ValidationError):
            render_rir(free_field_measure, Signal(samples=[1.0], sample_rate=8000.0), out_rate=FS)

    def test_sinc(self):
        s = np.zeros(2)
        r = np.array([1.0, 0.0])
        measure = assemble_measure(
            [VirtualSource(position=s, order=0, path=ReflectionPath(source=s, sink=r))], [], Boundary(), s, r
        )
        signal = render_rir(measure, out_rate=FS, interpolation="sinc")
        center = FS / constants.SPEED_OF_SOUND
        assert np.sum(signal.samples) == pytest.approx(1.0, rel=1e-2)
        assert int(np.argmax(signal.samples)) == round(center)

    def test_collocated_reflection(self, create_path):
        r = np.array([1.0, 1.0])
        atom = WeightedAtom(position=r, weight=1.0, stratum_dim=0, path=create_path([0.0, 1.0], [(0, [0.5, 0.0])], r))
        with pytest.raises(CollocatedAtom):
            render_rir(SourceMeasure(atoms=[atom], source=[0.0, 1.0], receiver=r))
