import json

import numpy as np
import pytest
from scipy.io import wavfile

from gism.entities import DirectivityKind, ReflectionPath, Signal, Tap, WeightedAtom
from gism.exceptions import OutputError, ParseError, ValidationError
from gism.scene_io import load_scene, parse_scene, path_record, read_excitation, serialize_scene, write_outputs

from . import constants


SCENES_PATH = constants.TESTS_PATH / "scenes"


def _read_scene(name):
    return (SCENES_PATH / name).read_text()


class TestParseScene:
    def test_shoebox(self):
        scene = load_scene(SCENES_PATH / "shoebox.json")
        assert scene.dimension == 2
        assert len(scene.boundary.walls) == 4
        assert [wall.id for wall in scene.boundary.walls] == [0, 1, 2, 3]
        assert scene.source == pytest.approx(constants.SHOEBOX_SOURCE)
        assert scene.max_order == 3
        assert scene.output.formats == ("csv", "wav")
        assert scene.source_directivity.kind == DirectivityKind.OMNI
        assert str(scene) == "2D scene with 4 boundary elements"

    def test_inferred_normals(self):
        scene = parse_scene(_read_scene("shoebox.json"))
        floor = scene.boundary.element(0)
        assert floor.normal == pytest.approx([0.0, 1.0])
        assert floor.offset == pytest.approx(0.0)

    def test_explicit_normal(self):
        scene = parse_scene(_read_scene("corridor.json"))
        assert scene.boundary.element(1).normal == pytest.approx([0.0, -1.0])
        assert scene.boundary.element(1).offset == pytest.approx(-1.0)

    def test_defaults(self, shoebox_scene_data):
        del shoebox_scene_data["simulation"]
        scene = parse_scene(json.dumps(shoebox_scene_data))
        assert scene.curved_max_order == 1
        assert scene.collocated is False
        assert scene.tolerances.angular_tol is None
        assert scene.output.duration is None
        assert scene.c == constants.SPEED_OF_SOUND

    def test_room3d(self):
        scene = parse_scene(_read_scene("room3d.json"))
        assert scene.dimension == 3
        assert [wall.id for wall in scene.boundary.walls] == list(range(6))
        assert scene.boundary.patches[0].id == 6
        assert scene.boundary.points[0].id == 7
        assert scene.patch_lattice == {6: 20}
        assert scene.source_directivity.kind == DirectivityKind.CARDIOID
        assert scene.receiver_directivity.kind == DirectivityKind.TABULATED
        assert scene.receiver_directivity([1.0, 0.0, 0.0]) == pytest.approx(1.0)

    @pytest.mark.parametrize("name", ["room3d.json", "corridor.json", "circle.json"])
    def test_serialize_is_canonical(self, name):
        text = serialize_scene(parse_scene(_read_scene(name)))
        assert serialize_scene(parse_scene(text)) == text

    def test_malformed_json(self):
        with pytest.raises(ParseError) as excinfo:
            parse_scene('{\n  "dimension": 2,\n  "source": ,\n}')
        assert excinfo.value.line == 3
        assert "line 3" in str(excinfo.value)

    def test_truncated_file(self):
        with pytest.raises(ParseError):
            load_scene(SCENES_PATH / "malformed.json")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError, match="cannot read scene file"):
            load_scene(tmp_path / "missing.json")

    @pytest.mark.parametrize(
        "mutate, field",
        [
            (lambda data: data["walls"][0].update(color="red"), "walls[0]"),
            (lambda data: data["walls"][0]["vertices"][1].__setitem__(0, "one"), "walls[0].vertices[1][0]"),
            (lambda data: data.pop("source"), "source"),
            (lambda data: data.update(dimension="2"), "dimension"),
            (lambda data: data["source"].update(directivity={"kind": "shotgun"}), "source.directivity.kind"),
            (lambda data: data["simulation"].update(collocated="yes"), "simulation.collocated"),
            (lambda data: data["simulation"].update(max_order=1.5), "simulation.max_order"),
        ],
    )
    def test_parse_errors(self, shoebox_scene_data, mutate, field):
        mutate(shoebox_scene_data)
        with pytest.raises(ParseError) as excinfo:
            parse_scene(json.dumps(shoebox_scene_data))
        assert excinfo.value.field == field

    def test_not_an_object(self):
        with pytest.raises(ParseError, match="expected an object"):
            parse_scene("[1, 2]")

    @pytest.mark.parametrize(
        "mutate",
        [
            lambda data: data["walls"][0].update(absorption=1.5),
            lambda data: data["walls"][0]["vertices"].append([0.5, 0.5]),
            lambda data: data.update(dimension=4),
            lambda data: data["receiver"].update(position=list(constants.SHOEBOX_SOURCE)),
            lambda data: data["simulation"].update(lattice_M=1),
            lambda data: data["simulation"].update(curved_max_order=3),
            lambda data: data["simulation"]["output"].update(formats=["mp3"]),
            lambda data: data.update(patches=[{"type": "sphere", "params": {"center": [0, 0, 0], "radius": 1}}]),
        ],
    )
    def test_validation_errors(self, shoebox_scene_data, mutate):
        mutate(shoebox_scene_data)
        with pytest.raises(ValidationError):
            parse_scene(json.dumps(shoebox_scene_data))

    def test_bad_absorption_file(self):
        with pytest.raises(ValidationError, match="absorption"):
            load_scene(SCENES_PATH / "bad_absorption.json")

    def test_non_planar_wall(self):
        data = json.loads(_read_scene("room3d.json"))
        data["walls"][0]["vertices"][2] = [4, 3, 0.5]
        with pytest.raises(ValidationError, match="non-planar"):
            parse_scene(json.dumps(data))

    def test_collocated(self, shoebox_scene_data):
        shoebox_scene_data["receiver"]["position"] = list(constants.SHOEBOX_SOURCE)
        shoebox_scene_data["simulation"]["collocated"] = True
        scene = parse_scene(json.dumps(shoebox_scene_data))
        assert scene.collocated

    def test_patch_lattice(self, shoebox_scene_data):
        shoebox_scene_data["patches"] = [
            {"type": "circle", "params": {"center": [0.5, 0.5], "radius": 0.1}, "M": 50},
            {"id": 20, "type": "circle", "params": {"center": [0.5, 0.5], "radius": 0.2}},
        ]
        scene = parse_scene(json.dumps(shoebox_scene_data))
        assert [patch.id for patch in scene.boundary.patches] == [4, 20]
        assert scene.patch_lattice == {4: 50}

    def test_duplicate_ids(self, shoebox_scene_data):
        shoebox_scene_data["walls"][1]["id"] = 0
        with pytest.raises(ValidationError, match="distinct"):
            parse_scene(json.dumps(shoebox_scene_data))


class TestReadExcitation:
    def test_int16(self, tmp_path):
        path = tmp_path / "click.wav"
        wavfile.write(path, 16000, np.array([0, 16384, -32768], dtype=np.int16))
        signal = read_excitation(path)
        assert signal.sample_rate == 16000.0
        np.testing.assert_allclose(signal.samples, [0.0, 0.5, -1.0])

    def test_stereo(self, tmp_path, caplog):
        path = tmp_path / "stereo.wav"
        wavfile.write(path, 8000, np.array([[0.25, 1.0], [0.5, 1.0]], dtype=np.float32))
        signal = read_excitation(path)
        np.testing.assert_allclose(signal.samples, [0.25, 0.5])
        assert "using the first" in caplog.text

    def test_missing(self, tmp_path):
        with pytest.raises(ValidationError, match="excitation"):
            read_excitation(tmp_path / "missing.wav")


class TestWriteOutputs:
    @pytest.fixture
    def results(self, create_path):
        path = create_path([0.3, 0.3], [(2, [0.42857142857142855, 0.0])], [0.6, 0.4])
        atom = WeightedAtom(position=np.array([0.3, -0.3]), weight=1.0, stratum_dim=0, path=path)
        taps = [Tap(delay=0.001, amplitude=0.5, order=0), Tap(delay=0.002, amplitude=0.25, order=1)]
        signal = Signal(samples=np.array([0.0, 0.5, 0.25]), sample_rate=1000.0)
        return taps, signal, [path_record(atom)]

    def test_all_files(self, tmp_path, results):
        taps, signal, records = results
        written = write_outputs(taps, signal, records, tmp_path / "out")
        assert sorted(p.name for p in written) == ["paths.jsonl", "rir.csv", "rir.wav", "taps.csv"]

        lines = (tmp_path / "out" / "taps.csv").read_text().splitlines()
        assert lines[0] == "delay_s,amplitude,order,stratum_dim"
        assert lines[1:] == ["0.001,0.5,0,0", "0.002,0.25,1,0"]
        assert len((tmp_path / "out" / "rir.csv").read_text().splitlines()) == 4

        rate, data = wavfile.read(tmp_path / "out" / "rir.wav")
        assert rate == 1000
        np.testing.assert_allclose(data, [0.0, 0.5, 0.25])

        record = json.loads((tmp_path / "out" / "paths.jsonl").read_text())
        assert record["wall_sequence"] == [2]
        assert record["image"] == [0.3, -0.3]

    def test_only_paths(self, tmp_path, results):
        _, _, records = results
        written = write_outputs(None, None, records, tmp_path)
        assert [p.name for p in written] == ["paths.jsonl"]

    def test_formats(self, tmp_path, results):
        written = write_outputs(*results, tmp_path, formats=("csv",))
        assert not (tmp_path / "rir.wav").exists()
        assert len(written) == 3

    def test_unwritable(self, tmp_path, results):
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(OutputError) as excinfo:
            write_outputs(*results, blocker)
        assert excinfo.value.path == str(blocker)


def test_path_record():
    s, r = np.array([0.0, 0.0]), np.array([1.0, 0.0])
    atom = WeightedAtom(position=s, weight=1.0, stratum_dim=0, path=ReflectionPath(source=s, sink=r))
    record = path_record(atom, visible=False)
    assert set(record) == {
        "order",
        "wall_sequence",
        "points",
        "image",
        "weight",
        "stratum_dim",
        "validity_residual",
        "visible",
        "grazing",
    }
    assert record["order"] == 0
    assert record["points"] == [[0.0, 0.0], [1.0, 0.0]]
    assert record["visible"] is False
