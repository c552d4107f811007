import logging
from dataclasses import dataclass, replace
from typing import List, Optional

import numpy as np

from .config import RunConfig
from .curved_engine import find_curved_paths
from .entities import Reflection, ReflectionPath, Signal, Tap
from .exceptions import ValidationError
from .geometry import compose_projections
from .paths import check_equal_angles, classify_path, path_length
from .planar_engine import enumerate_virtual_sources
from .rir import SourceMeasure, assemble_measure, render_rir, tap_list
from .scene_io import load_scene, path_record, read_excitation


__all__ = ["Simulation", "SimulationResult", "PathReport", "apply_overrides"]


logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SimulationResult:
    measure: SourceMeasure
    taps: List[Tap]
    signal: Optional[Signal]

    def summary(self):
        lines = ["Atoms per stratum:"]
        for dim, count in self.measure.counts_by_stratum().items():
            lines.append(f"  {dim}: {count}")
        lines.append(f"Taps: {len(self.taps)}")
        if self.taps:
            lines.append(f"First arrival: {self.taps[0].delay:.9g} s")
        else:
            lines.append("First arrival: none")
        return "\n".join(lines)

    def path_records(self):
        return [path_record(atom) for atom in self.measure.atoms]


@dataclass(frozen=True, eq=False)
class PathReport:
    path: ReflectionPath
    valid: bool
    validity_residual: float
    equal_angle_residual: float
    visible: bool
    blocking_element: Optional[int]
    grazing: bool
    image: np.ndarray
    length: float

    def __str__(self):
        lines = [
            f"Path: {self.path}",
            f"Valid: {self.valid} (residual {self.validity_residual:.3g})",
            f"Equal-angle residual: {self.equal_angle_residual:.3g}",
            f"Visible: {self.visible}" + ("" if self.visible else f" (blocked by element {self.blocking_element})"),
            f"Grazing: {self.grazing}",
            f"Image position: {self.image.tolist()}",
            f"Path length: {self.length:.9g} m",
        ]
        return "\n".join(lines)


def apply_overrides(scene, config):
    """
    Scene with the engine and render settings of ``config`` that are not None.
    """
    engine, render = config.engine, config.render
    changes = {
        key: value
        for key, value in (
            ("max_order", engine.max_order),
            ("curved_max_order", engine.curved_max_order),
            ("lattice_M", engine.lattice_M),
        )
        if value is not None
    }
    output = {
        key: value
        for key, value in (("fs", render.fs), ("duration", render.duration), ("formats", render.formats))
        if value is not None
    }
    return replace(scene, output=replace(scene.output, **output), **changes)


class Simulation:
    @classmethod
    def from_config(cls, config):
        scene = apply_overrides(load_scene(config.scene_path), config)
        excitation = read_excitation(config.render.excitation) if config.render.excitation else None
        return cls(scene=scene, config=config, excitation=excitation)

    def __init__(self, scene, config=None, excitation=None):
        self.scene = scene
        self._config = config or RunConfig()
        self.excitation = excitation

    @property
    def engine_config(self):
        return self._config.engine

    @property
    def render_config(self):
        return self._config.render

    def enumerate_sources(self):
        scene = self.scene
        return enumerate_virtual_sources(
            scene.boundary,
            scene.source,
            scene.receiver,
            max_order=scene.max_order,
            tol=scene.tolerances.geom_tol,
            threads=self.engine_config.threads,
            lattice_M=scene.lattice_M,
        )

    def find_curved_atoms(self):
        scene = self.scene
        if not scene.boundary.patches or min(scene.curved_max_order, scene.max_order) == 0:
            return []
        engine = self.engine_config
        return find_curved_paths(
            scene.boundary,
            scene.source,
            scene.receiver,
            max_order=min(scene.curved_max_order, scene.max_order),
            M=scene.lattice_M,
            angular_tol=scene.tolerances.angular_tol,
            convention=engine.weight_convention,
            tol=scene.tolerances.geom_tol,
            merge_isolated=engine.merge_isolated,
            max_pair_candidates=engine.max_pair_candidates,
            threads=engine.threads,
            patch_M=scene.patch_lattice,
        )

    def build_measure(self):
        scene = self.scene
        measure = assemble_measure(
            self.enumerate_sources(),
            self.find_curved_atoms(),
            scene.boundary,
            scene.source,
            scene.receiver,
            source_directivity=scene.source_directivity,
            receiver_directivity=scene.receiver_directivity,
            hooks=self._config.absorption_hooks,
            tol=scene.tolerances.geom_tol,
        )
        logger.info("Source measure has %s atoms per stratum", measure.counts_by_stratum())
        return measure

    def render(self, measure):
        scene = self.scene
        return render_rir(
            measure,
            self.excitation,
            c=scene.c,
            out_rate=scene.output.fs,
            duration=scene.output.duration,
            interpolation=self.render_config.interpolation,
            collocation_eps=scene.tolerances.collocation_eps,
            sinc_half_width=self.render_config.sinc_half_width,
        )

    def run(self, render=True):
        logger.info("Simulating %s", self.scene)
        measure = self.build_measure()
        taps = tap_list(measure, self.scene.c, self.scene.tolerances.collocation_eps)
        signal = self.render(measure) if render else None
        return SimulationResult(measure=measure, taps=taps, signal=signal)

    def classify(self, reflections):
        """
        Report on the path from the scene's source through ``reflections``, a sequence of
        ``(element_id, point)`` pairs, to its receiver.
        """
        scene = self.scene
        known = {element.id for element in scene.boundary.elements}
        for element_id, _ in reflections:
            if element_id not in known:
                raise ValidationError(f"the scene has no boundary element with id {element_id}", field="reflection")
        path = ReflectionPath(
            source=scene.source,
            reflections=[Reflection(point=point, element_id=element_id) for element_id, point in reflections],
            sink=scene.receiver,
        )
        for reflection in path.reflections:
            if reflection.point.shape != scene.source.shape:
                raise ValidationError(
                    f"point {reflection.point.tolist()} does not have {len(scene.source)} coordinates",
                    field="reflection",
                )
            offset = scene.boundary.element(reflection.element_id).distance(reflection.point)
            if offset > scene.tolerances.geom_tol:
                raise ValidationError(
                    f"point {reflection.point.tolist()} lies {offset:.6g} m off boundary element "
                    f"{reflection.element_id}",
                    field="reflection",
                )
        classification = classify_path(path, scene.boundary, tol=scene.tolerances.geom_tol, lattice_M=scene.lattice_M)
        vectors = [scene.boundary.element(r.element_id).vector_at(r.point) for r in path.reflections]
        return PathReport(
            path=path,
            valid=classification.valid,
            validity_residual=classification.validity_residual,
            equal_angle_residual=check_equal_angles(path, scene.boundary),
            visible=classification.visible,
            blocking_element=classification.blocking_element,
            grazing=classification.grazing,
            image=compose_projections(scene.source, [(r.point, v) for r, v in zip(path.reflections, vectors)]),
            length=path_length(path),
        )
