"""End-to-end orchestration: one instruction and one scene in, grasps out.

`run_pipeline` chains resolve -> recognize -> register -> plan and gathers a
provenance report (what was resolved, which template won, every transform,
score, and stage timing). `export_artifacts` writes the intermediate and
final geometry as PLY snapshots any external viewer can open.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cloud_io import load_cloud, save_ply
from .errors import NoFeasibleGraspError, SceneSpecError, TogError
from .geometry import PointCloud, apply_transform
from .ontology import (
    ChatClient,
    Instruction,
    OntologyGraph,
    ResolvedPart,
    default_graph,
    resolve,
)
from .planning import GraspCandidate, plan
from .recognition import RecognitionResult, recognize
from .registration import RegistrationResult, best_registration, register
from .templates import GripperConfig, Template, default_gripper, load_db

REPORT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class PipelineConfig:
    """Everything `run_pipeline` needs besides the instruction and scene.

    `ontology_path` of None selects the built-in graph. `template_cap`
    bounds how many templates of the resolved class are matched and
    registered (insertion order of the database index).
    """

    db_path: str
    ontology_path: str | None = None
    leaf: float = 0.005
    gripper: GripperConfig = field(default_factory=default_gripper)
    template_cap: int = 3
    rng_seed: int = 0

    def __post_init__(self):
        if self.leaf <= 0:
            raise SceneSpecError("leaf must be positive")
        if self.template_cap < 1:
            raise SceneSpecError("template_cap must be at least 1")
        if self.rng_seed < 0:
            raise SceneSpecError("rng_seed must be non-negative")


@dataclass
class PipelineResult:
    resolved: ResolvedPart
    recognition: RecognitionResult
    registrations: dict[str, RegistrationResult]
    winning_template: str | None
    candidates: list[GraspCandidate]
    scene: PointCloud
    templates: dict[str, Template]
    report: dict


def _stage(name: str):
    """Tag any engine error escaping the enclosed stage with its name."""

    class _Tagger:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if isinstance(exc, TogError) and exc.stage is None:
                exc.stage = name
            return False

    return _Tagger()


def _grasp_payload(candidate: GraspCandidate) -> dict:
    return {
        "pose": candidate.pose.matrix.tolist(),
        "width": candidate.width,
        "template_id": candidate.template_id,
        "part_path": candidate.part_path,
        "source_index": candidate.source_index,
        "adjustment": candidate.adjustment.tolist(),
        "stick_ok_initially": candidate.stick_ok_initially,
    }


def run_pipeline(
    config: PipelineConfig,
    instruction_text: str,
    scene_cloud_path,
    client: ChatClient,
    novel_extension: bool = False,
    target_class_hint: str | None = None,
    include_timings: bool = True,
    strict: bool = True,
) -> PipelineResult:
    """Resolve the instruction, find the part, align templates, plan grasps.

    Any stage failure propagates as the stage's own error with its `stage`
    attribute set, so callers can report where the chain broke. With
    `strict=False` the chain tolerates an empty outcome past recognition
    (no registration, or no feasible grasp) and reports what it has, which
    suits snapshot export.
    """
    t_start = time.perf_counter()
    timings: dict[str, float] = {}

    with _stage("setup"):
        graph = (
            OntologyGraph.load(config.ontology_path)
            if config.ontology_path
            else default_graph()
        )
        db = load_db(config.db_path)
        scene = load_cloud(scene_cloud_path)

    with _stage("resolve"):
        t0 = time.perf_counter()
        resolved = resolve(
            graph,
            Instruction(instruction_text, target_class_hint=target_class_hint),
            client,
            novel_extension=novel_extension,
        )
        timings["resolve_seconds"] = time.perf_counter() - t0

    with _stage("recognize"):
        selected = {
            tid: t
            for tid, t in db.items()
            if t.object_class == resolved.object_class
        }
        if not selected:
            raise SceneSpecError(
                f"database has no templates of class '{resolved.object_class}'"
            )
        selected = dict(list(selected.items())[: config.template_cap])
        t0 = time.perf_counter()
        recognition = recognize(scene, list(selected.values()), resolved.part_path)
        timings["recognize_seconds"] = time.perf_counter() - t0

    with _stage("register"):
        t0 = time.perf_counter()
        registrations: dict[str, RegistrationResult] = {}
        errors: dict[str, str] = {}
        for i, (tid, template) in enumerate(selected.items()):
            try:
                registrations[tid] = register(
                    scene,
                    recognition,
                    template,
                    leaf=config.leaf,
                    seed=config.rng_seed * 1000 + i,
                )
            except TogError as exc:
                errors[tid] = f"{exc.code}: {exc}"
        if not registrations and strict:
            raise SceneSpecError(
                f"every template registration failed: {errors}"
            )
        winning = best_registration(registrations) if registrations else None
        timings["register_seconds"] = time.perf_counter() - t0

    with _stage("plan"):
        t0 = time.perf_counter()
        candidates: list[GraspCandidate] = []
        if registrations:
            try:
                candidates = plan(
                    scene, recognition, registrations, selected,
                    gripper=config.gripper,
                )
            except NoFeasibleGraspError:
                if strict:
                    raise
        timings["plan_seconds"] = time.perf_counter() - t0

    timings["total_seconds"] = time.perf_counter() - t_start
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "instruction": instruction_text,
        "resolved": {
            "object_class": resolved.object_class,
            "part_path": resolved.part_path,
            "mapped_from": resolved.mapped_from,
        },
        "recognition": {
            "seed_index": int(recognition.seed_index),
            "cluster_points": int(len(recognition.members)),
            "mean_score": float(recognition.mean_score),
            "winning_template_for_cluster": recognition.winning_template_for_cluster,
            "per_template_scores": {
                tid: float(s) for tid, s in recognition.per_template_scores.items()
            },
        },
        "registrations": {
            tid: {
                "fitness": float(reg.fitness),
                "rmse": float(reg.rmse),
                "correspondence_count": int(reg.correspondence_count),
                "t_total": reg.t_total.matrix.tolist(),
                "t_loc": reg.t_loc.matrix.tolist(),
                "t_opt": reg.t_opt.matrix.tolist(),
                "t_icp": reg.t_icp.matrix.tolist(),
            }
            for tid, reg in registrations.items()
        },
        "registration_errors": errors,
        "winning_template": winning,
        "grasps": [_grasp_payload(c) for c in candidates],
    }
    if include_timings:
        report["timings"] = timings
    return PipelineResult(
        resolved=resolved,
        recognition=recognition,
        registrations=registrations,
        winning_template=winning,
        candidates=candidates,
        scene=scene,
        templates=selected,
        report=report,
    )


# ---------------------------------------------------------------------------
# PLY snapshot export


def _triad_cloud(candidates, axis_length: float, points_per_axis: int) -> PointCloud:
    """Sample each grasp frame as labeled points along its three axes."""
    pts, labels = [], []
    steps = np.linspace(0.0, axis_length, points_per_axis + 1)[1:]
    for rank, candidate in enumerate(candidates):
        origin = candidate.pose.translation
        rotation = candidate.pose.rotation
        pts.append(origin)
        labels.append(f"grasp-{rank}-origin")
        for axis, name in enumerate("xyz"):
            direction = rotation[:, axis]
            for s in steps:
                pts.append(origin + s * direction)
                labels.append(f"grasp-{rank}-{name}")
    return PointCloud(np.asarray(pts), labels)


def export_artifacts(
    result: PipelineResult,
    out_dir,
    axis_length: float = 0.02,
    points_per_axis: int = 8,
) -> list[Path]:
    """Write viewer-ready PLY snapshots; returns the files written.

    Always: the scene and the scene with the recognized cluster labeled.
    When a registration exists: the scene overlaid with the winning template
    mapped into the scene frame. When grasps exist: every grasp frame as an
    oriented triad of labeled axis points.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    scene_path = out_dir / "scene.ply"
    save_ply(result.scene, scene_path)
    written.append(scene_path)

    member_set = set(int(i) for i in result.recognition.members)
    cluster_labels = [
        "cluster" if i in member_set else "rest" for i in range(len(result.scene))
    ]
    cluster_path = out_dir / "cluster.ply"
    save_ply(PointCloud(result.scene.points, cluster_labels), cluster_path)
    written.append(cluster_path)

    if result.winning_template in result.registrations:
        reg = result.registrations[result.winning_template]
        template_cloud = result.templates[result.winning_template].full_cloud
        aligned = apply_transform(template_cloud, reg.t_total.inverse())
        overlay = PointCloud(
            np.vstack([result.scene.points, aligned.points]),
            ["scene"] * len(result.scene) + ["template"] * len(aligned),
        )
        overlay_path = out_dir / "overlay.ply"
        save_ply(overlay, overlay_path)
        written.append(overlay_path)

    if result.candidates:
        grasp_path = out_dir / "grasps.ply"
        save_ply(
            _triad_cloud(result.candidates, axis_length, points_per_axis),
            grasp_path,
        )
        written.append(grasp_path)
    return written
