"""Benchmark assembly: context windows, instruction-template generation,
per-frame corrected instructions, speed filtering, and manifest output.

Templates are synthesized from parametric speed/heading profiles and
validated against the rule labeler: a template is only accepted when both
its full path and its first per-frame instruction label into the declared
category. Template paths are sampled at 0.5 s spacing, the waypoint
spacing the labeler thresholds are calibrated for; per-frame instruction
anchors at the rollout rate are interpolated from those paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .codec import tl_schedule
from .errors import (
    CoverageError,
    IntegrityError,
    ParameterError,
    SchemaError,
)
from .geometry import (
    EGO_FRAME,
    GLOBAL_FRAME,
    Pose2D,
    Trajectory,
    initial_speed_kmh,
    reanchor,
    resample_by_time,
    to_local_frame,
    wrap_angle,
)
from .jsonl import canonical_dumps, iter_jsonl, trajectory_from_dict, trajectory_to_dict
from .labeler import (
    CATEGORY_ORDER,
    BenchCategory,
    RuleConfig,
    label_trajectory,
    to_benchmark_category,
)


@dataclass(frozen=True)
class BuildConfig:
    """Knobs of the benchmark builder (CLI flags map onto these)."""

    window: int = 44
    stride: int = 1
    context_len: int = 10
    speed_threshold_kmh: float = 10.0
    horizon_s: float = 4.4
    anchor_fps: float = 10.0
    schedule_dataset: str = "nuscenes"
    schedule_points: int = 6
    template_fps: float = 2.0
    template_duration_s: float = 7.5

    def schedule(self) -> list[float]:
        return tl_schedule(self.schedule_dataset, self.schedule_points)


@dataclass(frozen=True)
class ContextSegment:
    """A short ego-frame history slice paired against templates."""

    sample_id: str
    scene_id: str
    start_frame: int
    trajectory: Trajectory

    def __post_init__(self) -> None:
        if len(self.trajectory) < 2:
            raise ParameterError("a context needs >= 2 frames so its speed is defined")

    @property
    def context_len(self) -> int:
        return len(self.trajectory)


@dataclass(frozen=True)
class TrajectoryTemplate:
    """A future-motion instruction: category, path, and per-frame corrections."""

    template_id: str
    category: BenchCategory
    nominal_speed_kmh: float
    path: Trajectory
    per_frame: tuple[Trajectory, ...]

    @property
    def instruction(self) -> Trajectory:
        """The frame-0 instruction (the intended trajectory used for scoring)."""
        return self.per_frame[0]


@dataclass(frozen=True)
class BenchmarkPair:
    """One evaluation unit: a context joined to an instruction template."""

    sample_id: str
    context: ContextSegment
    template: TrajectoryTemplate
    instructed_category: BenchCategory


@dataclass(frozen=True)
class BenchmarkSet:
    pairs: tuple[BenchmarkPair, ...]
    counts: dict[BenchCategory, int]


def window_starts(length: int, window: int, stride: int) -> range:
    """Start indices of sliding windows; empty when the sequence is too short."""
    if window < 2:
        raise ParameterError("window must be >= 2 frames")
    if stride < 1:
        raise ParameterError("stride must be >= 1 frame")
    if length < window:
        return range(0)
    return range(0, length - window + 1, stride)


def slice_windows(scene: Trajectory, window: int, stride: int) -> list[Trajectory]:
    """Cut a global scene into overlapping windows, each re-anchored to its
    first pose so downstream features see ego-local coordinates."""
    if scene.frame != GLOBAL_FRAME:
        raise ParameterError("slice_windows expects a global-frame scene")
    out = []
    for start in window_starts(len(scene), window, stride):
        segment = Trajectory(scene.frame, scene.fps, scene.points[start : start + window])
        out.append(to_local_frame(segment, segment.points[0]))
    return out


def build_contexts(
    scenes: Sequence[tuple[str, Trajectory]], cfg: BuildConfig
) -> list[ContextSegment]:
    """Slice scenes into windows and keep each window's head as a context."""
    if cfg.context_len < 2:
        raise ParameterError("context length must be >= 2 frames")
    if cfg.context_len > cfg.window:
        raise ParameterError("context length cannot exceed the window length")
    contexts = []
    for scene_id, scene in scenes:
        if scene.frame != GLOBAL_FRAME:
            raise ParameterError(f"scene {scene_id!r} must be in the global frame")
        for start in window_starts(len(scene), cfg.window, cfg.stride):
            segment = Trajectory(
                scene.frame, scene.fps, scene.points[start : start + cfg.context_len]
            )
            local = to_local_frame(segment, segment.points[0])
            contexts.append(
                ContextSegment(
                    sample_id=f"{scene_id}:{start:05d}",
                    scene_id=scene_id,
                    start_frame=start,
                    trajectory=local,
                )
            )
    return contexts


def speed_filter(
    context: ContextSegment,
    template: TrajectoryTemplate,
    threshold_kmh: float = 10.0,
) -> bool:
    """True when the context's starting speed matches the template's.

    A pair is dropped exactly when the speeds differ by more than the
    threshold, so a difference equal to the threshold is kept.
    """
    gap = abs(initial_speed_kmh(context.trajectory) - template.nominal_speed_kmh)
    return gap <= threshold_kmh


def per_frame_instructions(
    template_path: Trajectory,
    horizon_s: float,
    schedule: Sequence[float],
    anchor_fps: float = 10.0,
) -> tuple[Trajectory, ...]:
    """Instruction trajectories corrected for the ideal pose at every frame.

    For frame k at time t_k, the template is sampled at t_k + t_l for each
    offset in the schedule and re-expressed in the local frame of the
    template pose at t_k; point timestamps carry the offsets themselves.
    """
    offsets = [float(s) for s in schedule]
    if not offsets or any(o <= 0 for o in offsets) or any(
        b <= a for a, b in zip(offsets, offsets[1:])
    ):
        raise ParameterError("schedule offsets must be positive and strictly increasing")
    if horizon_s <= 0 or anchor_fps <= 0:
        raise ParameterError("horizon and anchor fps must be positive")
    frames = int(round(horizon_s * anchor_fps))
    t0 = template_path.points[0].t
    t_end = template_path.points[-1].t
    last_needed = t0 + (frames - 1) / anchor_fps + offsets[-1]
    if last_needed > t_end + 1e-9:
        raise CoverageError(
            f"template covers {t_end - t0:.3f}s but frame {frames - 1} "
            f"needs {last_needed - t0:.3f}s"
        )
    fps = (len(offsets) - 1) / (offsets[-1] - offsets[0]) if len(offsets) > 1 else anchor_fps

    out = []
    for k in range(frames):
        t_k = t0 + k / anchor_fps
        anchor = resample_by_time(template_path, [t_k]).points[0]
        sampled = resample_by_time(template_path, [min(t_k + o, t_end) for o in offsets])
        rebased = reanchor(sampled, anchor)
        points = tuple(
            Pose2D(p.x, p.y, p.heading, offset)
            for p, offset in zip(rebased.points, offsets)
        )
        out.append(Trajectory(EGO_FRAME, fps, points))
    return tuple(out)


# --- template path synthesis -------------------------------------------------

_FINE_DT = 5e-4  # integration step for profiles without closed forms


def _sample_times(cfg: BuildConfig) -> np.ndarray:
    count = int(round(cfg.template_duration_s * cfg.template_fps)) + 1
    return np.arange(count) / cfg.template_fps


def _straight_path(distance_fn, cfg: BuildConfig) -> Trajectory:
    times = _sample_times(cfg)
    points = tuple(
        Pose2D(0.0, float(distance_fn(t)), 0.0, float(t)) for t in times
    )
    return Trajectory(EGO_FRAME, cfg.template_fps, points)


def _arc_path(radius_m: float, speed_ms: float, sign: float, cfg: BuildConfig) -> Trajectory:
    if radius_m <= 0 or speed_ms <= 0:
        raise ParameterError("curving templates need positive radius and speed")
    times = _sample_times(cfg)
    points = []
    for t in times:
        theta = speed_ms * t / radius_m
        x = sign * radius_m * (1.0 - math.cos(theta))
        y = radius_m * math.sin(theta)
        points.append(Pose2D(x, y, wrap_angle(sign * theta), float(t)))
    return Trajectory(EGO_FRAME, cfg.template_fps, tuple(points))


def _shift_heading(t: float, peak1_rad: float, peak2_rad: float) -> float:
    """Two same-direction heading bumps; each window of the labeler sees one."""
    for start, end, peak in ((0.3, 2.4, peak1_rad), (3.1, 6.3, peak2_rad)):
        if start <= t <= end:
            return peak * math.sin(math.pi * (t - start) / (end - start)) ** 2
    return 0.0


def _shift_path(
    speed_ms: float, peak1_deg: float, peak2_deg: float, sign: float, cfg: BuildConfig
) -> Trajectory:
    if speed_ms <= 0 or peak1_deg <= 0 or peak2_deg <= 0:
        raise ParameterError("shifting templates need positive speed and peak angles")
    peak1 = math.radians(peak1_deg)
    peak2 = math.radians(peak2_deg)
    steps_per_sample = int(round(1.0 / (cfg.template_fps * _FINE_DT)))
    times = _sample_times(cfg)
    total_steps = (len(times) - 1) * steps_per_sample

    headings = np.array(
        [sign * _shift_heading(i * _FINE_DT, peak1, peak2) for i in range(total_steps + 1)]
    )
    dx = speed_ms * np.sin(headings)
    dy = speed_ms * np.cos(headings)
    # Trapezoidal cumulative integration on the fine grid.
    x = np.concatenate([[0.0], np.cumsum((dx[1:] + dx[:-1]) * 0.5 * _FINE_DT)])
    y = np.concatenate([[0.0], np.cumsum((dy[1:] + dy[:-1]) * 0.5 * _FINE_DT)])

    points = []
    for k, t in enumerate(times):
        idx = k * steps_per_sample
        points.append(
            Pose2D(float(x[idx]), float(y[idx]), wrap_angle(float(headings[idx])), float(t))
        )
    return Trajectory(EGO_FRAME, cfg.template_fps, tuple(points))


def _ramp_distance(rest_until_s: float, accel_ms2: float, cruise_speed_ms: float):
    """Distance profile: rest, constant acceleration, then cruise."""
    if rest_until_s < 0 or accel_ms2 <= 0 or cruise_speed_ms <= 0:
        raise ParameterError("starting templates need a rest phase then a positive ramp")
    t_cruise = rest_until_s + cruise_speed_ms / accel_ms2

    def distance(t: float) -> float:
        if t <= rest_until_s:
            return 0.0
        if t <= t_cruise:
            return 0.5 * accel_ms2 * (t - rest_until_s) ** 2
        ramp = 0.5 * accel_ms2 * (t_cruise - rest_until_s) ** 2
        return ramp + cruise_speed_ms * (t - t_cruise)

    return distance


def _stop_distance(initial_speed_ms: float, cruise_until_s: float, stop_at_s: float):
    """Distance profile: cruise, linear braking to zero, then rest."""
    if initial_speed_ms <= 0 or not 0 <= cruise_until_s < stop_at_s:
        raise ParameterError("stopping templates need a cruise phase then a braking phase")
    decel = initial_speed_ms / (stop_at_s - cruise_until_s)

    def distance(t: float) -> float:
        if t <= cruise_until_s:
            return initial_speed_ms * t
        cruise = initial_speed_ms * cruise_until_s
        if t <= stop_at_s:
            dt = t - cruise_until_s
            return cruise + initial_speed_ms * dt - 0.5 * decel * dt * dt
        return cruise + 0.5 * initial_speed_ms * (stop_at_s - cruise_until_s)

    return distance


def _uniform_accel_distance(initial_speed_ms: float, accel_ms2: float, duration_s: float):
    """Constant-acceleration distance profile; speed must stay non-negative."""
    final_speed = initial_speed_ms + accel_ms2 * duration_s
    if initial_speed_ms < 0 or final_speed < 0:
        raise ParameterError("speed profile would become negative within the template")

    def distance(t: float) -> float:
        return initial_speed_ms * t + 0.5 * accel_ms2 * t * t

    return distance


def _synthesize_path(category: BenchCategory, params: dict, cfg: BuildConfig) -> Trajectory:
    try:
        if category is BenchCategory.CURVING_TO_RIGHT:
            return _arc_path(params["radius_m"], params["speed_ms"], 1.0, cfg)
        if category is BenchCategory.CURVING_TO_LEFT:
            return _arc_path(params["radius_m"], params["speed_ms"], -1.0, cfg)
        if category is BenchCategory.SHIFTING_TOWARDS_RIGHT:
            return _shift_path(params["speed_ms"], params["peak1_deg"], params["peak2_deg"], 1.0, cfg)
        if category is BenchCategory.SHIFTING_TOWARDS_LEFT:
            return _shift_path(params["speed_ms"], params["peak1_deg"], params["peak2_deg"], -1.0, cfg)
        if category is BenchCategory.STARTING:
            return _straight_path(
                _ramp_distance(params["rest_until_s"], params["accel_ms2"], params["cruise_speed_ms"]),
                cfg,
            )
        if category is BenchCategory.STOPPING:
            return _straight_path(
                _stop_distance(params["initial_speed_ms"], params["cruise_until_s"], params["stop_at_s"]),
                cfg,
            )
        if category is BenchCategory.ACCELERATING:
            return _straight_path(
                _uniform_accel_distance(params["initial_speed_ms"], params["accel_ms2"], cfg.template_duration_s),
                cfg,
            )
        if category is BenchCategory.DECELERATING:
            return _straight_path(
                _uniform_accel_distance(params["initial_speed_ms"], -params["decel_ms2"], cfg.template_duration_s),
                cfg,
            )
        if category is BenchCategory.STRAIGHT_CONSTANT:
            speed = params["speed_ms"]
            if speed <= 0:
                raise ParameterError("straight templates need a positive speed")
            return _straight_path(lambda t: speed * t, cfg)
    except KeyError as exc:
        raise ParameterError(f"missing template parameter {exc} for {category.value!r}") from exc
    raise ParameterError(f"no template generator for category {category!r}")


def generate_template(
    category: BenchCategory,
    params: dict,
    variant: str,
    build_cfg: Optional[BuildConfig] = None,
    rule_cfg: Optional[RuleConfig] = None,
) -> TrajectoryTemplate:
    """Synthesize one template and verify it against the labeler.

    Raises ParameterError when the requested parameters produce a path (or
    a first per-frame instruction) that the rule cascade does not place in
    the declared category: inconsistent templates would poison every
    downstream score.
    """
    cfg = build_cfg or BuildConfig()
    path = _synthesize_path(category, params, cfg)
    per_frame = per_frame_instructions(path, cfg.horizon_s, cfg.schedule(), cfg.anchor_fps)

    path_category = to_benchmark_category(label_trajectory(path, rule_cfg))
    if path_category is not category:
        raise ParameterError(
            f"template path labels as {path_category} instead of {category.value!r}; "
            f"adjust params {params}"
        )
    instruction_category = to_benchmark_category(label_trajectory(per_frame[0], rule_cfg))
    if instruction_category is not category:
        raise ParameterError(
            f"frame-0 instruction labels as {instruction_category} instead of "
            f"{category.value!r}; adjust params {params}"
        )
    return TrajectoryTemplate(
        template_id=f"{category.value.replace(' ', '_')}/{variant}",
        category=category,
        nominal_speed_kmh=initial_speed_kmh(path),
        path=path,
        per_frame=per_frame,
    )


def load_template_library(
    path, rule_cfg: Optional[RuleConfig] = None
) -> tuple[BuildConfig, tuple[TrajectoryTemplate, ...]]:
    """Read a template parameter file (TOML) and synthesize its templates."""
    data = tomllib.loads(Path(path).read_text(encoding="utf-8"))
    return _library_from_data(data, rule_cfg)


def _library_from_data(data: dict, rule_cfg: Optional[RuleConfig]):
    build = data.get("build", {})
    if not isinstance(build, dict):
        raise ParameterError("template file [build] must be a table")
    cfg = BuildConfig(
        horizon_s=float(build.get("horizon_s", BuildConfig.horizon_s)),
        anchor_fps=float(build.get("anchor_fps", BuildConfig.anchor_fps)),
        schedule_dataset=str(build.get("schedule", BuildConfig.schedule_dataset)),
        schedule_points=int(build.get("schedule_points", BuildConfig.schedule_points)),
        template_fps=float(build.get("fps", BuildConfig.template_fps)),
        template_duration_s=float(build.get("duration_s", BuildConfig.template_duration_s)),
    )
    entries = data.get("template")
    if not isinstance(entries, list) or not entries:
        raise ParameterError("template file needs at least one [[template]] entry")
    by_value = {category.value: category for category in BenchCategory}
    templates = []
    for entry in entries:
        category = by_value.get(entry.get("category"))
        if category is None:
            raise ParameterError(f"unknown template category {entry.get('category')!r}")
        variant = entry.get("variant")
        if not isinstance(variant, str) or not variant:
            raise ParameterError("each template needs a non-empty 'variant' name")
        params = entry.get("params")
        if not isinstance(params, dict):
            raise ParameterError(f"template {variant!r} needs a 'params' table")
        templates.append(generate_template(category, params, variant, cfg, rule_cfg))
    ids = [t.template_id for t in templates]
    if len(set(ids)) != len(ids):
        raise IntegrityError("duplicate template ids in the library")
    return cfg, tuple(templates)


@lru_cache(maxsize=1)
def _shipped_library_default() -> tuple[BuildConfig, tuple[TrajectoryTemplate, ...]]:
    text = resources.files("actbench").joinpath("data/templates.toml").read_text(encoding="utf-8")
    return _library_from_data(tomllib.loads(text), None)


def default_template_library(
    rule_cfg: Optional[RuleConfig] = None,
) -> tuple[BuildConfig, tuple[TrajectoryTemplate, ...]]:
    """The 36 templates shipped with the package (nine categories, four each).

    Passing a custom rule config re-validates every template against it.
    """
    if rule_cfg is None:
        return _shipped_library_default()
    text = resources.files("actbench").joinpath("data/templates.toml").read_text(encoding="utf-8")
    return _library_from_data(tomllib.loads(text), rule_cfg)


def assemble_benchmark(
    contexts: Sequence[ContextSegment],
    templates: Sequence[TrajectoryTemplate],
    exclusions: Iterable[str] = (),
    speed_threshold_kmh: float = 10.0,
) -> BenchmarkSet:
    """Pair every context with every speed-compatible template.

    Pairs named on the exclusion list are dropped; output order is fixed by
    (scene id, start frame, template id) regardless of input order.
    """
    context_ids = [c.sample_id for c in contexts]
    if len(set(context_ids)) != len(context_ids):
        raise IntegrityError("duplicate context sample ids")
    template_ids = [t.template_id for t in templates]
    if len(set(template_ids)) != len(template_ids):
        raise IntegrityError("duplicate template ids")
    excluded = set(exclusions)

    ordered_contexts = sorted(contexts, key=lambda c: (c.scene_id, c.start_frame, c.sample_id))
    ordered_templates = sorted(templates, key=lambda t: t.template_id)
    pairs = []
    counts = {category: 0 for category in CATEGORY_ORDER}
    for context in ordered_contexts:
        for template in ordered_templates:
            if not speed_filter(context, template, speed_threshold_kmh):
                continue
            sample_id = f"{context.sample_id}__{template.template_id}"
            if sample_id in excluded:
                continue
            pairs.append(
                BenchmarkPair(
                    sample_id=sample_id,
                    context=context,
                    template=template,
                    instructed_category=template.category,
                )
            )
            counts[template.category] += 1
    pair_ids = [p.sample_id for p in pairs]
    if len(set(pair_ids)) != len(pair_ids):
        raise IntegrityError("duplicate benchmark pair ids")
    return BenchmarkSet(tuple(pairs), counts)


def read_exclusions(path) -> list[str]:
    """Newline-delimited pair ids to drop; blank lines and # comments allowed."""
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        stripped = line.strip()
        if stripped and not stripped.startswith("#"):
            out.append(stripped)
    return out


# --- manifest serialization ---------------------------------------------------

def _pair_to_dict(pair: BenchmarkPair) -> dict:
    return {
        "sample_id": pair.sample_id,
        "instructed_category": pair.instructed_category.value,
        "context": {
            "sample_id": pair.context.sample_id,
            "scene_id": pair.context.scene_id,
            "start_frame": pair.context.start_frame,
            "trajectory": trajectory_to_dict(pair.context.trajectory),
        },
        "template": {
            "template_id": pair.template.template_id,
            "category": pair.template.category.value,
            "nominal_speed_kmh": pair.template.nominal_speed_kmh,
            "path": trajectory_to_dict(pair.template.path),
            "per_frame": [trajectory_to_dict(t) for t in pair.template.per_frame],
        },
    }


def write_manifest(path, bench: BenchmarkSet) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        for pair in bench.pairs:
            handle.write(canonical_dumps(_pair_to_dict(pair)) + "\n")


def _pair_from_dict(obj: dict, where: str) -> BenchmarkPair:
    try:
        category = BenchCategory(obj["instructed_category"])
        ctx = obj["context"]
        tpl = obj["template"]
        context = ContextSegment(
            sample_id=str(ctx["sample_id"]),
            scene_id=str(ctx["scene_id"]),
            start_frame=int(ctx["start_frame"]),
            trajectory=trajectory_from_dict(ctx["trajectory"], where=f"{where} context"),
        )
        template = TrajectoryTemplate(
            template_id=str(tpl["template_id"]),
            category=BenchCategory(tpl["category"]),
            nominal_speed_kmh=float(tpl["nominal_speed_kmh"]),
            path=trajectory_from_dict(tpl["path"], where=f"{where} template path"),
            per_frame=tuple(
                trajectory_from_dict(t, where=f"{where} per_frame[{i}]")
                for i, t in enumerate(tpl["per_frame"])
            ),
        )
        if not template.per_frame:
            raise SchemaError(f"{where}: template has no per-frame instructions")
        return BenchmarkPair(
            sample_id=str(obj["sample_id"]),
            context=context,
            template=template,
            instructed_category=category,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: malformed benchmark pair: {exc}") from exc


def read_manifest(path) -> list[BenchmarkPair]:
    pairs = []
    seen = set()
    for lineno, obj in iter_jsonl(path):
        where = f"{path}:{lineno}"
        pair = _pair_from_dict(obj, where)
        if pair.sample_id in seen:
            raise IntegrityError(f"{where}: duplicate pair id {pair.sample_id!r}")
        seen.add(pair.sample_id)
        pairs.append(pair)
    return pairs


def counts_csv_lines(counts: dict[BenchCategory, int]) -> list[str]:
    lines = ["category,pairs"]
    total = 0
    for category in CATEGORY_ORDER:
        value = counts.get(category, 0)
        total += value
        lines.append(f"{category.value},{value}")
    lines.append(f"total,{total}")
    return lines
