"""End-to-end evaluation: rollout ingestion, the kinematic oracle producer,
metric computation over a benchmark manifest, and deterministic report files.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .bench import BenchmarkPair
from .errors import CoverageError, InvalidInputError, SchemaError, TimeRangeError
from .geometry import EGO_FRAME, Pose2D, Trajectory, resample_by_time
from .jsonl import canonical_dumps, iter_jsonl, trajectory_from_dict, trajectory_to_dict
from .labeler import (
    CATEGORY_ORDER,
    BenchCategory,
    RuleConfig,
    label_trajectory,
    to_benchmark_category,
)
from .metrics import (
    CategoryReport,
    ConfusionMatrix,
    LabelPair,
    ade,
    aggregate_by_category,
    confusion_matrix,
    fde,
    iec,
)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class RolloutRecord:
    """One producer's executed trajectory for a benchmark sample.

    ``conditioning`` is free-form producer metadata (e.g. "per-frame" vs
    "per-round" instruction injection) surfaced in the report.
    """

    sample_id: str
    producer: str
    estimated_trajectory: Trajectory
    estimated_category: Optional[BenchCategory] = None
    conditioning: Optional[str] = None


@dataclass(frozen=True)
class OracleConfig:
    """Controls the self-validation producer."""

    noise_sigma: float = 0.0
    rng_seed: int = 0
    drop_rate: float = 0.0

    def __post_init__(self) -> None:
        if self.noise_sigma < 0.0:
            raise InvalidInputError("noise sigma must be >= 0")
        if not 0.0 <= self.drop_rate <= 1.0:
            raise InvalidInputError("drop rate must lie in [0, 1]")


@dataclass(frozen=True)
class IngestReport:
    """Rollouts that parsed, plus everything that did not."""

    records: tuple[RolloutRecord, ...]
    diagnostics: tuple[str, ...]
    unresolved: tuple[str, ...]


def rollout_to_dict(record: RolloutRecord) -> dict:
    obj = {
        "sample_id": record.sample_id,
        "producer": record.producer,
        "estimated_trajectory": trajectory_to_dict(record.estimated_trajectory),
    }
    if record.estimated_category is not None:
        obj["estimated_category"] = record.estimated_category.value
    if record.conditioning is not None:
        obj["conditioning"] = record.conditioning
    return obj


def rollout_from_dict(obj, *, where: str = "rollout") -> RolloutRecord:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object")
    sample_id = obj.get("sample_id")
    if not isinstance(sample_id, str) or not sample_id:
        raise SchemaError(f"{where}: missing or non-string 'sample_id'")
    producer = obj.get("producer")
    if not isinstance(producer, str) or not producer:
        raise SchemaError(f"{where}: missing or non-string 'producer'")
    category = None
    if "estimated_category" in obj:
        raw = obj["estimated_category"]
        try:
            category = BenchCategory(raw)
        except ValueError as exc:
            raise SchemaError(f"{where}: unknown estimated_category {raw!r}") from exc
    conditioning = obj.get("conditioning")
    if conditioning is not None and not isinstance(conditioning, str):
        raise SchemaError(f"{where}: conditioning must be a string when present")
    trajectory = trajectory_from_dict(
        obj.get("estimated_trajectory"), where=f"{where} estimated_trajectory"
    )
    if trajectory.frame != EGO_FRAME:
        raise SchemaError(f"{where}: estimated_trajectory must be in the ego frame")
    return RolloutRecord(sample_id, producer, trajectory, category, conditioning)


def ingest_rollouts(path, manifest: Optional[Sequence[BenchmarkPair]] = None) -> IngestReport:
    """Read a rollout JSONL file with per-line diagnostics.

    Invalid lines are reported, not silently dropped; a file whose every
    line is invalid is an error. When a manifest is supplied, records whose
    sample id does not resolve are listed as unresolved (but still returned).
    """
    records: list[RolloutRecord] = []
    diagnostics: list[str] = []
    seen: set[str] = set()
    total_lines = 0
    for lineno, obj in iter_jsonl(path):
        total_lines += 1
        where = f"{path}:{lineno}"
        try:
            record = rollout_from_dict(obj, where=where)
        except SchemaError as exc:
            diagnostics.append(str(exc))
            continue
        if record.sample_id in seen:
            diagnostics.append(f"{where}: duplicate rollout for {record.sample_id!r}")
            continue
        seen.add(record.sample_id)
        records.append(record)
    if total_lines == 0:
        raise SchemaError(f"{path}: no rollout records found")
    if not records:
        raise SchemaError(
            f"{path}: all {total_lines} lines are invalid; first problem: {diagnostics[0]}"
        )
    unresolved: tuple[str, ...] = ()
    if manifest is not None:
        known = {pair.sample_id for pair in manifest}
        unresolved = tuple(r.sample_id for r in records if r.sample_id not in known)
    return IngestReport(tuple(records), tuple(diagnostics), unresolved)


def _pair_rng(cfg: OracleConfig, sample_id: str) -> np.random.Generator:
    digest = hashlib.sha256(sample_id.encode("utf-8")).digest()
    entropy = int.from_bytes(digest[:16], "big")
    return np.random.default_rng(np.random.SeedSequence([cfg.rng_seed, entropy]))


def oracle_rollout(pair: BenchmarkPair, cfg: OracleConfig) -> RolloutRecord:
    """Execute the instruction exactly, as a perfect world model would.

    The estimated trajectory is the pair's frame-0 instruction with
    isotropic Gaussian noise of ``noise_sigma`` per point; the estimated
    category is read off the noisy trajectory by the rule labeler (or
    deliberately corrupted with probability ``drop_rate``). The same pair
    and config always produce the same record.
    """
    rng = _pair_rng(cfg, pair.sample_id)
    instruction = pair.template.per_frame[0]
    offsets = rng.normal(0.0, cfg.noise_sigma, size=(len(instruction), 2)) if cfg.noise_sigma > 0 else None
    points = []
    for i, p in enumerate(instruction.points):
        if offsets is None:
            points.append(p)
        else:
            points.append(Pose2D(p.x + offsets[i, 0], p.y + offsets[i, 1], p.heading, p.t))
    noisy = Trajectory(EGO_FRAME, instruction.fps, tuple(points))
    category = to_benchmark_category(label_trajectory(noisy))
    if cfg.drop_rate > 0.0 and rng.random() < cfg.drop_rate:
        wrong = [c for c in CATEGORY_ORDER if c is not category]
        category = wrong[int(rng.integers(len(wrong)))]
    return RolloutRecord(pair.sample_id, "oracle", noisy, category)


@dataclass(frozen=True)
class SampleResult:
    sample_id: str
    producer: str
    instructed: BenchCategory
    estimated: Optional[BenchCategory]
    ade_m: float
    fde_m: float


@dataclass(frozen=True)
class ScatterRow:
    """One (sample, waypoint) row of instructed-vs-estimated positions."""

    sample_id: str
    category: BenchCategory
    t_s: float
    instructed_x: float
    instructed_y: float
    estimated_x: float
    estimated_y: float


@dataclass(frozen=True)
class Coverage:
    evaluated: tuple[str, ...]
    gaps: tuple[str, ...]
    rejects: tuple[tuple[str, str], ...]
    unresolved: tuple[str, ...]


@dataclass(frozen=True)
class ReportBundle:
    iec: float
    category_report: CategoryReport
    confusion: ConfusionMatrix
    per_sample: tuple[SampleResult, ...]
    scatter: tuple[ScatterRow, ...]
    coverage: Coverage
    metadata: dict


def run_eval(
    manifest: Sequence[BenchmarkPair],
    rollouts: Sequence[RolloutRecord],
    rule_cfg: Optional[RuleConfig] = None,
    metadata: Optional[dict] = None,
) -> ReportBundle:
    """Score rollouts against a manifest.

    Estimated trajectories are resampled onto the instruction's timestamps
    before the displacement metrics; when a rollout carries no category,
    the rule labeler applied to that resampled view stands in. Manifest
    entries without a usable rollout are accounted as gaps or rejects so
    that evaluated + gaps + rejects covers the manifest exactly.
    """
    if not manifest:
        raise CoverageError("manifest is empty")
    by_id: dict[str, RolloutRecord] = {}
    for record in rollouts:
        by_id.setdefault(record.sample_id, record)
    known = {pair.sample_id for pair in manifest}
    unresolved = tuple(
        r.sample_id for r in rollouts if r.sample_id not in known
    )

    per_sample: list[SampleResult] = []
    scatter: list[ScatterRow] = []
    pairs_for_iec: list[LabelPair] = []
    gaps: list[str] = []
    rejects: list[tuple[str, str]] = []
    for pair in sorted(manifest, key=lambda p: p.sample_id):
        rollout = by_id.get(pair.sample_id)
        if rollout is None:
            gaps.append(pair.sample_id)
            continue
        instruction = pair.template.per_frame[0]
        timestamps = [p.t for p in instruction.points]
        try:
            estimated = resample_by_time(rollout.estimated_trajectory, timestamps)
        except TimeRangeError as exc:
            rejects.append((pair.sample_id, f"estimated trajectory does not cover the instruction: {exc}"))
            continue
        category = rollout.estimated_category
        if category is None:
            category = to_benchmark_category(label_trajectory(estimated, rule_cfg))
        ade_m = ade(instruction, estimated)
        fde_m = fde(instruction, estimated)
        per_sample.append(
            SampleResult(
                sample_id=pair.sample_id,
                producer=rollout.producer,
                instructed=pair.instructed_category,
                estimated=category,
                ade_m=ade_m,
                fde_m=fde_m,
            )
        )
        pairs_for_iec.append(LabelPair(pair.instructed_category, category, pair.sample_id))
        for ins_p, est_p in zip(instruction.points, estimated.points):
            scatter.append(
                ScatterRow(
                    sample_id=pair.sample_id,
                    category=pair.instructed_category,
                    t_s=ins_p.t,
                    instructed_x=ins_p.x,
                    instructed_y=ins_p.y,
                    estimated_x=est_p.x,
                    estimated_y=est_p.y,
                )
            )
    if not per_sample:
        raise CoverageError(
            f"no manifest entry has a usable rollout ({len(gaps)} gaps, {len(rejects)} rejects)"
        )

    conditioning_by_producer: dict[str, str] = {}
    for record in rollouts:
        if record.conditioning is not None:
            conditioning_by_producer.setdefault(record.producer, record.conditioning)
    bundle_metadata = {
        "schema_version": SCHEMA_VERSION,
        "categories": [c.value for c in CATEGORY_ORDER],
        "label_to_category": "straight_const_ls/straight_const_hs -> straight at constant speed; stopped/unmatched -> none",
        "manifest_size": len(manifest),
        "producers": sorted({r.producer for r in per_sample}),
        "conditioning_by_producer": conditioning_by_producer,
    }
    if metadata:
        bundle_metadata.update(metadata)

    return ReportBundle(
        iec=iec(pairs_for_iec),
        category_report=aggregate_by_category(
            [(r.instructed, r.ade_m, r.fde_m) for r in per_sample], CATEGORY_ORDER
        ),
        confusion=confusion_matrix(pairs_for_iec, CATEGORY_ORDER),
        per_sample=tuple(per_sample),
        scatter=tuple(scatter),
        coverage=Coverage(
            evaluated=tuple(r.sample_id for r in per_sample),
            gaps=tuple(gaps),
            rejects=tuple(rejects),
            unresolved=unresolved,
        ),
        metadata=bundle_metadata,
    )


def _fmt(value: Optional[float]) -> str:
    return "N/A" if value is None else repr(value)


def bundle_to_dict(bundle: ReportBundle) -> dict:
    categories = [c.value for c in bundle.confusion.categories]
    report = bundle.category_report
    return {
        "schema_version": SCHEMA_VERSION,
        "iec": bundle.iec,
        "trajectory_alignment": {
            "per_category": {
                cat.value: {
                    "count": report.per_category[cat].count,
                    "mean_ade_m": report.per_category[cat].mean_ade,
                    "mean_fde_m": report.per_category[cat].mean_fde,
                }
                for cat in report.categories
            },
            "average": {
                "count": report.overall.count,
                "mean_ade_m": report.overall.mean_ade,
                "mean_fde_m": report.overall.mean_fde,
                "weighting": "per-record",
            },
        },
        "confusion": {
            "categories": categories,
            "columns": categories + ["none"],
            "counts": bundle.confusion.counts.tolist(),
            "row_ratios": bundle.confusion.row_ratios.tolist(),
        },
        "per_sample": [
            {
                "sample_id": r.sample_id,
                "producer": r.producer,
                "instructed": r.instructed.value,
                "estimated": None if r.estimated is None else r.estimated.value,
                "ade_m": r.ade_m,
                "fde_m": r.fde_m,
            }
            for r in bundle.per_sample
        ],
        "coverage": {
            "evaluated": len(bundle.coverage.evaluated),
            "gaps": list(bundle.coverage.gaps),
            "rejects": [list(item) for item in bundle.coverage.rejects],
            "unresolved": list(bundle.coverage.unresolved),
        },
        "metadata": bundle.metadata,
    }


def report_csv_lines(bundle: ReportBundle) -> list[str]:
    lines = ["category,count,mean_ade_m,mean_fde_m"]
    report = bundle.category_report
    for cat in report.categories:
        stats = report.per_category[cat]
        lines.append(
            f"{cat.value},{stats.count},{_fmt(stats.mean_ade)},{_fmt(stats.mean_fde)}"
        )
    overall = report.overall
    lines.append(
        f"average,{overall.count},{_fmt(overall.mean_ade)},{_fmt(overall.mean_fde)}"
    )
    return lines


def confusion_csv_lines(bundle: ReportBundle) -> list[str]:
    cats = [c.value for c in bundle.confusion.categories]
    columns = cats + ["none"]
    header = (
        "instructed,"
        + ",".join(f"count:{c}" for c in columns)
        + ","
        + ",".join(f"ratio:{c}" for c in columns)
    )
    lines = [header]
    for i, cat in enumerate(cats):
        counts = ",".join(str(int(v)) for v in bundle.confusion.counts[i])
        ratios = ",".join(repr(float(v)) for v in bundle.confusion.row_ratios[i])
        lines.append(f"{cat},{counts},{ratios}")
    return lines


def scatter_csv_lines(bundle: ReportBundle) -> list[str]:
    lines = ["sample_id,category,t_s,instructed_x,instructed_y,estimated_x,estimated_y"]
    for row in bundle.scatter:
        lines.append(
            f"{row.sample_id},{row.category.value},{row.t_s!r},"
            f"{row.instructed_x!r},{row.instructed_y!r},"
            f"{row.estimated_x!r},{row.estimated_y!r}"
        )
    return lines


def emit_report(bundle: ReportBundle, out_dir, formats: Sequence[str] = ("json", "csv")) -> list[Path]:
    """Write report files; identical bundles yield byte-identical files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    wanted = set(formats)
    unknown = wanted - {"json", "csv"}
    if unknown:
        raise InvalidInputError(f"unknown report formats: {sorted(unknown)}")
    if "json" in wanted:
        path = out / "report.json"
        path.write_text(canonical_dumps(bundle_to_dict(bundle)) + "\n", encoding="utf-8")
        written.append(path)
    if "csv" in wanted:
        for name, lines in (
            ("report.csv", report_csv_lines(bundle)),
            ("confusion.csv", confusion_csv_lines(bundle)),
            ("scatter.csv", scatter_csv_lines(bundle)),
        ):
            path = out / name
            path.write_text("\n".join(lines) + "\n", encoding="utf-8")
            written.append(path)
    return written


def write_rollouts(path, records: Sequence[RolloutRecord]) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(canonical_dumps(rollout_to_dict(record)) + "\n")
