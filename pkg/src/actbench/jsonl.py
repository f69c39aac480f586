"""JSONL interchange for trajectories and canonical JSON serialization.

One trajectory per line:
``{"id": str, "frame": "global"|"ego", "fps": number, "points": [{"t", "x", "y", "heading"}]}``
Field names and units (seconds, meters, radians) are normative.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Iterator

from .errors import ActBenchError, SchemaError
from .geometry import EGO_FRAME, GLOBAL_FRAME, Pose2D, Trajectory

_POINT_FIELDS = ("t", "x", "y", "heading")


def canonical_dumps(obj) -> str:
    """Deterministic single-line JSON encoding (sorted keys, no whitespace)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def trajectory_to_dict(traj: Trajectory) -> dict:
    return {
        "frame": traj.frame,
        "fps": traj.fps,
        "points": [
            {"t": p.t, "x": p.x, "y": p.y, "heading": p.heading} for p in traj.points
        ],
    }


def trajectory_from_dict(obj, *, where: str = "trajectory") -> Trajectory:
    """Build a Trajectory from its dict form, raising SchemaError on any defect."""
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object, got {type(obj).__name__}")
    frame = obj.get("frame")
    if frame not in (GLOBAL_FRAME, EGO_FRAME):
        raise SchemaError(f"{where}: frame must be 'global' or 'ego', got {frame!r}")
    fps = obj.get("fps")
    if not isinstance(fps, (int, float)) or isinstance(fps, bool):
        raise SchemaError(f"{where}: fps must be a number")
    raw_points = obj.get("points")
    if not isinstance(raw_points, list) or not raw_points:
        raise SchemaError(f"{where}: points must be a non-empty list")
    points = []
    for i, entry in enumerate(raw_points):
        if not isinstance(entry, dict):
            raise SchemaError(f"{where}: points[{i}] must be an object")
        values = {}
        for field in _POINT_FIELDS:
            value = entry.get(field)
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise SchemaError(f"{where}: points[{i}].{field} must be a number")
            values[field] = float(value)
        points.append(values)
    try:
        return Trajectory(
            frame,
            float(fps),
            tuple(Pose2D(v["x"], v["y"], v["heading"], v["t"]) for v in points),
        )
    except ActBenchError as exc:
        raise SchemaError(f"{where}: {exc}") from exc


def iter_jsonl(path) -> Iterator[tuple[int, dict]]:
    """Yield (line_number, object) for every non-blank line of a JSONL file."""
    with Path(path).open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                obj = json.loads(stripped)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            yield lineno, obj


def read_trajectories(path) -> list[tuple[str, Trajectory]]:
    """Read id/trajectory pairs, failing with file:line context on bad records."""
    records = []
    seen = set()
    for lineno, obj in iter_jsonl(path):
        where = f"{path}:{lineno}"
        record_id = obj.get("id") if isinstance(obj, dict) else None
        if not isinstance(record_id, str) or not record_id:
            raise SchemaError(f"{where}: missing or non-string 'id'")
        if record_id in seen:
            raise SchemaError(f"{where}: duplicate trajectory id {record_id!r}")
        seen.add(record_id)
        records.append((record_id, trajectory_from_dict(obj, where=where)))
    return records


def write_trajectories(path, items: Iterable[tuple[str, Trajectory]]) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        for record_id, traj in items:
            obj = {"id": record_id, **trajectory_to_dict(traj)}
            handle.write(canonical_dumps(obj) + "\n")


def write_jsonl(path, objects: Iterable[dict]) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        for obj in objects:
            handle.write(canonical_dumps(obj) + "\n")
