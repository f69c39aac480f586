"""Planar trajectory representation, SE(2) frame changes, and geometric features.

Conventions: the ego frame has +y pointing forward and +x pointing right.
Headings are measured from the +y axis, increasing toward +x, and are kept
normalized to (-pi, pi].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (
    FrameError,
    InsufficientPointsError,
    InvalidInputError,
    TimeRangeError,
)

GLOBAL_FRAME = "global"
EGO_FRAME = "ego"

# Fits flatter than this curvature (radius above the cap) are treated as lines.
MAX_CIRCLE_RADIUS_M = 1e4


def wrap_angle(angle: float) -> float:
    """Normalize an angle in radians to the interval (-pi, pi]."""
    wrapped = math.remainder(angle, math.tau)
    if wrapped <= -math.pi:
        wrapped += math.tau
    return wrapped


@dataclass(frozen=True)
class Pose2D:
    """A timestamped planar pose.

    x is lateral (positive right), y is longitudinal (positive forward),
    heading is the angle of the forward axis measured from +y toward +x.
    """

    x: float
    y: float
    heading: float
    t: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "heading", "t"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidInputError(f"pose field {name!r} must be finite")
        if self.t < 0.0:
            raise InvalidInputError(f"pose timestamp must be >= 0, got {self.t}")
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    def position(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


@dataclass(frozen=True)
class Trajectory:
    """An ordered sequence of poses sampled in one coordinate frame."""

    frame: str
    fps: float
    points: tuple[Pose2D, ...]

    def __post_init__(self) -> None:
        if self.frame not in (GLOBAL_FRAME, EGO_FRAME):
            raise FrameError(f"unknown frame tag {self.frame!r}")
        if not math.isfinite(self.fps) or self.fps <= 0.0:
            raise InvalidInputError(f"fps must be positive, got {self.fps}")
        object.__setattr__(self, "points", tuple(self.points))
        if len(self.points) < 1:
            raise InsufficientPointsError("trajectory needs at least one point")
        times = [p.t for p in self.points]
        for earlier, later in zip(times, times[1:]):
            if later <= earlier:
                raise InvalidInputError("trajectory timestamps must strictly increase")

    def __len__(self) -> int:
        return len(self.points)

    def xy(self) -> np.ndarray:
        """Positions as an (n, 2) array."""
        return np.array([(p.x, p.y) for p in self.points], dtype=float)

    def times(self) -> np.ndarray:
        return np.array([p.t for p in self.points], dtype=float)

    def headings(self) -> np.ndarray:
        return np.array([p.heading for p in self.points], dtype=float)

    def duration(self) -> float:
        return self.points[-1].t - self.points[0].t


@dataclass(frozen=True)
class CircleFit:
    """Result of an algebraic circle fit."""

    center_x: float
    center_y: float
    radius: float
    rmse: float


@dataclass(frozen=True)
class FeatureVector:
    """Geometric features of one ego-frame trajectory.

    Entries that cannot be computed (zero length, too few points, or a
    degenerate circle fit) are None rather than silently zeroed.
    """

    length: float
    closest_interval: float
    furthest_interval: float
    interval_delta: float
    interval_1_over_4: Optional[float]
    interval_3_over_4: Optional[float]
    lr_div: float
    angle_mid: Optional[float]
    angle_last: Optional[float]
    acceleration: Optional[float]
    circle_center_x_fh: Optional[float]
    circle_center_x_lh: Optional[float]


def _rotation(heading: float) -> np.ndarray:
    """Matrix mapping local (right, forward) axes into the parent frame."""
    c, s = math.cos(heading), math.sin(heading)
    return np.array([[c, s], [-s, c]])


def _check_anchor(anchor: Pose2D) -> None:
    if not all(math.isfinite(v) for v in (anchor.x, anchor.y, anchor.heading)):
        raise InvalidInputError("anchor pose must be finite")


def _rebase(traj: Trajectory, anchor: Pose2D, out_frame: str) -> Trajectory:
    _check_anchor(anchor)
    rot_t = _rotation(anchor.heading).T
    origin = anchor.position()
    points = []
    for p in traj.points:
        local = rot_t @ (p.position() - origin)
        points.append(
            Pose2D(local[0], local[1], wrap_angle(p.heading - anchor.heading), p.t)
        )
    return Trajectory(out_frame, traj.fps, tuple(points))


def to_local_frame(traj: Trajectory, anchor: Pose2D) -> Trajectory:
    """Re-express a global-frame trajectory in the ego frame of ``anchor``.

    Each position p maps to R(psi)^T (p - anchor) so that the anchor's
    forward direction becomes +y; headings are rebased and timestamps kept.
    """
    if traj.frame != GLOBAL_FRAME:
        raise FrameError(f"to_local_frame expects a global trajectory, got {traj.frame!r}")
    return _rebase(traj, anchor, EGO_FRAME)


def to_global_frame(traj: Trajectory, anchor: Pose2D) -> Trajectory:
    """Inverse of :func:`to_local_frame` for the same anchor pose."""
    if traj.frame != EGO_FRAME:
        raise FrameError(f"to_global_frame expects an ego trajectory, got {traj.frame!r}")
    _check_anchor(anchor)
    rot = _rotation(anchor.heading)
    origin = anchor.position()
    points = []
    for p in traj.points:
        world = rot @ p.position() + origin
        points.append(
            Pose2D(world[0], world[1], wrap_angle(p.heading + anchor.heading), p.t)
        )
    return Trajectory(GLOBAL_FRAME, traj.fps, tuple(points))


def reanchor(traj: Trajectory, anchor: Pose2D) -> Trajectory:
    """Re-express an ego trajectory relative to another pose of the same frame."""
    if traj.frame != EGO_FRAME:
        raise FrameError(f"reanchor expects an ego trajectory, got {traj.frame!r}")
    return _rebase(traj, anchor, EGO_FRAME)


def fit_circle(points: Sequence[Sequence[float]]) -> Optional[CircleFit]:
    """Least-squares (Kasa) circle fit through 2-D points.

    Returns None when the points are collinear within tolerance or the
    fitted radius exceeds the straight-line cap, so callers can treat the
    arc as degenerate instead of trusting a meaningless center.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InvalidInputError("fit_circle expects an (n, 2) point array")
    if len(pts) < 3:
        raise InsufficientPointsError("circle fit needs at least 3 points")
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("circle fit points must be finite")

    # Solve 2*cx*x + 2*cy*y + c = x^2 + y^2 in the least-squares sense.
    design = np.column_stack([2.0 * pts[:, 0], 2.0 * pts[:, 1], np.ones(len(pts))])
    rhs = (pts**2).sum(axis=1)
    solution, _, rank, _ = np.linalg.lstsq(design, rhs, rcond=None)
    if rank < 3:
        return None
    cx, cy, c = solution
    radius_sq = c + cx * cx + cy * cy
    if not np.isfinite(radius_sq) or radius_sq <= 0.0:
        return None
    radius = math.sqrt(radius_sq)
    if radius > MAX_CIRCLE_RADIUS_M:
        return None
    distances = np.hypot(pts[:, 0] - cx, pts[:, 1] - cy)
    rmse = float(np.sqrt(np.mean((distances - radius) ** 2)))
    return CircleFit(float(cx), float(cy), radius, rmse)


def _unsigned_angle_deg(vec: np.ndarray) -> Optional[float]:
    """Unsigned angle in degrees between a tangent vector and the +y axis."""
    if float(np.hypot(vec[0], vec[1])) == 0.0:
        return None
    return abs(math.degrees(math.atan2(vec[0], vec[1])))


def _tangent(pts: np.ndarray, index: int) -> np.ndarray:
    """Central-difference tangent, falling back to one-sided at the ends."""
    lo = max(index - 1, 0)
    hi = min(index + 1, len(pts) - 1)
    return pts[hi] - pts[lo]


def compute_features(traj: Trajectory) -> FeatureVector:
    """Compute the feature vector used by the rule-based action labeler.

    Requires an ego-frame trajectory with at least two points.
    """
    if traj.frame != EGO_FRAME:
        raise FrameError("features are defined in the ego frame; re-anchor first")
    n = len(traj)
    if n < 2:
        raise InsufficientPointsError("feature computation needs >= 2 points")

    pts = traj.xy()
    intervals = np.hypot(*np.diff(pts, axis=0).T)
    length = float(intervals.sum())
    closest = float(intervals[0])
    furthest = float(intervals[-1])

    if length > 0.0:
        head_fraction = float(intervals[: n // 4].sum()) / length
        tail_fraction = float(intervals[3 * n // 4 :].sum()) / length
    else:
        head_fraction = None
        tail_fraction = None

    if len(intervals) >= 2:
        idx = np.arange(len(intervals), dtype=float)
        acceleration = float(np.polyfit(idx, intervals, 1)[0])
    else:
        acceleration = None

    first_half = pts[: (n + 1) // 2]
    last_half = pts[n // 2 :]
    center_x_fh = center_x_lh = None
    if len(first_half) >= 3:
        fit = fit_circle(first_half)
        center_x_fh = fit.center_x if fit is not None else None
    if len(last_half) >= 3:
        fit = fit_circle(last_half)
        center_x_lh = fit.center_x if fit is not None else None

    return FeatureVector(
        length=length,
        closest_interval=closest,
        furthest_interval=furthest,
        interval_delta=furthest - closest,
        interval_1_over_4=head_fraction,
        interval_3_over_4=tail_fraction,
        lr_div=float(pts[-1, 0]),
        angle_mid=_unsigned_angle_deg(_tangent(pts, n // 2)),
        angle_last=_unsigned_angle_deg(pts[-1] - pts[-2]),
        acceleration=acceleration,
        circle_center_x_fh=center_x_fh,
        circle_center_x_lh=center_x_lh,
    )


def resample_by_time(traj: Trajectory, timestamps: Sequence[float]) -> Trajectory:
    """Resample a trajectory at the given timestamps.

    Positions are interpolated linearly and headings along the shortest
    arc. Sampling at an original timestamp reproduces that pose exactly.
    Timestamps must be strictly increasing and lie inside the trajectory's
    time span.
    """
    stamps = [float(t) for t in timestamps]
    if not stamps:
        raise InvalidInputError("resample needs at least one timestamp")
    for earlier, later in zip(stamps, stamps[1:]):
        if later <= earlier:
            raise InvalidInputError("resample timestamps must strictly increase")
    times = traj.times()
    t_first, t_last = times[0], times[-1]
    if stamps[0] < t_first or stamps[-1] > t_last:
        raise TimeRangeError(
            f"timestamps [{stamps[0]}, {stamps[-1]}] outside span [{t_first}, {t_last}]"
        )
    if len(traj) == 1:
        # Span is a single instant; every valid timestamp equals it.
        p = traj.points[0]
        return Trajectory(traj.frame, traj.fps, tuple(
            Pose2D(p.x, p.y, p.heading, s) for s in stamps
        ))

    pts = traj.xy()
    headings = traj.headings()
    out = []
    for t in stamps:
        seg = int(np.searchsorted(times, t, side="right")) - 1
        seg = min(max(seg, 0), len(traj) - 2)
        t0, t1 = times[seg], times[seg + 1]
        frac = (t - t0) / (t1 - t0)
        if frac == 0.0:
            x, y, h = pts[seg, 0], pts[seg, 1], headings[seg]
        elif frac == 1.0:
            x, y, h = pts[seg + 1, 0], pts[seg + 1, 1], headings[seg + 1]
        else:
            x = pts[seg, 0] + frac * (pts[seg + 1, 0] - pts[seg, 0])
            y = pts[seg, 1] + frac * (pts[seg + 1, 1] - pts[seg, 1])
            h = headings[seg] + frac * wrap_angle(headings[seg + 1] - headings[seg])
        out.append(Pose2D(float(x), float(y), float(h), t))

    if len(stamps) >= 2:
        fps = (len(stamps) - 1) / (stamps[-1] - stamps[0])
    else:
        fps = traj.fps
    return Trajectory(traj.frame, fps, tuple(out))


def arc_length(traj: Trajectory) -> float:
    """Total polyline length of a trajectory in meters."""
    if len(traj) < 2:
        return 0.0
    return float(np.hypot(*np.diff(traj.xy(), axis=0).T).sum())


def initial_speed_kmh(traj: Trajectory) -> float:
    """Speed over the first segment, in km/h."""
    if len(traj) < 2:
        raise InsufficientPointsError("initial speed needs >= 2 points")
    p0, p1 = traj.points[0], traj.points[1]
    gap = p1.t - p0.t
    if gap <= 0.0:
        raise InvalidInputError("zero time gap between first two points")
    return math.hypot(p1.x - p0.x, p1.y - p0.y) / gap * 3.6
