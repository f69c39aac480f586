"""Shared synthetic fixtures for the test suite.

The eleven canonical labeler fixtures are built strictly inside their rule
thresholds from raw point sequences; they are data constructions, not
kinematic simulations.
"""

from __future__ import annotations

import math

import numpy as np

from actbench.geometry import EGO_FRAME, GLOBAL_FRAME, Pose2D, Trajectory
from actbench.labeler import ActionLabel


def traj_from_xy(xy, frame=EGO_FRAME, fps=10.0, headings=None, dt=None):
    dt = dt if dt is not None else 1.0 / fps
    points = []
    for i, (x, y) in enumerate(xy):
        heading = 0.0 if headings is None else headings[i]
        points.append(Pose2D(float(x), float(y), float(heading), i * dt))
    return Trajectory(frame, fps, tuple(points))


def traj_from_intervals(intervals, frame=EGO_FRAME, fps=10.0):
    """A straight +y trajectory whose consecutive gaps are the given intervals."""
    y = np.concatenate([[0.0], np.cumsum(np.asarray(intervals, dtype=float))])
    return traj_from_xy([(0.0, v) for v in y], frame=frame, fps=fps)


def straight_fixture(spacing=0.8, n=44, fps=10.0):
    return traj_from_xy([(0.0, spacing * k) for k in range(n)], fps=fps)


def arc_fixture(radius=30.0, step=0.8, n=44, sign=1.0, fps=10.0):
    """Exact points on a circle of the given radius, tangent +y at the origin."""
    pts = []
    headings = []
    for k in range(n):
        theta = step * k / radius
        pts.append((sign * radius * (1.0 - math.cos(theta)), radius * math.sin(theta)))
        headings.append(sign * theta)
    return traj_from_xy(pts, headings=headings, fps=fps)


def _smoothstep(u):
    u = min(max(u, 0.0), 1.0)
    return 3.0 * u * u - 2.0 * u ** 3


def shifting_fixture(sign=1.0, offset=2.0, n=44, spacing=0.8):
    """Lane-change: lateral smoothstep from 0 to offset between k=10 and k=34."""
    xy = [
        (sign * offset * _smoothstep((k - 10) / 24.0), spacing * k)
        for k in range(n)
    ]
    return traj_from_xy(xy)


def starting_fixture():
    intervals = [0.0] * 10 + [0.02 * (k - 9) for k in range(10, 43)]
    return traj_from_intervals(intervals)


def stopping_fixture():
    intervals = [max(0.0, 0.5 - 0.025 * k) for k in range(43)]
    return traj_from_intervals(intervals)


def stopped_fixture(n=44):
    return traj_from_xy([(0.0, 0.0)] * n)


def accelerating_fixture():
    intervals = [0.2 + 0.32 * k for k in range(14)]
    return traj_from_intervals(intervals)


def decelerating_fixture():
    intervals = [4.0 - 0.28 * k for k in range(14)]
    return traj_from_intervals(intervals)


def precedence_fixture():
    """Satisfies both the shifting-right and curving-right conjunctions.

    A right arc builds lateral offset, then a much tighter left arc brings
    the tangent back to ~0.5 deg. The left arc's radius (1 m) is smaller
    than the accumulated rightward offset, so the circle fitted to the
    second half still has a center at positive x.
    """
    pts = [(0.0, 0.0)]
    heading = 0.0
    theta_max = math.radians(45.0)
    for _ in range(18):  # right arc, ds = 0.4
        heading += theta_max / 18
        pts.append((pts[-1][0] + 0.4 * math.sin(heading), pts[-1][1] + 0.4 * math.cos(heading)))
    target = math.radians(0.5)
    ds2 = 1.0 * (theta_max - target) / 6  # left arc with radius 1 m
    for _ in range(6):
        heading -= (theta_max - target) / 6
        pts.append((pts[-1][0] + ds2 * math.sin(heading), pts[-1][1] + ds2 * math.cos(heading)))
    return traj_from_xy(pts)


CANONICAL_FIXTURES = {
    ActionLabel.SHIFTING_TOWARDS_RIGHT: lambda: shifting_fixture(sign=1.0),
    ActionLabel.SHIFTING_TOWARDS_LEFT: lambda: shifting_fixture(sign=-1.0),
    ActionLabel.CURVING_TO_RIGHT: lambda: arc_fixture(sign=1.0),
    ActionLabel.CURVING_TO_LEFT: lambda: arc_fixture(sign=-1.0),
    ActionLabel.STARTING: starting_fixture,
    ActionLabel.STOPPING: stopping_fixture,
    ActionLabel.STOPPED: stopped_fixture,
    ActionLabel.ACCELERATING: accelerating_fixture,
    ActionLabel.DECELERATING: decelerating_fixture,
    ActionLabel.STRAIGHT_CONST_LS: lambda: straight_fixture(spacing=0.3),
    ActionLabel.STRAIGHT_CONST_HS: lambda: straight_fixture(spacing=0.8),
}


def random_global_trajectory(rng, n_points=None):
    """A smooth random scene in the global frame."""
    n = n_points or int(rng.integers(5, 40))
    speed = rng.uniform(0.5, 12.0)
    heading = rng.uniform(-math.pi, math.pi)
    turn_rate = rng.uniform(-0.3, 0.3)
    x, y = rng.uniform(-100, 100, size=2)
    points = []
    for k in range(n):
        points.append(Pose2D(x, y, heading, k * 0.1))
        heading += turn_rate * 0.1
        x += speed * 0.1 * math.sin(heading)
        y += speed * 0.1 * math.cos(heading)
    return Trajectory(GLOBAL_FRAME, 10.0, tuple(points))


def toy_codec_chunk(seed=0):
    """A small packed sequence for codec CLI tests."""
    from actbench.codec import CodecConfig, pack

    cfg = CodecConfig(
        frames_per_chunk=3, tokens_per_frame=4, action_points=2,
        vocab_size=50, height=2, width=2, downscale=1, embed_dim=8,
    )
    rng = np.random.default_rng(seed)
    tokens = rng.integers(0, cfg.vocab_size, size=(3, 4))
    actions = np.zeros((3, 2, 3))
    actions[:, :, 0] = rng.normal(size=(3, 2))
    actions[:, :, 1] = rng.normal(size=(3, 2))
    actions[:, :, 2] = np.sort(rng.uniform(0.1, 3.0, size=(3, 2)), axis=1)
    return pack(tokens, actions, cfg)


def straight_scene(scene_id, speed_ms, n=60, fps=10.0, heading=0.0, origin=(0.0, 0.0)):
    """A constant-speed straight scene in the global frame."""
    points = []
    x, y = origin
    for k in range(n):
        t = k / fps
        points.append(
            Pose2D(
                x + speed_ms * t * math.sin(heading),
                y + speed_ms * t * math.cos(heading),
                heading,
                t,
            )
        )
    return scene_id, Trajectory(GLOBAL_FRAME, fps, tuple(points))
