"""Rule-based high-level action labeling of ego-frame trajectories.

A trajectory is reduced to a :class:`~actbench.geometry.FeatureVector` and
matched against an ordered cascade of threshold rules. The first rule whose
conditions all hold provides the label; ``unmatched`` is returned when no
rule fires. All thresholds live in a :class:`RuleConfig` loaded from a TOML
file so they stay data, not code.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import ParameterError
from .geometry import FeatureVector, Trajectory, compute_features


class ActionLabel(enum.Enum):
    """The eleven labeler classes plus the explicit no-match outcome."""

    SHIFTING_TOWARDS_RIGHT = "shifting_towards_right"
    SHIFTING_TOWARDS_LEFT = "shifting_towards_left"
    CURVING_TO_RIGHT = "curving_to_right"
    CURVING_TO_LEFT = "curving_to_left"
    STARTING = "starting"
    STOPPING = "stopping"
    STOPPED = "stopped"
    ACCELERATING = "accelerating"
    DECELERATING = "decelerating"
    STRAIGHT_CONST_LS = "straight_const_ls"
    STRAIGHT_CONST_HS = "straight_const_hs"
    UNMATCHED = "unmatched"


class BenchCategory(enum.Enum):
    """The nine benchmark action categories."""

    CURVING_TO_LEFT = "curving to left"
    CURVING_TO_RIGHT = "curving to right"
    SHIFTING_TOWARDS_LEFT = "shifting towards left"
    SHIFTING_TOWARDS_RIGHT = "shifting towards right"
    STARTING = "starting"
    STOPPING = "stopping"
    ACCELERATING = "accelerating"
    STRAIGHT_CONSTANT = "straight at constant speed"
    DECELERATING = "decelerating"


CATEGORY_ORDER: tuple[BenchCategory, ...] = (
    BenchCategory.CURVING_TO_LEFT,
    BenchCategory.CURVING_TO_RIGHT,
    BenchCategory.SHIFTING_TOWARDS_LEFT,
    BenchCategory.SHIFTING_TOWARDS_RIGHT,
    BenchCategory.STARTING,
    BenchCategory.STOPPING,
    BenchCategory.ACCELERATING,
    BenchCategory.STRAIGHT_CONSTANT,
    BenchCategory.DECELERATING,
)

_LABEL_TO_CATEGORY = {
    ActionLabel.SHIFTING_TOWARDS_RIGHT: BenchCategory.SHIFTING_TOWARDS_RIGHT,
    ActionLabel.SHIFTING_TOWARDS_LEFT: BenchCategory.SHIFTING_TOWARDS_LEFT,
    ActionLabel.CURVING_TO_RIGHT: BenchCategory.CURVING_TO_RIGHT,
    ActionLabel.CURVING_TO_LEFT: BenchCategory.CURVING_TO_LEFT,
    ActionLabel.STARTING: BenchCategory.STARTING,
    ActionLabel.STOPPING: BenchCategory.STOPPING,
    ActionLabel.ACCELERATING: BenchCategory.ACCELERATING,
    ActionLabel.DECELERATING: BenchCategory.DECELERATING,
    ActionLabel.STRAIGHT_CONST_LS: BenchCategory.STRAIGHT_CONSTANT,
    ActionLabel.STRAIGHT_CONST_HS: BenchCategory.STRAIGHT_CONSTANT,
}


def to_benchmark_category(label: ActionLabel) -> Optional[BenchCategory]:
    """Map a labeler class onto its benchmark category.

    The two straight-constant speed classes merge into one category;
    ``stopped`` and ``unmatched`` have no benchmark counterpart and map
    to None.
    """
    return _LABEL_TO_CATEGORY.get(label)


@dataclass(frozen=True)
class Band:
    """A closed length band [min_m, max_m] with an attached threshold."""

    length_min: float
    length_max: float
    threshold: float

    def covers(self, length: float) -> bool:
        return self.length_min <= length <= self.length_max


@dataclass(frozen=True)
class ShiftingRule:
    lr_div_min: float
    angle_mid_min: float
    angle_last_max: float


@dataclass(frozen=True)
class CurvingRule:
    length_min: float
    short_length_max: float
    lr_div_scale_short: float
    lr_div_scale_long: float
    closest_interval_min: float


@dataclass(frozen=True)
class StartingRule:
    length_min: float
    length_max: float
    closest_interval_max: float
    interval_1_over_4_max: float
    interval_delta_min: float


@dataclass(frozen=True)
class StoppingRule:
    length_min: float
    furthest_interval_max: float
    interval_3_over_4_max: float
    closest_interval_min: float
    interval_drop_min: float


@dataclass(frozen=True)
class AcceleratingRule:
    closest_interval_min: float
    accel_bands: tuple[Band, ...]


@dataclass(frozen=True)
class DeceleratingRule:
    furthest_interval_min: float
    accel_bands: tuple[Band, ...]
    delta_bands: tuple[Band, ...]


@dataclass(frozen=True)
class StraightRule:
    length_min: float
    length_max: Optional[float]
    interval_delta_scale: float


@dataclass(frozen=True)
class RuleConfig:
    """Every numeric threshold of the labeling cascade, plus its order."""

    cascade: tuple[ActionLabel, ...]
    shifting: ShiftingRule
    curving: CurvingRule
    starting: StartingRule
    stopping: StoppingRule
    stopped_length_max: float
    straightness_bands: tuple[Band, ...]
    accelerating: AcceleratingRule
    decelerating: DeceleratingRule
    straight_ls: StraightRule
    straight_hs: StraightRule

    def __post_init__(self) -> None:
        expected = {label for label in ActionLabel if label is not ActionLabel.UNMATCHED}
        if set(self.cascade) != expected or len(self.cascade) != len(expected):
            raise ParameterError("cascade must be a permutation of the eleven labels")


def _floats(section: dict, section_name: str, *keys: str) -> list[float]:
    values = []
    for key in keys:
        if key not in section:
            raise ParameterError(f"rule config missing [{section_name}] {key}")
        value = section[key]
        if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
            raise ParameterError(f"rule config [{section_name}] {key} must be a finite number")
        values.append(float(value))
    return values


def _bands(section: dict, section_name: str, key: str) -> tuple[Band, ...]:
    raw = section.get(key)
    if not isinstance(raw, list) or not raw:
        raise ParameterError(f"rule config [{section_name}] {key} must be a non-empty list")
    bands = []
    for entry in raw:
        if not isinstance(entry, list) or len(entry) != 3:
            raise ParameterError(f"rule config [{section_name}] {key} entries must be [min, max, threshold]")
        lo, hi, threshold = (float(v) for v in entry)
        if not (math.isfinite(lo) and math.isfinite(hi) and math.isfinite(threshold)) or hi < lo:
            raise ParameterError(f"rule config [{section_name}] {key} has an invalid band {entry}")
        bands.append(Band(lo, hi, threshold))
    return tuple(bands)


def _parse_rule_config(data: dict) -> RuleConfig:
    try:
        cascade = tuple(ActionLabel(name) for name in data["cascade"])
    except (KeyError, ValueError) as exc:
        raise ParameterError(f"rule config cascade is invalid: {exc}") from exc

    def section(name: str) -> dict:
        table = data.get(name)
        if not isinstance(table, dict):
            raise ParameterError(f"rule config missing [{name}] section")
        return table

    sh = section("shifting")
    cu = section("curving")
    st = section("starting")
    sp = section("stopping")
    ls = section("straight_ls")
    hs = section("straight_hs")
    return RuleConfig(
        cascade=cascade,
        shifting=ShiftingRule(*_floats(sh, "shifting", "lr_div_min", "angle_mid_min", "angle_last_max")),
        curving=CurvingRule(
            *_floats(cu, "curving", "length_min", "short_length_max",
                     "lr_div_scale_short", "lr_div_scale_long", "closest_interval_min")
        ),
        starting=StartingRule(
            *_floats(st, "starting", "length_min", "length_max", "closest_interval_max",
                     "interval_1_over_4_max", "interval_delta_min")
        ),
        stopping=StoppingRule(
            *_floats(sp, "stopping", "length_min", "furthest_interval_max",
                     "interval_3_over_4_max", "closest_interval_min", "interval_drop_min")
        ),
        stopped_length_max=_floats(section("stopped"), "stopped", "length_max")[0],
        straightness_bands=_bands(section("straightness"), "straightness", "bands"),
        accelerating=AcceleratingRule(
            closest_interval_min=_floats(section("accelerating"), "accelerating", "closest_interval_min")[0],
            accel_bands=_bands(section("accelerating"), "accelerating", "accel_bands"),
        ),
        decelerating=DeceleratingRule(
            furthest_interval_min=_floats(section("decelerating"), "decelerating", "furthest_interval_min")[0],
            accel_bands=_bands(section("decelerating"), "decelerating", "accel_bands"),
            delta_bands=_bands(section("decelerating"), "decelerating", "delta_bands"),
        ),
        straight_ls=StraightRule(*_floats(ls, "straight_ls", "length_min", "length_max", "interval_delta_scale")),
        straight_hs=StraightRule(
            length_min=_floats(hs, "straight_hs", "length_min")[0],
            length_max=None,
            interval_delta_scale=_floats(hs, "straight_hs", "interval_delta_scale")[0],
        ),
    )


def load_rule_config(path) -> RuleConfig:
    """Load labeling thresholds from a TOML file."""
    text = Path(path).read_text(encoding="utf-8")
    return _parse_rule_config(tomllib.loads(text))


@lru_cache(maxsize=1)
def default_rule_config() -> RuleConfig:
    """The thresholds shipped with the package."""
    text = resources.files("actbench").joinpath("data/rules.toml").read_text(encoding="utf-8")
    return _parse_rule_config(tomllib.loads(text))


def _straight_enough(fv: FeatureVector, bands: tuple[Band, ...]) -> bool:
    return any(
        band.covers(fv.length) and abs(fv.lr_div) < band.threshold * fv.length
        for band in bands
    )


def _matches_shifting(fv: FeatureVector, cfg: RuleConfig, sign: float) -> bool:
    if fv.angle_mid is None or fv.angle_last is None:
        return False
    rule = cfg.shifting
    return (
        sign * fv.lr_div > rule.lr_div_min
        and fv.angle_mid > rule.angle_mid_min
        and fv.angle_last < rule.angle_last_max
    )


def _matches_curving(fv: FeatureVector, cfg: RuleConfig, sign: float) -> bool:
    rule = cfg.curving
    if not fv.length > rule.length_min:
        return False
    lateral = sign * fv.lr_div
    if fv.length <= rule.short_length_max:
        if not lateral >= rule.lr_div_scale_short * fv.length:
            return False
    elif not lateral >= rule.lr_div_scale_long * fv.length:
        return False
    if fv.circle_center_x_fh is None or fv.circle_center_x_lh is None:
        return False
    if not (sign * fv.circle_center_x_fh > 0.0 and sign * fv.circle_center_x_lh > 0.0):
        return False
    return fv.closest_interval > rule.closest_interval_min


def _matches_starting(fv: FeatureVector, cfg: RuleConfig) -> bool:
    rule = cfg.starting
    return (
        rule.length_min < fv.length < rule.length_max
        and fv.closest_interval < rule.closest_interval_max
        and fv.interval_1_over_4 is not None
        and fv.interval_1_over_4 < rule.interval_1_over_4_max
        and fv.interval_delta > rule.interval_delta_min
    )


def _matches_stopping(fv: FeatureVector, cfg: RuleConfig) -> bool:
    rule = cfg.stopping
    return (
        fv.length > rule.length_min
        and fv.furthest_interval < rule.furthest_interval_max
        and fv.interval_3_over_4 is not None
        and fv.interval_3_over_4 < rule.interval_3_over_4_max
        and fv.closest_interval > rule.closest_interval_min
        and fv.closest_interval - fv.furthest_interval > rule.interval_drop_min
    )


def _matches_accelerating(fv: FeatureVector, cfg: RuleConfig) -> bool:
    rule = cfg.accelerating
    if fv.acceleration is None or not _straight_enough(fv, cfg.straightness_bands):
        return False
    if not any(
        band.covers(fv.length) and fv.acceleration > band.threshold
        for band in rule.accel_bands
    ):
        return False
    return fv.closest_interval > rule.closest_interval_min


def _matches_decelerating(fv: FeatureVector, cfg: RuleConfig) -> bool:
    rule = cfg.decelerating
    if fv.acceleration is None or not _straight_enough(fv, cfg.straightness_bands):
        return False
    if not any(
        band.covers(fv.length) and fv.acceleration < band.threshold
        for band in rule.accel_bands
    ):
        return False
    if not any(
        band.covers(fv.length) and fv.interval_delta < band.threshold
        for band in rule.delta_bands
    ):
        return False
    return fv.furthest_interval > rule.furthest_interval_min


def _matches_straight(fv: FeatureVector, cfg: RuleConfig, rule: StraightRule) -> bool:
    if rule.length_max is not None:
        if not rule.length_min < fv.length < rule.length_max:
            return False
    elif not fv.length > rule.length_min:
        return False
    if not _straight_enough(fv, cfg.straightness_bands):
        return False
    return abs(fv.interval_delta) <= rule.interval_delta_scale * fv.length


def evaluate_rule(label: ActionLabel, fv: FeatureVector, cfg: Optional[RuleConfig] = None) -> bool:
    """Evaluate one rule's full conjunction against a feature vector."""
    cfg = cfg or default_rule_config()
    if label is ActionLabel.SHIFTING_TOWARDS_RIGHT:
        return _matches_shifting(fv, cfg, 1.0)
    if label is ActionLabel.SHIFTING_TOWARDS_LEFT:
        return _matches_shifting(fv, cfg, -1.0)
    if label is ActionLabel.CURVING_TO_RIGHT:
        return _matches_curving(fv, cfg, 1.0)
    if label is ActionLabel.CURVING_TO_LEFT:
        return _matches_curving(fv, cfg, -1.0)
    if label is ActionLabel.STARTING:
        return _matches_starting(fv, cfg)
    if label is ActionLabel.STOPPING:
        return _matches_stopping(fv, cfg)
    if label is ActionLabel.STOPPED:
        return fv.length < cfg.stopped_length_max
    if label is ActionLabel.ACCELERATING:
        return _matches_accelerating(fv, cfg)
    if label is ActionLabel.DECELERATING:
        return _matches_decelerating(fv, cfg)
    if label is ActionLabel.STRAIGHT_CONST_LS:
        return _matches_straight(fv, cfg, cfg.straight_ls)
    if label is ActionLabel.STRAIGHT_CONST_HS:
        return _matches_straight(fv, cfg, cfg.straight_hs)
    raise ParameterError(f"{label} is not a rule in the cascade")


def label_features(fv: FeatureVector, cfg: Optional[RuleConfig] = None) -> ActionLabel:
    """Run the cascade over a precomputed feature vector."""
    cfg = cfg or default_rule_config()
    for label in cfg.cascade:
        if evaluate_rule(label, fv, cfg):
            return label
    return ActionLabel.UNMATCHED


def label_trajectory(traj: Trajectory, cfg: Optional[RuleConfig] = None) -> ActionLabel:
    """Label an ego-frame trajectory with its high-level action class."""
    return label_features(compute_features(traj), cfg)
