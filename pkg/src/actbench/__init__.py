"""actbench: action-fidelity evaluation toolkit for driving world models.

Non-neural machinery only: trajectory geometry and features, the rule-based
high-level action labeler, IEC/ADE/FDE metrics, benchmark dataset assembly
with per-frame corrected instruction trajectories, the interleaved
token/action sequence codec, and a self-validating evaluation harness.
"""

__version__ = "0.1.0"

from .errors import (
    ActBenchError,
    AlignmentError,
    CoverageError,
    FrameError,
    InsufficientPointsError,
    IntegrityError,
    InvalidInputError,
    ParameterError,
    SchemaError,
    StructureError,
    TimeRangeError,
)
from .geometry import (
    EGO_FRAME,
    GLOBAL_FRAME,
    CircleFit,
    FeatureVector,
    Pose2D,
    Trajectory,
    arc_length,
    compute_features,
    fit_circle,
    initial_speed_kmh,
    reanchor,
    resample_by_time,
    to_global_frame,
    to_local_frame,
    wrap_angle,
)
from .labeler import (
    CATEGORY_ORDER,
    ActionLabel,
    BenchCategory,
    RuleConfig,
    default_rule_config,
    evaluate_rule,
    label_features,
    label_trajectory,
    load_rule_config,
    to_benchmark_category,
)
from .metrics import (
    CategoryReport,
    CategoryStats,
    ConfusionMatrix,
    LabelPair,
    ade,
    aggregate_by_category,
    confusion_matrix,
    fde,
    iec,
)
from .bench import (
    BenchmarkPair,
    BenchmarkSet,
    BuildConfig,
    ContextSegment,
    TrajectoryTemplate,
    assemble_benchmark,
    build_contexts,
    default_template_library,
    generate_template,
    load_template_library,
    per_frame_instructions,
    read_manifest,
    slice_windows,
    speed_filter,
    window_starts,
    write_manifest,
)
from .codec import (
    DEFAULT_CONFIG,
    CodecConfig,
    InterleavedSequence,
    extend_for_inference,
    is_padding_action,
    loss_mask,
    pack,
    padding_action,
    position_indices,
    tl_schedule,
    unpack,
)
from .harness import (
    IngestReport,
    OracleConfig,
    ReportBundle,
    RolloutRecord,
    emit_report,
    ingest_rollouts,
    oracle_rollout,
    run_eval,
    write_rollouts,
)
