"""Interleaved image-token / action-instruction sequence codec.

A chunk of T frames is laid out as (c1, a1, c2, a2, ..., cT, aT): each
frame-step contributes its N image tokens in raster-scan order followed by
the L points of its action instruction. The codec carries the loss mask
(true only on image tokens) and the temporal/spatial positional index
decomposition, and packs/unpacks the layout without any model attached.

Action instructions are L x 3 matrices of (x, y, t) rows ordered by
ascending time offset; the padding instruction is the all -1.0 matrix and
stands for "no trajectory available".
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
import numpy as np

from .errors import ParameterError, SchemaError, StructureError

PADDING_VALUE = -1.0

_MAGIC = b"ABIS"
_VERSION = 1
_HEADER = struct.Struct("<4sHIIIIIIIII")


@dataclass(frozen=True)
class CodecConfig:
    """Shape of one packed chunk.

    ``tokens_per_frame`` must equal (height/downscale) * (width/downscale).
    """

    frames_per_chunk: int = 25
    tokens_per_frame: int = 576
    action_points: int = 6
    vocab_size: int = 262144
    height: int = 288
    width: int = 512
    downscale: int = 16
    embed_dim: int = 2048

    def __post_init__(self) -> None:
        for name in ("frames_per_chunk", "tokens_per_frame", "vocab_size",
                     "height", "width", "downscale", "embed_dim"):
            if int(getattr(self, name)) < 1:
                raise ParameterError(f"codec config {name} must be >= 1")
        if self.action_points < 0:
            raise ParameterError("codec config action_points must be >= 0")
        if self.height % self.downscale or self.width % self.downscale:
            raise ParameterError("image dims must be divisible by the downscale factor")
        grid = (self.height // self.downscale) * (self.width // self.downscale)
        if self.tokens_per_frame != grid:
            raise ParameterError(
                f"tokens_per_frame must be {grid} for "
                f"{self.height}x{self.width} at downscale {self.downscale}"
            )

    @property
    def step_elements(self) -> int:
        return self.tokens_per_frame + self.action_points

    def sequence_length(self, frames_packed: int) -> int:
        return self.step_elements * frames_packed


DEFAULT_CONFIG = CodecConfig()


def padding_action(cfg: CodecConfig) -> np.ndarray:
    """The all -1.0 instruction marking 'no trajectory available'."""
    return np.full((cfg.action_points, 3), PADDING_VALUE, dtype=np.float64)


def is_padding_action(action: np.ndarray) -> bool:
    return bool(np.all(np.asarray(action, dtype=np.float64) == PADDING_VALUE))


def validate_action(action, cfg: CodecConfig) -> np.ndarray:
    """Check one instruction matrix: shape (L, 3), finite, time-ordered or padding."""
    arr = np.asarray(action, dtype=np.float64)
    if arr.shape != (cfg.action_points, 3):
        raise SchemaError(
            f"action instruction must have shape ({cfg.action_points}, 3), got {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise SchemaError("action instruction must be finite")
    if cfg.action_points > 1 and not is_padding_action(arr):
        offsets = arr[:, 2]
        if not np.all(np.diff(offsets) > 0.0):
            raise SchemaError("action instruction rows must have ascending time offsets")
    return arr


def tl_schedule(dataset: str, length: int) -> list[float]:
    """Future time offsets (seconds) of the instruction points for a dataset."""
    if length < 1:
        raise ParameterError("schedule length must be >= 1")
    if dataset == "covla":
        return [0.45 + 0.5 * (l - 1) for l in range(1, length + 1)]
    if dataset == "nuscenes":
        return [0.5 * l for l in range(1, length + 1)]
    raise ParameterError(f"unknown schedule dataset {dataset!r} (expected covla or nuscenes)")


def loss_mask(cfg: CodecConfig, frames_packed: int) -> np.ndarray:
    """Boolean mask over the flat sequence, true only at image-token elements."""
    if frames_packed < 1:
        raise ParameterError("frames_packed must be >= 1")
    step = np.concatenate([
        np.ones(cfg.tokens_per_frame, dtype=bool),
        np.zeros(cfg.action_points, dtype=bool),
    ])
    return np.tile(step, frames_packed)


def position_indices(cfg: CodecConfig, frames_packed: int) -> tuple[np.ndarray, np.ndarray]:
    """Temporal/spatial positional ids for the flat sequence.

    Temporal ids are constant within a frame-step; spatial ids run over
    [0, N+L) and repeat each step, so the pair uniquely addresses an element.
    """
    if frames_packed < 1:
        raise ParameterError("frames_packed must be >= 1")
    temporal = np.repeat(np.arange(frames_packed, dtype=np.int64), cfg.step_elements)
    spatial = np.tile(np.arange(cfg.step_elements, dtype=np.int64), frames_packed)
    return temporal, spatial


@dataclass(frozen=True)
class InterleavedSequence:
    """A packed chunk plus its mask and positional index decomposition."""

    config: CodecConfig
    tokens: np.ndarray   # (frames_packed, tokens_per_frame) int64
    actions: np.ndarray  # (frames_packed, action_points, 3) float64
    loss_mask: np.ndarray
    temporal_ids: np.ndarray
    spatial_ids: np.ndarray

    def __post_init__(self) -> None:
        cfg = self.config
        frames = self.frames_packed
        if frames < 1:
            raise StructureError("a packed sequence needs at least one frame-step")
        if self.tokens.shape != (frames, cfg.tokens_per_frame):
            raise StructureError(f"token block has shape {self.tokens.shape}")
        if self.actions.shape != (frames, cfg.action_points, 3):
            raise StructureError(f"action block has shape {self.actions.shape}")
        n = cfg.sequence_length(frames)
        for name in ("loss_mask", "temporal_ids", "spatial_ids"):
            if getattr(self, name).shape != (n,):
                raise StructureError(f"{name} must have {n} entries")
        expected_mask = loss_mask(cfg, frames)
        if not np.array_equal(self.loss_mask, expected_mask):
            raise StructureError("loss mask does not follow the token/action pattern")
        expected_t, expected_s = position_indices(cfg, frames)
        if not np.array_equal(self.temporal_ids, expected_t) or not np.array_equal(
            self.spatial_ids, expected_s
        ):
            raise StructureError("positional ids do not follow the frame-step pattern")

    @property
    def frames_packed(self) -> int:
        return self.tokens.shape[0]

    def __len__(self) -> int:
        return self.config.sequence_length(self.frames_packed)

    def is_token_element(self, index: int) -> bool:
        return index % self.config.step_elements < self.config.tokens_per_frame


def _validate_tokens(frames, cfg: CodecConfig) -> np.ndarray:
    arr = np.asarray(frames)
    if arr.ndim == 3:
        expected = (cfg.height // cfg.downscale, cfg.width // cfg.downscale)
        if arr.shape[1:] != expected:
            raise SchemaError(f"token grids must be {expected} per frame, got {arr.shape[1:]}")
        arr = arr.reshape(arr.shape[0], -1)  # raster-scan (row-major) flatten
    if arr.ndim != 2 or arr.shape[1] != cfg.tokens_per_frame:
        raise SchemaError(
            f"expected (frames, {cfg.tokens_per_frame}) tokens, got shape {arr.shape}"
        )
    if not np.issubdtype(arr.dtype, np.integer):
        raise SchemaError("image tokens must be integers")
    arr = arr.astype(np.int64)
    if arr.size and (arr.min() < 0 or arr.max() >= cfg.vocab_size):
        raise SchemaError(f"image tokens must lie in [0, {cfg.vocab_size})")
    return arr


def pack(frames, actions, cfg: CodecConfig = DEFAULT_CONFIG) -> InterleavedSequence:
    """Interleave token grids and per-frame instructions into one sequence.

    ``frames`` is (T, N) token ids or (T, H', W') grids flattened in
    raster-scan order; ``actions`` is T instruction matrices of shape (L, 3).
    """
    tokens = _validate_tokens(frames, cfg)
    action_list = [validate_action(a, cfg) for a in actions]
    if len(action_list) != tokens.shape[0]:
        raise SchemaError(
            f"frame count {tokens.shape[0]} != action count {len(action_list)}"
        )
    if action_list:
        actions_arr = np.stack(action_list)
    else:
        raise SchemaError("cannot pack an empty chunk")
    frames_packed = tokens.shape[0]
    temporal, spatial = position_indices(cfg, frames_packed)
    return InterleavedSequence(
        config=cfg,
        tokens=tokens,
        actions=actions_arr,
        loss_mask=loss_mask(cfg, frames_packed),
        temporal_ids=temporal,
        spatial_ids=spatial,
    )


def unpack(seq: InterleavedSequence, cfg: CodecConfig = DEFAULT_CONFIG) -> tuple[np.ndarray, np.ndarray]:
    """Recover (frames, actions) from a packed sequence. Inverse of :func:`pack`."""
    if seq.config != cfg:
        raise StructureError("sequence was packed with a different codec config")
    if len(seq) % cfg.step_elements:
        raise StructureError("sequence length is not a multiple of the frame-step size")
    return seq.tokens.copy(), seq.actions.copy()


def extend_for_inference(
    seq: InterleavedSequence,
    new_tokens,
    next_action,
    cfg: CodecConfig = DEFAULT_CONFIG,
) -> InterleavedSequence:
    """Append one predicted frame's tokens followed by the next instruction.

    This mirrors generation: after the N tokens of a new frame are produced,
    the action for the following step (possibly the padding instruction) is
    inserted so the layout invariants hold again.
    """
    if seq.config != cfg:
        raise StructureError("sequence was packed with a different codec config")
    tokens = _validate_tokens(np.asarray(new_tokens)[None, ...], cfg)
    action = validate_action(next_action, cfg)
    return pack(
        np.concatenate([seq.tokens, tokens]),
        np.concatenate([seq.actions, action[None, ...]]),
        cfg,
    )


def write_binary(seq: InterleavedSequence, path) -> None:
    """Serialize to the framed little-endian binary layout (bit-exact).

    Layout: config header, then one payload per frame-step (its N tokens as
    u32 followed by its L x 3 action matrix as f64), mirroring the
    interleaved element order.
    """
    cfg = seq.config
    header = _HEADER.pack(
        _MAGIC, _VERSION,
        cfg.frames_per_chunk, cfg.tokens_per_frame, cfg.action_points,
        cfg.vocab_size, cfg.height, cfg.width, cfg.downscale, cfg.embed_dim,
        seq.frames_packed,
    )
    with Path(path).open("wb") as handle:
        handle.write(header)
        for step in range(seq.frames_packed):
            handle.write(seq.tokens[step].astype("<u4").tobytes())
            handle.write(seq.actions[step].astype("<f8").tobytes())


def read_binary(path) -> InterleavedSequence:
    """Parse the framed binary layout back into a sequence."""
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise StructureError("binary payload is shorter than its header")
    magic, version, *fields = _HEADER.unpack_from(blob)
    if magic != _MAGIC:
        raise StructureError("bad magic; not an interleaved-sequence file")
    if version != _VERSION:
        raise StructureError(f"unsupported format version {version}")
    (frames_per_chunk, tokens_per_frame, action_points, vocab_size,
     height, width, downscale, embed_dim, frames_packed) = fields
    try:
        cfg = CodecConfig(
            frames_per_chunk, tokens_per_frame, action_points, vocab_size,
            height, width, downscale, embed_dim,
        )
    except ParameterError as exc:
        raise StructureError(f"invalid header config: {exc}") from exc
    step_tokens = tokens_per_frame * 4
    step_actions = action_points * 3 * 8
    expected = _HEADER.size + frames_packed * (step_tokens + step_actions)
    if len(blob) != expected:
        raise StructureError(
            f"payload has {len(blob)} bytes, expected {expected} for {frames_packed} frame-steps"
        )
    tokens = np.empty((frames_packed, tokens_per_frame), dtype=np.int64)
    actions = np.empty((frames_packed, action_points, 3), dtype=np.float64)
    offset = _HEADER.size
    for step in range(frames_packed):
        tokens[step] = np.frombuffer(blob, dtype="<u4", count=tokens_per_frame, offset=offset)
        offset += step_tokens
        actions[step] = np.frombuffer(
            blob, dtype="<f8", count=action_points * 3, offset=offset
        ).reshape(action_points, 3)
        offset += step_actions
    try:
        return pack(tokens, actions, cfg)
    except SchemaError as exc:
        raise StructureError(f"invalid payload: {exc}") from exc


def config_to_dict(cfg: CodecConfig) -> dict:
    return {
        "frames_per_chunk": cfg.frames_per_chunk,
        "tokens_per_frame": cfg.tokens_per_frame,
        "action_points": cfg.action_points,
        "vocab_size": cfg.vocab_size,
        "height": cfg.height,
        "width": cfg.width,
        "downscale": cfg.downscale,
        "embed_dim": cfg.embed_dim,
    }


def config_from_dict(obj: dict) -> CodecConfig:
    try:
        return CodecConfig(**{key: int(obj[key]) for key in config_to_dict(DEFAULT_CONFIG)})
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"invalid codec config object: {exc}") from exc


def write_debug_jsonl(seq: InterleavedSequence, path) -> None:
    """Human-inspectable JSONL form: a header line then one line per frame-step."""
    with Path(path).open("w", encoding="utf-8") as handle:
        header = {
            "kind": "header",
            "config": config_to_dict(seq.config),
            "frames_packed": seq.frames_packed,
        }
        handle.write(json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n")
        for step in range(seq.frames_packed):
            record = {
                "kind": "step",
                "index": step,
                "tokens": seq.tokens[step].tolist(),
                "action": seq.actions[step].tolist(),
            }
            handle.write(json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n")


def read_debug_jsonl(path) -> InterleavedSequence:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines:
        raise StructureError(f"{path}: empty debug file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise StructureError(f"{path}:1: invalid JSON: {exc}") from exc
    if header.get("kind") != "header" or "config" not in header:
        raise StructureError(f"{path}:1: first line must be the header record")
    cfg = config_from_dict(header["config"])
    frames_packed = header.get("frames_packed")
    steps = {}
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise StructureError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        if record.get("kind") != "step":
            raise StructureError(f"{path}:{lineno}: expected a step record")
        steps[int(record["index"])] = record
    if sorted(steps) != list(range(len(steps))) or len(steps) != frames_packed:
        raise StructureError(f"{path}: step records are missing or out of order")
    tokens = np.array([steps[i]["tokens"] for i in range(len(steps))], dtype=np.int64)
    actions = np.array([steps[i]["action"] for i in range(len(steps))], dtype=np.float64)
    try:
        return pack(tokens, actions, cfg)
    except SchemaError as exc:
        raise StructureError(f"{path}: invalid payload: {exc}") from exc


def inspect_summary(seq: InterleavedSequence) -> dict:
    """Audit numbers for the CLI: lengths, popcounts, and id ranges."""
    return {
        "frames_packed": seq.frames_packed,
        "tokens_per_frame": seq.config.tokens_per_frame,
        "action_points": seq.config.action_points,
        "elements": len(seq),
        "loss_mask_popcount": int(seq.loss_mask.sum()),
        "temporal_id_min": int(seq.temporal_ids.min()),
        "temporal_id_max": int(seq.temporal_ids.max()),
        "spatial_id_min": int(seq.spatial_ids.min()),
        "spatial_id_max": int(seq.spatial_ids.max()),
        "padding_steps": [
            step for step in range(seq.frames_packed)
            if seq.config.action_points and is_padding_action(seq.actions[step])
        ],
    }
