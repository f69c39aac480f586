"""Command-line interface.

Subcommands: ``label``, ``build-bench``, ``oracle``, ``eval`` and
``codec pack|unpack|inspect``. Exit codes: 0 on success, 2 on validation
failure, 3 when an evaluation has zero usable coverage.
"""

from __future__ import annotations

import argparse
import hashlib
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import (
    BenchmarkSet,
    assemble_benchmark,
    build_contexts,
    BuildConfig,
    counts_csv_lines,
    default_template_library,
    load_template_library,
    read_exclusions,
    read_manifest,
    write_manifest,
)
from .codec import (
    inspect_summary,
    read_binary,
    read_debug_jsonl,
    write_binary,
    write_debug_jsonl,
)
from .errors import ActBenchError, CoverageError, SchemaError
from .harness import (
    OracleConfig,
    emit_report,
    ingest_rollouts,
    oracle_rollout,
    run_eval,
    write_rollouts,
)
from .jsonl import canonical_dumps, read_trajectories
from .labeler import default_rule_config, label_trajectory, load_rule_config


def _sha256_file(path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for block in iter(lambda: handle.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


def _rule_config(args):
    if getattr(args, "rules", None):
        return load_rule_config(args.rules)
    return default_rule_config()


def _cmd_label(args) -> int:
    cfg = _rule_config(args)
    failures = 0
    lines = []
    for record_id, traj in read_trajectories(args.input):
        try:
            label = label_trajectory(traj, cfg)
        except ActBenchError as exc:
            print(f"actbench label: {record_id!r}: {exc}", file=sys.stderr)
            failures += 1
            continue
        lines.append(canonical_dumps({"id": record_id, "label": label.value}))
    Path(args.output).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    if failures:
        print(f"actbench label: {failures} record(s) failed", file=sys.stderr)
        return 2
    return 0


def _cmd_build_bench(args) -> int:
    rule_cfg = _rule_config(args)
    if args.templates:
        tpl_cfg, templates = load_template_library(args.templates, rule_cfg)
    else:
        tpl_cfg, templates = default_template_library(rule_cfg if args.rules else None)
    cfg = BuildConfig(
        window=args.window,
        stride=args.stride,
        context_len=args.context_len,
        speed_threshold_kmh=args.speed_threshold,
        horizon_s=tpl_cfg.horizon_s,
        anchor_fps=tpl_cfg.anchor_fps,
        schedule_dataset=tpl_cfg.schedule_dataset,
        schedule_points=tpl_cfg.schedule_points,
        template_fps=tpl_cfg.template_fps,
        template_duration_s=tpl_cfg.template_duration_s,
    )
    scenes = read_trajectories(args.scenes)
    contexts = build_contexts(scenes, cfg)
    exclusions = read_exclusions(args.exclude_file) if args.exclude_file else ()
    bench: BenchmarkSet = assemble_benchmark(
        contexts, templates, exclusions, cfg.speed_threshold_kmh
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out / "manifest.jsonl", bench)
    (out / "counts.csv").write_text(
        "\n".join(counts_csv_lines(bench.counts)) + "\n", encoding="utf-8"
    )
    print(f"{len(bench.pairs)} pairs -> {out / 'manifest.jsonl'}")
    return 0


def _cmd_oracle(args) -> int:
    manifest = read_manifest(args.manifest)
    cfg = OracleConfig(noise_sigma=args.sigma, rng_seed=args.seed, drop_rate=args.drop_rate)
    records = [oracle_rollout(pair, cfg) for pair in manifest]
    write_rollouts(args.out, records)
    print(f"{len(records)} oracle rollouts -> {args.out}")
    return 0


def _cmd_eval(args) -> int:
    rule_cfg = _rule_config(args)
    manifest = read_manifest(args.manifest)
    ingest = ingest_rollouts(args.rollouts, manifest)
    for issue in ingest.diagnostics:
        print(f"actbench eval: {issue}", file=sys.stderr)
    for sample_id in ingest.unresolved:
        print(f"actbench eval: unresolved sample_id {sample_id!r}", file=sys.stderr)
    options = {
        "manifest": str(args.manifest),
        "rollouts": str(args.rollouts),
        "formats": args.formats,
        "rules": str(args.rules) if args.rules else "default",
    }
    metadata = {
        "tool": "actbench",
        "tool_version": __version__,
        "python_version": platform.python_version(),
        "numpy_version": np.__version__,
        "options": options,
        "config_hash": hashlib.sha256(canonical_dumps(options).encode()).hexdigest(),
        "inputs": {
            "manifest_sha256": _sha256_file(args.manifest),
            "rollouts_sha256": _sha256_file(args.rollouts),
        },
    }
    bundle = run_eval(manifest, list(ingest.records), rule_cfg, metadata)
    written = emit_report(bundle, args.out, args.formats.split(","))
    for path in written:
        print(path)
    print(f"IEC {bundle.iec:.4f} over {len(bundle.coverage.evaluated)} samples "
          f"({len(bundle.coverage.gaps)} gaps, {len(bundle.coverage.rejects)} rejects)")
    return 0


def _read_sequence(path):
    with Path(path).open("rb") as handle:
        magic = handle.read(4)
    if magic == b"ABIS":
        return read_binary(path)
    return read_debug_jsonl(path)


def _cmd_codec(args) -> int:
    if args.codec_command == "pack":
        seq = read_debug_jsonl(args.input)
        write_binary(seq, args.output)
        print(f"packed {seq.frames_packed} frame-steps -> {args.output}")
        return 0
    if args.codec_command == "unpack":
        seq = read_binary(args.input)
        write_debug_jsonl(seq, args.output)
        print(f"unpacked {seq.frames_packed} frame-steps -> {args.output}")
        return 0
    seq = _read_sequence(args.input)
    summary = inspect_summary(seq)
    for key in sorted(summary):
        print(f"{key}: {summary[key]}")
    step = seq.config.step_elements
    print("position ids (first frame-step):")
    print(f"  temporal: {seq.temporal_ids[:step].tolist()}")
    print(f"  spatial:  {seq.spatial_ids[:step].tolist()}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="actbench",
        description="Action-fidelity benchmark toolkit for driving world models.",
    )
    parser.add_argument("--version", action="version", version=f"actbench {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_label = sub.add_parser("label", help="label ego trajectories with high-level actions")
    p_label.add_argument("--input", required=True, help="trajectory JSONL (ego frame)")
    p_label.add_argument("--output", required=True, help="output JSONL of {id, label}")
    p_label.add_argument("--rules", help="TOML rule thresholds (default: shipped)")
    p_label.set_defaults(func=_cmd_label)

    p_build = sub.add_parser("build-bench", help="assemble a benchmark manifest from scenes")
    p_build.add_argument("--scenes", required=True, help="scene trajectory JSONL (global frame)")
    p_build.add_argument("--out", required=True, help="output directory")
    p_build.add_argument("--window", type=int, default=BuildConfig.window)
    p_build.add_argument("--stride", type=int, default=BuildConfig.stride)
    p_build.add_argument("--context-len", type=int, default=BuildConfig.context_len)
    p_build.add_argument("--speed-threshold", type=float, default=BuildConfig.speed_threshold_kmh)
    p_build.add_argument("--exclude-file", help="newline-delimited pair ids to drop")
    p_build.add_argument("--templates", help="template parameter TOML (default: shipped 36)")
    p_build.add_argument("--rules", help="TOML rule thresholds (default: shipped)")
    p_build.set_defaults(func=_cmd_build_bench)

    p_oracle = sub.add_parser("oracle", help="produce rollouts from the kinematic oracle")
    p_oracle.add_argument("--manifest", required=True)
    p_oracle.add_argument("--out", required=True, help="output rollout JSONL")
    p_oracle.add_argument("--sigma", type=float, default=0.0, help="per-point noise in meters")
    p_oracle.add_argument("--seed", type=int, default=0)
    p_oracle.add_argument("--drop-rate", type=float, default=0.0,
                          help="probability of emitting a wrong category")
    p_oracle.set_defaults(func=_cmd_oracle)

    p_eval = sub.add_parser("eval", help="evaluate rollouts against a manifest")
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--rollouts", required=True)
    p_eval.add_argument("--out", required=True, help="output directory for reports")
    p_eval.add_argument("--formats", default="json,csv", help="comma list of json,csv")
    p_eval.add_argument("--rules", help="TOML rule thresholds (default: shipped)")
    p_eval.set_defaults(func=_cmd_eval)

    p_codec = sub.add_parser("codec", help="pack, unpack or inspect interleaved sequences")
    codec_sub = p_codec.add_subparsers(dest="codec_command", required=True)
    p_pack = codec_sub.add_parser("pack", help="debug JSONL -> framed binary")
    p_pack.add_argument("--input", required=True)
    p_pack.add_argument("--output", required=True)
    p_pack.set_defaults(func=_cmd_codec)
    p_unpack = codec_sub.add_parser("unpack", help="framed binary -> debug JSONL")
    p_unpack.add_argument("--input", required=True)
    p_unpack.add_argument("--output", required=True)
    p_unpack.set_defaults(func=_cmd_codec)
    p_inspect = codec_sub.add_parser("inspect", help="print lengths, masks and position ids")
    p_inspect.add_argument("--input", required=True)
    p_inspect.set_defaults(func=_cmd_codec)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CoverageError as exc:
        print(f"actbench: coverage error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"actbench: i/o error: {exc}", file=sys.stderr)
        return 2
    except ActBenchError as exc:
        kind = "schema error" if isinstance(exc, SchemaError) else "error"
        print(f"actbench: {kind}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
