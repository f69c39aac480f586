import json

import pytest

from actbench.cli import main
from actbench.bench import read_manifest
from actbench.codec import write_debug_jsonl
from actbench.jsonl import canonical_dumps, trajectory_to_dict, write_trajectories
from helpers import straight_fixture, straight_scene, toy_codec_chunk


@pytest.fixture()
def scenes_file(tmp_path):
    scenes = [
        straight_scene("slow", 1.1, n=48),
        straight_scene("urban", 15.0 / 3.6, n=48),
        straight_scene("fast", 9.5, n=48),
    ]
    path = tmp_path / "scenes.jsonl"
    write_trajectories(path, scenes)
    return path


def test_label_command(tmp_path):
    inp = tmp_path / "trajs.jsonl"
    out = tmp_path / "labels.jsonl"
    write_trajectories(inp, [("a", straight_fixture(0.8)), ("b", straight_fixture(0.3))])
    assert main(["label", "--input", str(inp), "--output", str(out)]) == 0
    got = [json.loads(line) for line in out.read_text().splitlines()]
    assert got == [
        {"id": "a", "label": "straight_const_hs"},
        {"id": "b", "label": "straight_const_ls"},
    ]


def test_label_command_reports_global_frame_records(tmp_path, capsys):
    inp = tmp_path / "trajs.jsonl"
    out = tmp_path / "labels.jsonl"
    _, scene = straight_scene("g", 5.0, n=10)
    write_trajectories(inp, [("good", straight_fixture(0.8)), ("g", scene)])
    assert main(["label", "--input", str(inp), "--output", str(out)]) == 2
    assert "ego frame" in capsys.readouterr().err
    assert len(out.read_text().splitlines()) == 1


def test_full_pipeline(tmp_path, scenes_file, capsys):
    bench_dir = tmp_path / "bench"
    code = main([
        "build-bench", "--scenes", str(scenes_file), "--out", str(bench_dir),
        "--stride", "4",
    ])
    assert code == 0
    manifest_path = bench_dir / "manifest.jsonl"
    counts_path = bench_dir / "counts.csv"
    assert manifest_path.exists() and counts_path.exists()
    pairs = read_manifest(manifest_path)
    assert pairs, "speed filter should keep at least some pairs"
    categories = {p.instructed_category for p in pairs}
    assert len(categories) >= 5

    rollouts_path = tmp_path / "rollouts.jsonl"
    assert main([
        "oracle", "--manifest", str(manifest_path), "--out", str(rollouts_path),
        "--sigma", "0", "--seed", "7",
    ]) == 0

    report_dir = tmp_path / "report"
    assert main([
        "eval", "--manifest", str(manifest_path), "--rollouts", str(rollouts_path),
        "--out", str(report_dir),
    ]) == 0
    for name in ("report.json", "report.csv", "confusion.csv", "scatter.csv"):
        assert (report_dir / name).exists()
    report = json.loads((report_dir / "report.json").read_text())
    assert report["iec"] == 1.0
    assert report["coverage"]["gaps"] == []
    err_and_out = capsys.readouterr()
    assert "IEC 1.0000" in err_and_out.out


def test_eval_exit_code_three_on_zero_coverage(tmp_path, scenes_file):
    bench_dir = tmp_path / "bench"
    main(["build-bench", "--scenes", str(scenes_file), "--out", str(bench_dir), "--stride", "8"])
    manifest_path = bench_dir / "manifest.jsonl"
    pairs = read_manifest(manifest_path)
    stray = {
        "sample_id": "not-in-manifest",
        "producer": "x",
        "estimated_trajectory": trajectory_to_dict(pairs[0].template.per_frame[0]),
    }
    rollouts_path = tmp_path / "stray.jsonl"
    rollouts_path.write_text(canonical_dumps(stray) + "\n", encoding="utf-8")
    code = main([
        "eval", "--manifest", str(manifest_path), "--rollouts", str(rollouts_path),
        "--out", str(tmp_path / "rep"),
    ])
    assert code == 3


def test_eval_exit_code_two_on_invalid_rollouts(tmp_path, scenes_file):
    bench_dir = tmp_path / "bench"
    main(["build-bench", "--scenes", str(scenes_file), "--out", str(bench_dir), "--stride", "8"])
    rollouts_path = tmp_path / "bad.jsonl"
    rollouts_path.write_text('{"nope": 1}\n', encoding="utf-8")
    code = main([
        "eval", "--manifest", str(bench_dir / "manifest.jsonl"),
        "--rollouts", str(rollouts_path), "--out", str(tmp_path / "rep"),
    ])
    assert code == 2


def test_exclude_file_drops_pairs(tmp_path, scenes_file):
    bench_dir = tmp_path / "bench"
    main(["build-bench", "--scenes", str(scenes_file), "--out", str(bench_dir), "--stride", "8"])
    pairs = read_manifest(bench_dir / "manifest.jsonl")
    excluded_id = pairs[0].sample_id
    exclude = tmp_path / "exclude.txt"
    exclude.write_text(excluded_id + "\n", encoding="utf-8")
    bench2 = tmp_path / "bench2"
    main([
        "build-bench", "--scenes", str(scenes_file), "--out", str(bench2),
        "--stride", "8", "--exclude-file", str(exclude),
    ])
    remaining = {p.sample_id for p in read_manifest(bench2 / "manifest.jsonl")}
    assert excluded_id not in remaining
    assert len(remaining) == len(pairs) - 1


def test_build_bench_revalidates_templates_under_custom_rules(tmp_path, scenes_file, capsys):
    from importlib import resources

    # Raising the high-speed length floor above any template length makes the
    # shipped straight templates unlabelable, which must fail the build.
    text = resources.files("actbench").joinpath("data/rules.toml").read_text(encoding="utf-8")
    rules = tmp_path / "rules.toml"
    rules.write_text(text.replace("length_min = 28.0", "length_min = 100.0"), encoding="utf-8")
    code = main([
        "build-bench", "--scenes", str(scenes_file), "--out", str(tmp_path / "bench"),
        "--rules", str(rules),
    ])
    assert code == 2
    assert "labels as" in capsys.readouterr().err


def test_version_flag():
    with pytest.raises(SystemExit) as excinfo:
        main(["--version"])
    assert excinfo.value.code == 0


def test_codec_commands(tmp_path, capsys):
    seq = toy_codec_chunk()
    debug_path = tmp_path / "chunk.jsonl"
    write_debug_jsonl(seq, debug_path)
    bin_path = tmp_path / "chunk.bin"
    assert main(["codec", "pack", "--input", str(debug_path), "--output", str(bin_path)]) == 0
    out_path = tmp_path / "again.jsonl"
    assert main(["codec", "unpack", "--input", str(bin_path), "--output", str(out_path)]) == 0
    assert out_path.read_bytes() == debug_path.read_bytes()
    assert main(["codec", "inspect", "--input", str(bin_path)]) == 0
    printed = capsys.readouterr().out
    assert "loss_mask_popcount" in printed
    assert "spatial" in printed


def test_codec_rejects_garbage_input(tmp_path):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"ABISxxxx")
    assert main(["codec", "inspect", "--input", str(bad)]) == 2


def test_missing_file_is_exit_two(tmp_path):
    assert main(["label", "--input", str(tmp_path / "none.jsonl"), "--output", str(tmp_path / "o")]) == 2
