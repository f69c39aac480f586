import json

import numpy as np
import pytest

from actbench.bench import BenchmarkPair, ContextSegment, default_template_library
from actbench.errors import CoverageError, SchemaError
from actbench.geometry import resample_by_time
from actbench.harness import (
    OracleConfig,
    bundle_to_dict,
    emit_report,
    ingest_rollouts,
    oracle_rollout,
    run_eval,
    write_rollouts,
)
from actbench.jsonl import canonical_dumps, trajectory_to_dict
from actbench.labeler import BenchCategory
from helpers import traj_from_xy


def manifest_for(templates):
    pairs = []
    for i, template in enumerate(templates):
        ctx_traj = resample_by_time(template.path, [k * 0.1 for k in range(10)])
        ctx = ContextSegment(f"ctx:{i:05d}", "synthetic", 0, ctx_traj)
        pairs.append(
            BenchmarkPair(
                sample_id=f"ctx:{i:05d}__{template.template_id}",
                context=ctx,
                template=template,
                instructed_category=template.category,
            )
        )
    return pairs


@pytest.fixture(scope="module")
def small_manifest():
    _, templates = default_template_library()
    # One template from each of four different categories keeps tests fast.
    chosen = [templates[0], templates[9], templates[18], templates[27]]
    return manifest_for(chosen)


class TestIngest:
    def test_well_formed_file(self, tmp_path, small_manifest):
        records = [oracle_rollout(p, OracleConfig()) for p in small_manifest[:3]]
        path = tmp_path / "rollouts.jsonl"
        write_rollouts(path, records)
        report = ingest_rollouts(path, small_manifest)
        assert len(report.records) == 3
        assert report.diagnostics == ()
        assert report.unresolved == ()

    def test_missing_category_is_accepted(self, tmp_path, small_manifest):
        pair = small_manifest[0]
        obj = {
            "sample_id": pair.sample_id,
            "producer": "external",
            "estimated_trajectory": trajectory_to_dict(pair.template.per_frame[0]),
        }
        path = tmp_path / "rollouts.jsonl"
        path.write_text(canonical_dumps(obj) + "\n", encoding="utf-8")
        report = ingest_rollouts(path, small_manifest)
        assert report.records[0].estimated_category is None

    def test_unknown_sample_id_is_reported_not_dropped(self, tmp_path, small_manifest):
        pair = small_manifest[0]
        obj = {
            "sample_id": "nonexistent",
            "producer": "external",
            "estimated_trajectory": trajectory_to_dict(pair.template.per_frame[0]),
        }
        path = tmp_path / "rollouts.jsonl"
        path.write_text(canonical_dumps(obj) + "\n", encoding="utf-8")
        report = ingest_rollouts(path, small_manifest)
        assert report.unresolved == ("nonexistent",)
        assert len(report.records) == 1

    def test_per_line_diagnostics_carry_line_numbers(self, tmp_path, small_manifest):
        pair = small_manifest[0]
        good = canonical_dumps(
            {
                "sample_id": pair.sample_id,
                "producer": "x",
                "estimated_trajectory": trajectory_to_dict(pair.template.per_frame[0]),
            }
        )
        bad = json.dumps({"producer": "x"})
        path = tmp_path / "rollouts.jsonl"
        path.write_text(good + "\n" + bad + "\n", encoding="utf-8")
        report = ingest_rollouts(path, small_manifest)
        assert len(report.records) == 1
        assert len(report.diagnostics) == 1
        assert ":2:" in report.diagnostics[0]

    def test_all_invalid_file_is_fatal(self, tmp_path):
        path = tmp_path / "rollouts.jsonl"
        path.write_text('{"sample_id": 3}\n{"nope": true}\n', encoding="utf-8")
        with pytest.raises(SchemaError):
            ingest_rollouts(path)

    def test_conditioning_field_round_trips_into_metadata(self, tmp_path, small_manifest):
        pair = small_manifest[0]
        obj = {
            "sample_id": pair.sample_id,
            "producer": "frame-conditioned-model",
            "conditioning": "per-frame",
            "estimated_trajectory": trajectory_to_dict(pair.template.per_frame[0]),
        }
        path = tmp_path / "rollouts.jsonl"
        path.write_text(canonical_dumps(obj) + "\n", encoding="utf-8")
        report = ingest_rollouts(path, small_manifest)
        assert report.records[0].conditioning == "per-frame"
        bundle = run_eval([pair], list(report.records))
        assert bundle.metadata["conditioning_by_producer"] == {
            "frame-conditioned-model": "per-frame"
        }

    def test_global_frame_rollout_rejected_per_line(self, tmp_path, small_manifest):
        pair = small_manifest[0]
        traj = trajectory_to_dict(pair.template.per_frame[0])
        traj["frame"] = "global"
        good = canonical_dumps(
            {
                "sample_id": pair.sample_id,
                "producer": "x",
                "estimated_trajectory": trajectory_to_dict(pair.template.per_frame[0]),
            }
        )
        bad = canonical_dumps(
            {"sample_id": "other", "producer": "x", "estimated_trajectory": traj}
        )
        path = tmp_path / "rollouts.jsonl"
        path.write_text(good + "\n" + bad + "\n", encoding="utf-8")
        report = ingest_rollouts(path, small_manifest)
        assert len(report.records) == 1
        assert "ego frame" in report.diagnostics[0]


class TestOracle:
    def test_zero_sigma_reproduces_instruction_exactly(self, small_manifest):
        pair = small_manifest[0]
        record = oracle_rollout(pair, OracleConfig(noise_sigma=0.0))
        assert record.estimated_trajectory.points == pair.template.per_frame[0].points
        assert record.producer == "oracle"

    def test_same_seed_twice_is_bit_identical(self, small_manifest):
        cfg = OracleConfig(noise_sigma=0.4, rng_seed=99, drop_rate=0.5)
        for pair in small_manifest:
            a = oracle_rollout(pair, cfg)
            b = oracle_rollout(pair, cfg)
            assert a.estimated_trajectory.points == b.estimated_trajectory.points
            assert a.estimated_category is b.estimated_category

    def test_different_pairs_get_different_noise(self, small_manifest):
        cfg = OracleConfig(noise_sigma=0.4, rng_seed=1)
        a = oracle_rollout(small_manifest[0], cfg)
        b = oracle_rollout(small_manifest[1], cfg)
        da = np.array([p.x for p in a.estimated_trajectory.points]) - np.array(
            [p.x for p in small_manifest[0].template.per_frame[0].points]
        )
        db = np.array([p.x for p in b.estimated_trajectory.points]) - np.array(
            [p.x for p in small_manifest[1].template.per_frame[0].points]
        )
        assert not np.allclose(da, db)

    def test_drop_rate_one_forces_wrong_category(self, small_manifest):
        cfg = OracleConfig(noise_sigma=0.0, drop_rate=1.0)
        for pair in small_manifest:
            record = oracle_rollout(pair, cfg)
            assert record.estimated_category is not pair.instructed_category

    def test_invalid_config_rejected(self):
        from actbench.errors import InvalidInputError

        with pytest.raises(InvalidInputError):
            OracleConfig(noise_sigma=-0.1)
        with pytest.raises(InvalidInputError):
            OracleConfig(drop_rate=1.5)


class TestRunEval:
    def test_zero_noise_closure(self, small_manifest):
        rollouts = [oracle_rollout(p, OracleConfig()) for p in small_manifest]
        bundle = run_eval(small_manifest, rollouts)
        assert bundle.iec == 1.0
        assert bundle.category_report.overall.mean_ade < 1e-6
        assert bundle.category_report.overall.mean_fde < 1e-6
        assert len(bundle.per_sample) == len(small_manifest)

    def test_one_wrong_category_gives_half(self, small_manifest):
        pairs = small_manifest[:2]
        rollouts = [oracle_rollout(p, OracleConfig()) for p in pairs]
        wrong = BenchCategory.STARTING if rollouts[0].estimated_category is not BenchCategory.STARTING else BenchCategory.STOPPING
        import dataclasses

        rollouts[0] = dataclasses.replace(rollouts[0], estimated_category=wrong)
        bundle = run_eval(pairs, rollouts)
        assert bundle.iec == 0.5

    def test_derived_category_when_absent(self, small_manifest):
        import dataclasses

        pair = small_manifest[0]
        record = dataclasses.replace(
            oracle_rollout(pair, OracleConfig()), estimated_category=None
        )
        bundle = run_eval([pair], [record])
        assert bundle.iec == 1.0  # labeler recovers the instructed category

    def test_coverage_partition_is_exact(self, small_manifest):
        # one evaluated, one gap, one reject (estimated trajectory too short)
        pairs = small_manifest[:3]
        good = oracle_rollout(pairs[0], OracleConfig())
        short_traj = traj_from_xy([(0.0, 0.0), (0.0, 0.5)], fps=10.0)
        import dataclasses

        reject = dataclasses.replace(
            oracle_rollout(pairs[2], OracleConfig()), estimated_trajectory=short_traj
        )
        bundle = run_eval(pairs, [good, reject])
        assert len(bundle.coverage.evaluated) == 1
        assert bundle.coverage.gaps == (pairs[1].sample_id,)
        assert len(bundle.coverage.rejects) == 1
        assert bundle.coverage.rejects[0][0] == pairs[2].sample_id
        total = (
            len(bundle.coverage.evaluated)
            + len(bundle.coverage.gaps)
            + len(bundle.coverage.rejects)
        )
        assert total == len(pairs)

    def test_unresolved_rollouts_are_recorded(self, small_manifest):
        import dataclasses

        pair = small_manifest[0]
        good = oracle_rollout(pair, OracleConfig())
        stray = dataclasses.replace(good, sample_id="stray")
        bundle = run_eval([pair], [good, stray])
        assert bundle.coverage.unresolved == ("stray",)

    def test_zero_coverage_is_fatal(self, small_manifest):
        rollouts = [oracle_rollout(small_manifest[0], OracleConfig())]
        import dataclasses

        stray = dataclasses.replace(rollouts[0], sample_id="stray")
        with pytest.raises(CoverageError):
            run_eval(small_manifest[1:], [stray])
        with pytest.raises(CoverageError):
            run_eval([], [])

    def test_noise_monotonicity(self, small_manifest):
        means = []
        for sigma in (0.0, 0.1, 0.5, 1.0):
            rollouts = [
                oracle_rollout(p, OracleConfig(noise_sigma=sigma, rng_seed=42))
                for p in small_manifest
            ]
            bundle = run_eval(small_manifest, rollouts)
            means.append(bundle.category_report.overall.mean_ade)
        assert all(b >= a - 1e-12 for a, b in zip(means, means[1:]))


class TestEmitReport:
    def test_identical_bundles_produce_identical_bytes(self, tmp_path, small_manifest):
        rollouts = [oracle_rollout(p, OracleConfig(noise_sigma=0.2, rng_seed=5)) for p in small_manifest]
        bundle_a = run_eval(small_manifest, rollouts)
        bundle_b = run_eval(small_manifest, rollouts)
        files_a = emit_report(bundle_a, tmp_path / "a")
        files_b = emit_report(bundle_b, tmp_path / "b")
        assert [p.name for p in files_a] == [p.name for p in files_b]
        for fa, fb in zip(files_a, files_b):
            assert fa.read_bytes() == fb.read_bytes()

    def test_confusion_csv_ratio_rows_sum_to_one(self, tmp_path, small_manifest):
        rollouts = [oracle_rollout(p, OracleConfig()) for p in small_manifest]
        bundle = run_eval(small_manifest, rollouts)
        emit_report(bundle, tmp_path)
        lines = (tmp_path / "confusion.csv").read_text().splitlines()
        header = lines[0].split(",")
        ratio_cols = [i for i, name in enumerate(header) if name.startswith("ratio:")]
        count_cols = [i for i, name in enumerate(header) if name.startswith("count:")]
        for line in lines[1:]:
            cells = line.split(",")
            counts = sum(int(cells[i]) for i in count_cols)
            ratios = sum(float(cells[i]) for i in ratio_cols)
            assert ratios == pytest.approx(1.0 if counts else 0.0, abs=1e-12)

    def test_scatter_has_one_row_per_pair_waypoint(self, tmp_path, small_manifest):
        rollouts = [oracle_rollout(p, OracleConfig()) for p in small_manifest]
        bundle = run_eval(small_manifest, rollouts)
        emit_report(bundle, tmp_path)
        lines = (tmp_path / "scatter.csv").read_text().splitlines()
        expected = sum(len(p.template.per_frame[0]) for p in small_manifest)
        assert len(lines) == 1 + expected

    def test_report_csv_marks_empty_categories(self, tmp_path, small_manifest):
        rollouts = [oracle_rollout(p, OracleConfig()) for p in small_manifest]
        bundle = run_eval(small_manifest, rollouts)
        emit_report(bundle, tmp_path)
        lines = (tmp_path / "report.csv").read_text().splitlines()
        assert lines[0] == "category,count,mean_ade_m,mean_fde_m"
        assert len(lines) == 11  # header + 9 categories + average
        assert any(",0,N/A,N/A" in line for line in lines[1:])

    def test_json_report_is_schema_versioned(self, small_manifest):
        rollouts = [oracle_rollout(p, OracleConfig()) for p in small_manifest]
        bundle = run_eval(small_manifest, rollouts, metadata={"note": "test"})
        obj = bundle_to_dict(bundle)
        assert obj["schema_version"] == 1
        assert obj["metadata"]["note"] == "test"
        assert set(obj["confusion"]["columns"]) - set(obj["confusion"]["categories"]) == {"none"}

    def test_unknown_format_rejected(self, tmp_path, small_manifest):
        from actbench.errors import InvalidInputError

        rollouts = [oracle_rollout(p, OracleConfig()) for p in small_manifest]
        bundle = run_eval(small_manifest, rollouts)
        with pytest.raises(InvalidInputError):
            emit_report(bundle, tmp_path, formats=("xml",))
