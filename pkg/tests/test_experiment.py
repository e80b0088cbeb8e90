import json

import numpy as np
import pytest

from octroi.experiment import (
    ConfigError,
    config_from_dict,
    config_to_dict,
    default_roi_variants,
    load_variant_arrays,
    run_experiment,
    variant_seed,
)


def tiny_config_dict(**overrides):
    base = {
        "seed": 9,
        "output_dir": "runs",
        "dataset": {
            "synth": {
                "image_width": 128,
                "image_height": 96,
                "subjects_per_class": 5,
                "bscans_per_subject": 4,
                "layer_geometry": {
                    "mean_ilm_depth": 20.0,
                    "mean_retina_thickness": 30.0,
                    "mean_rpe_bm_gap": 3.0,
                    "curvature_amplitude": [2.0, 5.0],
                },
                "drusen": {"count_range": [1, 2], "width_range_um": [150.0, 250.0], "height_range_px": [4.0, 7.0]},
                "seed": 5,
            }
        },
        "keep_fraction": 1.0,
        "split_ratios": [0.6, 0.2, 0.2],
        "roi_variants": [
            {"kind": "img"},
            {"kind": "rpe-bm", "method": "masking"},
            {"kind": "rpe-bm-mask"},
        ],
        "model": {
            "input_size": [24, 32],
            "block_channels": [2, 4],
            "convs_per_block": [1, 1],
            "dense_sizes": [4],
        },
        "train": {
            "learning_rate": 0.01,
            "batch_size": 8,
            "max_epochs": 2,
            "patience": 2,
            "augmentation": {"enabled": False},
        },
        "eval": {"bootstrap_samples": 100, "alpha": 0.05, "threshold": 0.5, "delong_mode": "unpaired"},
    }
    base.update(overrides)
    return base


class TestConfigParsing:
    def test_round_trip(self):
        config = config_from_dict(tiny_config_dict())
        again = config_from_dict(config_to_dict(config))
        assert config_to_dict(again) == config_to_dict(config)

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="unknown key"):
            config_from_dict(tiny_config_dict(extra_knob=1))

    def test_unknown_nested_key(self):
        bad = tiny_config_dict()
        bad["train"]["optimizer"] = "adam"
        with pytest.raises(ConfigError, match="optimizer"):
            config_from_dict(bad)

    def test_dataset_must_be_exactly_one_source(self):
        bad = tiny_config_dict()
        bad["dataset"] = {}
        with pytest.raises(ConfigError, match="exactly one"):
            config_from_dict(bad)
        bad["dataset"] = {"manifest": "x.json", "synth": {}}
        with pytest.raises(ConfigError, match="exactly one"):
            config_from_dict(bad)

    def test_duplicate_variants_rejected(self):
        bad = tiny_config_dict()
        bad["roi_variants"] = [{"kind": "img"}, {"kind": "img"}]
        with pytest.raises(ConfigError, match="duplicate"):
            config_from_dict(bad)

    def test_variant_target_must_match_model_input(self):
        bad = tiny_config_dict()
        bad["roi_variants"] = [{"kind": "img", "target_size": [16, 16]}]
        with pytest.raises(ConfigError, match="input_size"):
            config_from_dict(bad)

    def test_default_eight_variants(self):
        cfg = tiny_config_dict()
        del cfg["roi_variants"]
        config = config_from_dict(cfg)
        assert config.variant_names == (
            "img",
            "ilm-bm-masking",
            "rpe-bm-masking",
            "bm-cho-masking",
            "ilm-bm-cropping",
            "rpe-bm-cropping",
            "bm-cho-cropping",
            "rpe-bm-mask",
        )

    def test_unknown_roi_kind(self):
        bad = tiny_config_dict()
        bad["roi_variants"] = [{"kind": "retina"}]
        with pytest.raises(ConfigError, match="unknown roi kind"):
            config_from_dict(bad)

    def test_variant_seed_is_order_free(self):
        assert variant_seed(9, "img") == variant_seed(9, "img")
        assert variant_seed(9, "img") != variant_seed(9, "rpe-bm-mask")
        assert variant_seed(9, "img") != variant_seed(10, "img")


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    config = config_from_dict(tiny_config_dict())
    run_dir = tmp_path_factory.mktemp("run")
    results = run_experiment(config, run_dir=run_dir)
    return config, run_dir, results


class TestRunExperiment:
    def test_variant_and_comparison_counts(self, run):
        _, _, results = run
        assert len(results.variants) == 3
        assert len(results.comparisons) == 3  # 3 * 2 / 2
        pairs = {(a, b) for a, b, _ in results.comparisons}
        assert len(pairs) == 3

    def test_artifacts_persisted(self, run):
        _, run_dir, results = run
        assert (run_dir / "config.json").exists()
        assert (run_dir / "split" / "manifest.json").exists()
        assert (run_dir / "metrics.json").exists()
        assert (run_dir / "run_info.json").exists()
        for v in results.variants:
            assert (run_dir / "roi" / v.name / "provenance.json").exists()
            assert (run_dir / "models" / v.name / "model.bin").exists()
            assert (run_dir / "models" / v.name / "history.csv").exists()
            assert (run_dir / "scores" / f"{v.name}.csv").exists()

    def test_same_subjects_across_variants(self, run):
        _, _, results = run
        reference = results.variants[0].scores.subject_ids
        for v in results.variants[1:]:
            assert v.scores.subject_ids == reference

    def test_single_variant_empty_matrix(self, tmp_path):
        cfg = tiny_config_dict()
        cfg["roi_variants"] = [{"kind": "img"}]
        results = run_experiment(config_from_dict(cfg), run_dir=tmp_path / "one")
        assert len(results.variants) == 1
        assert results.comparisons == []

    def test_bit_identical_metrics_on_rerun(self, run, tmp_path):
        config, run_dir, _ = run
        rerun_dir = tmp_path / "rerun"
        run_experiment(config, run_dir=rerun_dir)
        assert (run_dir / "metrics.json").read_bytes() == (rerun_dir / "metrics.json").read_bytes()

    def test_variant_arrays_reload(self, run):
        _, run_dir, results = run
        splits = load_variant_arrays(run_dir, "img")
        assert splits["train"].images.shape[1:] == (24, 32)
        n_total = sum(len(s.labels) for s in splits.values())
        assert n_total == 40  # 2 classes x 5 subjects x 4 scans

    def test_run_info_timings(self, run):
        _, run_dir, _ = run
        info = json.loads((run_dir / "run_info.json").read_text())
        assert info["completed"] is True
        assert set(info["stages_seconds"]) == {"dataset", "roi-extraction", "train-and-score", "compare"}

    def test_stage_failure_reported(self, tmp_path):
        from octroi.experiment import StageError

        cfg = tiny_config_dict()
        cfg["dataset"] = {"manifest": str(tmp_path / "missing.json")}
        with pytest.raises(StageError, match="dataset"):
            run_experiment(config_from_dict(cfg), run_dir=tmp_path / "fail")
        info = json.loads((tmp_path / "fail" / "run_info.json").read_text())
        assert info["completed"] is False
        assert info["failed_stage"] == "dataset"


class TestDefaultVariants:
    def test_eight_and_order(self):
        variants = default_roi_variants((96, 128))
        assert len(variants) == 8
        assert all(v.target_size == (96, 128) for v in variants)
