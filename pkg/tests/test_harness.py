import dataclasses
import json

import numpy as np
import pytest

from arpro.data import AnomalySpec
from arpro.harness import (
    DataConfig,
    DetectorConfig,
    DiffusionConfig,
    ExperimentConfig,
    RepairSettings,
    ablation_sweep,
    aggregate_delta,
    prepare_pipeline,
    run_experiment,
    run_single_arm,
    timeseries_benchmark_config,
    tnr_report,
    write_ablation,
    write_report,
)
from arpro.detector import fit_gauss
from arpro.tensor import stream


def tiny_config(seed: int = 0, **repair_kwargs) -> ExperimentConfig:
    """A fast miniature experiment for harness-level tests."""
    return ExperimentConfig(
        data=DataConfig(
            kind="ts",
            n_features=2,
            window_len=12,
            n_train=80,
            n_test=8,
            noise_std=0.1,
            start_jitter=12.0,
            anomalies=(AnomalySpec(kind="spike", magnitude=1.5, extent=0.15),),
        ),
        detector=DetectorConfig(kind="gauss"),
        diffusion=DiffusionConfig(T=15, hidden=(24, 24), time_embed=8, steps=250),
        repair=RepairSettings(**repair_kwargs),
        n_instances=4,
        ablation_instances=3,
        seed=seed,
    )


class TestAggregateDelta:
    def test_uniform_halving(self):
        assert aggregate_delta([10.0, 20.0], [5.0, 10.0]) == pytest.approx(50.0)

    def test_identical_arms(self):
        assert aggregate_delta([3.0, -1.0], [3.0, -1.0]) == 0.0

    def test_negative_scores_use_documented_formula(self):
        assert aggregate_delta([-10.0], [-20.0]) == pytest.approx(100.0)

    def test_median_invariant_under_median_pair(self):
        baseline = [10.0, 20.0, 40.0]
        guided = [5.0, 10.0, 20.0]
        before = aggregate_delta(baseline, guided)
        after = aggregate_delta(baseline + [100.0], guided + [50.0])  # pair at the median 50%
        assert before == after

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="paired"):
            aggregate_delta([1.0], [1.0, 2.0])


class TestTnrReport:
    def test_all_below_threshold(self):
        g = stream(60, "tnr")
        train = g.standard_normal((50, 3))
        det = fit_gauss(train)
        repairs = {"baseline": list(train[:5]), "guided": list(train[5:10])}
        out = tnr_report(det, train, repairs, 0.95)
        assert 0.0 <= out["tnr_baseline"] <= 1.0
        assert out["threshold"] > 0.0

    def test_infinite_threshold_when_single_score(self):
        det = fit_gauss(np.array([[0.0, 0.0], [1.0, 1.0]]))
        out = tnr_report(det, np.array([[0.5, 0.5]]), {"baseline": [np.array([9.0, 9.0])]}, 0.95)
        assert out["threshold"] == float("inf")
        assert out["tnr_baseline"] == 1.0

    def test_empty_inputs_rejected(self):
        det = fit_gauss(np.zeros((3, 2)) + 0.5)
        with pytest.raises(ValueError):
            tnr_report(det, np.zeros((0, 2)), {"baseline": [np.zeros(2)]}, 0.95)
        with pytest.raises(ValueError):
            tnr_report(det, np.zeros((3, 2)), {"baseline": []}, 0.95)


@pytest.fixture(scope="module")
def tiny_report():
    return run_experiment(tiny_config(seed=1))


class TestRunExperiment:
    def test_zero_guidance_config_gives_zero_delta(self):
        cfg = tiny_config(seed=2, eta_start=0.0, eta_end=0.0)
        report = run_experiment(cfg)
        for name in ("m_s", "m_d", "m_omega", "m_omega_bar"):
            assert report.delta_percent[name] == 0.0
        for record in report.records:
            assert record.baseline.trajectory_hash == record.guided.trajectory_hash

    def test_paired_record_counts(self, tiny_report):
        assert len(tiny_report.records) == 4
        assert set(tiny_report.medians) == {"baseline", "guided"}

    def test_deterministic_payload(self):
        a = run_experiment(tiny_config(seed=3)).to_dict()
        b = run_experiment(tiny_config(seed=3)).to_dict()
        assert json.dumps(a) == json.dumps(b)

    def test_no_anomalies_found_raises(self):
        cfg = tiny_config(seed=4)
        dataset = cfg.data.generate(cfg.seed)
        quiet = dataclasses.replace(dataset, test=dataset.train[: dataset.test.shape[0]].copy())
        with pytest.raises(ValueError, match="no anomalous instances"):
            run_experiment(cfg, dataset=quiet)

    def test_does_not_mutate_dataset(self):
        cfg = tiny_config(seed=5)
        dataset = cfg.data.generate(cfg.seed)
        train_before = dataset.train.copy()
        test_before = dataset.test.copy()
        run_experiment(cfg, dataset=dataset)
        assert np.array_equal(dataset.train, train_before)
        assert np.array_equal(dataset.test, test_before)

    def test_jobs_do_not_change_results(self):
        serial = run_experiment(tiny_config(seed=6)).to_dict()
        parallel = run_experiment(dataclasses.replace(tiny_config(seed=6), jobs=3)).to_dict()
        serial.pop("config")
        parallel.pop("config")
        assert json.dumps(serial) == json.dumps(parallel)

    def test_single_arm_matches_experiment(self):
        cfg = tiny_config(seed=7)
        report = run_experiment(cfg)
        _, singles = run_single_arm(cfg, "guided")
        for record, (instance_id, result) in zip(report.records, singles):
            assert record.instance_id == instance_id
            assert record.guided.trajectory_hash == result.trajectory_hash


class TestAblation:
    def test_single_default_value_matches_default_run(self):
        cfg = tiny_config(seed=8)
        rows = ablation_sweep(cfg, "lambda2", [1.0])
        subset_cfg = dataclasses.replace(cfg, n_instances=cfg.ablation_instances)
        report = run_experiment(subset_cfg)
        guided = [r.guided.metrics for r in report.records[: cfg.ablation_instances]]
        assert rows[0]["mean_m_omega"] == pytest.approx(
            float(np.mean([m.m_omega for m in guided]))
        )

    def test_table_shape(self):
        rows = ablation_sweep(tiny_config(seed=9), "lambda1", [0.1, 1.0, 10.0])
        assert len(rows) == 3
        for row in rows:
            assert {"mean_m_s", "mean_m_d", "mean_m_omega", "mean_m_omega_bar"} <= set(row)

    def test_eta_scale_param(self):
        rows = ablation_sweep(tiny_config(seed=10), "eta_scale", [0.0, 1.0])
        assert rows[0]["value"] == 0.0 and rows[1]["value"] == 1.0

    def test_unknown_parameter(self):
        with pytest.raises(ValueError, match="unknown ablation parameter"):
            ablation_sweep(tiny_config(seed=11), "lambda9", [1.0])

    def test_deterministic(self):
        a = ablation_sweep(tiny_config(seed=12), "lambda3", [0.5, 2.0])
        b = ablation_sweep(tiny_config(seed=12), "lambda3", [0.5, 2.0])
        assert a == b


class TestWriteReport:
    def test_round_trip_and_layout(self, tiny_report, tmp_path):
        paths = write_report(tiny_report, tmp_path)
        payload = json.loads(paths["report"].read_text())
        assert payload["schema"] == "arpro-report-v1"
        assert payload == tiny_report.to_dict()
        summary = paths["summary"].read_text().splitlines()
        assert summary[0].split(",")[:2] == ["instance_id", "arm"]
        assert len(summary) == 1 + 2 * len(tiny_report.records)
        assert paths["aggregates"].read_text().startswith("key,")
        timings = json.loads(paths["timings"].read_text())
        assert len(timings["instances"]) == len(tiny_report.records)

    def test_report_and_aggregates_bytes_stable(self, tmp_path):
        a = run_experiment(tiny_config(seed=13))
        b = run_experiment(tiny_config(seed=13))
        pa = write_report(a, tmp_path / "a")
        pb = write_report(b, tmp_path / "b")
        assert pa["report"].read_bytes() == pb["report"].read_bytes()
        assert pa["aggregates"].read_bytes() == pb["aggregates"].read_bytes()
        # summary.csv differs only in the trailing measured-seconds column
        strip = lambda p: ["," .join(line.split(",")[:-1]) for line in p.read_text().splitlines()]
        assert strip(pa["summary"]) == strip(pb["summary"])

    def test_ablation_csv(self, tmp_path):
        rows = ablation_sweep(tiny_config(seed=14), "lambda4", [1.0, 2.0])
        path = write_ablation(rows, tmp_path)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("param,value,")
        assert len(lines) == 3


class TestConfigParsing:
    def test_unknown_keys_rejected_everywhere(self):
        with pytest.raises(ValueError, match="unknown keys in config"):
            ExperimentConfig.from_dict({"bogus": 1})
        with pytest.raises(ValueError, match="config.data"):
            ExperimentConfig.from_dict({"data": {"bogus": 1}})
        with pytest.raises(ValueError, match="config.repair"):
            ExperimentConfig.from_dict({"repair": {"lambda9": 1.0}})
        with pytest.raises(ValueError, match=r"anomalies\[0\]"):
            ExperimentConfig.from_dict({"data": {"anomalies": [{"kinds": "spike"}]}})

    def test_round_trip(self):
        cfg = timeseries_benchmark_config(seed=5)
        again = ExperimentConfig.from_dict(cfg.to_dict())
        assert again == cfg

    def test_detector_kind_validated(self):
        with pytest.raises(ValueError, match="detector kind"):
            DetectorConfig(kind="flow")

    def test_prepare_pipeline_rejects_mismatched_denoiser(self):
        cfg = tiny_config(seed=15)
        other = ExperimentConfig.from_dict(
            {**cfg.to_dict(), "data": {**cfg.data.to_dict(), "n_features": 3}}
        )
        denoiser = other.diffusion.train(other.data.generate(0).train, seed=0)
        with pytest.raises(ValueError, match="dimension"):
            prepare_pipeline(cfg, denoiser=denoiser)
