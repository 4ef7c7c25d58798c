import filecmp
import json
from pathlib import Path

import numpy as np
import pytest

from arpro.cli import main

TINY_CONFIG = {
    "data": {
        "kind": "ts",
        "n_features": 2,
        "window_len": 12,
        "n_train": 60,
        "n_test": 6,
        "noise_std": 0.1,
        "start_jitter": 12.0,
        "anomalies": [{"kind": "spike", "magnitude": 1.5, "extent": 0.15}],
    },
    "detector": {"kind": "gauss"},
    "diffusion": {"T": 12, "hidden": [16, 16], "time_embed": 8, "steps": 150},
    "repair": {"eta_start": 0.05, "eta_end": 0.2},
    "n_instances": 3,
    "ablation_instances": 2,
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    config = root / "config.json"
    config.write_text(json.dumps(TINY_CONFIG))
    data_dir = root / "data"
    assert main(["gen-data", "--kind", "ts", "--out", str(data_dir), "--seed", "7",
                 "--config", str(config)]) == 0
    models = root / "models"
    assert main(["train-detector", "--input", str(data_dir), "--out", str(models),
                 "--seed", "7", "--config", str(config)]) == 0
    assert main(["train-diffusion", "--input", str(data_dir), "--out", str(models),
                 "--seed", "7", "--config", str(config)]) == 0
    return root, config, data_dir, models


def dir_equal(a: Path, b: Path) -> bool:
    names = sorted(p.name for p in a.iterdir())
    if names != sorted(p.name for p in b.iterdir()):
        return False
    return all((a / n).read_bytes() == (b / n).read_bytes() for n in names)


class TestGenData:
    def test_deterministic_directories(self, workspace, tmp_path):
        root, config, data_dir, _ = workspace
        other = tmp_path / "again"
        assert main(["gen-data", "--kind", "ts", "--out", str(other), "--seed", "7",
                     "--config", str(config)]) == 0
        assert dir_equal(data_dir, other)

    def test_different_seed_differs(self, workspace, tmp_path):
        _, config, data_dir, _ = workspace
        other = tmp_path / "seed8"
        assert main(["gen-data", "--kind", "ts", "--out", str(other), "--seed", "8",
                     "--config", str(config)]) == 0
        assert not dir_equal(data_dir, other)


class TestRepairCommand:
    def test_zero_guidance_matches_baseline(self, workspace, tmp_path):
        _, config, data_dir, models = workspace
        base_out = tmp_path / "base"
        guided_out = tmp_path / "guided0"
        common = ["repair", "--input", str(data_dir), "--detector", str(models / "detector.json"),
                  "--denoiser", str(models / "denoiser.json"), "--seed", "7",
                  "--config", str(config)]
        assert main(common + ["--baseline", "--out", str(base_out)]) == 0
        assert main(common + ["--guided", "--eta-start", "0", "--eta-end", "0",
                              "--out", str(guided_out)]) == 0
        base = json.loads((base_out / "repairs.json").read_text())
        guided = json.loads((guided_out / "repairs.json").read_text())
        assert base["results"] and len(base["results"]) == len(guided["results"])
        for rb, rg in zip(base["results"], guided["results"]):
            assert rb["x_fix"] == rg["x_fix"]
            assert rb["trajectory_hash"] == rg["trajectory_hash"]

    def test_byte_reproducible(self, workspace, tmp_path):
        _, config, data_dir, models = workspace
        outs = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            assert main(["repair", "--input", str(data_dir), "--detector", str(models / "detector.json"),
                         "--denoiser", str(models / "denoiser.json"), "--guided",
                         "--seed", "7", "--config", str(config), "--out", str(out)]) == 0
            outs.append(out)
        assert (outs[0] / "repairs.json").read_bytes() == (outs[1] / "repairs.json").read_bytes()


class TestEvaluateCommand:
    def test_runs_and_reports(self, workspace, tmp_path, capsys):
        _, config, data_dir, models = workspace
        out = tmp_path / "eval"
        assert main(["evaluate", "--input", str(data_dir), "--seed", "7",
                     "--config", str(config), "--detector", str(models / "detector.json"),
                     "--denoiser", str(models / "denoiser.json"), "--out", str(out)]) == 0
        stdout = capsys.readouterr().out
        assert "wall-clock" in stdout
        payload = json.loads((out / "report.json").read_text())
        assert payload["schema"] == "arpro-report-v1"
        assert payload["provenance"]["overrides"]["seed"] == 7

    def test_flag_overrides_recorded_and_applied(self, workspace, tmp_path):
        _, config, data_dir, models = workspace
        out = tmp_path / "eval-ov"
        assert main(["evaluate", "--input", str(data_dir), "--seed", "7",
                     "--config", str(config), "--detector", str(models / "detector.json"),
                     "--denoiser", str(models / "denoiser.json"), "--lambda2", "2.5",
                     "--out", str(out)]) == 0
        payload = json.loads((out / "report.json").read_text())
        assert payload["provenance"]["overrides"]["repair"]["lambda2"] == 2.5
        assert payload["config"]["repair"]["lambda2"] == 2.5


class TestAblateCommand:
    def test_emits_table(self, workspace, tmp_path):
        _, config, data_dir, models = workspace
        out = tmp_path / "ablate"
        assert main(["ablate", "--input", str(data_dir), "--seed", "7", "--config", str(config),
                     "--detector", str(models / "detector.json"),
                     "--denoiser", str(models / "denoiser.json"),
                     "--param", "lambda2", "--values", "0.1,1,10", "--out", str(out)]) == 0
        lines = (out / "ablation.csv").read_text().splitlines()
        assert len(lines) == 4

    def test_unknown_param_exits_1(self, workspace, tmp_path, capsys):
        _, config, data_dir, models = workspace
        code = main(["ablate", "--input", str(data_dir), "--seed", "7", "--config", str(config),
                     "--detector", str(models / "detector.json"),
                     "--denoiser", str(models / "denoiser.json"),
                     "--param", "zeta", "--values", "1", "--out", str(tmp_path / "x")])
        assert code == 1
        assert "unknown ablation parameter" in capsys.readouterr().err


class TestValidationFailures:
    def test_missing_train_csv_names_path(self, workspace, tmp_path, capsys):
        _, config, data_dir, models = workspace
        broken = tmp_path / "broken"
        broken.mkdir()
        for name in ("test.csv", "test_labels.csv", "meta.json"):
            (broken / name).write_bytes((data_dir / name).read_bytes())
        code = main(["train-detector", "--input", str(broken), "--seed", "7",
                     "--config", str(config), "--out", str(tmp_path / "m")])
        assert code == 1
        assert "train.csv" in capsys.readouterr().err

    def test_unknown_flag_exits_1(self, capsys):
        assert main(["gen-data", "--out", "x", "--bogus-flag", "1"]) == 1
        assert "error" in capsys.readouterr().err

    def test_unknown_subcommand_exits_1(self, capsys):
        assert main(["frobnicate", "--out", "x"]) == 1

    def test_missing_subcommand_exits_1(self, capsys):
        assert main([]) == 1

    def test_unknown_config_key_exits_1(self, tmp_path, capsys):
        config = tmp_path / "bad.json"
        config.write_text(json.dumps({"bogus": True}))
        assert main(["gen-data", "--kind", "ts", "--out", str(tmp_path / "d"),
                     "--config", str(config)]) == 1
        assert "unknown keys" in capsys.readouterr().err

    def test_malformed_config_exits_1(self, tmp_path, capsys):
        config = tmp_path / "bad.json"
        config.write_text("{not json")
        assert main(["gen-data", "--kind", "ts", "--out", str(tmp_path / "d"),
                     "--config", str(config)]) == 1
        assert "malformed config" in capsys.readouterr().err

    def test_missing_checkpoint_exits_1(self, workspace, tmp_path, capsys):
        _, config, data_dir, _ = workspace
        code = main(["repair", "--input", str(data_dir), "--detector", str(tmp_path / "nope.json"),
                     "--denoiser", str(tmp_path / "nope2.json"), "--guided",
                     "--seed", "7", "--config", str(config), "--out", str(tmp_path / "r")])
        assert code == 1
        assert "nope.json" in capsys.readouterr().err

    def test_inputs_never_modified(self, workspace, tmp_path):
        _, config, data_dir, models = workspace
        before = {p.name: p.read_bytes() for p in data_dir.iterdir()}
        main(["evaluate", "--input", str(data_dir), "--seed", "7", "--config", str(config),
              "--detector", str(models / "detector.json"),
              "--denoiser", str(models / "denoiser.json"), "--out", str(tmp_path / "e")])
        after = {p.name: p.read_bytes() for p in data_dir.iterdir()}
        assert before == after
