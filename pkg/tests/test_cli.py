"""Command-line entry point, run in-process."""

import json

import numpy as np
import pytest

from transformar.cli import main

TRAIN = ["--set", "image_height=16", "--set", "image_width=16", "--set", "patch_size=8", "--set", "embed_dim=8",
         "--set", "num_heads=2", "--set", "num_layers=1", "--set", "ffnn_ratio=2", "--set", "batch_size=8",
         "--set", "smoothing_trigger=off"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    assert main(["gen-data", "--out", str(data), "--scenes", "4", "--size", "16", "--samples-per-scene", "4",
                 "--grid", "jpeg_proxy=20,70", "--seed", "3"]) == 0
    run = root / "run"
    assert main(["train", "--manifest", str(data / "manifest.jsonl"), "--output-dir", str(run), "--epochs", "2",
                 "--fold", "0", "--set", "num_folds=2", *TRAIN]) == 0
    return data, run


class TestCommands:
    def test_gen_data(self, workspace, capsys):
        data, _ = workspace
        lines = (data / "manifest.jsonl").read_text().splitlines()
        assert len(lines) == 16
        assert {json.loads(l)["distortion"]["kind"] for l in lines} <= {"none", "jpeg_proxy"}

    def test_train_outputs(self, workspace):
        _, run = workspace
        assert (run / "train_log.csv").read_text().count("\n") == 3
        assert (run / "checkpoint" / "model.arwt").is_file()

    def test_eval(self, workspace, tmp_path, capsys):
        _, run = workspace
        assert main(["eval", "--checkpoint", str(run / "checkpoint"), "--out", str(tmp_path)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["fold"] == 0 and -1 <= report["srcc"] <= 1
        assert (tmp_path / "fold_0_scores.csv").is_file()

    def test_score_matches_sup_file(self, workspace, tmp_path, capsys):
        data, run = workspace
        from transformar.data.distortions import superimpose
        from transformar.data.images import read_ppm, write_ppm

        fg, bg = data / "images/fg_000.ppm", data / "images/bg_000.ppm"
        args = ["score", "--checkpoint", str(run / "checkpoint"), "--fg", str(fg), "--bg", str(bg)]
        assert main(args + ["--sigma", "0.42", "--distortion", "jpeg_proxy:20"]) == 0
        a = float(capsys.readouterr().out)
        sup = superimpose(read_ppm(fg), read_ppm(bg), 0.42, ("jpeg_proxy", 20.0))
        write_ppm(tmp_path / "sup.ppm", sup)
        assert main(args + ["--sup", str(tmp_path / "sup.ppm")]) == 0
        b = float(capsys.readouterr().out)
        assert np.isfinite(a) and abs(a - b) < 0.5

    def test_export_attention(self, workspace, tmp_path):
        data, run = workspace
        assert main(["export-attention", "--checkpoint", str(run / "checkpoint"), "--fg",
                     str(data / "images/fg_001.ppm"), "--bg", str(data / "images/bg_001.ppm"), "--sigma", "0.58",
                     "--out", str(tmp_path)]) == 0
        assert len(list(tmp_path.glob("*.csv"))) == 3 * 2

    def test_resume_extends_run(self, workspace, tmp_path):
        data, run = workspace
        out = tmp_path / "more"
        assert main(["train", "--manifest", str(data / "manifest.jsonl"), "--output-dir", str(out), "--epochs", "3",
                     "--fold", "0", "--set", "num_folds=2", *TRAIN, "--resume", str(run / "checkpoint")]) == 0
        assert (out / "train_log.csv").read_text().count("\n") == 4

    def test_check_grad_ops(self, capsys):
        assert main(["check-grad", "--ops-only"]) == 0
        out = capsys.readouterr().out
        assert "FAIL" not in out and "checks passed" in out


class TestExitCodes:
    def test_usage(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["train", "--epochs", "many"])
        assert exc.value.code == 1

    def test_unknown_command(self):
        with pytest.raises(SystemExit) as exc:
            main(["fly"])
        assert exc.value.code == 1

    def test_bad_config_key(self, workspace, capsys):
        data, _ = workspace
        assert main(["train", "--manifest", str(data / "manifest.jsonl"), "--set", "learning_rate=1"]) == 1
        assert "learning_rate" in capsys.readouterr().err

    def test_missing_manifest(self, tmp_path, capsys):
        assert main(["train", "--manifest", str(tmp_path / "none.jsonl"), *TRAIN]) == 2

    def test_bad_checkpoint(self, tmp_path):
        assert main(["eval", "--checkpoint", str(tmp_path)]) == 2

    def test_numeric_failure(self, workspace, tmp_path):
        data, _ = workspace
        args = ["train", "--manifest", str(data / "manifest.jsonl"), "--epochs", "1", "--fold", "-1", *TRAIN,
                "--set", "lr_main=1e300", "--set", "lr_encoder=1e300"]
        with np.errstate(all="ignore"):
            assert main(args) == 3
