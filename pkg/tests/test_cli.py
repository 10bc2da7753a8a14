import json

from click.testing import CliRunner

from lesionfusion.cli import main


def _digest_line(output):
    return next(line for line in output.splitlines() if line.startswith("dataset digest:"))


class TestSynth:
    def test_deterministic_dataset_digest(self, tmp_path):
        runner = CliRunner()
        args = ["synth", "--n", "2", "--size", "64", "--seed", "3"]
        r1 = runner.invoke(main, args + ["--out", str(tmp_path / "a")])
        r2 = runner.invoke(main, args + ["--out", str(tmp_path / "b")])
        assert r1.exit_code == 0, r1.output
        assert r2.exit_code == 0, r2.output
        assert _digest_line(r1.output) == _digest_line(r2.output)

    def test_writes_config_snapshot(self, tmp_path):
        runner = CliRunner()
        out = tmp_path / "ds"
        r = runner.invoke(main, ["synth", "--n", "1", "--size", "64", "--out", str(out)])
        assert r.exit_code == 0, r.output
        assert (out / "config.yaml").exists()
        assert (out / "config.provenance.txt").exists()
        assert (out / "metadata.csv").exists()
        assert "config digest:" in r.output

    def test_invalid_size_exits_one(self, tmp_path):
        r = CliRunner().invoke(
            main, ["synth", "--n", "1", "--size", "8", "--out", str(tmp_path / "x")]
        )
        assert r.exit_code == 1

    def test_unknown_set_key_exits_one(self, tmp_path):
        r = CliRunner().invoke(
            main,
            ["synth", "--n", "1", "--out", str(tmp_path / "x"), "--set", "datahub.sizee=64"],
        )
        assert r.exit_code == 1
        assert "unknown config key" in r.output


class TestTrainValidation:
    def test_both_branches_disabled_exits_one(self, tmp_path):
        runner = CliRunner()
        ds = tmp_path / "ds"
        r = runner.invoke(main, ["synth", "--n", "2", "--size", "64", "--out", str(ds)])
        assert r.exit_code == 0, r.output
        r = runner.invoke(
            main,
            ["train", "--data", str(ds), "--out", str(tmp_path / "run"),
             "--no-gfe", "--no-lfe"],
        )
        assert r.exit_code == 1
        assert "at least one branch" in r.output

    def test_predicted_masks_without_seg_ckpt_exits_one(self, tmp_path):
        runner = CliRunner()
        ds = tmp_path / "ds"
        runner.invoke(main, ["synth", "--n", "2", "--size", "64", "--out", str(ds)])
        r = runner.invoke(main, ["train", "--data", str(ds), "--out", str(tmp_path / "run")])
        assert r.exit_code == 1
        assert "--seg-ckpt" in r.output

    def test_missing_data_directory_exits_nonzero(self, tmp_path):
        r = CliRunner().invoke(
            main, ["train", "--data", str(tmp_path / "nope"), "--out", str(tmp_path / "run")]
        )
        assert r.exit_code != 0


class TestMiniChain:
    def test_ground_truth_train_then_eval(self, tmp_path):
        """Smallest full chain: synth -> train (ground-truth masks) -> eval."""
        runner = CliRunner()
        ds = tmp_path / "ds"
        run = tmp_path / "run"
        report = tmp_path / "report"
        r = runner.invoke(
            main,
            ["synth", "--n", "4", "--size", "64", "--seed", "1", "--out", str(ds),
             "--set", "datahub.fractions=[0.5,0.25,0.25]"],
        )
        assert r.exit_code == 0, r.output
        r = runner.invoke(
            main,
            ["train", "--data", str(ds), "--out", str(run), "--epochs", "2",
             "--set", "trainer.mask_source=ground_truth",
             "--set", "extractors.preset=toy",
             "--set", "trainer.image_size=64",
             "--set", "trainer.augment=false"],
        )
        assert r.exit_code == 0, r.output
        assert (run / "best.ckpt").exists()
        assert (run / "metrics.jsonl").exists()
        r = runner.invoke(
            main,
            ["eval", "--data", str(ds), "--ckpt", str(run / "best.ckpt"),
             "--out", str(report)],
        )
        assert r.exit_code == 0, r.output
        payload = json.loads((report / "report.json").read_text())
        assert len(payload["confusion"]) == 3
        assert 0.0 <= payload["accuracy"] <= 1.0
        assert (report / "roc_normal.png").exists()

    def test_gradcam_from_checkpoint(self, tmp_path):
        runner = CliRunner()
        ds = tmp_path / "ds"
        run = tmp_path / "run"
        runner.invoke(
            main,
            ["synth", "--n", "4", "--size", "64", "--seed", "1", "--out", str(ds),
             "--set", "datahub.fractions=[0.5,0.25,0.25]"],
        )
        runner.invoke(
            main,
            ["train", "--data", str(ds), "--out", str(run), "--epochs", "1",
             "--set", "trainer.mask_source=ground_truth",
             "--set", "extractors.preset=toy",
             "--set", "trainer.image_size=64",
             "--set", "trainer.augment=false"],
        )
        cam = tmp_path / "cam"
        r = runner.invoke(
            main,
            ["gradcam", "--data", str(ds), "--ckpt", str(run / "best.ckpt"),
             "--out", str(cam)],
        )
        assert r.exit_code == 0, r.output
        assert any(cam.glob("*_cam.png"))
