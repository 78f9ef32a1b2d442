from __future__ import annotations

import json

import numpy as np
import pytest
from click.testing import CliRunner

from swapforge.cli import main
from swapforge.curation import load_manifest, save_manifest
from swapforge.imaging import save_image, save_mask
from swapforge.synthetic import ShapeFaceDataset, RED_IDENTITY, BLUE_IDENTITY, write_faceset


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def faceset_path(tmp_path):
    ds = ShapeFaceDataset(64, RED_IDENTITY, seed=1)
    return write_faceset(tmp_path / "alice", "alice", ds, count=6)


class TestCurateCli:
    def test_score_gate_report_round_trip(self, runner, faceset_path):
        root = str(faceset_path.parent)
        res = runner.invoke(main, ["curate", "score", "--manifest", str(faceset_path),
                                   "--images-root", root])
        assert res.exit_code == 0, res.output
        res = runner.invoke(main, ["curate", "gate", "--manifest", str(faceset_path)])
        assert res.exit_code == 0, res.output
        res = runner.invoke(main, ["curate", "report", "--manifest", str(faceset_path),
                                   "--json"])
        assert res.exit_code == 0, res.output
        counts = json.loads(res.output)
        assert counts["kept"] + counts["auto_rejected"] + counts["rejected"] == 6

    def test_gate_threshold_flags_persist(self, runner, faceset_path):
        res = runner.invoke(main, ["curate", "gate", "--manifest", str(faceset_path),
                                   "--blur-min", "1.5"])
        assert res.exit_code == 0, res.output
        m = load_manifest(faceset_path)
        assert m.thresholds.blur_min == 1.5

    def test_dedup_cli(self, runner, tmp_path):
        # two identical images plus one distinct one
        g = np.random.default_rng(2)
        ds = ShapeFaceDataset(32, RED_IDENTITY, seed=3)
        path = write_faceset(tmp_path / "dup", "dup", ds, count=2)
        m = load_manifest(path)
        img = g.uniform(size=(32, 32, 3))
        for rid in ("dup_0000", "dup_0001"):
            save_image(img, tmp_path / "dup" / f"{rid}.png")  # overwrite: duplicates
        save_manifest(m, path)
        res = runner.invoke(main, ["curate", "dedup", "--manifest", str(path),
                                   "--images-root", str(tmp_path / "dup")])
        assert res.exit_code == 0, res.output
        assert "duplicates rejected: 1" in res.output

    def test_report_warns_on_band(self, runner, faceset_path):
        res = runner.invoke(main, ["curate", "report", "--manifest", str(faceset_path)])
        assert res.exit_code == 0
        assert "outside the 4,000-8,000" in res.output


class TestMetricCli:
    def test_metric_json(self, runner, tmp_path):
        g = np.random.default_rng(4)
        a = g.uniform(size=(32, 32, 3))
        b = g.uniform(size=(32, 32, 3))
        save_image(a, tmp_path / "a.png")
        save_image(b, tmp_path / "b.png")
        res = runner.invoke(main, ["metric", "--a", str(tmp_path / "a.png"),
                                   "--b", str(tmp_path / "b.png"), "--json"])
        assert res.exit_code == 0, res.output
        out = json.loads(res.output)
        assert set(out) == {"mse", "ssim", "dssim"}
        assert out["mse"] > 0

    def test_metric_with_masks(self, runner, tmp_path):
        g = np.random.default_rng(5)
        save_image(g.uniform(size=(32, 32, 3)), tmp_path / "a.png")
        save_image(g.uniform(size=(32, 32, 3)), tmp_path / "b.png")
        masks = tmp_path / "masks"
        masks.mkdir()
        for name in ("face", "eye", "mouth"):
            save_mask(np.ones((32, 32)), masks / f"{name}.png")
        res = runner.invoke(main, ["metric", "--a", str(tmp_path / "a.png"),
                                   "--b", str(tmp_path / "b.png"),
                                   "--masks", str(masks), "--json"])
        assert res.exit_code == 0, res.output
        assert "masked_loss" in json.loads(res.output)


class TestBlendCli:
    def test_blend_and_energy(self, runner, tmp_path):
        g = np.random.default_rng(6)
        save_image(g.uniform(size=(48, 48, 3)), tmp_path / "src.png")
        save_image(g.uniform(size=(48, 48, 3)), tmp_path / "tgt.png")
        m = np.zeros((48, 48))
        m[8:40, 8:40] = 1.0
        save_mask(m, tmp_path / "driver.png")
        res = runner.invoke(main, [
            "blend", "--source", str(tmp_path / "src.png"),
            "--target", str(tmp_path / "tgt.png"),
            "--driver-mask", str(tmp_path / "driver.png"),
            "--squeeze", "4", "--out", str(tmp_path / "out.png"),
            "--report-energy"])
        assert res.exit_code == 0, res.output
        assert (tmp_path / "out.png").exists()
        assert "boundary_energy:" in res.output

    def test_conventional_flag(self, runner, tmp_path):
        g = np.random.default_rng(7)
        save_image(g.uniform(size=(32, 32, 3)), tmp_path / "src.png")
        save_image(g.uniform(size=(32, 32, 3)), tmp_path / "tgt.png")
        m = np.zeros((32, 32))
        m[4:28, 4:28] = 1.0
        save_mask(m, tmp_path / "driver.png")
        res = runner.invoke(main, [
            "blend", "--source", str(tmp_path / "src.png"),
            "--target", str(tmp_path / "tgt.png"),
            "--driver-mask", str(tmp_path / "driver.png"),
            "--conventional", "--out", str(tmp_path / "out.png")])
        assert res.exit_code == 0, res.output


class TestConvertCli:
    def test_convert_via_toml(self, runner, tmp_path):
        from swapforge.alignment import ALIGNED_SIZE, canonical_template_2d
        from swapforge.imaging import save_landmarks
        from swapforge.model import ModelConfig, build_model
        from swapforge.nn import save_checkpoint

        model = build_model(ModelConfig(input_size=32, latent_dim=16,
                                        decoder_base_channels=16,
                                        encoder_channels=(4, 8, 16, 32), seed=2))
        ckpt = tmp_path / "m.ckpt"
        save_checkpoint(ckpt, model.params, meta={"config": model.cfg.to_dict()})
        for sub in ("frames", "landmarks", "masks"):
            (tmp_path / sub).mkdir()
        ds = ShapeFaceDataset(ALIGNED_SIZE, RED_IDENTITY, seed=10)
        img, masks = ds.sample(0)
        save_image(img, tmp_path / "frames" / "f0.png")
        save_landmarks(canonical_template_2d(), tmp_path / "landmarks" / "f0.json")
        save_mask(masks["face"], tmp_path / "masks" / "f0.png")
        toml_path = tmp_path / "convert.toml"
        toml_path.write_text(f"""
[conversion]
checkpoint = "{ckpt}"
target_identity = "A"
frames_dir = "{tmp_path / 'frames'}"
landmarks_dir = "{tmp_path / 'landmarks'}"
masks_dir = "{tmp_path / 'masks'}"
out_dir = "{tmp_path / 'out'}"
squeeze_px = 10
""")
        res = runner.invoke(main, ["convert", "--config", str(toml_path)])
        assert res.exit_code == 0, res.output
        summary = json.loads(res.output)
        assert summary["counts"]["converted"] == 1
        assert (tmp_path / "out" / "f0.png").exists()


class TestTrainCli:
    def test_train_smoke(self, runner, tmp_path):
        ds_a = ShapeFaceDataset(64, RED_IDENTITY, seed=8)
        ds_b = ShapeFaceDataset(64, BLUE_IDENTITY, seed=9)
        path_a = write_faceset(tmp_path / "a", "a", ds_a, count=4)
        path_b = write_faceset(tmp_path / "b", "b", ds_b, count=4)
        res = runner.invoke(main, [
            "train", "--faceset-a", str(path_a), "--faceset-b", str(path_b),
            "--profile", "toy", "--steps", "3",
            "--out", str(tmp_path / "run")])
        assert res.exit_code == 0, res.output
        assert (tmp_path / "run" / "model.ckpt").exists()
        assert (tmp_path / "run" / "loss.csv").exists()
