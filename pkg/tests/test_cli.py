import json

import numpy as np
import pytest

from habitmask.cli import main
from habitmask.harness import TrainedModel, load_manifest


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Run the full CLI pipeline once: generate, split, train, eval."""
    root = tmp_path_factory.mktemp("cli")
    cfg_path = root / "synth.json"
    cfg_path.write_text(
        json.dumps(
            {
                "num_categories": 4,
                "clips_per_category": 6,
                "length": 8,
                "side": 16,
                "patch_size": 4,
                "clutter": 2,
            }
        )
    )
    data = root / "data"
    assert main(["synth-gen", "--config", str(cfg_path), "--seed", "3", "--out", str(data)]) == 0
    splits = root / "splits"
    assert (
        main(
            [
                "split",
                "--manifest", str(data / "manifest.json"),
                "--ratios", "0.5,0.25,0.25",
                "--seed", "0",
                "--out-dir", str(splits),
            ]
        )
        == 0
    )
    ckpt = root / "skel.hckp"
    curves = root / "curves.csv"
    assert (
        main(
            [
                "train",
                "--variant", "skel",
                "--train", str(splits / "train.json"),
                "--val", str(splits / "val.json"),
                "--ckpt", str(ckpt),
                "--curves", str(curves),
                "--epochs", "2",
                "--batch-size", "6",
                "--frame-side", "16",
            ]
        )
        == 0
    )
    return {"root": root, "data": data, "splits": splits, "ckpt": ckpt, "curves": curves}


class TestPipeline:
    def test_dataset_written(self, workspace):
        manifest = load_manifest(workspace["data"] / "manifest.json")
        assert len(manifest["clips"]) == 24

    def test_split_files(self, workspace):
        sizes = {}
        for name in ("train", "test", "val"):
            part = load_manifest(workspace["splits"] / f"{name}.json")
            sizes[name] = len(part["clips"])
        assert sizes["train"] + sizes["test"] + sizes["val"] == 24
        assert sizes["train"] == 12

    def test_checkpoint_loadable(self, workspace):
        model = TrainedModel.load(workspace["ckpt"])
        assert model.variant == "skel"
        assert model.skel_net is not None

    def test_curves_csv(self, workspace):
        lines = workspace["curves"].read_text().strip().splitlines()
        assert lines[0] == "stage,epoch,train_loss,val_acc"
        assert len(lines) == 3  # header + 2 epochs

    def test_eval_report(self, workspace, tmp_path):
        out = tmp_path / "report.json"
        assert (
            main(
                [
                    "eval",
                    "--ckpt", str(workspace["ckpt"]),
                    "--manifest", str(workspace["splits"] / "test.json"),
                    "--out", str(out),
                ]
            )
            == 0
        )
        report = json.loads(out.read_text())
        assert 0.0 <= report["accuracy"] <= 1.0
        assert len(report["confusion"]) == 4

    def test_stats(self, workspace, capsys):
        assert main(["stats", "--manifest", str(workspace["data"] / "manifest.json")]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["num_clips"] == 24

    def test_mask_render(self, workspace, tmp_path):
        manifest = load_manifest(workspace["data"] / "manifest.json")
        entry = manifest["clips"][0]
        out_dir = tmp_path / "frames"
        assert (
            main(
                [
                    "mask-render",
                    "--clip", entry["path"],
                    "--ckpt", str(workspace["ckpt"]),
                    "--annotation", entry["annotation_path"],
                    "--out", str(out_dir),
                ]
            )
            == 0
        )
        frames = sorted(out_dir.glob("frame_*.ppm"))
        assert len(frames) == 8
        blob = frames[0].read_bytes()
        assert blob.startswith(b"P6\n16 16\n255\n")
        assert len(blob) == len(b"P6\n16 16\n255\n") + 16 * 16 * 3


class TestArgHandling:
    def test_missing_subcommand(self):
        with pytest.raises(SystemExit):
            main([])

    def test_unknown_variant(self):
        with pytest.raises(SystemExit):
            main(["train", "--variant", "nope", "--train", "a", "--val", "b", "--ckpt", "c"])
