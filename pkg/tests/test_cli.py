import json

import numpy as np
import pytest
import torch

from conftest import TINY_ARCH
from pathogan.commands.infer import input_slices
from pathogan.dependencies import load_model, make_generator
from pathogan.main import EXIT_IO, EXIT_NON_FINITE, EXIT_OK, EXIT_USAGE, exit_code, main
from pathogan.models.domain import Domain
from pathogan.services.evaluation import CSV_NAME, JSON_NAME, sample_pathology
from pathogan.services.training import LOCK_NAME, NonFiniteLoss

TINY_SETTINGS = [f'arch.{role}="{text}"' for role, text in TINY_ARCH.items()] + [
    "model.latent_size=4",
    "train.float64=true",
    "train.batch_size=4",
    "train.device=\"cpu\"",
    "augment.enabled=false",
    "data.pathology_threshold=0",
    "data.counts.healthy=6",
    "data.counts.pathological=6",
]


def _sets(items):
    args = []
    for item in items:
        args += ["--set", item]
    return args


@pytest.fixture
def phantom_dir(tmp_path):
    out = tmp_path / "phantom"
    code = main([
        "phantom", "--out", str(out), "--healthy", "8", "--pathological", "8", "--test", "4",
        "--size", "16", "--channels", "2", "--epochs", "1", "--seed", "3",
    ])
    assert code == EXIT_OK
    return out


@pytest.fixture
def checkpoint(phantom_dir, tmp_path):
    run_dir = tmp_path / "run"
    code = main(["train", "--config", str(phantom_dir / "phantom.toml"), "--run-dir", str(run_dir)] + _sets(TINY_SETTINGS))
    assert code == EXIT_OK
    return run_dir / "final.ckpt"


def test_phantom_writes_manifest_and_config(phantom_dir):
    manifest = json.loads((phantom_dir / "manifest.json").read_text())
    splits = [record["split"] for record in manifest["records"]]
    assert splits.count("test") == 1
    assert manifest["n_channels"] == 2
    assert "manifest" in (phantom_dir / "phantom.toml").read_text()


def test_train_evaluate_infer_render(checkpoint, tmp_path, capsys):
    assert checkpoint.is_file()
    assert main(["evaluate", "--checkpoint", str(checkpoint)]) == EXIT_OK
    out_dir = checkpoint.parent / "eval_test"
    assert (out_dir / CSV_NAME).is_file()
    report = json.loads((out_dir / JSON_NAME).read_text())
    assert report["split"] == "test"
    assert 0 < report["slices"] <= 4
    assert "Dice PP" in capsys.readouterr().out

    for mode, split in (("segment", "test"), ("inpaint", "test"), ("sample", "train")):
        out = tmp_path / mode
        args = ["infer", "--checkpoint", str(checkpoint), "--mode", mode, "--split", split, "--out", str(out)]
        assert main(args + ["--limit", "2"]) == EXIT_OK
        sidecars = sorted(out.glob("*.json"))
        assert len(sidecars) == 2
        assert json.loads(sidecars[0].read_text())["mode"] == mode
        assert len(list(out.glob("*.npz"))) == 2

    panel = tmp_path / "panel.png"
    assert main(["render-panel", "--checkpoint", str(checkpoint), "--out", str(panel)]) == EXIT_OK
    assert panel.is_file()
    arrays = np.load(next((tmp_path / "inpaint").glob("*.npz")))
    assert set(arrays.files) == {"inpaint", "healthy", "prob"}


def test_infer_on_array(checkpoint, tmp_path):
    array = tmp_path / "slices.npy"
    np.save(array, np.zeros((3, 2, 16, 16)))
    out = tmp_path / "out"
    assert main(["infer", "--checkpoint", str(checkpoint), "--input", str(array), "--out", str(out)]) == EXIT_OK
    assert len(list(out.glob("slices_*_prob.png"))) == 3


def test_render_panel_from_arrays(tmp_path):
    arrays = tmp_path / "arrays.npz"
    np.savez(
        arrays, inputs=np.zeros((2, 8, 8)), inpaintings=np.zeros((2, 8, 8)),
        probability=np.zeros((8, 8)), translated=np.zeros((2, 8, 8)),
    )
    assert main(["render-panel", "--arrays", str(arrays), "--out", str(tmp_path / "p.png")]) == EXIT_OK
    assert main(["render-panel", "--out", str(tmp_path / "q.png")]) == EXIT_USAGE


def test_usage_errors(checkpoint, tmp_path):
    assert main(["evaluate", "--checkpoint", str(checkpoint), "--threshold", "1.5"]) == EXIT_USAGE
    assert main(["evaluate", "--checkpoint", str(checkpoint), "--data", str(tmp_path / "x.npy")]) == EXIT_USAGE
    assert main(["train", "--run-dir", str(tmp_path / "nodata")]) == EXIT_USAGE


def test_io_errors(phantom_dir, tmp_path):
    assert main(["evaluate", "--checkpoint", str(tmp_path / "absent.ckpt")]) == EXIT_IO
    run_dir = tmp_path / "locked"
    run_dir.mkdir()
    (run_dir / LOCK_NAME).write_text("1")
    args = ["train", "--config", str(phantom_dir / "phantom.toml"), "--run-dir", str(run_dir)] + _sets(TINY_SETTINGS)
    assert main(args) == EXIT_IO


def test_non_finite_exit_code():
    assert exit_code(NonFiniteLoss("output_ab", {"output_ab": float("nan")})) == EXIT_NON_FINITE


def test_netspec_describe(capsys):
    assert main(["netspec", "describe", "encoder", "--input", "4,240,240"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "(512,)" in out
    assert main(["netspec", "describe", "c3-8,Q2F,c3-8"]) == EXIT_USAGE
    assert main(["netspec", "describe", "encoder", "--set", "model.image_size=250"]) == EXIT_USAGE
    assert main(["netspec", "describe", "l(z)", "--symbol", "z=8", "--input", "16"]) == EXIT_OK


def test_version():
    with pytest.raises(SystemExit) as exit_info:
        main(["--version"])
    assert exit_info.value.code == 0


@pytest.mark.slow
def test_phantom_run_segments_and_samples(tmp_path):
    out, run_dir = tmp_path / "phantom", tmp_path / "run"
    assert main(["phantom", "--out", str(out)]) == EXIT_OK
    args = ["train", "--config", str(out / "phantom.toml"), "--run-dir", str(run_dir)]
    assert main(args + _sets(["train.batch_size=4"])) == EXIT_OK
    checkpoint = run_dir / "final.ckpt"
    assert main(["evaluate", "--checkpoint", str(checkpoint)]) == EXIT_OK
    report = json.loads((run_dir / "eval_test" / JSON_NAME).read_text())
    assert report["slices"] == 50
    assert report["aggregate"]["dice"]["mean"] >= 60.0

    model, config, _ = load_model(checkpoint)
    healthy = input_slices(None, config, "train", Domain.A_HEALTHY)[:8]
    x_A = torch.as_tensor(np.stack([s.data for s in healthy]))
    device = next(model.parameters()).device
    first, second = (sample_pathology(model, x_A, make_generator(seed, device)) for seed in (0, 1))
    region = ((first.labelmap > 0.5) | (second.labelmap > 0.5)).expand_as(first.output)
    assert region.any()
    assert float((first.output - second.output).abs()[region].max()) > 0.05
