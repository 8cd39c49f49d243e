import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from covifex.cli import EXIT_IO, EXIT_VALIDATION, main
from covifex.extract import features_load


@pytest.fixture()
def runner():
    return CliRunner()


def write_manifest(path: Path, n=40):
    lines = ["id,path,modality,label"]
    for i in range(n):
        lines.append(f"m{i:03d},images/{i}.png,xray,{i % 2}")
    path.write_text("\n".join(lines) + "\n")
    return path


def test_extract_stub_and_train_and_predict(runner, tmp_path):
    manifest = write_manifest(tmp_path / "data.csv")
    feats = tmp_path / "stub.cvfx"
    r = runner.invoke(
        main,
        ["extract", "--manifest", str(manifest), "--extractor", "stub",
         "--out", str(feats), "--stub-dim", "12", "--stub-shift", "5.0"],
    )
    assert r.exit_code == 0, r.output
    m = features_load(feats)
    assert (m.n, m.d) == (40, 12)

    model = tmp_path / "model.cvmd"
    r = runner.invoke(
        main,
        ["train", "--features", str(feats), "--classifier", "bagging",
         "--seed", "7", "--out", str(model)],
    )
    assert r.exit_code == 0, r.output
    assert model.exists()
    manifest_file = tmp_path / "model.manifest.json"
    assert manifest_file.exists()
    assert json.loads(manifest_file.read_text())["classifier"] == "bagging"


def test_grid_command_end_to_end(runner, tmp_path):
    manifest = write_manifest(tmp_path / "data.csv")
    feat_dir = tmp_path / "features"
    feat_dir.mkdir()
    for name, seed in (("alpha", 1), ("beta", 2)):
        r = runner.invoke(
            main,
            ["extract", "--manifest", str(manifest), "--extractor", "stub",
             "--out", str(feat_dir / f"{name}.cvfx"),
             "--stub-dim", "10", "--stub-seed", str(seed), "--stub-shift", "5.0"],
        )
        assert r.exit_code == 0, r.output
    out_dir = tmp_path / "reports"
    r = runner.invoke(
        main,
        ["grid", "--features-dir", str(feat_dir), "--k", "4", "--seed", "42",
         "--out", str(out_dir)],
    )
    assert r.exit_code == 0, r.output
    assert "best cell:" in r.output
    assert (out_dir / "report_accuracy.csv").exists()
    assert (out_dir / "best_model.cvmd").exists()
    assert (out_dir / "best_model.manifest.json").exists()

    # predict against the exported model via the stub backend in the manifest
    import io

    from PIL import Image

    img = tmp_path / "scan.png"
    arr = (np.random.default_rng(0).integers(0, 256, size=(64, 64))).astype(np.uint8)
    Image.fromarray(arr).save(img)
    r = runner.invoke(
        main, ["predict", "--model", str(out_dir / "best_model.cvmd"), "--image", str(img)]
    )
    assert r.exit_code == 0, r.output
    body = json.loads(r.output)
    assert body["label"] in ("COVID-19 Positive", "COVID-19 Negative")


def test_exit_code_validation_failure(runner, tmp_path):
    bad_manifest = tmp_path / "bad.csv"
    bad_manifest.write_text("id,path,modality,label\nx,y.png,sonogram,1\n")
    r = runner.invoke(
        main,
        ["extract", "--manifest", str(bad_manifest), "--extractor", "stub",
         "--out", str(tmp_path / "f.cvfx")],
    )
    assert r.exit_code == EXIT_VALIDATION
    assert "error:" in r.output


def test_exit_code_io_failure(runner, tmp_path):
    junk = tmp_path / "junk.cvfx"
    junk.write_bytes(b"not a feature file")
    r = runner.invoke(
        main,
        ["train", "--features", str(junk), "--classifier", "bagging",
         "--out", str(tmp_path / "m.cvmd")],
    )
    assert r.exit_code == EXIT_IO
    assert "error:" in r.output


def test_registry_extractor_requires_model_file(runner, tmp_path):
    manifest = write_manifest(tmp_path / "d.csv", n=4)
    r = runner.invoke(
        main,
        ["extract", "--manifest", str(manifest), "--extractor", "DenseNet121",
         "--out", str(tmp_path / "f.cvfx")],
    )
    assert r.exit_code == EXIT_VALIDATION
    assert "model-file" in r.output
