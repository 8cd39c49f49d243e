"""Acceptance gate: every release criterion as one test with its stated
tolerance and runtime budget. The conftest hook prints one PASS/FAIL line
per criterion.

The full-scale reproduction tier is conditional: it runs only when a real
dataset manifest and a converted extractor network are supplied via
COVIFEX_DATASET_MANIFEST and COVIFEX_EXTRACTOR_FILE, and its outcome is
informational (recorded with environment provenance).
"""
import io
import json
import math
import os
import time

import jsonschema
import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from covifex.data import Dataset, Sample
from covifex.ensemble import (
    ALL_KINDS,
    ClassifierKind,
    EnsembleConfig,
    default_config,
    predict_proba,
    samme_alpha,
    samme_update,
    train,
)
from covifex.evaluation import confusion, cross_validate, metrics, stratified_kfold
from covifex.experiment import GridConfig, emit_report, export_best_model, run_grid
from covifex.extract import stub_features
from covifex.preprocess import (
    PreprocessConfig,
    min_max_normalize,
    preprocess_pipeline,
    resize_bilinear,
)
from covifex.service import PREDICTION_RESPONSE_SCHEMA, create_app
from covifex.synthetic import reference_blobs
from covifex.tree import TreeConfig, build_cart, tree_predict_proba_matrix
from covifex.data import ImageTensor

from oracles import brute_force_metrics, ref_build_tree, ref_predict


def test_metrics_oracle_exact():
    """metrics(confusion(...)) == brute-force recount, 1000 random pairs."""
    t0 = time.perf_counter()
    got = metrics(confusion(np.array([1] * 4 + [0] * 6),
                            np.array([1, 1, 1, 0, 0, 0, 0, 0, 0, 1])))
    assert (got.accuracy, got.precision, got.recall, got.f1) == (0.8, 0.75, 0.75, 0.75)
    rng = np.random.default_rng(1)
    for _ in range(1000):
        n = int(rng.integers(1, 50))
        y_true = rng.integers(0, 2, size=n)
        y_pred = rng.integers(0, 2, size=n)
        c = confusion(y_true, y_pred)
        (tp, fp, tn, fn), want = brute_force_metrics(y_true, y_pred)
        assert (c.tp, c.fp, c.tn, c.fn) == (tp, fp, tn, fn)
        m = metrics(c)
        assert (m.accuracy, m.precision, m.recall, m.f1) == want
    assert time.perf_counter() - t0 < 1.0


def test_cart_oracle_equivalence():
    """Training predictions match the exhaustive-enumeration reference on
    200 random datasets (n <= 30, d <= 3) within 30 s."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    for trial in range(200):
        n = int(rng.integers(2, 31))
        d = int(rng.integers(1, 4))
        if trial % 3 == 0:
            X = rng.integers(0, 4, size=(n, d)).astype(float)  # duplicate-heavy
        else:
            X = rng.normal(size=(n, d))
        y = rng.integers(0, 2, size=n)
        tree = build_cart(X, y, None, TreeConfig())
        ref = ref_build_tree([tuple(r) for r in X], list(y), [1.0] * n)
        got = np.argmax(tree_predict_proba_matrix(tree, X), axis=1)
        want = np.array([ref_predict(ref, x) for x in X])
        np.testing.assert_array_equal(got, want)
    assert time.perf_counter() - t0 < 30.0


def test_fold_plan_properties():
    """Partition/disjointness/per-class balance on 200 random plans; the
    274-sample balanced case lands 13 or 14 per class per fold. < 5 s."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    done = 0
    while done < 200:
        n = int(rng.integers(20, 501))
        k = int(rng.integers(2, 11))
        labels = rng.integers(0, 2, size=n)
        if np.bincount(labels, minlength=2).min() < k:
            continue
        plan = stratified_kfold(labels, k, int(rng.integers(0, 10_000)))
        flat = sorted(i for f in plan.folds for i in f)
        assert flat == list(range(n))
        for cls in (0, 1):
            per_fold = [sum(1 for i in f if labels[i] == cls) for f in plan.folds]
            assert max(per_fold) - min(per_fold) <= 1
        done += 1

    labels = np.array([1] * 137 + [0] * 137)
    plan = stratified_kfold(labels, 10, seed=42)
    for f in plan.folds:
        for cls in (0, 1):
            assert sum(1 for i in f if labels[i] == cls) in (13, 14)
    assert time.perf_counter() - t0 < 5.0


def test_reference_dataset_grid():
    """All six classifiers >= 0.95 ten-fold mean accuracy on the two-Gaussian
    reference set; bagging and forest >= 0.98. < 60 s."""
    t0 = time.perf_counter()
    X = reference_blobs(n=200, dim=16, separation_sigmas=6.0, seed=42)
    plan = stratified_kfold(X.labels, k=10, seed=42)
    means = {}
    for kind in ALL_KINDS:
        summary = cross_validate(kind, X, default_config(kind, seed=42), plan)
        means[kind] = summary.mean["accuracy"]
        assert means[kind] >= 0.95, f"{kind.value}: {means[kind]:.4f}"
    for kind in (ClassifierKind.bagging, ClassifierKind.random_forest):
        assert means[kind] >= 0.98, f"{kind.value}: {means[kind]:.4f}"
    assert time.perf_counter() - t0 < 60.0


def test_adaboost_arithmetic():
    """One boosting round at eps = 0.25: alpha = ln 3 +- 1e-12 and the
    reweighted distribution sums to 1 +- 1e-12."""
    alpha = samme_alpha(0.25)
    assert abs(alpha - math.log(3.0)) <= 1e-12
    w = np.full(16, 1.0 / 16)
    miss = np.zeros(16, dtype=bool)
    miss[:4] = True  # exactly a quarter of the weight is wrong
    w2 = samme_update(w, miss, alpha)
    assert abs(w2.sum() - 1.0) <= 1e-12


def test_gbdt_optimization_property():
    """Train log-loss is non-increasing across 50 rounds (lr 0.1, lambda 1.0)
    on the reference set; balanced labels start at score 0."""
    X = reference_blobs()
    cfg = EnsembleConfig(
        n_estimators=50, learning_rate=0.1, l2_leaf_penalty=1.0, max_depth=6, rng_seed=42
    )
    model = train(ClassifierKind.gbdt_levelwise, X, cfg)
    assert model.initial_score == 0.0
    curve = np.array(model.train_curve)
    assert len(curve) == 50
    assert (np.diff(curve) <= 1e-12).all()


def test_determinism_grid_and_model(tmp_path):
    """Identical seeds give byte-identical metric CSV reports and
    bit-identical predictions through a save/load round trip."""
    ds = Dataset(
        samples=tuple(
            Sample(id=f"a{i:03d}", modality="xray", label=i % 2, source_path=f"x/{i}.png")
            for i in range(60)
        )
    )
    feats = {"stub": stub_features(ds, dim=12, seed=42, label_shift=5.0, extractor_name="stub")}
    cfg = GridConfig(extractors=("stub",), classifiers=ALL_KINDS, k=5, seed=42)
    emit_report(run_grid(feats, cfg), tmp_path / "r1")
    emit_report(run_grid(feats, cfg), tmp_path / "r2")
    for metric in ("accuracy", "precision", "recall", "f1"):
        a = (tmp_path / "r1" / f"report_{metric}.csv").read_bytes()
        b = (tmp_path / "r2" / f"report_{metric}.csv").read_bytes()
        assert a == b, metric

    model = train(ClassifierKind.random_forest, feats["stub"],
                  EnsembleConfig(n_estimators=15, rng_seed=42))
    from covifex.ensemble import model_load, model_save

    model_save(model, tmp_path / "model.cvmd")
    clone = model_load(tmp_path / "model.cvmd")
    grid = np.random.default_rng(0).normal(size=(100, feats["stub"].d))
    assert predict_proba(model, grid).tobytes() == predict_proba(clone, grid).tobytes()


def test_preprocessing_criteria():
    """Min-max outputs live in [0,1] with exact endpoints on 100 random
    images; the pipeline is bit-deterministic; resize respects input bounds."""
    rng = np.random.default_rng(11)
    for _ in range(100):
        h, w = rng.integers(2, 40, size=2)
        data = rng.uniform(0, 255, size=(int(h), int(w), 1)).astype(np.float32)
        img = ImageTensor(data=data, intensity_range=(0.0, 255.0))
        out = min_max_normalize(img)
        assert out.data.min() == 0.0
        assert out.data.max() == 1.0
        assert (out.data >= 0.0).all() and (out.data <= 1.0).all()

    img = ImageTensor(
        data=rng.uniform(0, 255, size=(90, 70, 1)).astype(np.float32),
        intensity_range=(0.0, 255.0),
    )
    cfg = PreprocessConfig(target_height=32, target_width=32)
    assert preprocess_pipeline(img, cfg).data.tobytes() == preprocess_pipeline(img, cfg).data.tobytes()

    resized = resize_bilinear(img, 17, 23)
    assert resized.data.min() >= img.data.min()
    assert resized.data.max() <= img.data.max()


def _png_bytes(seed=0, size=(80, 60)):
    arr = np.random.default_rng(seed).integers(0, 256, size=size, dtype=np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def test_service_round_trip(tmp_path):
    """Boot on an exported stub-backed model; a PNG upload returns a
    schema-valid 200 in under 2 s, a text upload returns 400 BAD_IMAGE."""
    ds = Dataset(
        samples=tuple(
            Sample(id=f"s{i:03d}", modality="xray", label=i % 2, source_path=f"x/{i}.png")
            for i in range(48)
        )
    )
    feats = {"stub": stub_features(ds, dim=16, seed=9, label_shift=5.0, extractor_name="stub")}
    cfg = GridConfig(
        extractors=("stub",),
        classifiers=(ClassifierKind.bagging, ClassifierKind.decision_tree),
        k=4, seed=9,
    )
    report = run_grid(feats, cfg)
    model_path, manifest_path = export_best_model(
        report, feats, tmp_path, backend_info={"type": "stub", "dim": 16, "seed": 9}
    )
    app = create_app(model_path, manifest_path)
    with TestClient(app) as client:
        t0 = time.perf_counter()
        r = client.post(
            "/api/v1/predict", files={"image": ("scan.png", _png_bytes(5), "image/png")}
        )
        elapsed = time.perf_counter() - t0
        assert r.status_code == 200
        jsonschema.validate(r.json(), PREDICTION_RESPONSE_SCHEMA)
        assert elapsed < 2.0

        r = client.post(
            "/api/v1/predict", files={"image": ("n.txt", b"not an image", "text/plain")}
        )
        assert r.status_code == 400
        assert r.json()["error"]["code"] == "BAD_IMAGE"


@pytest.mark.skipif(
    not (os.environ.get("COVIFEX_DATASET_MANIFEST") and os.environ.get("COVIFEX_EXTRACTOR_FILE")),
    reason="full-scale reproduction needs COVIFEX_DATASET_MANIFEST and "
    "COVIFEX_EXTRACTOR_FILE (converted DenseNet121 network)",
)
def test_paper_scale_reproduction_conditional(tmp_path):
    """Informational tier: with the real dataset and a converted DenseNet121
    network supplied, bagging under 10-fold CV should reach >= 0.90 mean
    accuracy. Recorded with environment provenance, not a hard gate."""
    from covifex.data import dataset_from_manifest
    from covifex.extract import TorchScriptBackend, extract_features, registry_get

    ds = dataset_from_manifest(os.environ["COVIFEX_DATASET_MANIFEST"])
    spec = registry_get("DenseNet121")
    backend = TorchScriptBackend(
        os.environ["COVIFEX_EXTRACTOR_FILE"],
        input_hw=(spec.input_height, spec.input_width),
    )
    matrix, timing = extract_features(ds, spec, PreprocessConfig(), backend)
    plan = stratified_kfold(matrix.labels, k=10, seed=42)
    summary = cross_validate(
        ClassifierKind.bagging, matrix, default_config(ClassifierKind.bagging, 42), plan
    )
    record = {
        "extractor": "DenseNet121",
        "classifier": "bagging",
        "mean_accuracy": summary.mean["accuracy"],
        "std_accuracy": summary.std["accuracy"],
        "extraction_s": timing.total_s,
        "n": matrix.n,
    }
    (tmp_path / "reproduction.json").write_text(json.dumps(record, indent=2))
    print(f"[reproduction] {record}")
    assert summary.mean["accuracy"] >= 0.90
