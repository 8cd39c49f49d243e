import io
import json

import jsonschema
import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from covifex.data import Dataset, Sample
from covifex.ensemble import ClassifierKind
from covifex.experiment import GridConfig, export_best_model, run_grid
from covifex.extract import stub_features
from covifex.service import (
    DISCLAIMER,
    PREDICTION_RESPONSE_SCHEMA,
    create_app,
)

STUB_DIM = 16
STUB_SEED = 5


def xray_png_bytes(seed=0, size=(96, 80)):
    rng = np.random.default_rng(seed)
    arr = rng.integers(0, 256, size=size, dtype=np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


@pytest.fixture(scope="module")
def deployed(tmp_path_factory):
    """Grid on stub features -> exported best model + manifest."""
    out = tmp_path_factory.mktemp("deploy")
    ds = Dataset(
        samples=tuple(
            Sample(id=f"d{i:03d}", modality="xray", label=i % 2, source_path=f"x/{i}.png")
            for i in range(48)
        )
    )
    feats = {
        "stub": stub_features(ds, dim=STUB_DIM, seed=STUB_SEED, label_shift=5.0,
                              extractor_name="stub")
    }
    cfg = GridConfig(
        extractors=("stub",),
        classifiers=(ClassifierKind.decision_tree, ClassifierKind.bagging),
        k=4,
        seed=3,
    )
    report = run_grid(feats, cfg)
    model_path, manifest_path = export_best_model(
        report, feats, out, backend_info={"type": "stub", "dim": STUB_DIM, "seed": STUB_SEED}
    )
    return model_path, manifest_path, report


@pytest.fixture(scope="module")
def client(deployed):
    model_path, manifest_path, _report = deployed
    app = create_app(model_path, manifest_path)
    with TestClient(app) as c:
        yield c


def test_health_ok_when_loaded(client):
    r = client.get("/api/v1/health")
    assert r.status_code == 200
    assert r.json() == {"status": "ok", "model_loaded": True}


def test_health_starting_without_model():
    app = create_app()
    with TestClient(app) as c:
        r = c.get("/api/v1/health")
        assert r.json() == {"status": "starting", "model_loaded": False}
        r = c.post(
            "/api/v1/predict",
            files={"image": ("a.png", xray_png_bytes(), "image/png")},
        )
        assert r.status_code == 503
        assert r.json()["error"]["code"] == "MODEL_NOT_LOADED"


def test_model_metadata_echoes_manifest(client, deployed):
    _model, manifest_path, report = deployed
    manifest = json.loads(manifest_path.read_text())
    r = client.get("/api/v1/model")
    assert r.status_code == 200
    body = r.json()
    assert body["extractor"] == manifest["extractor"]
    assert body["classifier"] == manifest["classifier"]
    assert body["provenance"]["report_checksum"] == manifest["report_checksum"]


def test_predict_valid_png(client):
    r = client.post(
        "/api/v1/predict",
        files={"image": ("scan.png", xray_png_bytes(1), "image/png")},
    )
    assert r.status_code == 200
    body = r.json()
    jsonschema.validate(body, PREDICTION_RESPONSE_SCHEMA)
    assert body["label"] in ("COVID-19 Positive", "COVID-19 Negative")
    assert 0.0 <= body["probability_positive"] <= 1.0
    assert body["disclaimer"] == DISCLAIMER
    assert (body["label"] == "COVID-19 Positive") == (body["probability_positive"] > 0.5)
    for stage in ("decode", "preprocess", "extract", "predict"):
        assert body["timing_ms"][stage] >= 0.0


def test_predict_deterministic_across_posts(client):
    payload = xray_png_bytes(2)
    r1 = client.post("/api/v1/predict", files={"image": ("s.png", payload, "image/png")})
    r2 = client.post("/api/v1/predict", files={"image": ("s.png", payload, "image/png")})
    assert r1.json()["probability_positive"] == r2.json()["probability_positive"]


def test_predict_rejects_text_upload(client):
    r = client.post(
        "/api/v1/predict",
        files={"image": ("notes.txt", b"definitely not an image", "text/plain")},
    )
    assert r.status_code == 400
    body = r.json()
    assert body["error"]["code"] == "BAD_IMAGE"
    assert "message" in body["error"]


def test_predict_rejects_oversized_upload(deployed):
    model_path, manifest_path, _ = deployed
    app = create_app(model_path, manifest_path, max_upload_bytes=1000)
    with TestClient(app) as c:
        big = xray_png_bytes(3, size=(512, 512))
        assert len(big) > 1000
        r = c.post("/api/v1/predict", files={"image": ("big.png", big, "image/png")})
        assert r.status_code == 413
        assert r.json()["error"]["code"] == "PAYLOAD_TOO_LARGE"


def test_schema_endpoint_serves_published_schema(client):
    r = client.get("/api/v1/schema/prediction")
    assert r.status_code == 200
    assert r.json() == PREDICTION_RESPONSE_SCHEMA


def test_concurrent_identical_requests_identical(client):
    import concurrent.futures

    payload = xray_png_bytes(4)

    def post():
        return client.post(
            "/api/v1/predict", files={"image": ("s.png", payload, "image/png")}
        ).json()["probability_positive"]

    with concurrent.futures.ThreadPoolExecutor(max_workers=4) as pool:
        results = list(pool.map(lambda _: post(), range(8)))
    assert len(set(results)) == 1
