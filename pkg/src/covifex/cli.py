"""Command-line entry points.

Exit codes: 0 success, 2 validation failure (bad inputs/config),
3 I/O failure (unreadable or malformed files).
"""
from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from .data import dataset_from_manifest
from .ensemble import ALL_KINDS, ClassifierKind, default_config, model_save, train
from .errors import FileFormatError, ValidationError
from .experiment import (
    GridConfig,
    MANIFEST_SUFFIX,
    emit_report,
    export_best_model,
    run_grid,
)
from .extract import (
    FEATURE_FILE_SUFFIX,
    ExtractorSpec,
    StubBackend,
    extract_features,
    features_load,
    features_save,
    registry_get,
)
from .preprocess import PreprocessConfig

EXIT_VALIDATION = 2
EXIT_IO = 3


def cli_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ValidationError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_VALIDATION)
        except (FileFormatError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_IO)

    return wrapper


@click.group()
def main():
    """Chest X-ray/CT COVID-19 screening pipeline."""


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
@click.option("--extractor", "extractor_name", required=True,
              help="registry name, or 'stub' for the deterministic test extractor")
@click.option("--model-file", "model_file", type=click.Path(), default=None,
              help="TorchScript network file (required for registry extractors)")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--batch-size", default=8, show_default=True)
@click.option("--stub-dim", default=64, show_default=True)
@click.option("--stub-seed", default=0, show_default=True)
@click.option("--stub-shift", default=3.0, show_default=True,
              help="label-correlated feature shift for the stub extractor")
@cli_errors
def extract(manifest_path, extractor_name, model_file, out_path, batch_size,
            stub_dim, stub_seed, stub_shift):
    """Extract features for every manifest sample into a feature file."""
    ds = dataset_from_manifest(manifest_path)
    if extractor_name == "stub":
        spec = ExtractorSpec(name="stub", input_height=224, input_width=224)
        backend = StubBackend(
            dim=stub_dim, seed=stub_seed, label_shift=stub_shift,
            labels_by_id={s.id: s.label for s in ds.samples},
        )
        backend_info = {"type": "stub", "dim": stub_dim, "seed": stub_seed}
    else:
        spec = registry_get(extractor_name)
        if model_file is None:
            raise ValidationError(f"extractor {extractor_name} needs --model-file")
        from .extract import TorchScriptBackend

        backend = TorchScriptBackend(model_file, input_hw=(spec.input_height, spec.input_width))
        backend_info = {"type": "torchscript", "model_path": str(Path(model_file).resolve())}
    matrix, timing = extract_features(ds, spec, PreprocessConfig(), backend, batch_size=batch_size)
    features_save(matrix, out_path)
    # sidecar tells later stages (grid export, serving) how to rebuild the backend
    Path(f"{out_path}.backend.json").write_text(json.dumps(backend_info, indent=2) + "\n")
    click.echo(
        f"extracted {matrix.n} x {matrix.d} features with {spec.name} "
        f"in {timing.total_s:.3f}s ({timing.per_image_s:.4f}s/image) -> {out_path}"
    )


@main.command()
@click.option("--features-dir", "features_dir", required=True, type=click.Path())
@click.option("--k", default=10, show_default=True)
@click.option("--seed", default=42, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@cli_errors
def grid(features_dir, k, seed, out_dir):
    """Cross-validate all classifiers over every feature file in a directory."""
    directory = Path(features_dir)
    if not directory.is_dir():
        raise ValidationError(f"features directory {directory} does not exist")
    names = sorted(p.stem for p in directory.glob(f"*{FEATURE_FILE_SUFFIX}"))
    if not names:
        raise ValidationError(f"no {FEATURE_FILE_SUFFIX} files in {directory}")
    cfg = GridConfig(extractors=tuple(names), k=k, seed=seed, output_dir=Path(out_dir))
    report = run_grid(directory, cfg)
    written = emit_report(report, out_dir)
    best_name = report.best_cell()[0]
    sidecar = directory / f"{best_name}{FEATURE_FILE_SUFFIX}.backend.json"
    backend_info = json.loads(sidecar.read_text()) if sidecar.exists() else None
    model_path, manifest_path = export_best_model(report, directory, out_dir, backend_info=backend_info)
    best_ext, best_kind = report.best_cell()
    best = report.cells[(best_ext, best_kind)]
    click.echo(f"grid complete: {len(report.cells)} cells, reports in {out_dir}")
    click.echo(
        f"best cell: {best_ext} + {best_kind.value} "
        f"(accuracy {best.mean['accuracy'] * 100:.2f} ± {best.std['accuracy'] * 100:.2f})"
    )
    click.echo(f"exported {model_path.name} + {manifest_path.name}")
    for path in written:
        click.echo(f"  wrote {path}")


@main.command(name="train")
@click.option("--features", "features_path", required=True, type=click.Path())
@click.option("--classifier", "classifier", required=True,
              type=click.Choice([k.value for k in ALL_KINDS]))
@click.option("--seed", default=42, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@cli_errors
def train_cmd(features_path, classifier, seed, out_path):
    """Train one classifier on a feature file and save the model."""
    matrix = features_load(features_path)
    kind = ClassifierKind(classifier)
    model = train(kind, matrix, default_config(kind, seed=seed))
    model_save(model, out_path)
    manifest = {
        "schema_version": 1,
        "model_file": Path(out_path).name,
        "extractor": matrix.extractor_name,
        "classifier": kind.value,
        "feature_dim": model.feature_dim,
        "backend": {"type": "unspecified"},
    }
    manifest_path = Path(out_path).with_name(Path(out_path).stem + MANIFEST_SUFFIX)
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    click.echo(
        f"trained {kind.value} on {matrix.n} x {matrix.d} features "
        f"({model.train_time_s:.3f}s) -> {out_path}"
    )


@main.command(name="predict")
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--image", "image_path", required=True, type=click.Path())
@click.option("--manifest", "manifest_path", type=click.Path(), default=None,
              help="deployment manifest; defaults to the model's sibling file")
@click.option("--extractor-model", "extractor_model", type=click.Path(), default=None,
              help="TorchScript network file overriding the manifest backend")
@cli_errors
def predict_cmd(model_path, image_path, manifest_path, extractor_model):
    """Classify one image with a saved model and print the JSON verdict."""
    from .service import PredictionEngine

    engine = PredictionEngine.load(model_path, manifest_path, extractor_model)
    payload = Path(image_path).read_bytes()
    response = engine.predict_image(payload, request_id="cli")
    click.echo(json.dumps(response, indent=2))


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(),
              envvar="COVIFEX_MODEL")
@click.option("--manifest", "manifest_path", type=click.Path(), default=None)
@click.option("--extractor-model", "extractor_model", type=click.Path(), default=None,
              envvar="COVIFEX_EXTRACTOR_MODEL")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8080, show_default=True, envvar="COVIFEX_PORT")
@cli_errors
def serve(model_path, manifest_path, extractor_model, host, port):
    """Serve the prediction API over HTTP."""
    import uvicorn

    from .service import create_app

    app = create_app(model_path, manifest_path, extractor_model)
    click.echo(f"serving on http://{host}:{port} (docs at /docs)")
    uvicorn.run(app, host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
