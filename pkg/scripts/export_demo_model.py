#!/usr/bin/env python3
"""Build a self-contained demo deployment with no network files: a synthetic
manifest, stub-extracted features, a benchmark grid over them, the exported
best model + manifest, and a couple of PNGs to upload.

Afterwards:  covifex serve --model demo/best_model.cvmd
"""
import argparse
from pathlib import Path

import numpy as np
from PIL import Image

from covifex.data import Dataset, Sample
from covifex.ensemble import ALL_KINDS
from covifex.experiment import GridConfig, emit_report, export_best_model, run_grid
from covifex.extract import stub_features

STUB_DIM = 64
STUB_SEED = 0


def synthetic_dataset(n: int) -> Dataset:
    return Dataset(
        samples=tuple(
            Sample(
                id=f"demo{i:04d}",
                modality="xray" if i % 7 else "ct",
                label=i % 2,
                source_path=f"synthetic/{i}.png",
            )
            for i in range(n)
        )
    )


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("demo"))
    parser.add_argument("--n", type=int, default=200)
    parser.add_argument("--seed", type=int, default=42)
    args = parser.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    ds = synthetic_dataset(args.n)
    features = {
        "stub": stub_features(ds, dim=STUB_DIM, seed=STUB_SEED, label_shift=4.0,
                              extractor_name="stub")
    }
    cfg = GridConfig(extractors=("stub",), classifiers=ALL_KINDS, k=10, seed=args.seed)
    report = run_grid(features, cfg)
    emit_report(report, args.out / "reports")
    model_path, manifest_path = export_best_model(
        report,
        features,
        args.out,
        backend_info={"type": "stub", "dim": STUB_DIM, "seed": STUB_SEED},
    )

    rng = np.random.default_rng(7)
    for name in ("sample_a.png", "sample_b.png"):
        arr = rng.integers(0, 256, size=(128, 104), dtype=np.uint8)
        Image.fromarray(arr).save(args.out / name)

    best_ext, best_kind = report.best_cell()
    cell = report.cells[(best_ext, best_kind)]
    print(f"exported {model_path} and {manifest_path}")
    print(
        f"best cell: {best_ext} + {best_kind.value} "
        f"({cell.mean['accuracy'] * 100:.2f} ± {cell.std['accuracy'] * 100:.2f} accuracy)"
    )
    print(f"serve it:  covifex serve --model {model_path} --port 8080")
    print(f"try it:    curl -F image=@{args.out / 'sample_a.png'} http://127.0.0.1:8080/api/v1/predict")


if __name__ == "__main__":
    main()
