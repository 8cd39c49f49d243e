#!/usr/bin/env python3
"""Run the full six-classifier benchmark on the synthetic reference dataset
and write the report files.

Usage: python scripts/run_reference_grid.py [--out reports-reference] [--k 10] [--seed 42]
"""
import argparse
from pathlib import Path

from covifex.ensemble import ALL_KINDS
from covifex.experiment import GridConfig, emit_report, run_grid
from covifex.synthetic import reference_blobs


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("reports-reference"))
    parser.add_argument("--k", type=int, default=10)
    parser.add_argument("--seed", type=int, default=42)
    args = parser.parse_args()

    features = {"reference-blobs": reference_blobs(seed=args.seed)}
    cfg = GridConfig(
        extractors=("reference-blobs",), classifiers=ALL_KINDS, k=args.k, seed=args.seed
    )
    report = run_grid(features, cfg)
    written = emit_report(report, args.out)

    print(f"{'classifier':18s} {'accuracy':>16s} {'train s/fold':>13s}")
    for kind in ALL_KINDS:
        cell = report.cells[("reference-blobs", kind)]
        acc = f"{cell.mean['accuracy'] * 100:.2f} ± {cell.std['accuracy'] * 100:.2f}"
        print(f"{kind.value:18s} {acc:>16s} {cell.mean['train_time_s']:>13.3f}")
    best_ext, best_kind = report.best_cell()
    print(f"\nbest: {best_kind.value} ({best_ext})")
    for path in written:
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
