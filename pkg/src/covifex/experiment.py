"""Benchmark grid orchestration: run every requested (extractor, classifier)
pair under one shared fold plan per extractor, emit metric/timing reports as
CSV and Markdown, and export the winning model for deployment.

The four metric CSVs are byte-deterministic for a fixed seed and input;
wall-clock timings live in separate files so reruns stay comparable.
"""
from __future__ import annotations

import hashlib
import json
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Union

import numpy as np

from .data import FeatureMatrix, feature_matrix_validate
from .ensemble import (
    ALL_KINDS,
    ClassifierKind,
    EnsembleConfig,
    default_config,
    model_save,
    train,
)
from .errors import ValidationError
from .evaluation import MetricSummary, cross_validate, macro_metrics, stratified_kfold
from .extract import FEATURE_FILE_SUFFIX, REFERENCE_HARDWARE, ExtractionTiming, features_load
from .preprocess import PreprocessConfig

METRIC_TABLES = ("accuracy", "precision", "recall", "f1")

# Published wall-clock reference points, measured on REFERENCE_HARDWARE for
# the 274-image dataset; echoed as report footnotes for context.
REFERENCE_TIMING_NOTES = (
    "DenseNet121 extraction 9.306 s; Bagging training on DenseNet121 features 30.748 s",
    "ResNet50 extraction 10.206 s; LightGBM-style training on ResNet50 features 0.960 s",
)


@dataclass(frozen=True)
class GridConfig:
    extractors: tuple[str, ...]
    classifiers: tuple[ClassifierKind, ...] = ALL_KINDS
    k: int = 10
    seed: int = 42
    overrides: Mapping[ClassifierKind, EnsembleConfig] = field(default_factory=dict)
    output_dir: Optional[Path] = None

    def __post_init__(self) -> None:
        if not self.extractors:
            raise ValidationError("grid needs at least one extractor")
        if not self.classifiers:
            raise ValidationError("grid needs at least one classifier")
        if self.k < 2:
            raise ValidationError(f"k must be >= 2, got {self.k}")

    def classifier_config(self, kind: ClassifierKind) -> EnsembleConfig:
        if kind in self.overrides:
            return self.overrides[kind]
        return default_config(kind, seed=self.seed)


@dataclass
class GridReport:
    extractors: tuple[str, ...]
    classifiers: tuple[ClassifierKind, ...]
    k: int
    seed: int
    cells: dict[tuple[str, ClassifierKind], MetricSummary]
    extraction_timings: dict[str, Optional[ExtractionTiming]]
    environment: dict
    configs: dict[ClassifierKind, EnsembleConfig]

    def best_cell(self) -> tuple[str, ClassifierKind]:
        """Highest mean accuracy; ties go to the lower mean training time,
        then to grid order."""
        ranked = sorted(
            self.cells.items(),
            key=lambda item: (-item[1].mean["accuracy"], item[1].mean["train_time_s"]),
        )
        return ranked[0][0]


FeaturesInput = Union[Mapping[str, FeatureMatrix], str, Path]


def _resolve_features(source: FeaturesInput, extractors: tuple[str, ...]) -> dict[str, FeatureMatrix]:
    if isinstance(source, (str, Path)):
        directory = Path(source)
        if not directory.is_dir():
            raise ValidationError(f"features directory {directory} does not exist")
        found: dict[str, FeatureMatrix] = {}
        missing = []
        for name in extractors:
            path = directory / f"{name}{FEATURE_FILE_SUFFIX}"
            if not path.exists():
                missing.append(str(path))
                continue
            found[name] = features_load(path)
        if missing:
            raise ValidationError("missing feature files: " + ", ".join(missing))
        return found
    missing = [name for name in extractors if name not in source]
    if missing:
        raise ValidationError("missing features for extractors: " + ", ".join(missing))
    return {name: source[name] for name in extractors}


def _environment_record(cfg: GridConfig) -> dict:
    return {
        "host": platform.node(),
        "platform": platform.platform(),
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "clock": "time.perf_counter (monotonic)",
        "seed": cfg.seed,
        "k": cfg.k,
        "reference_hardware": REFERENCE_HARDWARE,
    }


def run_grid(
    features: FeaturesInput,
    cfg: GridConfig,
    extraction_timings: Optional[Mapping[str, ExtractionTiming]] = None,
) -> GridReport:
    """Cross-validate every (extractor, classifier) cell.

    All requested inputs are resolved and validated before any training
    starts, so a missing feature file fails the run up front. Within one
    extractor, all classifiers share a single fold plan (paired folds).
    ``extraction_timings`` carries wall-clock numbers when extraction ran
    in the same process; grids over saved feature files leave it empty.
    """
    by_extractor = _resolve_features(features, cfg.extractors)
    for name, matrix in by_extractor.items():
        feature_matrix_validate(matrix)
        counts = np.bincount(matrix.labels, minlength=2)
        if counts.min() < cfg.k:
            raise ValidationError(
                f"extractor {name}: smallest class has {counts.min()} samples, fewer than k={cfg.k}"
            )

    cells: dict[tuple[str, ClassifierKind], MetricSummary] = {}
    timings: dict[str, Optional[ExtractionTiming]] = {}
    for name in cfg.extractors:
        matrix = by_extractor[name]
        timings[name] = extraction_timings.get(name) if extraction_timings else None
        plan = stratified_kfold(matrix.labels, cfg.k, cfg.seed)
        for kind in cfg.classifiers:
            cells[(name, kind)] = cross_validate(kind, matrix, cfg.classifier_config(kind), plan)

    return GridReport(
        extractors=tuple(cfg.extractors),
        classifiers=tuple(cfg.classifiers),
        k=cfg.k,
        seed=cfg.seed,
        cells=cells,
        extraction_timings=timings,
        environment=_environment_record(cfg),
        configs={kind: cfg.classifier_config(kind) for kind in cfg.classifiers},
    )


def format_cell(mean: float, std: float) -> str:
    """Percentage rendering used by the Markdown tables: 0.99 -> '99.00'."""
    return f"{mean * 100:.2f} ± {std * 100:.2f}"


def _metric_csv(report: GridReport, metric: str) -> str:
    lines = ["extractor,classifier," + "mean,std," + ",".join(f"fold_{i}" for i in range(report.k))]
    for name in report.extractors:
        for kind in report.classifiers:
            cell = report.cells[(name, kind)]
            folds = [getattr(f, metric) for f in cell.per_fold]
            row = [name, kind.value, repr(cell.mean[metric]), repr(cell.std[metric])]
            row += [repr(v) for v in folds]
            lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _rank_cells(report: GridReport, metric: str) -> list[tuple[str, ClassifierKind]]:
    keys = [(n, k) for n in report.extractors for k in report.classifiers]
    return sorted(keys, key=lambda key: -report.cells[key].mean[metric])


def _metric_markdown(report: GridReport, metric: str) -> str:
    ranked = _rank_cells(report, metric)
    best = ranked[0] if ranked else None
    second = ranked[1] if len(ranked) > 1 else None
    header = "| | " + " | ".join(k.value for k in report.classifiers) + " |"
    divider = "|---" * (len(report.classifiers) + 1) + "|"
    lines = [f"# {metric} (mean ± population std over {report.k} folds, x100)", "", header, divider]
    for name in report.extractors:
        row = [f"**{name}**"]
        for kind in report.classifiers:
            cell = report.cells[(name, kind)]
            text = format_cell(cell.mean[metric], cell.std[metric])
            if (name, kind) == best:
                text = f"**{text}**"
            elif (name, kind) == second:
                text = f"<u>{text}</u>"
            row.append(text)
        lines.append("| " + " | ".join(row) + " |")
    lines += ["", "Bold marks the best cell; underline marks the second best.", ""]
    return "\n".join(lines)


def _timing_csv(report: GridReport) -> str:
    lines = [
        "extractor,classifier,extraction_total_s,extraction_per_image_s,"
        "extraction_n_images,train_time_mean_s,train_time_std_s,predict_time_mean_s"
    ]
    for name in report.extractors:
        t = report.extraction_timings.get(name)
        ext_total = repr(t.total_s) if t else ""
        ext_per = repr(t.per_image_s) if t else ""
        ext_n = str(t.n_images) if t else ""
        for kind in report.classifiers:
            cell = report.cells[(name, kind)]
            lines.append(
                ",".join(
                    [
                        name,
                        kind.value,
                        ext_total,
                        ext_per,
                        ext_n,
                        repr(cell.mean["train_time_s"]),
                        repr(cell.std["train_time_s"]),
                        repr(cell.mean["predict_time_s"]),
                    ]
                )
            )
    return "\n".join(lines) + "\n"


def _timing_markdown(report: GridReport) -> str:
    header = "| | extraction (s) | " + " | ".join(f"{k.value} train (s)" for k in report.classifiers) + " |"
    divider = "|---" * (len(report.classifiers) + 2) + "|"
    lines = ["# wall-clock timings", "", header, divider]
    for name in report.extractors:
        t = report.extraction_timings.get(name)
        row = [f"**{name}**", f"{t.total_s:.3f}" if t else "-"]
        for kind in report.classifiers:
            row.append(f"{report.cells[(name, kind)].mean['train_time_s'] * report.k:.3f}")
        lines.append("| " + " | ".join(row) + " |")
    lines += [
        "",
        f"Environment: {report.environment['platform']}, python {report.environment['python']}.",
        f"Reference points on {REFERENCE_HARDWARE}: " + "; ".join(REFERENCE_TIMING_NOTES) + ".",
        "",
    ]
    return "\n".join(lines)


def _folds_csv(report: GridReport) -> str:
    lines = [
        "extractor,classifier,fold,accuracy,precision,recall,f1,"
        "macro_precision,macro_recall,macro_f1,tp,fp,tn,fn,degenerate,"
        "train_time_s,predict_time_s"
    ]
    for name in report.extractors:
        for kind in report.classifiers:
            for i, f in enumerate(report.cells[(name, kind)].per_fold):
                mp, mr, mf = macro_metrics(f.confusion)
                lines.append(
                    ",".join(
                        [
                            name, kind.value, str(i),
                            repr(f.accuracy), repr(f.precision), repr(f.recall), repr(f.f1),
                            repr(mp), repr(mr), repr(mf),
                            str(f.confusion.tp), str(f.confusion.fp),
                            str(f.confusion.tn), str(f.confusion.fn),
                            str(int(f.degenerate)),
                            repr(f.train_time_s), repr(f.predict_time_s),
                        ]
                    )
                )
    return "\n".join(lines) + "\n"


def report_checksum(report: GridReport) -> str:
    """SHA-256 over the four deterministic metric CSV renderings."""
    h = hashlib.sha256()
    for metric in METRIC_TABLES:
        h.update(_metric_csv(report, metric).encode("utf-8"))
    return h.hexdigest()


def emit_report(report: GridReport, output_dir: str | Path, formats=("csv", "markdown")) -> list[Path]:
    """Write report files; returns the written paths.

    CSV set: report_{accuracy,precision,recall,f1}.csv (deterministic,
    raw per-fold values), report_timing.csv and report_folds.csv
    (wall-clock, vary run to run), report_env.json (provenance).
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def write(name: str, text: str) -> None:
        path = output_dir / name
        path.write_text(text, encoding="utf-8", newline="\n")
        written.append(path)

    if "csv" in formats:
        for metric in METRIC_TABLES:
            write(f"report_{metric}.csv", _metric_csv(report, metric))
        write("report_timing.csv", _timing_csv(report))
        write("report_folds.csv", _folds_csv(report))
    if "markdown" in formats:
        for metric in METRIC_TABLES:
            write(f"report_{metric}.md", _metric_markdown(report, metric))
        write("report_timing.md", _timing_markdown(report))

    env = dict(report.environment)
    env["report_checksum"] = report_checksum(report)
    env["best_cell"] = {
        "extractor": report.best_cell()[0],
        "classifier": report.best_cell()[1].value,
    }
    env["classifier_configs"] = {
        kind.value: _config_dict(cfgobj) for kind, cfgobj in report.configs.items()
    }
    write("report_env.json", json.dumps(env, indent=2, sort_keys=True) + "\n")
    return written


def _config_dict(cfg: EnsembleConfig) -> dict:
    return {
        "n_estimators": cfg.n_estimators,
        "learning_rate": cfg.learning_rate,
        "max_depth": cfg.max_depth,
        "num_leaves": cfg.num_leaves,
        "n_bins": cfg.n_bins,
        "subsample_ratio": cfg.subsample_ratio,
        "feature_subsample": cfg.feature_subsample,
        "rng_seed": cfg.rng_seed,
        "l2_leaf_penalty": cfg.l2_leaf_penalty,
        "bootstrap": cfg.bootstrap,
    }


def load_grid_report(output_dir: str | Path) -> GridReport:
    """Rebuild a GridReport from an emitted report directory.

    Per-fold values are stored at full precision (shortest round-trip
    repr), so regenerating the report from a loaded one reproduces the
    metric CSVs and Markdown byte for byte.
    """
    output_dir = Path(output_dir)
    env = json.loads((output_dir / "report_env.json").read_text())

    from .evaluation import ConfusionCounts, FoldMetrics

    rows: list[dict] = []
    lines = (output_dir / "report_folds.csv").read_text().splitlines()
    header = lines[0].split(",")
    for line in lines[1:]:
        rows.append(dict(zip(header, line.split(","))))

    extractors: list[str] = []
    classifiers: list[ClassifierKind] = []
    grouped: dict[tuple[str, ClassifierKind], list[FoldMetrics]] = {}
    for row in rows:
        name = row["extractor"]
        kind = ClassifierKind(row["classifier"])
        if name not in extractors:
            extractors.append(name)
        if kind not in classifiers:
            classifiers.append(kind)
        grouped.setdefault((name, kind), []).append(
            FoldMetrics(
                accuracy=float(row["accuracy"]),
                precision=float(row["precision"]),
                recall=float(row["recall"]),
                f1=float(row["f1"]),
                train_time_s=float(row["train_time_s"]),
                predict_time_s=float(row["predict_time_s"]),
                confusion=ConfusionCounts(
                    tp=int(row["tp"]), fp=int(row["fp"]),
                    tn=int(row["tn"]), fn=int(row["fn"]),
                ),
                degenerate=bool(int(row["degenerate"])),
            )
        )

    cells = {key: MetricSummary.from_folds(folds) for key, folds in grouped.items()}

    timings: dict[str, Optional[ExtractionTiming]] = {name: None for name in extractors}
    timing_path = output_dir / "report_timing.csv"
    if timing_path.exists():
        tlines = timing_path.read_text().splitlines()
        theader = tlines[0].split(",")
        for line in tlines[1:]:
            row = dict(zip(theader, line.split(",")))
            if row.get("extraction_total_s"):
                timings[row["extractor"]] = ExtractionTiming(
                    total_s=float(row["extraction_total_s"]),
                    per_image_s=float(row["extraction_per_image_s"]),
                    n_images=int(row["extraction_n_images"] or 0),
                )

    configs = {}
    for kind_name, c in env.get("classifier_configs", {}).items():
        configs[ClassifierKind(kind_name)] = EnsembleConfig(
            n_estimators=c["n_estimators"],
            learning_rate=c["learning_rate"],
            max_depth=c["max_depth"],
            num_leaves=c["num_leaves"],
            n_bins=c["n_bins"],
            subsample_ratio=c["subsample_ratio"],
            feature_subsample=c["feature_subsample"],
            rng_seed=c["rng_seed"],
            l2_leaf_penalty=c["l2_leaf_penalty"],
            bootstrap=c["bootstrap"],
        )

    environment = {
        k: v for k, v in env.items()
        if k not in ("report_checksum", "best_cell", "classifier_configs")
    }
    return GridReport(
        extractors=tuple(extractors),
        classifiers=tuple(classifiers),
        k=env["k"],
        seed=env["seed"],
        cells=cells,
        extraction_timings=timings,
        environment=environment,
        configs=configs,
    )


MANIFEST_SUFFIX = ".manifest.json"


def export_best_model(
    report: GridReport,
    features: FeaturesInput,
    output_dir: str | Path,
    backend_info: Optional[dict] = None,
    preprocess: Optional[PreprocessConfig] = None,
) -> tuple[Path, Path]:
    """Retrain the winning (extractor, classifier) pair on all rows and save
    the model plus a deployment manifest.

    ``backend_info`` records how to rebuild the feature extractor at serving
    time, e.g. {"type": "torchscript", "model_path": ...} or
    {"type": "stub", "dim": 64, "seed": 0}.
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    ext_name, kind = report.best_cell()
    matrix = _resolve_features(features, (ext_name,))[ext_name]
    cfg = report.configs[kind]
    model = train(kind, matrix, cfg)
    model_path = output_dir / "best_model.cvmd"
    model_save(model, model_path)

    pp = preprocess or PreprocessConfig()
    manifest = {
        "schema_version": 1,
        "model_file": model_path.name,
        "extractor": ext_name,
        "classifier": kind.value,
        "feature_dim": model.feature_dim,
        "grid_seed": report.seed,
        "k": report.k,
        "report_checksum": report_checksum(report),
        "metrics": {
            "mean_accuracy": report.cells[(ext_name, kind)].mean["accuracy"],
            "std_accuracy": report.cells[(ext_name, kind)].std["accuracy"],
        },
        "classifier_config": _config_dict(cfg),
        "preprocess": {
            "target_height": pp.target_height,
            "target_width": pp.target_width,
            "apply_mean_subtraction": pp.apply_mean_subtraction,
            "mean_rgb": list(pp.mean_rgb),
            "normalize_min_max": pp.normalize_min_max,
        },
        "backend": backend_info or {"type": "unspecified"},
        "environment": report.environment,
    }
    manifest_path = output_dir / f"{model_path.stem}{MANIFEST_SUFFIX}"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return model_path, manifest_path
