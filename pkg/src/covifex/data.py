"""Core value types: labels, images, samples, datasets, feature matrices.

Label convention is fixed package-wide: 1 = COVID-19 positive, 0 = healthy
control. All containers are immutable after construction and safe to share
across threads.
"""
from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError

POSITIVE = 1
NEGATIVE = 0
LABELS = (NEGATIVE, POSITIVE)

MODALITIES = ("xray", "ct")

MANIFEST_HEADER = ("id", "path", "modality", "label")

_LABEL_TOKENS = {"0": NEGATIVE, "1": POSITIVE, "negative": NEGATIVE, "positive": POSITIVE}


def parse_label(token: str) -> int:
    """Parse a manifest label token ({0,1} or {negative,positive})."""
    try:
        return _LABEL_TOKENS[token.strip().lower()]
    except KeyError:
        raise ValidationError(f"unknown label token {token!r}") from None


@dataclass(frozen=True)
class ImageTensor:
    """H x W x C floating-point image, row-major, channel-interleaved.

    ``intensity_range`` declares the closed interval every value lies in;
    constructors must keep it truthful.
    """

    data: np.ndarray
    intensity_range: tuple[float, float]

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        object.__setattr__(self, "data", arr)
        if arr.ndim != 3:
            raise ValidationError(f"image data must be HxWxC, got shape {arr.shape}")
        h, w, c = arr.shape
        if h < 1 or w < 1:
            raise ValidationError(f"image dims must be >= 1, got {h}x{w}")
        if c not in (1, 3):
            raise ValidationError(f"unsupported channel count {c}")
        lo, hi = self.intensity_range
        if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
            raise ValidationError(f"bad intensity range [{lo}, {hi}]")
        if arr.size and (arr.min() < lo or arr.max() > hi):
            raise ValidationError(
                f"pixel values [{arr.min()}, {arr.max()}] fall outside "
                f"declared range [{lo}, {hi}]"
            )

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class Sample:
    """One image in a dataset; the file behind ``source_path`` is only read
    when a pixel-consuming backend asks for it."""

    id: str
    modality: str
    label: int
    source_path: Path

    def __post_init__(self) -> None:
        if self.modality not in MODALITIES:
            raise ValidationError(f"unknown modality {self.modality!r}")
        if self.label not in LABELS:
            raise ValidationError(f"label must be 0 or 1, got {self.label!r}")


@dataclass(frozen=True)
class Dataset:
    samples: tuple[Sample, ...]

    def __post_init__(self) -> None:
        seen = set()
        for s in self.samples:
            if s.id in seen:
                raise ValidationError(f"duplicate sample id {s.id!r}")
            seen.add(s.id)

    @property
    def class_counts(self) -> dict[int, int]:
        counts = Counter(s.label for s in self.samples)
        return {NEGATIVE: counts.get(NEGATIVE, 0), POSITIVE: counts.get(POSITIVE, 0)}

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.samples)

    def __len__(self) -> int:
        return len(self.samples)


def dataset_from_manifest(manifest_path: str | Path) -> Dataset:
    """Load a dataset description from a manifest CSV.

    Expected layout: UTF-8, header ``id,path,modality,label``, one sample
    per row, label in {0,1} or {negative,positive}. Sample order follows
    row order. Image paths are not checked here; they are resolved lazily
    when pixels are actually needed.
    """
    manifest_path = Path(manifest_path)
    samples: list[Sample] = []
    seen: set[str] = set()
    with open(manifest_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{manifest_path}: empty manifest, expected header") from None
        if tuple(h.strip() for h in header) != MANIFEST_HEADER:
            raise ValidationError(
                f"{manifest_path}: bad header {header!r}, expected {','.join(MANIFEST_HEADER)}"
            )
        for row_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 4:
                raise ValidationError(f"{manifest_path} row {row_no}: expected 4 fields, got {len(row)}")
            sid, path, modality, label_token = (f.strip() for f in row)
            if sid in seen:
                raise ValidationError(f"{manifest_path}: duplicate sample id {sid!r}")
            seen.add(sid)
            modality = modality.lower()
            if modality not in MODALITIES:
                raise ValidationError(f"{manifest_path} row {row_no}: unknown modality {modality!r}")
            try:
                label = parse_label(label_token)
            except ValidationError:
                raise ValidationError(
                    f"{manifest_path} row {row_no}: unknown label token {label_token!r}"
                ) from None
            samples.append(Sample(id=sid, modality=modality, label=label, source_path=Path(path)))
    return Dataset(samples=tuple(samples))


@dataclass(frozen=True)
class FeatureMatrix:
    """N x D float32 feature matrix with aligned labels and sample ids."""

    values: np.ndarray
    labels: np.ndarray
    sample_ids: tuple[str, ...]
    extractor_name: str = "unknown"

    def __post_init__(self) -> None:
        vals = np.ascontiguousarray(self.values, dtype=np.float32)
        labs = np.ascontiguousarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "labels", labs)
        object.__setattr__(self, "sample_ids", tuple(str(s) for s in self.sample_ids))
        if vals.ndim != 2:
            raise ValidationError(f"feature values must be 2-D, got shape {vals.shape}")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def select(self, indices: np.ndarray) -> "FeatureMatrix":
        """Row subset in the given index order (used by fold slicing)."""
        idx = np.asarray(indices, dtype=np.int64)
        return FeatureMatrix(
            values=self.values[idx],
            labels=self.labels[idx],
            sample_ids=tuple(self.sample_ids[i] for i in idx),
            extractor_name=self.extractor_name,
        )


def feature_matrix_validate(m: FeatureMatrix) -> FeatureMatrix:
    """Check FeatureMatrix invariants, returning ``m`` unchanged on success.

    Rejects non-finite entries (reporting coordinates), label/row count
    mismatches, id/row count mismatches, and out-of-alphabet labels.
    """
    if m.labels.shape[0] != m.n:
        raise ValidationError(f"label count {m.labels.shape[0]} != row count {m.n}")
    if len(m.sample_ids) != m.n:
        raise ValidationError(f"id count {len(m.sample_ids)} != row count {m.n}")
    bad = ~np.isfinite(m.values)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise ValidationError(f"non-finite feature value at row {r}, column {c}")
    if m.n and not np.isin(m.labels, LABELS).all():
        bad_label = m.labels[~np.isin(m.labels, LABELS)][0]
        raise ValidationError(f"label must be 0 or 1, got {bad_label}")
    return m
