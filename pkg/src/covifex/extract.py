"""Feature extraction: turn conditioned images into fixed-length vectors.

Three interchangeable backends sit behind one contract: TorchScript
inference over exported network files, precomputed-feature lookup by
sample id, and a deterministic stub (hash-seeded pseudorandom vectors)
that lets the classifier/eval/experiment stack run with no model files.
"""
from __future__ import annotations

import abc
import hashlib
import struct
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .data import Dataset, FeatureMatrix, ImageTensor, feature_matrix_validate
from .errors import FileFormatError, ValidationError
from .preprocess import PreprocessConfig, load_image, preprocess_pipeline

DEFAULT_BATCH_SIZE = 8

# Timing context for the reference numbers bundled with the registry.
REFERENCE_HARDWARE = "Intel Core i7-8700K 3.7 GHz, 32 GB RAM, NVIDIA GTX 1080 Ti 11 GB"


@dataclass(frozen=True)
class ExtractorSpec:
    """One pretrained descriptor network: its required input size, model
    file (when bound), output width (discovered at load), and the published
    per-dataset extraction seconds measured on REFERENCE_HARDWARE."""

    name: str
    input_height: int
    input_width: int
    model_path: Optional[Path] = None
    output_dim: Optional[int] = None
    reference_extraction_s: Optional[float] = None


_REGISTRY_ROWS = (
    # name, input size, reference extraction seconds for the 274-image set
    ("MobileNet", 224, 8.803),
    ("DenseNet121", 224, 9.306),
    ("DenseNet201", 224, 38.227),
    ("Xception", 224, 10.819),
    ("InceptionV3", 224, 11.825),
    ("InceptionResNetV2", 224, 14.151),
    ("ResNet50", 224, 10.206),
    ("ResNet152", 224, 15.769),
    ("VGG16", 224, 14.746),
    ("VGG19", 224, 14.359),
    ("NASNetLarge", 331, 13.131),
    ("NASNetMobile", 224, 7.786),
    ("ResNet50V2", 224, 10.204),
    ("ResNet101V2", 224, 12.435),
    ("ResNet152V2", 224, 16.67),
)


def registry_list() -> list[ExtractorSpec]:
    """All 15 supported extractor architectures."""
    return [
        ExtractorSpec(name=n, input_height=s, input_width=s, reference_extraction_s=t)
        for n, s, t in _REGISTRY_ROWS
    ]


def registry_get(name: str) -> ExtractorSpec:
    for spec in registry_list():
        if spec.name == name:
            return spec
    raise ValidationError(f"unknown extractor {name!r}; known: "
                          + ", ".join(n for n, _, _ in _REGISTRY_ROWS))


class ExtractorBackend(abc.ABC):
    """Maps batches of images (or known sample ids) to feature vectors.

    One instance is single-consumer; spin up one per worker for parallel
    extraction. ``needs_images`` tells the driver whether to decode pixels.
    """

    needs_images: bool = True

    @property
    @abc.abstractmethod
    def output_dim(self) -> int: ...

    @abc.abstractmethod
    def run(
        self,
        images: Sequence[Optional[ImageTensor]],
        ids: Optional[Sequence[Optional[str]]] = None,
    ) -> np.ndarray: ...


class TorchScriptBackend(ExtractorBackend):
    """Neural inference over a TorchScript network file.

    The file must accept NCHW float32 input; a trailing 4-D activation is
    global-average-pooled so the feature is the pooled width of the final
    convolutional block. Output width is discovered by a probe forward pass.
    """

    needs_images = True

    def __init__(self, model_path: str | Path, input_hw: tuple[int, int] = (224, 224)):
        try:
            import torch
        except ImportError as exc:  # pragma: no cover - torch is an extra
            raise ValidationError(
                "torch is required for the neural-inference backend; install the 'neural' extra"
            ) from exc
        self._torch = torch
        self.model_path = Path(model_path)
        self.input_hw = input_hw
        try:
            self._module = torch.jit.load(str(self.model_path), map_location="cpu")
        except (RuntimeError, OSError, ValueError) as exc:
            raise FileFormatError(f"cannot load network file {self.model_path}: {exc}") from exc
        self._module.eval()
        probe = torch.zeros(1, 3, input_hw[0], input_hw[1])
        with torch.no_grad():
            out = self._pool(self._module(probe))
        if out.ndim != 2 or out.shape[1] < 1:
            raise FileFormatError(
                f"network file {self.model_path} produced shape {tuple(out.shape)}, "
                "expected (N, features)"
            )
        self._dim = int(out.shape[1])

    def _pool(self, out):
        if out.ndim == 4:  # (N, C, H, W) -> global average pool
            return out.mean(dim=(2, 3))
        return out

    @property
    def output_dim(self) -> int:
        return self._dim

    def run(self, images, ids=None) -> np.ndarray:
        torch = self._torch
        arrs = []
        for img in images:
            if img is None:
                raise ValidationError("neural backend needs image pixels")
            if img.channels != 3:
                raise ValidationError(f"neural backend expects 3 channels, got {img.channels}")
            arrs.append(np.transpose(img.data, (2, 0, 1)))
        batch = torch.from_numpy(np.ascontiguousarray(np.stack(arrs), dtype=np.float32))
        with torch.no_grad():
            out = self._pool(self._module(batch))
        feats = out.cpu().numpy().astype(np.float32)
        if feats.shape != (len(arrs), self._dim):
            raise FileFormatError(
                f"backend output shape {feats.shape} varies from probed width {self._dim}"
            )
        return feats


class PrecomputedBackend(ExtractorBackend):
    """Feature lookup keyed by sample id, backed by a saved FeatureMatrix."""

    needs_images = False

    def __init__(self, features: FeatureMatrix):
        feature_matrix_validate(features)
        self._by_id = {sid: features.values[i] for i, sid in enumerate(features.sample_ids)}
        self._dim = features.d
        self.extractor_name = features.extractor_name

    @property
    def output_dim(self) -> int:
        return self._dim

    def run(self, images, ids=None) -> np.ndarray:
        if ids is None:
            raise ValidationError("precomputed backend needs sample ids")
        rows = []
        for sid in ids:
            if sid is None or sid not in self._by_id:
                raise ValidationError(f"no precomputed features for sample id {sid!r}")
            rows.append(self._by_id[sid])
        return np.stack(rows).astype(np.float32)


class StubBackend(ExtractorBackend):
    """Deterministic test double: a hash-seeded pseudorandom vector per
    sample, optionally shifted along a fixed direction by label so the
    classes are learnable.

    Keyed by sample id when one is given, else by image bytes, so the
    same upload always produces the same features.
    """

    needs_images = False

    def __init__(
        self,
        dim: int = 64,
        seed: int = 0,
        label_shift: float = 0.0,
        labels_by_id: Optional[Mapping[str, int]] = None,
    ):
        if dim < 1:
            raise ValidationError(f"stub dim must be >= 1, got {dim}")
        self._dim = dim
        self.seed = seed
        self.label_shift = label_shift
        self.labels_by_id = dict(labels_by_id) if labels_by_id else {}
        direction = np.random.default_rng(seed).standard_normal(dim)
        self._direction = direction / np.linalg.norm(direction)

    @property
    def output_dim(self) -> int:
        return self._dim

    def _vector(self, key: bytes) -> np.ndarray:
        digest = hashlib.blake2b(
            struct.pack("<q", self.seed) + key, digest_size=8
        ).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "little"))
        return rng.standard_normal(self._dim)

    def run(self, images, ids=None) -> np.ndarray:
        n = len(images) if ids is None else len(ids)
        rows = np.empty((n, self._dim), dtype=np.float64)
        for i in range(n):
            sid = ids[i] if ids is not None else None
            if sid is not None:
                key = b"id:" + sid.encode("utf-8")
            else:
                img = images[i]
                if img is None:
                    raise ValidationError("stub backend needs a sample id or image pixels")
                key = b"img:" + img.data.tobytes()
            row = self._vector(key)
            if sid is not None and sid in self.labels_by_id:
                sign = 1.0 if self.labels_by_id[sid] == 1 else -1.0
                row = row + self.label_shift * sign * self._direction
            rows[i] = row
        return rows.astype(np.float32)


@dataclass(frozen=True)
class ExtractionTiming:
    total_s: float
    per_image_s: float
    n_images: int


def extract_features(
    ds: Dataset,
    spec: ExtractorSpec,
    cfg: PreprocessConfig,
    backend: ExtractorBackend,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> tuple[FeatureMatrix, ExtractionTiming]:
    """Run every dataset sample through the backend, in dataset order.

    Images are decoded and conditioned only for pixel-consuming backends;
    the preprocess target size is forced to the extractor's input size.
    Wall-clock time covers the whole dataset.
    """
    if batch_size < 1:
        raise ValidationError(f"batch_size must be >= 1, got {batch_size}")
    eff_cfg = replace(cfg, target_height=spec.input_height, target_width=spec.input_width)
    t0 = time.perf_counter()
    chunks: list[np.ndarray] = []
    samples = ds.samples
    for start in range(0, len(samples), batch_size):
        batch = samples[start : start + batch_size]
        ids = [s.id for s in batch]
        if backend.needs_images:
            images = []
            for s in batch:
                try:
                    img = load_image(s.source_path)
                except ValidationError as exc:
                    raise ValidationError(f"sample {s.id!r}: {exc}") from exc
                images.append(preprocess_pipeline(img, eff_cfg))
        else:
            images = [None] * len(batch)
        out = np.asarray(backend.run(images, ids=ids), dtype=np.float32)
        if out.shape != (len(batch), backend.output_dim):
            raise FileFormatError(
                f"backend returned shape {out.shape}, expected {(len(batch), backend.output_dim)}"
            )
        chunks.append(out)
    total = time.perf_counter() - t0
    n = len(samples)
    values = np.concatenate(chunks, axis=0) if chunks else np.zeros((0, backend.output_dim), np.float32)
    matrix = FeatureMatrix(
        values=values,
        labels=ds.labels,
        sample_ids=ds.ids,
        extractor_name=spec.name,
    )
    feature_matrix_validate(matrix)
    timing = ExtractionTiming(total_s=total, per_image_s=total / n if n else 0.0, n_images=n)
    return matrix, timing


# ---------------------------------------------------------------------------
# Feature file format: little-endian, magic CVFX, u32 version, u32 n, u32 d,
# u16-prefixed extractor name, then n records of (u16-prefixed id, u8 label,
# d float32 features).

_MAGIC = b"CVFX"
_VERSION = 1
FEATURE_FILE_SUFFIX = ".cvfx"


def features_save(m: FeatureMatrix, path: str | Path) -> Path:
    feature_matrix_validate(m)
    out = bytearray()
    out += _MAGIC
    name = m.extractor_name.encode("utf-8")
    out += struct.pack("<III", _VERSION, m.n, m.d)
    out += struct.pack("<H", len(name)) + name
    for i in range(m.n):
        sid = m.sample_ids[i].encode("utf-8")
        out += struct.pack("<H", len(sid)) + sid
        out += struct.pack("<B", int(m.labels[i]))
        out += m.values[i].astype("<f4").tobytes()
    path = Path(path)
    path.write_bytes(bytes(out))
    return path


def features_load(path: str | Path) -> FeatureMatrix:
    buf = Path(path).read_bytes()
    if len(buf) < 4 or buf[:4] != _MAGIC:
        raise FileFormatError(f"{path}: not a feature file (bad magic)")
    off = 4

    def take(size: int) -> bytes:
        nonlocal off
        if off + size > len(buf):
            raise FileFormatError(f"{path}: truncated feature file at offset {off}")
        chunk = buf[off : off + size]
        off += size
        return chunk

    version, n, d = struct.unpack("<III", take(12))
    if version != _VERSION:
        raise FileFormatError(f"unsupported feature-file version {version}, expected {_VERSION}")
    (name_len,) = struct.unpack("<H", take(2))
    name = take(name_len).decode("utf-8")
    values = np.empty((n, d), dtype=np.float32)
    labels = np.empty(n, dtype=np.int64)
    ids = []
    for i in range(n):
        (sid_len,) = struct.unpack("<H", take(2))
        ids.append(take(sid_len).decode("utf-8"))
        (labels[i],) = struct.unpack("<B", take(1))
        values[i] = np.frombuffer(take(4 * d), dtype="<f4")
    if off != len(buf):
        raise FileFormatError(f"{path}: trailing bytes at offset {off}")
    return FeatureMatrix(values=values, labels=labels, sample_ids=tuple(ids), extractor_name=name)


def features_export_csv(m: FeatureMatrix, path: str | Path) -> Path:
    """Interoperability export: header id,label,f0..f{d-1}."""
    feature_matrix_validate(m)
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("id,label," + ",".join(f"f{j}" for j in range(m.d)) + "\n")
        for i in range(m.n):
            row = ",".join(np.format_float_positional(v, trim="0") for v in m.values[i])
            fh.write(f"{m.sample_ids[i]},{int(m.labels[i])},{row}\n")
    return path


def stub_features(
    ds: Dataset,
    dim: int = 64,
    seed: int = 0,
    label_shift: float = 3.0,
    extractor_name: str = "stub",
) -> FeatureMatrix:
    """Learnable pseudorandom features for a dataset, no files needed."""
    backend = StubBackend(
        dim=dim,
        seed=seed,
        label_shift=label_shift,
        labels_by_id={s.id: s.label for s in ds.samples},
    )
    spec = ExtractorSpec(name=extractor_name, input_height=224, input_width=224)
    matrix, _ = extract_features(ds, spec, PreprocessConfig(), backend)
    return matrix
