"""Synthetic datasets used by the test suite and the demo scripts."""
from __future__ import annotations

import numpy as np

from .data import FeatureMatrix


def reference_blobs(
    n: int = 200,
    dim: int = 16,
    separation_sigmas: float = 6.0,
    seed: int = 42,
    extractor_name: str = "reference-blobs",
) -> FeatureMatrix:
    """Two unit-variance isotropic Gaussians, balanced half/half, with the
    class means ``separation_sigmas`` standard deviations apart along every
    coordinate (so each feature alone separates the classes). Interleaved
    class order, ids b0000..b{n-1}."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 2
    half = separation_sigmas / 2.0
    values = rng.standard_normal((n, dim))
    values[labels == 0] -= half
    values[labels == 1] += half
    return FeatureMatrix(
        values=values.astype(np.float32),
        labels=labels,
        sample_ids=tuple(f"b{i:04d}" for i in range(n)),
        extractor_name=extractor_name,
    )
