"""Deterministic image conditioning: decode, resize, channel fix-up,
min-max normalization, channel-mean subtraction.

Every stage is a pure function on ImageTensor; the pipeline is bit-stable,
so repeated runs on the same bytes produce identical tensors.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .data import ImageTensor
from .errors import ValidationError

# Channel means learned on the large natural-image corpus the pretrained
# extractors were trained on; applied after scaling intensities to [0, 1].
IMAGENET_MEAN_RGB = (0.485, 0.456, 0.406)


class ConstantImageWarning(UserWarning):
    """Normalization hit a constant image (max == min); output is all zeros."""


@dataclass(frozen=True)
class PreprocessConfig:
    target_height: int = 224
    target_width: int = 224
    apply_mean_subtraction: bool = True
    mean_rgb: tuple[float, float, float] = IMAGENET_MEAN_RGB
    normalize_min_max: bool = True

    def __post_init__(self) -> None:
        if self.target_height < 1 or self.target_width < 1:
            raise ValidationError(
                f"target dims must be >= 1, got {self.target_height}x{self.target_width}"
            )
        if len(self.mean_rgb) != 3 or not all(np.isfinite(v) for v in self.mean_rgb):
            raise ValidationError(f"mean_rgb must be 3 finite floats, got {self.mean_rgb!r}")


def _image_to_tensor(im: Image.Image) -> ImageTensor:
    if im.mode == "L":
        arr = np.asarray(im, dtype=np.float32)[:, :, None]
    elif im.mode in ("I;16", "I;16B", "I;16L"):
        arr = np.asarray(im, dtype=np.float32)[:, :, None] / 257.0
    elif im.mode == "I":
        # 32-bit integer gray: most sources are 16-bit payloads
        arr = np.asarray(im, dtype=np.float32)[:, :, None]
        if arr.size and arr.max() > 255.0:
            arr = arr / 257.0
    elif im.mode == "RGB":
        arr = np.asarray(im, dtype=np.float32)
    else:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    arr = np.clip(arr, 0.0, 255.0)
    return ImageTensor(data=arr, intensity_range=(0.0, 255.0))


def load_image(path: str | Path) -> ImageTensor:
    """Decode a PNG/JPEG file into float32 intensities in [0, 255].

    8-bit data maps directly; 16-bit grayscale is scaled down by 257 so
    white stays white. Palette/alpha variants are flattened to RGB.
    """
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            return _image_to_tensor(im)
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise ValidationError(f"cannot decode image {path}: {exc}") from exc


def decode_image_bytes(payload: bytes) -> ImageTensor:
    """Same decoding contract as load_image, for in-memory uploads."""
    import io

    try:
        with Image.open(io.BytesIO(payload)) as im:
            im.load()
            return _image_to_tensor(im)
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise ValidationError(f"cannot decode image: {exc}") from exc


def _axis_coords(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Half-integer pixel centers (corner alignment off): output center j maps
    # to input coordinate (j + 0.5) * n_in/n_out - 0.5, clamped at the edges.
    pos = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    lo = np.floor(pos)
    frac = (pos - lo).astype(np.float32)
    i0 = np.clip(lo, 0, n_in - 1).astype(np.int64)
    i1 = np.clip(lo + 1, 0, n_in - 1).astype(np.int64)
    return i0, i1, frac


def resize_bilinear(img: ImageTensor, th: int, tw: int) -> ImageTensor:
    """Bilinear resize to th x tw, channel count preserved.

    Outputs are convex combinations of inputs and are clipped to the input
    value range to kill float round-off excursions.
    """
    if th < 1 or tw < 1:
        raise ValidationError(f"target dims must be >= 1, got {th}x{tw}")
    data = img.data
    y0, y1, fy = _axis_coords(img.height, th)
    x0, x1, fx = _axis_coords(img.width, tw)

    top = data[y0]
    bot = data[y1]
    rows = top * (1.0 - fy)[:, None, None] + bot * fy[:, None, None]
    left = rows[:, x0, :]
    right = rows[:, x1, :]
    out = left * (1.0 - fx)[None, :, None] + right * fx[None, :, None]
    if data.size:
        out = np.clip(out, data.min(), data.max())
    return ImageTensor(data=out, intensity_range=img.intensity_range)


def grayscale_to_rgb(img: ImageTensor) -> ImageTensor:
    """Replicate a single channel to three; 3-channel input passes through."""
    if img.channels == 3:
        return img
    if img.channels != 1:
        raise ValidationError(f"unsupported channel count {img.channels}")
    return ImageTensor(
        data=np.repeat(img.data, 3, axis=2),
        intensity_range=img.intensity_range,
    )


def min_max_normalize(img: ImageTensor) -> ImageTensor:
    """Rescale intensities to [0, 1] over the whole image (all channels).

    x_norm = (x - x_min) / (x_max - x_min). A constant image degenerates
    to all zeros and raises ConstantImageWarning instead of an error.
    """
    data = img.data
    lo = float(data.min())
    hi = float(data.max())
    if hi == lo:
        warnings.warn(
            f"constant image (value {lo}): min-max normalization yields zeros",
            ConstantImageWarning,
            stacklevel=2,
        )
        return ImageTensor(data=np.zeros_like(data), intensity_range=(0.0, 1.0))
    out = (data - lo) / np.float32(hi - lo)
    out = np.clip(out, 0.0, 1.0)
    return ImageTensor(data=out, intensity_range=(0.0, 1.0))


def mean_subtract(img: ImageTensor, mean_rgb: tuple[float, float, float]) -> ImageTensor:
    """Subtract a per-channel mean from a 3-channel image. No clamping."""
    if img.channels != 3:
        raise ValidationError(
            f"mean subtraction needs 3 channels, got {img.channels}; convert grayscale first"
        )
    means = np.asarray(mean_rgb, dtype=np.float32)
    out = img.data - means[None, None, :]
    lo, hi = img.intensity_range
    # widen by the data extrema so float32 round-off never escapes the range
    new_lo = min(lo - float(means.max()), float(out.min()))
    new_hi = max(hi - float(means.min()), float(out.max()))
    return ImageTensor(data=out, intensity_range=(new_lo, new_hi))


def preprocess_pipeline(img: ImageTensor, cfg: PreprocessConfig) -> ImageTensor:
    """Full conditioning chain: channel fix-up, resize, normalize, center.

    Stage order: grayscale_to_rgb (when needed) -> resize_bilinear ->
    min_max_normalize (if enabled) -> mean_subtract (if enabled).
    Normalization runs before mean subtraction so the subtracted constants
    act on the [0, 1] scale the extractor weights expect.
    """
    out = grayscale_to_rgb(img) if img.channels == 1 else img
    out = resize_bilinear(out, cfg.target_height, cfg.target_width)
    if cfg.normalize_min_max:
        out = min_max_normalize(out)
    if cfg.apply_mean_subtraction:
        out = mean_subtract(out, cfg.mean_rgb)
    return out
