import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from covifex.data import ImageTensor
from covifex.errors import ValidationError
from covifex.preprocess import (
    IMAGENET_MEAN_RGB,
    ConstantImageWarning,
    PreprocessConfig,
    grayscale_to_rgb,
    load_image,
    mean_subtract,
    min_max_normalize,
    preprocess_pipeline,
    resize_bilinear,
)


def gray(arr):
    arr = np.asarray(arr, dtype=np.float32)[:, :, None]
    return ImageTensor(data=arr, intensity_range=(0.0, 255.0))


from oracles import bilinear_reference


def test_resize_matches_reference_formula():
    img = gray([[0.0, 0.0], [100.0, 100.0]])
    got = resize_bilinear(img, 4, 4)
    want = bilinear_reference(img.data, 4, 4)
    assert got.data.shape == (4, 4, 1)
    np.testing.assert_allclose(got.data, want, atol=1e-4)
    # rows monotone nondecreasing top to bottom, all in [0, 100]
    col = got.data[:, 0, 0]
    assert (np.diff(col) >= 0).all()
    assert got.data.min() >= 0.0 and got.data.max() <= 100.0


def test_resize_random_against_reference():
    rng = np.random.default_rng(7)
    for _ in range(5):
        h, w = rng.integers(2, 9, size=2)
        th, tw = rng.integers(1, 9, size=2)
        data = rng.uniform(0, 255, size=(h, w, 3)).astype(np.float32)
        img = ImageTensor(data=data, intensity_range=(0.0, 255.0))
        got = resize_bilinear(img, int(th), int(tw))
        want = bilinear_reference(data, int(th), int(tw))
        np.testing.assert_allclose(got.data, want, atol=1e-3)


def test_resize_paper_shapes():
    img = ImageTensor(
        data=np.zeros((1125, 859, 1), dtype=np.float32), intensity_range=(0.0, 255.0)
    )
    out = resize_bilinear(img, 600, 450)
    assert (out.height, out.width, out.channels) == (600, 450, 1)


def test_resize_constant_stays_constant():
    img = gray(np.full((5, 7), 42.0))
    out = resize_bilinear(img, 11, 3)
    np.testing.assert_array_equal(out.data, np.full((11, 3, 1), 42.0, dtype=np.float32))


@given(
    h=st.integers(1, 12),
    w=st.integers(1, 12),
    th=st.integers(1, 12),
    tw=st.integers(1, 12),
    seed=st.integers(0, 1000),
)
@settings(max_examples=40, deadline=None)
def test_resize_bounds_property(h, w, th, tw, seed):
    data = np.random.default_rng(seed).uniform(-50, 300, size=(h, w, 1)).astype(np.float32)
    img = ImageTensor(data=data, intensity_range=(-50.0, 300.0))
    out = resize_bilinear(img, th, tw)
    assert out.data.min() >= data.min()
    assert out.data.max() <= data.max()


def test_grayscale_to_rgb_replicates():
    img = gray(np.arange(100, dtype=np.float32).reshape(10, 10))
    out = grayscale_to_rgb(img)
    assert out.channels == 3
    for c in range(3):
        np.testing.assert_array_equal(out.data[:, :, c], img.data[:, :, 0])


def test_grayscale_to_rgb_identity_on_rgb():
    img = ImageTensor(data=np.zeros((4, 4, 3)), intensity_range=(0.0, 255.0))
    assert grayscale_to_rgb(img) is img


def test_grayscale_to_rgb_rejects_other_channel_counts():
    # channel counts outside {1, 3} cannot even be constructed
    with pytest.raises(ValidationError, match="unsupported channel count 2"):
        ImageTensor(data=np.zeros((4, 4, 2)), intensity_range=(0.0, 255.0))


def test_min_max_normalize_known_values():
    img = gray([[0.0, 128.0], [255.0, 64.0]])
    out = min_max_normalize(img)
    assert out.data.max() == 1.0
    assert out.data.min() == 0.0
    assert out.data[0, 1, 0] == pytest.approx(128.0 / 255.0, abs=1e-6)
    assert out.intensity_range == (0.0, 1.0)


def test_min_max_normalize_constant_warns_and_zeroes():
    img = gray(np.full((3, 3), 42.0))
    with pytest.warns(ConstantImageWarning):
        out = min_max_normalize(img)
    np.testing.assert_array_equal(out.data, np.zeros((3, 3, 1), dtype=np.float32))


@given(seed=st.integers(0, 10_000))
@settings(max_examples=100, deadline=None)
def test_min_max_normalize_exact_extremes_property(seed):
    rng = np.random.default_rng(seed)
    data = rng.uniform(0, 255, size=(6, 5, 1)).astype(np.float32)
    out = min_max_normalize(ImageTensor(data=data, intensity_range=(0.0, 255.0)))
    assert out.data.min() == 0.0
    assert out.data.max() == 1.0 or data.max() == data.min()
    assert (out.data >= 0.0).all() and (out.data <= 1.0).all()


def test_mean_subtract_from_zero_image():
    img = ImageTensor(data=np.zeros((2, 2, 3)), intensity_range=(0.0, 1.0))
    out = mean_subtract(img, IMAGENET_MEAN_RGB)
    for c, m in enumerate(IMAGENET_MEAN_RGB):
        np.testing.assert_allclose(out.data[:, :, c], -m, atol=1e-7)


def test_mean_subtract_identity_at_mean():
    data = np.empty((2, 2, 3), dtype=np.float32)
    for c, m in enumerate(IMAGENET_MEAN_RGB):
        data[:, :, c] = m
    out = mean_subtract(ImageTensor(data=data, intensity_range=(0.0, 1.0)), IMAGENET_MEAN_RGB)
    np.testing.assert_allclose(out.data, 0.0, atol=1e-7)


def test_mean_subtract_ones():
    img = ImageTensor(data=np.ones((1, 1, 3)), intensity_range=(0.0, 1.0))
    out = mean_subtract(img, IMAGENET_MEAN_RGB)
    np.testing.assert_allclose(out.data[0, 0], [0.515, 0.544, 0.594], atol=1e-6)


def test_mean_subtract_rejects_single_channel():
    img = gray([[1.0]])
    with pytest.raises(ValidationError, match="3 channels"):
        mean_subtract(img, IMAGENET_MEAN_RGB)


def test_pipeline_produces_extractor_input():
    rng = np.random.default_rng(0)
    img = gray(rng.uniform(0, 255, size=(365, 465)))
    out = preprocess_pipeline(img, PreprocessConfig(target_height=224, target_width=224))
    assert (out.height, out.width, out.channels) == (224, 224, 3)
    assert np.isfinite(out.data).all()


def test_pipeline_disabled_stages_equal_resize():
    rng = np.random.default_rng(1)
    data = rng.uniform(0, 255, size=(30, 20, 3)).astype(np.float32)
    img = ImageTensor(data=data, intensity_range=(0.0, 255.0))
    cfg = PreprocessConfig(
        target_height=10, target_width=10,
        apply_mean_subtraction=False, normalize_min_max=False,
    )
    out = preprocess_pipeline(img, cfg)
    np.testing.assert_array_equal(out.data, resize_bilinear(img, 10, 10).data)


def test_pipeline_deterministic():
    rng = np.random.default_rng(2)
    img = gray(rng.uniform(0, 255, size=(50, 40)))
    cfg = PreprocessConfig(target_height=24, target_width=24)
    a = preprocess_pipeline(img, cfg)
    b = preprocess_pipeline(img, cfg)
    assert a.data.tobytes() == b.data.tobytes()


def png_bytes(arr, mode=None):
    im = Image.fromarray(arr)  # mode inferred from dtype/shape
    buf = io.BytesIO()
    im.save(buf, format="PNG")
    return buf.getvalue()


def test_load_image_8bit_gray(tmp_path):
    arr = np.arange(0, 256, dtype=np.uint8).reshape(16, 16)
    p = tmp_path / "g.png"
    p.write_bytes(png_bytes(arr, "L"))
    img = load_image(p)
    assert img.channels == 1
    assert img.data.max() == 255.0
    assert img.intensity_range == (0.0, 255.0)


def test_load_image_16bit_gray_scales_by_257(tmp_path):
    arr = np.array([[0, 65535], [257, 2570]], dtype=np.uint16)
    p = tmp_path / "g16.png"
    p.write_bytes(png_bytes(arr, "I;16"))
    img = load_image(p)
    np.testing.assert_allclose(
        img.data[:, :, 0], [[0.0, 255.0], [1.0, 10.0]], atol=1e-3
    )


def test_load_image_rgb(tmp_path):
    arr = np.zeros((4, 4, 3), dtype=np.uint8)
    arr[..., 0] = 200
    p = tmp_path / "c.png"
    p.write_bytes(png_bytes(arr, "RGB"))
    img = load_image(p)
    assert img.channels == 3
    assert img.data[0, 0, 0] == 200.0


def test_load_image_rejects_non_image(tmp_path):
    p = tmp_path / "not.png"
    p.write_text("this is not a png")
    with pytest.raises(ValidationError, match="cannot decode"):
        load_image(p)


def test_config_validation():
    with pytest.raises(ValidationError):
        PreprocessConfig(target_height=0)
    with pytest.raises(ValidationError):
        PreprocessConfig(mean_rgb=(0.1, float("nan"), 0.3))
