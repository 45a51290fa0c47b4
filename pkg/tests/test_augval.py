"""Masked-background SSIM gate for augmented image pairs."""

import json

import numpy as np
import pytest

from ehoikit.annotations import BBox
from ehoikit.augval import (
    DEFAULT_THRESHOLD,
    SsimParams,
    filter_dataset,
    mask_hand_regions,
    mock_augment,
    ssim,
    ssim_reference,
    to_luminance,
    validate_pair,
)
from ehoikit.errors import ValidationError


def make_image(seed: int, h: int = 48, w: int = 56) -> np.ndarray:
    rng = np.random.default_rng(seed)
    base = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
    # smooth a little so SSIM statistics are not pure noise
    f = base.astype(np.float64)
    f = 0.25 * (f + np.roll(f, 1, 0) + np.roll(f, 1, 1)
                + np.roll(f, (1, 1), (0, 1)))
    return f.astype(np.uint8)


# ---------------------------------------------------------------------------
# parameters and luminance


def test_params_validation():
    with pytest.raises(ValidationError):
        SsimParams(window_size=4)     # even
    with pytest.raises(ValidationError):
        SsimParams(window_size=1)     # too small
    p = SsimParams()
    k = p.kernel()
    assert k.shape == (11,)
    assert k.sum() == pytest.approx(1.0)
    assert p.c1 == pytest.approx((0.01 * 255.0) ** 2)
    assert p.c2 == pytest.approx((0.03 * 255.0) ** 2)


def test_luminance_weights():
    white = np.full((4, 4, 3), 255, dtype=np.uint8)
    lum = to_luminance(white)
    assert lum.shape == (4, 4)
    assert lum == pytest.approx(255.0)
    red = np.zeros((1, 1, 3), dtype=np.uint8)
    red[..., 0] = 255
    assert to_luminance(red)[0, 0] == pytest.approx(0.299 * 255.0)


# ---------------------------------------------------------------------------
# ssim core


def test_ssim_identical_is_exactly_one():
    img = to_luminance(make_image(0))
    assert ssim(img, img) == 1.0


def test_ssim_detects_distortion_ordering():
    img = to_luminance(make_image(1))
    rng = np.random.default_rng(2)
    mild = img + rng.normal(0.0, 2.0, img.shape)
    harsh = img + rng.normal(0.0, 40.0, img.shape)
    s_mild = ssim(img, np.clip(mild, 0, 255))
    s_harsh = ssim(img, np.clip(harsh, 0, 255))
    assert 1.0 > s_mild > s_harsh


def test_ssim_matches_naive_reference():
    a = to_luminance(make_image(3))
    b = to_luminance(make_image(4))
    assert ssim(a, b) == pytest.approx(ssim_reference(a, b), abs=1e-6)
    assert ssim(a, a) == pytest.approx(ssim_reference(a, a), abs=1e-6)


def test_ssim_image_smaller_than_window():
    tiny = np.zeros((6, 6), dtype=np.float64)
    with pytest.raises(ValidationError):
        ssim(tiny, tiny)


# ---------------------------------------------------------------------------
# hand masking


def test_mask_fill_and_margin():
    img = to_luminance(make_image(5))
    box = BBox(20.0, 10.0, 30.0, 20.0)
    masked, mask = mask_hand_regions(img, [box])
    assert masked[mask] == pytest.approx(127.5)
    ys, xs = np.nonzero(mask)
    # dilation by 15% of the box size on each side
    assert xs.min() == 18 and xs.max() == 31
    assert ys.min() == 8 and ys.max() == 21
    np.testing.assert_array_equal(masked[~mask], img[~mask])


def test_mask_covering_everything_rejected():
    img = to_luminance(make_image(6))
    h, w = img.shape
    with pytest.raises(ValidationError, match="entire image"):
        mask_hand_regions(img, [BBox(-10.0, -10.0, w + 10.0, h + 10.0)])


def test_masking_hides_hand_region_edits():
    """Edits inside the masked region never change the score."""
    img = make_image(7)
    box = BBox(20.0, 12.0, 34.0, 28.0)
    edited = img.copy()
    edited[14:26, 22:32] = (250, 3, 90)   # well inside the box
    lum_a = to_luminance(img)
    lum_b = to_luminance(edited)
    _, mask = mask_hand_regions(lum_a, [box])
    assert ssim(lum_a, lum_b, ignore_mask=mask) == 1.0
    # sanity: without the mask the edit is visible
    assert ssim(lum_a, lum_b) < 1.0


def test_all_windows_masked_rejected():
    img = to_luminance(make_image(8, h=16, w=16))
    mask = np.ones_like(img, dtype=bool)
    with pytest.raises(ValidationError, match="mask"):
        ssim(img, img, ignore_mask=mask)


# ---------------------------------------------------------------------------
# pair validation and filtering


def hand_boxes():
    return [BBox(18.0, 10.0, 36.0, 30.0)]


def test_validate_pair_accepts_inpainted_hands():
    img = make_image(9)
    aug = mock_augment(img, hand_boxes())
    assert not np.array_equal(aug, img)      # the repaint did something
    v = validate_pair(img, aug, hand_boxes(), image_id="img_000009")
    assert v.kept and v.ssim_score == 1.0
    assert 0.0 < v.masked_fraction < 1.0


def test_validate_pair_rejects_background_damage():
    img = make_image(10)
    bad = mock_augment(img, hand_boxes(), corrupt_background=True,
                       rng=np.random.default_rng(0))
    v = validate_pair(img, bad, hand_boxes())
    assert not v.kept and v.ssim_score < DEFAULT_THRESHOLD


def test_validate_pair_shape_mismatch():
    img = make_image(11)
    with pytest.raises(ValidationError, match="shape"):
        validate_pair(img, img[:-2], hand_boxes())


def test_filter_dataset_threshold_and_report(tmp_path):
    pairs = []
    for i in range(6):
        img = make_image(20 + i)
        corrupt = i % 3 == 0
        aug = mock_augment(img, hand_boxes(), corrupt_background=corrupt,
                           rng=np.random.default_rng(i))
        pairs.append((f"img_{i:06d}", img, aug, hand_boxes()))
    # feed out of order; the report must come back sorted
    pairs.reverse()
    kept, report = filter_dataset(pairs)
    assert kept == ["img_000001", "img_000002", "img_000004", "img_000005"]
    assert report.keep_rate == pytest.approx(4 / 6)
    ids = [v.image_id for v in report.verdicts]
    assert ids == sorted(ids)

    report.write(tmp_path / "report.json")
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["keep_rate"] == pytest.approx(4 / 6)
    assert [p["kept"] for p in doc["pairs"]] == [False, True, True,
                                                 False, True, True]


def test_filter_dataset_empty():
    kept, report = filter_dataset([])
    assert kept == [] and report.keep_rate == 0.0
