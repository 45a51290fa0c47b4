"""Background-consistency validation for glove-augmented image pairs.

An external augmentation repaints hands but must leave the background
untouched. We mask the (dilated) hand boxes in both images, score the
remaining background with SSIM on luminance, and discard pairs scoring
below threshold. Windows touching any masked pixel are excluded so mask
edges cannot bleed into the score.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .annotations import BBox
from .errors import ValidationError

DEFAULT_THRESHOLD = 0.95
MASK_MARGIN = 0.15

# Rec. 601 luminance weights
_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float64)


@dataclass(frozen=True)
class SsimParams:
    """Constants of the SSIM formula plus the local window shape."""

    dynamic_range: float = 255.0
    k1: float = 0.01
    k2: float = 0.03
    window_size: int = 11
    sigma: float = 1.5

    def __post_init__(self):
        if self.k1 <= 0 or self.k2 <= 0:
            raise ValidationError("K1 and K2 must be positive")
        if self.window_size < 3 or self.window_size % 2 == 0:
            raise ValidationError("window size must be odd and at least 3")

    def kernel(self) -> np.ndarray:
        half = (self.window_size - 1) / 2.0
        xs = np.arange(self.window_size, dtype=np.float64) - half
        k = np.exp(-0.5 * (xs / self.sigma) ** 2)
        return k / k.sum()

    @property
    def c1(self) -> float:
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.dynamic_range) ** 2


@dataclass(frozen=True)
class PairVerdict:
    image_id: str
    ssim_score: float
    kept: bool
    masked_fraction: float


def to_luminance(rgb: np.ndarray) -> np.ndarray:
    """RGB (H, W, 3) in [0, 255] -> single-channel luminance, float64."""
    return np.asarray(rgb, dtype=np.float64) @ _LUMA


def mask_hand_regions(image: np.ndarray, hand_bboxes: list[BBox],
                      margin: float = MASK_MARGIN):
    """Gray out each hand box dilated by `margin` of its own size.

    Returns (masked image, boolean mask of replaced pixels). The fill value
    is mid-gray (half the 8-bit range). Raises on a degenerate mask that
    covers the whole image.
    """
    h, w = image.shape[:2]
    masked = np.array(image, copy=True)
    mask = np.zeros((h, w), dtype=bool)
    for bbox in hand_bboxes:
        dil = bbox.dilated(margin).clamped(w, h)
        x0, y0 = int(np.floor(dil.x_min)), int(np.floor(dil.y_min))
        x1, y1 = int(np.ceil(dil.x_max)), int(np.ceil(dil.y_max))
        mask[y0:y1, x0:x1] = True
    fraction = float(mask.mean())
    if hand_bboxes and fraction >= 1.0:
        raise ValidationError(
            "degenerate mask: hand regions cover the entire image")
    masked[mask] = 127.5
    return masked, mask


def _window_stats(a: np.ndarray, b: np.ndarray, kernel: np.ndarray):
    """Local means/variances/covariance over valid-mode Gaussian windows."""
    mu_a = kernels.sep_gaussian_valid(a, kernel)
    mu_b = kernels.sep_gaussian_valid(b, kernel)
    e_aa = kernels.sep_gaussian_valid(a * a, kernel)
    e_bb = kernels.sep_gaussian_valid(b * b, kernel)
    e_ab = kernels.sep_gaussian_valid(a * b, kernel)
    var_a = e_aa - mu_a * mu_a
    var_b = e_bb - mu_b * mu_b
    cov = e_ab - mu_a * mu_b
    return mu_a, mu_b, var_a, var_b, cov


def ssim(a: np.ndarray, b: np.ndarray, params: SsimParams = SsimParams(),
         ignore_mask: np.ndarray | None = None) -> float:
    """Mean local SSIM between two grayscale buffers.

    Windows are valid-mode (fully inside the image); a window is excluded
    when any of its pixels is flagged in `ignore_mask`. The result is
    clipped to [-1, 1]; identical inputs score exactly 1.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ValidationError(
            f"ssim expects equal 2-d shapes, got {a.shape} vs {b.shape}")
    k = params.window_size
    if a.shape[0] < k or a.shape[1] < k:
        raise ValidationError(
            f"image smaller than the {k}x{k} SSIM window")
    kernel = params.kernel()
    mu_a, mu_b, var_a, var_b, cov = _window_stats(a, b, kernel)
    c1, c2 = params.c1, params.c2
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    smap = num / den
    if ignore_mask is not None:
        if ignore_mask.shape != a.shape:
            raise ValidationError("ignore_mask shape mismatch")
        clean = kernels.window_all_clean(
            np.ascontiguousarray(ignore_mask, dtype=bool), k)
        if not clean.any():
            raise ValidationError("all SSIM windows are masked")
        score = float(smap[clean].mean())
    else:
        score = float(smap.mean())
    return float(np.clip(score, -1.0, 1.0))


def ssim_reference(a: np.ndarray, b: np.ndarray,
                   params: SsimParams = SsimParams(),
                   ignore_mask: np.ndarray | None = None) -> float:
    """Independent naive SSIM: explicit loops over every window."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ValidationError(
            f"ssim expects equal 2-d shapes, got {a.shape} vs {b.shape}")
    k = params.window_size
    kern1 = params.kernel()
    kern2 = np.outer(kern1, kern1)
    c1, c2 = params.c1, params.c2
    h, w = a.shape
    vals = []
    for i in range(h - k + 1):
        for j in range(w - k + 1):
            if ignore_mask is not None and ignore_mask[i:i + k, j:j + k].any():
                continue
            wa = a[i:i + k, j:j + k]
            wb = b[i:i + k, j:j + k]
            mu_a = float((kern2 * wa).sum())
            mu_b = float((kern2 * wb).sum())
            var_a = float((kern2 * wa * wa).sum()) - mu_a * mu_a
            var_b = float((kern2 * wb * wb).sum()) - mu_b * mu_b
            cov = float((kern2 * wa * wb).sum()) - mu_a * mu_b
            num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
            den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
            vals.append(num / den)
    if not vals:
        raise ValidationError("all SSIM windows are masked")
    return float(np.clip(np.mean(vals), -1.0, 1.0))


def validate_pair(original: np.ndarray, augmented: np.ndarray,
                  hands: list[BBox], threshold: float = DEFAULT_THRESHOLD,
                  params: SsimParams = SsimParams(),
                  image_id: str = "") -> PairVerdict:
    """Score background similarity of an augmented pair and keep/discard.

    Both images are converted to luminance; hand regions are masked with
    the same geometry in both; windows touching the mask are excluded.
    """
    if original.shape != augmented.shape:
        raise ValidationError(
            f"pair shape mismatch: {original.shape} vs {augmented.shape}")
    lum_a = to_luminance(original)
    lum_b = to_luminance(augmented)
    _, mask = mask_hand_regions(lum_a, hands)
    score = ssim(lum_a, lum_b, params, ignore_mask=mask if hands else None)
    return PairVerdict(image_id=image_id, ssim_score=score,
                       kept=score >= threshold,
                       masked_fraction=float(mask.mean()))


@dataclass
class ValidationReport:
    verdicts: list[PairVerdict]

    @property
    def keep_rate(self) -> float:
        if not self.verdicts:
            return 0.0
        return sum(v.kept for v in self.verdicts) / len(self.verdicts)

    def to_json(self) -> str:
        doc = {
            "pairs": [{"image_id": v.image_id,
                       "ssim": v.ssim_score,
                       "kept": v.kept,
                       "masked_fraction": v.masked_fraction}
                      for v in self.verdicts],
            "keep_rate": self.keep_rate,
        }
        return json.dumps(doc, separators=(",", ":")) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())


def filter_dataset(pairs, threshold: float = DEFAULT_THRESHOLD,
                   params: SsimParams = SsimParams()):
    """Validate (image_id, original, augmented, hands) tuples.

    Returns (kept image_ids, ValidationReport) with verdicts ordered by
    image_id so parallel scoring cannot change the report.
    """
    verdicts = []
    for image_id, original, augmented, hands in pairs:
        verdicts.append(validate_pair(original, augmented, hands,
                                      threshold, params, image_id=image_id))
    verdicts.sort(key=lambda v: v.image_id)
    kept = [v.image_id for v in verdicts if v.kept]
    return kept, ValidationReport(verdicts)


def mock_augment(original: np.ndarray, hands: list[BBox],
                 corrupt_background: bool = False,
                 rng: np.random.Generator | None = None) -> np.ndarray:
    """Stand-in for the external glove repainting model.

    Paints a glove-yellow overlay strictly inside each hand box; with
    `corrupt_background` it also perturbs pixels outside the boxes so the
    discard path can be exercised.
    """
    out = np.array(original, copy=True)
    h, w = out.shape[:2]
    inside = np.zeros((h, w), dtype=bool)
    for bbox in hands:
        cl = bbox.clamped(w, h)
        x0, y0 = int(np.ceil(cl.x_min)), int(np.ceil(cl.y_min))
        x1, y1 = int(np.floor(cl.x_max)), int(np.floor(cl.y_max))
        if x1 <= x0 or y1 <= y0:
            continue
        inside[y0:y1, x0:x1] = True
        out[y0:y1, x0:x1] = (0.4 * out[y0:y1, x0:x1]
                             + 0.6 * np.array([212, 194, 26])).astype(out.dtype)
    if corrupt_background:
        if rng is None:
            rng = np.random.default_rng(0)
        noise = rng.integers(-70, 71, size=out.shape)
        noisy = np.clip(out.astype(np.int64) + noise, 0, 255).astype(out.dtype)
        out[~inside] = noisy[~inside]
    return out
