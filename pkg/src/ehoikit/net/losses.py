"""The seven-term training objective and its target builders.

The total loss is the plain sum, in fixed order, of: backbone (detection
classification + box regression, including RoI object-category
classification), depth (L1 on normalized inverse depth), side (CE),
contact (appearance CE + multimodal CE), offset (smooth-L1, contact
hands only), keypoints (binary cross-entropy against sum-normalized
Gaussian heatmaps, floored so a perfect fit scores zero), and glove
(two-logit CE, equivalent to binary cross-entropy on the positive-class
probability).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from .autograd import Tensor, binary_kl, cross_entropy, l1_loss, smooth_l1

KPT_SIGMA = 1.5  # Gaussian target spread, in heatmap cells


@dataclass(frozen=True)
class LossBreakdown:
    l_backbone: float
    l_depth: float
    l_side: float
    l_contact: float
    l_offset: float
    l_kpt: float
    l_glove: float
    l_total: float

    def as_dict(self) -> dict[str, float]:
        return {
            "l_backbone": self.l_backbone, "l_depth": self.l_depth,
            "l_side": self.l_side, "l_contact": self.l_contact,
            "l_offset": self.l_offset, "l_kpt": self.l_kpt,
            "l_glove": self.l_glove, "l_total": self.l_total,
        }


@dataclass
class BatchTargets:
    """Ground-truth side of one batch. All arrays are constants."""

    depth: np.ndarray                 # (N, 1, H, W)
    side: np.ndarray                  # (R,) 0 left / 1 right
    state: np.ndarray                 # (R,) 0 no-contact / 1 contact
    glove: np.ndarray                 # (R,) 0 bare / 1 glove
    offset: np.ndarray                # (R, 3), rows valid where state == 1
    kpt_heatmaps: np.ndarray          # (R, 21, K, K) sum-normalized
    object_category: np.ndarray       # (O,)
    det_cls: np.ndarray | None = None   # (M,) dense cell labels 0/1/2
    det_box: np.ndarray | None = None   # (P, 4) regression targets
    det_pos: np.ndarray | None = None   # (P,) flat indices of positive cells


@dataclass
class BatchPredictions:
    """Model side of one batch, as graph tensors."""

    depth: Tensor                     # (N, 1, H, W)
    side_logits: Tensor               # (R, 2)
    state_logits: Tensor              # (R, 2) appearance stream
    state_logits_mm: Tensor           # (R, 2) multimodal stream
    glove_logits: Tensor              # (R, 2)
    offset: Tensor                    # (R, 3)
    kpt_heatmaps: Tensor              # (R, 21, K, K) probabilities
    objcat_logits: Tensor | None = None  # (O, n_categories)
    det_cls_logits: Tensor | None = None  # (M, 3) flattened dense cells
    det_box_reg: Tensor | None = None     # (P, 4) at positive cells


def keypoint_target_heatmaps(kps_crop: np.ndarray, k: int,
                             sigma: float = KPT_SIGMA) -> np.ndarray:
    """Sum-normalized Gaussian heatmaps for crop-frame keypoints.

    `kps_crop` is (R, 21, 2) in heatmap cell units (x, y in [0, k)).
    Every channel sums to exactly 1 so it is a reachable target for the
    spatially softmaxed prediction.
    """
    grid = np.arange(k, dtype=np.float64) + 0.5
    dx = grid[None, None, :] - kps_crop[:, :, 0][:, :, None]
    dy = grid[None, None, :] - kps_crop[:, :, 1][:, :, None]
    gx = np.exp(-0.5 * (dx / sigma) ** 2)
    gy = np.exp(-0.5 * (dy / sigma) ** 2)
    hm = gy[:, :, :, None] * gx[:, :, None, :]
    total = hm.sum(axis=(2, 3), keepdims=True)
    return hm / np.maximum(total, 1e-300)


def _zero() -> Tensor:
    return Tensor(0.0)


def compute_loss(preds: BatchPredictions, targets: BatchTargets,
                 smooth_l1_beta: float = 1.0):
    """Evaluate all loss components. Returns (LossBreakdown, total Tensor).

    The reported total is the exact float sum of the seven components in
    their fixed order; the returned tensor is the differentiable sum of
    the same nodes in the same order.
    """
    r = preds.side_logits.shape[0] if preds.side_logits.data.ndim else 0

    # backbone: dense detector terms (when present) + RoI object categories
    backbone_terms = []
    if preds.det_cls_logits is not None and targets.det_cls is not None \
            and targets.det_cls.size:
        backbone_terms.append(cross_entropy(preds.det_cls_logits,
                                            targets.det_cls))
    if preds.det_box_reg is not None and targets.det_box is not None \
            and targets.det_box.size:
        backbone_terms.append(smooth_l1(preds.det_box_reg, targets.det_box,
                                        smooth_l1_beta))
    if preds.objcat_logits is not None and targets.object_category.size:
        backbone_terms.append(cross_entropy(preds.objcat_logits,
                                            targets.object_category))
    l_backbone = _zero()
    for term in backbone_terms:
        l_backbone = l_backbone + term

    l_depth = l1_loss(preds.depth, targets.depth) \
        if preds.depth.size else _zero()

    if r:
        l_side = cross_entropy(preds.side_logits, targets.side)
        l_contact = cross_entropy(preds.state_logits, targets.state) + \
            cross_entropy(preds.state_logits_mm, targets.state)
        l_glove = cross_entropy(preds.glove_logits, targets.glove)
        kk = preds.kpt_heatmaps.shape[-1]
        probs = preds.kpt_heatmaps.reshape(r * 21, kk * kk)
        l_kpt = binary_kl(probs, targets.kpt_heatmaps.reshape(r * 21, -1))
        contact_idx = np.flatnonzero(targets.state == 1)
        if contact_idx.size:
            l_offset = smooth_l1(preds.offset.take_rows(contact_idx),
                                 targets.offset[contact_idx], smooth_l1_beta)
        else:
            l_offset = _zero()
    else:
        l_side = l_contact = l_glove = l_kpt = l_offset = _zero()

    total = l_backbone + l_depth + l_side + l_contact + l_offset + \
        l_kpt + l_glove
    comps = [t.item() for t in (l_backbone, l_depth, l_side, l_contact,
                                l_offset, l_kpt, l_glove)]
    for name, v in zip(("l_backbone", "l_depth", "l_side", "l_contact",
                        "l_offset", "l_kpt", "l_glove"), comps):
        if not np.isfinite(v):
            raise ValidationError(f"non-finite loss component {name}")
    l_total = 0.0
    for v in comps:
        l_total += v
    breakdown = LossBreakdown(*comps, l_total)
    return breakdown, total
