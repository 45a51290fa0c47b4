"""Inference: detections with attributes, fused contact, and keypoints.

Two modes. `gt_proposals` takes ground-truth boxes as regions and
predicts every attribute, isolating head quality from detection quality.
`detector` decodes the dense stride-8 head, applies per-class NMS, then
runs the same attribute path on the surviving boxes. Hand confidence in
GT-proposal mode is the certainty of the fused contact estimate so that
downstream ranking favors confident predictions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..annotations import (
    BBox,
    ContactState,
    GloveStatus,
    HandSide,
    ImageRecord,
    OffsetVector,
)
from ..errors import ValidationError
from .autograd import Tensor
from .model import Model, build_fusion_input, decode_keypoints, dilated_crop_box

DETECTOR_SCORE_THRESHOLD = 0.35
NMS_IOU = 0.5
MAX_DETECTIONS = 50


@dataclass
class Detection:
    kind: str                      # "hand" or "object"
    bbox: BBox
    confidence: float
    category_id: int | None = None
    side: HandSide | None = None
    contact: ContactState | None = None
    glove: GloveStatus | None = None
    contact_prob: float | None = None
    appearance_contact_prob: float | None = None
    offset: OffsetVector | None = None
    keypoints: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError(
                f"confidence must lie in [0, 1], got {self.confidence}")


def _box_iou_matrix(boxes: np.ndarray) -> np.ndarray:
    x0 = np.maximum(boxes[:, None, 0], boxes[None, :, 0])
    y0 = np.maximum(boxes[:, None, 1], boxes[None, :, 1])
    x1 = np.minimum(boxes[:, None, 2], boxes[None, :, 2])
    y1 = np.minimum(boxes[:, None, 3], boxes[None, :, 3])
    inter = np.clip(x1 - x0, 0, None) * np.clip(y1 - y0, 0, None)
    area = (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])
    union = area[:, None] + area[None, :] - inter
    return inter / np.maximum(union, 1e-12)


def nms(boxes: np.ndarray, scores: np.ndarray,
        iou_threshold: float = NMS_IOU) -> list[int]:
    """Greedy non-maximum suppression; returns kept indices by score."""
    if len(boxes) == 0:
        return []
    iou = _box_iou_matrix(np.asarray(boxes, dtype=np.float64))
    order = np.lexsort((np.arange(len(scores)), -np.asarray(scores)))
    keep: list[int] = []
    removed = np.zeros(len(scores), dtype=bool)
    for i in order:
        if removed[i]:
            continue
        keep.append(int(i))
        removed |= iou[i] > iou_threshold
        removed[i] = True
    return keep


def _unit_offset(raw: np.ndarray) -> OffsetVector:
    vx, vy, m = float(raw[0]), float(raw[1]), float(raw[2])
    norm = float(np.hypot(vx, vy))
    if norm < 1e-12:
        return OffsetVector(1.0, 0.0, max(m, 0.0))
    return OffsetVector(vx / norm, vy / norm, max(m, 0.0))


def _threshold_mask(depth_plane: np.ndarray, box: BBox) -> np.ndarray:
    """Trivial stand-in segmentation: within the box, keep pixels whose
    predicted inverse depth exceeds the crop midpoint (nearer half)."""
    h, w = depth_plane.shape
    mask = np.zeros((h, w), dtype=bool)
    x0, y0 = int(max(box.x_min, 0)), int(max(box.y_min, 0))
    x1 = int(min(np.ceil(box.x_max), w))
    y1 = int(min(np.ceil(box.y_max), h))
    if x1 <= x0 or y1 <= y0:
        return mask
    crop = depth_plane[y0:y1, x0:x1]
    mid = 0.5 * (float(crop.min()) + float(crop.max()))
    mask[y0:y1, x0:x1] = crop > mid
    return mask


def _predict_hands(model: Model, feats, rgb: np.ndarray,
                   depth_plane: np.ndarray, boxes: list[BBox],
                   confidences: list[float] | None,
                   mask_planes: list[np.ndarray | None]) -> list[Detection]:
    if not boxes:
        return []
    cfg = model.config
    h, w = rgb.shape[:2]
    rois = np.array([[0, b.x_min, b.y_min, b.x_max, b.y_max] for b in boxes])
    crop_boxes = [dilated_crop_box(b, cfg.crop_dilation, w, h) for b in boxes]
    kpt_rois = np.array([[0, c.x_min, c.y_min, c.x_max, c.y_max]
                         for c in crop_boxes])
    hfv = model.pool_hand_features(feats, rois)
    attrs = model.predict_attributes(hfv)
    kpt = model.predict_keypoints(feats, kpt_rois)
    fusion = np.empty((len(boxes), 26, cfg.fusion_crop, cfg.fusion_crop))
    for i, box in enumerate(boxes):
        plane = mask_planes[i]
        if plane is None:
            plane = _threshold_mask(depth_plane, crop_boxes[i])
        fusion[i] = build_fusion_input(rgb, plane, depth_plane, kpt.data[i],
                                       crop_boxes[i], cfg.fusion_crop)
    mm_logits = model.early_fusion(fusion)
    fused = model.late_fusion(attrs["state"], mm_logits).data
    app_prob = _softmax(attrs["state"].data)[:, 1]
    side_idx = attrs["side"].data.argmax(axis=1)
    glove_idx = attrs["glove"].data.argmax(axis=1)

    out = []
    for i, box in enumerate(boxes):
        p = float(fused[i])
        conf = float(confidences[i]) if confidences is not None \
            else max(p, 1.0 - p)
        out.append(Detection(
            kind="hand", bbox=box, confidence=conf,
            side=HandSide.RIGHT if side_idx[i] else HandSide.LEFT,
            contact=ContactState.CONTACT if p >= 0.5
            else ContactState.NO_CONTACT,
            glove=GloveStatus.GLOVE if glove_idx[i] else GloveStatus.NO_GLOVE,
            contact_prob=p, appearance_contact_prob=float(app_prob[i]),
            offset=_unit_offset(attrs["offset"].data[i]),
            keypoints=decode_keypoints(kpt.data[i], crop_boxes[i])))
    return out


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _predict_objects(model: Model, feats, boxes: list[BBox],
                     confidences: list[float] | None) -> list[Detection]:
    if not boxes:
        return []
    rois = np.array([[0, b.x_min, b.y_min, b.x_max, b.y_max] for b in boxes])
    hfv = model.pool_hand_features(feats, rois)
    logits = model.predict_object_categories(hfv).data
    probs = _softmax(logits)
    out = []
    for i, box in enumerate(boxes):
        cat = int(logits[i].argmax())
        conf = float(confidences[i]) if confidences is not None \
            else float(probs[i, cat])
        out.append(Detection(kind="object", bbox=box, confidence=conf,
                             category_id=cat))
    return out


def _decode_dense(model: Model, feats, width: int, height: int,
                  score_threshold: float):
    cls_map, box_map = model.detector_head(feats)
    probs = _softmax_3d(cls_map.data[0])        # (3, gh, gw)
    reg = box_map.data[0]                        # (4, gh, gw)
    gh, gw = probs.shape[1], probs.shape[2]
    stride = height // gh
    results = {1: ([], []), 2: ([], [])}
    for cls in (1, 2):
        score = probs[cls]
        ys, xs = np.nonzero(score >= score_threshold)
        for i, j in zip(ys, xs):
            ccx = (j + 0.5) * stride
            ccy = (i + 0.5) * stride
            l, t, rr, b = reg[:, i, j] * stride
            x0 = np.clip(ccx - l, 0.0, width - 1.0)
            y0 = np.clip(ccy - t, 0.0, height - 1.0)
            x1 = np.clip(ccx + rr, x0 + 1.0, width)
            y1 = np.clip(ccy + b, y0 + 1.0, height)
            results[cls][0].append([x0, y0, x1, y1])
            results[cls][1].append(float(score[i, j]))
    return results


def _softmax_3d(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def infer(rgb: np.ndarray, model: Model, mode: str = "gt_proposals",
          record: ImageRecord | None = None,
          instance_mask: np.ndarray | None = None,
          score_threshold: float = DETECTOR_SCORE_THRESHOLD) -> list[Detection]:
    """Detections for one image, ranked by non-increasing confidence.

    `rgb` is (H, W, 3) uint8 or [0, 1] float. In gt_proposals mode the
    boxes come from `record` (one Detection per GT hand and object);
    `instance_mask` supplies the fusion mask channel when available.
    """
    if mode not in ("gt_proposals", "detector"):
        raise ValidationError(f"unknown inference mode {mode!r}")
    if rgb.dtype == np.uint8:
        rgb = rgb.astype(np.float64) / 255.0
    h, w = rgb.shape[:2]
    images = rgb.transpose(2, 0, 1)[None]
    feats = model.extract_features(Tensor(images))
    depth_plane = model.predict_depth(feats).data[0, 0]

    if mode == "gt_proposals":
        if record is None:
            raise ValidationError("gt_proposals mode requires a record")
        hand_boxes = [hd.bbox for hd in record.hands]
        masks: list[np.ndarray | None] = []
        for hd in record.hands:
            masks.append(None if instance_mask is None
                         else instance_mask == hd.id)
        hands = _predict_hands(model, feats, rgb, depth_plane, hand_boxes,
                               None, masks)
        objects = _predict_objects(model, feats,
                                   [o.bbox for o in record.objects], None)
    else:
        dense = _decode_dense(model, feats, w, h, score_threshold)
        hand_raw, hand_scores = dense[1]
        obj_raw, obj_scores = dense[2]
        hk = nms(np.array(hand_raw).reshape(-1, 4), np.array(hand_scores))
        ok = nms(np.array(obj_raw).reshape(-1, 4), np.array(obj_scores))
        hk = hk[:MAX_DETECTIONS]
        ok = ok[:MAX_DETECTIONS]
        hand_boxes = [BBox(*hand_raw[i]) for i in hk]
        hands = _predict_hands(model, feats, rgb, depth_plane, hand_boxes,
                               [hand_scores[i] for i in hk],
                               [None] * len(hk))
        objects = _predict_objects(model, feats,
                                   [BBox(*obj_raw[i]) for i in ok],
                                   [obj_scores[i] for i in ok])

    dets = hands + objects
    dets.sort(key=lambda d: -d.confidence)
    return dets
