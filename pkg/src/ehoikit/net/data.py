"""Scene loading, target assembly, and batch construction.

Scenes are decoded once into float arrays and cached in memory (desk
scale keeps whole splits resident). Batches group identically sized
images; GT boxes become RoIs, annotations become head targets, and the
fusion crop frame is the 10%-dilated hand box shared with the keypoint
branch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..annotations import (
    BBox,
    ContactState,
    Dataset,
    GloveStatus,
    HandAnnotation,
    HandSide,
    ImageRecord,
    ObjectAnnotation,
    decode_depth,
    decode_mask,
    read_rgb_png,
    read_u16_png,
)
from ..errors import ValidationError
from .losses import BatchTargets, keypoint_target_heatmaps
from .model import ModelConfig, dilated_crop_box


@dataclass
class SceneSample:
    image_id: str
    width: int
    height: int
    rgb: np.ndarray              # (H, W, 3) float64 in [0, 1]
    depth: np.ndarray            # (H, W) float64 inverse depth
    mask: np.ndarray             # (H, W) int32 instance ids, -1 background
    hands: list[HandAnnotation]
    objects: list[ObjectAnnotation]


def load_scene(record: ImageRecord, root: str | Path) -> SceneSample:
    root = Path(root)
    rgb = read_rgb_png(root / record.rgb_path).astype(np.float64) / 255.0
    if record.depth_path:
        depth = decode_depth(read_u16_png(root / record.depth_path))
    else:
        depth = np.zeros(rgb.shape[:2], dtype=np.float64)
    if record.mask_path:
        mask = decode_mask(read_u16_png(root / record.mask_path))
    else:
        mask = np.full(rgb.shape[:2], -1, dtype=np.int32)
    return SceneSample(record.image_id, record.width, record.height,
                       rgb, depth, mask, list(record.hands),
                       list(record.objects))


def load_split(dataset: Dataset, root: str | Path,
               split: str | None = None) -> list[SceneSample]:
    recs = dataset.records if split is None else dataset.subset(split).records
    return [load_scene(r, root) for r in recs]


# ---------------------------------------------------------------------------
# deterministic stratified subsampling (nested across fractions)


def stratified_subset_indices(samples, fraction: float,
                              seed: int) -> list[int]:
    """Indices of a `fraction` subset, stratified by per-image glove and
    contact presence. Subsets are nested: a smaller fraction is always a
    prefix of a larger one under the same seed."""
    if not 0.0 < fraction <= 1.0:
        raise ValidationError(f"fraction must lie in (0, 1], got {fraction}")
    strata: dict[tuple[bool, bool], list[int]] = {}
    for i, s in enumerate(samples):
        hands = s.hands if isinstance(s, SceneSample) else s.hands
        key = (any(h.glove == GloveStatus.GLOVE for h in hands),
               any(h.contact == ContactState.CONTACT for h in hands))
        strata.setdefault(key, []).append(i)
    rng = np.random.default_rng((seed, 0x5B5E7))
    chosen: list[int] = []
    for key in sorted(strata):
        idxs = strata[key]
        perm = rng.permutation(len(idxs))
        take = math.ceil(fraction * len(idxs))
        chosen.extend(idxs[j] for j in perm[:take])
    return sorted(chosen)


# ---------------------------------------------------------------------------
# batch assembly


@dataclass
class Batch:
    images: np.ndarray          # (B, 3, H, W)
    hand_rois: np.ndarray       # (R, 5) [batch, x0, y0, x1, y1]
    kpt_rois: np.ndarray        # (R, 5) dilated crop boxes
    crop_boxes: list[BBox]      # dilated crop frame per hand
    hand_meta: list[tuple[int, HandAnnotation]]   # (sample index, annotation)
    object_rois: np.ndarray     # (O, 5)
    object_meta: list[tuple[int, ObjectAnnotation]]
    targets: BatchTargets


def _side_label(side: HandSide) -> int:
    return 0 if side == HandSide.LEFT else 1


def make_batch(samples: list[SceneSample], cfg: ModelConfig) -> Batch:
    """Targets and RoIs for GT-proposal training on equally sized scenes."""
    sizes = {(s.width, s.height) for s in samples}
    if len(sizes) != 1:
        raise ValidationError(f"mixed image sizes in one batch: {sizes}")
    w, h = sizes.pop()

    images = np.stack([s.rgb.transpose(2, 0, 1) for s in samples])
    depth_t = np.stack([s.depth[None] for s in samples])

    hand_rois, kpt_rois, crop_boxes, hand_meta = [], [], [], []
    side_t, state_t, glove_t, offset_t, kps_crop = [], [], [], [], []
    obj_rois, obj_meta, objcat_t = [], [], []
    k = cfg.heatmap_size

    for bi, s in enumerate(samples):
        for hand in s.hands:
            bb = hand.bbox
            crop = dilated_crop_box(bb, cfg.crop_dilation, w, h)
            hand_rois.append([bi, bb.x_min, bb.y_min, bb.x_max, bb.y_max])
            kpt_rois.append([bi, crop.x_min, crop.y_min,
                             crop.x_max, crop.y_max])
            crop_boxes.append(crop)
            hand_meta.append((bi, hand))
            side_t.append(_side_label(hand.side))
            contact = hand.contact == ContactState.CONTACT
            state_t.append(1 if contact else 0)
            glove_t.append(1 if hand.glove == GloveStatus.GLOVE else 0)
            if contact:
                offset_t.append([hand.offset.v_x, hand.offset.v_y,
                                 hand.offset.m])
            else:
                offset_t.append([0.0, 0.0, 0.0])
            pts = np.array([[(kp.x - crop.x_min) / crop.width * k,
                             (kp.y - crop.y_min) / crop.height * k]
                            for kp in hand.keypoints])
            kps_crop.append(pts)
        for obj in s.objects:
            bb = obj.bbox
            obj_rois.append([bi, bb.x_min, bb.y_min, bb.x_max, bb.y_max])
            obj_meta.append((bi, obj))
            objcat_t.append(obj.category_id)

    r = len(hand_rois)
    kpt_targets = keypoint_target_heatmaps(
        np.asarray(kps_crop).reshape(r, 21, 2), k) if r else \
        np.zeros((0, 21, k, k))
    targets = BatchTargets(
        depth=depth_t,
        side=np.asarray(side_t, dtype=np.int64),
        state=np.asarray(state_t, dtype=np.int64),
        glove=np.asarray(glove_t, dtype=np.int64),
        offset=np.asarray(offset_t, dtype=np.float64).reshape(r, 3),
        kpt_heatmaps=kpt_targets,
        object_category=np.asarray(objcat_t, dtype=np.int64),
    )
    return Batch(
        images=images,
        hand_rois=np.asarray(hand_rois, dtype=np.float64).reshape(r, 5),
        kpt_rois=np.asarray(kpt_rois, dtype=np.float64).reshape(r, 5),
        crop_boxes=crop_boxes,
        hand_meta=hand_meta,
        object_rois=np.asarray(obj_rois, dtype=np.float64).reshape(
            len(obj_rois), 5),
        object_meta=obj_meta,
        targets=targets,
    )


def add_detector_targets(batch: Batch, stride: int = 8) -> None:
    """Dense FCOS-style targets on the stride-8 grid, stored into
    batch.targets. Each GT box marks the cell containing its center;
    the cell's class is hand (1) or object (2) and its regression target
    is the box extent around the cell center in stride units."""
    b, _, h, w = batch.images.shape
    gh, gw = h // stride, w // stride
    cls = np.zeros((b, gh, gw), dtype=np.int64)
    box = np.zeros((b, gh, gw, 4), dtype=np.float64)
    for rois, label in ((batch.hand_rois, 1), (batch.object_rois, 2)):
        for row in rois:
            bi = int(row[0])
            cx = (row[1] + row[3]) / 2.0
            cy = (row[2] + row[4]) / 2.0
            j = min(int(cx / stride), gw - 1)
            i = min(int(cy / stride), gh - 1)
            ccx = (j + 0.5) * stride
            ccy = (i + 0.5) * stride
            cls[bi, i, j] = label
            box[bi, i, j] = [(ccx - row[1]) / stride, (ccy - row[2]) / stride,
                             (row[3] - ccx) / stride, (row[4] - ccy) / stride]
    pos = np.flatnonzero(cls.ravel() > 0)
    batch.targets.det_cls = cls.ravel()
    batch.targets.det_pos = pos
    batch.targets.det_box = box.reshape(-1, 4)[pos]


def batches(samples: list[SceneSample], batch_size: int, rng) -> list[list[SceneSample]]:
    """Seeded shuffle, then contiguous groups of identically sized scenes."""
    order = rng.permutation(len(samples))
    groups: dict[tuple[int, int], list[SceneSample]] = {}
    for i in order:
        s = samples[i]
        groups.setdefault((s.width, s.height), []).append(s)
    out = []
    for key in sorted(groups):
        chunk = groups[key]
        for i in range(0, len(chunk), batch_size):
            out.append(chunk[i:i + batch_size])
    return out
