"""Canonical interaction-annotation schema, JSON (de)serialization and stats.

A dataset on disk is one JSON document per split plus PNG assets:

* RGB: 8-bit 3-channel PNG
* depth: single-channel 16-bit PNG, value = round(65535 * normalized
  inverse depth)
* instance masks: single-channel 16-bit PNG, pixel value = instance id + 1,
  0 = background

Every hand carries exactly 21 keypoints in the wrist-first, per-finger
landmark order (wrist, then thumb/index/middle/ring/pinky with 4 joints
each). A hand in contact additionally carries an offset vector
``(v_x, v_y, m)`` - unit direction from its box center toward the active
object's box center, magnitude normalized by the image diagonal - and the
id of that active object.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import IOFailure, ValidationError

N_KEYPOINTS = 21

# canonical split ordering for reports and multi-split files
SPLIT_ORDER = ("train", "val", "test")


class AnnotationWarning(UserWarning):
    """Non-fatal issue found while parsing (e.g. a bbox clamped to bounds)."""


class HandSide(str, Enum):
    LEFT = "left"
    RIGHT = "right"


class ContactState(str, Enum):
    NO_CONTACT = "no_contact"
    CONTACT = "contact"


class GloveStatus(str, Enum):
    NO_GLOVE = "no_glove"
    GLOVE = "glove"


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in pixel coordinates, origin top-left."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        vals = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError(f"bbox has non-finite coordinates: {vals}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValidationError(f"bbox is empty or inverted: {vals}")

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def dilated(self, fraction: float) -> "BBox":
        """Box grown by `fraction` of its own size on every side."""
        dw = self.width * fraction
        dh = self.height * fraction
        return BBox(self.x_min - dw, self.y_min - dh,
                    self.x_max + dw, self.y_max + dh)

    def clamped(self, width: float, height: float) -> "BBox":
        return BBox(max(self.x_min, 0.0), max(self.y_min, 0.0),
                    min(self.x_max, float(width)), min(self.y_max, float(height)))


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    visible: bool


@dataclass(frozen=True)
class OffsetVector:
    """Unit direction plus diagonal-normalized magnitude.

    When m = 0 the direction is the canonical (1, 0).
    """

    v_x: float
    v_y: float
    m: float


@dataclass
class HandAnnotation:
    id: int
    bbox: BBox
    side: HandSide
    contact: ContactState
    glove: GloveStatus
    keypoints: tuple[Keypoint, ...]
    offset: OffsetVector | None = None
    active_object_id: int | None = None


@dataclass
class ObjectAnnotation:
    id: int
    bbox: BBox
    category_id: int
    active: bool


@dataclass
class ImageRecord:
    image_id: str
    width: int
    height: int
    rgb_path: str
    depth_path: str | None = None
    mask_path: str | None = None
    hands: list[HandAnnotation] = field(default_factory=list)
    objects: list[ObjectAnnotation] = field(default_factory=list)


@dataclass(frozen=True)
class Category:
    id: int
    name: str


@dataclass
class Dataset:
    """Parsed dataset: shared category table plus records with split labels.

    `splits` runs parallel to `records`; the empty string marks records
    without a split.
    """

    categories: list[Category]
    records: list[ImageRecord]
    splits: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.splits:
            self.splits = [""] * len(self.records)
        if len(self.splits) != len(self.records):
            raise ValidationError("splits and records lengths differ")

    def split_names(self) -> list[str]:
        seen = []
        for s in self.splits:
            if s not in seen:
                seen.append(s)
        known = [s for s in SPLIT_ORDER if s in seen]
        rest = sorted(s for s in seen if s not in SPLIT_ORDER)
        return known + rest

    def subset(self, split: str) -> "Dataset":
        recs = [r for r, s in zip(self.records, self.splits) if s == split]
        return Dataset(self.categories, recs, [split] * len(recs))


@dataclass(frozen=True)
class DatasetStats:
    n_images: int
    n_hands: int
    n_ehois: int
    n_left: int
    n_right: int
    n_objects: int
    glove_fraction: float  # percentage in [0, 100]


# ---------------------------------------------------------------------------
# offset-vector geometry


def derive_offset(hand_bbox: BBox, object_bbox: BBox, width: float,
                  height: float) -> OffsetVector:
    """Offset vector from hand box center toward object box center.

    Direction is unit-length; magnitude is the center distance divided by
    the image diagonal. Coincident centers give the canonical (1, 0, 0).
    """
    hx, hy = hand_bbox.center
    ox, oy = object_bbox.center
    dx = ox - hx
    dy = oy - hy
    dist = math.hypot(dx, dy)
    if dist == 0.0:
        return OffsetVector(1.0, 0.0, 0.0)
    diag = math.hypot(width, height)
    return OffsetVector(dx / dist, dy / dist, dist / diag)


def project_interaction_point(hand_bbox: BBox, offset: OffsetVector,
                              width: float, height: float) -> tuple[float, float]:
    """Project the interaction point from a hand box and its offset vector.

    point = hand center + m * diagonal * (v_x, v_y). Not clamped: the point
    may fall outside the image.
    """
    hx, hy = hand_bbox.center
    diag = math.hypot(width, height)
    return (hx + offset.m * diag * offset.v_x,
            hy + offset.m * diag * offset.v_y)


# ---------------------------------------------------------------------------
# parsing / validation


def _require(cond: bool, image_id: str, fieldname: str, detail: str):
    if not cond:
        raise ValidationError(
            f"invariant violation in image {image_id!r}, field {fieldname!r}: {detail}")


def _parse_bbox(raw, image_id: str, fieldname: str, width: int, height: int) -> BBox:
    if not (isinstance(raw, list) and len(raw) == 4):
        raise ValidationError(
            f"invariant violation in image {image_id!r}, field {fieldname!r}: "
            f"bbox must be [x_min, y_min, x_max, y_max]")
    try:
        box = BBox(*(float(v) for v in raw))
    except ValidationError as exc:
        raise ValidationError(
            f"invariant violation in image {image_id!r}, field {fieldname!r}: {exc}")
    if box.x_min < 0 or box.y_min < 0 or box.x_max > width or box.y_max > height:
        warnings.warn(
            f"image {image_id!r}: {fieldname} clamped to image bounds",
            AnnotationWarning, stacklevel=2)
        box = box.clamped(width, height)
    return box


def _parse_hand(raw: dict, image_id: str, width: int, height: int) -> HandAnnotation:
    hid = int(raw["id"])
    prefix = f"hands[{hid}]"
    bbox = _parse_bbox(raw["bbox"], image_id, f"{prefix}.bbox", width, height)
    try:
        side = HandSide(raw["side"])
        contact = ContactState(raw["contact"])
        glove = GloveStatus(raw["glove"])
    except ValueError as exc:
        raise ValidationError(
            f"invariant violation in image {image_id!r}, field {prefix!r}: {exc}")
    kps_raw = raw["keypoints"]
    _require(isinstance(kps_raw, list) and len(kps_raw) == N_KEYPOINTS,
             image_id, f"{prefix}.keypoints",
             f"expected exactly {N_KEYPOINTS} keypoints, got {len(kps_raw)}")
    kps = []
    for idx, kp in enumerate(kps_raw):
        x, y, vis = float(kp[0]), float(kp[1]), bool(kp[2])
        _require(math.isfinite(x) and math.isfinite(y), image_id,
                 f"{prefix}.keypoints[{idx}]", "non-finite coordinates")
        if vis:
            _require(0.0 <= x <= width and 0.0 <= y <= height, image_id,
                     f"{prefix}.keypoints[{idx}]",
                     "visible keypoint outside image bounds")
        kps.append(Keypoint(x, y, vis))

    offset_raw = raw.get("offset")
    active_id = raw.get("active_object_id")
    offset = None
    if offset_raw is not None:
        vx, vy, m = (float(v) for v in offset_raw)
        _require(m >= 0.0, image_id, f"{prefix}.offset", "magnitude must be >= 0")
        if m > 0.0:
            norm = vx * vx + vy * vy
            _require(abs(norm - 1.0) <= 2e-6, image_id, f"{prefix}.offset",
                     f"direction not unit length (|v|^2 = {norm})")
        else:
            _require((vx, vy) == (1.0, 0.0), image_id, f"{prefix}.offset",
                     "zero-magnitude offset must use canonical direction (1, 0)")
        offset = OffsetVector(vx, vy, m)

    in_contact = contact is ContactState.CONTACT
    _require((offset is not None) == in_contact, image_id, f"{prefix}.offset",
             "offset present iff hand is in contact")
    _require((active_id is not None) == in_contact, image_id,
             f"{prefix}.active_object_id",
             "active_object_id present iff hand is in contact")
    return HandAnnotation(hid, bbox, side, contact, glove, tuple(kps),
                          offset, int(active_id) if active_id is not None else None)


def _parse_record(raw: dict, categories: dict[int, str]) -> ImageRecord:
    image_id = str(raw["image_id"])
    width = int(raw["width"])
    height = int(raw["height"])
    _require(width > 0 and height > 0, image_id, "width/height",
             "image dimensions must be positive")
    hands = [_parse_hand(h, image_id, width, height) for h in raw.get("hands", [])]
    objects = []
    for o in raw.get("objects", []):
        oid = int(o["id"])
        bbox = _parse_bbox(o["bbox"], image_id, f"objects[{oid}].bbox", width, height)
        cat = int(o["category_id"])
        _require(cat in categories, image_id, f"objects[{oid}].category_id",
                 f"unknown category {cat}")
        objects.append(ObjectAnnotation(oid, bbox, cat, bool(o["active"])))

    hand_ids = [h.id for h in hands]
    _require(len(set(hand_ids)) == len(hand_ids), image_id, "hands",
             "duplicate hand ids")
    obj_ids = [o.id for o in objects]
    _require(len(set(obj_ids)) == len(obj_ids), image_id, "objects",
             "duplicate object ids")

    by_id = {o.id: o for o in objects}
    referenced = set()
    for h in hands:
        if h.active_object_id is None:
            continue
        if h.active_object_id not in by_id:
            raise ValidationError(
                f"dangling active_object_id {h.active_object_id} in image "
                f"{image_id!r}, hand {h.id}")
        _require(by_id[h.active_object_id].active, image_id,
                 f"objects[{h.active_object_id}].active",
                 "referenced active object not marked active")
        referenced.add(h.active_object_id)
    for o in objects:
        _require(o.active == (o.id in referenced), image_id,
                 f"objects[{o.id}].active",
                 "active flag must be true iff some hand references the object")
    return ImageRecord(image_id, width, height, str(raw["rgb_path"]),
                       raw.get("depth_path"), raw.get("mask_path"),
                       hands, objects)


def _parse_document(doc: dict, source: str) -> tuple[list[Category], list[ImageRecord]]:
    if not isinstance(doc, dict) or "categories" not in doc or "images" not in doc:
        raise ValidationError(
            f"{source}: document must contain 'categories' and 'images'")
    categories = [Category(int(c["id"]), str(c["name"])) for c in doc["categories"]]
    ids = [c.id for c in categories]
    if sorted(ids) != list(range(len(ids))):
        raise ValidationError(f"{source}: category ids must be dense from 0")
    table = {c.id: c.name for c in categories}
    records = [_parse_record(r, table) for r in doc["images"]]
    return categories, records


def parse_dataset(path: str | Path) -> Dataset:
    """Parse a split file or a directory of split files into a Dataset.

    Every schema invariant is validated; violations raise ValidationError
    naming the image and field. Out-of-bounds bboxes are clamped with an
    AnnotationWarning rather than rejected. Records keep file order.
    """
    path = Path(path)
    if not path.exists():
        raise IOFailure(f"annotation path does not exist: {path}")
    if path.is_dir():
        files = sorted(path.glob("*.json"))
        files.sort(key=lambda p: (SPLIT_ORDER.index(p.stem)
                                  if p.stem in SPLIT_ORDER else len(SPLIT_ORDER),
                                  p.stem))
        if not files:
            raise IOFailure(f"no .json split files under {path}")
    else:
        files = [path]

    categories: list[Category] | None = None
    records: list[ImageRecord] = []
    splits: list[str] = []
    for f in files:
        try:
            doc = json.loads(f.read_text())
        except OSError as exc:
            raise IOFailure(f"cannot read {f}: {exc}")
        except json.JSONDecodeError as exc:
            raise ValidationError(f"malformed JSON in {f}: {exc}")
        cats, recs = _parse_document(doc, str(f))
        if categories is None:
            categories = cats
        elif categories != cats:
            raise ValidationError(
                f"{f}: category table differs from other splits")
        records.extend(recs)
        splits.extend([f.stem] * len(recs))
    return Dataset(categories or [], records, splits)


# ---------------------------------------------------------------------------
# serialization


def _bbox_list(b: BBox) -> list[float]:
    return [float(b.x_min), float(b.y_min), float(b.x_max), float(b.y_max)]


def _record_to_json(r: ImageRecord) -> dict:
    return {
        "image_id": r.image_id,
        "width": r.width,
        "height": r.height,
        "rgb_path": r.rgb_path,
        "depth_path": r.depth_path,
        "mask_path": r.mask_path,
        "hands": [
            {
                "id": h.id,
                "bbox": _bbox_list(h.bbox),
                "side": h.side.value,
                "contact": h.contact.value,
                "glove": h.glove.value,
                "keypoints": [[float(k.x), float(k.y), bool(k.visible)]
                              for k in h.keypoints],
                "offset": ([float(h.offset.v_x), float(h.offset.v_y),
                            float(h.offset.m)] if h.offset is not None else None),
                "active_object_id": h.active_object_id,
            }
            for h in r.hands
        ],
        "objects": [
            {
                "id": o.id,
                "bbox": _bbox_list(o.bbox),
                "category_id": o.category_id,
                "active": o.active,
            }
            for o in r.objects
        ],
    }


def split_document(dataset: Dataset, split: str) -> str:
    """Canonical JSON text for one split (compact separators, trailing \\n)."""
    doc = {
        "categories": [{"id": c.id, "name": c.name} for c in dataset.categories],
        "images": [_record_to_json(r)
                   for r, s in zip(dataset.records, dataset.splits) if s == split],
    }
    return json.dumps(doc, separators=(",", ":"), ensure_ascii=False) + "\n"


def write_dataset(dataset: Dataset, out_path: str | Path,
                  splits: list[str] | None = None) -> list[Path]:
    """Write one JSON document per split. Returns the written paths.

    `out_path` is a directory unless the dataset holds a single split, in
    which case a .json file path is also accepted. `splits` forces the set
    of files to write (a name without records yields an empty document).
    """
    out_path = Path(out_path)
    names = splits if splits is not None else (dataset.split_names() or [""])
    if out_path.suffix == ".json" and len(names) > 1:
        raise ValidationError(
            "dataset has multiple splits; write_dataset needs a directory")
    try:
        if out_path.suffix == ".json":
            out_path.parent.mkdir(parents=True, exist_ok=True)
            out_path.write_text(split_document(dataset, names[0]))
            return [out_path]
        out_path.mkdir(parents=True, exist_ok=True)
        written = []
        for split in names:
            target = out_path / f"{split or 'data'}.json"
            target.write_text(split_document(dataset, split))
            written.append(target)
    except OSError as exc:
        raise IOFailure(f"cannot write {exc.filename or out_path}: {exc}")
    return written


# ---------------------------------------------------------------------------
# PNG asset IO (formats fixed by the dataset layout)


def write_rgb_png(path: str | Path, rgb_u8: np.ndarray) -> None:
    Image.fromarray(rgb_u8, mode="RGB").save(path, format="PNG")


def read_rgb_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def write_u16_png(path: str | Path, values_u16: np.ndarray) -> None:
    Image.fromarray(np.ascontiguousarray(values_u16)).save(path, format="PNG")


def read_u16_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im, dtype=np.uint16)


def encode_depth(inv_depth: np.ndarray) -> np.ndarray:
    """[0,1] normalized inverse depth -> uint16 plane for the depth PNG."""
    return np.round(np.clip(inv_depth, 0.0, 1.0) * 65535.0).astype(np.uint16)


def decode_depth(depth_u16: np.ndarray) -> np.ndarray:
    return depth_u16.astype(np.float64) / 65535.0


def encode_mask(instance_ids: np.ndarray) -> np.ndarray:
    """Instance-id plane (-1 = background) -> uint16 mask PNG values."""
    return (instance_ids.astype(np.int32) + 1).astype(np.uint16)


def decode_mask(mask_u16: np.ndarray) -> np.ndarray:
    return mask_u16.astype(np.int32) - 1


# ---------------------------------------------------------------------------
# statistics


def _stats_over(records: list[ImageRecord]) -> DatasetStats:
    n_hands = n_ehois = n_left = n_gloved = n_objects = 0
    for r in records:
        n_objects += len(r.objects)
        for h in r.hands:
            n_hands += 1
            if h.contact is ContactState.CONTACT:
                n_ehois += 1
            if h.side is HandSide.LEFT:
                n_left += 1
            if h.glove is GloveStatus.GLOVE:
                n_gloved += 1
    frac = 100.0 * n_gloved / n_hands if n_hands else 0.0
    return DatasetStats(len(records), n_hands, n_ehois, n_left,
                        n_hands - n_left, n_objects, frac)


def compute_stats(dataset: Dataset, per_split: bool = False):
    """Dataset counts and glove percentage.

    per_split=False returns one DatasetStats over all records; per_split=True
    returns {split: DatasetStats, ..., "total": DatasetStats}.
    """
    if not per_split:
        return _stats_over(dataset.records)
    out: dict[str, DatasetStats] = {}
    for split in dataset.split_names():
        out[split] = _stats_over(
            [r for r, s in zip(dataset.records, dataset.splits) if s == split])
    out["total"] = _stats_over(dataset.records)
    return out


def stats_table(stats_by_split: dict[str, DatasetStats]) -> str:
    """Fixed-width table with the benchmark-stats column layout."""
    header = ["Split", "#images", "#hands", "#EHOIs", "#left hands",
              "#right hands", "#objects", "%glove hands"]
    rows = [header]
    for split, st in stats_by_split.items():
        rows.append([split or "(none)", f"{st.n_images:,}", f"{st.n_hands:,}",
                     f"{st.n_ehois:,}", f"{st.n_left:,}", f"{st.n_right:,}",
                     f"{st.n_objects:,}", f"{st.glove_fraction:.2f}"])
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = []
    for row in rows:
        lines.append("  ".join(cell.rjust(w) if i else cell.ljust(w)
                               for i, (cell, w) in enumerate(zip(row, widths))))
    return "\n".join(lines)
