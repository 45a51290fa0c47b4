"""Six-metric detection evaluation: compound hand AP and pair mAP.

Predictions are ranked by descending confidence (ties broken by content,
so input order never matters) and greedily matched to ground truth at an
IoU threshold. A matched prediction consumes its ground-truth hand even
when an attribute check fails; the failed check makes it a false
positive, and a second match against a consumed hand is always a false
positive. Pair metrics group by claimed object category and average over
the categories present in the ground truth.

Every fast AP path has a brute-force twin (`*_oracle`) that re-matches
each rank prefix from scratch and integrates the enumerated PR points
directly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .annotations import (
    BBox,
    ContactState,
    Dataset,
    GloveStatus,
    HandSide,
    ImageRecord,
)
from .errors import ValidationError

ALL_ATTRS = ("side", "state", "glove")
_INTEGRATIONS = ("all_point", "eleven_point")


@dataclass(frozen=True)
class EvalConfig:
    iou_threshold: float = 0.5
    ap_integration: str = "all_point"

    def __post_init__(self) -> None:
        if not 0.0 < self.iou_threshold < 1.0:
            raise ValidationError("iou_threshold must lie in (0, 1), got "
                                  f"{self.iou_threshold}")
        if self.ap_integration not in _INTEGRATIONS:
            raise ValidationError("ap_integration must be one of "
                                  f"{_INTEGRATIONS}, got {self.ap_integration!r}")


@dataclass(frozen=True)
class HandPred:
    bbox: BBox
    confidence: float
    side: HandSide
    state: ContactState
    glove: GloveStatus


@dataclass(frozen=True)
class PairPred:
    """A predicted <hand, active object> pair; confidence is the hand's."""

    hand: HandPred
    object_bbox: BBox
    category_id: int


@dataclass
class ImagePredictions:
    image_id: str
    hands: list[HandPred] = field(default_factory=list)
    pairs: list[PairPred] = field(default_factory=list)


@dataclass(frozen=True)
class CategoryAP:
    category_id: int
    name: str
    n_gt_pairs: int
    ap_hand_obj: float
    ap_hand_all: float


@dataclass
class MetricsReport:
    ap_hand: float
    ap_hand_side: float
    ap_hand_glove: float
    ap_hand_state: float
    map_hand_obj: float
    map_hand_all: float
    per_category: list[CategoryAP]
    n_gt_hands: int
    n_predictions: int
    n_gt_pairs: int
    n_predicted_pairs: int

    def as_dict(self) -> dict:
        return {
            "ap_hand": self.ap_hand,
            "ap_hand_side": self.ap_hand_side,
            "ap_hand_glove": self.ap_hand_glove,
            "ap_hand_state": self.ap_hand_state,
            "map_hand_obj": self.map_hand_obj,
            "map_hand_all": self.map_hand_all,
            "per_category": [
                {"category_id": c.category_id, "name": c.name,
                 "n_gt_pairs": c.n_gt_pairs, "ap_hand_obj": c.ap_hand_obj,
                 "ap_hand_all": c.ap_hand_all}
                for c in self.per_category
            ],
            "counts": {
                "gt_hands": self.n_gt_hands,
                "predictions": self.n_predictions,
                "gt_pairs": self.n_gt_pairs,
                "predicted_pairs": self.n_predicted_pairs,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2) + "\n"

    def table(self) -> str:
        headers = ("AP Hand", "AP Hand+Side", "AP Hand+Glove",
                   "AP Hand+State", "mAP Hand+Obj", "mAP Hand+All")
        values = (self.ap_hand, self.ap_hand_side, self.ap_hand_glove,
                  self.ap_hand_state, self.map_hand_obj, self.map_hand_all)
        head = "  ".join(f"{h:>13s}" for h in headers)
        row = "  ".join(f"{v:>13.2f}" for v in values)
        lines = [head, row]
        if self.per_category:
            width = max(len(c.name) for c in self.per_category)
            width = max(width, len("category"))
            lines.append("")
            lines.append(f"{'category':<{width}s}  {'gt pairs':>8s}  "
                         f"{'AP H+Obj':>8s}  {'AP H+All':>8s}")
            for c in self.per_category:
                lines.append(f"{c.name:<{width}s}  {c.n_gt_pairs:>8d}  "
                             f"{c.ap_hand_obj:>8.2f}  {c.ap_hand_all:>8.2f}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# IoU and AP primitives
# ---------------------------------------------------------------------------

def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; 0 when disjoint."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def _ap_from_flags(flags: list[bool], n_gt: int, integration: str) -> float:
    """AP percentage from ranked TP flags and the ground-truth count."""
    if n_gt == 0:
        return 100.0 if not flags else 0.0
    if not flags:
        return 0.0
    n = len(flags)
    precision = []
    recall = []
    tp = 0
    for i, flag in enumerate(flags):
        if flag:
            tp += 1
        precision.append(tp / (i + 1))
        recall.append(tp / n_gt)
    envelope = precision[:]
    for i in range(n - 2, -1, -1):
        if envelope[i + 1] > envelope[i]:
            envelope[i] = envelope[i + 1]
    if integration == "all_point":
        area = 0.0
        prev_recall = 0.0
        for i in range(n):
            if recall[i] > prev_recall:
                area += (recall[i] - prev_recall) * envelope[i]
                prev_recall = recall[i]
        return 100.0 * area
    total = 0.0
    for k in range(11):
        r = k / 10.0
        best = 0.0
        for i in range(n):
            if recall[i] >= r and envelope[i] > best:
                best = envelope[i]
        total += best
    return 100.0 * total / 11.0


# ---------------------------------------------------------------------------
# ground-truth views
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _GtHand:
    bbox: BBox
    side: HandSide
    state: ContactState
    glove: GloveStatus


@dataclass(frozen=True)
class _GtPair:
    hand_bbox: BBox
    side: HandSide
    state: ContactState
    glove: GloveStatus
    object_bbox: BBox
    category_id: int


def _records(ground_truth: Dataset | list[ImageRecord]) -> list[ImageRecord]:
    if isinstance(ground_truth, Dataset):
        return ground_truth.records
    return ground_truth


def _gt_hands(records: list[ImageRecord]) -> dict[str, list[_GtHand]]:
    out: dict[str, list[_GtHand]] = {}
    for rec in records:
        out[rec.image_id] = [
            _GtHand(h.bbox, h.side, h.contact, h.glove) for h in rec.hands
        ]
    return out


def _gt_pairs(records: list[ImageRecord]) -> dict[str, list[_GtPair]]:
    out: dict[str, list[_GtPair]] = {}
    for rec in records:
        objects = {o.id: o for o in rec.objects}
        pairs = []
        for h in rec.hands:
            if h.contact != ContactState.CONTACT or h.active_object_id is None:
                continue
            obj = objects[h.active_object_id]
            pairs.append(_GtPair(h.bbox, h.side, h.contact, h.glove,
                                 obj.bbox, obj.category_id))
        out[rec.image_id] = pairs
    return out


# ---------------------------------------------------------------------------
# ranking and matching
# ---------------------------------------------------------------------------

def _hand_rank_key(image_id: str, p: HandPred):
    return (-p.confidence, image_id, p.bbox.x_min, p.bbox.y_min,
            p.bbox.x_max, p.bbox.y_max, p.side.value, p.state.value,
            p.glove.value)


def _pair_rank_key(image_id: str, p: PairPred):
    h = p.hand
    return (-h.confidence, image_id, h.bbox.x_min, h.bbox.y_min,
            h.bbox.x_max, h.bbox.y_max, p.object_bbox.x_min,
            p.object_bbox.y_min, p.object_bbox.x_max, p.object_bbox.y_max,
            p.category_id, h.side.value, h.state.value, h.glove.value)


def _ranked_hands(predictions: list[ImagePredictions]):
    flat = [(img.image_id, p) for img in predictions for p in img.hands]
    flat.sort(key=lambda item: _hand_rank_key(*item))
    return flat


def _ranked_pairs(predictions: list[ImagePredictions], category_id: int):
    flat = [(img.image_id, p) for img in predictions for p in img.pairs
            if p.category_id == category_id]
    flat.sort(key=lambda item: _pair_rank_key(*item))
    return flat


def _hand_attrs_ok(p: HandPred, g, required_attrs) -> bool:
    if "side" in required_attrs and p.side != g.side:
        return False
    if "state" in required_attrs and p.state != g.state:
        return False
    if "glove" in required_attrs and p.glove != g.glove:
        return False
    return True


def _match_flags(ranked, gt_by_image, pred_box, gt_box, is_tp,
                 threshold: float) -> list[bool]:
    """Greedy one-to-one matching over the ranked prediction list."""
    used: dict[str, set[int]] = {}
    flags = []
    for image_id, pred in ranked:
        gts = gt_by_image.get(image_id, [])
        taken = used.setdefault(image_id, set())
        best_i = -1
        best_iou = -1.0
        box = pred_box(pred)
        for i, gt in enumerate(gts):
            if i in taken:
                continue
            v = iou(box, gt_box(gt))
            if v >= threshold and v > best_iou:
                best_i = i
                best_iou = v
        if best_i < 0:
            flags.append(False)
            continue
        taken.add(best_i)
        flags.append(is_tp(pred, gts[best_i]))
    return flags


# ---------------------------------------------------------------------------
# compound hand AP
# ---------------------------------------------------------------------------

def compound_ap(predictions: list[ImagePredictions],
                ground_truth: Dataset | list[ImageRecord],
                required_attrs=(), config: EvalConfig | None = None) -> float:
    config = config or EvalConfig()
    gt = _gt_hands(_records(ground_truth))
    ranked = _ranked_hands(predictions)
    flags = _match_flags(
        ranked, gt, lambda p: p.bbox, lambda g: g.bbox,
        lambda p, g: _hand_attrs_ok(p, g, required_attrs),
        config.iou_threshold)
    n_gt = sum(len(v) for v in gt.values())
    return _ap_from_flags(flags, n_gt, config.ap_integration)


def compound_ap_oracle(predictions: list[ImagePredictions],
                       ground_truth: Dataset | list[ImageRecord],
                       required_attrs=(),
                       config: EvalConfig | None = None) -> float:
    """Reference AP: re-matches every rank prefix from scratch."""
    config = config or EvalConfig()
    gt = _gt_hands(_records(ground_truth))
    ranked = _ranked_hands(predictions)
    n_gt = sum(len(v) for v in gt.values())

    def prefix_tp(k: int) -> int:
        used: dict[str, set[int]] = {}
        tp = 0
        for image_id, pred in ranked[:k]:
            gts = gt.get(image_id, [])
            taken = used.setdefault(image_id, set())
            best_i = -1
            best_iou = -1.0
            for i, g in enumerate(gts):
                if i in taken:
                    continue
                v = iou(pred.bbox, g.bbox)
                if v >= config.iou_threshold and v > best_iou:
                    best_i = i
                    best_iou = v
            if best_i < 0:
                continue
            taken.add(best_i)
            if _hand_attrs_ok(pred, gts[best_i], required_attrs):
                tp += 1
        return tp

    return _oracle_ap_from_prefixes(
        [prefix_tp(k) for k in range(1, len(ranked) + 1)], n_gt,
        config.ap_integration)


def pr_points(predictions: list[ImagePredictions],
              ground_truth: Dataset | list[ImageRecord],
              required_attrs=(), config: EvalConfig | None = None):
    """Cumulative (recall, precision) lists in rank order, for plotting."""
    config = config or EvalConfig()
    gt = _gt_hands(_records(ground_truth))
    ranked = _ranked_hands(predictions)
    flags = _match_flags(
        ranked, gt, lambda p: p.bbox, lambda g: g.bbox,
        lambda p, g: _hand_attrs_ok(p, g, required_attrs),
        config.iou_threshold)
    n_gt = sum(len(v) for v in gt.values())
    recall, precision = [], []
    tp = 0
    for k, flag in enumerate(flags, start=1):
        if flag:
            tp += 1
        recall.append(tp / n_gt if n_gt else 0.0)
        precision.append(tp / k)
    return recall, precision


def _oracle_ap_from_prefixes(tp_at: list[int], n_gt: int,
                             integration: str) -> float:
    """AP from explicit per-prefix TP counts (independent integration)."""
    if n_gt == 0:
        return 100.0 if not tp_at else 0.0
    if not tp_at:
        return 0.0
    points = [(tp / n_gt, tp / k) for k, tp in enumerate(tp_at, start=1)]
    if integration == "all_point":
        area = 0.0
        prev_tp = 0
        for k, tp in enumerate(tp_at, start=1):
            if tp > prev_tp:
                best = max(p for r, p in points[k - 1:])
                area += (tp - prev_tp) / n_gt * best
                prev_tp = tp
        return 100.0 * area
    total = 0.0
    for step in range(11):
        r0 = step / 10.0
        best = 0.0
        for r, p in points:
            if r >= r0 and p > best:
                best = p
        total += best
    return 100.0 * total / 11.0


# ---------------------------------------------------------------------------
# pair mAP
# ---------------------------------------------------------------------------

def _pair_is_tp(required_attrs, threshold: float):
    def check(p: PairPred, g: _GtPair) -> bool:
        if iou(p.object_bbox, g.object_bbox) < threshold:
            return False
        return _hand_attrs_ok(p.hand, g, required_attrs)
    return check


def _pair_category_ap(predictions, gt_pairs, category_id: int,
                      required_attrs, config: EvalConfig) -> float:
    gt_cat = {img: [g for g in pairs if g.category_id == category_id]
              for img, pairs in gt_pairs.items()}
    ranked = _ranked_pairs(predictions, category_id)
    flags = _match_flags(
        ranked, gt_cat, lambda p: p.hand.bbox, lambda g: g.hand_bbox,
        _pair_is_tp(required_attrs, config.iou_threshold),
        config.iou_threshold)
    n_gt = sum(len(v) for v in gt_cat.values())
    return _ap_from_flags(flags, n_gt, config.ap_integration)


def _pair_map(predictions: list[ImagePredictions],
              ground_truth: Dataset | list[ImageRecord], required_attrs,
              config: EvalConfig, oracle: bool = False) -> float:
    gt_pairs = _gt_pairs(_records(ground_truth))
    categories = sorted({g.category_id for pairs in gt_pairs.values()
                         for g in pairs})
    if not categories:
        n_pred = sum(len(img.pairs) for img in predictions)
        return 100.0 if n_pred == 0 else 0.0
    ap_fn = _pair_category_ap_oracle if oracle else _pair_category_ap
    aps = [ap_fn(predictions, gt_pairs, c, required_attrs, config)
           for c in categories]
    return sum(aps) / len(aps)


def _pair_category_ap_oracle(predictions, gt_pairs, category_id: int,
                             required_attrs, config: EvalConfig) -> float:
    gt_cat = {img: [g for g in pairs if g.category_id == category_id]
              for img, pairs in gt_pairs.items()}
    ranked = _ranked_pairs(predictions, category_id)
    n_gt = sum(len(v) for v in gt_cat.values())
    is_tp = _pair_is_tp(required_attrs, config.iou_threshold)

    def prefix_tp(k: int) -> int:
        used: dict[str, set[int]] = {}
        tp = 0
        for image_id, pred in ranked[:k]:
            gts = gt_cat.get(image_id, [])
            taken = used.setdefault(image_id, set())
            best_i = -1
            best_iou = -1.0
            for i, g in enumerate(gts):
                if i in taken:
                    continue
                v = iou(pred.hand.bbox, g.hand_bbox)
                if v >= config.iou_threshold and v > best_iou:
                    best_i = i
                    best_iou = v
            if best_i < 0:
                continue
            taken.add(best_i)
            if is_tp(pred, gts[best_i]):
                tp += 1
        return tp

    return _oracle_ap_from_prefixes(
        [prefix_tp(k) for k in range(1, len(ranked) + 1)], n_gt,
        config.ap_integration)


def map_hand_obj(predictions: list[ImagePredictions],
                 ground_truth: Dataset | list[ImageRecord],
                 config: EvalConfig | None = None) -> float:
    return _pair_map(predictions, ground_truth, (), config or EvalConfig())


def map_hand_obj_oracle(predictions: list[ImagePredictions],
                        ground_truth: Dataset | list[ImageRecord],
                        config: EvalConfig | None = None) -> float:
    return _pair_map(predictions, ground_truth, (), config or EvalConfig(),
                     oracle=True)


def map_hand_all(predictions: list[ImagePredictions],
                 ground_truth: Dataset | list[ImageRecord],
                 config: EvalConfig | None = None) -> float:
    return _pair_map(predictions, ground_truth, ALL_ATTRS,
                     config or EvalConfig())


def map_hand_all_oracle(predictions: list[ImagePredictions],
                        ground_truth: Dataset | list[ImageRecord],
                        config: EvalConfig | None = None) -> float:
    return _pair_map(predictions, ground_truth, ALL_ATTRS,
                     config or EvalConfig(), oracle=True)


# ---------------------------------------------------------------------------
# full report
# ---------------------------------------------------------------------------

def evaluate(run_output: list[ImagePredictions],
             ground_truth: Dataset | list[ImageRecord],
             config: EvalConfig | None = None) -> MetricsReport:
    config = config or EvalConfig()
    records = _records(ground_truth)
    gt_ids = {r.image_id for r in records}
    pred_ids = {img.image_id for img in run_output}
    if gt_ids != pred_ids:
        missing = sorted(gt_ids - pred_ids)[:3]
        extra = sorted(pred_ids - gt_ids)[:3]
        raise ValidationError("run output does not cover the ground-truth "
                              f"split (missing={missing}, extra={extra})")

    names = {}
    if isinstance(ground_truth, Dataset):
        names = {c.id: c.name for c in ground_truth.categories}
    gt_pairs = _gt_pairs(records)
    categories = sorted({g.category_id for pairs in gt_pairs.values()
                         for g in pairs})
    per_category = []
    for c in categories:
        n_gt_c = sum(1 for pairs in gt_pairs.values()
                     for g in pairs if g.category_id == c)
        per_category.append(CategoryAP(
            category_id=c,
            name=names.get(c, f"category_{c}"),
            n_gt_pairs=n_gt_c,
            ap_hand_obj=_pair_category_ap(run_output, gt_pairs, c, (),
                                          config),
            ap_hand_all=_pair_category_ap(run_output, gt_pairs, c,
                                          ALL_ATTRS, config),
        ))

    return MetricsReport(
        ap_hand=compound_ap(run_output, records, (), config),
        ap_hand_side=compound_ap(run_output, records, ("side",), config),
        ap_hand_glove=compound_ap(run_output, records, ("glove",), config),
        ap_hand_state=compound_ap(run_output, records, ("state",), config),
        map_hand_obj=map_hand_obj(run_output, records, config),
        map_hand_all=map_hand_all(run_output, records, config),
        per_category=per_category,
        n_gt_hands=sum(len(r.hands) for r in records),
        n_predictions=sum(len(img.hands) for img in run_output),
        n_gt_pairs=sum(len(v) for v in gt_pairs.values()),
        n_predicted_pairs=sum(len(img.pairs) for img in run_output),
    )


# ---------------------------------------------------------------------------
# run-output serialization
# ---------------------------------------------------------------------------

def _bbox_list(b: BBox) -> list[float]:
    return [b.x_min, b.y_min, b.x_max, b.y_max]


def run_output_to_json(images: list[ImagePredictions]) -> str:
    rows = []
    for img in images:
        hands = [{"bbox": _bbox_list(p.bbox), "confidence": p.confidence,
                  "side": p.side.value, "state": p.state.value,
                  "glove": p.glove.value} for p in img.hands]
        hand_index = {id(p): i for i, p in enumerate(img.hands)}
        pairs = []
        for p in img.pairs:
            pairs.append({"hand": hand_index.get(id(p.hand), -1),
                          "confidence": p.hand.confidence,
                          "bbox": _bbox_list(p.object_bbox),
                          "category_id": p.category_id,
                          "side": p.hand.side.value,
                          "state": p.hand.state.value,
                          "glove": p.hand.glove.value,
                          "hand_bbox": _bbox_list(p.hand.bbox)})
        rows.append({"image_id": img.image_id, "hands": hands,
                     "pairs": pairs})
    return json.dumps({"images": rows}, indent=2) + "\n"


def parse_run_output(text: str) -> list[ImagePredictions]:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"run output is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict) or "images" not in payload:
        raise ValidationError("run output must be an object with an "
                              "'images' list")
    out = []
    for i, row in enumerate(payload["images"]):
        where = f"images[{i}]"
        if "image_id" not in row:
            raise ValidationError(f"{where}: missing image_id")
        hands = []
        for j, h in enumerate(row.get("hands", [])):
            hands.append(_parse_hand(h, f"{where}.hands[{j}]"))
        pairs = []
        for j, p in enumerate(row.get("pairs", [])):
            where_p = f"{where}.pairs[{j}]"
            hand_ref = p.get("hand", -1)
            if isinstance(hand_ref, int) and 0 <= hand_ref < len(hands):
                hand = hands[hand_ref]
            else:
                hand = _parse_hand({"bbox": p.get("hand_bbox"),
                                    "confidence": p.get("confidence"),
                                    "side": p.get("side"),
                                    "state": p.get("state", "contact"),
                                    "glove": p.get("glove")}, where_p)
            if "bbox" not in p or "category_id" not in p:
                raise ValidationError(f"{where_p}: needs bbox and "
                                      "category_id")
            pairs.append(PairPred(hand, _parse_bbox(p["bbox"], where_p),
                                  int(p["category_id"])))
        out.append(ImagePredictions(str(row["image_id"]), hands, pairs))
    return out


def _parse_bbox(raw, where: str) -> BBox:
    if (not isinstance(raw, (list, tuple))) or len(raw) != 4:
        raise ValidationError(f"{where}: bbox must be [x0, y0, x1, y1]")
    return BBox(*(float(v) for v in raw))


def _parse_hand(raw: dict, where: str) -> HandPred:
    for key in ("bbox", "confidence", "side", "state", "glove"):
        if raw.get(key) is None:
            raise ValidationError(f"{where}: missing {key}")
    try:
        return HandPred(_parse_bbox(raw["bbox"], where),
                        float(raw["confidence"]), HandSide(raw["side"]),
                        ContactState(raw["state"]),
                        GloveStatus(raw["glove"]))
    except ValueError as exc:
        raise ValidationError(f"{where}: {exc}") from exc
