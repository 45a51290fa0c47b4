"""Procedural generator of labeled synthetic hand-object scenes.

Scenes are desk-scale 2D compositions: textured primitive objects plus
articulated hand silhouettes (palm ellipse + five finger capsule chains
whose joints are the 21 keypoints). Gloves are a hue shift toward yellow
plus a cuff band. Contact is grounded geometrically: the thumb and index
fingertips of a contact hand land inside the active object's box.

Every scene is a pure function of (config.seed, scene_index), so datasets
regenerate bit-identically and generation may fan out across indices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .annotations import (
    BBox,
    Category,
    ContactState,
    Dataset,
    GloveStatus,
    HandAnnotation,
    HandSide,
    ImageRecord,
    Keypoint,
    ObjectAnnotation,
    derive_offset,
    encode_depth,
    encode_mask,
    write_dataset,
    write_rgb_png,
    write_u16_png,
)
from .errors import IOFailure, ValidationError

CATEGORY_NAMES = ("box", "mug", "plate", "ball", "bottle",
                  "book", "phone", "pan", "scissors", "spatula")

MAX_PLACEMENT_RETRIES = 32
MIN_VISIBLE_PIXELS = 8

_SKIN_RGB = (0.88, 0.69, 0.56)
_GLOVE_RGB = (0.83, 0.76, 0.10)

# texture codes understood by the raster kernels
_TEX_SOLID, _TEX_STRIPES, _TEX_DOTS, _TEX_CHECKER = 0, 1, 2, 3

_CATEGORY_COLORS = (
    (0.62, 0.44, 0.26), (0.30, 0.45, 0.70), (0.85, 0.85, 0.82),
    (0.75, 0.25, 0.20), (0.25, 0.60, 0.35), (0.55, 0.25, 0.55),
    (0.15, 0.15, 0.18), (0.35, 0.35, 0.38), (0.70, 0.55, 0.20),
    (0.20, 0.55, 0.60),
)


@dataclass(frozen=True)
class SceneConfig:
    """Knobs for one synthetic scene family."""

    width: int = 128
    height: int = 128
    n_objects_range: tuple[int, int] = (1, 3)
    n_hands_range: tuple[int, int] = (1, 2)
    glove_probability: float = 0.5
    contact_probability: float = 0.75
    n_categories: int = 10
    object_scale_range: tuple[float, float] = (0.16, 0.30)
    hand_scale_range: tuple[float, float] = (0.34, 0.46)
    glove_hue_margin: float = 0.05
    color_jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.width < 64 or self.height < 64:
            raise ValidationError("image size must be at least 64x64")
        for name in ("glove_probability", "contact_probability"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1], got {v}")
        if not 0.0 <= self.color_jitter <= 0.5:
            raise ValidationError("color_jitter must lie in [0, 0.5], got "
                                  f"{self.color_jitter}")
        lo, hi = self.n_objects_range
        if not (0 <= lo <= hi):
            raise ValidationError("n_objects_range must be a nonempty range")
        lo, hi = self.n_hands_range
        if not (0 <= lo <= hi <= 2):
            raise ValidationError("n_hands_range must lie within [0, 2]")
        if not 1 <= self.n_categories <= len(CATEGORY_NAMES):
            raise ValidationError(
                f"n_categories must lie in [1, {len(CATEGORY_NAMES)}]")

    def categories(self) -> list[Category]:
        return [Category(i, CATEGORY_NAMES[i]) for i in range(self.n_categories)]


@dataclass
class RenderedScene:
    """One generated scene: annotations plus encoded pixel buffers."""

    record: ImageRecord
    rgb: np.ndarray            # uint8 (H, W, 3)
    depth: np.ndarray          # uint16, normalized inverse depth
    instance_mask: np.ndarray  # uint16, instance id + 1, 0 = background
    depth_bands: dict[int, tuple[float, float]] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# primitive helpers. A primitive is a tuple whose first element names the
# raster kernel; the rest are its geometry plus (color, tex, tex_scale).


def _ellipse_extent(cx, cy, rx, ry, angle):
    hw = math.hypot(rx * math.cos(angle), ry * math.sin(angle))
    hh = math.hypot(rx * math.sin(angle), ry * math.cos(angle))
    return cx - hw, cy - hh, cx + hw, cy + hh


def _prim_extent(prim):
    kind = prim[0]
    if kind == "ellipse":
        _, cx, cy, rx, ry, angle = prim[:6]
        return _ellipse_extent(cx, cy, rx, ry, angle)
    if kind == "ring":
        _, cx, cy, r_out = prim[:4]
        return cx - r_out, cy - r_out, cx + r_out, cy + r_out
    if kind == "capsule":
        _, x0, y0, x1, y1, r = prim[:6]
        return (min(x0, x1) - r, min(y0, y1) - r,
                max(x0, x1) + r, max(y0, y1) + r)
    if kind == "polygon":
        _, xs, ys = prim[:3]
        return xs.min(), ys.min(), xs.max(), ys.max()
    raise ValueError(f"unknown primitive {kind!r}")


def _extent_union(prims):
    boxes = [_prim_extent(p) for p in prims]
    return (min(b[0] for b in boxes), min(b[1] for b in boxes),
            max(b[2] for b in boxes), max(b[3] for b in boxes))


def _paint_prims(rgb, mask, depth, prims, paint_id, depth_val):
    for prim in prims:
        kind = prim[0]
        if kind == "ellipse":
            _, cx, cy, rx, ry, angle, color, tex, ts = prim
            kernels.fill_ellipse(rgb, mask, depth, cx, cy, rx, ry, angle,
                                 color, paint_id, depth_val, tex, ts)
        elif kind == "ring":
            _, cx, cy, r_out, r_in, color, tex, ts = prim
            kernels.fill_ring(rgb, mask, depth, cx, cy, r_out, r_in,
                              color, paint_id, depth_val, tex, ts)
        elif kind == "capsule":
            _, x0, y0, x1, y1, r, color = prim
            kernels.fill_capsule(rgb, mask, depth, x0, y0, x1, y1, r,
                                 color, paint_id, depth_val)
        elif kind == "polygon":
            _, xs, ys, color, tex, ts = prim
            kernels.fill_convex_polygon(rgb, mask, depth, xs, ys,
                                        color, paint_id, depth_val, tex, ts)


def _jitter_color(rng, base, amount=0.06):
    col = np.asarray(base, dtype=np.float64) + rng.uniform(-amount, amount, 3)
    return np.clip(col, 0.02, 0.98).astype(np.float32)


def _rot(vx, vy, angle):
    c, s = math.cos(angle), math.sin(angle)
    return vx * c - vy * s, vx * s + vy * c


# ---------------------------------------------------------------------------
# object construction


def _build_object(rng, category: int, cx: float, cy: float, size: float):
    """Primitives for one object of `category` centered near (cx, cy).

    `size` is the target half-extent in pixels.
    """
    col = _jitter_color(rng, _CATEGORY_COLORS[category])
    angle = rng.uniform(-0.35, 0.35)
    ts = max(3, int(size / 3))
    prims = []
    if category == 0:      # box: rotated rectangle, checker
        hw, hh = size, size * rng.uniform(0.6, 0.9)
        corners = [(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)]
        pts = [_rot(x, y, angle) for x, y in corners]
        xs = np.array([cx + p[0] for p in pts])
        ys = np.array([cy + p[1] for p in pts])
        prims.append(("polygon", xs, ys, col, _TEX_CHECKER, ts))
    elif category == 1:    # mug: body + handle ring
        r = size * 0.75
        prims.append(("ellipse", cx, cy, r, r * 0.92, 0.0, col, _TEX_SOLID, ts))
        hr = r * 0.45
        prims.append(("ring", cx + r * 0.95, cy, hr, hr * 0.55, col,
                      _TEX_SOLID, ts))
    elif category == 2:    # plate: annulus
        prims.append(("ring", cx, cy, size, size * 0.45, col, _TEX_SOLID, ts))
    elif category == 3:    # ball: dotted disc
        prims.append(("ellipse", cx, cy, size * 0.85, size * 0.85, 0.0, col,
                      _TEX_DOTS, ts))
    elif category == 4:    # bottle: capsule body + cap
        dx, dy = _rot(0.0, -size, angle)
        prims.append(("capsule", cx - dx * 0.8, cy - dy * 0.8,
                      cx + dx * 0.8, cy + dy * 0.8, size * 0.38, col))
        cap = _jitter_color(rng, (0.9, 0.9, 0.9))
        prims.append(("ellipse", cx + dx, cy + dy, size * 0.22, size * 0.22,
                      0.0, cap, _TEX_SOLID, ts))
    elif category == 5:    # book: striped rectangle
        hw, hh = size, size * rng.uniform(0.65, 0.8)
        pts = [_rot(x, y, angle) for x, y in
               [(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)]]
        xs = np.array([cx + p[0] for p in pts])
        ys = np.array([cy + p[1] for p in pts])
        prims.append(("polygon", xs, ys, col, _TEX_STRIPES, ts))
    elif category == 6:    # phone: small dark slab
        hw, hh = size * 0.5, size * 0.95
        pts = [_rot(x, y, angle) for x, y in
               [(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)]]
        xs = np.array([cx + p[0] for p in pts])
        ys = np.array([cy + p[1] for p in pts])
        prims.append(("polygon", xs, ys, col, _TEX_SOLID, ts))
    elif category == 7:    # pan: disc + handle capsule
        r = size * 0.78
        prims.append(("ellipse", cx, cy, r, r, 0.0, col, _TEX_SOLID, ts))
        hx, hy = _rot(size * 1.7, 0.0, angle)
        prims.append(("capsule", cx + hx * 0.45, cy + hy * 0.45,
                      cx + hx, cy + hy, size * 0.14, col))
    elif category == 8:    # scissors: crossed capsules
        for a in (angle + 0.45, angle - 0.45):
            dx, dy = _rot(size, 0.0, a)
            prims.append(("capsule", cx - dx, cy - dy, cx + dx, cy + dy,
                          size * 0.14, col))
    else:                  # spatula: handle + blade
        dx, dy = _rot(0.0, -size, angle)
        prims.append(("capsule", cx, cy, cx + dx, cy + dy, size * 0.12, col))
        hw, hh = size * 0.45, size * 0.4
        pts = [_rot(x, y, angle) for x, y in
               [(-hw, -hh), (hw, -hh), (hw * 0.6, hh), (-hw * 0.6, hh)]]
        xs = np.array([cx - dx * 0.4 + p[0] for p in pts])
        ys = np.array([cy - dy * 0.4 + p[1] for p in pts])
        prims.append(("polygon", xs, ys, col, _TEX_SOLID, ts))
    return prims


# ---------------------------------------------------------------------------
# hand construction. Keypoint layout (21 total): 0 wrist, then four joints
# per finger in thumb/index/middle/ring/pinky order, fingertip last, so
# fingertips sit at indices 4, 8, 12, 16, 20.

_FINGER_SPREAD = (0.95, 0.30, 0.08, -0.16, -0.42)     # radians from heading
_FINGER_LENGTH = (0.46, 0.62, 0.68, 0.62, 0.46)       # fraction of hand size
_FINGER_BASE_OFFSET = (0.46, 0.30, 0.10, -0.11, -0.30)
_SEGMENT_SPLIT = (0.42, 0.33, 0.25)


def _build_hand(rng, side: HandSide, size: float, heading: float,
                gloved: bool, curl: float):
    """Hand primitives + keypoints in a frame with the palm center at 0.

    `heading` is the direction the fingers point; `curl` bends each finger
    segment further toward the palm. Returns (prims, keypoints_xy).
    """
    mirror = 1.0 if side == HandSide.RIGHT else -1.0
    dx, dy = math.cos(heading), math.sin(heading)
    px, py = -dy * mirror, dx * mirror
    col = _jitter_color(rng, _GLOVE_RGB if gloved else _SKIN_RGB, 0.04)

    palm_rx = 0.30 * size
    palm_ry = 0.26 * size
    kps = np.zeros((21, 2), dtype=np.float64)
    kps[0] = (-dx * 0.42 * size, -dy * 0.42 * size)     # wrist

    prims = [("ellipse", 0.0, 0.0, palm_rx, palm_ry, heading, col,
              _TEX_SOLID, 4)]
    prims.append(("capsule", kps[0, 0], kps[0, 1], 0.0, 0.0,
                  0.20 * size, col))
    if gloved:
        cuff = np.clip(col * 0.8, 0.0, 1.0).astype(np.float32)
        cw = 0.24 * size
        prims.append(("capsule", kps[0, 0] - px * cw, kps[0, 1] - py * cw,
                      kps[0, 0] + px * cw, kps[0, 1] + py * cw,
                      0.10 * size, cuff))

    for f in range(5):
        base_off = _FINGER_BASE_OFFSET[f] * size
        if f == 0:  # thumb roots at the palm side, slightly back
            bx = px * base_off - dx * 0.06 * size
            by = py * base_off - dy * 0.06 * size
        else:
            bx = dx * 0.24 * size + px * base_off * 0.78
            by = dy * 0.24 * size + py * base_off * 0.78
        ang = heading + mirror * _FINGER_SPREAD[f]
        length = _FINGER_LENGTH[f] * size
        radius = (0.085 if f else 0.10) * size
        jx, jy = bx, by
        kps[1 + 4 * f] = (jx, jy)
        for s in range(3):
            seg = length * _SEGMENT_SPLIT[s]
            ex, ey = math.cos(ang), math.sin(ang)
            nx, ny = jx + ex * seg, jy + ey * seg
            prims.append(("capsule", jx, jy, nx, ny,
                          radius * (1.0 - 0.16 * s), col))
            kps[2 + 4 * f + s] = (nx, ny)
            jx, jy = nx, ny
            ang -= mirror * curl
    return prims, kps


def _shift_prims(prims, tx, ty):
    out = []
    for prim in prims:
        kind = prim[0]
        if kind == "ellipse":
            _, cx, cy, rx, ry, angle, color, tex, ts = prim
            out.append(("ellipse", cx + tx, cy + ty, rx, ry, angle,
                        color, tex, ts))
        elif kind == "ring":
            _, cx, cy, r_out, r_in, color, tex, ts = prim
            out.append(("ring", cx + tx, cy + ty, r_out, r_in, color, tex, ts))
        elif kind == "capsule":
            _, x0, y0, x1, y1, r, color = prim
            out.append(("capsule", x0 + tx, y0 + ty, x1 + tx, y1 + ty,
                        r, color))
        else:
            _, xs, ys, color, tex, ts = prim
            out.append(("polygon", xs + tx, ys + ty, color, tex, ts))
    return out


def _inside_image(extent, width, height, margin=1.0):
    x0, y0, x1, y1 = extent
    return (x0 >= margin and y0 >= margin
            and x1 <= width - margin and y1 <= height - margin)


def _point_in_bbox(x, y, bbox: BBox) -> bool:
    return bbox.x_min <= x <= bbox.x_max and bbox.y_min <= y <= bbox.y_max


# ---------------------------------------------------------------------------
# scene assembly


def _background(rng, width, height):
    rgb = np.empty((height, width, 3), dtype=np.float32)
    base = _jitter_color(rng, (0.58, 0.47, 0.36), 0.05)
    ramp = np.linspace(0.85, 1.1, height, dtype=np.float32)[:, None, None]
    rgb[:] = base[None, None, :] * ramp
    rgb += rng.uniform(-0.02, 0.02, (height, width, 1)).astype(np.float32)
    np.clip(rgb, 0.0, 1.0, out=rgb)
    depth = np.empty((height, width), dtype=np.float32)
    depth[:] = np.linspace(0.05, 0.28, height, dtype=np.float32)[:, None]
    mask = np.zeros((height, width), dtype=np.int32)
    return rgb, mask, depth


def _try_place_objects(rng, cfg, n_objects):
    """Sample object geometry fully inside the frame. Returns list or None."""
    w, h = cfg.width, cfg.height
    min_dim = min(w, h)
    objs = []
    for _ in range(n_objects):
        category = int(rng.integers(0, cfg.n_categories))
        size = rng.uniform(*cfg.object_scale_range) * min_dim * 0.5
        placed = None
        for _ in range(MAX_PLACEMENT_RETRIES):
            cx = rng.uniform(size, w - size)
            cy = rng.uniform(size, h - size)
            prims = _build_object(rng, category, cx, cy, size)
            extent = _extent_union(prims)
            if _inside_image(extent, w, h):
                placed = (category, prims, extent)
                break
        if placed is None:
            return None
        objs.append(placed)
    return objs


def _try_place_hand(rng, cfg, side, gloved, target_bbox, object_boxes):
    """Place one hand; aim thumb/index tips at `target_bbox` when given.

    For a free (no-contact) hand the fingertips must stay clear of every
    box in `object_boxes`. Returns (prims, keypoints) or None.
    """
    w, h = cfg.width, cfg.height
    min_dim = min(w, h)
    for attempt in range(MAX_PLACEMENT_RETRIES):
        shrink = 1.0 - 0.04 * attempt
        size = rng.uniform(*cfg.hand_scale_range) * min_dim * shrink
        # egocentric pose prior: fingers point up-ish, so the thumb
        # stays on a side-consistent edge of the hand
        heading = -0.5 * math.pi + rng.uniform(-0.9, 0.9)
        curl = rng.uniform(0.28, 0.5) if target_bbox is not None \
            else rng.uniform(0.05, 0.3)
        prims, kps = _build_hand(rng, side, size, heading, gloved, curl)
        thumb, index = kps[4], kps[8]
        if target_bbox is not None:
            half = 0.5 * min(target_bbox.width, target_bbox.height)
            spread = math.hypot(*(thumb - index))
            if spread > 1.6 * half:
                continue
            mid = 0.5 * (thumb + index)
            tx = target_bbox.center[0] - mid[0]
            ty = target_bbox.center[1] - mid[1]
        else:
            tx = rng.uniform(0.0, w)
            ty = rng.uniform(0.0, h)
        prims_t = _shift_prims(prims, tx, ty)
        kps_t = kps + np.array([tx, ty])
        extent = _extent_union(prims_t)
        if not _inside_image(extent, w, h):
            continue
        if target_bbox is not None:
            if not (_point_in_bbox(*kps_t[4], target_bbox)
                    and _point_in_bbox(*kps_t[8], target_bbox)):
                continue
        else:
            clear = True
            for box in object_boxes:
                dil = box.dilated(0.10)
                if _point_in_bbox(*kps_t[4], dil) or \
                        _point_in_bbox(*kps_t[8], dil):
                    clear = False
                    break
            if not clear:
                continue
        return prims_t, kps_t
    return None


def generate_scene(config: SceneConfig, scene_index: int) -> RenderedScene:
    """Render scene `scene_index`, a pure function of (seed, index)."""
    rng = np.random.default_rng((config.seed, scene_index))
    w, h = config.width, config.height

    n_objects = int(rng.integers(config.n_objects_range[0],
                                 config.n_objects_range[1] + 1))
    n_hands = int(rng.integers(config.n_hands_range[0],
                               config.n_hands_range[1] + 1))
    if n_hands == 2:
        sides = [HandSide.LEFT, HandSide.RIGHT]
    elif n_hands == 1:
        sides = [HandSide.LEFT if rng.random() < 0.5 else HandSide.RIGHT]
    else:
        sides = []
    gloved = [bool(rng.random() < config.glove_probability) for _ in sides]
    wants_contact = [bool(rng.random() < config.contact_probability)
                     for _ in sides]

    while True:
        scene = _attempt_scene(rng, config, n_objects, sides, gloved,
                               wants_contact, scene_index)
        if scene is not None:
            return scene
        if n_objects == 0:
            raise ValidationError(
                f"scene {scene_index}: placement failed with zero objects")
        n_objects -= 1


def _attempt_scene(rng, cfg, n_objects, sides, gloved, wants_contact,
                   scene_index):
    w, h = cfg.width, cfg.height
    for _ in range(MAX_PLACEMENT_RETRIES):
        objs = _try_place_objects(rng, cfg, n_objects)
        if objs is None:
            continue
        object_boxes = [BBox(*ext) for _, _, ext in objs]

        hands = []
        ok = True
        for side, glove, want in zip(sides, gloved, wants_contact):
            contact = want and n_objects > 0
            target_idx = int(rng.integers(0, n_objects)) if contact else -1
            placed = _try_place_hand(
                rng, cfg, side, glove,
                object_boxes[target_idx] if contact else None, object_boxes)
            if placed is None:
                ok = False
                break
            hands.append((side, glove, target_idx, *placed))
        if not ok:
            continue

        # paint order: objects in a sampled occlusion order, hands on top
        order = list(rng.permutation(n_objects))
        rgb, mask, depth = _background(rng, w, h)
        n_inst = n_objects + len(hands)
        band_w = 0.65 / max(n_inst, 1)
        bands = {}

        # annotation ids: hands 0..n_hands-1, objects following
        hand_ids = list(range(len(hands)))
        obj_ids = [len(hands) + i for i in range(n_objects)]

        for slot, obj_idx in enumerate(order):
            lo = 0.30 + band_w * slot
            val = lo + 0.5 * band_w
            bands[obj_ids[obj_idx]] = (lo, lo + band_w)
            _paint_prims(rgb, mask, depth, objs[obj_idx][1],
                         obj_ids[obj_idx] + 1, val)
        for k, hand in enumerate(hands):
            slot = n_objects + k
            lo = 0.30 + band_w * slot
            val = lo + 0.5 * band_w
            bands[hand_ids[k]] = (lo, lo + band_w)
            _paint_prims(rgb, mask, depth, hand[3], hand_ids[k] + 1, val)

        counts = np.bincount(mask.ravel(), minlength=n_inst + 1)
        if any(counts[i + 1] < MIN_VISIBLE_PIXELS
               for i in hand_ids + obj_ids):
            continue

        # domain shift: per-scene channel gains + brightness bias
        if cfg.color_jitter > 0.0:
            j = cfg.color_jitter
            gains = 1.0 + rng.uniform(-j, j, size=3)
            bias = rng.uniform(-j, j) * 0.3
            rgb = np.clip(rgb * gains + bias, 0.0, 1.0)

        return _finalize_scene(cfg, scene_index, objs, hands, hand_ids,
                               obj_ids, rgb, mask, depth, bands)
    return None


def _finalize_scene(cfg, scene_index, objs, hands, hand_ids, obj_ids,
                    rgb, mask, depth, bands):
    w, h = cfg.width, cfg.height
    image_id = f"img_{scene_index:06d}"

    active = set()
    hand_anns = []
    for k, (side, glove, target_idx, prims, kps) in enumerate(hands):
        extent = _extent_union(prims)
        bbox = BBox(*extent)
        contact = target_idx >= 0
        offset = None
        active_id = None
        if contact:
            active_id = obj_ids[target_idx]
            obj_bbox = BBox(*objs[target_idx][2])
            offset = derive_offset(bbox, obj_bbox, w, h)
            active.add(active_id)
        hand_anns.append(HandAnnotation(
            id=hand_ids[k], bbox=bbox, side=side,
            contact=ContactState.CONTACT if contact else ContactState.NO_CONTACT,
            glove=GloveStatus.GLOVE if glove else GloveStatus.NO_GLOVE,
            keypoints=tuple(Keypoint(float(x), float(y), True) for x, y in kps),
            offset=offset, active_object_id=active_id))

    obj_anns = [
        ObjectAnnotation(id=obj_ids[i], bbox=BBox(*ext), category_id=cat,
                         active=obj_ids[i] in active)
        for i, (cat, _, ext) in enumerate(objs)
    ]

    record = ImageRecord(
        image_id=image_id, width=w, height=h,
        rgb_path=f"rgb/{image_id}.png",
        depth_path=f"depth/{image_id}.png",
        mask_path=f"mask/{image_id}.png",
        hands=hand_anns, objects=obj_anns)

    rgb_u8 = np.round(rgb * 255.0).astype(np.uint8)
    return RenderedScene(
        record=record, rgb=rgb_u8, depth=encode_depth(depth),
        instance_mask=encode_mask(mask - 1), depth_bands=bands)


def generate_dataset(config: SceneConfig, n_train: int, n_val: int,
                     n_test: int, out_dir: str | Path) -> Dataset:
    """Generate train/val/test splits and write all assets under out_dir."""
    out = Path(out_dir)
    try:
        for sub in ("rgb", "depth", "mask"):
            (out / sub).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IOFailure(f"cannot create {exc.filename or out}: {exc}")

    records = []
    splits = []
    index = 0
    for split, count in (("train", n_train), ("val", n_val), ("test", n_test)):
        for _ in range(count):
            scene = generate_scene(config, index)
            rec = scene.record
            try:
                write_rgb_png(out / rec.rgb_path, scene.rgb)
                write_u16_png(out / rec.depth_path, scene.depth)
                write_u16_png(out / rec.mask_path, scene.instance_mask)
            except OSError as exc:
                raise IOFailure(f"cannot write {exc.filename or out}: {exc}")
            records.append(rec)
            splits.append(split)
            index += 1

    dataset = Dataset(config.categories(), records, splits)
    write_dataset(dataset, out, splits=["train", "val", "test"])
    return dataset
