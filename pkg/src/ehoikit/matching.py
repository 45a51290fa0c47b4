"""Hand-to-active-object association via the projected interaction point.

Each contact hand projects a point from its box center along its offset
vector; the object whose box center lies closest to that point becomes
the active object. Ties break toward the lowest object index, and
no-contact hands never receive an object.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

from .annotations import ContactState, GloveStatus, project_interaction_point
from .net.infer import Detection


class MatchWarning(UserWarning):
    """A contact hand had no object detections to match against."""


@dataclass
class EHOIQuadruple:
    hand: Detection
    contact: ContactState
    active_object: Detection | None
    glove: GloveStatus
    interaction_point: tuple[float, float] | None
    object_index: int | None
    flagged: bool = False


def _select_nearest(point, objects) -> int:
    best = -1
    best_d = math.inf
    for i, obj in enumerate(objects):
        cx, cy = obj.bbox.center
        d = (cx - point[0]) ** 2 + (cy - point[1]) ** 2
        if d < best_d:
            best_d = d
            best = i
    return best


def match(hands: list[Detection], objects: list[Detection], width: int,
          height: int, max_distance: float | None = None) -> list[EHOIQuadruple]:
    """One quadruple per hand, in input hand order.

    `max_distance` optionally discards matches whose point-to-center
    distance exceeds it (off by default, matching the source semantics).
    """
    quads = []
    for hand in hands:
        if hand.contact != ContactState.CONTACT:
            quads.append(EHOIQuadruple(hand, hand.contact, None, hand.glove,
                                       None, None))
            continue
        point = project_interaction_point(hand.bbox, hand.offset,
                                          width, height)
        if not objects:
            warnings.warn("contact hand with zero object detections",
                          MatchWarning, stacklevel=2)
            quads.append(EHOIQuadruple(hand, hand.contact, None, hand.glove,
                                       point, None, flagged=True))
            continue
        idx = _select_nearest(point, objects)
        if max_distance is not None:
            cx, cy = objects[idx].bbox.center
            if math.hypot(cx - point[0], cy - point[1]) > max_distance:
                quads.append(EHOIQuadruple(hand, hand.contact, None,
                                           hand.glove, point, None,
                                           flagged=True))
                continue
        quads.append(EHOIQuadruple(hand, hand.contact, objects[idx],
                                   hand.glove, point, idx))
    return quads


def match_oracle(hands: list[Detection], objects: list[Detection],
                 width: int, height: int,
                 max_distance: float | None = None) -> list[EHOIQuadruple]:
    """Exhaustive reference: scans every (hand, object) distance pair."""
    quads = []
    for hand in hands:
        if hand.contact != ContactState.CONTACT:
            quads.append(EHOIQuadruple(hand, hand.contact, None, hand.glove,
                                       None, None))
            continue
        point = project_interaction_point(hand.bbox, hand.offset,
                                          width, height)
        candidates = []
        for i, obj in enumerate(objects):
            cx, cy = obj.bbox.center
            candidates.append((math.hypot(cx - point[0], cy - point[1]), i))
        chosen = None
        for dist, i in candidates:
            if chosen is None or dist < chosen[0]:
                chosen = (dist, i)
        if chosen is not None and max_distance is not None \
                and chosen[0] > max_distance:
            chosen = None
        if chosen is None:
            if not objects:
                warnings.warn("contact hand with zero object detections",
                              MatchWarning, stacklevel=2)
            quads.append(EHOIQuadruple(hand, hand.contact, None, hand.glove,
                                       point, None, flagged=True))
        else:
            quads.append(EHOIQuadruple(hand, hand.contact,
                                       objects[chosen[1]], hand.glove,
                                       point, chosen[1]))
    return quads


def quadruples_to_json(quads: list[EHOIQuadruple]) -> str:
    """Serialize quadruples; hand_id is the position in the input list."""
    rows = []
    for i, q in enumerate(quads):
        rows.append({
            "hand_id": i,
            "contact": q.contact.value,
            "object_id": q.object_index,
            "glove": q.glove.value,
            "interaction_point": list(q.interaction_point)
            if q.interaction_point is not None else None,
            **({"flagged": True} if q.flagged else {}),
        })
    return json.dumps(rows, separators=(",", ":")) + "\n"
