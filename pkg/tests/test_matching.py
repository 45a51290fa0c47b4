"""Interaction-point association between hands and objects."""

import json
import math
import warnings

import numpy as np
import pytest

from ehoikit.annotations import BBox, ContactState, GloveStatus, HandSide, OffsetVector
from ehoikit.matching import (
    EHOIQuadruple,
    MatchWarning,
    match,
    match_oracle,
    quadruples_to_json,
)
from ehoikit.net.infer import Detection


def hand_det(bbox, offset, contact=ContactState.CONTACT,
             glove=GloveStatus.NO_GLOVE, conf=0.9):
    return Detection(kind="hand", bbox=bbox, confidence=conf,
                     side=HandSide.RIGHT, contact=contact, glove=glove,
                     offset=offset)


def obj_det(bbox, category=0, conf=0.8):
    return Detection(kind="object", bbox=bbox, confidence=conf,
                     category_id=category)


def square(cx, cy, r=5.0):
    return BBox(cx - r, cy - r, cx + r, cy + r)


def test_nearest_object_center_wins():
    # hand center (10, 50), offset points right, m * diag = 40
    diag = math.hypot(100, 100)
    hand = hand_det(square(10, 50), OffsetVector(1.0, 0.0, 40.0 / diag))
    objects = [obj_det(square(80, 50)), obj_det(square(52, 50)),
               obj_det(square(50, 80))]
    quads = match([hand], objects, 100, 100)
    assert len(quads) == 1
    q = quads[0]
    assert q.object_index == 1
    assert q.active_object is objects[1]
    assert q.interaction_point == pytest.approx((50.0, 50.0))
    assert not q.flagged


def test_no_contact_hand_gets_no_object():
    hand = hand_det(square(10, 10), None, contact=ContactState.NO_CONTACT)
    quads = match([hand], [obj_det(square(10, 10))], 100, 100)
    q = quads[0]
    assert q.active_object is None
    assert q.object_index is None
    assert q.interaction_point is None
    assert q.contact is ContactState.NO_CONTACT


def test_tie_breaks_to_lowest_index():
    diag = math.hypot(100, 100)
    hand = hand_det(square(50, 50), OffsetVector(0.0, 1.0, 20.0 / diag))
    a = obj_det(square(40, 70))      # both exactly 10 px from (50, 70)
    b = obj_det(square(60, 70))
    assert match([hand], [a, b], 100, 100)[0].object_index == 0
    # swapping the list flips the winner: the rule is positional
    assert match([hand], [b, a], 100, 100)[0].object_index == 0


def test_contact_without_objects_warns_and_flags():
    hand = hand_det(square(30, 30), OffsetVector(1.0, 0.0, 0.1))
    with pytest.warns(MatchWarning):
        quads = match([hand], [], 100, 100)
    q = quads[0]
    assert q.flagged and q.active_object is None
    assert q.interaction_point is not None


def test_max_distance_cutoff():
    diag = math.hypot(100, 100)
    hand = hand_det(square(10, 10), OffsetVector(1.0, 0.0, 10.0 / diag))
    far = obj_det(square(90, 90))
    keep = match([hand], [far], 100, 100)
    assert keep[0].object_index == 0
    drop = match([hand], [far], 100, 100, max_distance=30.0)
    assert drop[0].object_index is None and drop[0].flagged


def test_quadruples_preserve_hand_order():
    diag = math.hypot(100, 100)
    hands = [
        hand_det(square(20, 20), OffsetVector(1.0, 0.0, 10.0 / diag),
                 glove=GloveStatus.GLOVE),
        hand_det(square(70, 70), None, contact=ContactState.NO_CONTACT),
    ]
    objects = [obj_det(square(35, 20))]
    quads = match(hands, objects, 100, 100)
    assert [q.hand for q in quads] == hands
    assert [q.glove for q in quads] == [GloveStatus.GLOVE,
                                        GloveStatus.NO_GLOVE]


def random_scene(rng, width=128, height=128):
    def rbox():
        x0 = rng.uniform(0, width - 12)
        y0 = rng.uniform(0, height - 12)
        return BBox(x0, y0, x0 + rng.uniform(4, 12), y0 + rng.uniform(4, 12))

    hands = []
    for _ in range(rng.integers(0, 4)):
        contact = rng.random() < 0.7
        ang = rng.uniform(0, 2 * np.pi)
        off = OffsetVector(math.cos(ang), math.sin(ang),
                           float(rng.uniform(0, 0.4))) if contact else None
        hands.append(hand_det(
            rbox(), off,
            contact=ContactState.CONTACT if contact
            else ContactState.NO_CONTACT,
            glove=GloveStatus.GLOVE if rng.random() < 0.5
            else GloveStatus.NO_GLOVE))
    objects = [obj_det(rbox(), category=int(rng.integers(0, 10)))
               for _ in range(rng.integers(0, 5))]
    return hands, objects


def test_match_agrees_with_oracle_on_random_scenes():
    rng = np.random.default_rng(77)
    checked = 0
    for _ in range(300):
        hands, objects = random_scene(rng)
        cutoff = float(rng.uniform(20, 120)) if rng.random() < 0.5 else None
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", MatchWarning)
            got = match(hands, objects, 128, 128, max_distance=cutoff)
            want = match_oracle(hands, objects, 128, 128,
                                max_distance=cutoff)
        assert len(got) == len(want) == len(hands)
        for g, w in zip(got, want):
            assert g.object_index == w.object_index
            assert g.flagged == w.flagged
            assert g.interaction_point == w.interaction_point
        checked += len(hands)
    assert checked > 300


def test_json_serialization():
    diag = math.hypot(100, 100)
    hands = [
        hand_det(square(20, 20), OffsetVector(0.0, 1.0, 15.0 / diag),
                 glove=GloveStatus.GLOVE),
        hand_det(square(70, 70), None, contact=ContactState.NO_CONTACT),
    ]
    objects = [obj_det(square(20, 35))]
    text = quadruples_to_json(match(hands, objects, 100, 100))
    assert text.endswith("\n")
    rows = json.loads(text)
    assert rows[0] == {"hand_id": 0, "contact": "contact", "object_id": 0,
                       "glove": "glove",
                       "interaction_point": [20.0, 35.0]}
    assert rows[1] == {"hand_id": 1, "contact": "no_contact",
                       "object_id": None, "glove": "no_glove",
                       "interaction_point": None}


def test_flagged_serialization():
    hand = hand_det(square(30, 30), OffsetVector(1.0, 0.0, 0.1))
    with pytest.warns(MatchWarning):
        rows = json.loads(quadruples_to_json(match([hand], [], 100, 100)))
    assert rows[0]["flagged"] is True
    assert rows[0]["object_id"] is None


def test_quadruple_is_plain_data():
    q = EHOIQuadruple(hand=None, contact=ContactState.NO_CONTACT,
                      active_object=None, glove=GloveStatus.NO_GLOVE,
                      interaction_point=None, object_index=None)
    assert not q.flagged
