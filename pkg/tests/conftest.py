"""Shared builders: hand-made records, finite-difference gradient checks."""

import numpy as np
import pytest

from ehoikit.annotations import (
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
)


def make_keypoints(bbox: BBox, n: int = 21) -> tuple:
    """n visible keypoints on a diagonal through the box."""
    ts = np.linspace(0.1, 0.9, n)
    return tuple(
        Keypoint(bbox.x_min + t * bbox.width, bbox.y_min + t * bbox.height,
                 True)
        for t in ts)


def make_hand(hid: int, bbox: BBox, side=HandSide.RIGHT,
              contact=ContactState.NO_CONTACT, glove=GloveStatus.NO_GLOVE,
              active_object: ObjectAnnotation | None = None,
              width: int = 128, height: int = 128) -> HandAnnotation:
    offset = None
    active_id = None
    if contact == ContactState.CONTACT and active_object is not None:
        offset = derive_offset(bbox, active_object.bbox, width, height)
        active_id = active_object.id
    return HandAnnotation(
        id=hid, bbox=bbox, side=side, contact=contact, glove=glove,
        keypoints=make_keypoints(bbox), offset=offset,
        active_object_id=active_id)


def make_record(image_id: str = "img_000000", width: int = 128,
                height: int = 128, hands=(), objects=()) -> ImageRecord:
    return ImageRecord(image_id=image_id, width=width, height=height,
                       rgb_path=f"rgb/{image_id}.png", depth_path=None,
                       mask_path=None, hands=list(hands),
                       objects=list(objects))


@pytest.fixture
def two_hand_record() -> ImageRecord:
    obj = ObjectAnnotation(2, BBox(70.0, 20.0, 100.0, 50.0), 3, True)
    other = ObjectAnnotation(3, BBox(10.0, 90.0, 40.0, 120.0), 1, False)
    contact_hand = make_hand(
        0, BBox(30.0, 30.0, 60.0, 70.0), HandSide.RIGHT,
        ContactState.CONTACT, GloveStatus.GLOVE, active_object=obj)
    free_hand = make_hand(1, BBox(80.0, 80.0, 110.0, 115.0), HandSide.LEFT)
    return make_record(hands=[contact_hand, free_hand], objects=[obj, other])


def make_dataset(records, splits=None, n_categories: int = 10) -> Dataset:
    cats = [Category(i, f"cat{i}") for i in range(n_categories)]
    return Dataset(cats, list(records), splits or ["train"] * len(records))


# ---------------------------------------------------------------------------
# finite-difference gradient checking


def fd_gradcheck(make_loss, params, step: float = 1e-3, tol: float = 1e-4,
                 max_entries: int = 60, rng=None):
    """Central finite differences against backprop gradients.

    `make_loss` rebuilds the scalar loss tensor from current parameter
    data; `params` are leaf tensors with requires_grad set. Checks every
    entry up to `max_entries` per tensor (seeded subsample beyond that).
    """
    for p in params:
        p.grad = None
    make_loss().backward()
    rng = rng or np.random.default_rng(0)
    for p in params:
        assert p.grad is not None, "parameter missed by backward"
        an = p.grad.copy()
        flat_idx = np.arange(p.data.size)
        if p.data.size > max_entries:
            flat_idx = rng.choice(p.data.size, size=max_entries, replace=False)
        for fi in flat_idx:
            idx = np.unravel_index(fi, p.data.shape)
            orig = p.data[idx]
            p.data[idx] = orig + step
            f_plus = make_loss().item()
            p.data[idx] = orig - step
            f_minus = make_loss().item()
            p.data[idx] = orig
            fd = (f_plus - f_minus) / (2.0 * step)
            denom = max(abs(fd), abs(an[idx]), 1e-6)
            rel = abs(fd - an[idx]) / denom
            assert rel <= tol, (
                f"gradient mismatch at {idx}: fd={fd:.8g} an={an[idx]:.8g} "
                f"rel={rel:.3g}")
