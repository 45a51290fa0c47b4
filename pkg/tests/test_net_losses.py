"""Seven-component objective: targets, exact totals, gradients."""

import numpy as np
import pytest

from ehoikit.errors import ValidationError
from ehoikit.net.autograd import Tensor, softmax_rows
from ehoikit.net.losses import (
    BatchPredictions,
    BatchTargets,
    compute_loss,
    keypoint_target_heatmaps,
)

from conftest import fd_gradcheck

COMPONENTS = ("l_backbone", "l_depth", "l_side", "l_contact",
              "l_offset", "l_kpt", "l_glove")


def make_targets(seed: int, r: int = 3, o: int = 2, k: int = 8,
                 h: int = 8, w: int = 8) -> BatchTargets:
    rng = np.random.default_rng(seed)
    state = rng.integers(0, 2, size=r)
    if r and not state.any():
        state[0] = 1                      # keep the offset term alive
    ang = rng.uniform(0.0, 2.0 * np.pi, size=r)
    offset = np.stack([np.cos(ang), np.sin(ang),
                       rng.uniform(0.05, 0.4, size=r)], axis=1)
    offset[state == 0] = 0.0
    kps = rng.uniform(0.5, k - 0.5, size=(r, 21, 2))
    return BatchTargets(
        depth=rng.uniform(0.2, 0.9, size=(1, 1, h, w)),
        side=rng.integers(0, 2, size=r),
        state=state,
        glove=rng.integers(0, 2, size=r),
        offset=offset,
        kpt_heatmaps=keypoint_target_heatmaps(kps, k),
        object_category=rng.integers(0, 5, size=o),
    )


def make_leaves(seed: int, targets: BatchTargets, k: int = 8):
    rng = np.random.default_rng(seed)
    r = targets.side.shape[0]
    o = targets.object_category.shape[0]

    def t(*shape, scale=1.0, shift=0.0):
        return Tensor(rng.normal(shift, scale, size=shape),
                      requires_grad=True)

    leaves = {
        # keep |pred - target| clear of the L1 kink
        "depth": t(*targets.depth.shape, shift=3.0, scale=0.1),
        "side": t(r, 2), "state": t(r, 2), "state_mm": t(r, 2),
        "glove": t(r, 2), "offset": t(r, 3), "kpt": t(r * 21, k * k),
        "objcat": t(o, 5),
    }
    # keep smooth-L1 rows away from the |d| = beta seam
    d = leaves["offset"].data - targets.offset
    leaves["offset"].data[np.abs(np.abs(d) - 1.0) < 0.05] += 0.2
    return leaves


def make_preds(leaves, r: int, k: int = 8) -> BatchPredictions:
    return BatchPredictions(
        depth=leaves["depth"],
        side_logits=leaves["side"],
        state_logits=leaves["state"],
        state_logits_mm=leaves["state_mm"],
        glove_logits=leaves["glove"],
        offset=leaves["offset"],
        kpt_heatmaps=softmax_rows(leaves["kpt"]).reshape(r, 21, k, k),
        objcat_logits=leaves["objcat"],
    )


# ---------------------------------------------------------------------------
# keypoint targets


def test_keypoint_heatmaps_normalized_and_peaked():
    kps = np.array([[[2.5, 4.5], [0.5, 0.5], [7.4, 1.2]]])
    hm = keypoint_target_heatmaps(kps, k=8)
    assert hm.shape == (1, 3, 8, 8)
    np.testing.assert_allclose(hm.sum(axis=(2, 3)), 1.0, atol=1e-12)
    # peak lands in the cell containing the keypoint
    y, x = np.unravel_index(hm[0, 0].argmax(), (8, 8))
    assert (x, y) == (2, 4)
    y, x = np.unravel_index(hm[0, 2].argmax(), (8, 8))
    assert (x, y) == (7, 1)


# ---------------------------------------------------------------------------
# totals


def test_total_is_exact_ordered_sum():
    targets = make_targets(0)
    preds = make_preds(make_leaves(1, targets), r=3)
    breakdown, total = compute_loss(preds, targets)
    d = breakdown.as_dict()
    acc = 0.0
    for name in COMPONENTS:
        acc += d[name]
    assert breakdown.l_total == acc
    assert total.item() == pytest.approx(breakdown.l_total, abs=1e-12)
    assert all(d[name] > 0.0 for name in COMPONENTS)


def test_perfect_predictions_score_near_zero():
    k = 8
    targets = make_targets(2)
    r = targets.side.shape[0]

    def hot(labels, n=2):
        logits = np.full((labels.shape[0], n), -40.0)
        logits[np.arange(labels.shape[0]), labels] = 40.0
        return Tensor(logits)

    preds = BatchPredictions(
        depth=Tensor(targets.depth.copy()),
        side_logits=hot(targets.side),
        state_logits=hot(targets.state),
        state_logits_mm=hot(targets.state),
        glove_logits=hot(targets.glove),
        offset=Tensor(targets.offset.copy()),
        kpt_heatmaps=Tensor(targets.kpt_heatmaps.copy()),
        objcat_logits=hot(targets.object_category, n=5),
    )
    breakdown, _ = compute_loss(preds, targets)
    for name, v in breakdown.as_dict().items():
        assert abs(v) <= 1e-6, (name, v)
    del r, k


def test_offset_applies_to_contact_rows_only():
    targets = make_targets(3)
    targets.state[:] = 0
    targets.offset[:] = 0.0
    leaves = make_leaves(4, targets)
    leaves["offset"].data[:] = 1e9      # garbage must be ignored
    breakdown, total = compute_loss(make_preds(leaves, r=3), targets)
    assert breakdown.l_offset == 0.0
    total.backward()
    grad = leaves["offset"].grad
    assert grad is None or not grad.any()


def test_handless_batch_runs():
    targets = make_targets(5, r=0)
    preds = BatchPredictions(
        depth=Tensor(targets.depth + 0.5, requires_grad=True),
        side_logits=Tensor(np.zeros((0, 2))),
        state_logits=Tensor(np.zeros((0, 2))),
        state_logits_mm=Tensor(np.zeros((0, 2))),
        glove_logits=Tensor(np.zeros((0, 2))),
        offset=Tensor(np.zeros((0, 3))),
        kpt_heatmaps=Tensor(np.zeros((0, 21, 8, 8))),
        objcat_logits=Tensor(np.zeros((2, 5)), requires_grad=True),
    )
    breakdown, total = compute_loss(preds, targets)
    assert breakdown.l_side == 0.0 and breakdown.l_kpt == 0.0
    assert breakdown.l_depth == pytest.approx(0.5)
    assert breakdown.l_backbone > 0.0
    total.backward()    # no hands must still be differentiable


def test_detector_terms_enter_backbone():
    targets = make_targets(6)
    leaves = make_leaves(7, targets)
    base, _ = compute_loss(make_preds(leaves, r=3), targets)

    rng = np.random.default_rng(8)
    targets.det_cls = rng.integers(0, 3, size=12)
    targets.det_box = rng.uniform(0.0, 4.0, size=(3, 4))
    targets.det_pos = np.array([1, 5, 9])
    preds = make_preds(leaves, r=3)
    preds.det_cls_logits = Tensor(rng.normal(size=(12, 3)),
                                  requires_grad=True)
    preds.det_box_reg = Tensor(targets.det_box + 3.0, requires_grad=True)
    full, total = compute_loss(preds, targets)
    assert full.l_backbone > base.l_backbone
    for name in COMPONENTS[1:]:
        assert full.as_dict()[name] == base.as_dict()[name]
    total.backward()
    assert preds.det_cls_logits.grad.any()
    assert preds.det_box_reg.grad.any()


def test_non_finite_component_rejected():
    targets = make_targets(9)
    leaves = make_leaves(10, targets)
    leaves["depth"].data[0, 0, 0, 0] = np.nan
    with pytest.raises(ValidationError, match="l_depth"):
        compute_loss(make_preds(leaves, r=3), targets)


# ---------------------------------------------------------------------------
# gradients through every head


def test_total_gradients_match_finite_differences():
    targets = make_targets(11)
    leaves = make_leaves(12, targets)

    def loss():
        _, total = compute_loss(make_preds(leaves, r=3), targets)
        return total

    fd_gradcheck(loss, list(leaves.values()), tol=5e-4)
