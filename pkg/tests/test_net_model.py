"""Network heads: shapes, fusion, crop geometry, checkpoints."""

import numpy as np
import pytest

from ehoikit.annotations import BBox
from ehoikit.errors import IOFailure, ValidationError
from ehoikit.net.autograd import Tensor
from ehoikit.net.model import (
    FUSION_CHANNELS,
    Model,
    ModelConfig,
    bilinear_resize,
    build_fusion_input,
    crop_resize,
    decode_keypoints,
    dilated_crop_box,
    load_checkpoint,
    save_checkpoint,
)

TINY = ModelConfig(stem_channels=4, stage_channels=(4, 8, 8), pyramid_dim=8,
                   roi_size=3, hfv_dim=32, head_hidden=16, heatmap_size=8,
                   fusion_crop=16, fusion_channels=(4, 4, 8))


@pytest.fixture(scope="module")
def model():
    return Model.init(TINY, seed=0)


@pytest.fixture(scope="module")
def feats(model):
    rng = np.random.default_rng(1)
    images = Tensor(rng.uniform(0.0, 1.0, size=(2, 3, 32, 32)))
    return model.extract_features(images)


def test_init_is_seeded():
    a = Model.init(TINY, seed=5)
    b = Model.init(TINY, seed=5)
    c = Model.init(TINY, seed=6)
    assert a.params.keys() == b.params.keys()
    for k in a.params:
        np.testing.assert_array_equal(a.params[k].data, b.params[k].data)
    assert any(not np.array_equal(a.params[k].data, c.params[k].data)
               for k in a.params)


def test_feature_pyramid_shapes(feats):
    assert feats["p4"].shape == (2, TINY.pyramid_dim, 8, 8)
    assert feats["p8"].shape == (2, TINY.pyramid_dim, 4, 4)
    assert feats["p16"].shape == (2, TINY.pyramid_dim, 2, 2)


def test_input_must_be_divisible_by_16(model):
    with pytest.raises(ValidationError):
        model.extract_features(Tensor(np.zeros((1, 3, 30, 32))))


def test_hand_heads_shapes(model, feats):
    boxes = np.array([[0.0, 2.0, 3.0, 20.0, 28.0],
                      [1.0, 5.0, 1.0, 30.0, 22.0]])
    hfv = model.pool_hand_features(feats, boxes)
    assert hfv.shape == (2, TINY.hfv_dim)
    out = model.predict_attributes(hfv)
    assert out["side"].shape == (2, 2)
    assert out["state"].shape == (2, 2)
    assert out["glove"].shape == (2, 2)
    assert out["offset"].shape == (2, 3)
    assert model.predict_object_categories(hfv).shape == (2, TINY.n_categories)
    hm = model.predict_keypoints(feats, boxes)
    assert hm.shape == (2, 21, 8, 8)
    np.testing.assert_allclose(hm.data.sum(axis=(2, 3)), 1.0)


def test_degenerate_roi_rejected(model, feats):
    with pytest.raises(ValidationError, match="RoI"):
        model.pool_hand_features(feats, np.array([[0.0, 5.0, 5.0, 5.4, 5.4]]))


def test_depth_and_detector_shapes(model, feats):
    depth = model.predict_depth(feats)
    assert depth.shape == (2, 1, 32, 32)
    assert depth.data.min() >= 0.0 and depth.data.max() <= 1.0
    cls_logits, box_reg = model.detector_head(feats)
    assert cls_logits.shape == (2, 3, 4, 4)
    assert box_reg.shape == (2, 4, 4, 4)


def test_early_fusion_channel_guard(model):
    rng = np.random.default_rng(2)
    good = rng.uniform(size=(3, FUSION_CHANNELS, 16, 16))
    assert model.early_fusion(good).shape == (3, 2)
    with pytest.raises(ValidationError, match="channels"):
        model.early_fusion(good[:, :-1])


def test_late_fusion_mean_rule(model):
    appearance = Tensor(np.array([[0.0, 2.0], [3.0, -1.0]]))
    multimodal = Tensor(np.array([[-1.0, 1.0], [0.5, 0.5]]))
    fused = model.late_fusion(appearance, multimodal).data

    def p1(row):
        e = np.exp(row - row.max())
        return e[1] / e.sum()

    want = [(p1(appearance.data[i]) + p1(multimodal.data[i])) / 2.0
            for i in range(2)]
    np.testing.assert_allclose(fused, want)
    assert fused.shape == (2,)


# ---------------------------------------------------------------------------
# crop geometry


def test_dilated_crop_box_clamps():
    box = dilated_crop_box(BBox(0.0, 10.0, 50.0, 120.0), 0.10, 128, 128)
    assert (box.x_min, box.y_min) == (0.0, 0.0)
    assert (box.x_max, box.y_max) == (55.0, 128.0)


def test_decode_keypoints_spike_maps_to_cell_center():
    hm = np.zeros((21, 8, 8))
    hm[:, 0, 0] = 1.0
    hm[3, :, :] = 0.0
    hm[3, 5, 2] = 1.0      # row 5, col 2
    crop = BBox(10.0, 20.0, 26.0, 52.0)   # 16 x 32
    kps = decode_keypoints(hm, crop)
    assert kps.shape == (21, 2)
    np.testing.assert_allclose(kps[0], [10.0 + 0.5 / 8 * 16,
                                        20.0 + 0.5 / 8 * 32])
    np.testing.assert_allclose(kps[3], [10.0 + 2.5 / 8 * 16,
                                        20.0 + 5.5 / 8 * 32])


def test_bilinear_resize_identity_and_constant():
    rng = np.random.default_rng(3)
    img = rng.uniform(size=(6, 7, 3))
    np.testing.assert_allclose(bilinear_resize(img, 6, 7), img)
    const = np.full((5, 5), 3.25)
    np.testing.assert_allclose(bilinear_resize(const, 9, 4), 3.25)


def test_crop_resize_reads_only_the_box():
    plane = np.zeros((16, 16))
    plane[4:8, 2:6] = 7.0
    out = crop_resize(plane, BBox(2.0, 4.0, 6.0, 8.0), 4)
    np.testing.assert_allclose(out, 7.0)


def test_build_fusion_input_layout():
    rng = np.random.default_rng(4)
    rgb = rng.uniform(size=(16, 16, 3))
    mask = np.zeros((16, 16))
    mask[2:10, 2:10] = 1.0
    depth = rng.uniform(size=(16, 16))
    hm = np.zeros((21, 8, 8))
    hm[:, 4, 4] = 0.5
    box = BBox(2.0, 2.0, 10.0, 10.0)
    x = build_fusion_input(rgb, mask, depth, hm, box, crop=8)
    assert x.shape == (FUSION_CHANNELS, 8, 8)
    np.testing.assert_allclose(x[3], 1.0)            # mask crop all inside
    np.testing.assert_allclose(x[5:, 4, 4], 1.0)     # peak-normalized spikes
    assert x.min() >= 0.0 and x.max() <= 1.0


# ---------------------------------------------------------------------------
# checkpoints


def test_checkpoint_round_trip(tmp_path, model):
    path = tmp_path / "model.npz"
    save_checkpoint(model, path)
    back = load_checkpoint(path)
    assert back.config == model.config
    assert back.params.keys() == model.params.keys()
    for k in model.params:
        np.testing.assert_array_equal(back.params[k].data,
                                      model.params[k].data)


def test_checkpoint_version_guard(tmp_path, model):
    import json

    path = tmp_path / "model.npz"
    save_checkpoint(model, path)
    with np.load(path) as z:
        arrays = {k: z[k] for k in z.files}
    meta = json.loads(bytes(arrays["meta"]).decode())
    meta["version"] = 999
    arrays["meta"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    np.savez(path, **arrays)
    with pytest.raises(ValidationError, match="version"):
        load_checkpoint(path)


def test_checkpoint_missing_file(tmp_path):
    with pytest.raises(IOFailure):
        load_checkpoint(tmp_path / "absent.npz")
