"""Release gate: one test, and one verbose pass/fail line, per criterion.

Criteria 9-11 train models end to end and dominate the runtime (about
fifteen minutes on one core); criteria 1-8 finish in roughly two.
"""

import filecmp
import json
import math
import time
import warnings

import numpy as np
import pytest

from ehoikit.annotations import (
    BBox,
    ContactState,
    Dataset,
    GloveStatus,
    HandSide,
    ObjectAnnotation,
    OffsetVector,
    compute_stats,
    decode_depth,
    decode_mask,
    derive_offset,
    parse_dataset,
    project_interaction_point,
    write_dataset,
)
from ehoikit.augval import (
    filter_dataset,
    mock_augment,
    ssim,
    ssim_reference,
    to_luminance,
    validate_pair,
)
from ehoikit.matching import MatchWarning, match, match_oracle
from ehoikit.metrics import (
    ALL_ATTRS,
    EvalConfig,
    HandPred,
    ImagePredictions,
    PairPred,
    compound_ap,
    compound_ap_oracle,
    evaluate,
    map_hand_all,
    map_hand_all_oracle,
    map_hand_obj,
    map_hand_obj_oracle,
)
from ehoikit.net.autograd import Tensor
from ehoikit.net.data import SceneSample, stratified_subset_indices
from ehoikit.net.infer import infer
from ehoikit.net.losses import BatchPredictions, compute_loss
from ehoikit.net.model import ModelConfig
from ehoikit.net.train import TrainConfig, quick_eval, train
from ehoikit.synthgen import SceneConfig, generate_dataset, generate_scene

from conftest import fd_gradcheck, make_dataset, make_hand, make_record
from test_augval import make_image
from test_matching import hand_det, obj_det, random_scene, square
from test_net_losses import COMPONENTS, make_leaves, make_preds, make_targets

pytestmark = pytest.mark.acceptance

RIGHT, LEFT = HandSide.RIGHT, HandSide.LEFT
CONTACT, FREE = ContactState.CONTACT, ContactState.NO_CONTACT
GLOVE, BARE = GloveStatus.GLOVE, GloveStatus.NO_GLOVE

ATTR_SETS = ((), ("side",), ("glove",), ("state",), ALL_ATTRS)
N_BATTERY = 1000


# ---------------------------------------------------------------------------
# shared instance generator for the metric battery (criteria 1 and 2)


def _rand_box(rng, lo=0.0, hi=100.0):
    x0 = rng.uniform(lo, hi - 10)
    y0 = rng.uniform(lo, hi - 10)
    return BBox(x0, y0, x0 + rng.uniform(2, 10), y0 + rng.uniform(2, 10))


def _jitter(rng, b, scale=6.0):
    dx, dy = rng.uniform(-scale, scale, size=2)
    return BBox(b.x_min + dx, b.y_min + dy, b.x_max + dx, b.y_max + dy)


def _battery_instance(rng):
    """Up to 20 images with up to 5 hands and 8 objects each, plus noisy
    predictions: jittered boxes, attribute flips, duplicates, dropped
    pairs, hallucinations, and quantized confidences for rank ties."""
    n_images = (int(rng.integers(12, 21)) if rng.random() < 0.02
                else int(rng.integers(1, 7)))
    records, preds = [], []
    for i in range(n_images):
        image_id = f"img_{i:06d}"
        hands, objects, hand_preds, pair_preds = [], [], [], []
        oid = 100
        for hid in range(int(rng.integers(0, 6))):
            bb = _rand_box(rng)
            side = RIGHT if rng.random() < 0.5 else LEFT
            glove = GLOVE if rng.random() < 0.5 else BARE
            contact = rng.random() < 0.6
            obj = None
            if contact:
                obj = ObjectAnnotation(id=oid, bbox=_rand_box(rng),
                                       category_id=int(rng.integers(0, 3)),
                                       active=True)
                objects.append(obj)
                oid += 1
            hands.append(make_hand(
                hid, bb, side=side, glove=glove,
                contact=CONTACT if contact else FREE, active_object=obj))

            for _ in range(int(rng.integers(0, 3))):
                def flip(v, a, b):
                    return (b if v == a else a) if rng.random() < 0.25 else v

                p = HandPred(_jitter(rng, bb), round(float(rng.random()), 1),
                             flip(side, LEFT, RIGHT),
                             flip(CONTACT if contact else FREE,
                                  CONTACT, FREE),
                             flip(glove, GLOVE, BARE))
                hand_preds.append(p)
                if obj is not None and rng.random() < 0.8:
                    pair_preds.append(PairPred(
                        p, _jitter(rng, obj.bbox),
                        int(rng.integers(0, 3)) if rng.random() < 0.3
                        else obj.category_id))
        while len(objects) < 8 and rng.random() < 0.3:    # inactive clutter
            objects.append(ObjectAnnotation(id=oid, bbox=_rand_box(rng),
                                            category_id=int(rng.integers(0, 3)),
                                            active=False))
            oid += 1
        for _ in range(int(rng.integers(0, 2))):          # hallucinations
            hand_preds.append(HandPred(_rand_box(rng),
                                       round(float(rng.random()), 1),
                                       RIGHT if rng.random() < 0.5 else LEFT,
                                       FREE, BARE))
        records.append(make_record(image_id, hands=hands, objects=objects))
        preds.append(ImagePredictions(image_id, hand_preds, pair_preds))
    return records, preds


@pytest.fixture(scope="module")
def metric_battery():
    """Fast and oracle values for every metric over 1000 seeded instances,
    alternating the AP integration mode per instance."""
    t0 = time.perf_counter()
    rows = []
    for i in range(N_BATTERY):
        rng = np.random.default_rng((2024, i))
        records, preds = _battery_instance(rng)
        cfg = EvalConfig(ap_integration="all_point" if i % 2 == 0
                         else "eleven_point")
        vals, oracle = {}, {}
        for attrs in ATTR_SETS:
            vals[attrs] = compound_ap(preds, records, attrs, cfg)
            oracle[attrs] = compound_ap_oracle(preds, records, attrs, cfg)
        vals["pair_obj"] = map_hand_obj(preds, records, cfg)
        oracle["pair_obj"] = map_hand_obj_oracle(preds, records, cfg)
        vals["pair_all"] = map_hand_all(preds, records, cfg)
        oracle["pair_all"] = map_hand_all_oracle(preds, records, cfg)
        rows.append((vals, oracle))
    return rows, time.perf_counter() - t0


def test_criterion_01_metrics_match_oracle(metric_battery):
    rows, elapsed = metric_battery
    worst = 0.0
    for vals, oracle in rows:
        for key, fast in vals.items():
            worst = max(worst, abs(fast - oracle[key]))
    assert worst < 1e-9, f"worst |fast - oracle| = {worst:.3g}"
    assert elapsed < 60.0, f"battery took {elapsed:.1f}s (budget 60s)"
    print(f"\n[criterion 01] PASS {N_BATTERY} instances x 7 metrics, "
          f"worst |fast - oracle| {worst:.2e}, {elapsed:.1f}s")


def test_criterion_02_metric_monotonicity(metric_battery):
    rows, _ = metric_battery
    violations = 0
    for vals, _oracle in rows:
        for attrs in (("side",), ("glove",), ("state",)):
            violations += not vals[()] >= vals[attrs]
            violations += not vals[attrs] >= vals[ALL_ATTRS]
        violations += not vals["pair_obj"] >= vals["pair_all"]
    assert violations == 0
    print(f"\n[criterion 02] PASS 0 monotonicity violations over "
          f"{N_BATTERY} instances x 7 orderings")


def test_criterion_03_matching_matches_oracle():
    rng = np.random.default_rng(3)
    n_quads = 0
    for _ in range(1000):
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
            n_quads += 1

    # constructed equidistant ties resolve to the lowest index either way
    hand = hand_det(square(40, 50), OffsetVector(1.0, 0.0, 0.1))
    px = 40 + 0.1 * math.hypot(128, 128)
    near = [obj_det(square(px - 7, 50)), obj_det(square(px + 7, 50))]
    for objs in (near, near[::-1]):
        assert match([hand], objs, 128, 128)[0].object_index == 0
    three = [obj_det(square(px, 44)), obj_det(square(px, 56)),
             obj_det(square(px + 6, 50))]
    assert match([hand], three, 128, 128)[0].object_index == 0
    print(f"\n[criterion 03] PASS {n_quads} quadruples identical to the "
          f"oracle across 1000 scenes; equidistant ties pick index 0")


def test_criterion_04_offset_round_trip():
    rng = np.random.default_rng(4)
    worst = 0.0
    for i in range(10_000):
        w = float(rng.uniform(8.0, 4000.0))
        h = float(rng.uniform(8.0, 4000.0))

        def rand_box():
            x0 = rng.uniform(0.0, 0.9 * w)
            y0 = rng.uniform(0.0, 0.9 * h)
            return BBox(x0, y0, x0 + rng.uniform(0.5, w - x0),
                        y0 + rng.uniform(0.5, h - y0))

        hand = rand_box()
        obj = hand if i % 100 == 0 else rand_box()  # coincident centers too
        off = derive_offset(hand, obj, w, h)
        px, py = project_interaction_point(hand, off, w, h)
        ox, oy = obj.center
        worst = max(worst, math.hypot(px - ox, py - oy))
    assert worst <= 1e-6, f"worst round-trip error {worst:.3g} px"
    print(f"\n[criterion 04] PASS 10000 round trips, worst error "
          f"{worst:.2e} px")


def test_criterion_05_augmentation_validator():
    # identical inputs score exactly 1.0
    for seed in range(100):
        lum = to_luminance(make_image(seed))
        assert ssim(lum, lum) == 1.0

    # fast path equals the per-window reference implementation
    worst = 0.0
    rng = np.random.default_rng(5)
    for seed in range(10):
        a = to_luminance(make_image(200 + seed))
        b = np.clip(a + rng.normal(0.0, 6.0, size=a.shape), 0.0, 255.0)
        worst = max(worst, abs(ssim(a, b) - ssim_reference(a, b)))
    assert worst <= 1e-6

    # edits confined to masked hand regions leave the score at 1.0
    img = make_image(300)
    hands = [BBox(20.0, 10.0, 30.0, 20.0)]
    aug = mock_augment(img, hands)
    assert validate_pair(img, aug, hands).ssim_score == 1.0
    assert validate_pair(img, aug, []).ssim_score < 1.0

    # the 0.95 gate keeps clean pairs and drops corrupted backgrounds
    pairs, clean = [], []
    for i in range(9):
        original = make_image(400 + i)
        boxes = [BBox(12.0, 10.0, 28.0, 26.0)]
        bad = i % 3 == 2
        augmented = mock_augment(original, boxes, corrupt_background=bad,
                                 rng=np.random.default_rng(i))
        pairs.append((f"img_{i:06d}", original, augmented, boxes))
        if not bad:
            clean.append(f"img_{i:06d}")
    kept, report = filter_dataset(pairs, threshold=0.95)
    assert kept == clean
    assert report.keep_rate == pytest.approx(6.0 / 9.0)
    print(f"\n[criterion 05] PASS identity exact on 100 images; fast vs "
          f"reference {worst:.2e}; masked edits invisible; gate kept "
          f"{len(kept)}/9")


def test_criterion_06_loss_composition_and_gradients():
    meta = np.random.default_rng(6)
    n_grad_checks = 0
    for i in range(20):
        r = int(meta.integers(1, 4))
        o = int(meta.integers(1, 4))
        targets = make_targets(300 + i, r=r, o=o)
        leaves = make_leaves(600 + i, targets)
        with_det = i % 2 == 1
        if with_det:
            det = np.random.default_rng(900 + i)
            targets.det_cls = det.integers(0, 3, size=12)
            targets.det_box = det.uniform(0.0, 4.0, size=(3, 4))
            targets.det_pos = np.array([1, 5, 9])
            leaves["det_cls"] = Tensor(det.normal(size=(12, 3)),
                                       requires_grad=True)
            leaves["det_box"] = Tensor(targets.det_box + 3.0,
                                       requires_grad=True)

        def forward():
            preds = make_preds(leaves, r=r)
            if with_det:
                preds.det_cls_logits = leaves["det_cls"]
                preds.det_box_reg = leaves["det_box"]
            return compute_loss(preds, targets)

        breakdown, total = forward()
        acc = 0.0
        for name in COMPONENTS:
            acc += breakdown.as_dict()[name]
        assert breakdown.l_total == acc           # exact ordered float sum
        assert total.item() == pytest.approx(acc, abs=1e-12)

        # every leaf feeds exactly one component, so this is a
        # per-component gradient check
        fd_gradcheck(lambda: forward()[1], list(leaves.values()),
                     step=1e-3, tol=1e-4, max_entries=6,
                     rng=np.random.default_rng(i))
        n_grad_checks += len(leaves)

    # perfect predictions drive every component to numerical zero
    worst = 0.0
    for seed in (30, 31, 32, 33, 34):
        targets = make_targets(seed)

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
        worst = max(worst, max(abs(v)
                               for v in breakdown.as_dict().values()))
    assert worst <= 1e-6
    print(f"\n[criterion 06] PASS exact sums on 20 batches; "
          f"{n_grad_checks} leaves gradient-checked at tol 1e-4; perfect "
          f"predictions peak at {worst:.2e}")


def test_criterion_07_generator_statistics_and_io(tmp_path):
    cfg = SceneConfig(width=64, height=64, seed=777)
    records, n_hands, n_gloved = [], 0, 0
    index = 0
    while n_hands < 10_000:
        rec = generate_scene(cfg, index).record
        records.append(rec)
        for hd in rec.hands:
            n_hands += 1
            n_gloved += hd.glove == GLOVE
        index += 1
    fraction = 100.0 * n_gloved / n_hands
    assert 48.0 <= fraction <= 52.0, f"glove fraction {fraction:.2f}%"

    # every generated record survives a write/parse cycle warning-free
    ds = Dataset(cfg.categories(), records, ["train"] * len(records))
    write_dataset(ds, tmp_path / "ann")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        back = parse_dataset(tmp_path / "ann")
    assert len(back.records) == len(records)

    # regeneration with the same seed is byte-identical
    small = SceneConfig(width=64, height=64, seed=31)
    for name in ("first", "second"):
        generate_dataset(small, 24, 6, 6, tmp_path / name)
    a, b = tmp_path / "first", tmp_path / "second"
    rel = sorted(str(p.relative_to(a)) for p in a.rglob("*") if p.is_file())
    assert rel == sorted(str(p.relative_to(b))
                         for p in b.rglob("*") if p.is_file())
    same, diff, err = filecmp.cmpfiles(a, b, rel, shallow=False)
    assert not diff and not err and len(same) == len(rel)
    print(f"\n[criterion 07] PASS glove fraction {fraction:.2f}% over "
          f"{n_hands} hands; {len(records)} records reparse warning-free; "
          f"regeneration byte-identical across {len(rel)} files")


def test_criterion_08_stats_fidelity():
    # hand-counted fixture: 2 images, 3 hands, 1 interaction, 2 gloved
    obj = ObjectAnnotation(id=100, bbox=BBox(60, 60, 80, 80),
                           category_id=1, active=True)
    rec_a = make_record("img_000000", hands=[
        make_hand(0, BBox(10, 10, 30, 30), side=LEFT, glove=GLOVE,
                  contact=CONTACT, active_object=obj),
        make_hand(1, BBox(40, 40, 55, 55), side=LEFT, glove=BARE),
    ], objects=[obj])
    rec_b = make_record("img_000001", hands=[
        make_hand(0, BBox(5, 5, 25, 25), side=RIGHT, glove=GLOVE)])
    st = compute_stats(make_dataset([rec_a, rec_b]))
    assert (st.n_images, st.n_hands, st.n_ehois) == (2, 3, 1)
    assert (st.n_left, st.n_right) == (2, 1)
    assert st.glove_fraction == pytest.approx(200.0 / 3.0)

    # identities hold on generated data, per split and in total
    cfg = SceneConfig(width=64, height=64, seed=88)
    recs = [generate_scene(cfg, i).record for i in range(300)]
    gen = Dataset(cfg.categories(), recs,
                  ["train"] * 200 + ["val"] * 100)
    total = compute_stats(gen)
    assert total.n_images == 300
    assert total.n_hands > 0
    assert total.n_left + total.n_right == total.n_hands
    per = compute_stats(gen, per_split=True)
    assert per["total"].n_hands == total.n_hands
    assert per["train"].n_hands + per["val"].n_hands == total.n_hands
    assert per["train"].n_ehois + per["val"].n_ehois == total.n_ehois
    for split_stats in per.values():
        assert split_stats.n_left + split_stats.n_right == split_stats.n_hands
    print(f"\n[criterion 08] PASS fixture counts exact; side and "
          f"interaction identities hold over {total.n_hands} generated "
          f"hands in 2 splits")


# ---------------------------------------------------------------------------
# end-to-end training criteria


def _scene_to_sample(sc) -> SceneSample:
    r = sc.record
    return SceneSample(r.image_id, r.width, r.height,
                       sc.rgb.astype(np.float64) / 255.0,
                       decode_depth(sc.depth),
                       decode_mask(sc.instance_mask),
                       list(r.hands), list(r.objects))


def _prediction_run(model, scenes, samples):
    """Ground-truth-proposal inference, offset matching, metric rows."""
    run = []
    for sc, s in zip(scenes, samples):
        dets = infer(s.rgb, model, "gt_proposals", record=sc.record,
                     instance_mask=s.mask)
        hands = [d for d in dets if d.kind == "hand"]
        objs = [d for d in dets if d.kind == "object"]
        quads = match(hands, objs, s.width, s.height)
        by_hand = {id(q.hand): HandPred(q.hand.bbox, q.hand.confidence,
                                        q.hand.side, q.contact, q.glove)
                   for q in quads}
        pairs = [PairPred(by_hand[id(q.hand)], q.active_object.bbox,
                          q.active_object.category_id)
                 for q in quads
                 if q.contact == CONTACT and q.active_object is not None]
        run.append(ImagePredictions(sc.record.image_id,
                                    list(by_hand.values()), pairs))
    return run


def _contact_variant_runs(model, scenes, samples):
    """Contact state decided by the fused head vs the appearance head."""
    fused, appearance = [], []
    for sc, s in zip(scenes, samples):
        dets = infer(s.rgb, model, "gt_proposals", record=sc.record,
                     instance_mask=s.mask)
        hands = [d for d in dets if d.kind == "hand"]
        for use_appearance, out in ((False, fused), (True, appearance)):
            preds = []
            for d in hands:
                p = (d.appearance_contact_prob if use_appearance
                     else d.contact_prob)
                preds.append(HandPred(d.bbox, max(p, 1.0 - p), d.side,
                                      CONTACT if p >= 0.5 else FREE,
                                      d.glove))
            out.append(ImagePredictions(sc.record.image_id, preds, []))
    return fused, appearance


@pytest.mark.slow
def test_criterion_09_end_to_end_quality():
    t_all = time.perf_counter()
    cfg = SceneConfig(width=64, height=64, seed=7)
    train_samples = [_scene_to_sample(generate_scene(cfg, i))
                     for i in range(2000)]
    val_scenes = [generate_scene(cfg, 100_000 + i) for i in range(500)]
    val_samples = [_scene_to_sample(sc) for sc in val_scenes]

    mc = ModelConfig(fusion_crop=48, heatmap_size=16)
    tc = TrainConfig(epochs=12, batch_size=16, optimizer="adam", lr=2e-3,
                     clip_grad_norm=5.0, seed=0)
    model, _ = train(train_samples, None, "synth_only", tc, mc)

    ev = quick_eval(model, val_samples)
    run = _prediction_run(model, val_scenes, val_samples)
    rep = evaluate(run, Dataset(cfg.categories(),
                                [sc.record for sc in val_scenes], {}))
    wall = time.perf_counter() - t_all

    checks = [
        ("glove accuracy", ev["glove_acc"], 0.95),
        ("side accuracy", ev["side_acc"], 0.90),
        ("fused contact accuracy", ev["contact_acc_fused"], 0.85),
        ("ap_hand_glove", rep.ap_hand_glove, 90.0),
        ("map_hand_all", rep.map_hand_all, 60.0),
    ]
    detail = "; ".join(f"{name} {value:.3f} (floor {floor})"
                       for name, value, floor in checks)
    print(f"\n[criterion 09] {detail}; wall {wall:.0f}s (budget 900s)")
    for name, value, floor in checks:
        assert value >= floor, f"{name} {value:.4f} below {floor}"
    assert wall <= 900.0, f"wall time {wall:.0f}s exceeds 900s"


@pytest.mark.slow
def test_criterion_10_fusion_beats_appearance(tmp_path):
    cfg = SceneConfig(width=64, height=64, seed=7)
    train_samples = [_scene_to_sample(generate_scene(cfg, i))
                     for i in range(500)]
    val_scenes = [generate_scene(cfg, 200_000 + i) for i in range(150)]
    val_samples = [_scene_to_sample(sc) for sc in val_scenes]
    recs = [sc.record for sc in val_scenes]
    mc = ModelConfig(fusion_crop=48, heatmap_size=16)

    results = []
    for seed in (0, 1, 2):
        tc = TrainConfig(epochs=6, batch_size=16, optimizer="adam",
                         lr=2e-3, clip_grad_norm=5.0, seed=seed)
        model, _ = train(train_samples, None, "synth_only", tc, mc)
        fused_run, app_run = _contact_variant_runs(model, val_scenes,
                                                   val_samples)
        ap_fused = compound_ap(fused_run, recs, ("state",))
        ap_app = compound_ap(app_run, recs, ("state",))
        assert np.isfinite(ap_fused) and np.isfinite(ap_app)
        results.append((seed, ap_fused, ap_app))

    wins = sum(ap_fused >= ap_app for _, ap_fused, ap_app in results)
    detail = "; ".join(f"seed {s}: fused {f:.2f} vs appearance {a:.2f}"
                       for s, f, a in results)
    print(f"\n[criterion 10] {wins}/3 seeds favor fusion ({detail})")
    if wins < 2:
        # soft target: a miss is recorded for investigation, not failed
        note = tmp_path / "fusion_vs_appearance.json"
        note.write_text(json.dumps({"wins": wins, "results": results}))
        warnings.warn(f"fusion beat appearance in only {wins}/3 seeds; "
                      f"per-seed results written to {note}")


@pytest.mark.slow
def test_criterion_11_real_fraction_regimes():
    synth_cfg = SceneConfig(width=64, height=64, seed=7)
    real_cfg = SceneConfig(width=64, height=64, seed=901,
                           color_jitter=0.25)
    synth = [_scene_to_sample(generate_scene(synth_cfg, i)) for i in range(60)]
    real = [_scene_to_sample(generate_scene(real_cfg, i)) for i in range(80)]
    val_scenes = [generate_scene(real_cfg, 300_000 + i) for i in range(40)]
    val_samples = [_scene_to_sample(sc) for sc in val_scenes]
    recs = [sc.record for sc in val_scenes]
    fractions = (0.10, 0.25, 0.50, 1.00)

    # subsets drawn for the training seed are nested across fractions
    subsets = {f: set(stratified_subset_indices(real, f, seed=0))
               for f in fractions}
    sizes = [len(subsets[f]) for f in fractions]
    assert sizes == sorted(sizes) and sizes[0] < sizes[-1]
    for small, large in zip(fractions, fractions[1:]):
        assert subsets[small] <= subsets[large]
    assert subsets[1.00] == set(range(len(real)))

    mc = ModelConfig(fusion_crop=48, heatmap_size=16)
    scores = {}
    for fraction in fractions:
        tc = TrainConfig(epochs=2, batch_size=16, optimizer="adam",
                         lr=2e-3, clip_grad_norm=5.0, seed=0,
                         finetune_epochs=2, real_fraction=fraction)
        model, log = train(synth, real, "synth_plus_real", tc, mc)
        assert [row["phase"] for row in log] == ["synth", "synth",
                                                 "real", "real"]
        run = _prediction_run(model, val_scenes, val_samples)
        rep = evaluate(run, Dataset(real_cfg.categories(), recs, {}))
        assert np.isfinite(rep.ap_hand) and np.isfinite(rep.map_hand_all)
        assert 0.0 <= rep.ap_hand <= 100.0
        scores[fraction] = (rep.ap_hand, rep.map_hand_all)

    detail = "; ".join(f"{f:.2f}: ap_hand {a:.1f}, map_hand_all {m:.1f}"
                       for f, (a, m) in scores.items())
    print(f"\n[criterion 11] PASS nested subsets verified; {detail}")
