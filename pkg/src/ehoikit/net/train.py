"""Optimization loop and the three training regimes.

Training runs in GT-proposal mode: ground-truth boxes are the RoIs so
every head sees correctly paired targets; the dense detector head can be
trained alongside via a config flag. synth_plus_real pretrains on the
synthetic split and fine-tunes the same parameters on the real split at
a reduced step size. All shuffling is seed-deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ValidationError
from .autograd import Tensor
from .data import (
    Batch,
    SceneSample,
    add_detector_targets,
    batches,
    make_batch,
    stratified_subset_indices,
)
from .losses import BatchPredictions, compute_loss
from .model import Model, ModelConfig, build_fusion_input

REGIMES = ("synth_only", "real_only", "synth_plus_real")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 8
    batch_size: int = 16
    optimizer: str = "sgd"        # "sgd" (momentum) or "adam"
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 0.0
    lr_drop_at: float = 0.75      # fraction of the phase's epochs
    lr_drop_factor: float = 0.1
    clip_grad_norm: float = 5.0   # 0 disables clipping
    seed: int = 0
    train_detector: bool = False
    finetune_epochs: int = 4
    finetune_lr_factor: float = 0.3
    real_fraction: float = 1.0
    smooth_l1_beta: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.real_fraction <= 1.0:
            raise ValidationError("real_fraction must lie in (0, 1]")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValidationError("epochs and batch_size must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ValidationError("optimizer must be 'sgd' or 'adam'")


class _Optimizer:
    """Shared plumbing: zero_grad plus global-norm gradient clipping."""

    def __init__(self, params: dict[str, Tensor], lr: float,
                 weight_decay: float = 0.0, clip_grad_norm: float = 0.0):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.clip_grad_norm = clip_grad_norm

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def _clip_scale(self) -> float:
        if self.clip_grad_norm <= 0.0:
            return 1.0
        sq = sum(float((p.grad * p.grad).sum())
                 for p in self.params.values() if p.grad is not None)
        norm = np.sqrt(sq)
        if norm > self.clip_grad_norm:
            return self.clip_grad_norm / norm
        return 1.0

    def _grad(self, p: Tensor, scale: float) -> np.ndarray:
        g = p.grad if scale == 1.0 else p.grad * scale
        if self.weight_decay:
            g = g + self.weight_decay * p.data
        return g


class SGD(_Optimizer):
    """Momentum SGD."""

    def __init__(self, params, lr, momentum: float = 0.9,
                 weight_decay: float = 0.0, clip_grad_norm: float = 0.0):
        super().__init__(params, lr, weight_decay, clip_grad_norm)
        self.momentum = momentum
        self.velocity = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self):
        scale = self._clip_scale()
        for k, p in self.params.items():
            if p.grad is None:
                continue
            v = self.velocity[k]
            v *= self.momentum
            v += self._grad(p, scale)
            p.data -= self.lr * v


class Adam(_Optimizer):
    """Adam with bias correction."""

    def __init__(self, params, lr, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0, clip_grad_norm: float = 0.0):
        super().__init__(params, lr, weight_decay, clip_grad_norm)
        self.betas = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self):
        scale = self._clip_scale()
        b1, b2 = self.betas
        self.t += 1
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            g = self._grad(p, scale)
            m = self.m[k]
            v = self.v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(params: dict[str, Tensor], config: TrainConfig):
    if config.optimizer == "adam":
        return Adam(params, config.lr, weight_decay=config.weight_decay,
                    clip_grad_norm=config.clip_grad_norm)
    return SGD(params, config.lr, config.momentum, config.weight_decay,
               config.clip_grad_norm)


def forward_batch(model: Model, batch: Batch,
                  batch_samples: list[SceneSample],
                  train_detector: bool = False):
    """Run every branch on one batch; returns BatchPredictions."""
    cfg = model.config
    feats = model.extract_features(Tensor(batch.images))
    depth_pred = model.predict_depth(feats)

    r = batch.hand_rois.shape[0]
    if r:
        hfv = model.pool_hand_features(feats, batch.hand_rois)
        attrs = model.predict_attributes(hfv)
        kpt = model.predict_keypoints(feats, batch.kpt_rois)
        fusion = np.empty((r, 26, cfg.fusion_crop, cfg.fusion_crop))
        for i, (bi, hand) in enumerate(batch.hand_meta):
            s = batch_samples[bi]
            fusion[i] = build_fusion_input(
                s.rgb, s.mask == hand.id, depth_pred.data[bi, 0],
                kpt.data[i], batch.crop_boxes[i], cfg.fusion_crop)
        mm_logits = model.early_fusion(fusion)
    else:
        empty2 = Tensor(np.zeros((0, 2)))
        attrs = {"side": empty2, "state": empty2, "glove": empty2,
                 "offset": Tensor(np.zeros((0, 3)))}
        kpt = Tensor(np.zeros((0, 21, cfg.heatmap_size, cfg.heatmap_size)))
        mm_logits = empty2

    objcat = None
    if batch.object_rois.shape[0]:
        obj_hfv = model.pool_hand_features(feats, batch.object_rois)
        objcat = model.predict_object_categories(obj_hfv)

    det_cls = det_box = None
    if train_detector:
        cls_map, box_map = model.detector_head(feats)
        n, _, gh, gw = cls_map.shape
        det_cls = cls_map.reshape(n, 3, gh * gw).permute(0, 2, 1) \
            .reshape(n * gh * gw, 3)
        if batch.targets.det_pos is not None and batch.targets.det_pos.size:
            box_flat = box_map.reshape(n, 4, gh * gw).permute(0, 2, 1) \
                .reshape(n * gh * gw, 4)
            det_box = box_flat.take_rows(batch.targets.det_pos)

    return BatchPredictions(
        depth=depth_pred, side_logits=attrs["side"],
        state_logits=attrs["state"], state_logits_mm=mm_logits,
        glove_logits=attrs["glove"], offset=attrs["offset"],
        kpt_heatmaps=kpt, objcat_logits=objcat,
        det_cls_logits=det_cls, det_box_reg=det_box)


def quick_eval(model: Model, samples: list[SceneSample],
               batch_size: int = 32) -> dict[str, float]:
    """Attribute accuracies, fused-contact accuracy, and depth MAE."""
    n_side = n_glove = n_app = n_fused = n_hands = 0
    n_cat = n_obj = 0
    depth_err = 0.0
    depth_px = 0
    for i in range(0, len(samples), batch_size):
        chunk = samples[i:i + batch_size]
        batch = make_batch(chunk, model.config)
        preds = forward_batch(model, batch, chunk)
        t = batch.targets
        depth_err += np.abs(preds.depth.data - t.depth).sum()
        depth_px += t.depth.size
        r = batch.hand_rois.shape[0]
        if r:
            n_hands += r
            n_side += int((preds.side_logits.data.argmax(1) == t.side).sum())
            n_glove += int((preds.glove_logits.data.argmax(1)
                            == t.glove).sum())
            n_app += int((preds.state_logits.data.argmax(1) == t.state).sum())
            fused = model.late_fusion(preds.state_logits,
                                      preds.state_logits_mm).data
            n_fused += int(((fused >= 0.5).astype(int) == t.state).sum())
        if preds.objcat_logits is not None:
            n_obj += t.object_category.size
            n_cat += int((preds.objcat_logits.data.argmax(1)
                          == t.object_category).sum())
    out = {"depth_mae": depth_err / max(depth_px, 1)}
    if n_hands:
        out.update(side_acc=n_side / n_hands, glove_acc=n_glove / n_hands,
                   contact_acc_appearance=n_app / n_hands,
                   contact_acc_fused=n_fused / n_hands)
    if n_obj:
        out["objcat_acc"] = n_cat / n_obj
    return out


def _phase_lr(cfg: TrainConfig, base_lr: float, epoch: int,
              n_epochs: int) -> float:
    if n_epochs > 1 and epoch >= cfg.lr_drop_at * n_epochs:
        return base_lr * cfg.lr_drop_factor
    return base_lr


def train(synth: list[SceneSample] | None, real: list[SceneSample] | None,
          regime: str, config: TrainConfig, model_config: ModelConfig,
          val: list[SceneSample] | None = None,
          log_path: str | Path | None = None,
          model: Model | None = None):
    """Run the chosen regime. Returns (model, per-epoch log records)."""
    if regime not in REGIMES:
        raise ValidationError(f"unknown regime {regime!r}")
    phases = []
    if regime in ("synth_only", "synth_plus_real"):
        if not synth:
            raise ValidationError(f"regime {regime} needs synthetic data")
        phases.append(("synth", synth, config.epochs, config.lr))
    if regime in ("real_only", "synth_plus_real"):
        if not real:
            raise ValidationError(f"regime {regime} needs real data")
        if config.real_fraction < 1.0:
            keep = stratified_subset_indices(real, config.real_fraction,
                                             config.seed)
            real = [real[i] for i in keep]
        n_ep = config.epochs if regime == "real_only" \
            else config.finetune_epochs
        base = config.lr if regime == "real_only" \
            else config.lr * config.finetune_lr_factor
        phases.append(("real", real, n_ep, base))

    if model is None:
        model = Model.init(model_config, config.seed)
    opt = make_optimizer(model.parameters(), config)
    records = []
    log_file = open(log_path, "w") if log_path else None
    global_epoch = 0
    try:
        for phase_idx, (phase, samples, n_epochs, base_lr) in enumerate(phases):
            for epoch in range(n_epochs):
                opt.lr = _phase_lr(config, base_lr, epoch, n_epochs)
                rng = np.random.default_rng(
                    (config.seed, phase_idx, epoch, 0xB47C))
                sums: dict[str, float] = {}
                n_batches = 0
                for chunk in batches(samples, config.batch_size, rng):
                    batch = make_batch(chunk, model_config)
                    if config.train_detector:
                        add_detector_targets(batch)
                    preds = forward_batch(model, batch, chunk,
                                          config.train_detector)
                    breakdown, total = compute_loss(
                        preds, batch.targets, config.smooth_l1_beta)
                    opt.zero_grad()
                    total.backward()
                    opt.step()
                    for k, v in breakdown.as_dict().items():
                        sums[k] = sums.get(k, 0.0) + v
                    n_batches += 1
                record = {
                    "epoch": global_epoch, "phase": phase, "lr": opt.lr,
                    "n_batches": n_batches,
                    "loss": {k: v / max(n_batches, 1)
                             for k, v in sums.items()},
                }
                if val:
                    record["val"] = quick_eval(model, val)
                records.append(record)
                if log_file:
                    log_file.write(json.dumps(record) + "\n")
                    log_file.flush()
                global_epoch += 1
    finally:
        if log_file:
            log_file.close()
    return model, records
