"""Model definition: encoder, feature pyramid, heads, fusion, checkpoints.

A three-stage stride-2 encoder feeds a lightweight top-down pyramid with
D-channel maps at strides 4/8/16. Hands are pooled from the stride-8 map
into a 1024-d feature vector shared by four MLP heads (side, state,
offset, glove) plus an object-category head; a keypoint branch decodes
21 normalized heatmaps from the stride-4 map; a depth branch predicts
full-resolution inverse depth; an early-fusion classifier rescores
contact from stacked per-hand modalities. Intermediate conv/fc layers
carry group normalization (batch-size independent, so training and
inference share one code path); final layers are zero-initialized so
every head starts at the uniform prediction.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from ..annotations import BBox
from ..errors import IOFailure, ValidationError
from .autograd import Tensor, conv2d, roi_align, softmax_rows, upsample2x

CHECKPOINT_VERSION = 1
FUSION_CHANNELS = 26  # 3 rgb + 1 mask + 1 depth + 21 heatmaps


@dataclass(frozen=True)
class ModelConfig:
    stem_channels: int = 16
    stage_channels: tuple[int, int, int] = (32, 64, 128)
    pyramid_dim: int = 64
    roi_size: int = 7
    hfv_dim: int = 1024
    head_hidden: int = 256
    heatmap_size: int = 32
    fusion_crop: int = 96
    fusion_channels: tuple[int, int, int] = (16, 32, 64)
    crop_dilation: float = 0.10
    n_categories: int = 10
    late_fusion: str = "mean"        # "mean" or "learned"
    smooth_l1_beta: float = 1.0

    def __post_init__(self):
        if self.late_fusion not in ("mean", "learned"):
            raise ValidationError("late_fusion must be 'mean' or 'learned'")
        if self.heatmap_size % 2 != 0:
            raise ValidationError("heatmap_size must be even")
        if self.fusion_crop % 8 != 0:
            raise ValidationError("fusion_crop must be divisible by 8")


def _conv_init(rng, co, ci, kh, kw):
    std = np.sqrt(2.0 / (ci * kh * kw))
    return rng.normal(0.0, std, (co, ci, kh, kw))


def _linear_init(rng, fan_in, fan_out):
    std = np.sqrt(2.0 / fan_in)
    return rng.normal(0.0, std, (fan_in, fan_out))


def _param(data) -> Tensor:
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)


class Model:
    """Parameter container plus the forward passes."""

    def __init__(self, config: ModelConfig, params: dict[str, Tensor]):
        self.config = config
        self.params = params

    # -- construction --------------------------------------------------

    @classmethod
    def init(cls, config: ModelConfig, seed: int) -> "Model":
        rng = np.random.default_rng((seed, 0xE401))
        c = config

        p: dict[str, Tensor] = {}

        def conv(name, co, ci, k, zero=False, norm=False):
            w = np.zeros((co, ci, k, k)) if zero else _conv_init(rng, co, ci, k, k)
            p[f"{name}.w"] = _param(w)
            p[f"{name}.b"] = _param(np.zeros(co))
            if norm:
                p[f"{name}.gn.g"] = _param(np.ones(co))
                p[f"{name}.gn.b"] = _param(np.zeros(co))

        def linear(name, fi, fo, zero=False, norm=False):
            w = np.zeros((fi, fo)) if zero else _linear_init(rng, fi, fo)
            p[f"{name}.w"] = _param(w)
            p[f"{name}.b"] = _param(np.zeros(fo))
            if norm:
                p[f"{name}.gn.g"] = _param(np.ones(fo))
                p[f"{name}.gn.b"] = _param(np.zeros(fo))

        s1, s2, s3 = c.stage_channels
        conv("stem", c.stem_channels, 3, 3, norm=True)
        conv("stage1.a", s1, c.stem_channels, 3, norm=True)
        conv("stage1.b", s1, s1, 3, norm=True)
        conv("stage2.a", s2, s1, 3, norm=True)
        conv("stage2.b", s2, s2, 3, norm=True)
        conv("stage3.a", s3, s2, 3, norm=True)
        conv("stage3.b", s3, s3, 3, norm=True)
        conv("lat4", c.pyramid_dim, s1, 1)
        conv("lat8", c.pyramid_dim, s2, 1)
        conv("lat16", c.pyramid_dim, s3, 1)

        linear("hfv", c.pyramid_dim * c.roi_size * c.roi_size, c.hfv_dim,
               norm=True)
        for head in ("side", "state", "glove"):
            linear(f"{head}.fc1", c.hfv_dim, c.head_hidden)
            linear(f"{head}.fc2", c.head_hidden, 2, zero=True)
        linear("offset.fc1", c.hfv_dim, c.head_hidden)
        linear("offset.fc2", c.head_hidden, 3, zero=True)
        linear("objcat.fc1", c.hfv_dim, c.head_hidden)
        linear("objcat.fc2", c.head_hidden, c.n_categories, zero=True)

        conv("kpt.a", c.pyramid_dim, c.pyramid_dim, 3, norm=True)
        conv("kpt.out", 21, c.pyramid_dim, 3, zero=True)
        conv("depth.a", 32, c.pyramid_dim, 3, norm=True)
        conv("depth.out", 1, 32, 3, zero=True)

        conv("det.a", c.pyramid_dim, c.pyramid_dim, 3, norm=True)
        conv("det.cls", 3, c.pyramid_dim, 1, zero=True)
        conv("det.box", 4, c.pyramid_dim, 1, zero=True)

        f1, f2, f3 = c.fusion_channels
        conv("ef.a", f1, FUSION_CHANNELS, 3, norm=True)
        conv("ef.b", f2, f1, 3, norm=True)
        conv("ef.c", f3, f2, 3, norm=True)
        linear("ef.fc", f3, 2, zero=True)
        p["fusion.logit"] = _param(np.zeros(1))
        return cls(config, p)

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def _c(self, name, x, stride=1, pad=1):
        return conv2d(x, self.params[f"{name}.w"], self.params[f"{name}.b"],
                      stride, pad)

    def _fc(self, name, x):
        return x.matmul(self.params[f"{name}.w"]) + self.params[f"{name}.b"]

    def _gn(self, name, x):
        g = self.params[f"{name}.gn.g"]
        return x.group_norm(g, self.params[f"{name}.gn.b"],
                            min(8, g.shape[0]))

    # -- forward passes --------------------------------------------------

    def extract_features(self, images: Tensor) -> dict[str, Tensor]:
        """(N, 3, H, W) with H, W divisible by 16 -> pyramid P4/P8/P16."""
        h, w = images.shape[2], images.shape[3]
        if h % 16 or w % 16:
            raise ValidationError(
                f"input dimensions must be divisible by 16, got {h}x{w}")
        x = self._gn("stem", self._c("stem", images, stride=2)).relu()
        c4 = self._gn("stage1.a", self._c("stage1.a", x, stride=2)).relu()
        c4 = self._gn("stage1.b", self._c("stage1.b", c4)).relu()
        c8 = self._gn("stage2.a", self._c("stage2.a", c4, stride=2)).relu()
        c8 = self._gn("stage2.b", self._c("stage2.b", c8)).relu()
        c16 = self._gn("stage3.a", self._c("stage3.a", c8, stride=2)).relu()
        c16 = self._gn("stage3.b", self._c("stage3.b", c16)).relu()
        p16 = self._c("lat16", c16, pad=0)
        p8 = self._c("lat8", c8, pad=0) + upsample2x(p16)
        p4 = self._c("lat4", c4, pad=0) + upsample2x(p8)
        return {"p4": p4, "p8": p8, "p16": p16}

    @staticmethod
    def _rois(boxes: np.ndarray, stride: float) -> np.ndarray:
        rois = np.asarray(boxes, dtype=np.float64).copy()
        rois[:, 1:] /= stride
        return rois

    def pool_hand_features(self, feats: dict[str, Tensor],
                           boxes: np.ndarray) -> Tensor:
        """RoI-pool stride-8 features into (R, hfv_dim) vectors.

        `boxes` rows are [batch, x0, y0, x1, y1] in image coordinates.
        """
        boxes = np.asarray(boxes, dtype=np.float64)
        areas = (boxes[:, 3] - boxes[:, 1]) * (boxes[:, 4] - boxes[:, 2])
        if (areas < 1.0).any():
            raise ValidationError("degenerate RoI: box area below 1 px")
        pooled = roi_align(feats["p8"], self._rois(boxes, 8.0),
                           self.config.roi_size)
        flat = pooled.reshape(boxes.shape[0], -1)
        return self._gn("hfv", self._fc("hfv", flat)).relu()

    def predict_attributes(self, hfv: Tensor) -> dict[str, Tensor]:
        out = {}
        for head in ("side", "state", "glove", "offset"):
            h = self._fc(f"{head}.fc1", hfv).relu()
            out[head] = self._fc(f"{head}.fc2", h)
        return out

    def predict_object_categories(self, hfv: Tensor) -> Tensor:
        return self._fc("objcat.fc2", self._fc("objcat.fc1", hfv).relu())

    def predict_keypoints(self, feats: dict[str, Tensor],
                          boxes: np.ndarray) -> Tensor:
        """Per-box normalized 21-channel heatmaps (R, 21, K, K)."""
        k = self.config.heatmap_size
        crop = roi_align(feats["p4"], self._rois(boxes, 4.0), k // 2)
        x = self._gn("kpt.a", self._c("kpt.a", crop)).relu()
        x = upsample2x(x)
        logits = self._c("kpt.out", x)
        r = logits.shape[0]
        probs = softmax_rows(logits.reshape(r * 21, k * k))
        return probs.reshape(r, 21, k, k)

    def predict_depth(self, feats: dict[str, Tensor]) -> Tensor:
        """Dense inverse depth in [0, 1] at input resolution (N,1,H,W)."""
        x = self._gn("depth.a", self._c("depth.a", feats["p4"])).relu()
        x = self._c("depth.out", x).sigmoid()
        return upsample2x(upsample2x(x))

    def detector_head(self, feats: dict[str, Tensor]):
        """Dense per-cell logits on the stride-8 map.

        Returns (cls_logits (N,3,h,w): background/hand/object,
        box_reg (N,4,h,w): left/top/right/bottom extents in stride units).
        """
        x = self._gn("det.a", self._c("det.a", feats["p8"])).relu()
        return self._c("det.cls", x, pad=0), self._c("det.box", x, pad=0)

    def early_fusion(self, fusion_input: np.ndarray) -> Tensor:
        """(R, 26, C, C) stacked modality crops -> multimodal state logits."""
        if fusion_input.shape[1] != FUSION_CHANNELS:
            raise ValidationError(
                f"early fusion expects {FUSION_CHANNELS} channels, "
                f"got {fusion_input.shape[1]}")
        x = Tensor(fusion_input)
        x = self._gn("ef.a", self._c("ef.a", x, stride=2)).relu()
        x = self._gn("ef.b", self._c("ef.b", x, stride=2)).relu()
        x = self._gn("ef.c", self._c("ef.c", x, stride=2)).relu()
        return self._fc("ef.fc", x.mean_hw())

    def late_fusion(self, appearance_logits: Tensor,
                    multimodal_logits: Tensor) -> Tensor:
        """Fused P(contact) per hand, shape (R,)."""
        pa = softmax_rows(appearance_logits)
        pm = softmax_rows(multimodal_logits)
        r = appearance_logits.shape[0]
        col = np.ones((2, 1))
        col[0, 0] = 0.0
        pick = Tensor(col)
        pa1 = pa.matmul(pick).reshape(r)
        pm1 = pm.matmul(pick).reshape(r)
        if self.config.late_fusion == "learned":
            w = self.params["fusion.logit"].sigmoid().reshape(())
            return pa1 * w + pm1 * (1.0 - w)
        return (pa1 + pm1) * 0.5


# ---------------------------------------------------------------------------
# crop geometry shared by training and inference


def dilated_crop_box(bbox: BBox, dilation: float, width: int,
                     height: int) -> BBox:
    return bbox.dilated(dilation).clamped(width, height)


def decode_keypoints(heatmaps: np.ndarray, crop_box: BBox) -> np.ndarray:
    """Spatial-argmax decode: (21, K, K) -> (21, 2) image coordinates.

    A spike at cell (i, j) maps to that cell's center inside `crop_box`.
    """
    k = heatmaps.shape[-1]
    flat = heatmaps.reshape(21, -1).argmax(axis=1)
    iy, ix = np.divmod(flat, k)
    xs = crop_box.x_min + (ix + 0.5) / k * crop_box.width
    ys = crop_box.y_min + (iy + 0.5) / k * crop_box.height
    return np.stack([xs, ys], axis=1)


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample of (H, W) or (H, W, C) with align-corners=False."""
    h, w = img.shape[:2]
    ys = (np.arange(out_h) + 0.5) * h / out_h - 0.5
    xs = (np.arange(out_w) + 0.5) * w / out_w - 0.5
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = np.clip(ys - y0, 0.0, 1.0)[:, None]
    fx = np.clip(xs - x0, 0.0, 1.0)[None, :]
    if img.ndim == 3:
        fy = fy[:, :, None]
        fx = fx[:, :, None]
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def crop_resize(plane: np.ndarray, box: BBox, out: int) -> np.ndarray:
    """Crop `box` (pixel-snapped) from a plane and resize to out x out."""
    h, w = plane.shape[:2]
    x0 = int(np.floor(box.x_min))
    y0 = int(np.floor(box.y_min))
    x1 = max(int(np.ceil(box.x_max)), x0 + 1)
    y1 = max(int(np.ceil(box.y_max)), y0 + 1)
    x0, y0 = max(x0, 0), max(y0, 0)
    x1, y1 = min(x1, w), min(y1, h)
    return bilinear_resize(plane[y0:y1, x0:x1], out, out)


def build_fusion_input(rgb: np.ndarray, mask: np.ndarray, depth: np.ndarray,
                       heatmaps: np.ndarray, box: BBox, crop: int) -> np.ndarray:
    """Stack the four per-hand modalities into (26, C, C) in [0, 1].

    `rgb` is (H, W, 3) in [0, 1]; `mask` a binary plane for this hand;
    `depth` the (H, W) inverse-depth plane; `heatmaps` (21, K, K) already
    expressed in the same crop frame.
    """
    c = crop
    out = np.empty((FUSION_CHANNELS, c, c), dtype=np.float64)
    out[0:3] = crop_resize(rgb, box, c).transpose(2, 0, 1)
    out[3] = crop_resize(mask.astype(np.float64), box, c)
    out[4] = crop_resize(depth, box, c)
    peak = heatmaps.max(axis=(1, 2), keepdims=True)
    norm = heatmaps / np.maximum(peak, 1e-12)
    for j in range(21):
        out[5 + j] = bilinear_resize(norm[j], c, c)
    return out


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(model: Model, path) -> None:
    arrays = {f"param:{k}": v.data for k, v in model.params.items()}
    meta = json.dumps({"version": CHECKPOINT_VERSION,
                       "config": asdict(model.config)})
    try:
        np.savez(path, meta=np.frombuffer(meta.encode(), dtype=np.uint8),
                 **arrays)
    except OSError as exc:
        raise IOFailure(f"cannot write checkpoint {path}: {exc}")


def load_checkpoint(path) -> Model:
    try:
        with np.load(path) as z:
            meta = json.loads(bytes(z["meta"]).decode())
            if meta.get("version") != CHECKPOINT_VERSION:
                raise ValidationError(
                    f"unsupported checkpoint version {meta.get('version')}")
            cfg_raw = meta["config"]
            for key in ("stage_channels", "fusion_channels"):
                cfg_raw[key] = tuple(cfg_raw[key])
            config = ModelConfig(**cfg_raw)
            params = {k[len("param:"):]: _param(z[k])
                      for k in z.files if k.startswith("param:")}
    except OSError as exc:
        raise IOFailure(f"cannot read checkpoint {path}: {exc}")
    return Model(config, params)
