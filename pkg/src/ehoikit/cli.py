"""Command-line pipelines: generation, validation, training, evaluation.

One JSON config file plus ``--dot.path value`` overrides drives every
command. Each command takes an exclusive lock on its output directory,
writes artifacts under fixed names, and finishes with a ``manifest.json``
(config echo, seed, backend, sha256 of every artifact) so any run can be
reproduced exactly. Setting ``EHOIKIT_DETERMINISTIC=1`` drops wall-clock
fields from the manifest, making re-runs byte-identical end to end.

Exit codes: 0 success, 1 validation/config error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import kernels
from .annotations import (
    ContactState,
    Dataset,
    compute_stats,
    parse_dataset,
    read_rgb_png,
    stats_table,
)
from .augval import SsimParams, filter_dataset, mock_augment
from .errors import IOFailure, ValidationError
from .matching import match, quadruples_to_json
from .metrics import (
    EvalConfig,
    HandPred,
    ImagePredictions,
    PairPred,
    compound_ap,
    evaluate,
    pr_points,
    run_output_to_json,
)
from .net.data import load_scene, load_split
from .net.infer import infer
from .net.model import Model, ModelConfig, load_checkpoint, save_checkpoint
from .net.train import REGIMES, TrainConfig, quick_eval, train
from .synthgen import SceneConfig, generate_dataset

LOCK_NAME = ".ehoikit.lock"
INFER_MODES = ("gt_proposals", "detector")


def deterministic_mode() -> bool:
    return os.environ.get("EHOIKIT_DETERMINISTIC", "").lower() in (
        "1", "true", "yes")


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    """Everything one command needs; the seed feeds scene generation and
    training (the `scene.seed`/`train.seed` fields mirror it)."""

    seed: int = 0
    out_dir: str = "run"
    dataset_dir: str = ""        # primary dataset root (synth-gen output)
    real_dataset_dir: str = ""   # fine-tune dataset root for *_real regimes
    checkpoint: str = ""         # model weights for eval/infer/bench
    split: str = "test"          # split read by stats/eval/infer/bench
    regime: str = "synth_only"
    real_fraction: float = 1.0
    infer_mode: str = "gt_proposals"
    n_train: int = 200
    n_val: int = 50
    n_test: int = 50
    augval_split: str = "train"
    augval_threshold: float = 0.95
    augval_corrupt_fraction: float = 0.25
    bench_warmup: int = 5
    bench_frames: int = 30
    plots: bool = True
    compare_runs: tuple[str, ...] = ()   # metrics.json paths to chart against
    scene: SceneConfig = field(default_factory=SceneConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self):
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) \
                or not 0 <= self.seed < 2 ** 64:
            raise ValidationError(
                f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if not self.out_dir:
            raise ValidationError("out_dir must be a non-empty path")
        if self.regime not in REGIMES:
            raise ValidationError(
                f"regime must be one of {REGIMES}, got {self.regime!r}")
        if not 0.0 < self.real_fraction <= 1.0:
            raise ValidationError("real_fraction must lie in (0, 1], got "
                                  f"{self.real_fraction}")
        if self.infer_mode not in INFER_MODES:
            raise ValidationError(
                f"infer_mode must be one of {INFER_MODES}, got "
                f"{self.infer_mode!r}")
        for name in ("n_train", "n_val", "n_test"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")
        if not 0.0 < self.augval_threshold <= 1.0:
            raise ValidationError("augval_threshold must lie in (0, 1]")
        if not 0.0 <= self.augval_corrupt_fraction <= 1.0:
            raise ValidationError("augval_corrupt_fraction must lie in [0, 1]")
        if self.bench_warmup < 0 or self.bench_frames < 1:
            raise ValidationError(
                "bench_warmup must be >= 0 and bench_frames >= 1")


_SECTIONS = (("scene", SceneConfig), ("model", ModelConfig),
             ("train", TrainConfig), ("eval", EvalConfig))


def _type_name(f) -> str:
    return f.type if isinstance(f.type, str) else getattr(
        f.type, "__name__", "")


def _coerce(value, tname: str, where: str):
    if tname == "bool":
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in (
                "true", "false", "1", "0", "yes", "no"):
            return value.lower() in ("true", "1", "yes")
        raise ValidationError(f"{where}: expected a boolean, got {value!r}")
    if tname == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValidationError(f"{where}: expected an integer, got "
                                  f"{value!r}")
        return value
    if tname == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if tname == "str":
        if not isinstance(value, str):
            raise ValidationError(f"{where}: expected a string, got {value!r}")
        return value
    if tname.startswith("tuple"):
        if not isinstance(value, (list, tuple)):
            raise ValidationError(f"{where}: expected an array, got {value!r}")
        return tuple(value)
    return value


def _build_section(cls, raw, where: str):
    if isinstance(raw, cls):
        return raw
    if not isinstance(raw, dict):
        raise ValidationError(f"{where}: expected an object, got "
                              f"{type(raw).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ValidationError(f"{where}: unknown keys {unknown}")
    kwargs = {}
    for name, value in raw.items():
        kwargs[name] = _coerce(value, _type_name(known[name]),
                               f"{where}.{name}")
    try:
        return cls(**kwargs)
    except ValidationError as exc:
        raise ValidationError(f"{where}: {exc}")


def build_run_config(raw: dict) -> RunConfig:
    """Typed RunConfig from a plain JSON-style dict, with field-level
    error messages. The run seed overrides the section seeds."""
    if not isinstance(raw, dict):
        raise ValidationError("config: expected a JSON object at top level")
    flat = dict(raw)
    parts = {name: _build_section(cls, flat.pop(name, {}), f"config.{name}")
             for name, cls in _SECTIONS}
    cfg = _build_section(RunConfig, {**flat, **parts}, "config")
    return replace(
        cfg,
        scene=replace(cfg.scene, seed=cfg.seed),
        train=replace(cfg.train, seed=cfg.seed,
                      real_fraction=cfg.real_fraction))


def load_config_file(path: str | Path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"config file does not resolve: {p}")
    try:
        raw = json.loads(p.read_text())
    except OSError as exc:
        raise IOFailure(f"cannot read config {p}: {exc}")
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed JSON in config {p}: {exc}")
    if not isinstance(raw, dict):
        raise ValidationError(f"config {p}: expected a JSON object")
    return raw


def apply_overrides(raw: dict, tokens: list[str]) -> None:
    """Apply ``--a.b.c value`` pairs onto the raw config dict in place.

    Values parse as JSON when possible, else as bare strings."""
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--"):
            raise ValidationError(f"expected --key, got {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, text = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(tokens):
                raise ValidationError(f"override --{key} is missing a value")
            text = tokens[i + 1]
            i += 2
        if not key:
            raise ValidationError(f"empty override key in {tok!r}")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        node = raw
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ValidationError(
                    f"override {key}: {part} is not a config section")
        node[parts[-1]] = value


# ---------------------------------------------------------------------------
# run directory, lock file, manifest
# ---------------------------------------------------------------------------

@contextmanager
def locked_out_dir(path: str | Path):
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IOFailure(f"cannot create output directory {out}: {exc}")
    lock = out / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise IOFailure(f"output directory {out} is locked by another run "
                        f"(stale? remove {lock})")
    except OSError as exc:
        raise IOFailure(f"cannot lock output directory {out}: {exc}")
    try:
        os.write(fd, f"{os.getpid()}\n".encode())
        os.close(fd)
        yield out
    finally:
        lock.unlink(missing_ok=True)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Path, command: str, cfg: RunConfig,
                   notes: dict | None = None,
                   started_at: float | None = None) -> dict:
    artifacts = {}
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name not in ("manifest.json", LOCK_NAME):
            artifacts[p.relative_to(out).as_posix()] = _sha256(p)
    doc = {
        "command": command,
        "seed": cfg.seed,
        "backend": kernels.BACKEND,
        "deterministic": deterministic_mode(),
        "config": asdict(cfg),
        "artifacts": artifacts,
    }
    if notes:
        doc["notes"] = notes
    if not deterministic_mode() and started_at is not None:
        doc["created_at"] = datetime.now(timezone.utc).isoformat()
        doc["wall_time_s"] = round(time.time() - started_at, 3)
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    try:
        (out / "manifest.json").write_text(text)
    except OSError as exc:
        raise IOFailure(f"cannot write manifest under {out}: {exc}")
    return doc


def _write_text(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}")


def _require_dir(path: str, name: str) -> Path:
    if not path:
        raise ValidationError(f"{name} is required for this command")
    p = Path(path)
    if not p.is_dir():
        raise ValidationError(f"{name} does not resolve: {p}")
    return p


def _require_file(path: str, name: str) -> Path:
    if not path:
        raise ValidationError(f"{name} is required for this command")
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"{name} does not resolve: {p}")
    return p


# ---------------------------------------------------------------------------
# plots (lazy matplotlib import; files only, no UI)
# ---------------------------------------------------------------------------

def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _plot_loss(records: list[dict], path: Path) -> None:
    plt = _pyplot()
    epochs = [r["epoch"] for r in records]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    keys = sorted({k for r in records for k in r["loss"]})
    for key in keys:
        ax.plot(epochs, [r["loss"].get(key, 0.0) for r in records],
                label=key, linewidth=1.0)
    ax.plot(epochs, [sum(r["loss"].values()) for r in records],
            label="total", color="black", linewidth=2.0)
    for i in range(1, len(records)):
        if records[i]["phase"] != records[i - 1]["phase"]:
            ax.axvline(epochs[i] - 0.5, color="gray", linestyle=":")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _plot_pr_curves(run_output, ground_truth, config: EvalConfig,
                    path: Path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 5))
    for label, attrs in (("hand", ()), ("hand+side", ("side",)),
                         ("hand+glove", ("glove",)),
                         ("hand+state", ("state",))):
        recall, precision = pr_points(run_output, ground_truth, attrs, config)
        ax.plot(recall, precision, label=label, linewidth=1.2)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.05)
    ax.legend(loc="lower left", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _plot_run_comparison(rows: list[tuple[str, dict]], path: Path) -> None:
    """Grouped bars: one group per metric, one bar per run."""
    plt = _pyplot()
    names = ("ap_hand", "ap_hand_side", "ap_hand_glove", "ap_hand_state",
             "map_hand_obj", "map_hand_all")
    fig, ax = plt.subplots(figsize=(8, 4.5))
    x = np.arange(len(names))
    width = 0.8 / max(len(rows), 1)
    for i, (label, metrics) in enumerate(rows):
        vals = [float(metrics.get(n, 0.0)) for n in names]
        ax.bar(x + i * width, vals, width, label=label)
    ax.set_xticks(x + 0.4 - width / 2)
    ax.set_xticklabels(names, rotation=20, fontsize=8)
    ax.set_ylabel("AP")
    ax.set_ylim(0, 105)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# ---------------------------------------------------------------------------
# shared inference plumbing
# ---------------------------------------------------------------------------

def _load_model(cfg: RunConfig) -> Model:
    if cfg.checkpoint:
        return load_checkpoint(_require_file(cfg.checkpoint, "checkpoint"))
    return Model.init(cfg.model, cfg.seed)


def _eval_subset(cfg: RunConfig) -> tuple[Dataset, Path]:
    root = _require_dir(cfg.dataset_dir, "dataset_dir")
    ds = parse_dataset(root)
    sub = ds.subset(cfg.split)
    if not sub.records:
        raise ValidationError(
            f"split {cfg.split!r} has no records under {root} "
            f"(available: {ds.split_names()})")
    return sub, root


def _infer_one(model: Model, rec, sample, mode: str):
    """Detections and quadruples for one image; hands stay aligned with
    the returned quadruple list."""
    dets = infer(sample.rgb, model, mode, record=rec,
                 instance_mask=sample.mask if mode == "gt_proposals" else None)
    hands = [d for d in dets if d.kind == "hand"]
    objects = [d for d in dets if d.kind == "object"]
    quads = match(hands, objects, rec.width, rec.height)
    return dets, hands, objects, quads


def _certainty(p: float) -> float:
    return max(p, 1.0 - p)


def _image_predictions(image_id: str, hands, quads,
                       appearance_rank: bool = False) -> ImagePredictions:
    """Metrics-layer predictions from one image's detections.

    appearance_rank=True swaps the contact estimate (state and, in
    GT-proposal runs, the certainty used as confidence) to the
    appearance-only head, for fused-vs-appearance comparisons."""
    hand_preds = []
    for d, q in zip(hands, quads):
        state = q.contact
        conf = d.confidence
        if appearance_rank:
            p = d.appearance_contact_prob
            state = ContactState.CONTACT if p >= 0.5 \
                else ContactState.NO_CONTACT
            if abs(conf - _certainty(d.contact_prob)) < 1e-12:
                conf = _certainty(p)   # GT-proposal confidence convention
        hand_preds.append(HandPred(d.bbox, conf, d.side, state, d.glove))
    pairs = []
    for hp, q in zip(hand_preds, quads):
        if hp.state == ContactState.CONTACT and q.active_object is not None:
            pairs.append(PairPred(hp, q.active_object.bbox,
                                  q.active_object.category_id))
    return ImagePredictions(image_id, hand_preds, pairs)


def _det_row(d) -> dict:
    row = {
        "kind": d.kind,
        "bbox": [d.bbox.x_min, d.bbox.y_min, d.bbox.x_max, d.bbox.y_max],
        "confidence": d.confidence,
    }
    if d.kind == "object":
        row["category_id"] = d.category_id
    else:
        row.update(
            side=d.side.value, state=d.contact.value, glove=d.glove.value,
            contact_prob=d.contact_prob,
            appearance_contact_prob=d.appearance_contact_prob,
            offset=[d.offset.v_x, d.offset.v_y, d.offset.m])
    return row


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth_gen(cfg: RunConfig, out: Path) -> dict:
    if cfg.n_train + cfg.n_val + cfg.n_test < 1:
        raise ValidationError("synth-gen needs at least one scene")
    ds = generate_dataset(cfg.scene, cfg.n_train, cfg.n_val, cfg.n_test,
                          out / "dataset")
    stats = compute_stats(ds, per_split=True)
    return {"dataset_dir": str(out / "dataset"),
            "stats": {k: asdict(v) for k, v in stats.items()}}


def cmd_stats(cfg: RunConfig, out: Path) -> dict:
    root = _require_dir(cfg.dataset_dir, "dataset_dir")
    ds = parse_dataset(root)
    stats = compute_stats(ds, per_split=True)
    doc = {k: asdict(v) for k, v in stats.items()}
    _write_text(out / "stats.json",
                json.dumps(doc, indent=2, sort_keys=True) + "\n")
    table = stats_table(stats)
    _write_text(out / "stats.txt", table + "\n")
    print(table)
    return {"n_images": stats["total"].n_images}


def cmd_aug_validate(cfg: RunConfig, out: Path) -> dict:
    root = _require_dir(cfg.dataset_dir, "dataset_dir")
    sub = parse_dataset(root).subset(cfg.augval_split)
    if not sub.records:
        raise ValidationError(f"split {cfg.augval_split!r} has no records "
                              f"under {root}")
    pairs = []
    corrupted = []
    for i, rec in enumerate(sub.records):
        rgb = read_rgb_png(root / rec.rgb_path)   # 8-bit, the SSIM domain
        rng = np.random.default_rng((cfg.seed, 0xA06, i))
        corrupt = bool(rng.random() < cfg.augval_corrupt_fraction)
        boxes = [h.bbox for h in rec.hands]
        augmented = mock_augment(rgb, boxes, corrupt_background=corrupt,
                                 rng=rng)
        pairs.append((rec.image_id, rgb, augmented, boxes))
        if corrupt:
            corrupted.append(rec.image_id)
    kept, report = filter_dataset(pairs, cfg.augval_threshold, SsimParams())
    report.write(out / "augval_report.json")
    _write_text(out / "kept_ids.json",
                json.dumps(kept, separators=(",", ":")) + "\n")
    return {"n_pairs": len(pairs), "n_kept": len(kept),
            "n_corrupted": len(corrupted),
            "keep_rate": round(report.keep_rate, 4)}


def cmd_train(cfg: RunConfig, out: Path) -> dict:
    synth = real = None
    val = None
    if cfg.regime in ("synth_only", "synth_plus_real"):
        root = _require_dir(cfg.dataset_dir, "dataset_dir")
        ds = parse_dataset(root)
        synth = load_split(ds, root, "train")
        val = load_split(ds, root, "val") or None
    if cfg.regime in ("real_only", "synth_plus_real"):
        root = _require_dir(cfg.real_dataset_dir, "real_dataset_dir")
        ds = parse_dataset(root)
        real = load_split(ds, root, "train")
        val = load_split(ds, root, "val") or val
    model, records = train(synth, real, cfg.regime, cfg.train, cfg.model,
                           val=val, log_path=out / "train_log.jsonl")
    save_checkpoint(model, out / "model.npz")
    notes = {"epochs": len(records), "regime": cfg.regime,
             "n_synth": len(synth or ()), "n_real": len(real or ())}
    if val:
        notes["final_val"] = {k: round(v, 4)
                              for k, v in quick_eval(model, val).items()}
    if cfg.plots and records:
        _plot_loss(records, out / "train_loss.png")
    return notes


def cmd_eval(cfg: RunConfig, out: Path) -> dict:
    sub, root = _eval_subset(cfg)
    model = _load_model(cfg)
    run_output = []
    run_appearance = []
    for rec in sub.records:
        sample = load_scene(rec, root)
        _, hands, _, quads = _infer_one(model, rec, sample, cfg.infer_mode)
        run_output.append(_image_predictions(rec.image_id, hands, quads))
        run_appearance.append(
            _image_predictions(rec.image_id, hands, quads,
                               appearance_rank=True))
    report = evaluate(run_output, sub, cfg.eval)
    doc = report.as_dict()
    doc["ap_hand_state_appearance"] = compound_ap(
        run_appearance, sub.records, ("state",), cfg.eval)
    _write_text(out / "metrics.json",
                json.dumps(doc, indent=2, sort_keys=True) + "\n")
    _write_text(out / "metrics.txt", report.table())
    _write_text(out / "run_output.json", run_output_to_json(run_output))
    if cfg.plots:
        _plot_pr_curves(run_output, sub, cfg.eval, out / "pr_curves.png")
        rows = [(out.name, doc)]
        for other in cfg.compare_runs:
            p = _require_file(other, "compare_runs entry")
            try:
                rows.append((p.parent.name, json.loads(p.read_text())))
            except OSError as exc:
                raise IOFailure(f"cannot read {p}: {exc}")
            except json.JSONDecodeError as exc:
                raise ValidationError(f"malformed metrics file {p}: {exc}")
        if len(rows) > 1:
            _plot_run_comparison(rows, out / "run_comparison.png")
    print(report.table())
    return {"metrics": {k: v for k, v in doc.items()
                        if isinstance(v, (int, float))},
            "n_images": len(sub.records)}


def cmd_infer(cfg: RunConfig, out: Path) -> dict:
    sub, root = _eval_subset(cfg)
    model = _load_model(cfg)
    n_dets = 0
    try:
        with open(out / "detections.jsonl", "w") as det_f, \
                open(out / "quadruples.jsonl", "w") as quad_f:
            for rec in sub.records:
                sample = load_scene(rec, root)
                dets, _, _, quads = _infer_one(model, rec, sample,
                                               cfg.infer_mode)
                n_dets += len(dets)
                det_f.write(json.dumps(
                    {"image_id": rec.image_id,
                     "detections": [_det_row(d) for d in dets]},
                    separators=(",", ":")) + "\n")
                quad_f.write(json.dumps(
                    {"image_id": rec.image_id,
                     "quadruples": json.loads(quadruples_to_json(quads))},
                    separators=(",", ":")) + "\n")
    except OSError as exc:
        raise IOFailure(f"cannot write inference outputs under {out}: {exc}")
    return {"n_images": len(sub.records), "n_detections": n_dets,
            "mode": cfg.infer_mode}


def cmd_bench(cfg: RunConfig, out: Path) -> dict:
    sub, root = _eval_subset(cfg)
    model = _load_model(cfg)
    samples = [load_scene(r, root) for r in sub.records]
    times_ms = []
    total = cfg.bench_warmup + cfg.bench_frames
    for i in range(total):
        rec = sub.records[i % len(sub.records)]
        sample = samples[i % len(samples)]
        t0 = time.perf_counter()
        _infer_one(model, rec, sample, cfg.infer_mode)
        if i >= cfg.bench_warmup:
            times_ms.append(1000.0 * (time.perf_counter() - t0))
    arr = np.asarray(times_ms)
    mean_ms = float(arr.mean())
    doc = {
        "mode": cfg.infer_mode,
        "backend": kernels.BACKEND,
        "image_size": [sub.records[0].width, sub.records[0].height],
        "n_frames": cfg.bench_frames,
        "warmup_frames": cfg.bench_warmup,
        "mean_ms": round(mean_ms, 3),
        "p50_ms": round(float(np.percentile(arr, 50)), 3),
        "p90_ms": round(float(np.percentile(arr, 90)), 3),
        "p99_ms": round(float(np.percentile(arr, 99)), 3),
        "fps": round(1000.0 / mean_ms, 3),
    }
    _write_text(out / "latency.json",
                json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(f"{doc['mean_ms']} ms/frame over {cfg.bench_frames} frames "
          f"({doc['fps']} FPS, backend={doc['backend']})")
    return {"mean_ms": doc["mean_ms"], "fps": doc["fps"]}


COMMANDS = {
    "synth-gen": cmd_synth_gen,
    "aug-validate": cmd_aug_validate,
    "stats": cmd_stats,
    "train": cmd_train,
    "eval": cmd_eval,
    "infer": cmd_infer,
    "bench": cmd_bench,
}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):   # usage problems are validation errors
        raise ValidationError(message)


def main(argv: list[str] | None = None) -> int:
    parser = _ArgumentParser(
        prog="ehoikit",
        description="Synthetic EHOI pipelines: generate, validate, train, "
                    "evaluate, benchmark.",
        epilog="Overrides: any config field as --dot.path value, e.g. "
               "--train.lr 0.01 --scene.width 128")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", default=None,
                        help="JSON config file (see RunConfig fields)")
    try:
        args, rest = parser.parse_known_args(argv)
        raw = load_config_file(args.config) if args.config else {}
        apply_overrides(raw, rest)
        cfg = build_run_config(raw)
        started = time.time()
        with locked_out_dir(cfg.out_dir) as out:
            notes = COMMANDS[args.command](cfg, out)
            write_manifest(out, args.command, cfg, notes, started)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except IOFailure as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
