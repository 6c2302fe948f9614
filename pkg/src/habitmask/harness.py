"""Training, evaluation, splitting and dataset statistics.

The ablation ladder (skeleton-only, RGB-only, fused, fused+mask) is driven
through TrainConfig variants. Mask-enabled variants train in two stages:
the skeleton channel first, then the RGB side on clips masked with the
frozen channel's stop-gradient attention weights.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .action_mask import MaskConfig, mask_clip_arrays
from .checkpoint import load_checkpoint, save_checkpoint
from .datamodel import LabelSpace, parse_annotation, read_clip
from .errors import ContractError, InvariantError, SplitError
from .fusion import FeatureFusion, FusionConfig, score_fuse
from .rgb_net import RgbNet
from .skeleton_net import SkeletonNet

VARIANTS = ("skel", "rgb", "fuse-feature", "fuse-score")


@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple[float, float, float] = (0.7, 0.2, 0.1)  # train, test, val
    seed: int = 0

    def __post_init__(self):
        if abs(sum(self.ratios) - 1.0) > 1e-9 or any(r < 0 for r in self.ratios):
            raise ContractError(f"split ratios {self.ratios} must be nonnegative and sum to 1")


def split(manifest: dict, spec: SplitSpec) -> tuple[dict, dict, dict]:
    """Stratified, deterministic partition into train/test/val manifests.

    Per category the three counts follow largest-remainder apportionment,
    so each deviates from the exact ratio by less than one clip.
    """
    by_cat: dict = {}
    for entry in manifest["clips"]:
        by_cat.setdefault(entry["label"], []).append(entry)
    parts: tuple[list, list, list] = ([], [], [])
    for idx, label in enumerate(sorted(by_cat)):
        entries = by_cat[label]
        if len(entries) < 3:
            raise SplitError(f"category {label!r} has only {len(entries)} clips (need >= 3)")
        rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(idx,)))
        order = rng.permutation(len(entries))
        exact = [r * len(entries) for r in spec.ratios]
        counts = [int(np.floor(e)) for e in exact]
        rema = [e - c for e, c in zip(exact, counts)]
        while sum(counts) < len(entries):
            best = max(range(3), key=lambda i: (rema[i], -i))
            counts[best] += 1
            rema[best] = -1.0
        start = 0
        for part, n in zip(parts, counts):
            part.extend(entries[i] for i in order[start : start + n])
            start += n
    base = {k: v for k, v in manifest.items() if k != "clips"}
    return tuple({**base, "clips": part} for part in parts)


def load_manifest(path) -> dict:
    """Read a manifest file and absolutize its clip paths."""
    path = Path(path)
    manifest = json.loads(path.read_text(encoding="utf-8"))
    base = path.parent
    for entry in manifest["clips"]:
        entry["path"] = str((base / entry["path"]).resolve())
        entry["annotation_path"] = str((base / entry["annotation_path"]).resolve())
    return manifest


def save_manifest(manifest: dict, path) -> None:
    Path(path).write_text(json.dumps(manifest, indent=1), encoding="utf-8")


def label_space_for(manifest: dict) -> LabelSpace:
    labels = sorted({e["label"] for e in manifest["clips"]})
    default = LabelSpace()
    if set(labels) <= set(default.categories):
        return default
    return LabelSpace(categories=tuple(labels), emotion_attrs={})


COORD_SCALE = 4.0  # gain applied to centered joint coordinates


@dataclass
class Sample:
    """One clip's training-ready metadata; pixel data stays on disk."""

    clip_path: str
    label_idx: int
    skeleton: np.ndarray  # (L, m, 3) centered, rescaled x, y + conf
    crop_joints: np.ndarray  # (L, m, 2) crop-space pixel positions
    conf: np.ndarray  # (L, m)


def load_samples(manifest: dict, label_space: LabelSpace, base_dir=None) -> list[Sample]:
    samples = []
    for entry in manifest["clips"]:
        ann_path = Path(entry["annotation_path"])
        clip_path = Path(entry["path"])
        if base_dir is not None:
            ann_path = Path(base_dir) / ann_path
            clip_path = Path(base_dir) / clip_path
        ann = parse_annotation(ann_path.read_text(encoding="utf-8"))
        label_idx = label_space.index(entry["label"])
        length = len(ann.frames)
        skel = np.zeros((length, 15, 3), dtype=np.float32)
        crop = np.zeros((length, 15, 2), dtype=np.float64)
        conf = np.zeros((length, 15), dtype=np.float64)
        for t, persons in enumerate(ann.frames):
            person = persons[0]
            arr = person.skeleton.as_array()
            bb = person.bbox
            bw, bh = bb.x_max - bb.x_min, bb.y_max - bb.y_min
            nx = (arr[:, 0] - bb.x_min) / bw
            ny = (arr[:, 1] - bb.y_min) / bh
            # center on the per-frame joint mean so camera/body drift
            # cancels, then rescale so class-bearing offsets are O(1)
            skel[t, :, 0] = (nx - nx.mean()) * COORD_SCALE
            skel[t, :, 1] = (ny - ny.mean()) * COORD_SCALE
            skel[t, :, 2] = arr[:, 2]
            conf[t] = arr[:, 2]
            crop[t, :, 0] = nx  # scaled to the crop side at mask time
            crop[t, :, 1] = ny
        samples.append(
            Sample(
                clip_path=str(clip_path),
                label_idx=label_idx,
                skeleton=skel,
                crop_joints=crop,
                conf=conf,
            )
        )
    return samples


def skeleton_batch(samples, dtype=np.float32) -> np.ndarray:
    return np.stack([s.skeleton for s in samples]).astype(dtype)


def rgb_batch(samples, masker=None, dtype=np.float32) -> np.ndarray:
    clips = []
    for s in samples:
        data = read_clip(s.clip_path).data
        if masker is not None:
            data = masker(s, data)
        clips.append(data.astype(dtype, copy=False))
    return np.stack(clips)


class AttentionMasker:
    """Masks clips with a frozen skeleton net's attention weights."""

    def __init__(self, skel_net: SkeletonNet, cfg: MaskConfig):
        self.net = skel_net
        self.cfg = cfg
        self._weights: dict = {}

    def weights_for(self, sample: Sample) -> np.ndarray:
        key = sample.clip_path
        if key not in self._weights:
            out = self.net.forward(sample.skeleton[None])
            self._weights[key] = np.array(out.weights.data[0], dtype=np.float64)
        return self._weights[key]

    def __call__(self, sample: Sample, data: np.ndarray) -> np.ndarray:
        side = self.cfg.frame_side
        joints = sample.crop_joints * side
        return mask_clip_arrays(data, self.weights_for(sample), joints, sample.conf, self.cfg)


@dataclass(frozen=True)
class TrainConfig:
    variant: str = "skel"
    mask: bool = False
    batch_size: int = 18
    epochs: int = 10
    skel_epochs: int = 30
    lr: float = 0.05
    skel_lr: float = 0.1
    momentum: float = 0.9
    seed: int = 0
    skel_hidden: int = 64
    skel_widths: tuple = (16, 32)
    rgb_full_channels: tuple = (8, 16)
    rgb_sub_channels: tuple = (16, 32)
    fast_stride: int = 4
    mask_cfg: MaskConfig = field(default_factory=MaskConfig)
    fusion_cfg: FusionConfig = field(default_factory=FusionConfig)
    dtype: str = "float32"  # float64 for bitwise-reproducible test mode

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ContractError(f"variant {self.variant!r} not in {VARIANTS}")
        if self.mask and self.variant == "skel":
            raise ContractError("mask has no effect on the skeleton-only variant")


@dataclass
class EvalReport:
    accuracy: float
    per_category: np.ndarray
    confusion: np.ndarray  # (i, i), rows = truth
    loss_curve: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "per_category": [None if np.isnan(v) else float(v) for v in self.per_category],
            "confusion": self.confusion.astype(int).tolist(),
            "loss_curve": self.loss_curve,
        }


class SGD:
    """Momentum SGD with a single step decay at 75% of the epoch budget."""

    def __init__(self, params: dict, lr: float, momentum: float = 0.9):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.vel = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self):
        for k, p in self.params.items():
            g = p.grad
            v = self.vel[k]
            v *= self.momentum
            v -= self.lr * g
            p.data += v

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def _check_finite(loss, epoch):
    if not np.isfinite(loss):
        raise InvariantError(f"loss diverged to {loss} at epoch {epoch}")


def _run_epochs(params, epochs, lr, momentum, loss_fn, eval_fn, rng, batch_size, n, curves, tag):
    opt = SGD(params, lr, momentum)
    best = (-1.0, None)
    for epoch in range(epochs):
        if epochs >= 4 and epoch == (3 * epochs) // 4:
            opt.lr *= 0.1
        losses = []
        for idx in _batches(n, batch_size, rng):
            opt.zero_grad()
            loss = loss_fn(idx)
            ad.backprop(loss)
            opt.step()
            losses.append(float(loss.data))
        train_loss = float(np.mean(losses))
        _check_finite(train_loss, epoch)
        val_acc = eval_fn()
        curves.append({"stage": tag, "epoch": epoch, "train_loss": train_loss, "val_acc": val_acc})
        if val_acc > best[0]:
            best = (val_acc, {k: p.data.copy() for k, p in params.items()})
    if best[1] is not None:
        for k, p in params.items():
            p.data = best[1][k]


@dataclass
class TrainResult:
    params: dict  # prefixed name -> float32 array
    config: dict
    curves: list
    label_space: LabelSpace


def _np_dtype(name):
    return np.float64 if name == "float64" else np.float32


def _predict_probs_skel(net, samples, batch_size, dtype):
    probs = []
    for start in range(0, len(samples), batch_size):
        chunk = samples[start : start + batch_size]
        logits = net.forward(skeleton_batch(chunk, dtype)).logits.data
        probs.append(_softmax_np(logits))
    return np.concatenate(probs)


def _predict_probs_rgb(net, samples, batch_size, dtype, masker=None):
    probs = []
    for start in range(0, len(samples), batch_size):
        chunk = samples[start : start + batch_size]
        logits = net.forward(rgb_batch(chunk, masker, dtype)).logits.data
        probs.append(_softmax_np(logits))
    return np.concatenate(probs)


def _predict_probs_fused(skel_net, rgb_net, fuser, samples, batch_size, dtype, masker=None):
    probs = []
    for start in range(0, len(samples), batch_size):
        chunk = samples[start : start + batch_size]
        f_s = skel_net.forward(skeleton_batch(chunk, dtype)).feature.detach()
        f_r = rgb_net.forward(rgb_batch(chunk, masker, dtype)).feature
        logits = fuser(f_s, f_r).data
        probs.append(_softmax_np(logits))
    return np.concatenate(probs)


def _softmax_np(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _accuracy(probs, labels):
    return float((probs.argmax(axis=1) == labels).mean())


def fit_variant(cfg: TrainConfig, tr, labels_tr, va, labels_va, num_classes) -> tuple[dict, list, dict]:
    """Train one ladder variant from prepared samples.

    Returns (prefixed float32 parameter table, per-epoch curves, live nets).
    """
    dtype = _np_dtype(cfg.dtype)
    labels_tr = np.asarray(labels_tr)
    labels_va = np.asarray(labels_va)
    n = len(tr)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(42,)))
    curves: list = []
    params: dict = {}

    needs_skel = cfg.variant in ("skel", "fuse-feature", "fuse-score") or cfg.mask
    skel_net = None
    if needs_skel:
        skel_net = SkeletonNet(
            num_classes,
            widths=cfg.skel_widths,
            hidden=cfg.skel_hidden,
            seed=cfg.seed,
            dtype=dtype,
        )

        def skel_loss(idx):
            chunk = [tr[i] for i in idx]
            out = skel_net.forward(skeleton_batch(chunk, dtype))
            return ad.cross_entropy(out.logits, labels_tr[idx])

        def skel_eval():
            return _accuracy(_predict_probs_skel(skel_net, va, cfg.batch_size, dtype), labels_va)

        epochs = cfg.skel_epochs if cfg.variant != "skel" else cfg.epochs
        _run_epochs(
            skel_net.params(), epochs, cfg.skel_lr, cfg.momentum,
            skel_loss, skel_eval, rng, cfg.batch_size, n, curves, "skel",
        )
        params.update({f"skel.{k}": np.asarray(p.data, dtype=np.float32) for k, p in skel_net.params().items()})

    masker = AttentionMasker(skel_net, cfg.mask_cfg) if cfg.mask else None

    rgb_net = None
    if cfg.variant in ("rgb", "fuse-feature", "fuse-score"):
        rgb_net = RgbNet(
            num_classes,
            full_channels=cfg.rgb_full_channels,
            sub_channels=cfg.rgb_sub_channels,
            fast_stride=cfg.fast_stride,
            seed=cfg.seed + 1,
            dtype=dtype,
        )

    fuser = None
    if cfg.variant == "fuse-feature":
        fuser = FeatureFusion(
            cfg.skel_hidden, rgb_net.feature_dim, num_classes, cfg.fusion_cfg,
            seed=cfg.seed + 2, dtype=dtype,
        )

        def fuse_loss(idx):
            chunk = [tr[i] for i in idx]
            f_s = skel_net.forward(skeleton_batch(chunk, dtype)).feature.detach()
            f_r = rgb_net.forward(rgb_batch(chunk, masker, dtype)).feature
            return ad.cross_entropy(fuser(f_s, f_r), labels_tr[idx])

        def fuse_eval():
            return _accuracy(
                _predict_probs_fused(skel_net, rgb_net, fuser, va, cfg.batch_size, dtype, masker),
                labels_va,
            )

        joint = {f"rgb.{k}": v for k, v in rgb_net.params().items()}
        joint.update({f"fuse.{k}": v for k, v in fuser.params().items()})
        _run_epochs(
            joint, cfg.epochs, cfg.lr, cfg.momentum,
            fuse_loss, fuse_eval, rng, cfg.batch_size, n, curves, "fuse",
        )
        params.update({k: np.asarray(p.data, dtype=np.float32) for k, p in joint.items()})
    elif cfg.variant in ("rgb", "fuse-score"):

        def rgb_loss(idx):
            chunk = [tr[i] for i in idx]
            out = rgb_net.forward(rgb_batch(chunk, masker, dtype))
            return ad.cross_entropy(out.logits, labels_tr[idx])

        def rgb_eval():
            return _accuracy(_predict_probs_rgb(rgb_net, va, cfg.batch_size, dtype, masker), labels_va)

        _run_epochs(
            rgb_net.params(), cfg.epochs, cfg.lr, cfg.momentum,
            rgb_loss, rgb_eval, rng, cfg.batch_size, n, curves, "rgb",
        )
        params.update({f"rgb.{k}": np.asarray(p.data, dtype=np.float32) for k, p in rgb_net.params().items()})

    nets = {"skel": skel_net, "rgb": rgb_net, "fuser": fuser, "masker": masker}
    return params, curves, nets


def checkpoint_config(cfg: TrainConfig, label_space: LabelSpace) -> dict:
    return {
        "variant": cfg.variant,
        "mask": cfg.mask,
        "num_classes": len(label_space),
        "categories": list(label_space.categories),
        "skel_hidden": cfg.skel_hidden,
        "skel_widths": list(cfg.skel_widths),
        "rgb_full_channels": list(cfg.rgb_full_channels),
        "rgb_sub_channels": list(cfg.rgb_sub_channels),
        "fast_stride": cfg.fast_stride,
        "mask_cfg": {
            "frame_side": cfg.mask_cfg.frame_side,
            "k": cfg.mask_cfg.k,
            "l_x": cfg.mask_cfg.width,
            "l_y": cfg.mask_cfg.height,
            "p": cfg.mask_cfg.p,
        },
        "fusion": {
            "mode": cfg.fusion_cfg.mode,
            "w_skel": cfg.fusion_cfg.w_skel,
            "w_rgb": cfg.fusion_cfg.w_rgb,
            "dim": cfg.fusion_cfg.dim,
        },
        "seed": cfg.seed,
        "dtype": cfg.dtype,
    }


def train(cfg: TrainConfig, train_manifest: dict, val_manifest: dict, base_dir=None) -> TrainResult:
    """Train one ladder variant; returns parameters, config echo and curves."""
    label_space = label_space_for({"clips": train_manifest["clips"] + val_manifest["clips"]})
    tr = load_samples(train_manifest, label_space, base_dir)
    va = load_samples(val_manifest, label_space, base_dir)
    labels_tr = [s.label_idx for s in tr]
    labels_va = [s.label_idx for s in va]
    params, curves, _ = fit_variant(cfg, tr, labels_tr, va, labels_va, len(label_space))
    return TrainResult(
        params=params,
        config=checkpoint_config(cfg, label_space),
        curves=curves,
        label_space=label_space,
    )


def save_result(result: TrainResult, ckpt_path, curves_path=None) -> None:
    save_checkpoint(ckpt_path, result.params, result.config)
    if curves_path is not None:
        with open(curves_path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=["stage", "epoch", "train_loss", "val_acc"])
            writer.writeheader()
            writer.writerows(result.curves)


class TrainedModel:
    """Reconstructed channels from a checkpoint, ready for inference."""

    def __init__(self, params: dict, config: dict, dtype=np.float32):
        self.config = config
        self.variant = config["variant"]
        self.mask = config["mask"]
        num_classes = config["num_classes"]
        self.categories = tuple(config["categories"])
        self.skel_net = None
        self.rgb_net = None
        self.fuser = None
        self.fusion_cfg = FusionConfig(**config["fusion"])
        mc = config["mask_cfg"]
        self.mask_cfg = MaskConfig(frame_side=mc["frame_side"], k=mc["k"], l_x=mc["l_x"], l_y=mc["l_y"], p=mc["p"])
        strip = lambda prefix: {
            k[len(prefix) :]: v for k, v in params.items() if k.startswith(prefix)
        }
        skel_table = strip("skel.")
        if skel_table:
            self.skel_net = SkeletonNet(
                num_classes,
                widths=tuple(config["skel_widths"]),
                hidden=config["skel_hidden"],
                dtype=dtype,
            )
            self.skel_net.load_params(skel_table, dtype)
        rgb_table = strip("rgb.")
        if rgb_table:
            self.rgb_net = RgbNet(
                num_classes,
                full_channels=tuple(config["rgb_full_channels"]),
                sub_channels=tuple(config["rgb_sub_channels"]),
                fast_stride=config["fast_stride"],
                dtype=dtype,
            )
            self.rgb_net.load_params(rgb_table, dtype)
        fuse_table = strip("fuse.")
        if fuse_table:
            self.fuser = FeatureFusion(
                config["skel_hidden"], self.rgb_net.feature_dim, num_classes, self.fusion_cfg, dtype=dtype
            )
            self.fuser.load_params(fuse_table, dtype)
        self.masker = AttentionMasker(self.skel_net, self.mask_cfg) if self.mask else None
        self.dtype = dtype

    @classmethod
    def load(cls, path, dtype=np.float32) -> "TrainedModel":
        params, config = load_checkpoint(path)
        return cls(params, config, dtype)

    def predict_proba(self, samples, batch_size=18) -> np.ndarray:
        if self.variant == "skel":
            return _predict_probs_skel(self.skel_net, samples, batch_size, self.dtype)
        if self.variant == "rgb":
            return _predict_probs_rgb(self.rgb_net, samples, batch_size, self.dtype, self.masker)
        if self.variant == "fuse-feature":
            return _predict_probs_fused(
                self.skel_net, self.rgb_net, self.fuser, samples, batch_size, self.dtype, self.masker
            )
        p_s = _predict_probs_skel(self.skel_net, samples, batch_size, self.dtype)
        p_r = _predict_probs_rgb(self.rgb_net, samples, batch_size, self.dtype, self.masker)
        return score_fuse(p_s, p_r, self.fusion_cfg)


def evaluate(model: TrainedModel, manifest: dict, base_dir=None, batch_size=18) -> EvalReport:
    """Accuracy, per-category accuracy and confusion on a manifest."""
    label_space = LabelSpace(categories=model.categories, emotion_attrs={})
    for entry in manifest["clips"]:
        if entry["label"] not in model.categories:
            raise ContractError(f"label {entry['label']!r} unknown to the checkpoint")
    samples = load_samples(manifest, label_space, base_dir)
    labels = np.array([s.label_idx for s in samples])
    probs = model.predict_proba(samples, batch_size)
    preds = probs.argmax(axis=1)
    i = len(model.categories)
    confusion = np.zeros((i, i), dtype=np.int64)
    for truth, pred in zip(labels, preds):
        confusion[truth, pred] += 1
    totals = confusion.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_cat = np.where(totals > 0, np.diag(confusion) / np.maximum(totals, 1), np.nan)
    accuracy = float(np.trace(confusion) / confusion.sum())
    return EvalReport(accuracy=accuracy, per_category=per_cat, confusion=confusion)


def stats(manifest: dict, base_dir=None, label_space: LabelSpace | None = None) -> dict:
    """Instance counts, frame totals and persons-per-frame histogram."""
    if label_space is None:
        label_space = label_space_for(manifest)
    counts: dict = {}
    frames_total = 0
    persons_hist: dict = {}
    for entry in manifest["clips"]:
        ann_path = Path(entry["annotation_path"])
        if base_dir is not None:
            ann_path = Path(base_dir) / ann_path
        ann = parse_annotation(ann_path.read_text(encoding="utf-8"))
        frames_total += len(ann.frames)
        instances = set()
        for persons in ann.frames:
            persons_hist[len(persons)] = persons_hist.get(len(persons), 0) + 1
            for p in persons:
                if p.label != "none":
                    instances.add((p.person_id, p.label))
        for _, label in instances:
            counts[label] = counts.get(label, 0) + 1
    emotions = {}
    for label in counts:
        try:
            tags = label_space.emotions(label)
        except Exception:
            tags = ()
        emotions[label] = list(tags)
    return {
        "num_clips": len(manifest["clips"]),
        "frames_total": frames_total,
        "instances_per_category": dict(sorted(counts.items())),
        "persons_per_frame": {str(k): v for k, v in sorted(persons_hist.items())},
        "emotion_attrs": emotions,
    }
