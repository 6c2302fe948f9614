"""Scikit-learn style front end.

The estimator consumes ``Sample`` objects (see harness.load_samples) so the
pixel data can stay on disk; labels come either from y or from the samples
themselves. It wraps the same training core the CLI uses, so a fitted
estimator and a checkpoint trained with identical settings agree exactly.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .action_mask import MaskConfig
from .errors import ContractError
from .fusion import FusionConfig
from .harness import Sample, TrainConfig, fit_variant, _predict_probs_fused, _predict_probs_rgb, _predict_probs_skel
from .fusion import score_fuse


def check_samples(X) -> list[Sample]:
    samples = list(X)
    if not samples:
        raise ContractError("empty sample list")
    for s in samples:
        if not isinstance(s, Sample):
            raise ContractError(f"expected Sample, got {type(s).__name__}")
    lengths = {s.skeleton.shape for s in samples}
    if len(lengths) != 1:
        raise ContractError(f"inconsistent skeleton shapes: {sorted(lengths)}")
    return samples


class TwoStreamActionClassifier(BaseEstimator, ClassifierMixin):
    """fit/predict wrapper over the two-channel recognizer.

    variant: "skel", "rgb", "fuse-feature" or "fuse-score"; mask applies
    attention-derived spatial masks to the RGB side (two-stage training).
    """

    def __init__(
        self,
        variant="fuse-feature",
        mask=False,
        epochs=10,
        skel_epochs=30,
        lr=0.05,
        skel_lr=0.1,
        momentum=0.9,
        batch_size=18,
        seed=0,
        frame_side=64,
        mask_p=0.3,
        fusion_w_skel=0.5,
        val_fraction=0.15,
    ):
        self.variant = variant
        self.mask = mask
        self.epochs = epochs
        self.skel_epochs = skel_epochs
        self.lr = lr
        self.skel_lr = skel_lr
        self.momentum = momentum
        self.batch_size = batch_size
        self.seed = seed
        self.frame_side = frame_side
        self.mask_p = mask_p
        self.fusion_w_skel = fusion_w_skel
        self.val_fraction = val_fraction

    def _config(self) -> TrainConfig:
        return TrainConfig(
            variant=self.variant,
            mask=self.mask,
            batch_size=self.batch_size,
            epochs=self.epochs,
            skel_epochs=self.skel_epochs,
            lr=self.lr,
            skel_lr=self.skel_lr,
            momentum=self.momentum,
            seed=self.seed,
            mask_cfg=MaskConfig(frame_side=self.frame_side, p=self.mask_p),
            fusion_cfg=FusionConfig(
                mode="feature" if self.variant != "fuse-score" else "score",
                w_skel=self.fusion_w_skel,
                w_rgb=1.0 - self.fusion_w_skel,
            ),
        )

    def fit(self, X, y=None):
        samples = check_samples(X)
        labels = np.asarray(y if y is not None else [s.label_idx for s in samples])
        if labels.shape != (len(samples),):
            raise ContractError(f"y has shape {labels.shape}, expected ({len(samples)},)")
        self.classes_ = np.unique(labels)
        class_to_idx = {c: i for i, c in enumerate(self.classes_)}
        dense = np.array([class_to_idx[c] for c in labels])

        # deterministic stratified holdout for early stopping
        rng = np.random.default_rng(self.seed)
        val_idx = []
        for c in range(len(self.classes_)):
            members = np.flatnonzero(dense == c)
            members = members[rng.permutation(len(members))]
            take = max(1, int(round(self.val_fraction * len(members)))) if len(members) > 1 else 0
            val_idx.extend(members[:take])
        val_mask = np.zeros(len(samples), dtype=bool)
        val_mask[val_idx] = True
        tr = [s for s, m in zip(samples, val_mask) if not m]
        va = [s for s, m in zip(samples, val_mask) if m] or tr
        ytr = dense[~val_mask]
        yva = dense[val_mask] if val_mask.any() else ytr

        cfg = self._config()
        _, self.curves_, nets = fit_variant(cfg, tr, ytr, va, yva, len(self.classes_))
        self._nets = nets
        self._cfg = cfg
        return self

    def _check_fitted(self):
        if not hasattr(self, "_nets"):
            raise NotFittedError("call fit first")

    def predict_proba(self, X):
        self._check_fitted()
        samples = check_samples(X)
        nets = self._nets
        dtype = np.float64 if self._cfg.dtype == "float64" else np.float32
        if self.variant == "skel":
            return _predict_probs_skel(nets["skel"], samples, self.batch_size, dtype)
        if self.variant == "rgb":
            return _predict_probs_rgb(nets["rgb"], samples, self.batch_size, dtype, nets["masker"])
        if self.variant == "fuse-feature":
            return _predict_probs_fused(
                nets["skel"], nets["rgb"], nets["fuser"], samples, self.batch_size, dtype, nets["masker"]
            )
        p_s = _predict_probs_skel(nets["skel"], samples, self.batch_size, dtype)
        p_r = _predict_probs_rgb(nets["rgb"], samples, self.batch_size, dtype, nets["masker"])
        return score_fuse(p_s, p_r, FusionConfig(mode="score", w_skel=self.fusion_w_skel, w_rgb=1.0 - self.fusion_w_skel))

    def predict(self, X):
        probs = self.predict_proba(X)
        return self.classes_[probs.argmax(axis=1)]

    def attention_weights(self, X):
        """Per-clip joint weight vectors from the skeleton channel."""
        self._check_fitted()
        if self._nets["skel"] is None:
            raise ContractError("this variant has no skeleton channel")
        samples = check_samples(X)
        out = self._nets["skel"].forward(np.stack([s.skeleton for s in samples]))
        return np.asarray(out.weights.data)
