"""Channel fusion: combine penultimate features before a shared head, or
combine the two channels' class probabilities directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, ShapeError

FUSION_MODES = ("feature", "score")


@dataclass(frozen=True)
class FusionConfig:
    mode: str = "feature"
    w_skel: float = 0.5
    w_rgb: float = 0.5
    dim: int = 64  # common feature dim, feature mode only

    def __post_init__(self):
        if self.mode not in FUSION_MODES:
            raise ContractError(f"fusion mode {self.mode!r} not in {FUSION_MODES}")
        if self.w_skel < 0 or self.w_rgb < 0:
            raise ContractError("fusion weights must be nonnegative")
        total = self.w_skel + self.w_rgb
        if abs(total - 1.0) > 1e-6:
            raise ContractError(f"fusion weights sum to {total}, expected 1")


class FeatureFusion:
    """Project each channel feature to a common dim, blend, classify."""

    def __init__(self, skel_dim, rgb_dim, num_classes, cfg: FusionConfig, seed=0, dtype=np.float32):
        if cfg.mode != "feature":
            raise ContractError("FeatureFusion requires mode='feature'")
        rng = np.random.default_rng(seed)
        self.cfg = cfg

        def w(rows, cols, name):
            scale = np.sqrt(1.0 / rows)
            return ad.parameter((rng.standard_normal((rows, cols)) * scale).astype(dtype), name)

        self.proj_skel = w(skel_dim, cfg.dim, "proj_skel")
        self.proj_rgb = w(rgb_dim, cfg.dim, "proj_rgb")
        self.head_w = w(cfg.dim, num_classes, "head_w")
        self.head_b = ad.parameter(np.zeros(num_classes, dtype=dtype), "head_b")

    def __call__(self, f_skel, f_rgb) -> Tensor:
        f_skel = f_skel if isinstance(f_skel, Tensor) else Tensor(np.asarray(f_skel))
        f_rgb = f_rgb if isinstance(f_rgb, Tensor) else Tensor(np.asarray(f_rgb))
        if f_skel.data.ndim != 2 or f_rgb.data.ndim != 2:
            raise ShapeError("fusion inputs must be (b, d)")
        if f_skel.shape[0] != f_rgb.shape[0]:
            raise ShapeError(f"batch mismatch: {f_skel.shape[0]} vs {f_rgb.shape[0]}")
        fused = ad.matmul(f_skel, self.proj_skel) * self.cfg.w_skel + ad.matmul(f_rgb, self.proj_rgb) * self.cfg.w_rgb
        return ad.matmul(fused, self.head_w) + self.head_b

    def params(self) -> dict:
        return {
            "proj_skel": self.proj_skel,
            "proj_rgb": self.proj_rgb,
            "head_w": self.head_w,
            "head_b": self.head_b,
        }

    def load_params(self, table: dict, dtype=np.float32) -> None:
        for name, tensor in self.params().items():
            if name not in table:
                raise KeyError(f"missing parameter {name!r}")
            arr = np.asarray(table[name], dtype=dtype)
            if arr.shape != tensor.data.shape:
                raise ShapeError(f"{name}: shape {arr.shape} != {tensor.data.shape}")
            tensor.data = arr.copy()


def feature_fuse(f_skel, f_rgb, fuser: FeatureFusion) -> Tensor:
    return fuser(f_skel, f_rgb)


def score_fuse(p_skel, p_rgb, cfg: FusionConfig) -> np.ndarray:
    """Convex combination of per-class probabilities, row-wise."""
    ps = np.asarray(p_skel, dtype=np.float64)
    pr = np.asarray(p_rgb, dtype=np.float64)
    if ps.shape != pr.shape or ps.ndim != 2:
        raise ShapeError(f"probability shapes differ: {ps.shape} vs {pr.shape}")
    for name, p in (("skeleton", ps), ("rgb", pr)):
        if np.any(p < -1e-9):
            raise ContractError(f"{name} probabilities contain negative entries")
        sums = p.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-6):
            raise ContractError(f"{name} probability rows do not sum to 1")
    return cfg.w_skel * ps + cfg.w_rgb * pr
