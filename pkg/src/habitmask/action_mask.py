"""Attention-derived spatial masks.

The top-weighted joints become centers of axis-aligned child rectangles;
their union is the mask. Pixels inside keep their value, pixels outside
are attenuated by a factor p. Rectangle membership is strict:
|x - xi| < l_x / 2 and |y - yi| < l_y / 2, so the boundary at exactly
half a side falls outside.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import ClipTensor, Skeleton
from .errors import ContractError, ShapeError

DEFAULT_ATTENUATION = 0.3
DEFAULT_SIDE_RATIO = 0.25  # child-mask side as a fraction of the crop side
MIN_JOINT_CONF = 0.05


@dataclass(frozen=True)
class MaskConfig:
    frame_side: int = 64
    k: int = 3
    l_x: int | None = None  # default: frame_side * DEFAULT_SIDE_RATIO
    l_y: int | None = None
    p: float = DEFAULT_ATTENUATION

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0):
            raise ContractError(f"attenuation p={self.p} outside [0, 1]")
        if self.k < 1:
            raise ContractError("need at least one child mask")
        for side in (self.width, self.height):
            if not (0 < side <= self.frame_side):
                raise ContractError(f"child mask side {side} outside (0, {self.frame_side}]")

    @property
    def width(self) -> int:
        return self.l_x if self.l_x is not None else int(round(self.frame_side * DEFAULT_SIDE_RATIO))

    @property
    def height(self) -> int:
        return self.l_y if self.l_y is not None else int(round(self.frame_side * DEFAULT_SIDE_RATIO))


@dataclass(frozen=True)
class ActionMask:
    inside: np.ndarray  # (S, S) bool, indexed [x, y]
    p: float


def top_k_joints(weights, k: int) -> list[int]:
    """Indices of the k largest weights, descending; ties break by index."""
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1:
        raise ShapeError(f"weights must be a vector, got shape {w.shape}")
    if k > w.size:
        raise ContractError(f"k={k} exceeds {w.size} joints")
    order = sorted(range(w.size), key=lambda j: (-w[j], j))
    return order[:k]


def build_mask(centers, cfg: MaskConfig) -> ActionMask:
    """Union of open rectangles around the given (x, y) crop-space centers."""
    s = cfg.frame_side
    inside = np.zeros((s, s), dtype=bool)
    coords = np.arange(s, dtype=np.float64)
    for cx, cy in centers:
        in_x = np.abs(coords - cx) < cfg.width / 2.0
        in_y = np.abs(coords - cy) < cfg.height / 2.0
        inside |= in_x[:, None] & in_y[None, :]
    return ActionMask(inside=inside, p=cfg.p)


def apply_mask(frame: np.ndarray, mask: ActionMask) -> np.ndarray:
    """Attenuate pixels outside the mask; frame is (c, S, S) indexed [c, x, y]."""
    frame = np.asarray(frame)
    if frame.ndim != 3 or frame.shape[1:] != mask.inside.shape:
        raise ShapeError(f"frame {frame.shape} does not match mask {mask.inside.shape}")
    factor = np.where(mask.inside, 1.0, mask.p).astype(frame.dtype)
    return frame * factor[None, :, :]


def select_centers(weights, joints_xy, conf, cfg: MaskConfig) -> list[tuple[float, float]]:
    """Crop-space centers for one frame: positions of the top-k joints.

    Joints below MIN_JOINT_CONF are skipped and replaced by the next-ranked
    joint; if everything is low-confidence the top-k are used regardless.
    """
    joints_xy = np.asarray(joints_xy, dtype=np.float64)
    conf = np.asarray(conf, dtype=np.float64)
    ranked = top_k_joints(weights, len(joints_xy))
    chosen = [j for j in ranked if conf[j] >= MIN_JOINT_CONF][: cfg.k]
    if not chosen:
        chosen = ranked[: cfg.k]
    return [(float(joints_xy[j, 0]), float(joints_xy[j, 1])) for j in chosen]


def mask_centers(weights, skeleton: Skeleton, cfg: MaskConfig) -> list[tuple[float, float]]:
    arr = skeleton.as_array()
    return select_centers(weights, arr[:, :2], arr[:, 2], cfg)


def mask_clip_arrays(data, weights, joints_xy, conf, cfg: MaskConfig) -> np.ndarray:
    """Array-core of mask_clip: data (c, L, S, S), joints_xy (L, m, 2)."""
    data = np.asarray(data)
    c, length, w, h = data.shape
    if len(joints_xy) != length:
        raise ContractError(f"clip has {length} frames but {len(joints_xy)} skeletons given")
    if w != cfg.frame_side or h != cfg.frame_side:
        raise ShapeError(f"clip frames are {w}x{h}, mask config expects {cfg.frame_side}")
    out = np.empty_like(data)
    for t in range(length):
        centers = select_centers(weights, joints_xy[t], conf[t], cfg)
        out[:, t] = apply_mask(data[:, t], build_mask(centers, cfg))
    return out


def mask_clip(clip: ClipTensor, weights, per_frame_joints, cfg: MaskConfig) -> ClipTensor:
    """Mask every frame of a clip using per-frame joint positions.

    ``per_frame_joints`` holds one Skeleton per frame in crop coordinates;
    ``weights`` is the clip-level joint weight vector (stop-gradient).
    """
    arrs = np.stack([s.as_array() for s in per_frame_joints])
    masked = mask_clip_arrays(clip.data, weights, arrs[:, :, :2], arrs[:, :, 2], cfg)
    return ClipTensor(data=masked)
