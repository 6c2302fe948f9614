"""RGB appearance channel: two 3D-convolutional pathways, one over the
full frame rate with narrow channels and one over a temporally subsampled
stream with wider channels, laterally fused by feature concatenation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, ShapeError


def temporal_subsample(clip, stride: int):
    """Keep frames 0, stride, 2*stride, ...; stride must divide L.

    Accepts (c, L, w, h) or (b, c, L, w, h) arrays/Tensors.
    """
    arr = clip.data if isinstance(clip, Tensor) else np.asarray(clip)
    if arr.ndim not in (4, 5):
        raise ShapeError(f"expected rank 4 or 5 clip, got rank {arr.ndim}")
    axis = 1 if arr.ndim == 4 else 2
    length = arr.shape[axis]
    if stride < 1 or length % stride:
        raise ContractError(f"stride {stride} does not divide clip length {length}")
    idx = (slice(None),) * axis + (slice(0, length, stride),)
    if isinstance(clip, Tensor):
        return clip[idx]
    return arr[idx]


@dataclass(frozen=True)
class RgbOutput:
    logits: Tensor  # (b, i)
    feature: Tensor  # (b, d_r)


class _ConvBlock:
    def __init__(self, cin, cout, stride, rng, dtype, name):
        fan_in = cin * 27
        self.w = ad.parameter(
            (rng.standard_normal((cout, cin, 3, 3, 3)) * np.sqrt(2.0 / fan_in)).astype(dtype),
            f"{name}_w",
        )
        self.b = ad.parameter(np.zeros(cout, dtype=dtype), f"{name}_b")
        self.stride = stride
        self.name = name

    def __call__(self, x: Tensor) -> Tensor:
        return ad.relu(ad.conv3d(x, self.w, self.b, stride=self.stride, pad=1))

    def params(self):
        return {f"{self.name}_w": self.w, f"{self.name}_b": self.b}


def _pathway(x: Tensor, block1: _ConvBlock, block2: _ConvBlock) -> Tensor:
    h = block1(x)
    depth = h.shape[2]
    pool_d = 2 if depth >= 2 and depth % 2 == 0 else 1
    h = ad.maxpool3d(h, (pool_d, 2, 2))
    h = block2(h)
    # spatial max keeps small textured regions visible after pooling;
    # the temporal mean then averages detections over the clip
    h = ad.maxpool3d(h, (1, h.shape[3], h.shape[4]))
    return ad.mean(h, axis=(2, 3, 4))


class RgbNet:
    """Desk-scale dual-rate video classifier.

    Pathway A sees every frame with narrow channels; pathway B sees the
    stream subsampled by ``fast_stride`` with wider channels.
    """

    def __init__(
        self,
        num_classes,
        full_channels=(8, 16),
        sub_channels=(16, 32),
        fast_stride=4,
        seed=0,
        dtype=np.float32,
    ):
        rng = np.random.default_rng(seed)
        self.num_classes = num_classes
        self.fast_stride = fast_stride
        ca1, ca2 = full_channels
        cb1, cb2 = sub_channels
        self.a1 = _ConvBlock(3, ca1, (2, 2, 2), rng, dtype, "a1")
        self.a2 = _ConvBlock(ca1, ca2, (1, 2, 2), rng, dtype, "a2")
        self.b1 = _ConvBlock(3, cb1, (1, 2, 2), rng, dtype, "b1")
        self.b2 = _ConvBlock(cb1, cb2, (1, 2, 2), rng, dtype, "b2")
        feat = ca2 + cb2
        self.head_w = ad.parameter(
            (rng.standard_normal((feat, num_classes)) * np.sqrt(1.0 / feat)).astype(dtype),
            "head_w",
        )
        self.head_b = ad.parameter(np.zeros(num_classes, dtype=dtype), "head_b")
        self.feature_dim = feat

    def forward(self, batch) -> RgbOutput:
        x = batch if isinstance(batch, Tensor) else Tensor(np.asarray(batch))
        if x.data.ndim != 5:
            raise ShapeError(f"rgb batch must be (b, c, L, w, h), got {x.shape}")
        if x.shape[1] != 3:
            raise ShapeError(f"expected 3 color channels, got {x.shape[1]}")
        x = ad.mul(ad.add(x, -0.5), 2.0)  # [0, 1] pixels -> [-1, 1]
        fa = _pathway(x, self.a1, self.a2)
        xb = temporal_subsample(x, self.fast_stride)
        fb = _pathway(xb, self.b1, self.b2)
        feature = ad.concat([fa, fb], axis=1)
        logits = ad.matmul(feature, self.head_w) + self.head_b
        return RgbOutput(logits=logits, feature=feature)

    def params(self) -> dict:
        out = {}
        for block in (self.a1, self.a2, self.b1, self.b2):
            out.update(block.params())
        out.update({"head_w": self.head_w, "head_b": self.head_b})
        return out

    def load_params(self, table: dict, dtype=np.float32) -> None:
        for name, tensor in self.params().items():
            if name not in table:
                raise KeyError(f"missing parameter {name!r}")
            arr = np.asarray(table[name], dtype=dtype)
            if arr.shape != tensor.data.shape:
                raise ShapeError(f"{name}: shape {arr.shape} != {tensor.data.shape}")
            tensor.data = arr.copy()
