"""Skeleton channel: graph convolution over the 15-joint body tree,
a shared gated recurrent cell along time per joint, and joint
self-attention producing both a pooled clip feature and the per-joint
weight vector that seeds action masks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .datamodel import NUM_JOINTS
from .errors import ShapeError

# Edges of the canonical 15-joint body tree (see datamodel.JOINT_NAMES).
BODY_EDGES = (
    (0, 1),
    (1, 2),
    (1, 3),
    (1, 4),
    (3, 5),
    (5, 7),
    (4, 6),
    (6, 8),
    (1, 9),
    (1, 10),
    (9, 11),
    (11, 13),
    (10, 12),
    (12, 14),
)


@dataclass(frozen=True)
class BodyGraph:
    adjacency: np.ndarray  # (m, m) 0/1, no self loops
    a_hat: np.ndarray  # D^-1/2 (A + I) D^-1/2


def build_adjacency(m: int = NUM_JOINTS, edges=BODY_EDGES) -> BodyGraph:
    adj = np.zeros((m, m), dtype=np.float64)
    for a, b in edges:
        adj[a, b] = adj[b, a] = 1.0
    with_loops = adj + np.eye(m)
    d_inv_sqrt = 1.0 / np.sqrt(with_loops.sum(axis=1))
    a_hat = with_loops * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]
    return BodyGraph(adjacency=adj, a_hat=a_hat)


def graph_conv(x: Tensor, graph: BodyGraph, weight: Tensor) -> Tensor:
    """relu(A_hat @ x[t] @ W) per frame; x is (b, L, m, f_in)."""
    if x.data.ndim != 4:
        raise ShapeError(f"graph_conv input must be (b, L, m, f), got {x.shape}")
    m = x.shape[2]
    if graph.a_hat.shape != (m, m):
        raise ShapeError(f"graph has {graph.a_hat.shape[0]} joints, input has {m}")
    if weight.shape[0] != x.shape[3]:
        raise ShapeError(f"weight rows {weight.shape[0]} != input features {x.shape[3]}")
    mixed = ad.matmul(Tensor(graph.a_hat.astype(x.dtype)), x)
    return ad.relu(ad.matmul(mixed, weight))


@dataclass(frozen=True)
class SkeletonOutput:
    logits: Tensor  # (b, i)
    feature: Tensor  # (b, h)
    weights: Tensor  # (b, m), rows sum to 1


class GruCell:
    """One gated recurrent cell; parameters shared across joints and time."""

    def __init__(self, in_dim, hidden, rng, dtype):
        def w(rows, cols, name):
            scale = 1.0 / np.sqrt(rows)
            return ad.parameter(rng.uniform(-scale, scale, (rows, cols)).astype(dtype), name)

        self.wz = w(in_dim, hidden, "gru_wz")
        self.uz = w(hidden, hidden, "gru_uz")
        self.bz = ad.parameter(np.zeros(hidden, dtype=dtype), "gru_bz")
        self.wr = w(in_dim, hidden, "gru_wr")
        self.ur = w(hidden, hidden, "gru_ur")
        self.br = ad.parameter(np.zeros(hidden, dtype=dtype), "gru_br")
        self.wh = w(in_dim, hidden, "gru_wh")
        self.uh = w(hidden, hidden, "gru_uh")
        self.bh = ad.parameter(np.zeros(hidden, dtype=dtype), "gru_bh")
        self.hidden = hidden

    def step(self, x: Tensor, h: Tensor) -> Tensor:
        z = ad.sigmoid(ad.matmul(x, self.wz) + ad.matmul(h, self.uz) + self.bz)
        r = ad.sigmoid(ad.matmul(x, self.wr) + ad.matmul(h, self.ur) + self.br)
        cand = ad.tanh(ad.matmul(x, self.wh) + ad.matmul(r * h, self.uh) + self.bh)
        return ad.sub(1.0, z) * h + z * cand

    def params(self):
        return {
            "gru_wz": self.wz,
            "gru_uz": self.uz,
            "gru_bz": self.bz,
            "gru_wr": self.wr,
            "gru_ur": self.ur,
            "gru_br": self.br,
            "gru_wh": self.wh,
            "gru_uh": self.uh,
            "gru_bh": self.bh,
        }


def temporal_recur(h_seq: Tensor, cell: GruCell) -> Tensor:
    """Run the cell along t independently per joint; (b, L, m, f) -> (b, m, h)."""
    if h_seq.data.ndim != 4:
        raise ShapeError(f"temporal_recur input must be (b, L, m, f), got {h_seq.shape}")
    b, length, m, f = h_seq.shape
    state = Tensor(np.zeros((b * m, cell.hidden), dtype=h_seq.dtype))
    for t in range(length):
        frame = ad.reshape(h_seq[:, t], (b * m, f))
        state = cell.step(frame, state)
    return ad.reshape(state, (b, m, cell.hidden))


class JointAttention:
    """Additive self-attention over joints: s_j = u . tanh(W h_j + c)."""

    def __init__(self, hidden, attn_dim, rng, dtype):
        scale = 1.0 / np.sqrt(hidden)
        self.w = ad.parameter(rng.uniform(-scale, scale, (hidden, attn_dim)).astype(dtype), "attn_w")
        self.c = ad.parameter(np.zeros(attn_dim, dtype=dtype), "attn_c")
        self.u = ad.parameter(rng.uniform(-scale, scale, (attn_dim, 1)).astype(dtype), "attn_u")

    def __call__(self, hm: Tensor) -> tuple[Tensor, Tensor]:
        """(b, m, h) -> (weights (b, m), pooled (b, h))."""
        scores = ad.matmul(ad.tanh(ad.matmul(hm, self.w) + self.c), self.u)  # (b, m, 1)
        b, m, _ = scores.shape
        alpha = ad.softmax(ad.reshape(scores, (b, m)), axis=1)
        pooled = ad.sum_(ad.reshape(alpha, (b, m, 1)) * hm, axis=1)
        return alpha, pooled

    def params(self):
        return {"attn_w": self.w, "attn_c": self.c, "attn_u": self.u}


def joint_attention(hm: Tensor, attn: JointAttention) -> tuple[Tensor, Tensor]:
    if hm.data.ndim != 3:
        raise ShapeError(f"joint_attention input must be (b, m, h), got {hm.shape}")
    return attn(hm)


class SkeletonNet:
    """Two graph-conv layers, shared recurrent cell, attention, linear head."""

    def __init__(
        self,
        num_classes,
        widths=(16, 32),
        hidden=64,
        attn_dim=16,
        num_joints=NUM_JOINTS,
        in_dim=3,
        seed=0,
        dtype=np.float32,
    ):
        rng = np.random.default_rng(seed)
        self.num_classes = num_classes
        self.num_joints = num_joints
        self.in_dim = in_dim
        self.graph = build_adjacency(num_joints) if num_joints == NUM_JOINTS else build_adjacency(num_joints, edges=())
        w1, w2 = widths

        def w(rows, cols, name):
            scale = np.sqrt(2.0 / rows)
            return ad.parameter((rng.standard_normal((rows, cols)) * scale).astype(dtype), name)

        self.gc1 = w(in_dim, w1, "gc1")
        self.gc2 = w(w1, w2, "gc2")
        self.cell = GruCell(w2, hidden, rng, dtype)
        self.attn = JointAttention(hidden, attn_dim, rng, dtype)
        self.head_w = w(hidden, num_classes, "head_w")
        self.head_b = ad.parameter(np.zeros(num_classes, dtype=dtype), "head_b")

    def forward(self, batch) -> SkeletonOutput:
        x = batch if isinstance(batch, Tensor) else Tensor(np.asarray(batch))
        if x.data.ndim != 4:
            raise ShapeError(f"skeleton batch must be (b, L, m, n), got {x.shape}")
        if x.shape[2] != self.num_joints or x.shape[3] != self.in_dim:
            raise ShapeError(
                f"expected (b, L, {self.num_joints}, {self.in_dim}), got {x.shape}"
            )
        h = graph_conv(x, self.graph, self.gc1)
        h = graph_conv(h, self.graph, self.gc2)
        hm = temporal_recur(h, self.cell)
        weights, pooled = joint_attention(hm, self.attn)
        logits = ad.matmul(pooled, self.head_w) + self.head_b
        return SkeletonOutput(logits=logits, feature=pooled, weights=weights)

    def params(self) -> dict:
        out = {"gc1": self.gc1, "gc2": self.gc2}
        out.update(self.cell.params())
        out.update(self.attn.params())
        out.update({"head_w": self.head_w, "head_b": self.head_b})
        return out

    def load_params(self, table: dict, dtype=np.float32) -> None:
        own = self.params()
        for name, tensor in own.items():
            if name not in table:
                raise KeyError(f"missing parameter {name!r}")
            arr = np.asarray(table[name], dtype=dtype)
            if arr.shape != tensor.data.shape:
                raise ShapeError(f"{name}: shape {arr.shape} != {tensor.data.shape}")
            tensor.data = arr.copy()
