"""Minimal ndarray autodiff kernel.

Every trainable layer in the package is built from the primitives here.
Values are numpy arrays; the graph is built eagerly and differentiated in
reverse mode by :func:`backprop`. Training runs in float32, gradient
verification in float64 (finite-difference tolerances are only meaningful
in 64-bit).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .errors import ContractError, ShapeError


class Tensor:
    """A node in the computation graph: value, parents, backward rule."""

    __slots__ = ("data", "requires_grad", "_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, parents=(), backward=None, name=""):
        self.data = np.asarray(data)
        self.requires_grad = requires_grad
        self._grad = None
        self._parents = tuple(parents)
        self._backward = backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def grad(self):
        if self._grad is None and self.requires_grad:
            return np.zeros_like(self.data)
        return self._grad

    def zero_grad(self):
        self._grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, name={self.name!r})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return index(self, idx)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def parameter(data, name="") -> Tensor:
    return Tensor(np.asarray(data), requires_grad=True, name=name)


def _accumulate(t: Tensor, g: np.ndarray):
    if t._grad is None:
        t._grad = g.astype(t.data.dtype, copy=True)
    else:
        t._grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce gradient g (broadcast shape) back to ``shape``."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _needs_grad(*ts):
    return any(t.requires_grad or t._parents for t in ts)


def _node(data, inputs, backward):
    tracked = [t for t in inputs if isinstance(t, Tensor)]
    if _needs_grad(*tracked):
        return Tensor(data, parents=tracked, backward=backward)
    return Tensor(data)


# --- elementwise and arithmetic primitives ---


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(out, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _node(out, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _node(out, (a, b), bw)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def bw(g):
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        )

    return _node(out, (a, b), bw)


def tanh(x) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)

    def bw(g):
        return (g * (1.0 - out * out),)

    return _node(out, (x,), bw)


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    # split by sign to stay stable for large |x|
    d = x.data
    out = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))), np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    out = out.astype(d.dtype, copy=False)

    def bw(g):
        return (g * out * (1.0 - out),)

    return _node(out, (x,), bw)


def relu(x) -> Tensor:
    x = as_tensor(x)
    out = np.maximum(x.data, 0.0)

    def bw(g):
        return (g * (x.data > 0),)

    return _node(out, (x,), bw)


def log(x) -> Tensor:
    x = as_tensor(x)
    out = np.log(x.data)

    def bw(g):
        return (g / x.data,)

    return _node(out, (x,), bw)


def exp(x) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)

    def bw(g):
        return (g * out,)

    return _node(out, (x,), bw)


# --- shape primitives ---


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    out = x.data.reshape(shape)

    def bw(g):
        return (g.reshape(x.shape),)

    return _node(out, (x,), bw)


def transpose(x, axes) -> Tensor:
    x = as_tensor(x)
    axes = tuple(axes)
    out = x.data.transpose(axes)
    inv = tuple(np.argsort(axes))

    def bw(g):
        return (g.transpose(inv),)

    return _node(out, (x,), bw)


def index(x, idx) -> Tensor:
    x = as_tensor(x)
    out = x.data[idx]

    def bw(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return (gx,)

    return _node(out, (x,), bw)


def concat(tensors, axis=0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(out, ts, bw)


def sum_(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _node(out, (x,), bw)


def mean(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    out = x.data.mean(axis=axis, keepdims=keepdims)
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])

    def bw(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape) / n,)

    return _node(out, (x,), bw)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError("matmul operands must have rank >= 2")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)

    def bw(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _node(out, (a, b), bw)


def softmax(x, axis=-1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return ((g - inner) * out,)

    return _node(out, (x,), bw)


# --- convolution and pooling ---


def _triple(v):
    if isinstance(v, (tuple, list)):
        if len(v) != 3:
            raise ShapeError(f"expected 3 entries, got {v}")
        return tuple(int(x) for x in v)
    return (int(v),) * 3


def _im2col(xp: np.ndarray, k, s, out_sp):
    b, cin = xp.shape[:2]
    kd, kh, kw = k
    sd, sh, sw = s
    do, ho, wo = out_sp
    sb, sc, s0, s1, s2 = xp.strides
    patches = as_strided(
        xp,
        shape=(b, cin, kd, kh, kw, do, ho, wo),
        strides=(sb, sc, s0, s1, s2, s0 * sd, s1 * sh, s2 * sw),
    )
    return patches.reshape(b, cin * kd * kh * kw, do * ho * wo)


def conv3d(x, weight, bias=None, stride=1, pad=0) -> Tensor:
    """3D convolution, zero padding, integer strides, no dilation.

    x: (b, cin, D, H, W); weight: (cout, cin, kd, kh, kw); bias: (cout,).
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.data.ndim != 5 or weight.data.ndim != 5:
        raise ShapeError(f"conv3d expects rank-5 input/weight, got {x.shape} and {weight.shape}")
    if x.shape[1] != weight.shape[1]:
        raise ShapeError(f"channel mismatch: input {x.shape[1]}, weight {weight.shape[1]}")
    s = _triple(stride)
    p = _triple(pad)
    b, cin, d, h, w = x.shape
    cout, _, kd, kh, kw = weight.shape
    do = (d + 2 * p[0] - kd) // s[0] + 1
    ho = (h + 2 * p[1] - kh) // s[1] + 1
    wo = (w + 2 * p[2] - kw) // s[2] + 1
    if min(do, ho, wo) < 1:
        raise ShapeError(f"kernel {weight.shape[2:]} too large for input {x.shape[2:]} with pad {p}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (p[0], p[0]), (p[1], p[1]), (p[2], p[2])))
    cols = _im2col(xp, (kd, kh, kw), s, (do, ho, wo))
    w2 = weight.data.reshape(cout, -1)
    out = np.matmul(w2, cols).reshape(b, cout, do, ho, wo)
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data.reshape(1, cout, 1, 1, 1)

    def bw(g):
        g2 = g.reshape(b, cout, -1)
        gw = np.einsum("bop,bkp->ok", g2, cols).reshape(weight.shape)
        gcols = np.matmul(w2.T, g2).reshape(b, cin, kd, kh, kw, do, ho, wo)
        gxp = np.zeros_like(xp)
        for i in range(kd):
            for j in range(kh):
                for k in range(kw):
                    gxp[
                        :,
                        :,
                        i : i + s[0] * do : s[0],
                        j : j + s[1] * ho : s[1],
                        k : k + s[2] * wo : s[2],
                    ] += gcols[:, :, i, j, k]
        gx = gxp[:, :, p[0] : p[0] + d, p[1] : p[1] + h, p[2] : p[2] + w]
        if bias is not None:
            gb = g.sum(axis=(0, 2, 3, 4))
            return gx, gw, gb
        return gx, gw

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return _node(out, inputs, bw)


def maxpool3d(x, size=2) -> Tensor:
    """Non-overlapping max pooling; each extent must divide its dim."""
    x = as_tensor(x)
    if x.data.ndim != 5:
        raise ShapeError(f"maxpool3d expects rank-5 input, got {x.shape}")
    sd, sh, sw = _triple(size)
    b, c, d, h, w = x.shape
    if d % sd or h % sh or w % sw:
        raise ShapeError(f"pool size {(sd, sh, sw)} does not divide input {(d, h, w)}")
    win = (
        x.data.reshape(b, c, d // sd, sd, h // sh, sh, w // sw, sw)
        .transpose(0, 1, 2, 4, 6, 3, 5, 7)
        .reshape(b, c, d // sd, h // sh, w // sw, sd * sh * sw)
    )
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]

    def bw(g):
        gwin = np.zeros_like(win)
        np.put_along_axis(gwin, arg[..., None], g[..., None], axis=-1)
        gx = (
            gwin.reshape(b, c, d // sd, h // sh, w // sw, sd, sh, sw)
            .transpose(0, 1, 2, 5, 3, 6, 4, 7)
            .reshape(b, c, d, h, w)
        )
        return (gx,)

    return _node(out, (x,), bw)


def avgpool3d(x, size=2) -> Tensor:
    """Non-overlapping mean pooling."""
    x = as_tensor(x)
    if x.data.ndim != 5:
        raise ShapeError(f"avgpool3d expects rank-5 input, got {x.shape}")
    sd, sh, sw = _triple(size)
    b, c, d, h, w = x.shape
    if d % sd or h % sh or w % sw:
        raise ShapeError(f"pool size {(sd, sh, sw)} does not divide input {(d, h, w)}")
    n = sd * sh * sw
    out = x.data.reshape(b, c, d // sd, sd, h // sh, sh, w // sw, sw).mean(axis=(3, 5, 7))

    def bw(g):
        gx = np.broadcast_to(
            g[:, :, :, None, :, None, :, None] / n,
            (b, c, d // sd, sd, h // sh, sh, w // sw, sw),
        )
        return (gx.reshape(b, c, d, h, w).copy(),)

    return _node(out, (x,), bw)


# --- loss ---


def cross_entropy(logits, targets) -> Tensor:
    """Mean negative log-softmax at the target class, over the batch."""
    logits = as_tensor(logits)
    if logits.data.ndim != 2:
        raise ShapeError(f"logits must be (b, i), got {logits.shape}")
    b, i = logits.shape
    if i < 2:
        raise ShapeError("need at least 2 classes")
    t = np.asarray(targets, dtype=np.int64)
    if t.shape != (b,):
        raise ShapeError(f"targets must be ({b},), got {t.shape}")
    if t.min() < 0 or t.max() >= i:
        raise IndexError(f"target outside [0, {i})")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    out = np.asarray((lse - shifted[np.arange(b), t]).mean())

    def bw(g):
        sm = np.exp(shifted)
        sm /= sm.sum(axis=1, keepdims=True)
        sm[np.arange(b), t] -= 1.0
        return (g * sm / b,)

    return _node(out, (logits,), bw)


# --- reverse pass ---


def backprop(root: Tensor) -> None:
    """Populate .grad for every tensor reachable from a scalar root."""
    if root.data.ndim != 0 and root.data.size != 1:
        raise ContractError(f"backprop root must be scalar, got shape {root.shape}")
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    root._grad = np.ones_like(root.data)
    for node in reversed(order):
        if node._backward is None or node._grad is None:
            continue
        grads = node._backward(node._grad)
        for parent, g in zip(node._parents, grads):
            if parent.requires_grad or parent._parents:
                _accumulate(parent, np.asarray(g))


def zero_grads(params) -> None:
    for p in params:
        p.zero_grad()


# --- finite-difference verifier ---


def fd_check(f, x: Tensor, h=1e-5, tol=None) -> float:
    """Max relative error between backprop and central differences.

    f maps a Tensor to a scalar Tensor. The check perturbs every coordinate
    of x; f must be smooth at x (nudge inputs away from relu/max kinks).
    Raises ContractError if tol is given and exceeded.
    """
    x.data = np.ascontiguousarray(x.data)
    x.zero_grad()
    out = f(x)
    backprop(out)
    analytic = np.array(x.grad, dtype=np.float64, copy=True)
    numeric = np.zeros_like(analytic)
    flat = x.data.reshape(-1)
    num_flat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(Tensor(x.data)).data)
        flat[i] = orig - h
        fm = float(f(Tensor(x.data)).data)
        flat[i] = orig
        num_flat[i] = (fp - fm) / (2.0 * h)
    denom = np.maximum(np.abs(analytic), 1e-8)
    err = float(np.max(np.abs(analytic - numeric) / denom)) if flat.size else 0.0
    if tol is not None and err > tol:
        raise ContractError(f"finite-difference check failed: max rel err {err:.3e} > {tol:.1e}")
    return err
