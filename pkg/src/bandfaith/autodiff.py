"""Small tape-based reverse-mode differentiation over dense float64 arrays.

The op set is fixed to what the scorer network needs. Build a graph by calling
the primitive methods on a :class:`Tape`; every call evaluates eagerly and
records a backward closure. ``Tape.backward`` then walks the recording in
reverse and fills ``Tensor.grad`` for every node.

Conventions:
  * images are NCHW, conv weights are (C_out, C_in, kh, kw)
  * relu uses subgradient 0 at exactly 0
  * max-pool routes the adjoint to the first maximal element of a window
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import NonScalarOutput, ShapeMismatch, StaleTape


class Tensor:
    __slots__ = ("value", "grad", "name", "requires_grad", "_parents", "_backward")

    def __init__(self, value, name=None, requires_grad=False):
        self.value = value
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward: Optional[Callable] = None

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(name={self.name!r}, shape={self.shape})"


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tape:
    """Records primitive ops in execution order (already topological)."""

    def __init__(self):
        self.nodes: list[Tensor] = []
        self.leaves: list[Tensor] = []
        self._consumed = False

    # -- graph construction -------------------------------------------------

    def leaf(self, value, name=None, requires_grad=True) -> Tensor:
        arr = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"non-finite values in leaf {name!r}")
        t = Tensor(arr, name=name, requires_grad=requires_grad)
        self.nodes.append(t)
        self.leaves.append(t)
        return t

    def constant(self, value, name=None) -> Tensor:
        return self.leaf(value, name=name, requires_grad=False)

    def _record(self, value, parents, backward) -> Tensor:
        t = Tensor(value, requires_grad=any(p.requires_grad for p in parents))
        t._parents = tuple(parents)
        t._backward = backward
        self.nodes.append(t)
        return t

    # -- primitives ---------------------------------------------------------

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        out = a.value + b.value
        return self._record(
            out, (a, b),
            lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        )

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        av, bv = a.value, b.value
        return self._record(
            av * bv, (a, b),
            lambda g: (_unbroadcast(g * bv, a.shape), _unbroadcast(g * av, b.shape)),
        )

    def relu(self, x: Tensor) -> Tensor:
        mask = x.value > 0
        return self._record(np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,))

    def dense(self, x: Tensor, w: Tensor, b: Tensor) -> Tensor:
        """Affine map ``x @ w + b`` with x (N, D), w (D, K), b (K,)."""
        if x.shape[-1] != w.shape[0] or b.shape != (w.shape[1],):
            raise ShapeMismatch(f"dense: x{x.shape} w{w.shape} b{b.shape}")
        xv, wv = x.value, w.value

        def backward(g):
            return g @ wv.T, xv.T @ g, g.sum(axis=0)

        return self._record(xv @ wv + b.value, (x, w, b), backward)

    def conv2d(self, x: Tensor, w: Tensor, b: Tensor, stride=1, padding=0) -> Tensor:
        """2-D cross-correlation via im2col; zero padding ``padding`` on both sides."""
        if x.value.ndim != 4 or w.value.ndim != 4 or x.shape[1] != w.shape[1]:
            raise ShapeMismatch(f"conv2d: x{x.shape} w{w.shape}")
        if b.shape != (w.shape[0],):
            raise ShapeMismatch(f"conv2d: bias {b.shape} for {w.shape[0]} filters")
        n, c, h, wd = x.shape
        c_out, _, kh, kw = w.shape
        s, p = stride, padding
        xp = np.pad(x.value, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.value
        if xp.shape[2] < kh or xp.shape[3] < kw:
            raise ShapeMismatch(f"conv2d: kernel {kh}x{kw} larger than padded input")
        win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::s, ::s]
        ho, wo = win.shape[2], win.shape[3]
        cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, c * kh * kw)
        wmat = w.value.reshape(c_out, -1)
        out = (cols @ wmat.T + b.value).reshape(n, ho, wo, c_out).transpose(0, 3, 1, 2)

        def backward(g):
            g2 = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(-1, c_out)
            dw = (g2.T @ cols).reshape(w.shape)
            db = g2.sum(axis=0)
            if not x.requires_grad:
                return None, dw, db
            dcols = (g2 @ wmat).reshape(n, ho, wo, c, kh, kw)
            dxp = np.zeros(xp.shape)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s] += (
                        dcols[..., i, j].transpose(0, 3, 1, 2)
                    )
            dx = dxp[:, :, p:p + h, p:p + wd] if p else dxp
            return dx, dw, db

        return self._record(out, (x, w, b), backward)

    def maxpool2x2(self, x: Tensor) -> Tensor:
        """2x2 max pooling, stride 2; a trailing odd row/column is dropped."""
        n, c, h, wd = x.shape
        ho, wo = h // 2, wd // 2
        if ho < 1 or wo < 1:
            raise ShapeMismatch(f"maxpool2x2: input too small {x.shape}")
        blocks = (
            x.value[:, :, :2 * ho, :2 * wo]
            .reshape(n, c, ho, 2, wo, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, ho, wo, 4)
        )
        idx = np.argmax(blocks, axis=-1)[..., None]  # first max on ties
        out = np.take_along_axis(blocks, idx, axis=-1)[..., 0]

        def backward(g):
            g4 = np.zeros((n, c, ho, wo, 4))
            np.put_along_axis(g4, idx, g[..., None], axis=-1)
            dx = np.zeros((n, c, h, wd))
            dx[:, :, :2 * ho, :2 * wo] = (
                g4.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * ho, 2 * wo)
            )
            return (dx,)

        return self._record(out, (x,), backward)

    def global_avg_pool(self, x: Tensor) -> Tensor:
        n, c, h, wd = x.shape
        return self._record(
            x.value.mean(axis=(2, 3)), (x,),
            lambda g: (np.broadcast_to(g[:, :, None, None] / (h * wd), x.shape).copy(),),
        )

    def l2_normalize(self, x: Tensor, eps=1e-12) -> Tensor:
        """Row-wise ``x / sqrt(sum(x^2) + eps)`` along the last axis."""
        xv = x.value
        r = np.sqrt(np.sum(xv * xv, axis=-1, keepdims=True) + eps)

        def backward(g):
            return (g / r - xv * np.sum(g * xv, axis=-1, keepdims=True) / r ** 3,)

        return self._record(xv / r, (x,), backward)

    def reduce_sum(self, x: Tensor, axis=None) -> Tensor:
        out = np.sum(x.value, axis=axis)

        def backward(g):
            if axis is None:
                return (np.full(x.shape, float(g)),)
            return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

        return self._record(np.asarray(out, dtype=np.float64), (x,), backward)

    def squared_distance(self, a: Tensor, b: Tensor) -> Tensor:
        """Sum of squared differences along the last axis."""
        diff = a.value - b.value

        def backward(g):
            gd = 2.0 * diff * np.asarray(g)[..., None]
            return _unbroadcast(gd, a.shape), _unbroadcast(-gd, b.shape)

        return self._record(np.sum(diff * diff, axis=-1), (a, b), backward)

    def softmax_cross_entropy(self, logits: Tensor, labels) -> Tensor:
        """Mean cross-entropy of integer ``labels`` under softmax(logits)."""
        labels = np.asarray(labels, dtype=np.int64)
        z = logits.value
        if z.ndim != 2 or labels.shape != (z.shape[0],):
            raise ShapeMismatch(f"softmax_cross_entropy: logits {z.shape} labels {labels.shape}")
        n = z.shape[0]
        shifted = z - z.max(axis=1, keepdims=True)
        log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        loss = -log_probs[np.arange(n), labels].mean()

        def backward(g):
            d = np.exp(log_probs)
            d[np.arange(n), labels] -= 1.0
            return (d * (float(g) / n),)

        return self._record(np.asarray(loss), (logits,), backward)

    # -- reverse pass -------------------------------------------------------

    def backward(self, output: Tensor) -> dict:
        """Populate ``.grad`` on every node; return ``{leaf name: grad}``."""
        if self._consumed:
            raise StaleTape("backward already ran on this tape; record a new forward pass")
        if output.value.size != 1:
            raise NonScalarOutput(f"backward needs a scalar output, got shape {output.shape}")
        self._consumed = True
        for node in self.nodes:
            node.grad = None
        output.grad = np.ones_like(output.value)
        for node in reversed(self.nodes):
            if node.grad is None or node._backward is None or not node.requires_grad:
                continue
            for parent, g in zip(node._parents, node._backward(node.grad)):
                if not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.array(g, dtype=np.float64)
                else:
                    parent.grad = parent.grad + g
        grads = {}
        for leaf in self.leaves:
            if leaf.requires_grad:
                g = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value)
                leaf.grad = g
                grads[leaf.name] = g
        return grads
