"""Minimal reverse-mode autodiff over numpy arrays.

Tensors wrap float64 ndarrays and record a backward closure per op. The
op set is exactly what the model needs: broadcast arithmetic, matmul,
conv/RoI-align (delegated to the kernels backend), a few activations,
and fused loss ops with analytic gradients. Gradients accumulate into
`.grad` after calling `backward()` on a scalar.
"""

from __future__ import annotations

import numpy as np

from .. import kernels


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce `grad` back to `shape` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, parents=()):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(
            p.requires_grad for p in parents)
        self._parents = parents if self.requires_grad else ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def _accumulate(self, grad: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic --------------------------------------------------------

    def _lift(self, other) -> "Tensor":
        return other if isinstance(other, Tensor) else Tensor(other)

    def __add__(self, other):
        other = self._lift(other)
        out = Tensor(self.data + other.data, parents=(self, other))

        def bwd(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.data.shape))
        out._backward = bwd
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.data, parents=(self,))

        def bwd(g):
            if self.requires_grad:
                self._accumulate(-g)
        out._backward = bwd
        return out

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) + (-self)

    def __mul__(self, other):
        other = self._lift(other)
        out = Tensor(self.data * other.data, parents=(self, other))

        def bwd(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.data.shape))
        out._backward = bwd
        return out

    __rmul__ = __mul__

    def matmul(self, other: "Tensor") -> "Tensor":
        out = Tensor(self.data @ other.data, parents=(self, other))

        def bwd(g):
            if self.requires_grad:
                self._accumulate(g @ other.data.T)
            if other.requires_grad:
                other._accumulate(self.data.T @ g)
        out._backward = bwd
        return out

    # -- shape -------------------------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        out = Tensor(self.data.reshape(*shape), parents=(self,))

        def bwd(g):
            if self.requires_grad:
                self._accumulate(g.reshape(self.data.shape))
        out._backward = bwd
        return out

    def permute(self, *axes) -> "Tensor":
        out = Tensor(self.data.transpose(axes), parents=(self,))
        inv = tuple(np.argsort(axes))

        def bwd(g):
            if self.requires_grad:
                self._accumulate(g.transpose(inv))
        out._backward = bwd
        return out

    def take_rows(self, idx: np.ndarray) -> "Tensor":
        idx = np.asarray(idx, dtype=np.int64)
        out = Tensor(self.data[idx], parents=(self,))

        def bwd(g):
            if self.requires_grad:
                full = np.zeros_like(self.data)
                np.add.at(full, idx, g)
                self._accumulate(full)
        out._backward = bwd
        return out

    # -- activations / reductions ------------------------------------------

    def relu(self) -> "Tensor":
        out = Tensor(np.maximum(self.data, 0.0), parents=(self,))

        def bwd(g):
            if self.requires_grad:
                self._accumulate(g * (self.data > 0.0))
        out._backward = bwd
        return out

    def sigmoid(self) -> "Tensor":
        s = 1.0 / (1.0 + np.exp(-self.data))
        out = Tensor(s, parents=(self,))

        def bwd(g):
            if self.requires_grad:
                self._accumulate(g * s * (1.0 - s))
        out._backward = bwd
        return out

    def sum(self) -> "Tensor":
        out = Tensor(self.data.sum(), parents=(self,))

        def bwd(g):
            if self.requires_grad:
                self._accumulate(np.full_like(self.data, float(g)))
        out._backward = bwd
        return out

    def mean(self) -> "Tensor":
        n = self.data.size
        out = Tensor(self.data.mean(), parents=(self,))

        def bwd(g):
            if self.requires_grad:
                self._accumulate(np.full_like(self.data, float(g) / n))
        out._backward = bwd
        return out

    def mean_hw(self) -> "Tensor":
        """Global average pool: (N, C, H, W) -> (N, C)."""
        n_hw = self.data.shape[2] * self.data.shape[3]
        out = Tensor(self.data.mean(axis=(2, 3)), parents=(self,))

        def bwd(g):
            if self.requires_grad:
                self._accumulate(
                    np.broadcast_to(g[:, :, None, None] / n_hw,
                                    self.data.shape).copy())
        out._backward = bwd
        return out

    def group_norm(self, gamma: "Tensor", beta: "Tensor", groups: int,
                   eps: float = 1e-5) -> "Tensor":
        """Per-sample group normalization over (N, C, ...) with affine."""
        x = self.data
        n, c = x.shape[0], x.shape[1]
        if c % groups:
            raise ValueError(f"channels {c} not divisible by groups {groups}")
        xg = x.reshape(n, groups, -1)
        m = xg.shape[2]
        mu = xg.mean(axis=2, keepdims=True)
        var = xg.var(axis=2, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = ((xg - mu) * inv).reshape(x.shape)
        cshape = (1, c) + (1,) * (x.ndim - 2)
        gam = gamma.data.reshape(cshape)
        out = Tensor(xhat * gam + beta.data.reshape(cshape),
                     parents=(self, gamma, beta))

        def bwd(g):
            axes = (0,) + tuple(range(2, x.ndim))
            if beta.requires_grad:
                beta._accumulate(g.sum(axis=axes).reshape(beta.data.shape))
            if gamma.requires_grad:
                gamma._accumulate(
                    (g * xhat).sum(axis=axes).reshape(gamma.data.shape))
            if self.requires_grad:
                dxh = (g * gam).reshape(n, groups, m)
                xh = xhat.reshape(n, groups, m)
                gx = inv * (dxh - dxh.mean(axis=2, keepdims=True)
                            - xh * (dxh * xh).mean(axis=2, keepdims=True))
                self._accumulate(gx.reshape(x.shape))
        out._backward = bwd
        return out


# ---------------------------------------------------------------------------
# structural ops


def conv2d(x: Tensor, w: Tensor, b: Tensor | None, stride: int,
           pad: int) -> Tensor:
    """2-d convolution (N,Ci,H,W) * (Co,Ci,kh,kw) -> (N,Co,Ho,Wo)."""
    y = kernels.conv2d_fwd(x.data, w.data, stride, pad)
    if b is not None:
        y = y + b.data[None, :, None, None]
    parents = (x, w) if b is None else (x, w, b)
    out = Tensor(y, parents=parents)
    h, wd = x.data.shape[2], x.data.shape[3]
    kh, kw = w.data.shape[2], w.data.shape[3]

    def bwd(g):
        g = np.ascontiguousarray(g)
        if x.requires_grad:
            x._accumulate(kernels.conv2d_bwd_x(g, w.data, stride, pad, h, wd))
        if w.requires_grad:
            w._accumulate(kernels.conv2d_bwd_w(x.data, g, kh, kw, stride, pad))
        if b is not None and b.requires_grad:
            b._accumulate(g.sum(axis=(0, 2, 3)))
    out._backward = bwd
    return out


def upsample2x(x: Tensor) -> Tensor:
    """Nearest-neighbor 2x upsample of (N, C, H, W)."""
    y = x.data.repeat(2, axis=2).repeat(2, axis=3)
    out = Tensor(y, parents=(x,))

    def bwd(g):
        if x.requires_grad:
            n, c, h2, w2 = g.shape
            gx = g.reshape(n, c, h2 // 2, 2, w2 // 2, 2).sum(axis=(3, 5))
            x._accumulate(gx)
    out._backward = bwd
    return out


def roi_align(x: Tensor, rois: np.ndarray, out_size: int) -> Tensor:
    """Sampled RoI pooling; `rois` rows are [batch, x0, y0, x1, y1] in
    feature-map coordinates (constant, not differentiated)."""
    rois = np.ascontiguousarray(rois, dtype=np.float64)
    y = kernels.roi_align_fwd(x.data, rois, out_size)
    out = Tensor(y, parents=(x,))
    n, _, h, w = x.data.shape

    def bwd(g):
        if x.requires_grad:
            x._accumulate(kernels.roi_align_bwd(
                np.ascontiguousarray(g), rois, n, h, w))
    out._backward = bwd
    return out


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax of a 2-d tensor."""
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=1, keepdims=True)
    out = Tensor(s, parents=(x,))

    def bwd(g):
        if x.requires_grad:
            dot = (g * s).sum(axis=1, keepdims=True)
            x._accumulate(s * (g - dot))
    out._backward = bwd
    return out


# ---------------------------------------------------------------------------
# fused loss ops (scalar outputs, analytic gradients)


def cross_entropy(logits: Tensor, target: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy; `target` holds class indices."""
    target = np.asarray(target, dtype=np.int64)
    m = logits.data.shape[0]
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    nll = -np.log(np.maximum(p[np.arange(m), target], 1e-300))
    out = Tensor(nll.mean(), parents=(logits,))

    def bwd(g):
        if logits.requires_grad:
            gl = p.copy()
            gl[np.arange(m), target] -= 1.0
            logits._accumulate(gl * (float(g) / m))
    out._backward = bwd
    return out


def binary_kl(probs: Tensor, target: np.ndarray) -> Tensor:
    """Mean over rows of the summed per-cell binary KL divergence.

    For probabilities p and targets t this is BCE(p, t) minus the target
    entropy, so a perfect fit scores exactly zero and the gradient matches
    plain binary cross-entropy.
    """
    t = np.asarray(target, dtype=np.float64)
    p = np.clip(probs.data, 1e-12, 1.0 - 1e-12)
    m = p.shape[0]
    t_safe = np.where(t > 0.0, t, 1.0)
    u_safe = np.where(t < 1.0, 1.0 - t, 1.0)
    pos = t * np.log(t_safe / p)
    neg = (1.0 - t) * np.log(u_safe / (1.0 - p))
    val = (pos + neg).reshape(m, -1).sum(axis=1).mean()
    out = Tensor(val, parents=(probs,))

    def bwd(g):
        if probs.requires_grad:
            grad = (-t / p + (1.0 - t) / (1.0 - p)) * (float(g) / m)
            probs._accumulate(grad.reshape(probs.data.shape))
    out._backward = bwd
    return out


def smooth_l1(pred: Tensor, target: np.ndarray, beta: float = 1.0) -> Tensor:
    """Mean smooth-L1 (Huber) distance to a constant target."""
    t = np.asarray(target, dtype=np.float64)
    d = pred.data - t
    ad = np.abs(d)
    per = np.where(ad < beta, 0.5 * d * d / beta, ad - 0.5 * beta)
    n = max(per.size, 1)
    out = Tensor(per.sum() / n, parents=(pred,))

    def bwd(g):
        if pred.requires_grad:
            grad = np.where(ad < beta, d / beta, np.sign(d))
            pred._accumulate(grad * (float(g) / n))
    out._backward = bwd
    return out


def l1_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    """Mean absolute error to a constant target."""
    t = np.asarray(target, dtype=np.float64)
    d = pred.data - t
    n = max(d.size, 1)
    out = Tensor(np.abs(d).sum() / n, parents=(pred,))

    def bwd(g):
        if pred.requires_grad:
            pred._accumulate(np.sign(d) * (float(g) / n))
    out._backward = bwd
    return out
