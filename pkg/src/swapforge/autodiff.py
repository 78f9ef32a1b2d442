"""Minimal reverse-mode automatic differentiation on NumPy arrays.

Graphs are built define-by-run and discarded after each backward pass.  Ops
cover exactly what the swap model and its loss need: elementwise arithmetic,
reductions, matmul-backed linear layers, 2-D convolution, activations and the
two upsampling primitives.  Binary ops require matching shapes (or a Python
scalar); callers broadcast explicitly.
"""
from __future__ import annotations

from typing import Callable

import numpy as np


class TrainingDiverged(RuntimeError):
    """Raised when a forward pass or loss produces NaN/Inf."""


class Tensor:
    """N-dimensional value node. `grad` is allocated lazily during backward."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(
        self,
        data: np.ndarray,
        requires_grad: bool = False,
        parents: tuple["Tensor", ...] = (),
        backward: Callable[[np.ndarray], None] | None = None,
    ):
        self.data = data
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Reverse-topological traversal seeding this (scalar) node with grad 1."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar loss tensor")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    """Wrap external data as a leaf tensor (validated finite)."""
    arr = np.asarray(data, dtype=dtype)
    if not issubclass(arr.dtype.type, np.floating):
        arr = arr.astype(np.float64)
    if not np.all(np.isfinite(arr)):
        raise TrainingDiverged("non-finite values in tensor input")
    return Tensor(arr, requires_grad=requires_grad)


def _coerce(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


def _binary(a: Tensor, b, fwd, bwd_a, bwd_b) -> Tensor:
    b = _coerce(b, a) if not isinstance(b, Tensor) else b
    if isinstance(a, (int, float)):
        a = _coerce(a, b)
    if a.data.shape != b.data.shape and a.data.size != 1 and b.data.size != 1:
        raise ValueError(f"shape mismatch: {a.data.shape} vs {b.data.shape}")
    out_data = fwd(a.data, b.data)

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            ga = bwd_a(g, a.data, b.data)
            a._accumulate(_unbroadcast(ga, a.data.shape))
        if b.requires_grad:
            gb = bwd_b(g, a.data, b.data)
            b._accumulate(_unbroadcast(gb, b.data.shape))

    return Tensor(out_data, parents=(a, b), backward=backward)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    # only scalar-vs-array broadcasting is permitted above
    if int(np.prod(shape)) != 1:
        raise ValueError(f"cannot reduce gradient of shape {g.shape} to {shape}")
    return np.sum(g).reshape(shape)


def add(a, b) -> Tensor:
    return _binary(a, b, lambda x, y: x + y,
                   lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b) -> Tensor:
    return _binary(a, b, lambda x, y: x - y,
                   lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b) -> Tensor:
    return _binary(a, b, lambda x, y: x * y,
                   lambda g, x, y: g * y, lambda g, x, y: g * x)


def div(a, b) -> Tensor:
    return _binary(a, b, lambda x, y: x / y,
                   lambda g, x, y: g / y, lambda g, x, y: -g * x / (y * y))


def square(a: Tensor) -> Tensor:
    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(2.0 * a.data * g)
    return Tensor(a.data * a.data, parents=(a,), backward=backward)


def mean(a: Tensor) -> Tensor:
    n = a.data.size

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(np.full_like(a.data, float(g) / n))
    return Tensor(np.asarray(a.data.mean(), dtype=a.dtype), parents=(a,), backward=backward)


def tsum(a: Tensor) -> Tensor:
    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(np.full_like(a.data, float(g)))
    return Tensor(np.asarray(a.data.sum(), dtype=a.dtype), parents=(a,), backward=backward)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    in_shape = a.data.shape

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g.reshape(in_shape))
    return Tensor(a.data.reshape(shape), parents=(a,), backward=backward)


def leaky_relu(a: Tensor, alpha: float = 0.1) -> Tensor:
    mask = a.data >= 0

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g * np.where(mask, 1.0, alpha))
    return Tensor(np.where(mask, a.data, alpha * a.data), parents=(a,), backward=backward)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    # numerically stable split at 0
    s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.clip(x, 0, None))),
                 np.exp(np.clip(x, None, 0)) / (1.0 + np.exp(np.clip(x, None, 0))))

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g * s * (1.0 - s))
    return Tensor(s.astype(x.dtype), parents=(a,), backward=backward)


# ---------------------------------------------------------------------------
# Linear
# ---------------------------------------------------------------------------

def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x[N, Din] @ w[Dout, Din].T + b[Dout]."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[1]:
        raise ValueError(f"linear shape mismatch: x{x.data.shape} w{w.data.shape}")
    if b.data.shape != (w.data.shape[0],):
        raise ValueError(f"bias shape {b.data.shape} does not match Dout={w.data.shape[0]}")
    out = x.data @ w.data.T + b.data

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            x._accumulate(g @ w.data)
        if w.requires_grad:
            w._accumulate(g.T @ x.data)
        if b.requires_grad:
            b._accumulate(g.sum(axis=0))

    return Tensor(out, parents=(x, w, b), backward=backward)


# ---------------------------------------------------------------------------
# Convolution (im2col)
# ---------------------------------------------------------------------------

def _im2col(x: np.ndarray, k: int, stride: int, padding: int) -> tuple[np.ndarray, tuple]:
    n, c, h, w = x.shape
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    hp, wp = x.shape[2], x.shape[3]
    oh = (hp - k) // stride + 1
    ow = (wp - k) // stride + 1
    windows = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride]  # (n, c, oh, ow, k, k)
    cols = windows.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * k * k, oh * ow)
    return np.ascontiguousarray(cols), (n, c, hp, wp, oh, ow)


def _col2im(dcols: np.ndarray, geom: tuple, k: int, stride: int, padding: int) -> np.ndarray:
    n, c, hp, wp, oh, ow = geom
    dx_pad = np.zeros((n, c, hp, wp), dtype=dcols.dtype)
    dcols = dcols.reshape(n, c, k, k, oh, ow)
    for i in range(k):
        for j in range(k):
            dx_pad[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += dcols[:, :, i, j]
    if padding:
        return dx_pad[:, :, padding:hp - padding, padding:wp - padding]
    return dx_pad


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of x[N,Cin,H,W] with w[Cout,Cin,K,K] plus bias b[Cout]."""
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ValueError("conv2d expects 4-D input and weight")
    cout, cin, k, k2 = w.data.shape
    if k != k2 or k % 2 == 0:
        raise ValueError(f"conv2d kernel must be square and odd, got {k}x{k2}")
    if x.data.shape[1] != cin:
        raise ValueError(f"input channels {x.data.shape[1]} != weight Cin {cin}")
    if b.data.shape != (cout,):
        raise ValueError(f"bias shape {b.data.shape} does not match Cout={cout}")

    cols, geom = _im2col(x.data, k, stride, padding)
    n, _, _, _, oh, ow = geom
    wmat = w.data.reshape(cout, cin * k * k)
    out = np.matmul(wmat, cols)
    out += b.data[None, :, None]
    out = out.reshape(n, cout, oh, ow)

    def backward(g: np.ndarray) -> None:
        gmat = g.reshape(n, cout, oh * ow)
        if b.requires_grad:
            b._accumulate(gmat.sum(axis=(0, 2)))
        if w.requires_grad:
            dw = np.matmul(gmat, cols.transpose(0, 2, 1)).sum(axis=0)
            w._accumulate(dw.reshape(w.data.shape))
        if x.requires_grad:
            dcols = np.matmul(wmat.T, gmat)
            x._accumulate(_col2im(dcols, geom, k, stride, padding))

    return Tensor(out, parents=(x, w, b), backward=backward)


# ---------------------------------------------------------------------------
# Upsampling
# ---------------------------------------------------------------------------

def nn_upsample(x: Tensor, factor: int) -> Tensor:
    """Nearest-neighbour upsampling by an integer factor on H and W."""
    if x.data.ndim != 4:
        raise ValueError("nn_upsample expects N,C,H,W input")
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if factor == 1:
        return reshape(x, x.data.shape)
    n, c, h, w = x.data.shape
    out = np.repeat(np.repeat(x.data, factor, axis=2), factor, axis=3)

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            # each source pixel collects the grads of its factor x factor block
            gsum = g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5))
            x._accumulate(gsum)

    return Tensor(out, parents=(x,), backward=backward)


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """Rearrange (N, C*r^2, H, W) -> (N, C, rH, rW).

    out[n, c, r*h+dy, r*w+dx] = in[n, c*r^2 + dy*r + dx, h, w]
    """
    if x.data.ndim != 4:
        raise ValueError("pixel_shuffle expects N,C,H,W input")
    n, crr, h, w = x.data.shape
    if r < 1 or crr % (r * r) != 0:
        raise ValueError(f"channels {crr} not divisible by r^2 = {r * r}")
    c = crr // (r * r)
    out = (x.data.reshape(n, c, r, r, h, w)
           .transpose(0, 1, 4, 2, 5, 3)
           .reshape(n, c, h * r, w * r))

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            gin = (g.reshape(n, c, h, r, w, r)
                   .transpose(0, 1, 3, 5, 2, 4)
                   .reshape(n, crr, h, w))
            x._accumulate(np.ascontiguousarray(gin))

    return Tensor(np.ascontiguousarray(out), parents=(x,), backward=backward)
