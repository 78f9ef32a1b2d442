"""Neural-net building blocks on top of the autodiff engine: parameter
initialization, the residual block, the Adam optimizer and checkpoint I/O.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

_CKPT_MAGIC = b"SWFG"


def kaiming_uniform(rng: np.random.Generator, shape: tuple[int, ...],
                    fan_in: int, alpha: float = 0.1, dtype=np.float32) -> np.ndarray:
    gain = np.sqrt(2.0 / (1.0 + alpha * alpha))
    bound = gain * np.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def conv_param(rng: np.random.Generator, cout: int, cin: int, k: int,
               alpha: float = 0.1, dtype=np.float32) -> tuple[Tensor, Tensor]:
    w = kaiming_uniform(rng, (cout, cin, k, k), fan_in=cin * k * k, alpha=alpha, dtype=dtype)
    b = np.zeros(cout, dtype=dtype)
    return Tensor(w, requires_grad=True), Tensor(b, requires_grad=True)


def linear_param(rng: np.random.Generator, dout: int, din: int,
                 alpha: float = 0.1, dtype=np.float32) -> tuple[Tensor, Tensor]:
    w = kaiming_uniform(rng, (dout, din), fan_in=din, alpha=alpha, dtype=dtype)
    b = np.zeros(dout, dtype=dtype)
    return Tensor(w, requires_grad=True), Tensor(b, requires_grad=True)


def residual_block(x: Tensor, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor,
                   alpha: float = 0.1) -> Tensor:
    """x + conv(leaky_relu(conv(x))) with 3x3 same-padding, channel-preserving."""
    h = ad.conv2d(x, w1, b1, stride=1, padding=w1.data.shape[2] // 2)
    h = ad.leaky_relu(h, alpha)
    h = ad.conv2d(h, w2, b2, stride=1, padding=w2.data.shape[2] // 2)
    return ad.add(x, h)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """Bias-corrected Adam. Moment buffers are keyed per parameter tensor."""

    lr: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    step: int = 0
    m: dict[int, np.ndarray] = field(default_factory=dict)
    v: dict[int, np.ndarray] = field(default_factory=dict)


def adam_step(params: list[Tensor], state: AdamState) -> None:
    """One Adam update using each parameter's accumulated .grad (None = zero)."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for i, p in enumerate(params):
        g = p.grad
        if g is None:
            continue
        m = state.m.get(i)
        if m is None:
            m = state.m[i] = np.zeros_like(p.data, dtype=np.float64)
        v = state.v.get(i)
        if v is None:
            v = state.v[i] = np.zeros_like(p.data, dtype=np.float64)
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        update = state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        p.data = (p.data - update).astype(p.data.dtype)


# ---------------------------------------------------------------------------
# Checkpoints: JSON header + concatenated little-endian float32 tensors
# ---------------------------------------------------------------------------

def save_checkpoint(path: str | Path, params: dict[str, Tensor],
                    meta: dict | None = None) -> None:
    names = sorted(params)
    header = {
        "tensors": [{"name": n, "shape": list(params[n].data.shape)} for n in names],
        "meta": meta or {},
    }
    header_bytes = json.dumps(header).encode()
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for n in names:
            fh.write(np.ascontiguousarray(params[n].data, dtype="<f4").tobytes())


def load_checkpoint(path: str | Path) -> tuple[dict[str, Tensor], dict]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _CKPT_MAGIC:
            raise ValueError(f"{path}: not a swapforge checkpoint")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode())
        params: dict[str, Tensor] = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 4)
            arr = np.frombuffer(buf, dtype="<f4").reshape(shape).astype(np.float32)
            params[entry["name"]] = Tensor(arr.copy(), requires_grad=True)
    return params, header["meta"]
