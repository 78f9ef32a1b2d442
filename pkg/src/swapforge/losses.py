"""Differentiable loss stack for training: SSIM/DSSIM, MSE and the masked
regional reconstruction loss, all expressed through the autodiff engine so
gradients flow to the reconstruction.

Tensors here are (N, C, H, W).  Values agree with `swapforge.metrics` (the
plain NumPy form) to float precision; the test suite pins that equivalence.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .metrics import LossWeights, SsimParams


_BAND_CACHE: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}


def _band_matrices(h: int, w: int, p: SsimParams, dtype) -> tuple[np.ndarray, np.ndarray]:
    """Banded matrices realizing valid-mode correlation with the separable
    Gaussian: out = Gh @ img @ Gw.T (rows of norm-1 separable factors)."""
    key = (h, w, p.window, p.sigma, np.dtype(dtype).name)
    cached = _BAND_CACHE.get(key)
    if cached is not None:
        return cached
    half = p.window // 2
    coords = np.arange(-half, half + 1, dtype=np.float64)
    g1 = np.exp(-(coords ** 2) / (2.0 * p.sigma ** 2))
    g1 = (g1 / g1.sum()).astype(dtype)

    def band(n_in: int) -> np.ndarray:
        n_out = n_in - p.window + 1
        m = np.zeros((n_out, n_in), dtype=dtype)
        for i in range(n_out):
            m[i, i:i + p.window] = g1
        return m

    out = (band(h), band(w))
    _BAND_CACHE[key] = out
    return out


def _filter_valid(t: Tensor, gh: np.ndarray, gw: np.ndarray) -> Tensor:
    """Separable valid-mode Gaussian correlation as a single autodiff op.

    forward: y = Gh @ x @ Gw.T per (n, c) plane; backward is the transposed
    pair, dx = Gh.T @ g @ Gw (the kernel is symmetric).
    """
    n, c, h, w = t.shape
    flat = t.data.reshape(n * c, h, w)
    out = np.matmul(np.matmul(gh, flat), gw.T)

    def backward(g: np.ndarray) -> None:
        if t.requires_grad:
            gflat = g.reshape(n * c, g.shape[2], g.shape[3])
            dx = np.matmul(np.matmul(gh.T, gflat), gw)
            t._accumulate(dx.reshape(t.data.shape))

    oh, ow = out.shape[1], out.shape[2]
    return Tensor(out.reshape(n, c, oh, ow), parents=(t,), backward=backward)


def mse_loss(x: Tensor, y: Tensor) -> Tensor:
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    return ad.mean(ad.square(ad.sub(x, y)))


def ssim_loss(x: Tensor, y: Tensor, p: SsimParams = SsimParams()) -> Tensor:
    """Mean SSIM over all valid window positions and channels, as a tensor."""
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.shape[2] < p.window or x.shape[3] < p.window:
        raise ValueError(f"SSIM window {p.window} larger than input {x.shape[2]}x{x.shape[3]}")
    gh, gw = _band_matrices(x.shape[2], x.shape[3], p, x.data.dtype)
    c1, c2 = p.c1, p.c2

    mu_x = _filter_valid(x, gh, gw)
    mu_y = _filter_valid(y, gh, gw)
    xx = ad.sub(_filter_valid(ad.mul(x, x), gh, gw), ad.mul(mu_x, mu_x))
    yy = ad.sub(_filter_valid(ad.mul(y, y), gh, gw), ad.mul(mu_y, mu_y))
    xy = ad.sub(_filter_valid(ad.mul(x, y), gh, gw), ad.mul(mu_x, mu_y))

    num = ad.mul(ad.add(ad.mul(ad.mul(mu_x, mu_y), 2.0), c1), ad.add(ad.mul(xy, 2.0), c2))
    den = ad.mul(ad.add(ad.add(ad.mul(mu_x, mu_x), ad.mul(mu_y, mu_y)), c1),
                 ad.add(ad.add(xx, yy), c2))
    return ad.mean(ad.div(num, den))


def dssim_loss(x: Tensor, y: Tensor, p: SsimParams = SsimParams()) -> Tensor:
    return ad.mul(ad.sub(1.0, ssim_loss(x, y, p)), 0.5)


def recon_loss(x: Tensor, y: Tensor, p: SsimParams = SsimParams()) -> Tensor:
    return ad.add(dssim_loss(x, y, p), mse_loss(x, y))


def _mask_tensor(mask: np.ndarray, like: Tensor) -> Tensor:
    """Broadcast an (H, W) or (N, H, W) mask across channels as a constant."""
    n, c, h, w = like.shape
    m = np.asarray(mask, dtype=like.data.dtype)
    if m.ndim == 2:
        m = m[None]
    if m.shape[1:] != (h, w):
        raise ValueError(f"mask shape {m.shape} does not match input {like.shape}")
    full = np.broadcast_to(m[:, None], (n, c, h, w))
    return Tensor(np.ascontiguousarray(full))


def masked_loss(
    x: Tensor,
    y: Tensor,
    m_face: np.ndarray,
    m_eye: np.ndarray,
    m_mouth: np.ndarray,
    w: LossWeights = LossWeights(),
    p: SsimParams = SsimParams(),
) -> Tensor:
    """face + lambda_eye * eye + lambda_mouth * mouth regional recon losses."""
    mf = _mask_tensor(m_face, x)
    me = _mask_tensor(m_eye, x)
    mm = _mask_tensor(m_mouth, x)
    total = recon_loss(ad.mul(x, mf), ad.mul(y, mf), p)
    total = ad.add(total, ad.mul(recon_loss(ad.mul(x, me), ad.mul(y, me), p), w.lambda_eye))
    total = ad.add(total, ad.mul(recon_loss(ad.mul(x, mm), ad.mul(y, mm), p), w.lambda_mouth))
    return total
