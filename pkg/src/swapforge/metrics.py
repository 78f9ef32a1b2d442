"""Reconstruction metrics: MSE, SSIM/DSSIM, the masked regional loss, and the
skewed accuracy model-selection metric.

This is the plain (non-differentiable) form used for evaluation and the CLI;
`swapforge.losses` provides the autodiff-aware twin used in training.  Both
share the parameter dataclasses defined here.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imaging import ensure_image, ensure_mask


@dataclass(frozen=True)
class LossWeights:
    """Regional loss weights; eye and mouth terms get emphasized."""

    lambda_eye: float = 3.0
    lambda_mouth: float = 2.0

    def __post_init__(self) -> None:
        if self.lambda_eye < 0 or self.lambda_mouth < 0:
            raise ValueError("loss weights must be >= 0")


@dataclass(frozen=True)
class SsimParams:
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0

    def __post_init__(self) -> None:
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError("SSIM window must be odd and >= 3")
        if self.sigma <= 0:
            raise ValueError("SSIM sigma must be > 0")

    @property
    def c1(self) -> float:
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.dynamic_range) ** 2


def gaussian_window(window: int, sigma: float) -> np.ndarray:
    """2-D Gaussian weights normalized to sum exactly 1."""
    half = window // 2
    coords = np.arange(-half, half + 1, dtype=np.float64)
    g1 = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    g2 = np.outer(g1, g1)
    return g2 / g2.sum()


def _check_pair(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = ensure_image(x)
    y = ensure_image(y)
    if x.shape != y.shape:
        raise ValueError(f"image shapes differ: {x.shape} vs {y.shape}")
    return x, y


def mse(x: np.ndarray, y: np.ndarray) -> float:
    """Mean over all samples of (x - y)^2."""
    x, y = _check_pair(x, y)
    return float(np.mean((x - y) ** 2))


def _valid_filter(plane: np.ndarray, g1: np.ndarray) -> np.ndarray:
    """Separable valid-mode correlation with the 1-D Gaussian g1 on both axes."""
    k = g1.size
    h, w = plane.shape
    # rows: windowed dot products along axis 1, then axis 0
    rows = np.empty((h, w - k + 1), dtype=np.float64)
    for i in range(k):
        col = plane[:, i:i + w - k + 1]
        if i == 0:
            np.multiply(col, g1[i], out=rows)
        else:
            rows += col * g1[i]
    out = np.empty((h - k + 1, w - k + 1), dtype=np.float64)
    for i in range(k):
        row = rows[i:i + h - k + 1]
        if i == 0:
            np.multiply(row, g1[i], out=out)
        else:
            out += row * g1[i]
    return out


def ssim_map(x: np.ndarray, y: np.ndarray, p: SsimParams = SsimParams()) -> np.ndarray:
    """Local SSIM over all fully-interior window positions, one map per channel.

    Returns an array of shape (H - window + 1, W - window + 1, C).
    """
    x, y = _check_pair(x, y)
    h, w = x.shape[:2]
    if p.window > h or p.window > w:
        raise ValueError(f"SSIM window {p.window} larger than image {h}x{w}")
    half = p.window // 2
    coords = np.arange(-half, half + 1, dtype=np.float64)
    g1 = np.exp(-(coords ** 2) / (2.0 * p.sigma ** 2))
    # normalize the separable factors so the outer product sums to 1
    g1 = g1 / g1.sum()

    c1, c2 = p.c1, p.c2
    maps = []
    for c in range(x.shape[2]):
        xc, yc = x[..., c], y[..., c]
        mu_x = _valid_filter(xc, g1)
        mu_y = _valid_filter(yc, g1)
        xx = _valid_filter(xc * xc, g1) - mu_x * mu_x
        yy = _valid_filter(yc * yc, g1) - mu_y * mu_y
        xy = _valid_filter(xc * yc, g1) - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + c1) * (2.0 * xy + c2)
        den = (mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2)
        maps.append(num / den)
    return np.stack(maps, axis=-1)


def ssim(x: np.ndarray, y: np.ndarray, p: SsimParams = SsimParams()) -> float:
    """Mean SSIM with a Gaussian window; channel-mean for RGB. In [-1, 1]."""
    return float(np.mean(ssim_map(x, y, p)))


def dssim(x: np.ndarray, y: np.ndarray, p: SsimParams = SsimParams()) -> float:
    """Structural dissimilarity, (1 - SSIM) / 2. In [0, 1]."""
    return (1.0 - ssim(x, y, p)) / 2.0


def recon_loss(x: np.ndarray, y: np.ndarray, p: SsimParams = SsimParams()) -> float:
    return dssim(x, y, p) + mse(x, y)


def masked_loss(
    x: np.ndarray,
    y: np.ndarray,
    m_face: np.ndarray,
    m_eye: np.ndarray,
    m_mouth: np.ndarray,
    w: LossWeights = LossWeights(),
    p: SsimParams = SsimParams(),
) -> float:
    """Weighted sum of reconstruction losses over face, eye and mouth regions.

    The masks multiply both inputs before the metric is computed (broadcast
    across channels), so pixels that both masks zero out compare as equal.
    """
    x, y = _check_pair(x, y)
    m_face, m_eye, m_mouth = (ensure_mask(m) for m in (m_face, m_eye, m_mouth))
    for m in (m_face, m_eye, m_mouth):
        if m.shape != x.shape[:2]:
            raise ValueError(f"mask shape {m.shape} does not match image {x.shape[:2]}")
    total = recon_loss(x * m_face[..., None], y * m_face[..., None], p)
    total += w.lambda_eye * recon_loss(x * m_eye[..., None], y * m_eye[..., None], p)
    total += w.lambda_mouth * recon_loss(x * m_mouth[..., None], y * m_mouth[..., None], p)
    return total


def skewed_accuracy(acc_fake: float, acc_real: float, l1: float = 1.0, l2: float = 3.0) -> float:
    """Validation selection metric l1 * Acc(Fake) + l2 * Acc(Real)."""
    if not (0.0 <= acc_fake <= 1.0 and 0.0 <= acc_real <= 1.0):
        raise ValueError("accuracies must lie in [0, 1]")
    return l1 * acc_fake + l2 * acc_real
