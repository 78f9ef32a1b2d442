"""Pixel containers, landmark geometry, resampling and morphology primitives.

Conventions used everywhere in this package:

- images are float arrays of shape (H, W, C) with C in {1, 3}, values in [0, 1]
- masks are float arrays of shape (H, W), values in [0, 1]; a "binary" mask
  only holds {0, 1}
- landmarks are (68, 2) float arrays of (x, y) pixel coordinates in the
  standard 68-point annotation order
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from PIL import Image


class DegenerateGeometryError(ValueError):
    """Raised when a geometric fit has no unique solution (e.g. collinear points)."""


def ensure_image(img: np.ndarray, channels: int | None = None) -> np.ndarray:
    """Validate an (H, W, C) image array and return it as float64."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ValueError(f"expected (H, W, C) image with C in (1, 3), got shape {img.shape}")
    if img.shape[0] == 0 or img.shape[1] == 0:
        raise ValueError("empty image")
    if channels is not None and img.shape[2] != channels:
        raise ValueError(f"expected {channels}-channel image, got {img.shape[2]}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite samples")
    return img


def ensure_mask(mask: np.ndarray, binary: bool = False) -> np.ndarray:
    """Validate an (H, W) mask array and return it as float64."""
    mask = np.asarray(mask, dtype=np.float64)
    if mask.ndim != 2:
        raise ValueError(f"expected (H, W) mask, got shape {mask.shape}")
    if not np.all(np.isfinite(mask)):
        raise ValueError("mask contains non-finite samples")
    if mask.min() < 0.0 or mask.max() > 1.0:
        raise ValueError("mask values outside [0, 1]")
    if binary and not np.all((mask == 0.0) | (mask == 1.0)):
        raise ValueError("expected a binary mask with values in {0, 1}")
    return mask


def ensure_landmarks(lm: np.ndarray) -> np.ndarray:
    lm = np.asarray(lm, dtype=np.float64)
    if lm.shape != (68, 2):
        raise ValueError(f"expected (68, 2) landmarks, got shape {lm.shape}")
    if not np.all(np.isfinite(lm)):
        raise ValueError("landmarks contain non-finite coordinates")
    return lm


# ---------------------------------------------------------------------------
# Similarity transforms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimilarityTransform:
    """p' = scale * R(rotation) @ p + (tx, ty), with rotation in radians."""

    scale: float = 1.0
    rotation: float = 0.0
    tx: float = 0.0
    ty: float = 0.0

    def __post_init__(self) -> None:
        if not (self.scale > 0.0 and math.isfinite(self.scale)):
            raise ValueError(f"similarity scale must be > 0, got {self.scale}")

    def matrix(self) -> np.ndarray:
        """2x3 matrix [sR | t] mapping source points to destination points."""
        c = self.scale * math.cos(self.rotation)
        s = self.scale * math.sin(self.rotation)
        return np.array([[c, -s, self.tx], [s, c, self.ty]], dtype=np.float64)

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        m = self.matrix()
        return pts @ m[:, :2].T + m[:, 2]

    def inverse(self) -> "SimilarityTransform":
        inv_scale = 1.0 / self.scale
        c = inv_scale * math.cos(-self.rotation)
        s = inv_scale * math.sin(-self.rotation)
        return SimilarityTransform(
            scale=inv_scale,
            rotation=-self.rotation,
            tx=-(c * self.tx - s * self.ty),
            ty=-(s * self.tx + c * self.ty),
        )

    @staticmethod
    def identity() -> "SimilarityTransform":
        return SimilarityTransform()

    def to_dict(self) -> dict:
        return {"scale": self.scale, "rotation": self.rotation, "tx": self.tx, "ty": self.ty}

    @staticmethod
    def from_dict(d: dict) -> "SimilarityTransform":
        return SimilarityTransform(scale=d["scale"], rotation=d["rotation"], tx=d["tx"], ty=d["ty"])


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------

def _sample_nearest(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    xi = np.rint(xs).astype(np.int64)
    yi = np.rint(ys).astype(np.int64)
    inside = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
    xi = np.clip(xi, 0, w - 1)
    yi = np.clip(yi, 0, h - 1)
    out = img[yi, xi]
    out[~inside] = 0.0
    return out


def _sample_bilinear(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = (xs - x0)[..., None]
    fy = (ys - y0)[..., None]

    def tap(yy: np.ndarray, xx: np.ndarray) -> np.ndarray:
        inside = (xx >= 0) & (xx < w) & (yy >= 0) & (yy < h)
        vals = img[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]
        vals[~inside] = 0.0
        return vals

    top = tap(y0, x0) * (1 - fx) + tap(y0, x0 + 1) * fx
    bot = tap(y0 + 1, x0) * (1 - fx) + tap(y0 + 1, x0 + 1) * fx
    return top * (1 - fy) + bot * fy


def transform_points(t: SimilarityTransform, points: np.ndarray) -> np.ndarray:
    """Apply a transform to pixel-indexed points via the corner-anchored lift.

    Pixel index (x, y) addresses the continuous position (x+0.5, y+0.5), so a
    pure scale maps pixel blocks onto pixel blocks; warp_similarity uses the
    same convention, keeping transformed landmarks glued to image features.
    """
    pts = np.asarray(points, dtype=np.float64)
    return t.apply(pts + 0.5) - 0.5


def warp_similarity(
    img: np.ndarray,
    t: SimilarityTransform,
    out_size: tuple[int, int],
    interp: str = "bilinear",
) -> np.ndarray:
    """Warp an image through a similarity transform into an (out_h, out_w) canvas.

    Output pixel q samples the input at inverse(t)(q + 0.5) - 0.5 (the corner-
    anchored convention of transform_points); samples falling outside the
    input are 0.  `interp` is "nearest" or "bilinear".
    """
    img = ensure_image(img)
    out_h, out_w = out_size
    if out_h <= 0 or out_w <= 0:
        raise ValueError(f"out_size must be positive, got {out_size}")
    if interp not in ("nearest", "bilinear"):
        raise ValueError(f"unknown interpolation {interp!r}")

    inv = t.inverse().matrix()
    ys, xs = np.meshgrid(np.arange(out_h, dtype=np.float64) + 0.5,
                         np.arange(out_w, dtype=np.float64) + 0.5, indexing="ij")
    src_x = inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2] - 0.5
    src_y = inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2] - 0.5

    if interp == "nearest":
        out = _sample_nearest(img, src_x, src_y)
    else:
        out = _sample_bilinear(img, src_x, src_y)
    return np.clip(out, 0.0, 1.0)


def warp_mask_similarity(mask: np.ndarray, t: SimilarityTransform,
                         out_size: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbour warp for masks; preserves binarity."""
    mask = ensure_mask(mask)
    warped = warp_similarity(mask[..., None], t, out_size, interp="nearest")
    return warped[..., 0]


def resize_bilinear(img: np.ndarray, out_size: tuple[int, int]) -> np.ndarray:
    """Bilinear resize with pixel-center alignment."""
    img = ensure_image(img)
    out_h, out_w = out_size
    in_h, in_w = img.shape[:2]
    # center-aligned mapping: out pixel center -> in pixel center
    sx = in_w / out_w
    sy = in_h / out_h
    xs = (np.arange(out_w, dtype=np.float64) + 0.5) * sx - 0.5
    ys = (np.arange(out_h, dtype=np.float64) + 0.5) * sy - 0.5
    gx, gy = np.meshgrid(xs, ys)
    # clamp instead of zero-fill: resize should not invent dark borders
    gx = np.clip(gx, 0, in_w - 1)
    gy = np.clip(gy, 0, in_h - 1)
    return np.clip(_sample_bilinear(img, gx, gy), 0.0, 1.0)


# ---------------------------------------------------------------------------
# Morphology
# ---------------------------------------------------------------------------

def erode_mask(mask: np.ndarray, radius: int) -> np.ndarray:
    """L-inf erosion of a binary mask with a (2*radius+1)^2 square element.

    A pixel survives iff every pixel in its neighbourhood is 1; the image
    border counts as 0, so the mask always pulls away from the frame edge.
    """
    mask = ensure_mask(mask, binary=True)
    radius = int(radius)
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if radius == 0:
        return mask.copy()
    k = 2 * radius + 1
    padded = np.pad(mask, radius, mode="constant", constant_values=0.0)
    # separable min: L-inf structuring elements factor into per-axis windows
    rows = sliding_window_view(padded, k, axis=0).min(axis=-1)
    out = sliding_window_view(rows, k, axis=1).min(axis=-1)
    return np.ascontiguousarray(out)


def intersect_masks(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pointwise minimum of two masks of equal size."""
    a = ensure_mask(a)
    b = ensure_mask(b)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    return np.minimum(a, b)


def laplacian(img: np.ndarray) -> np.ndarray:
    """5-point Laplacian (4c - up - down - left - right) with replicate border.

    Input must be single-channel; the returned array is the same size and is
    intentionally not clamped to [0, 1].
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        if img.shape[2] != 1:
            raise ValueError("laplacian expects a single-channel image")
        img = img[..., 0]
    if img.ndim != 2:
        raise ValueError(f"expected 2-D single-channel image, got shape {img.shape}")
    p = np.pad(img, 1, mode="edge")
    # difference form keeps constants exactly zero in float arithmetic
    return ((img - p[:-2, 1:-1]) + (img - p[2:, 1:-1])
            + (img - p[1:-1, :-2]) + (img - p[1:-1, 2:]))


# ---------------------------------------------------------------------------
# Colour conversions (sRGB <-> CIE L*a*b*, D65 white)
# ---------------------------------------------------------------------------

_D65 = np.array([0.95047, 1.0, 1.08883])
_RGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
# renormalize rows so RGB(1,1,1) lands exactly on the D65 white point
_RGB_TO_XYZ *= (_D65 / _RGB_TO_XYZ.sum(axis=1))[:, None]
_XYZ_TO_RGB = np.linalg.inv(_RGB_TO_XYZ)


def rgb_to_gray(img: np.ndarray) -> np.ndarray:
    """Rec. 601 luma; returns an (H, W, 1) image."""
    img = ensure_image(img, channels=3)
    gray = img @ np.array([0.299, 0.587, 0.114])
    return gray[..., None]


def _srgb_to_linear(c: np.ndarray) -> np.ndarray:
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def _linear_to_srgb(c: np.ndarray) -> np.ndarray:
    c = np.clip(c, 0.0, None)
    return np.where(c <= 0.0031308, c * 12.92, 1.055 * c ** (1.0 / 2.4) - 0.055)


def _lab_f(t: np.ndarray) -> np.ndarray:
    delta = 6.0 / 29.0
    return np.where(t > delta ** 3, np.cbrt(t), t / (3 * delta ** 2) + 4.0 / 29.0)


def _lab_f_inv(t: np.ndarray) -> np.ndarray:
    delta = 6.0 / 29.0
    return np.where(t > delta, t ** 3, 3 * delta ** 2 * (t - 4.0 / 29.0))


def rgb_to_lab(img: np.ndarray) -> np.ndarray:
    """sRGB in [0,1] -> CIE L*a*b* (L in [0,100], a/b roughly [-128,127])."""
    img = ensure_image(img, channels=3)
    xyz = _srgb_to_linear(img) @ _RGB_TO_XYZ.T
    fxyz = _lab_f(xyz / _D65)
    lab = np.empty_like(img)
    lab[..., 0] = 116.0 * fxyz[..., 1] - 16.0
    lab[..., 1] = 500.0 * (fxyz[..., 0] - fxyz[..., 1])
    lab[..., 2] = 200.0 * (fxyz[..., 1] - fxyz[..., 2])
    return lab


def lab_to_rgb(lab: np.ndarray) -> np.ndarray:
    """Inverse of rgb_to_lab; out-of-gamut colours are clamped to [0, 1]."""
    lab = np.asarray(lab, dtype=np.float64)
    if lab.ndim != 3 or lab.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) Lab image, got shape {lab.shape}")
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    xyz = np.stack([_lab_f_inv(fx), _lab_f_inv(fy), _lab_f_inv(fz)], axis=-1) * _D65
    rgb = _linear_to_srgb(xyz @ _XYZ_TO_RGB.T)
    return np.clip(rgb, 0.0, 1.0)


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

def load_image(path: str | Path) -> np.ndarray:
    """Load an 8-bit PNG (RGB or grayscale) as (H, W, C) float in [0, 1]."""
    with Image.open(path) as im:
        if im.mode in ("L", "I;16"):
            arr = np.asarray(im.convert("L"), dtype=np.float64)[..., None]
        else:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def save_image(img: np.ndarray, path: str | Path) -> None:
    """Save an image as 8-bit PNG: round(v*255) clamped."""
    img = ensure_image(img)
    arr = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    if arr.shape[2] == 1:
        Image.fromarray(arr[..., 0], mode="L").save(path)
    else:
        Image.fromarray(arr, mode="RGB").save(path)


def load_mask(path: str | Path, binary: bool = True) -> np.ndarray:
    """Load an 8-bit grayscale PNG mask; threshold 128 when binarity is required."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float64)
    if binary:
        return (arr >= 128.0).astype(np.float64)
    return arr / 255.0


def save_mask(mask: np.ndarray, path: str | Path) -> None:
    mask = ensure_mask(mask)
    arr = np.clip(np.rint(mask * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path)


def load_landmarks(path: str | Path) -> np.ndarray:
    """Landmarks serialized as a JSON array of 68 [x, y] pairs."""
    with open(path) as fh:
        data = json.load(fh)
    return ensure_landmarks(np.asarray(data, dtype=np.float64))


def save_landmarks(lm: np.ndarray, path: str | Path) -> None:
    lm = ensure_landmarks(lm)
    with open(path, "w") as fh:
        json.dump([[float(x), float(y)] for x, y in lm], fh)


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write text via temp file + rename so readers never see partial content."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)
