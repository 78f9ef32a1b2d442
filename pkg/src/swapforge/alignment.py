"""Canonical face alignment: Procrustes similarity registration against a
bundled frontal template, the 512 aligned crop, and the central-80% training
crop.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .imaging import (
    DegenerateGeometryError,
    SimilarityTransform,
    ensure_image,
    ensure_landmarks,
    resize_bilinear,
    transform_points,
    warp_similarity,
)

ALIGNED_SIZE = 512

_DATA_DIR = Path(__file__).parent / "data"


@lru_cache(maxsize=None)
def canonical_template_2d() -> np.ndarray:
    """Mean frontal 68-point layout in the 512x512 aligned space."""
    with open(_DATA_DIR / "canonical_face_2d_512.json") as fh:
        return np.asarray(json.load(fh), dtype=np.float64)


@lru_cache(maxsize=None)
def canonical_template_3d() -> np.ndarray:
    """Bilaterally-symmetric 3-D 68-point template used for pose estimation."""
    with open(_DATA_DIR / "canonical_face_3d.json") as fh:
        return np.asarray(json.load(fh), dtype=np.float64)


@dataclass(frozen=True)
class AlignmentResult:
    transform: SimilarityTransform  # source frame -> aligned 512 space
    aligned_image: np.ndarray       # (512, 512, 3)
    aligned_landmarks: np.ndarray   # (68, 2)


def estimate_alignment(lm: np.ndarray, template2d: np.ndarray | None = None) -> SimilarityTransform:
    """Closed-form least-squares similarity mapping landmarks onto the template.

    Umeyama's solution: centroids out, rotation from the polar factor of the
    2x2 cross-covariance (reflection excluded), scale from the trace.
    """
    lm = ensure_landmarks(lm)
    if template2d is None:
        template2d = canonical_template_2d()
    dst = np.asarray(template2d, dtype=np.float64)
    if dst.shape != lm.shape:
        raise ValueError(f"template shape {dst.shape} does not match landmarks {lm.shape}")

    # corner-anchored lift keeps the fit consistent with warp_similarity
    src = lm + 0.5
    dst = dst + 0.5

    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    src_c = src - mu_s
    dst_c = dst - mu_d
    var_s = float(np.mean(np.sum(src_c ** 2, axis=1)))
    if var_s < 1e-12:
        raise DegenerateGeometryError("landmarks have zero spatial variance")

    cov = dst_c.T @ src_c / src.shape[0]
    u, d, vt = np.linalg.svd(cov)
    if d[1] <= 1e-12 * max(d[0], 1e-300):
        raise DegenerateGeometryError("landmarks are collinear; similarity fit is not unique")
    s = np.ones(2)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s[1] = -1.0  # forbid reflections
    rot = u @ np.diag(s) @ vt
    scale = float(np.sum(d * s) / var_s)
    if scale <= 0:
        raise DegenerateGeometryError("similarity fit collapsed to non-positive scale")
    t = mu_d - scale * rot @ mu_s
    return SimilarityTransform(
        scale=scale,
        rotation=math.atan2(rot[1, 0], rot[0, 0]),
        tx=float(t[0]),
        ty=float(t[1]),
    )


def align_face(img: np.ndarray, lm: np.ndarray) -> AlignmentResult:
    """Warp a face into the canonical 512x512 space, carrying landmarks along."""
    img = ensure_image(img, channels=3)
    transform = estimate_alignment(lm)
    aligned = warp_similarity(img, transform, (ALIGNED_SIZE, ALIGNED_SIZE), interp="bilinear")
    return AlignmentResult(
        transform=transform,
        aligned_image=aligned,
        aligned_landmarks=transform_points(transform, lm),
    )


def train_crop(img: np.ndarray, out_size: int = 256) -> np.ndarray:
    """Central 80% window, bilinear-resized to out_size.

    For the canonical 512 input the window is rows/cols [51, 461):
    round(0.8 * 512) = 410 and floor((512 - 410) / 2) = 51.
    """
    img = ensure_image(img)
    h, w = img.shape[:2]
    if h != w:
        raise ValueError(f"train_crop expects a square input, got {h}x{w}")
    win = int(round(0.8 * h))
    start = (h - win) // 2
    window = img[start:start + win, start:start + win]
    return resize_bilinear(window, (out_size, out_size))


def crop_window_bounds(size: int) -> tuple[int, int]:
    """[start, stop) of the central-80% window for a given square size."""
    win = int(round(0.8 * size))
    start = (size - win) // 2
    return start, start + win


def save_alignment_sidecar(path: str | Path, t: SimilarityTransform) -> None:
    with open(path, "w") as fh:
        json.dump(t.to_dict(), fh)


def load_alignment_sidecar(path: str | Path) -> SimilarityTransform:
    with open(path) as fh:
        return SimilarityTransform.from_dict(json.load(fh))
