"""Training-time augmentation: CLAHE, LAB colour jitter, random affine and the
scheduled grid warp (input-only, first half of training).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .imaging import (
    SimilarityTransform,
    ensure_image,
    ensure_mask,
    lab_to_rgb,
    rgb_to_lab,
    warp_mask_similarity,
    warp_similarity,
)

N_BINS = 256
_L_MAX = 100.0


def _tile_mappings(lum: np.ndarray, clip_limit: float, tiles: tuple[int, int]) -> tuple:
    """Per-tile clipped-histogram bin mappings for the L channel.

    A tile's mapping m(b) satisfies: a uniform histogram maps to the identity,
    and a degenerate (single-valued) tile is left untouched.  Mapping values
    are float bin positions.
    """
    h, w = lum.shape
    ty, tx = tiles
    bins = np.minimum((lum / _L_MAX * N_BINS).astype(np.int64), N_BINS - 1)
    bins = np.maximum(bins, 0)

    y_edges = np.linspace(0, h, ty + 1).astype(int)
    x_edges = np.linspace(0, w, tx + 1).astype(int)
    mappings = np.empty((ty, tx, N_BINS))
    identity = np.arange(N_BINS, dtype=np.float64)
    for i in range(ty):
        for j in range(tx):
            tile = lum[y_edges[i]:y_edges[i + 1], x_edges[j]:x_edges[j + 1]]
            tile_bins = bins[y_edges[i]:y_edges[i + 1], x_edges[j]:x_edges[j + 1]]
            if tile.size == 0 or tile.max() - tile.min() < 1e-12:
                mappings[i, j] = identity
                continue
            hist = np.bincount(tile_bins.reshape(-1), minlength=N_BINS).astype(np.float64)
            limit = max(clip_limit * tile.size / N_BINS, 1.0)
            excess = np.maximum(hist - limit, 0.0).sum()
            hist = np.minimum(hist, limit) + excess / N_BINS
            cum = np.cumsum(hist)
            # midpoint rule: uniform histograms map each bin exactly to itself
            m = N_BINS * (cum - hist / 2.0) / tile.size - 0.5
            mappings[i, j] = np.clip(m, 0.0, N_BINS - 1)

    cy = (y_edges[:-1] + y_edges[1:]) / 2.0 - 0.5
    cx = (x_edges[:-1] + x_edges[1:]) / 2.0 - 0.5
    return mappings, bins, cy, cx


def clahe(img: np.ndarray, clip_limit: float = 2.0, tiles: tuple[int, int] = (8, 8)) -> np.ndarray:
    """Contrast-limited adaptive histogram equalization on the Lab L channel.

    Tile mappings are bilinearly interpolated per pixel.  The mapping is
    applied as a bin-displacement added to the original value, so constant
    images are exact fixed points and intra-bin detail survives.
    """
    img = ensure_image(img, channels=3)
    lab = rgb_to_lab(img)
    lum = np.clip(lab[..., 0], 0.0, _L_MAX)
    h, w = lum.shape
    ty, tx = tiles
    if ty < 1 or tx < 1:
        raise ValueError("tile grid must be at least 1x1")

    mappings, bins, cy, cx = _tile_mappings(lum, clip_limit, (ty, tx))

    ys = np.arange(h, dtype=np.float64)
    xs = np.arange(w, dtype=np.float64)
    iy = np.clip(np.searchsorted(cy, ys) - 1, 0, max(ty - 2, 0))
    ix = np.clip(np.searchsorted(cx, xs) - 1, 0, max(tx - 2, 0))
    if ty > 1:
        fy = np.clip((ys - cy[iy]) / np.maximum(cy[iy + 1] - cy[iy], 1e-12), 0.0, 1.0)
    else:
        iy = np.zeros(h, dtype=int)
        fy = np.zeros(h)
    if tx > 1:
        fx = np.clip((xs - cx[ix]) / np.maximum(cx[ix + 1] - cx[ix], 1e-12), 0.0, 1.0)
    else:
        ix = np.zeros(w, dtype=int)
        fx = np.zeros(w)

    iy2 = np.minimum(iy + 1, ty - 1)
    ix2 = np.minimum(ix + 1, tx - 1)
    b = bins

    def gather(rows, cols):
        return mappings[rows[:, None], cols[None, :], b]

    wy = fy[:, None]
    wx = fx[None, :]
    mapped = ((1 - wy) * (1 - wx) * gather(iy, ix)
              + (1 - wy) * wx * gather(iy, ix2)
              + wy * (1 - wx) * gather(iy2, ix)
              + wy * wx * gather(iy2, ix2))

    shift = (mapped - b) * (_L_MAX / N_BINS)
    out_lab = lab.copy()
    out_lab[..., 0] = np.clip(lum + shift, 0.0, _L_MAX)
    return lab_to_rgb(out_lab)


@dataclass
class AugmentConfig:
    clahe_prob: float = 0.5
    clahe_clip: float = 2.0
    clahe_tiles: tuple[int, int] = (8, 8)
    lab_light_range: float = 10.0   # additive, L units (0..100)
    lab_color_range: float = 5.0    # additive, a/b units
    rot_max: float = 10.0           # degrees
    scale_range: tuple[float, float] = (0.95, 1.05)
    trans_max: float = 0.05         # fraction of image size
    warp_strength: float = 0.04     # grid displacement, fraction of size
    warp_enabled: Callable[[int], bool] = field(default=lambda step: True)
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.clahe_prob <= 1.0:
            raise ValueError("clahe_prob must be in [0, 1]")

    @staticmethod
    def for_schedule(total_steps: int, **kwargs) -> "AugmentConfig":
        """Warp on for the first half of training, off afterwards."""
        return AugmentConfig(warp_enabled=lambda step: step < total_steps / 2, **kwargs)

    @staticmethod
    def disabled() -> "AugmentConfig":
        """Identity augmentation (used by the deterministic toy profile)."""
        return AugmentConfig(clahe_prob=0.0, lab_light_range=0.0, lab_color_range=0.0,
                             rot_max=0.0, scale_range=(1.0, 1.0), trans_max=0.0,
                             warp_strength=0.0, warp_enabled=lambda step: False)


def lab_jitter(img: np.ndarray, d_light: float, d_a: float, d_b: float) -> np.ndarray:
    lab = rgb_to_lab(img)
    lab[..., 0] = np.clip(lab[..., 0] + d_light, 0.0, _L_MAX)
    lab[..., 1] += d_a
    lab[..., 2] += d_b
    return lab_to_rgb(lab)


def _centered_affine(shape: tuple[int, int], scale: float, theta: float,
                     tx: float, ty: float) -> SimilarityTransform:
    """Similarity about the image center plus a translation, in corner coords."""
    h, w = shape
    c = np.array([w / 2.0, h / 2.0])
    cs, sn = scale * math.cos(theta), scale * math.sin(theta)
    rot_c = np.array([cs * c[0] - sn * c[1], sn * c[0] + cs * c[1]])
    t = c + np.array([tx, ty]) - rot_c
    return SimilarityTransform(scale=scale, rotation=theta, tx=float(t[0]), ty=float(t[1]))


def sample_affine(shape: tuple[int, int], cfg: AugmentConfig,
                  rng: np.random.Generator) -> SimilarityTransform:
    h, w = shape
    theta = math.radians(rng.uniform(-cfg.rot_max, cfg.rot_max)) if cfg.rot_max > 0 else 0.0
    lo, hi = cfg.scale_range
    scale = rng.uniform(lo, hi) if hi > lo else lo
    tx = rng.uniform(-cfg.trans_max, cfg.trans_max) * w if cfg.trans_max > 0 else 0.0
    ty = rng.uniform(-cfg.trans_max, cfg.trans_max) * h if cfg.trans_max > 0 else 0.0
    return _centered_affine(shape, scale, theta, tx, ty)


def grid_warp(img: np.ndarray, strength: float, rng: np.random.Generator,
              nodes: int = 5) -> np.ndarray:
    """Random smooth warp: displacements on a nodes x nodes grid, bilinearly
    interpolated to a dense field; samples are clamped at the border."""
    img = ensure_image(img)
    h, w = img.shape[:2]
    amp = strength * min(h, w)
    disp = rng.uniform(-amp, amp, size=(nodes, nodes, 2))

    # dense field via separable linear interpolation of the node grid
    gy = np.linspace(0, nodes - 1, h)
    gx = np.linspace(0, nodes - 1, w)
    i0y = np.clip(np.floor(gy).astype(int), 0, nodes - 2)
    i0x = np.clip(np.floor(gx).astype(int), 0, nodes - 2)
    fy = (gy - i0y)[:, None, None]
    fx = (gx - i0x)[None, :, None]
    top = disp[i0y][:, i0x] * (1 - fx) + disp[i0y][:, i0x + 1] * fx
    bot = disp[i0y + 1][:, i0x] * (1 - fx) + disp[i0y + 1][:, i0x + 1] * fx
    field = top * (1 - fy) + bot * fy  # (h, w, 2): dx, dy

    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    sample_x = np.clip(xs + field[..., 0], 0, w - 1)
    sample_y = np.clip(ys + field[..., 1], 0, h - 1)

    x0 = np.floor(sample_x).astype(int)
    y0 = np.floor(sample_y).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fxs = (sample_x - x0)[..., None]
    fys = (sample_y - y0)[..., None]
    out = (img[y0, x0] * (1 - fxs) * (1 - fys) + img[y0, x1] * fxs * (1 - fys)
           + img[y1, x0] * (1 - fxs) * fys + img[y1, x1] * fxs * fys)
    return np.clip(out, 0.0, 1.0)


def augment(img: np.ndarray, step: int, cfg: AugmentConfig,
            rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """One augmented (input, target) pair.

    CLAHE -> LAB jitter -> affine are shared by input and target; the grid
    warp hits the input only, and only while the schedule predicate is true.
    """
    pair, _ = augment_with_masks(img, {}, step, cfg, rng)
    return pair


def augment_with_masks(
    img: np.ndarray,
    masks: dict[str, np.ndarray],
    step: int,
    cfg: AugmentConfig,
    rng: np.random.Generator,
) -> tuple[tuple[np.ndarray, np.ndarray], dict[str, np.ndarray]]:
    """augment() plus the same geometric transform applied to region masks."""
    img = ensure_image(img, channels=3)
    h, w = img.shape[:2]

    if cfg.clahe_prob > 0 and rng.random() < cfg.clahe_prob:
        img = clahe(img, cfg.clahe_clip, cfg.clahe_tiles)

    if cfg.lab_light_range > 0 or cfg.lab_color_range > 0:
        img = lab_jitter(
            img,
            rng.uniform(-cfg.lab_light_range, cfg.lab_light_range),
            rng.uniform(-cfg.lab_color_range, cfg.lab_color_range),
            rng.uniform(-cfg.lab_color_range, cfg.lab_color_range),
        )

    out_masks = dict(masks)
    has_affine = (cfg.rot_max > 0 or cfg.trans_max > 0
                  or cfg.scale_range[0] != 1.0 or cfg.scale_range[1] != 1.0)
    if has_affine:
        t = sample_affine((h, w), cfg, rng)
        img = warp_similarity(img, t, (h, w), interp="bilinear")
        out_masks = {k: warp_mask_similarity(ensure_mask(m), t, (h, w))
                     for k, m in masks.items()}

    target = img
    inp = img
    if cfg.warp_strength > 0 and cfg.warp_enabled(step):
        inp = grid_warp(img, cfg.warp_strength, rng)
    return (inp, target), out_masks
