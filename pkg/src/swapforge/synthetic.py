"""Synthetic two-identity shape datasets for desk-scale training and tests.

Each sample is a face-like arrangement (colour-dominant ellipse, two eye dots,
a mouth bar) on a dark background, together with the face/eye/mouth region
masks the masked loss needs.  Identity A skews red, identity B skews blue.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _ellipse_mask(size: int, cy: float, cx: float, ry: float, rx: float) -> np.ndarray:
    ys, xs = np.mgrid[0:size, 0:size]
    return (((ys - cy) / ry) ** 2 + ((xs - cx) / rx) ** 2 <= 1.0).astype(np.float64)


@dataclass(frozen=True)
class IdentityPalette:
    face_lo: tuple[float, float, float]
    face_hi: tuple[float, float, float]
    eye_color: tuple[float, float, float] = (0.95, 0.95, 0.2)
    mouth_color: tuple[float, float, float] = (0.1, 0.9, 0.3)


RED_IDENTITY = IdentityPalette(face_lo=(0.55, 0.05, 0.05), face_hi=(0.95, 0.30, 0.30))
BLUE_IDENTITY = IdentityPalette(face_lo=(0.05, 0.05, 0.55), face_hi=(0.30, 0.30, 0.95))


class ShapeFaceDataset:
    """Deterministic generator of (image, region-mask) samples for one identity."""

    def __init__(self, size: int, palette: IdentityPalette, seed: int):
        self.size = size
        self.palette = palette
        self.seed = seed

    def sample(self, index: int) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        """Sample `index` is a pure function of (seed, index)."""
        rng = np.random.default_rng((self.seed, index))
        s = self.size
        img = np.full((s, s, 3), 0.06)

        cy = s * rng.uniform(0.44, 0.56)
        cx = s * rng.uniform(0.44, 0.56)
        ry = s * rng.uniform(0.30, 0.38)
        rx = s * rng.uniform(0.24, 0.32)
        face = _ellipse_mask(s, cy, cx, ry, rx)
        lo = np.asarray(self.palette.face_lo)
        hi = np.asarray(self.palette.face_hi)
        face_color = lo + (hi - lo) * rng.uniform(size=3)
        img[face > 0.5] = face_color

        eye_dy = ry * 0.35
        eye_dx = rx * 0.42
        eye_r = max(s * 0.035, 1.5)
        eyes = np.maximum(
            _ellipse_mask(s, cy - eye_dy, cx - eye_dx, eye_r, eye_r),
            _ellipse_mask(s, cy - eye_dy, cx + eye_dx, eye_r, eye_r),
        )
        img[eyes > 0.5] = np.asarray(self.palette.eye_color)

        mouth = _ellipse_mask(s, cy + ry * 0.45, cx, max(s * 0.03, 1.2), rx * 0.45)
        img[mouth > 0.5] = np.asarray(self.palette.mouth_color)

        masks = {"face": face, "eye": eyes, "mouth": mouth}
        return np.clip(img, 0.0, 1.0), masks

    def batch(self, indices: list[int]) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        """Stacked NCHW images and NHW mask arrays for the given sample ids."""
        imgs, masks = zip(*(self.sample(i) for i in indices))
        batch_imgs = np.stack([im.transpose(2, 0, 1) for im in imgs]).astype(np.float32)
        batch_masks = {key: np.stack([m[key] for m in masks]).astype(np.float32)
                       for key in ("face", "eye", "mouth")}
        return batch_imgs, batch_masks


def toy_identity_pair(size: int = 64, seed: int = 0) -> tuple[ShapeFaceDataset, ShapeFaceDataset]:
    """The red/blue identity pair used by the toy training profile."""
    return (ShapeFaceDataset(size, RED_IDENTITY, seed),
            ShapeFaceDataset(size, BLUE_IDENTITY, seed + 1))


def write_faceset(out_dir, identity: str, dataset: ShapeFaceDataset, count: int):
    """Materialize a synthetic faceset on disk: images, region masks and a
    manifest (with scores pre-filled so the gates are immediately runnable).
    Returns the manifest path."""
    from pathlib import Path

    from .curation import FaceRecord, FacesetManifest, save_manifest
    from .imaging import save_image, save_mask

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for i in range(count):
        img, masks = dataset.sample(i)
        rid = f"{identity}_{i:04d}"
        save_image(img, out / f"{rid}.png")
        mask_paths = {}
        for key in ("face", "eye", "mouth"):
            mask_paths[key] = f"{rid}.{key}.png"
            save_mask(masks[key], out / mask_paths[key])
        records.append(FaceRecord(
            id=rid,
            image_path=f"{rid}.png",
            face_mask_path=mask_paths["face"],
            eye_mask_path=mask_paths["eye"],
            mouth_mask_path=mask_paths["mouth"],
            blur_score=500.0,
            yaw=0.0,
            pitch=0.0,
            face_size=float(dataset.size),
        ))
    manifest = FacesetManifest(identity=identity, records=records)
    path = out / f"{identity}.jsonl"
    save_manifest(manifest, path)
    return path
