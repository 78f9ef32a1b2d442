"""Training-data adapters over curated faceset manifests."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .curation import FacesetManifest, load_manifest
from .imaging import load_image, load_mask


class FacesetDataset:
    """Samples kept (accepted/pending) records from a faceset manifest.

    Images are expected to be the aligned square crops the curation pipeline
    writes; region masks are read from the record's mask paths.  Records
    without eye/mouth masks fall back to an all-ones face mask and empty
    eye/mouth masks so the loss degenerates gracefully to plain recon.
    """

    def __init__(self, manifest: FacesetManifest | str | Path, images_root: str | Path = "."):
        if not isinstance(manifest, FacesetManifest):
            manifest = load_manifest(manifest)
        self.root = Path(images_root)
        self.records = [r for r in manifest.records if r.status in ("pending", "accepted")]
        if not self.records:
            raise ValueError(f"faceset {manifest.identity!r} has no kept records")
        self.identity = manifest.identity

    def __len__(self) -> int:
        return len(self.records)

    def sample(self, index: int) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        record = self.records[index % len(self.records)]
        img = load_image(self.root / record.image_path)
        h, w = img.shape[:2]
        masks = {}
        for key, path in (("face", record.face_mask_path),
                          ("eye", record.eye_mask_path),
                          ("mouth", record.mouth_mask_path)):
            if path is not None and (self.root / path).exists():
                masks[key] = load_mask(self.root / path)
            else:
                masks[key] = np.ones((h, w)) if key == "face" else np.zeros((h, w))
        return img, masks
