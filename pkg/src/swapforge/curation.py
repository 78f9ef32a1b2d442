"""Faceset curation: quality scoring, pose gating, identity-cluster filtering,
near-duplicate removal and the persistent JSONL manifest the review UI edits.

Automatic steps only ever move *pending* records to auto_rejected; manually
accepted/rejected records are never touched.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .alignment import canonical_template_3d
from .imaging import (
    DegenerateGeometryError,
    atomic_write_text,
    ensure_image,
    ensure_landmarks,
    laplacian,
    load_image,
    resize_bilinear,
    rgb_to_gray,
)

STATUSES = ("pending", "auto_rejected", "accepted", "rejected")
AUTO_REASONS = ("blur", "pose", "size", "identity_cluster", "duplicate")
REASONS = AUTO_REASONS + ("manual", "none")

# blur thresholds follow the 0-255 Laplacian convention, matching the common
# "variance < 100 means blurry" rule of thumb
BLUR_SCORE_SCALE = 255.0 ** 2


@dataclass
class Thresholds:
    blur_min: float = 100.0
    yaw_max: float = 40.0
    pitch_max: float = 30.0
    size_min: float = 192.0
    dedup_hamming_max: int = 8

    def to_dict(self) -> dict:
        return {
            "blur_min": self.blur_min,
            "yaw_max": self.yaw_max,
            "pitch_max": self.pitch_max,
            "size_min": self.size_min,
            "dedup_hamming_max": self.dedup_hamming_max,
        }

    @staticmethod
    def from_dict(d: dict) -> "Thresholds":
        return Thresholds(**d)


@dataclass
class FaceRecord:
    id: str
    image_path: str
    landmarks: list | None = None
    face_mask_path: str | None = None
    eye_mask_path: str | None = None
    mouth_mask_path: str | None = None
    embedding_path: str | None = None
    blur_score: float | None = None
    yaw: float | None = None
    pitch: float | None = None
    face_size: float | None = None
    cluster_id: int = -1
    status: str = "pending"
    reject_reason: str = "none"

    def __post_init__(self) -> None:
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if self.reject_reason not in REASONS:
            raise ValueError(f"unknown reject_reason {self.reject_reason!r}")
        if (self.status == "auto_rejected") != (self.reject_reason in AUTO_REASONS):
            raise ValueError(
                f"status {self.status!r} inconsistent with reason {self.reject_reason!r}")
        if self.blur_score is not None and self.blur_score < 0:
            raise ValueError("blur_score must be >= 0")
        if self.face_size is not None and self.face_size <= 0:
            raise ValueError("face_size must be > 0")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @staticmethod
    def from_dict(d: dict) -> "FaceRecord":
        return FaceRecord(**d)


@dataclass
class FacesetManifest:
    identity: str
    records: list[FaceRecord] = field(default_factory=list)
    thresholds: Thresholds = field(default_factory=Thresholds)
    kept_clusters: set[int] = field(default_factory=set)
    embedding_dim: int | None = None

    def __post_init__(self) -> None:
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ValueError("record ids must be unique")

    def record(self, record_id: str) -> FaceRecord:
        for r in self.records:
            if r.id == record_id:
                return r
        raise KeyError(record_id)

    def counts(self) -> dict:
        by_reason = {reason: 0 for reason in AUTO_REASONS}
        out = {"accepted": 0, "pending": 0, "rejected": 0}
        for r in self.records:
            if r.status == "auto_rejected":
                by_reason[r.reject_reason] += 1
            else:
                out[r.status] += 1
        out["auto_rejected_by_reason"] = by_reason
        out["auto_rejected"] = sum(by_reason.values())
        out["kept"] = out["accepted"] + out["pending"]
        return out


# ---------------------------------------------------------------------------
# Manifest persistence: JSON Lines, header first, atomic replace on write
# ---------------------------------------------------------------------------

def save_manifest(manifest: FacesetManifest, path: str | Path) -> None:
    header = {
        "identity": manifest.identity,
        "thresholds": manifest.thresholds.to_dict(),
        "kept_clusters": sorted(manifest.kept_clusters),
        "embedding_dim": manifest.embedding_dim,
    }
    lines = [json.dumps(header)]
    lines.extend(json.dumps(r.to_dict()) for r in manifest.records)
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_manifest(path: str | Path) -> FacesetManifest:
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty manifest")
    header = json.loads(lines[0])
    return FacesetManifest(
        identity=header["identity"],
        records=[FaceRecord.from_dict(json.loads(ln)) for ln in lines[1:]],
        thresholds=Thresholds.from_dict(header["thresholds"]),
        kept_clusters=set(header.get("kept_clusters", [])),
        embedding_dim=header.get("embedding_dim"),
    )


def save_embedding(vec: np.ndarray, path: str | Path) -> None:
    np.asarray(vec, dtype="<f4").tofile(path)


def load_embedding(path: str | Path, dim: int | None = None) -> np.ndarray:
    vec = np.fromfile(path, dtype="<f4").astype(np.float64)
    if dim is not None and vec.size != dim:
        raise ValueError(f"{path}: expected dim {dim}, got {vec.size}")
    return vec


# ---------------------------------------------------------------------------
# Scores
# ---------------------------------------------------------------------------

def blur_score(img: np.ndarray) -> float:
    """Population variance of the Laplacian; low values indicate blur."""
    img = ensure_image(img)
    gray = rgb_to_gray(img) if img.shape[2] == 3 else img
    return float(np.var(laplacian(gray[..., 0])))


def estimate_pose(lm: np.ndarray, template3d: np.ndarray | None = None) -> tuple[float, float, float]:
    """Weak-perspective pose from landmarks: (yaw, pitch, roll) in degrees.

    Fits the unconstrained 2x3 affine map from the centered 3-D template to
    the centered 2-D points, then projects onto the nearest scaled rotation
    (SVD polar factor).  Axes: x right, y down, z toward the camera; yaw is
    rotation about y, pitch about x, roll about z, decomposed as
    R = Ry(yaw) @ Rx(pitch) @ Rz(roll).
    """
    lm = ensure_landmarks(lm)
    if template3d is None:
        template3d = canonical_template_3d()
    p3 = np.asarray(template3d, dtype=np.float64)
    q = lm - lm.mean(axis=0)
    p = p3 - p3.mean(axis=0)

    if float(np.sum(q ** 2)) < 1e-12:
        raise DegenerateGeometryError("landmarks have zero spatial variance")
    # A (2x3) minimizing ||q - p @ A.T||
    a, *_ = np.linalg.lstsq(p, q, rcond=None)
    a = a.T
    u, d, vt = np.linalg.svd(a, full_matrices=False)
    if d[1] <= 1e-9 * max(d[0], 1e-300):
        raise DegenerateGeometryError("landmarks are collinear; pose is unobservable")
    r2 = u @ vt  # 2x3 with orthonormal rows
    r3 = np.cross(r2[0], r2[1])
    rot = np.vstack([r2, r3])  # proper rotation by construction

    pitch = math.degrees(math.asin(max(-1.0, min(1.0, -rot[1, 2]))))
    yaw = math.degrees(math.atan2(rot[0, 2], rot[2, 2]))
    roll = math.degrees(math.atan2(rot[1, 0], rot[1, 1]))
    return yaw, pitch, roll


def landmark_face_size(lm: np.ndarray) -> float:
    """Max side of the landmark bounding box, in pixels."""
    lm = ensure_landmarks(lm)
    extent = lm.max(axis=0) - lm.min(axis=0)
    return float(extent.max())


def dhash64(img: np.ndarray) -> int:
    """64-bit difference hash: 9x8 grayscale downsample, horizontal gradient sign."""
    img = ensure_image(img)
    gray = rgb_to_gray(img) if img.shape[2] == 3 else img
    small = resize_bilinear(gray, (8, 9))[..., 0]
    bits = small[:, 1:] > small[:, :-1]
    value = 0
    for b in bits.reshape(-1):
        value = (value << 1) | int(b)
    return value


def hamming64(a: int, b: int) -> int:
    return (a ^ b).bit_count()


# ---------------------------------------------------------------------------
# Curation passes (all idempotent; all leave non-pending records alone)
# ---------------------------------------------------------------------------

def score_records(manifest: FacesetManifest, images_root: str | Path = ".") -> list[tuple[str, str]]:
    """Populate blur/pose/size scores for every record with an image+landmarks.

    Returns (record_id, error) pairs for records that could not be scored.
    """
    root = Path(images_root)
    errors: list[tuple[str, str]] = []
    for r in manifest.records:
        try:
            img = load_image(root / r.image_path)
            r.blur_score = blur_score(img) * BLUR_SCORE_SCALE
            if r.landmarks is not None:
                lm = np.asarray(r.landmarks, dtype=np.float64)
                yaw, pitch, _ = estimate_pose(lm)
                r.yaw = yaw
                r.pitch = pitch
                r.face_size = landmark_face_size(lm)
        except (OSError, ValueError, DegenerateGeometryError) as exc:
            errors.append((r.id, str(exc)))
    return errors


def kmeans_cluster(
    embeddings: list[np.ndarray] | np.ndarray,
    k: int,
    seed: int = 7,
    max_iter: int = 300,
) -> tuple[list[int], np.ndarray]:
    """Lloyd's algorithm with k-means++ seeding; deterministic for a fixed seed.

    Stops when assignments stabilize or after max_iter sweeps.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("embeddings must be a uniform 2-D array")
    if not np.all(np.isfinite(x)):
        raise ValueError("embeddings contain NaN/Inf")
    n = x.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"k must satisfy 1 <= k <= {n}, got {k}")

    rng = np.random.default_rng(seed)

    # k-means++ seeding
    centroids = np.empty((k, x.shape[1]))
    centroids[0] = x[rng.integers(n)]
    d2 = np.sum((x - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[j] = x[rng.integers(n)]
        else:
            centroids[j] = x[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((x - centroids[j]) ** 2, axis=1))

    assign = np.full(n, -1)
    for _ in range(max_iter):
        dists = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_assign = dists.argmin(axis=1)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(k):
            members = x[assign == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
    return [int(a) for a in assign], centroids


def cluster_records(manifest: FacesetManifest, k: int = 25, seed: int = 7,
                    embeddings_root: str | Path = ".") -> None:
    """Assign cluster ids from the records' embedding files."""
    root = Path(embeddings_root)
    with_emb = [r for r in manifest.records if r.embedding_path]
    if len(with_emb) < k:
        raise ValueError(f"need at least k={k} embeddings, found {len(with_emb)}")
    vecs = [load_embedding(root / r.embedding_path, manifest.embedding_dim) for r in with_emb]
    assign, _ = kmeans_cluster(vecs, k=k, seed=seed)
    for r, a in zip(with_emb, assign):
        r.cluster_id = a


def filter_clusters(manifest: FacesetManifest, kept: set[int]) -> FacesetManifest:
    """Auto-reject pending records whose cluster is not in the kept set."""
    manifest.kept_clusters = set(kept)
    for r in manifest.records:
        if r.status == "pending" and r.cluster_id not in kept:
            r.status = "auto_rejected"
            r.reject_reason = "identity_cluster"
    return manifest


def apply_quality_gates(manifest: FacesetManifest) -> FacesetManifest:
    """Reject pending records failing [size, pose, blur], first rule wins."""
    th = manifest.thresholds
    missing = [r.id for r in manifest.records
               if r.status == "pending"
               and (r.blur_score is None or r.yaw is None or r.pitch is None
                    or r.face_size is None)]
    if missing:
        raise ValueError(f"records missing scores (run `curate score` first): {missing}")
    for r in manifest.records:
        if r.status != "pending":
            continue
        if r.face_size < th.size_min:
            reason = "size"
        elif abs(r.yaw) > th.yaw_max or abs(r.pitch) > th.pitch_max:
            reason = "pose"
        elif r.blur_score < th.blur_min:
            reason = "blur"
        else:
            continue
        r.status = "auto_rejected"
        r.reject_reason = reason
    return manifest


def reset_gate_rejections(manifest: FacesetManifest) -> FacesetManifest:
    """Return gate-rejected records (size/pose/blur) to pending.

    Used when thresholds change so the gates can be re-applied from scratch;
    cluster/duplicate rejections and manual decisions are left alone.
    """
    for r in manifest.records:
        if r.status == "auto_rejected" and r.reject_reason in ("blur", "pose", "size"):
            r.status = "pending"
            r.reject_reason = "none"
    return manifest


def regate(manifest: FacesetManifest) -> FacesetManifest:
    """Re-apply quality gates as if from scratch under the current thresholds."""
    return apply_quality_gates(reset_gate_rejections(manifest))


def dedup(manifest: FacesetManifest, images_root: str | Path = ".") -> list[tuple[str, str]]:
    """Greedy near-duplicate removal in id order via 64-bit difference hashes.

    A pending record whose hash is within thresholds.dedup_hamming_max of an
    earlier kept record is auto-rejected as a duplicate.  Unreadable images
    are reported and skipped.
    """
    limit = manifest.thresholds.dedup_hamming_max
    root = Path(images_root)
    errors: list[tuple[str, str]] = []
    kept_hashes: list[int] = []
    for r in sorted(manifest.records, key=lambda rec: rec.id):
        if r.status in ("rejected", "auto_rejected"):
            continue
        try:
            h = dhash64(load_image(root / r.image_path))
        except (OSError, ValueError) as exc:
            errors.append((r.id, str(exc)))
            continue
        is_dup = any(hamming64(h, other) <= limit for other in kept_hashes)
        if is_dup and r.status == "pending":
            r.status = "auto_rejected"
            r.reject_reason = "duplicate"
        else:
            kept_hashes.append(h)
    return errors
