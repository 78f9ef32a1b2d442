"""Per-frame conversion: extract-align, decode with the target identity,
advanced blend, inverse-warp and composite back into the driver frame.

Inputs per frame: the frame PNG, frame-space landmarks JSON, and the driver
face mask in aligned 512-space (plus an optional generated-face mask, also
aligned).  When no generated mask is provided the driver mask substitutes,
with a logged warning.
"""
from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover - py310 fallback
    import tomli as tomllib

from .alignment import ALIGNED_SIZE, align_face, crop_window_bounds, train_crop
from .blending import BlendJob, SolverParams, boundary_energy, build_blend_mask, poisson_blend
from .imaging import (
    ensure_image,
    ensure_mask,
    load_image,
    load_landmarks,
    load_mask,
    resize_bilinear,
    save_image,
    warp_mask_similarity,
    warp_similarity,
)
from .model import ModelConfig, SwapModel, forward
from .nn import load_checkpoint

logger = logging.getLogger("swapforge.pipeline")

FRAME_STATUSES = ("converted", "skipped_no_face", "skipped_empty_mask", "error")


@dataclass
class ConversionConfig:
    checkpoint: Path
    target_identity: str
    frames_dir: Path
    landmarks_dir: Path
    masks_dir: Path
    out_dir: Path
    generated_masks_dir: Path | None = None
    squeeze_px: int = 15
    solver: SolverParams = field(default_factory=SolverParams)
    workers: int = 1

    def __post_init__(self) -> None:
        if self.target_identity not in ("A", "B"):
            raise ValueError(f"target_identity must be A or B, got {self.target_identity!r}")
        for name in ("frames_dir", "landmarks_dir", "masks_dir"):
            p = Path(getattr(self, name))
            setattr(self, name, p)
            if not p.is_dir():
                raise ValueError(f"{name} does not exist: {p}")
        self.checkpoint = Path(self.checkpoint)
        self.out_dir = Path(self.out_dir)
        if self.generated_masks_dir is not None:
            self.generated_masks_dir = Path(self.generated_masks_dir)

    @staticmethod
    def from_toml(path: str | Path) -> "ConversionConfig":
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        section = data.get("conversion", data)
        solver = SolverParams(**section.pop("solver", {}))
        return ConversionConfig(solver=solver, **section)


@dataclass
class FrameResult:
    frame_id: str
    status: str
    boundary_energy: float | None = None
    timing_ms: dict[str, float] = field(default_factory=dict)
    message: str = ""

    def __post_init__(self) -> None:
        if self.status not in FRAME_STATUSES:
            raise ValueError(f"unknown frame status {self.status!r}")

    def to_dict(self) -> dict:
        return {"frame_id": self.frame_id, "status": self.status,
                "boundary_energy": self.boundary_energy,
                "timing_ms": self.timing_ms, "message": self.message}


def load_swap_model(checkpoint: str | Path) -> SwapModel:
    params, meta = load_checkpoint(checkpoint)
    cfg = ModelConfig.from_dict(meta["config"])
    return SwapModel(cfg, params)


def convert_frame(
    frame: np.ndarray,
    lm: np.ndarray,
    driver_mask: np.ndarray,
    model: SwapModel,
    cfg: ConversionConfig,
    generated_mask: np.ndarray | None = None,
    frame_id: str = "frame",
) -> tuple[FrameResult, np.ndarray]:
    """Convert one frame; never raises — failures land in FrameResult.

    Returns (result, output frame).  Pixels outside the warped blend mask are
    bit-identical to the input frame.
    """
    timing: dict[str, float] = {}
    try:
        frame = ensure_image(frame, channels=3)
        driver_mask = ensure_mask(driver_mask, binary=True)

        t0 = time.perf_counter()
        aligned = align_face(frame, lm)
        timing["align"] = (time.perf_counter() - t0) * 1e3

        t0 = time.perf_counter()
        size = model.cfg.input_size
        model_in = train_crop(aligned.aligned_image, out_size=size)
        recon = forward(model, model_in.transpose(2, 0, 1)[None].astype(np.float32),
                        cfg.target_identity)
        generated = recon.data[0].transpose(1, 2, 0).astype(np.float64)
        timing["forward"] = (time.perf_counter() - t0) * 1e3

        t0 = time.perf_counter()
        lo, hi = crop_window_bounds(ALIGNED_SIZE)
        canvas = aligned.aligned_image.copy()
        canvas[lo:hi, lo:hi] = resize_bilinear(generated, (hi - lo, hi - lo))

        if generated_mask is None:
            logger.warning("%s: no generated-face mask; falling back to driver mask",
                           frame_id)
            generated_mask = driver_mask
        job = BlendJob(source=canvas, target=aligned.aligned_image,
                       driver_mask=driver_mask, generated_mask=generated_mask,
                       squeeze_px=cfg.squeeze_px)
        blend_mask = build_blend_mask(job)
        if blend_mask.sum() == 0:
            logger.warning("%s: empty blend mask after squeeze; frame copied through",
                           frame_id)
            return (FrameResult(frame_id, "skipped_empty_mask", timing_ms=timing),
                    frame.copy())
        blended = poisson_blend(canvas, aligned.aligned_image, blend_mask, cfg.solver)
        timing["blend"] = (time.perf_counter() - t0) * 1e3

        t0 = time.perf_counter()
        inv = aligned.transform.inverse()
        h, w = frame.shape[:2]
        warped_patch = warp_similarity(blended, inv, (h, w), interp="bilinear")
        warped_mask = warp_mask_similarity(blend_mask, inv, (h, w))
        out = np.where(warped_mask[..., None] == 1.0, warped_patch, frame)
        energy = boundary_energy(out, warped_mask)
        timing["composite"] = (time.perf_counter() - t0) * 1e3

        return (FrameResult(frame_id, "converted", boundary_energy=energy,
                            timing_ms=timing), out)
    except Exception as exc:  # per-frame failures never abort the batch
        logger.exception("%s: conversion failed", frame_id)
        return (FrameResult(frame_id, "error", timing_ms=timing, message=str(exc)),
                np.asarray(frame, dtype=np.float64))


def _convert_one(model: SwapModel, cfg: ConversionConfig, frame_path: Path) -> FrameResult:
    frame_id = frame_path.stem
    lm_path = cfg.landmarks_dir / f"{frame_id}.json"
    mask_path = cfg.masks_dir / f"{frame_id}.png"
    if not lm_path.exists() or not mask_path.exists():
        return FrameResult(frame_id, "skipped_no_face",
                           message="missing landmarks or driver mask")
    frame = load_image(frame_path)
    lm = load_landmarks(lm_path)
    driver_mask = load_mask(mask_path)
    generated_mask = None
    if cfg.generated_masks_dir is not None:
        gen_path = cfg.generated_masks_dir / f"{frame_id}.png"
        if gen_path.exists():
            generated_mask = load_mask(gen_path)
    result, out = convert_frame(frame, lm, driver_mask, model, cfg,
                                generated_mask=generated_mask, frame_id=frame_id)
    save_image(out, cfg.out_dir / f"{frame_id}.png")
    return result


def convert_batch(cfg: ConversionConfig, model: SwapModel | None = None) -> dict:
    """Parallel map over the frame directory; outputs are worker-count invariant.

    Returns the summary dict (also written to out_dir/summary.json).
    """
    if model is None:
        model = load_swap_model(cfg.checkpoint)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    frames = sorted(cfg.frames_dir.glob("*.png"))

    if cfg.workers <= 1:
        results = [_convert_one(model, cfg, f) for f in frames]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(lambda f: _convert_one(model, cfg, f), frames))

    counts = {status: 0 for status in FRAME_STATUSES}
    energies = []
    for r in results:
        counts[r.status] += 1
        if r.boundary_energy is not None:
            energies.append(r.boundary_energy)
    summary = {
        "frames": len(frames),
        "counts": counts,
        "mean_boundary_energy": float(np.mean(energies)) if energies else None,
        "results": [r.to_dict() for r in results],
    }
    with open(cfg.out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    return summary
