"""swapforge command line: curation passes, metrics, training, blending,
batch conversion and the review service."""
from __future__ import annotations

import json
import logging
from pathlib import Path

import click
import numpy as np

from . import curation, metrics
from .blending import BlendJob, SolverParams, boundary_energy, build_blend_mask, poisson_blend
from .imaging import load_image, load_mask, save_image

logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")


@click.group()
def main() -> None:
    """Desk-scale face-swap pipeline toolkit."""


# ---------------------------------------------------------------------------
# curate
# ---------------------------------------------------------------------------

@main.group()
def curate() -> None:
    """Faceset curation passes over a JSONL manifest."""


manifest_option = click.option("--manifest", "manifest_path", required=True,
                               type=click.Path(exists=True, dir_okay=False))


@curate.command()
@manifest_option
@click.option("--images-root", default=".", type=click.Path(file_okay=False))
def score(manifest_path: str, images_root: str) -> None:
    """Populate blur/pose/size scores for every record."""
    m = curation.load_manifest(manifest_path)
    errors = curation.score_records(m, images_root)
    curation.save_manifest(m, manifest_path)
    for rid, msg in errors:
        click.echo(f"warning: {rid}: {msg}", err=True)
    click.echo(f"scored {len(m.records) - len(errors)}/{len(m.records)} records")


@curate.command()
@manifest_option
@click.option("--k", default=25, show_default=True)
@click.option("--seed", default=7, show_default=True)
@click.option("--embeddings-root", default=".", type=click.Path(file_okay=False))
@click.option("--keep", default=None, help="comma-separated cluster ids to keep")
def cluster(manifest_path: str, k: int, seed: int, embeddings_root: str,
            keep: str | None) -> None:
    """Assign k-means identity clusters; optionally filter to --keep."""
    m = curation.load_manifest(manifest_path)
    curation.cluster_records(m, k=k, seed=seed, embeddings_root=embeddings_root)
    if keep is not None:
        kept = {int(tok) for tok in keep.split(",") if tok.strip() != ""}
        curation.filter_clusters(m, kept)
    curation.save_manifest(m, manifest_path)
    click.echo(f"clustered {len(m.records)} records into k={k}")


@curate.command()
@manifest_option
@click.option("--blur-min", type=float, default=None)
@click.option("--yaw-max", type=float, default=None)
@click.option("--pitch-max", type=float, default=None)
@click.option("--size-min", type=float, default=None)
def gate(manifest_path: str, blur_min, yaw_max, pitch_max, size_min) -> None:
    """(Re-)apply quality gates under the manifest thresholds."""
    m = curation.load_manifest(manifest_path)
    for key, value in (("blur_min", blur_min), ("yaw_max", yaw_max),
                       ("pitch_max", pitch_max), ("size_min", size_min)):
        if value is not None:
            setattr(m.thresholds, key, value)
    curation.regate(m)
    curation.save_manifest(m, manifest_path)
    counts = m.counts()
    click.echo(f"kept {counts['kept']}, auto-rejected {counts['auto_rejected']}")


@curate.command()
@manifest_option
@click.option("--images-root", default=".", type=click.Path(file_okay=False))
@click.option("--hamming-max", type=int, default=None)
def dedup(manifest_path: str, images_root: str, hamming_max: int | None) -> None:
    """Greedy perceptual-hash duplicate removal."""
    m = curation.load_manifest(manifest_path)
    if hamming_max is not None:
        m.thresholds.dedup_hamming_max = hamming_max
    errors = curation.dedup(m, images_root)
    curation.save_manifest(m, manifest_path)
    for rid, msg in errors:
        click.echo(f"warning: {rid}: {msg}", err=True)
    dupes = m.counts()["auto_rejected_by_reason"]["duplicate"]
    click.echo(f"duplicates rejected: {dupes}")


@curate.command()
@manifest_option
@click.option("--json", "as_json", is_flag=True, default=False)
def report(manifest_path: str, as_json: bool) -> None:
    """Kept/rejected counts by reason, with the faceset size guidance band."""
    m = curation.load_manifest(manifest_path)
    counts = m.counts()
    if as_json:
        click.echo(json.dumps(counts))
        return
    click.echo(f"faceset {m.identity!r}: {len(m.records)} records")
    click.echo(f"  accepted: {counts['accepted']}  pending: {counts['pending']}  "
               f"rejected (manual): {counts['rejected']}")
    for reason, n in counts["auto_rejected_by_reason"].items():
        click.echo(f"  auto-rejected/{reason}: {n}")
    kept = counts["kept"]
    click.echo(f"  kept: {kept}")
    if not 4000 <= kept <= 8000:
        click.echo(f"warning: kept count {kept} outside the 4,000-8,000 guidance band",
                   err=True)


# ---------------------------------------------------------------------------
# metric
# ---------------------------------------------------------------------------

@main.command()
@click.option("--a", "path_a", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--b", "path_b", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--masks", "masks_dir", default=None,
              type=click.Path(exists=True, file_okay=False),
              help="directory with face.png / eye.png / mouth.png")
@click.option("--json", "as_json", is_flag=True, default=False)
def metric(path_a: str, path_b: str, masks_dir: str | None, as_json: bool) -> None:
    """Print mse / ssim / dssim (and masked_loss given region masks)."""
    x = load_image(path_a)
    y = load_image(path_b)
    out = {
        "mse": metrics.mse(x, y),
        "ssim": metrics.ssim(x, y),
        "dssim": metrics.dssim(x, y),
    }
    if masks_dir is not None:
        root = Path(masks_dir)
        out["masked_loss"] = metrics.masked_loss(
            x, y,
            load_mask(root / "face.png"),
            load_mask(root / "eye.png"),
            load_mask(root / "mouth.png"),
        )
    if as_json:
        click.echo(json.dumps(out))
    else:
        for key, value in out.items():
            click.echo(f"{key}: {value:.6f}")


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

@main.command()
@click.option("--faceset-a", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--faceset-b", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--profile", default="toy", type=click.Choice(["toy", "paper_scale"]),
              show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--steps", type=int, default=None, help="override the profile's step count")
@click.option("--seed", type=int, default=None)
@click.option("--images-root-a", default=None, type=click.Path(file_okay=False))
@click.option("--images-root-b", default=None, type=click.Path(file_okay=False))
def train(faceset_a: str, faceset_b: str, profile: str, out_dir: str,
          steps: int | None, seed: int | None,
          images_root_a: str | None, images_root_b: str | None) -> None:
    """Train the dual-decoder swap model on two curated facesets."""
    from dataclasses import replace

    from .datasets import FacesetDataset
    from .model import PROFILES, train as run_train

    prof = PROFILES[profile]
    if seed is not None:
        prof = replace(prof, seed=seed)
    ds_a = FacesetDataset(faceset_a, images_root_a or Path(faceset_a).parent)
    ds_b = FacesetDataset(faceset_b, images_root_b or Path(faceset_b).parent)

    def log(step: int, loss_a: float, loss_b: float, total: float) -> None:
        if step == 1 or step % 100 == 0:
            click.echo(f"step {step}: loss_A={loss_a:.4f} loss_B={loss_b:.4f} "
                       f"total={total:.4f}")

    result = run_train(ds_a, ds_b, profile=prof, out_dir=out_dir, steps=steps, on_step=log)
    drop = (1.0 - result.last_total / result.first_total) * 100.0
    click.echo(f"done: total {result.first_total:.4f} -> {result.last_total:.4f} "
               f"({drop:.1f}% drop); checkpoint in {out_dir}")


# ---------------------------------------------------------------------------
# blend
# ---------------------------------------------------------------------------

@main.command()
@click.option("--source", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--target", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--driver-mask", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--generated-mask", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--squeeze", default=15, show_default=True)
@click.option("--conventional", is_flag=True, default=False,
              help="blend with the raw driver mask (no squeeze/intersection)")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--report-energy", is_flag=True, default=False)
@click.option("--tol", default=1e-6, show_default=True)
def blend(source: str, target: str, driver_mask: str, generated_mask: str | None,
          squeeze: int, conventional: bool, out_path: str, report_energy: bool,
          tol: float) -> None:
    """Composite a generated face into a driver frame (aligned space)."""
    src = load_image(source)
    tgt = load_image(target)
    driver = load_mask(driver_mask)
    generated = load_mask(generated_mask) if generated_mask else np.ones_like(driver)
    if conventional:
        mask = driver
    else:
        job = BlendJob(source=src, target=tgt, driver_mask=driver,
                       generated_mask=generated, squeeze_px=squeeze)
        mask = build_blend_mask(job)
    if mask.sum() == 0:
        click.echo("warning: empty blend mask; writing target unchanged", err=True)
        save_image(tgt, out_path)
        return
    out = poisson_blend(src, tgt, mask, SolverParams(tol=tol))
    save_image(out, out_path)
    if report_energy:
        click.echo(f"boundary_energy: {boundary_energy(out, mask):.8f}")


# ---------------------------------------------------------------------------
# convert / review
# ---------------------------------------------------------------------------

@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
def convert(config_path: str) -> None:
    """Convert a directory of frames per a TOML conversion config."""
    from .pipeline import ConversionConfig, convert_batch

    cfg = ConversionConfig.from_toml(config_path)
    summary = convert_batch(cfg)
    click.echo(json.dumps({k: v for k, v in summary.items() if k != "results"}))


@main.command()
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--images-root", default=".", type=click.Path(file_okay=False))
@click.option("--port", default=8080, show_default=True)
@click.option("--frontend", "frontend_dir", default=None,
              type=click.Path(file_okay=False),
              help="directory of built UI assets to serve at /")
def review(manifest_path: str, images_root: str, port: int,
           frontend_dir: str | None) -> None:
    """Serve the faceset review API (and UI) for manual curation."""
    from .review import serve

    if frontend_dir is None:
        default_dist = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        frontend_dir = str(default_dist) if default_dist.is_dir() else None
    serve(manifest_path, images_root, port=port, frontend_dir=frontend_dir)


if __name__ == "__main__":
    main()
