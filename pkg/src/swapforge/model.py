"""The dual-decoder swap autoencoder: shared encoder and bottleneck, one
intermediate block + decoder per identity, the combined two-identity training
step, and the training loop with its profiles.

Decoder layout: the intermediate block's output is reshaped to (C, s, s) with
s = input_size / 32, upsampled x2 (nearest + LeakyReLU), then four sub-pixel
upscale stages (conv to 4C' + pixel shuffle, LeakyReLU, two residual blocks
except after the last stage) and a final 3x3 conv + sigmoid.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import losses
from .augment import AugmentConfig, augment_with_masks
from .autodiff import Tensor, TrainingDiverged
from .metrics import LossWeights, SsimParams
from .nn import AdamState, adam_step, conv_param, linear_param, residual_block, save_checkpoint
from .imaging import ensure_image, resize_bilinear

IDENTITIES = ("A", "B")


@dataclass(frozen=True)
class ModelConfig:
    input_size: int = 64
    latent_dim: int = 128
    decoder_base_channels: int = 64
    encoder_channels: tuple[int, ...] = (16, 32, 64, 128)
    upscale_layers: int = 4
    residual_blocks_per_upscale: int = 2
    leaky_alpha: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        stride = 2 ** self.upscale_layers * 2
        if self.input_size % stride != 0 or self.input_size < stride:
            raise ValueError(
                f"input_size {self.input_size} must be a positive multiple of {stride}")
        if len(self.encoder_channels) != 4:
            raise ValueError("encoder uses exactly 4 stride-2 conv stages")

    @property
    def seed_spatial(self) -> int:
        """Spatial size of the intermediate block's reshaped output."""
        return self.input_size // (2 ** self.upscale_layers * 2)

    def decoder_channels(self) -> list[int]:
        """Channel counts entering each upscale stage, halving with a floor."""
        chans = [self.decoder_base_channels]
        for _ in range(self.upscale_layers):
            chans.append(max(chans[-1] // 2, 8))
        return chans

    def to_dict(self) -> dict:
        return {
            "input_size": self.input_size,
            "latent_dim": self.latent_dim,
            "decoder_base_channels": self.decoder_base_channels,
            "encoder_channels": list(self.encoder_channels),
            "upscale_layers": self.upscale_layers,
            "residual_blocks_per_upscale": self.residual_blocks_per_upscale,
            "leaky_alpha": self.leaky_alpha,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        d = dict(d)
        d["encoder_channels"] = tuple(d["encoder_channels"])
        return ModelConfig(**d)


class SwapModel:
    """Named parameter store plus the forward graph builder."""

    def __init__(self, cfg: ModelConfig, params: dict[str, Tensor]):
        self.cfg = cfg
        self.params = params

    def parameters(self) -> list[Tensor]:
        """Stable name-sorted parameter list (Adam moments key off positions)."""
        return [self.params[name] for name in sorted(self.params)]

    def identity_parameters(self, identity: str) -> list[Tensor]:
        prefix = (f"inter.{identity}.", f"dec.{identity}.")
        return [self.params[n] for n in sorted(self.params) if n.startswith(prefix)]

    def zero_grads(self) -> None:
        for p in self.params.values():
            p.zero_grad()


def build_model(cfg: ModelConfig, dtype=np.float32) -> SwapModel:
    """Deterministically initialized model; same cfg+seed gives identical bits."""
    rng = np.random.default_rng(cfg.seed)
    alpha = cfg.leaky_alpha
    params: dict[str, Tensor] = {}

    in_ch = 3
    for i, out_ch in enumerate(cfg.encoder_channels, start=1):
        w, b = conv_param(rng, out_ch, in_ch, 3, alpha=alpha, dtype=dtype)
        params[f"enc.conv{i}.w"] = w
        params[f"enc.conv{i}.b"] = b
        in_ch = out_ch
    enc_spatial = cfg.input_size // 16  # four stride-2 stages
    flat_dim = cfg.encoder_channels[-1] * enc_spatial * enc_spatial
    w, b = linear_param(rng, cfg.latent_dim, flat_dim, alpha=alpha, dtype=dtype)
    params["enc.fc.w"] = w
    params["enc.fc.b"] = b

    s = cfg.seed_spatial
    chans = cfg.decoder_channels()
    for identity in IDENTITIES:
        w, b = linear_param(rng, cfg.decoder_base_channels * s * s, cfg.latent_dim,
                            alpha=alpha, dtype=dtype)
        params[f"inter.{identity}.fc.w"] = w
        params[f"inter.{identity}.fc.b"] = b
        for i in range(1, cfg.upscale_layers + 1):
            cin, cout = chans[i - 1], chans[i]
            w, b = conv_param(rng, 4 * cout, cin, 3, alpha=alpha, dtype=dtype)
            params[f"dec.{identity}.up{i}.w"] = w
            params[f"dec.{identity}.up{i}.b"] = b
            if i < cfg.upscale_layers:
                for j in range(1, cfg.residual_blocks_per_upscale + 1):
                    for tag in ("conv1", "conv2"):
                        w, b = conv_param(rng, cout, cout, 3, alpha=alpha, dtype=dtype)
                        params[f"dec.{identity}.up{i}.res{j}.{tag}.w"] = w
                        params[f"dec.{identity}.up{i}.res{j}.{tag}.b"] = b
        w, b = conv_param(rng, 3, chans[-1], 3, alpha=alpha, dtype=dtype)
        params[f"dec.{identity}.out.w"] = w
        params[f"dec.{identity}.out.b"] = b
    return SwapModel(cfg, params)


def encode(model: SwapModel, x: Tensor) -> Tensor:
    cfg = model.cfg
    p = model.params
    h = x
    for i in range(1, 5):
        h = ad.conv2d(h, p[f"enc.conv{i}.w"], p[f"enc.conv{i}.b"], stride=2, padding=1)
        h = ad.leaky_relu(h, cfg.leaky_alpha)
    n = h.shape[0]
    flat = ad.reshape(h, (n, int(np.prod(h.shape[1:]))))
    return ad.linear(flat, p["enc.fc.w"], p["enc.fc.b"])


def decode(model: SwapModel, latent: Tensor, identity: str) -> Tensor:
    cfg = model.cfg
    p = model.params
    if identity not in IDENTITIES:
        raise ValueError(f"identity must be one of {IDENTITIES}, got {identity!r}")
    s = cfg.seed_spatial
    chans = cfg.decoder_channels()
    n = latent.shape[0]

    h = ad.linear(latent, p[f"inter.{identity}.fc.w"], p[f"inter.{identity}.fc.b"])
    h = ad.reshape(h, (n, cfg.decoder_base_channels, s, s))
    h = ad.nn_upsample(h, 2)
    h = ad.leaky_relu(h, cfg.leaky_alpha)
    for i in range(1, cfg.upscale_layers + 1):
        h = ad.conv2d(h, p[f"dec.{identity}.up{i}.w"], p[f"dec.{identity}.up{i}.b"],
                      stride=1, padding=1)
        h = ad.pixel_shuffle(h, 2)
        h = ad.leaky_relu(h, cfg.leaky_alpha)
        if i < cfg.upscale_layers:
            for j in range(1, cfg.residual_blocks_per_upscale + 1):
                h = residual_block(
                    h,
                    p[f"dec.{identity}.up{i}.res{j}.conv1.w"],
                    p[f"dec.{identity}.up{i}.res{j}.conv1.b"],
                    p[f"dec.{identity}.up{i}.res{j}.conv2.w"],
                    p[f"dec.{identity}.up{i}.res{j}.conv2.b"],
                    alpha=cfg.leaky_alpha,
                )
        _ = chans  # channel schedule is encoded in the parameter shapes
    h = ad.conv2d(h, p[f"dec.{identity}.out.w"], p[f"dec.{identity}.out.b"],
                  stride=1, padding=1)
    return ad.sigmoid(h)


def forward(model: SwapModel, x: Tensor | np.ndarray, identity: str) -> Tensor:
    if not isinstance(x, Tensor):
        x = Tensor(np.asarray(x, dtype=np.float32))
    return decode(model, encode(model, x), identity)


def train_step(
    model: SwapModel,
    batch_a: tuple[np.ndarray, np.ndarray],
    batch_b: tuple[np.ndarray, np.ndarray],
    masks_a: dict[str, np.ndarray],
    masks_b: dict[str, np.ndarray],
    w: LossWeights,
    opt: AdamState,
    p: SsimParams = SsimParams(),
) -> tuple[float, float, float]:
    """One combined update: both identities' masked losses summed, one Adam step.

    batch_* carry (inputs, targets) as NCHW float arrays; masks_* carry NHW
    face/eye/mouth arrays aligned with the targets.
    """
    params = model.parameters()
    model.zero_grads()

    losses_out: list[float] = []
    total: Tensor | None = None
    for identity, (inputs, targets), masks in (("A", batch_a, masks_a),
                                               ("B", batch_b, masks_b)):
        recon = forward(model, inputs, identity)
        target_t = Tensor(np.asarray(targets, dtype=recon.data.dtype))
        loss = losses.masked_loss(target_t, recon, masks["face"], masks["eye"],
                                  masks["mouth"], w=w, p=p)
        losses_out.append(loss.item())
        total = loss if total is None else ad.add(total, loss)

    total_val = total.item()
    if not np.isfinite(total_val):
        raise TrainingDiverged(f"non-finite loss at optimizer step {opt.step + 1}")
    total.backward()
    adam_step(params, opt)
    return losses_out[0], losses_out[1], total_val


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainProfile:
    name: str
    input_size: int
    batch_size: int
    steps: int
    lr: float
    seed: int = 0
    preview_every: int = 0        # 0 disables preview grids
    checkpoint_every: int = 0     # 0 = only final
    augment_enabled: bool = True


TOY_PROFILE = TrainProfile(name="toy", input_size=64, batch_size=8, steps=2000,
                           lr=1e-3, preview_every=500, augment_enabled=False)
PAPER_SCALE_PROFILE = TrainProfile(name="paper_scale", input_size=256, batch_size=32,
                                   steps=1_000_000, lr=5e-5, preview_every=10_000,
                                   augment_enabled=True)

PROFILES = {p.name: p for p in (TOY_PROFILE, PAPER_SCALE_PROFILE)}


@dataclass
class TrainResult:
    model: SwapModel
    opt: AdamState
    history: list[tuple[int, float, float, float]] = field(default_factory=list)

    @property
    def first_total(self) -> float:
        return self.history[0][3]

    @property
    def last_total(self) -> float:
        return self.history[-1][3]


def _prepare_batch(dataset, indices, step: int, profile: TrainProfile,
                   aug_cfg: AugmentConfig, base_seed: int):
    """Augment per-sample (deterministic seeds) and stack into NCHW arrays."""
    size = profile.input_size
    inputs, targets = [], []
    masks = {"face": [], "eye": [], "mouth": []}
    for sample_idx in indices:
        img, sample_masks = dataset.sample(sample_idx)
        if profile.augment_enabled:
            rng = np.random.default_rng((base_seed, step, sample_idx))
            (inp, tgt), sample_masks = augment_with_masks(img, sample_masks, step,
                                                          aug_cfg, rng)
        else:
            inp = tgt = img
        if inp.shape[0] != size:
            inp = resize_bilinear(ensure_image(inp), (size, size))
            tgt = resize_bilinear(ensure_image(tgt), (size, size))
            sample_masks = {k: (resize_bilinear(m[..., None], (size, size))[..., 0] > 0.5)
                            .astype(np.float64) for k, m in sample_masks.items()}
        inputs.append(inp.transpose(2, 0, 1))
        targets.append(tgt.transpose(2, 0, 1))
        for key in masks:
            masks[key].append(sample_masks[key])
    stack = lambda arrs: np.stack(arrs).astype(np.float32)
    return ((stack(inputs), stack(targets)),
            {k: stack(v) for k, v in masks.items()})


def train(
    dataset_a,
    dataset_b,
    profile: TrainProfile = TOY_PROFILE,
    cfg: ModelConfig | None = None,
    w: LossWeights = LossWeights(),
    out_dir: str | Path | None = None,
    steps: int | None = None,
    log_every: int = 50,
    on_step=None,
) -> TrainResult:
    """Train the dual-decoder model on two identity datasets.

    Datasets provide sample(index) -> (HWC image, {face,eye,mouth} masks).
    Deterministic given (profile.seed, cfg.seed, datasets).
    """
    if cfg is None:
        cfg = ModelConfig(input_size=profile.input_size, seed=profile.seed)
    total_steps = steps if steps is not None else profile.steps
    model = build_model(cfg)
    opt = AdamState(lr=profile.lr)
    aug_cfg = AugmentConfig.for_schedule(total_steps) if profile.augment_enabled else None
    order_rng = np.random.default_rng((profile.seed, 0xD5))

    out_path = Path(out_dir) if out_dir is not None else None
    csv_fh = None
    csv_writer = None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        csv_fh = open(out_path / "loss.csv", "w", newline="")
        csv_writer = csv.writer(csv_fh)
        csv_writer.writerow(["step", "loss_A", "loss_B", "total"])

    result = TrainResult(model=model, opt=opt)
    try:
        for step in range(total_steps):
            idx_a = order_rng.integers(0, 1 << 30, size=profile.batch_size)
            idx_b = order_rng.integers(0, 1 << 30, size=profile.batch_size)
            batch_a, masks_a = _prepare_batch(dataset_a, idx_a, step, profile,
                                              aug_cfg, base_seed=profile.seed)
            batch_b, masks_b = _prepare_batch(dataset_b, idx_b, step, profile,
                                              aug_cfg, base_seed=profile.seed + 1)
            loss_a, loss_b, total = train_step(model, batch_a, batch_b,
                                               masks_a, masks_b, w, opt)
            result.history.append((step + 1, loss_a, loss_b, total))
            if csv_writer is not None and ((step + 1) % log_every == 0 or step == 0):
                csv_writer.writerow([step + 1, f"{loss_a:.6f}", f"{loss_b:.6f}",
                                     f"{total:.6f}"])
            if on_step is not None:
                on_step(step + 1, loss_a, loss_b, total)
            if (out_path is not None and profile.preview_every
                    and (step + 1) % profile.preview_every == 0):
                _write_preview(out_path / f"preview_{step + 1:06d}.png",
                               model, batch_a, batch_b)
        if out_path is not None:
            save_checkpoint(out_path / "model.ckpt", model.params,
                            meta={"step": total_steps, "config": cfg.to_dict(),
                                  "profile": profile.name})
    finally:
        if csv_fh is not None:
            csv_fh.close()
    return result


def _write_preview(path: Path, model: SwapModel, batch_a, batch_b) -> None:
    """input | recon_A | recon_B rows for the first sample of each identity."""
    from .imaging import save_image

    rows = []
    for (inputs, _targets) in (batch_a, batch_b):
        x = inputs[:1]
        recon_a = forward(model, x, "A").data[0].transpose(1, 2, 0)
        recon_b = forward(model, x, "B").data[0].transpose(1, 2, 0)
        rows.append(np.concatenate([x[0].transpose(1, 2, 0), recon_a, recon_b], axis=1))
    save_image(np.clip(np.concatenate(rows, axis=0), 0, 1), path)
