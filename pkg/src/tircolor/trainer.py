"""Adversarial training loop, checkpoints, resume and the ablation harness.

Each iteration takes one discriminator step on detached generator output,
then one generator step on the weighted objective.  With ``lambda_adv = 0``
the discriminator is never stepped.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import os
import time
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F

from . import losses
from .config import TrainConfig
from .dataset import DatasetManifest, ManifestEntry, denormalize, iterate_batches, load_pair, normalize
from .discriminator import build_discriminator
from .errors import CheckpointCorrupt, ConfigError, EmptyDataset, FingerprintMismatch, NonFiniteLoss
from .generator import build_generator
from .metrics import MetricReport, evaluate_pairs, format_table

log = logging.getLogger(__name__)

DEVICE_ENV = "TIRCOLOR_DEVICE"
LOG_NAME = "train_log.jsonl"
CONFIG_ECHO = "config.txt"
LOSS_FIELDS = ("content", "adversarial", "perceptual", "tv", "total")

CANONICAL_MATRIX: Dict[str, Dict[str, Any]] = {
    "full": {},
    "no_adv": {"lambda_adv": 0.0},
    "no_perceptual": {"lambda_perceptual": 0.0},
    "no_tv": {"lambda_tv": 0.0},
    "unconditioned": {"conditional": False},
    "least_squares": {"adversarial_variant": "least_squares"},
    "gen_unet": {"variant": "unet"},
    "gen_resnet": {"variant": "resnet"},
}


def resolve_device(requested: str = "") -> torch.device:
    return torch.device(requested or os.environ.get(DEVICE_ENV) or "cpu")


def checkpoint_name(epoch: int, iteration: int) -> str:
    return f"ckpt_e{epoch}_i{iteration}.pt"


def generator_input(thermal: torch.Tensor, in_channels: int) -> torch.Tensor:
    return thermal if in_channels == thermal.shape[1] else thermal.repeat(1, in_channels, 1, 1)


@dataclasses.dataclass
class TrainResult:
    checkpoint: Path
    log_path: Path
    history: List[Dict[str, float]]
    generator: torch.nn.Module
    discriminator: torch.nn.Module
    iteration: int
    epoch: int


# -- checkpoints ------------------------------------------------------------------

def save_checkpoint(path, generator, discriminator, opt_g, opt_d, epoch: int, iteration: int,
                    config: TrainConfig, metrics: Optional[MetricReport] = None) -> Path:
    path = Path(path)
    state = {
        "format": "tircolor-checkpoint-1",
        "generator": generator.state_dict(),
        "discriminator": discriminator.state_dict(),
        "opt_g": opt_g.state_dict(),
        "opt_d": opt_d.state_dict(),
        "epoch": epoch,
        "iteration": iteration,
        "fingerprint": config.fingerprint(),
        "config": config.to_flat(),
        "metrics": metrics.to_dict() if metrics is not None else None,
    }
    tmp = path.with_suffix(".tmp")
    torch.save(state, tmp)
    tmp.replace(path)
    return path


def load_checkpoint(path) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise CheckpointCorrupt(f"checkpoint not found: {path}")
    try:
        state = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:  # torch raises a variety of unpickling errors
        raise CheckpointCorrupt(f"cannot read checkpoint {path}: {exc}") from exc
    required = {"generator", "discriminator", "opt_g", "opt_d", "epoch", "iteration", "fingerprint", "config"}
    if not isinstance(state, dict) or not required <= set(state):
        raise CheckpointCorrupt(f"{path} is not a tircolor checkpoint")
    return state


def load_generator(path, device: Union[str, torch.device] = "cpu") -> Tuple[torch.nn.Module, TrainConfig]:
    state = load_checkpoint(path)
    config = TrainConfig.from_flat(state["config"])
    generator = build_generator(config.model)
    try:
        generator.load_state_dict(state["generator"])
    except RuntimeError as exc:
        raise CheckpointCorrupt(f"{path}: generator weights do not match the stored config: {exc}") from exc
    return generator.to(device).eval(), config


# -- inference / evaluation ---------------------------------------------------------

@torch.no_grad()
def colorize_array(generator, thermal: np.ndarray, multiple: int = 32) -> np.ndarray:
    """8-bit (H, W) thermal raster -> 8-bit (H, W, 3) colour raster.

    The input is edge-padded up to a multiple of ``multiple`` and the output
    cropped back.
    """
    device = next(generator.parameters()).device
    h, w = thermal.shape
    x = normalize(thermal).unsqueeze(0).to(device)
    ph, pw = (-h) % multiple, (-w) % multiple
    if ph or pw:
        x = F.pad(x, (0, pw, 0, ph), mode="replicate")
    x = generator_input(x, generator.spec.in_channels)
    out = generator(x)[0, :, :h, :w]
    return denormalize(out)


@torch.no_grad()
def evaluate_generator(generator, entries: Sequence[ManifestEntry], target_size) -> MetricReport:
    was_training = generator.training
    generator.eval()
    device = next(generator.parameters()).device
    triples = []
    for e in entries:
        thermal, rgb = load_pair(e, target_size)
        x = generator_input(thermal.unsqueeze(0).to(device), generator.spec.in_channels)
        triples.append((e.id, denormalize(generator(x)[0]), denormalize(rgb)))
    generator.train(was_training)
    return evaluate_pairs(triples)


def validation_entries(manifest: DatasetManifest, count: int) -> List[ManifestEntry]:
    """First ``count`` test pairs by id, falling back to training pairs."""
    entries = manifest.split("test") or manifest.split("train")
    return entries[:count]


# -- training ---------------------------------------------------------------------------

def _scalar(v: torch.Tensor) -> float:
    return float(v.detach())


def _dump_nonfinite(out_dir: Path, iteration: int, generator, discriminator, record) -> Path:
    path = out_dir / f"nonfinite_i{iteration}.pt"
    torch.save({"generator": generator.state_dict(), "discriminator": discriminator.state_dict(),
                "record": record}, path)
    return path


def train_step(generator, discriminator, extractor, opt_g, opt_d, thermal: torch.Tensor, rgb: torch.Tensor,
               weights: losses.LossWeights, in_channels: int = 1,
               before_update: Optional[Callable[[Dict[str, float]], None]] = None) -> Dict[str, float]:
    """One discriminator update (skipped when ``lambda_adv`` is 0), then one generator update.

    ``before_update`` sees the loss record after the discriminator step and
    before the generator's backward pass; raising there aborts the step.
    """
    w = weights
    zero = rgb.new_zeros(())
    cond = thermal if w.conditional else None
    fake = generator(generator_input(thermal, in_channels))
    use_adv = w.lambda_adv > 0

    d_loss = zero
    if use_adv:
        discriminator.requires_grad_(True)
        d_loss = losses.adversarial_loss_D(discriminator(rgb, cond), discriminator(fake.detach(), cond),
                                           w.adversarial_variant, from_logits=True)
        opt_d.zero_grad(set_to_none=True)
        d_loss.backward()
        opt_d.step()

    # the generator's objective must not write gradients into the discriminator
    discriminator.requires_grad_(False)
    content = losses.content_loss(fake, rgb, w.content_norm)
    adv = (losses.adversarial_loss_G(discriminator(fake, cond), w.adversarial_variant, from_logits=True)
           if use_adv else zero)
    perc = losses.perceptual_loss(fake, rgb, extractor) if extractor is not None else zero
    tv = losses.tv_loss(fake) if w.lambda_tv > 0 else zero
    total, breakdown = losses.total_loss(content, adv, perc, tv, w)
    breakdown["d_loss"] = _scalar(d_loss)
    if before_update is not None:
        before_update(dict(breakdown))
    opt_g.zero_grad(set_to_none=True)
    total.backward()
    opt_g.step()
    discriminator.requires_grad_(True)
    return breakdown


def train(config: TrainConfig, manifest: DatasetManifest, state: Optional[Mapping[str, Any]] = None
          ) -> TrainResult:
    """Train from scratch, or continue from a loaded checkpoint ``state``."""
    config.validate()
    train_entries = manifest.split("train")
    if not train_entries:
        raise EmptyDataset("manifest has no training pairs")
    device = resolve_device(config.device)
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / CONFIG_ECHO).write_text(config.dumps())

    w = config.weights
    generator = build_generator(config.model, seed=config.seed).to(device)
    discriminator = build_discriminator(config.disc, seed=config.seed + 1).to(device)
    extractor = None
    if w.lambda_perceptual > 0:
        extractor = losses.VGGFeatures(weights=config.vgg_weights or None, seed=config.seed).to(device)
    betas = (config.beta1, config.beta2)
    opt_g = torch.optim.Adam(generator.parameters(), lr=config.lr, betas=betas)
    opt_d = torch.optim.Adam(discriminator.parameters(), lr=config.lr, betas=betas)

    iteration = 0
    if state is not None:
        generator.load_state_dict(state["generator"])
        discriminator.load_state_dict(state["discriminator"])
        opt_g.load_state_dict(state["opt_g"])
        opt_d.load_state_dict(state["opt_d"])
        iteration = int(state["iteration"])
        for opt in (opt_g, opt_d):  # overrides may change the learning rate or betas
            for group in opt.param_groups:
                group["lr"], group["betas"] = config.lr, betas

    per_epoch = math.ceil(len(train_entries) / config.batch_size)
    limit = config.epochs * per_epoch
    if config.max_iterations:
        limit = min(limit, config.max_iterations)

    log_path = out_dir / LOG_NAME
    log_mode = "a" if state is not None else "w"
    history: List[Dict[str, float]] = []
    cache: dict = {}
    last_ckpt = None
    generator.train()
    discriminator.train()

    with open(log_path, log_mode) as log_file:
        while iteration < limit:
            epoch = iteration // per_epoch
            skip = iteration - epoch * per_epoch
            batches = iterate_batches(manifest, "train", config.batch_size, config.shuffle, config.seed,
                                      epoch, config.target_size, cache)
            for index, batch in enumerate(batches):
                if index < skip:
                    continue
                if iteration >= limit:
                    break
                t0 = time.perf_counter()
                x, y = batch.thermal.to(device), batch.rgb.to(device)

                def guard(record, _it=iteration + 1, _epoch=epoch):
                    record.update(iteration=_it, epoch=_epoch)
                    if not all(math.isfinite(record[k]) for k in (*LOSS_FIELDS, "d_loss")):
                        dump = _dump_nonfinite(out_dir, _it, generator, discriminator, record)
                        raise NonFiniteLoss(f"non-finite loss at iteration {_it}: {record}", _it, dump)

                breakdown = train_step(generator, discriminator, extractor, opt_g, opt_d, x, y, w,
                                       config.model.in_channels, guard)
                record = {"iteration": iteration + 1, "epoch": epoch, **breakdown}
                iteration += 1

                record["wall_time"] = time.perf_counter() - t0
                log_file.write(json.dumps(record) + "\n")
                history.append(record)
                if config.checkpoint_every and iteration % config.checkpoint_every == 0 and iteration < limit:
                    last_ckpt = _checkpoint(out_dir, generator, discriminator, opt_g, opt_d, epoch, iteration,
                                            config, manifest)
            log_file.flush()

    final_epoch = max(iteration - 1, 0) // per_epoch
    final = out_dir / checkpoint_name(final_epoch, iteration)
    if last_ckpt is None or last_ckpt != final:
        last_ckpt = _checkpoint(out_dir, generator, discriminator, opt_g, opt_d, final_epoch, iteration,
                                config, manifest)
    return TrainResult(last_ckpt, log_path, history, generator, discriminator, iteration, final_epoch)


def _checkpoint(out_dir, generator, discriminator, opt_g, opt_d, epoch, iteration, config, manifest) -> Path:
    metrics = None
    if config.snapshot_metrics and config.val_pairs:
        metrics = evaluate_generator(generator, validation_entries(manifest, config.val_pairs), config.target_size)
    path = save_checkpoint(out_dir / checkpoint_name(epoch, iteration), generator, discriminator, opt_g, opt_d,
                           epoch, iteration, config, metrics)
    log.info("wrote %s", path)
    return path


def resume(checkpoint, manifest: DatasetManifest, overrides: Optional[Mapping[str, Any]] = None) -> TrainResult:
    """Continue training from ``checkpoint``; ``overrides`` are flat config keys.

    Overrides that change parameter shapes raise FingerprintMismatch.
    """
    state = load_checkpoint(checkpoint)
    saved = TrainConfig.from_flat(state["config"])
    config = saved.with_overrides(overrides or {})
    if config.fingerprint() != state["fingerprint"]:
        raise FingerprintMismatch(f"overrides change the architecture stored in {checkpoint}")
    old, new = saved.to_flat(), config.to_flat()
    for key in sorted(k for k in new if new[k] != old[k]):
        log.warning("resume override: %s %r -> %r", key, old[key], new[key])
    return train(config, manifest, state=state)


def read_log(path) -> List[Dict[str, float]]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


# -- ablation ---------------------------------------------------------------------------

@dataclasses.dataclass
class AblationRow:
    name: str
    config: TrainConfig
    report: MetricReport
    checkpoint: Path


def resolve_matrix(matrix: Union[Mapping[str, Mapping[str, Any]], Iterable[str], None]
                   ) -> Dict[str, Dict[str, Any]]:
    """Names map to canonical variants; a mapping gives explicit overrides."""
    if matrix is None:
        return {k: dict(v) for k, v in CANONICAL_MATRIX.items()}
    if isinstance(matrix, Mapping):
        return {str(k): dict(v) for k, v in matrix.items()}
    out = {}
    for name in matrix:
        if name not in CANONICAL_MATRIX:
            raise ConfigError(f"unknown ablation variant {name!r}; known: {', '.join(CANONICAL_MATRIX)}")
        out[name] = dict(CANONICAL_MATRIX[name])
    return out


def run_ablation(base: TrainConfig, matrix, manifest: DatasetManifest, eval_pairs: Optional[int] = None
                 ) -> List[AblationRow]:
    """Train every variant from the same seed; score all on one held-out subset."""
    variants = resolve_matrix(matrix)
    # Build every config first so a bad override fails before any training.
    configs = {name: base.with_overrides(ov, output_dir=str(Path(base.output_dir) / name)).validate()
               for name, ov in variants.items()}
    entries = validation_entries(manifest, base.val_pairs if eval_pairs is None else eval_pairs)
    rows = []
    for name, cfg in configs.items():
        log.info("ablation variant %s", name)
        result = train(cfg, manifest)
        rows.append(AblationRow(name, cfg, evaluate_generator(result.generator, entries, cfg.target_size),
                                result.checkpoint))
    return rows


def ablation_table(rows: Sequence[AblationRow]) -> str:
    return format_table([(r.name, r.report.aggregate()) for r in rows])
