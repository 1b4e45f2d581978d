"""Generator objective: content, adversarial, perceptual and total-variation
terms, their weighted sum, and the discriminator's loss.

All reductions are means over the batch.  Tensors are (B, C, H, W) in
[-1, 1].
"""

from __future__ import annotations

import dataclasses
import hashlib
import logging
import math
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import torch
import torch.nn.functional as F
from torch import nn

from .errors import InvalidSpec, ShapeError

log = logging.getLogger(__name__)

ADVERSARIAL_VARIANTS = ("standard", "least_squares")
DEFAULT_TAPS = (3, 8, 15, 22)  # relu1_2, relu2_2, relu3_3, relu4_3 of the VGG-16 feature stack

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
# torchvision names its checkpoint by the first 8 hex digits of the file's sha256
VGG16_TORCHVISION_FILE = "vgg16-397923af.pth"
VGG16_SHA256_PREFIX = "397923af"


@dataclasses.dataclass(frozen=True)
class LossWeights:
    lambda_adv: float = 0.03
    lambda_perceptual: float = 1.0
    lambda_tv: float = 1.0
    adversarial_variant: str = "standard"
    conditional: bool = True
    content_norm: str = "l1"

    def validate(self) -> "LossWeights":
        for name in ("lambda_adv", "lambda_perceptual", "lambda_tv"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise InvalidSpec(f"{name} must be a finite value >= 0, got {v}")
        if self.adversarial_variant not in ADVERSARIAL_VARIANTS:
            raise InvalidSpec(f"unknown adversarial variant {self.adversarial_variant!r}")
        if self.content_norm not in ("l1", "l2"):
            raise InvalidSpec(f"unknown content norm {self.content_norm!r}")
        return self


def _same_shape(a: torch.Tensor, b: torch.Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def content_loss(generated: torch.Tensor, target: torch.Tensor, norm: str = "l1") -> torch.Tensor:
    """Mean absolute (or squared, for ``norm="l2"``) pixel error."""
    _same_shape(generated, target)
    diff = generated - target
    return diff.abs().mean() if norm == "l1" else diff.pow(2).mean()


def adversarial_loss_G(scores_fake: torch.Tensor, variant: str = "standard",
                       from_logits: bool = False) -> torch.Tensor:
    """Non-saturating generator loss, -log D(G(x), x), or (D - 1)^2 for least squares.

    With ``from_logits`` the standard variant takes raw discriminator
    outputs and uses ``softplus(-z) == -log(sigmoid(z))``.
    """
    if variant == "least_squares":
        return (scores_fake - 1.0).pow(2).mean()
    if variant != "standard":
        raise InvalidSpec(f"unknown adversarial variant {variant!r}")
    if from_logits:
        return F.softplus(-scores_fake).mean()
    return (-torch.log(scores_fake)).mean()


def adversarial_loss_D(scores_real: torch.Tensor, scores_fake: torch.Tensor, variant: str = "standard",
                       from_logits: bool = False) -> torch.Tensor:
    if variant == "least_squares":
        return (scores_real - 1.0).pow(2).mean() + scores_fake.pow(2).mean()
    if variant != "standard":
        raise InvalidSpec(f"unknown adversarial variant {variant!r}")
    if from_logits:
        return F.softplus(-scores_real).mean() + F.softplus(scores_fake).mean()
    return (-torch.log(scores_real)).mean() + (-torch.log1p(-scores_fake)).mean()


def tv_loss(generated: torch.Tensor) -> torch.Tensor:
    """Anisotropic total variation with forward differences, divided by H*W."""
    h, w = generated.shape[-2:]
    dx = (generated[..., :, 1:] - generated[..., :, :-1]).abs()
    dy = (generated[..., 1:, :] - generated[..., :-1, :]).abs()
    per_image = dx.flatten(1).sum(1) + dy.flatten(1).sum(1)
    return per_image.mean() / (h * w)


# -- perceptual ---------------------------------------------------------------------

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class VGGFeatures(nn.Module):
    """Frozen VGG-16 convolutional stack truncated after the deepest tap.

    ``weights`` is a path to a torchvision ``vgg16`` state dict (full model
    or ``features`` only).  Without one the stack is randomly initialized
    from ``seed``, which keeps every identity and gradient property but is
    not a perceptual metric.
    """

    def __init__(self, taps: Sequence[int] = DEFAULT_TAPS, weights: Optional[str] = None,
                 seed: int = 0, verify_checksum: bool = False):
        super().__init__()
        from torchvision.models import vgg16

        self.taps = tuple(sorted(taps))
        depth = (max(self.taps) + 1) if self.taps else 0
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            stack = vgg16(weights=None).features
        if weights is not None:
            self._load(stack, weights, verify_checksum)
        else:
            log.warning("no VGG-16 weights given; perceptual features use a seeded random initialization")
        layers = list(stack.children())[:depth]
        for layer in layers:
            if isinstance(layer, nn.ReLU):
                layer.inplace = False  # a tapped tensor must not be overwritten downstream
        self.layers = nn.ModuleList(layers)
        self.register_buffer("mean", torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(IMAGENET_STD).view(1, 3, 1, 1))
        self.requires_grad_(False)
        self.eval()
        self.weights_path = weights

    @staticmethod
    def _load(stack: nn.Module, path, verify_checksum: bool) -> None:
        path = Path(path)
        if verify_checksum:
            digest = sha256_file(path)
            if not digest.startswith(VGG16_SHA256_PREFIX):
                raise ValueError(f"{path}: sha256 {digest[:16]}... does not match the torchvision VGG-16 file")
        state = torch.load(path, map_location="cpu", weights_only=True)
        if any(k.startswith("features.") for k in state):
            state = {k[len("features."):]: v for k, v in state.items() if k.startswith("features.")}
        stack.load_state_dict(state)

    def train(self, mode: bool = True):
        return super().train(False)

    def preprocess(self, x: torch.Tensor) -> torch.Tensor:
        return ((x + 1.0) / 2.0 - self.mean.to(x.dtype)) / self.std.to(x.dtype)

    def forward(self, x: torch.Tensor, taps: Optional[Sequence[int]] = None) -> Dict[int, torch.Tensor]:
        """Activations at ``taps`` (default: all configured taps); stops after the deepest one."""
        taps = self.taps if taps is None else tuple(taps)
        out = {}
        if not taps:
            return out
        h = self.preprocess(x)
        for i, layer in enumerate(self.layers[:max(taps) + 1]):
            h = layer(h)
            if i in taps:
                out[i] = h
        return out


def perceptual_loss(generated: torch.Tensor, target: torch.Tensor, extractor: VGGFeatures,
                    taps: Optional[Sequence[int]] = None) -> torch.Tensor:
    """Sum over tapped layers of the mean absolute feature difference."""
    _same_shape(generated, target)
    if generated.shape[1] != 3:
        raise ShapeError("perceptual loss needs 3-channel inputs")
    taps = extractor.taps if taps is None else tuple(taps)
    if not taps:
        return generated.new_zeros(())
    missing = set(taps) - set(extractor.taps)
    if missing:
        raise ValueError(f"extractor does not expose layers {sorted(missing)}")
    feats_g = extractor(generated, taps)
    with torch.no_grad():
        feats_t = extractor(target, taps)
    total = generated.new_zeros(())
    for k in taps:
        total = total + (feats_t[k] - feats_g[k]).abs().mean()
    return total


def _item(v) -> float:
    return float(v.detach()) if isinstance(v, torch.Tensor) else float(v)


def total_loss(content: torch.Tensor, adversarial: torch.Tensor, perceptual: torch.Tensor,
               tv: torch.Tensor, weights: LossWeights) -> Tuple[torch.Tensor, Dict[str, float]]:
    """Weighted generator objective and its per-term breakdown.

    A zero weight drops its term entirely, so a non-finite disabled term
    cannot leak into the sum.
    """
    total = content
    for term, lam in ((perceptual, weights.lambda_perceptual), (adversarial, weights.lambda_adv),
                      (tv, weights.lambda_tv)):
        if lam != 0:
            total = total + lam * term
    breakdown = {
        "content": _item(content),
        "adversarial": _item(adversarial),
        "perceptual": _item(perceptual),
        "tv": _item(tv),
        "total": _item(total),
    }
    return total, breakdown
