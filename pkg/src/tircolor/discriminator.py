"""Conditional patch discriminator.

With the default schedule (three 4x4 stride-2 convolutions, one 4x4
stride-1 convolution, a 4x4 stride-1 score layer, padding 1 everywhere)
each output cell sees a 70x70 window of the input.
"""

from __future__ import annotations

import dataclasses
from typing import List, Optional, Tuple

import torch
from torch import nn

from .errors import ConditionMissing, InvalidSpec, ShapeError
from .generator import init_weights

KERNEL = 4
PADDING = 1


@dataclasses.dataclass(frozen=True)
class DiscriminatorSpec:
    base_filters: int = 32
    layers: int = 3  # stride-2 convolutions; one stride-1 conv and the score layer follow
    conditional: bool = True
    score_activation: str = "sigmoid"  # or "linear" for least squares
    norm: str = "instance"  # "none" keeps every score strictly local
    image_channels: int = 3
    condition_channels: int = 1

    @property
    def in_channels(self) -> int:
        return self.image_channels + (self.condition_channels if self.conditional else 0)

    def validate(self) -> "DiscriminatorSpec":
        if self.base_filters < 1:
            raise InvalidSpec("disc base_filters must be >= 1")
        if self.layers < 1:
            raise InvalidSpec("disc layers must be >= 1")
        if self.score_activation not in ("sigmoid", "linear"):
            raise InvalidSpec(f"unknown score activation {self.score_activation!r}")
        if self.norm not in ("instance", "none"):
            raise InvalidSpec(f"unknown disc norm {self.norm!r}")
        return self

    def strides(self) -> List[int]:
        return [2] * self.layers + [1, 1]


def receptive_field(spec: DiscriminatorSpec) -> int:
    r, jump = 1, 1
    for s in spec.strides():
        r += (KERNEL - 1) * jump
        jump *= s
    return r


def footprint(spec: DiscriminatorSpec) -> Tuple[int, int, int]:
    """(size, stride, offset): score cell i covers input [i*stride - offset, ... + size - 1]."""
    jump, offset = 1, 0
    for s in spec.strides():
        offset += PADDING * jump
        jump *= s
    return receptive_field(spec), jump, offset


def _out_size(n: int, stride: int) -> int:
    return (n + 2 * PADDING - KERNEL) // stride + 1


def score_grid_shape(spec: DiscriminatorSpec, height: int, width: int) -> Tuple[int, int, int]:
    h, w = height, width
    for s in spec.strides():
        h, w = _out_size(h, s), _out_size(w, s)
        if h < 1 or w < 1:
            raise ShapeError(f"{height}x{width} input is too small for the discriminator")
    return 1, h, w


class PatchDiscriminator(nn.Module):
    """Returns raw logits; ``score`` applies the configured activation."""

    def __init__(self, spec: DiscriminatorSpec):
        super().__init__()
        f = spec.base_filters
        use_norm = spec.norm == "instance"
        layers = [nn.Conv2d(spec.in_channels, f, KERNEL, 2, PADDING), nn.LeakyReLU(0.2, True)]
        c = f
        for i, stride in enumerate(spec.strides()[1:-1], 1):
            nxt = f * min(2 ** i, 8)
            layers += [nn.Conv2d(c, nxt, KERNEL, stride, PADDING)]
            if use_norm:
                layers += [nn.InstanceNorm2d(nxt)]
            layers += [nn.LeakyReLU(0.2, True)]
            c = nxt
        layers += [nn.Conv2d(c, 1, KERNEL, 1, PADDING)]
        self.model = nn.Sequential(*layers)
        self.spec = spec

    def forward(self, candidate: torch.Tensor, condition: Optional[torch.Tensor] = None) -> torch.Tensor:
        spec = self.spec
        if candidate.dim() != 4 or candidate.shape[1] != spec.image_channels:
            raise ShapeError(f"candidate must be (B, {spec.image_channels}, H, W), got {tuple(candidate.shape)}")
        if spec.conditional:
            if condition is None:
                raise ConditionMissing("conditional discriminator needs the thermal condition")
            if condition.shape[0] != candidate.shape[0] or condition.shape[-2:] != candidate.shape[-2:]:
                raise ShapeError(f"condition {tuple(condition.shape)} does not match candidate "
                                 f"{tuple(candidate.shape)}")
            if condition.shape[1] != spec.condition_channels:
                raise ShapeError(f"condition must have {spec.condition_channels} channels")
            candidate = torch.cat([candidate, condition], 1)
        elif condition is not None:
            raise ShapeError("unconditional discriminator got a condition")
        return self.model(candidate)


def build_discriminator(spec: DiscriminatorSpec, seed: Optional[int] = None) -> PatchDiscriminator:
    spec.validate()
    if seed is not None:
        torch.manual_seed(seed)
    model = PatchDiscriminator(spec)
    init_weights(model)
    return model


def score(model: PatchDiscriminator, candidate: torch.Tensor, condition: Optional[torch.Tensor] = None
          ) -> torch.Tensor:
    """Score grid (B, 1, h, w): probabilities for sigmoid, raw values for linear."""
    logits = model(candidate, condition)
    if model.spec.score_activation == "sigmoid":
        return torch.sigmoid(logits)
    return logits
