"""Generators: the coarse-to-fine two-stage network and the UNet / ResNet
alternatives used for the architecture ablation.

The coarse-to-fine network is a global stage run on a 2x average-pooled
input, wrapped by a local enhancer at full resolution.  The enhancer's
downsampled features are summed with the global stage's last feature map
before the enhancer's residual blocks and upsampling head::

    x ──► local front (7x7, stride-2) ─────────────┐
    │                                              (+) ─► m res blocks ─► up ─► 7x7 ─► tanh
    └─► avgpool ─► global (7x7, k down, n res, k up) ┘

Every convolution uses bias, instance normalization has no affine
parameters, and padding ahead of 7x7 / residual convolutions is reflective.
"""

from __future__ import annotations

import dataclasses
from typing import Optional

import torch
from torch import nn

from .errors import InvalidSpec, ShapeError

VARIANTS = ("coarse_to_fine", "unet", "resnet")


@dataclasses.dataclass(frozen=True)
class ModelSpec:
    variant: str = "coarse_to_fine"
    base_filters: int = 32
    local_blocks_m: int = 3
    global_blocks_n: int = 9
    in_channels: int = 1
    out_channels: int = 3
    # stride-2 convolutions in the global stage (and in the resnet variant)
    global_downsampling: int = 2
    unet_depth: int = 5

    def validate(self) -> "ModelSpec":
        if self.variant not in VARIANTS:
            raise InvalidSpec(f"unknown generator variant {self.variant!r}")
        if self.base_filters < 1:
            raise InvalidSpec("base_filters must be >= 1")
        if self.local_blocks_m < 0:
            raise InvalidSpec("local_blocks_m must be >= 0")
        if self.global_blocks_n < 1:
            raise InvalidSpec("global_blocks_n must be >= 1")
        if self.in_channels < 1 or self.out_channels < 1:
            raise InvalidSpec("channel counts must be >= 1")
        if self.global_downsampling < 1:
            raise InvalidSpec("global_downsampling must be >= 1")
        if self.unet_depth < 2:
            raise InvalidSpec("unet_depth must be >= 2")
        return self


def init_weights(module: nn.Module, std: float = 0.02) -> None:
    """Zero-mean Gaussian conv weights, zero biases."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.normal_(m.weight, 0.0, std)
            if m.bias is not None:
                nn.init.zeros_(m.bias)


def _conv_block(cin, cout, kernel, stride=1, padding=0, reflect=0):
    layers = [nn.ReflectionPad2d(reflect)] if reflect else []
    layers += [nn.Conv2d(cin, cout, kernel, stride, padding), nn.InstanceNorm2d(cout), nn.ReLU(True)]
    return layers


def _up_block(cin, cout):
    return [nn.ConvTranspose2d(cin, cout, 3, stride=2, padding=1, output_padding=1),
            nn.InstanceNorm2d(cout), nn.ReLU(True)]


def _rgb_head(cin, cout):
    return [nn.ReflectionPad2d(3), nn.Conv2d(cin, cout, 7), nn.Tanh()]


class ResnetBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.block = nn.Sequential(
            nn.ReflectionPad2d(1), nn.Conv2d(channels, channels, 3), nn.InstanceNorm2d(channels), nn.ReLU(True),
            nn.ReflectionPad2d(1), nn.Conv2d(channels, channels, 3), nn.InstanceNorm2d(channels),
        )

    def forward(self, x):
        return x + self.block(x)


class ResnetStage(nn.Module):
    """Single-stage residual generator: 7x7 front, k stride-2 downs,
    residual blocks, k transposed-conv ups.  ``to_rgb`` is the output head.
    """

    def __init__(self, in_channels, out_channels, filters, n_blocks, n_down):
        super().__init__()
        layers = _conv_block(in_channels, filters, 7, reflect=3)
        c = filters
        for _ in range(n_down):
            layers += _conv_block(c, 2 * c, 3, stride=2, padding=1)
            c *= 2
        layers += [ResnetBlock(c) for _ in range(n_blocks)]
        for _ in range(n_down):
            layers += _up_block(c, c // 2)
            c //= 2
        self.features = nn.Sequential(*layers)
        self.to_rgb = nn.Sequential(*_rgb_head(filters, out_channels))
        self.size_multiple = 2 ** n_down

    def forward(self, x):
        return self.to_rgb(self.features(x))


class CoarseToFineGenerator(nn.Module):
    def __init__(self, spec: ModelSpec):
        super().__init__()
        f = spec.base_filters
        # The global stage runs at half resolution with twice the filters.
        self.global_stage = ResnetStage(spec.in_channels, spec.out_channels, 2 * f,
                                        spec.global_blocks_n, spec.global_downsampling)
        self.pool = nn.AvgPool2d(3, stride=2, padding=1, count_include_pad=False)
        self.local_front = nn.Sequential(
            *_conv_block(spec.in_channels, f, 7, reflect=3),
            *_conv_block(f, 2 * f, 3, stride=2, padding=1),
        )
        self.local_back = nn.Sequential(
            *[ResnetBlock(2 * f) for _ in range(spec.local_blocks_m)],
            *_up_block(2 * f, f),
            *_rgb_head(f, spec.out_channels),
        )
        self.size_multiple = 2 * self.global_stage.size_multiple

    def forward(self, x):
        coarse = self.global_stage.features(self.pool(x))
        return self.local_back(self.local_front(x) + coarse)

    def forward_global(self, x_half):
        """Run the global stage alone on a half-resolution input."""
        return self.global_stage(x_half)


class UnetBlock(nn.Module):
    """One level of the encoder-decoder; ``inner`` is the next level down."""

    def __init__(self, outer, inner_c, inner: Optional[nn.Module] = None, in_channels=None,
                 outermost=False, out_channels=None):
        super().__init__()
        in_channels = in_channels or outer
        down = nn.Conv2d(in_channels, inner_c, 4, stride=2, padding=1)
        self.outermost = outermost
        if outermost:
            up = nn.ConvTranspose2d(2 * inner_c, out_channels, 4, stride=2, padding=1)
            layers = [down, inner, nn.ReLU(True), up, nn.Tanh()]
        elif inner is None:
            up = nn.ConvTranspose2d(inner_c, outer, 4, stride=2, padding=1)
            layers = [nn.LeakyReLU(0.2), down, nn.ReLU(True), up, nn.InstanceNorm2d(outer)]
        else:
            up = nn.ConvTranspose2d(2 * inner_c, outer, 4, stride=2, padding=1)
            layers = [nn.LeakyReLU(0.2), down, nn.InstanceNorm2d(inner_c), inner,
                      nn.ReLU(True), up, nn.InstanceNorm2d(outer)]
        self.model = nn.Sequential(*layers)

    def forward(self, x):
        if self.outermost:
            return self.model(x)
        return torch.cat([x, self.model(x)], 1)


class UnetGenerator(nn.Module):
    """Skip-connected encoder-decoder with ``depth`` stride-2 levels."""

    def __init__(self, spec: ModelSpec):
        super().__init__()
        f, depth = spec.base_filters, spec.unet_depth
        mult = [min(2 ** i, 8) for i in range(depth)]  # filters at each encoder level
        block = None
        for level in range(depth - 1, 0, -1):
            block = UnetBlock(f * mult[level - 1], f * mult[level], block)
        self.model = UnetBlock(None, f, block, in_channels=spec.in_channels, outermost=True,
                               out_channels=spec.out_channels)
        self.size_multiple = 2 ** depth

    def forward(self, x):
        return self.model(x)


class ResnetGenerator(ResnetStage):
    def __init__(self, spec: ModelSpec):
        super().__init__(spec.in_channels, spec.out_channels, spec.base_filters,
                         spec.global_blocks_n, spec.global_downsampling)


def build_generator(spec: ModelSpec, seed: Optional[int] = None) -> nn.Module:
    spec.validate()
    if seed is not None:
        torch.manual_seed(seed)
    cls = {"coarse_to_fine": CoarseToFineGenerator, "unet": UnetGenerator, "resnet": ResnetGenerator}
    model = cls[spec.variant](spec)
    model.spec = spec
    init_weights(model)
    return model


def forward(model: nn.Module, x: torch.Tensor) -> torch.Tensor:
    """Shape-checked ``model(x)``."""
    if x.dim() != 4:
        raise ShapeError(f"expected a (B, C, H, W) batch, got shape {tuple(x.shape)}")
    spec = getattr(model, "spec", None)
    if spec is not None and x.shape[1] != spec.in_channels:
        raise ShapeError(f"generator expects {spec.in_channels} input channels, got {x.shape[1]}")
    k = getattr(model, "size_multiple", 1)
    h, w = x.shape[-2:]
    if h % k or w % k:
        raise ShapeError(f"input {h}x{w} is not divisible by {k}")
    return model(x)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def _conv(cin, cout, k):
    return k * k * cin * cout + cout


def expected_parameter_count(spec: ModelSpec) -> int:
    """Closed-form parameter count (see README for the derivation)."""
    spec.validate()
    ci, co, f = spec.in_channels, spec.out_channels, spec.base_filters

    def resnet_stage(g, n_blocks, n_down):
        total = _conv(ci, g, 7) + _conv(g, co, 7)
        for i in range(n_down):
            c = g * 2 ** i
            total += _conv(c, 2 * c, 3) + _conv(2 * c, c, 3)  # down conv, transposed up conv
        c = g * 2 ** n_down
        return total + n_blocks * 2 * _conv(c, c, 3)

    if spec.variant == "resnet":
        return resnet_stage(f, spec.global_blocks_n, spec.global_downsampling)
    if spec.variant == "coarse_to_fine":
        total = resnet_stage(2 * f, spec.global_blocks_n, spec.global_downsampling)
        total += _conv(ci, f, 7) + _conv(f, 2 * f, 3)
        total += spec.local_blocks_m * 2 * _conv(2 * f, 2 * f, 3)
        total += _conv(2 * f, f, 3) + _conv(f, co, 7)
        return total
    # unet: down conv + up conv per level; non-innermost ups see doubled input
    depth = spec.unet_depth
    c = [f * min(2 ** i, 8) for i in range(depth)]
    total = _conv(ci, c[0], 4) + _conv(2 * c[0], co, 4)
    for level in range(1, depth):
        up_in = c[level] if level == depth - 1 else 2 * c[level]
        total += _conv(c[level - 1], c[level], 4) + _conv(up_in, c[level - 1], 4)
    return total
