"""Training configuration and its flat ``key = value`` file format.

Every key in ``KEYS`` may appear in a config file and as a ``--key-name``
command-line flag.  Precedence: flag > file > built-in default.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from pathlib import Path
from typing import Any, Callable, Dict, Mapping, NamedTuple, Optional

from .discriminator import DiscriminatorSpec
from .errors import ConfigError, InvalidSpec
from .generator import ModelSpec
from .losses import LossWeights


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


class Key(NamedTuple):
    section: str  # "model", "disc", "weights" or "train"
    field: str
    type: Callable[[Any], Any]
    help: str


KEYS: Dict[str, Key] = {
    "variant": Key("model", "variant", str, "generator: coarse_to_fine, unet or resnet"),
    "base_filters": Key("model", "base_filters", int, "filters in the generator's first convolution"),
    "local_blocks_m": Key("model", "local_blocks_m", int, "residual blocks in the local enhancer"),
    "global_blocks_n": Key("model", "global_blocks_n", int, "residual blocks in the global stage / resnet"),
    "global_downsampling": Key("model", "global_downsampling", int, "stride-2 convolutions in the global stage"),
    "unet_depth": Key("model", "unet_depth", int, "encoder levels of the unet variant"),
    "in_channels": Key("model", "in_channels", int, "generator input channels (3 replicates the thermal band)"),
    "disc_base_filters": Key("disc", "base_filters", int, "filters in the discriminator's first convolution"),
    "disc_layers": Key("disc", "layers", int, "stride-2 convolutions in the discriminator"),
    "disc_norm": Key("disc", "norm", str, "discriminator normalization: instance or none"),
    "lambda_adv": Key("weights", "lambda_adv", float, "adversarial loss weight"),
    "lambda_perceptual": Key("weights", "lambda_perceptual", float, "perceptual loss weight"),
    "lambda_tv": Key("weights", "lambda_tv", float, "total variation loss weight"),
    "adversarial_variant": Key("weights", "adversarial_variant", str, "standard or least_squares"),
    "conditional": Key("weights", "conditional", _bool, "feed the thermal image to the discriminator"),
    "content_norm": Key("weights", "content_norm", str, "content loss norm: l1 or l2"),
    "epochs": Key("train", "epochs", int, "passes over the training split"),
    "max_iterations": Key("train", "max_iterations", int, "stop after this many iterations (0: no limit)"),
    "batch_size": Key("train", "batch_size", int, "pairs per iteration"),
    "lr": Key("train", "lr", float, "Adam learning rate"),
    "beta1": Key("train", "beta1", float, "Adam beta1"),
    "beta2": Key("train", "beta2", float, "Adam beta2"),
    "seed": Key("train", "seed", int, "seed for weight init and shuffling"),
    "checkpoint_every": Key("train", "checkpoint_every", int, "iterations between checkpoints (0: end only)"),
    "output_dir": Key("train", "output_dir", str, "directory for checkpoints and logs"),
    "target_width": Key("train", "target_width", int, "training image width (multiple of 32)"),
    "target_height": Key("train", "target_height", int, "training image height (multiple of 32)"),
    "vgg_weights": Key("train", "vgg_weights", str, "path to torchvision VGG-16 weights ('' for seeded random)"),
    "shuffle": Key("train", "shuffle", _bool, "shuffle the training split each epoch"),
    "val_pairs": Key("train", "val_pairs", int, "test pairs scored at each checkpoint"),
    "snapshot_metrics": Key("train", "snapshot_metrics", _bool, "score the validation subset at checkpoints"),
    "device": Key("train", "device", str, "torch device ('' uses $TIRCOLOR_DEVICE or cpu)"),
}

# Keys that determine parameter shapes; checkpoints must agree on these.
ARCHITECTURE_KEYS = ("variant", "base_filters", "local_blocks_m", "global_blocks_n", "global_downsampling",
                     "unet_depth", "in_channels", "disc_base_filters", "disc_layers", "disc_norm",
                     "conditional", "adversarial_variant")


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    model: ModelSpec = ModelSpec()
    disc: DiscriminatorSpec = DiscriminatorSpec()
    weights: LossWeights = LossWeights()
    epochs: int = 10
    max_iterations: int = 0
    batch_size: int = 1
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    seed: int = 0
    checkpoint_every: int = 0
    output_dir: str = "runs/default"
    target_width: int = 320
    target_height: int = 256
    vgg_weights: str = ""
    shuffle: bool = True
    val_pairs: int = 32
    snapshot_metrics: bool = True
    device: str = ""

    @property
    def target_size(self):
        return (self.target_width, self.target_height)

    def validate(self) -> "TrainConfig":
        self.model.validate()
        self.disc.validate()
        self.weights.validate()
        if self.epochs < 1:
            raise InvalidSpec("epochs must be >= 1")
        if self.batch_size < 1:
            raise InvalidSpec("batch_size must be >= 1")
        if not self.lr > 0:
            raise InvalidSpec("lr must be > 0")
        if self.max_iterations < 0 or self.checkpoint_every < 0 or self.val_pairs < 0:
            raise InvalidSpec("max_iterations, checkpoint_every and val_pairs must be >= 0")
        if self.disc.conditional != self.weights.conditional:
            raise InvalidSpec("discriminator and loss disagree on conditioning")
        return self

    def to_flat(self) -> Dict[str, Any]:
        out = {}
        for key, k in KEYS.items():
            obj = self if k.section == "train" else getattr(self, k.section)
            out[key] = getattr(obj, k.field)
        return out

    @classmethod
    def from_flat(cls, flat: Mapping[str, Any]) -> "TrainConfig":
        unknown = set(flat) - set(KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        sections: Dict[str, Dict[str, Any]] = {"model": {}, "disc": {}, "weights": {}, "train": {}}
        for key, value in flat.items():
            k = KEYS[key]
            try:
                sections[k.section][k.field] = k.type(value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from exc
        weights = LossWeights(**sections["weights"])
        disc = DiscriminatorSpec(
            **sections["disc"],
            conditional=weights.conditional,
            score_activation="sigmoid" if weights.adversarial_variant == "standard" else "linear",
        )
        return cls(model=ModelSpec(**sections["model"]), disc=disc, weights=weights, **sections["train"])

    def with_overrides(self, overrides: Optional[Mapping[str, Any]] = None, **kw) -> "TrainConfig":
        flat = self.to_flat()
        flat.update(overrides or {})
        flat.update(kw)
        return TrainConfig.from_flat(flat)

    def fingerprint(self) -> str:
        flat = self.to_flat()
        arch = {k: flat[k] for k in ARCHITECTURE_KEYS}
        return hashlib.sha256(json.dumps(arch, sort_keys=True).encode()).hexdigest()[:16]

    def dumps(self) -> str:
        return "".join(f"{k} = {_render(v)}\n" for k, v in self.to_flat().items())


def _render(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        sep = "=" if "=" in line else ":" if ":" in line else None
        if sep is None:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split(sep, 1))
        key = key.replace("-", "_")
        if key not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def load_config(path=None, overrides: Optional[Mapping[str, Any]] = None) -> TrainConfig:
    flat: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        flat.update(parse_config_text(path.read_text(), str(path)))
    flat.update(overrides or {})
    return TrainConfig().with_overrides(flat).validate()
