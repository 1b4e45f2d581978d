"""Thermal infrared to RGB colorization with a conditional GAN."""

__version__ = "0.1.0"

from .config import TrainConfig, load_config
from .dataset import DatasetManifest, PairingRule, build_manifest, iterate_batches, load_pair
from .discriminator import DiscriminatorSpec, build_discriminator, receptive_field, score
from .generator import ModelSpec, build_generator
from .losses import LossWeights

__all__ = [
    "DatasetManifest",
    "DiscriminatorSpec",
    "LossWeights",
    "ModelSpec",
    "PairingRule",
    "TrainConfig",
    "build_discriminator",
    "build_generator",
    "build_manifest",
    "iterate_batches",
    "load_config",
    "load_pair",
    "receptive_field",
    "score",
]
