"""Pairing, decoding and normalization of thermal/RGB image pairs.

The default pairing rule follows the KAIST multispectral layout::

    <root>/setNN/VMMM/lwir/I00000.jpg      thermal
    <root>/setNN/VMMM/visible/I00000.jpg   colour

A pair key is the file's path relative to ``root`` with the modality
directory removed and the suffix stripped (``set00/V000/I00000``).
"""

from __future__ import annotations

import dataclasses
import logging
import re
from pathlib import Path
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from .errors import (
    ChannelMismatch,
    DatasetError,
    DecodeError,
    EmptyDataset,
    PairingAmbiguity,
    ShapeError,
)

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
SPLITS = ("train", "test")
TIMES_OF_DAY = ("day", "night", "unknown")
DEFAULT_TARGET_SIZE = (320, 256)  # (width, height)
SIZE_MULTIPLE = 32

# KAIST: set00-05 train, set06-11 test; 00-02 and 06-08 are daytime.
_KAIST_SET = re.compile(r"^set(\d{2})$", re.IGNORECASE)
_KAIST_DAY_SETS = {0, 1, 2, 6, 7, 8}


@dataclasses.dataclass(frozen=True)
class PairingRule:
    """Two glob patterns, relative to the dataset root, for each modality."""

    thermal_glob: str = "**/lwir/*"
    rgb_glob: str = "**/visible/*"

    def _tokens(self, pattern: str) -> set:
        parts = Path(pattern).parts[:-1]
        return {p for p in parts if not any(ch in p for ch in "*?[")}

    def key(self, rel: Path, pattern: str) -> str:
        drop = self._tokens(pattern)
        parts = [p for p in rel.parent.parts if p not in drop]
        return "/".join(parts + [rel.stem])


@dataclasses.dataclass(frozen=True)
class ManifestEntry:
    id: str
    thermal_path: Path
    rgb_path: Path
    split: str = "train"
    time_of_day: str = "unknown"


@dataclasses.dataclass
class ImagePair:
    """A decoded, not yet resized pair of 8-bit rasters."""

    id: str
    thermal: np.ndarray  # (H, W) uint8
    rgb: np.ndarray  # (H, W, 3) uint8
    split: str = "train"
    time_of_day: str = "unknown"


@dataclasses.dataclass
class DatasetManifest:
    root: Path
    entries: List[ManifestEntry]
    target_size: Tuple[int, int] = DEFAULT_TARGET_SIZE
    warnings: List[str] = dataclasses.field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.id in seen:
                raise DatasetError(f"duplicate id in manifest: {e.id}")
            seen.add(e.id)

    def __len__(self):
        return len(self.entries)

    def split(self, name: str) -> List[ManifestEntry]:
        """Entries of one split, sorted by id."""
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}")
        return sorted((e for e in self.entries if e.split == name), key=lambda e: e.id)

    def save(self, path) -> None:
        path = Path(path)
        lines = [f"#root\t{self.root}"]
        for e in sorted(self.entries, key=lambda e: e.id):
            lines.append("\t".join([e.id, _rel(e.thermal_path, self.root), _rel(e.rgb_path, self.root),
                                    e.split, e.time_of_day]))
        path.write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path, target_size: Tuple[int, int] = DEFAULT_TARGET_SIZE) -> "DatasetManifest":
        path = Path(path)
        root = path.parent
        entries = []
        for lineno, line in enumerate(path.read_text().splitlines(), 1):
            if not line.strip():
                continue
            if line.startswith("#root\t"):
                root = Path(line.split("\t", 1)[1])
                continue
            if line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 5:
                raise DatasetError(f"{path}:{lineno}: expected 5 tab-separated fields, got {len(fields)}")
            id_, tpath, rpath, split, tod = fields
            if split not in SPLITS or tod not in TIMES_OF_DAY:
                raise DatasetError(f"{path}:{lineno}: bad split/time_of_day {split!r}/{tod!r}")
            tpath, rpath = root / tpath, root / rpath
            for p in (tpath, rpath):
                if not p.is_file():
                    raise DatasetError(f"{path}:{lineno}: missing file {p}")
            entries.append(ManifestEntry(id_, tpath, rpath, split, tod))
        if not entries:
            raise EmptyDataset(f"manifest {path} has no entries")
        return cls(root=root, entries=entries, target_size=target_size)


def _rel(p: Path, root: Path) -> str:
    try:
        return str(Path(p).relative_to(root))
    except ValueError:
        return str(p)


def infer_split(key: str) -> Tuple[str, str]:
    """Guess (split, time_of_day) from the components of a pair key."""
    split, tod = "train", "unknown"
    for part in key.split("/"):
        low = part.lower()
        m = _KAIST_SET.match(part)
        if m:
            n = int(m.group(1))
            split = "train" if n <= 5 else "test"
            tod = "day" if n in _KAIST_DAY_SETS else "night"
        elif low in SPLITS:
            split = low
        elif low in ("day", "night"):
            tod = low
    return split, tod


def _collect(root: Path, pattern: str, rule: PairingRule) -> Dict[str, List[Path]]:
    found: Dict[str, List[Path]] = {}
    for p in sorted(root.glob(pattern)):
        if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES:
            found.setdefault(rule.key(p.relative_to(root), pattern), []).append(p)
    return found


def build_manifest(root, rule: Optional[PairingRule] = None, time_of_day: Optional[str] = None,
                   target_size: Tuple[int, int] = DEFAULT_TARGET_SIZE) -> DatasetManifest:
    """Match thermal files to colour files by shared key.

    Orphans on either side are logged and kept in ``manifest.warnings``.
    ``time_of_day`` (``"day"``/``"night"``) keeps only matching entries.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root does not exist: {root}")
    rule = rule or PairingRule()
    thermal = _collect(root, rule.thermal_glob, rule)
    rgb = _collect(root, rule.rgb_glob, rule)

    warnings = []
    entries = []
    for key in sorted(set(thermal) | set(rgb)):
        t, r = thermal.get(key, []), rgb.get(key, [])
        if len(t) > 1 or len(r) > 1:
            raise PairingAmbiguity(f"key {key!r} matches {len(t)} thermal and {len(r)} rgb files")
        if not t or not r:
            side = "thermal" if t else "rgb"
            warnings.append(f"unmatched {side} file: {(t or r)[0]}")
            continue
        split, tod = infer_split(key)
        if time_of_day is not None and tod != time_of_day:
            continue
        entries.append(ManifestEntry(key, t[0], r[0], split, tod))

    for w in warnings:
        log.warning(w)
    if not entries:
        raise EmptyDataset(f"no thermal/rgb pairs found under {root}")
    return DatasetManifest(root=root, entries=entries, target_size=target_size, warnings=warnings)


# -- decoding -------------------------------------------------------------------

def _open(path) -> Image.Image:
    try:
        img = Image.open(path)
        img.load()
    except (OSError, UnidentifiedImageError) as exc:
        raise DecodeError(f"cannot decode {path}: {exc}") from exc
    if img.mode == "P":
        img = img.convert("RGB")
    return img


def decode_thermal(path) -> np.ndarray:
    img = _open(path)
    if img.mode == "L":
        return np.asarray(img, dtype=np.uint8)
    if img.mode == "RGB":
        arr = np.asarray(img, dtype=np.uint8)
        if not (np.array_equal(arr[..., 0], arr[..., 1]) and np.array_equal(arr[..., 0], arr[..., 2])):
            raise ChannelMismatch(f"{path}: 3-channel thermal image whose channels differ")
        return arr[..., 0].copy()
    if img.mode in ("I", "I;16", "I;16B", "F"):
        raise DecodeError(f"{path}: expected 8-bit data, got mode {img.mode}")
    raise ChannelMismatch(f"{path}: thermal image must have 1 channel, got mode {img.mode}")


def decode_rgb(path) -> np.ndarray:
    img = _open(path)
    if img.mode != "RGB":
        raise ChannelMismatch(f"{path}: colour image must have 3 channels, got mode {img.mode}")
    return np.asarray(img, dtype=np.uint8)


def read_pair(entry: ManifestEntry) -> ImagePair:
    return ImagePair(entry.id, decode_thermal(entry.thermal_path), decode_rgb(entry.rgb_path),
                     entry.split, entry.time_of_day)


# -- normalization ------------------------------------------------------------

def normalize(raster: np.ndarray) -> torch.Tensor:
    """8-bit raster (H, W) or (H, W, C) -> float32 tensor (C, H, W) in [-1, 1]."""
    arr = np.asarray(raster)
    if arr.dtype != np.uint8:
        raise TypeError(f"expected uint8 raster, got {arr.dtype}")
    if arr.ndim == 2:
        arr = arr[..., None]
    t = torch.from_numpy(arr.transpose(2, 0, 1).astype(np.float32))
    return t / 127.5 - 1.0


def denormalize(tensor: torch.Tensor) -> np.ndarray:
    """(C, H, W) tensor in [-1, 1] -> uint8 raster (H, W, C), or (H, W) for C=1.

    Values are clamped to [-1, 1] first.
    """
    t = tensor.detach().cpu().to(torch.float64).clamp(-1.0, 1.0)
    arr = torch.round((t + 1.0) * 127.5).to(torch.uint8).numpy().transpose(1, 2, 0)
    return arr[..., 0] if arr.shape[2] == 1 else arr


def _resize(arr: np.ndarray, size: Tuple[int, int]) -> np.ndarray:
    if (arr.shape[1], arr.shape[0]) == tuple(size):
        return arr
    return np.asarray(Image.fromarray(arr).resize(size, Image.BILINEAR))


def check_size(size: Tuple[int, int]) -> None:
    w, h = size
    if w <= 0 or h <= 0 or w % SIZE_MULTIPLE or h % SIZE_MULTIPLE:
        raise ShapeError(f"target size {w}x{h} must be positive multiples of {SIZE_MULTIPLE}")


def load_pair(entry: ManifestEntry, target_size: Tuple[int, int] = DEFAULT_TARGET_SIZE
              ) -> Tuple[torch.Tensor, torch.Tensor]:
    """Decode, bilinearly resize to ``target_size`` (w, h) and normalize one pair."""
    check_size(target_size)
    pair = read_pair(entry)
    thermal = normalize(_resize(pair.thermal, target_size))
    rgb = normalize(_resize(pair.rgb, target_size))
    return thermal, rgb


class Batch(NamedTuple):
    thermal: torch.Tensor  # (B, 1, H, W)
    rgb: torch.Tensor  # (B, 3, H, W)
    ids: List[str]


def epoch_order(entries: Sequence[ManifestEntry], shuffle: bool, seed: int, epoch: int) -> List[ManifestEntry]:
    ordered = sorted(entries, key=lambda e: e.id)
    if shuffle:
        perm = np.random.default_rng([seed, epoch]).permutation(len(ordered))
        ordered = [ordered[i] for i in perm]
    return ordered


def iterate_batches(manifest: DatasetManifest, split: str = "train", batch_size: int = 1,
                    shuffle: bool = True, seed: int = 0, epoch: int = 0,
                    target_size: Optional[Tuple[int, int]] = None,
                    cache: Optional[dict] = None) -> Iterator[Batch]:
    """Yield one epoch of batches; the order depends only on (seed, epoch).

    ``cache`` (a dict) memoizes decoded tensors by id across epochs.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    size = tuple(target_size or manifest.target_size)
    order = epoch_order(manifest.split(split), shuffle, seed, epoch)
    for start in range(0, len(order), batch_size):
        chunk = order[start:start + batch_size]
        thermals, rgbs = [], []
        for e in chunk:
            if cache is not None and e.id in cache:
                t, r = cache[e.id]
            else:
                t, r = load_pair(e, size)
                if cache is not None:
                    cache[e.id] = (t, r)
            thermals.append(t)
            rgbs.append(r)
        yield Batch(torch.stack(thermals), torch.stack(rgbs), [e.id for e in chunk])
