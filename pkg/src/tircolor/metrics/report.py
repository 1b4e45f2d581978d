"""Per-image metric records, aggregation and report files."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from pathlib import Path
from typing import Dict, Iterable, List, Tuple

import numpy as np

from ..dataset import IMAGE_SUFFIXES, decode_rgb, decode_thermal
from ..errors import ChannelMismatch, DatasetError, DegenerateInput, EmptyDataset, MissingCounterpart, TircolorError
from .nqm import nqm
from .quality import mssim, psnr, ssim

log = logging.getLogger(__name__)

COLUMNS = ("psnr", "nqm", "ssim", "mssim")


@dataclasses.dataclass
class ImageMetrics:
    id: str
    psnr: float
    nqm: float
    ssim: float
    mssim: float


@dataclasses.dataclass
class MetricReport:
    per_image: List[ImageMetrics]
    errors: List[Dict[str, str]] = dataclasses.field(default_factory=list)

    def __post_init__(self):
        self.per_image = sorted(self.per_image, key=lambda m: m.id)
        self.errors = sorted(self.errors, key=lambda e: (e.get("id", ""), e.get("error", "")))

    def aggregate(self) -> Dict[str, object]:
        """Column means; infinite values are excluded and counted."""
        out: Dict[str, object] = {"count": len(self.per_image)}
        excluded = {}
        for col in COLUMNS:
            vals = [getattr(m, col) for m in self.per_image]
            finite = [v for v in vals if math.isfinite(v)]
            out[col] = float(np.mean(finite)) if finite else math.inf if vals else math.nan
            if len(finite) != len(vals):
                excluded[col] = len(vals) - len(finite)
        out["excluded_nonfinite"] = excluded
        return out

    def to_dict(self) -> Dict[str, object]:
        return {
            "images": [{k: _num(v) for k, v in dataclasses.asdict(m).items()} for m in self.per_image],
            "aggregate": {k: _num(v) if not isinstance(v, dict) else v for k, v in self.aggregate().items()},
            "errors": self.errors,
        }


def _num(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "inf" if v > 0 else "-inf" if v < 0 else "nan"
    return v


def _fmt(v: float, digits: int) -> str:
    return "inf" if v == math.inf else f"{v:.{digits}f}"


def format_table(rows: Iterable[Tuple[str, Dict[str, object]]]) -> str:
    """Aligned text table, one row per method, columns PSNR NQM SSIM MSSIM."""
    rows = list(rows)
    width = max([len("Method")] + [len(name) for name, _ in rows])
    lines = [f"{'Method':<{width}}  {'PSNR':>8}  {'NQM':>8}  {'SSIM':>6}  {'MSSIM':>6}"]
    for name, agg in rows:
        lines.append(f"{name:<{width}}  {_fmt(agg['psnr'], 2):>8}  {_fmt(agg['nqm'], 2):>8}  "
                     f"{_fmt(agg['ssim'], 4):>6}  {_fmt(agg['mssim'], 4):>6}")
    return "\n".join(lines) + "\n"


def measure(image_id: str, pred: np.ndarray, ref: np.ndarray) -> ImageMetrics:
    try:
        q = nqm(pred, ref)
    except DegenerateInput:
        q = math.nan
    return ImageMetrics(image_id, psnr(pred, ref), q, ssim(pred, ref), mssim(pred, ref))


def evaluate_pairs(pairs: Iterable[Tuple[str, np.ndarray, np.ndarray]]) -> MetricReport:
    """Metrics for (id, pred, ref) triples of 8-bit rasters."""
    return MetricReport([measure(i, p, r) for i, p, r in pairs])


def _decode(path: Path) -> np.ndarray:
    try:
        return decode_rgb(path)
    except ChannelMismatch:
        return decode_thermal(path)


def _index(d: Path) -> Dict[str, Path]:
    return {p.name: p for p in sorted(d.iterdir()) if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES}


def evaluate_directory(pred_dir, ref_dir) -> MetricReport:
    """Score every prediction against the same-named reference image."""
    pred_dir, ref_dir = Path(pred_dir), Path(ref_dir)
    for d in (pred_dir, ref_dir):
        if not d.is_dir():
            raise DatasetError(f"not a directory: {d}")
    preds, refs = _index(pred_dir), _index(ref_dir)
    if not preds:
        raise EmptyDataset(f"no images in {pred_dir}")
    results, errors = [], []
    for name in sorted(set(preds) | set(refs)):
        if name not in refs or name not in preds:
            missing = ref_dir if name not in refs else pred_dir
            err = MissingCounterpart(f"{name} has no counterpart in {missing}")
            log.warning(str(err))
            errors.append({"id": name, "error": type(err).__name__, "message": str(err)})
            continue
        try:
            results.append(measure(name, _decode(preds[name]), _decode(refs[name])))
        except (TircolorError, ValueError) as exc:
            log.warning("%s: %s", name, exc)
            errors.append({"id": name, "error": type(exc).__name__, "message": str(exc)})
    return MetricReport(results, errors)


def write_report(report: MetricReport, path, method: str = "model") -> Tuple[Path, Path]:
    """Write ``path`` (JSON) and a sibling ``.txt`` table; returns both paths.

    The files carry no timestamps, so identical inputs give identical bytes.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    table = path.with_suffix(".txt")
    table.write_text(format_table([(method, report.aggregate())]))
    return path, table


def read_report(path) -> Dict[str, object]:
    return json.loads(Path(path).read_text())
