"""``tircolor`` command line: train, colorize, evaluate, ablate.

Exit codes:

    0  success
    1  unexpected internal error
    2  usage error (bad or unknown flags)
    3  data error (missing path, empty dataset, pairing, decoding)
    4  configuration error (bad key or value, fingerprint mismatch)
    5  checkpoint unreadable or incompatible
    6  training aborted on a non-finite loss
    7  finished, but some inputs failed (see the error records)
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch
from PIL import Image

from . import __version__
from .config import KEYS, load_config
from .dataset import (
    IMAGE_SUFFIXES,
    DatasetManifest,
    PairingRule,
    build_manifest,
    decode_thermal,
    denormalize,
    load_pair,
)
from .errors import (
    CheckpointCorrupt,
    ConfigError,
    DatasetError,
    FingerprintMismatch,
    NonFiniteLoss,
    TircolorError,
)
from .metrics import evaluate_directory, format_table, write_report
from .trainer import (
    DEVICE_ENV,
    ablation_table,
    colorize_array,
    generator_input,
    load_generator,
    resolve_device,
    resolve_matrix,
    resume,
    run_ablation,
    train,
    validation_entries,
)

log = logging.getLogger("tircolor")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_CONFIG = 4
EXIT_CHECKPOINT = 5
EXIT_NONFINITE = 6
EXIT_PARTIAL = 7


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, CheckpointCorrupt):
        return EXIT_CHECKPOINT
    if isinstance(exc, (ConfigError, FingerprintMismatch)):
        return EXIT_CONFIG
    if isinstance(exc, NonFiniteLoss):
        return EXIT_NONFINITE
    if isinstance(exc, (DatasetError, FileNotFoundError)):
        return EXIT_DATA
    if isinstance(exc, TircolorError):
        return EXIT_CONFIG
    return EXIT_INTERNAL


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat key = value config file")
    group = p.add_argument_group("config overrides (take precedence over --config)")
    for key, k in KEYS.items():
        group.add_argument("--" + key.replace("_", "-"), dest="cfg_" + key, metavar="VALUE", help=k.help)


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data-root", type=Path, required=True, help="dataset root directory")
    p.add_argument("--thermal-glob", default=PairingRule.thermal_glob, help="glob for thermal images")
    p.add_argument("--rgb-glob", default=PairingRule.rgb_glob, help="glob for colour images")
    p.add_argument("--time-of-day", choices=("day", "night"), help="keep only day or night pairs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tircolor",
        description=f"Thermal infrared colorization. Default device comes from ${DEVICE_ENV}.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a colorization model")
    _add_data_flags(p)
    _add_config_flags(p)
    p.add_argument("--resume", type=Path, help="checkpoint to continue from")

    p = sub.add_parser("colorize", help="colorize thermal images with a trained generator")
    p.add_argument("--checkpoint", type=Path, required=True, help="checkpoint file")
    p.add_argument("input", type=Path, help="thermal image or directory of images")
    p.add_argument("--output-dir", type=Path, required=True, help="where colour PNGs are written")

    p = sub.add_parser("evaluate", help="score predictions against references")
    p.add_argument("pred_dir", type=Path, help="directory of predicted images")
    p.add_argument("ref_dir", type=Path, help="directory of reference images")
    p.add_argument("--report", type=Path, required=True, help="JSON report path (a .txt table is written beside it)")
    p.add_argument("--method", default="model", help="row label in the text table")

    p = sub.add_parser("ablate", help="train and compare ablation variants")
    _add_data_flags(p)
    _add_config_flags(p)
    p.add_argument("--matrix", type=Path,
                   help="JSON list of canonical variant names, or object of name -> overrides "
                        "(default: all canonical variants)")
    p.add_argument("--eval-pairs", type=int, help="held-out pairs scored per variant (default: val_pairs)")
    p.add_argument("--grid-pairs", type=int, default=4, help="pairs shown in each variant's sample grid")
    return parser


def _overrides(args) -> Dict[str, str]:
    return {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}


def _manifest(args, config) -> DatasetManifest:
    if not args.data_root.is_dir():
        raise DatasetError(f"data root does not exist: {args.data_root}")
    rule = PairingRule(args.thermal_glob, args.rgb_glob)
    return build_manifest(args.data_root, rule, args.time_of_day, config.target_size)


def cmd_train(args) -> int:
    config = load_config(args.config, _overrides(args))
    manifest = _manifest(args, config)
    if args.resume:
        result = resume(args.resume, manifest, _overrides(args))
    else:
        result = train(config, manifest)
    print(f"trained {result.iteration} iterations; checkpoint {result.checkpoint}")
    return EXIT_OK


def _inputs(path: Path) -> List[Path]:
    if path.is_dir():
        return [p for p in sorted(path.iterdir()) if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES]
    if path.is_file():
        return [path]
    raise DatasetError(f"input does not exist: {path}")


def cmd_colorize(args) -> int:
    generator, _ = load_generator(args.checkpoint, resolve_device())
    files = _inputs(args.input)
    args.output_dir.mkdir(parents=True, exist_ok=True)
    errors = []
    for f in files:
        try:
            rgb = colorize_array(generator, decode_thermal(f))
        except DatasetError as exc:
            log.error("%s: %s", f, exc)
            errors.append({"file": str(f), "error": type(exc).__name__, "message": str(exc)})
            continue
        Image.fromarray(rgb).save(args.output_dir / (f.stem + ".png"))
    if errors:
        (args.output_dir / "errors.json").write_text(json.dumps(errors, indent=2) + "\n")
    print(f"colorized {len(files) - len(errors)} of {len(files)} images into {args.output_dir}")
    return EXIT_PARTIAL if errors else EXIT_OK


def cmd_evaluate(args) -> int:
    report = evaluate_directory(args.pred_dir, args.ref_dir)
    write_report(report, args.report, args.method)
    sys.stdout.write(format_table([(args.method, report.aggregate())]))
    for err in report.errors:
        log.error("%s: %s", err["id"], err["message"])
    return EXIT_PARTIAL if report.errors else EXIT_OK


def _load_matrix(path: Optional[Path]):
    if path is None:
        return resolve_matrix(None)
    try:
        data = json.loads(path.read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read ablation matrix {path}: {exc}") from exc
    if not isinstance(data, (list, dict)):
        raise ConfigError("ablation matrix must be a JSON list or object")
    return resolve_matrix(data)


def _sample_grid(generator, entries, target_size) -> np.ndarray:
    rows = []
    with torch.no_grad():
        for e in entries:
            thermal, rgb = load_pair(e, target_size)
            x = generator_input(thermal.unsqueeze(0), generator.spec.in_channels)
            fake = denormalize(generator(x)[0])
            t = np.repeat(denormalize(thermal)[..., None], 3, axis=2)
            rows.append(np.concatenate([t, fake, denormalize(rgb)], axis=1))
    return np.concatenate(rows, axis=0)


def cmd_ablate(args) -> int:
    matrix = _load_matrix(args.matrix)
    base = load_config(args.config, _overrides(args))
    for name, ov in matrix.items():  # fail fast on bad overrides
        base.with_overrides(ov).validate()
    manifest = _manifest(args, base)
    rows = run_ablation(base, matrix, manifest, args.eval_pairs)
    out = Path(base.output_dir)
    table = ablation_table(rows)
    (out / "ablation.txt").write_text(table)
    summary = {r.name: {"config": r.config.to_flat(), "report": r.report.to_dict(),
                        "checkpoint": str(r.checkpoint)} for r in rows}
    (out / "ablation.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    grid_entries = validation_entries(manifest, args.grid_pairs)
    for r in rows:
        generator, _ = load_generator(r.checkpoint)
        Image.fromarray(_sample_grid(generator, grid_entries, r.config.target_size)).save(
            out / r.name / "samples.png")
    sys.stdout.write(table)
    return EXIT_OK


COMMANDS = {"train": cmd_train, "colorize": cmd_colorize, "evaluate": cmd_evaluate, "ablate": cmd_ablate}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except Exception as exc:  # noqa: BLE001 - mapped to documented exit codes
        code = exit_code_for(exc)
        print(f"tircolor {args.command}: error: {exc}", file=sys.stderr)
        if code == EXIT_INTERNAL:
            log.exception("unexpected error")
        return code


if __name__ == "__main__":
    sys.exit(main())
