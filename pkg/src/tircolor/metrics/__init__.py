from .nqm import nqm
from .quality import mssim, psnr, ssim, to_luma
from .report import (
    ImageMetrics,
    MetricReport,
    evaluate_directory,
    evaluate_pairs,
    format_table,
    measure,
    read_report,
    write_report,
)

__all__ = [
    "ImageMetrics",
    "MetricReport",
    "evaluate_directory",
    "evaluate_pairs",
    "format_table",
    "measure",
    "mssim",
    "nqm",
    "psnr",
    "read_report",
    "ssim",
    "to_luma",
    "write_report",
]
