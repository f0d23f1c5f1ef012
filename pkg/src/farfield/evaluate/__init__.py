"""Objective metrics, real-time-factor measurement and MOS aggregation."""

from .metrics import SISNR_CAP_DB, estoi, sisnr, stoi
from .mos import RatingRecord, aggregate_mos, read_ratings, t_half_width
from .pesq import external_pesq
from .report import MetricsReport, clip_metrics, evaluate_dataset
from .rtf import ProcessorFailure, RtfReport, measure_rtf, real_time_factor

__all__ = [
    "SISNR_CAP_DB", "MetricsReport", "ProcessorFailure", "RatingRecord", "RtfReport", "aggregate_mos",
    "clip_metrics", "estoi", "evaluate_dataset", "external_pesq", "measure_rtf", "read_ratings", "real_time_factor",
    "sisnr", "stoi", "t_half_width",
]
