"""Real-time-factor harness: processing time over audio duration on one thread."""

from __future__ import annotations

import os
import platform
import statistics
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from ..errors import InputError


def real_time_factor(processing_seconds: float, audio_seconds: float) -> float:
    if audio_seconds <= 0:
        raise InputError("audio duration must be positive")
    if processing_seconds < 0:
        raise InputError("processing time must be non-negative")
    return processing_seconds / audio_seconds


def machine_descriptor() -> dict:
    return {
        "machine": platform.machine(),
        "processor": platform.processor() or platform.machine(),
        "python": platform.python_version(),
        "system": platform.system(),
        "cpu_count": os.cpu_count(),
        "threads": 1,
    }


@dataclass
class RtfReport:
    processing_seconds: float
    audio_seconds: float
    rtf: float
    repetitions: int
    timings: list = field(default_factory=list)
    machine: dict = field(default_factory=machine_descriptor)
    error: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


class ProcessorFailure(RuntimeError):
    """Raised when the processor fails; ``report`` holds the timings so far."""

    def __init__(self, message: str, report: RtfReport):
        super().__init__(message)
        self.report = report


def measure_rtf(processor, clip, repetitions: int = 3, sample_rate: int | None = None,
                clock=time.perf_counter) -> RtfReport:
    """Median wall-clock time of ``processor(clip)`` divided by the clip duration.

    BLAS/OpenMP pools and torch are pinned to one thread for the duration
    of the measurement.
    """
    if repetitions < 1:
        raise InputError("repetitions must be >= 1")
    samples = np.asarray(getattr(clip, "samples", clip))
    rate = sample_rate or getattr(clip, "sample_rate", None) or 16000
    audio_seconds = samples.shape[-1] / rate
    if audio_seconds <= 0:
        raise InputError("clip is empty")
    timings: list[float] = []
    torch_threads = None
    try:
        import torch
        torch_threads = torch.get_num_threads()
        torch.set_num_threads(1)
    except ImportError:  # pragma: no cover
        torch = None
    try:
        with threadpool_limits(limits=1):
            for _ in range(repetitions):
                start = clock()
                try:
                    processor(clip)
                except Exception as exc:
                    tp = statistics.median(timings) if timings else float("nan")
                    report = RtfReport(tp, audio_seconds, tp / audio_seconds, len(timings), timings,
                                       error=f"{type(exc).__name__}: {exc}")
                    raise ProcessorFailure(str(exc), report) from exc
                timings.append(clock() - start)
    finally:
        if torch_threads is not None:
            torch.set_num_threads(torch_threads)
    tp = statistics.median(timings)
    return RtfReport(tp, audio_seconds, real_time_factor(tp, audio_seconds), repetitions, timings)
