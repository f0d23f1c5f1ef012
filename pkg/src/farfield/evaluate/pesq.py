"""Optional adapter for an external PESQ executable.

The executable is called as ``<exe> <ref.wav> <deg.wav>`` and must print
the score as the last number on standard output.
"""

from __future__ import annotations

import os
import re
import subprocess
from pathlib import Path

PESQ_ENV = "FARFIELD_PESQ"
_NUMBER = re.compile(r"[-+]?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?")


def pesq_executable(explicit=None) -> str | None:
    return explicit or os.environ.get(PESQ_ENV) or None


def external_pesq(reference_wav, degraded_wav, executable=None, timeout: float = 120.0) -> float | None:
    """Score from the external tool, or ``None`` when no tool is configured."""
    exe = pesq_executable(executable)
    if exe is None:
        return None
    proc = subprocess.run([exe, str(Path(reference_wav)), str(Path(degraded_wav))],
                          capture_output=True, text=True, timeout=timeout, check=True)
    numbers = _NUMBER.findall(proc.stdout)
    if not numbers:
        raise RuntimeError(f"PESQ tool printed no score: {proc.stdout!r}")
    return float(numbers[-1])
