"""JSON Lines manifests."""

from __future__ import annotations

import json
from pathlib import Path

from .errors import FormatError, StorageError


def write_jsonl(path, rows) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc


def read_jsonl(path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return rows


def resolve(base, name) -> Path:
    """Resolve a manifest file reference relative to the manifest's directory."""
    p = Path(name)
    return p if p.is_absolute() else Path(base).parent / p
