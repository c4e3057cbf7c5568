"""CSV and JSON output with scenario provenance."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..scenario import ScenarioConfig, scenario_hash


def _plain(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, complex):
        return repr(value)
    return value


def write_csv(path: str | Path, columns: Sequence[str], rows: Iterable[Sequence],
              cfg: ScenarioConfig, seed: int | None = None) -> Path:
    """RFC-4180 CSV preceded by a ``# scenario_sha256=...`` provenance line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        meta = f"# scenario_sha256={scenario_hash(cfg)}"
        if seed is not None:
            meta += f" seed={seed}"
        fh.write(meta + "\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_plain(v) for v in row])
    return path


def read_csv(path: str | Path) -> tuple[str, list[str], list[list[str]]]:
    """Returns (provenance line, header, rows)."""
    with Path(path).open(newline="") as fh:
        meta = fh.readline().strip()
        reader = csv.reader(fh)
        header = next(reader)
        return meta, header, list(reader)


def write_json(path: str | Path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    def default(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        out = _plain(o)
        if out is o:
            raise TypeError(f"not JSON serializable: {type(o)}")
        return out

    path.write_text(json.dumps(payload, indent=2, default=default, sort_keys=True) + "\n")
    return path
