"""Versioned JSON containers for datasets, trajectories and checkpoints.

Floats are written with ``repr`` precision by the json module, so arrays
round-trip bit-exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


def dump(path, kind: str, header: dict, arrays: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "format": f"priorreg-{kind}",
        "version": FORMAT_VERSION,
        "header": header,
        "arrays": {k: np.asarray(v).tolist() for k, v in arrays.items()},
    }
    path.write_text(json.dumps(doc, sort_keys=True) + "\n")
    return path


def load(path, kind: str):
    doc = json.loads(Path(path).read_text())
    expected = f"priorreg-{kind}"
    if doc.get("format") != expected:
        raise ValueError(f"{path}: expected format {expected!r}, found {doc.get('format')!r}")
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported version {doc.get('version')!r}")
    arrays = {k: np.asarray(v, dtype=np.float64) for k, v in doc["arrays"].items()}
    return doc["header"], arrays
