"""Checkpoint persistence: a flat name -> (shape, values) map as JSON.

Keys are sorted and floats are written in full round-trip precision, so
two checkpoints of the same state diff cleanly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def save_state(path, state: dict[str, np.ndarray]) -> None:
    payload = {
        name: {"shape": list(arr.shape), "values": [float(v) for v in np.ravel(arr)]}
        for name, arr in state.items()
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


def load_state(path) -> dict[str, np.ndarray]:
    payload = json.loads(Path(path).read_text())
    return {
        name: np.array(entry["values"], dtype=np.float64).reshape(entry["shape"])
        for name, entry in payload.items()
    }
