"""Checkpoint and summary files.

A checkpoint is one JSON header line followed by raw little-endian float64
samples of the six nodal components ``z+^1 z+^2 z+^3 z-^1 z-^2 z-^3``, each
flattened with ``x1`` varying fastest.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .grid import Grid3
from .solver import ElsasserState

__all__ = ["write_checkpoint", "read_checkpoint", "read_checkpoint_header", "write_json", "CheckpointError"]

MAGIC = "alfven-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


def write_checkpoint(path, state: ElsasserState) -> None:
    g = state.grid
    header = {
        "format": MAGIC,
        "version": VERSION,
        "dims": list(g.dims),
        "box": list(g.box),
        "origin": list(g.origin),
        "time": state.t,
        "mu": state.mu,
        "b0": state.b0,
        "components": ["zp1", "zp2", "zp3", "zm1", "zm2", "zm3"],
        "order": "x1-fastest",
        "dtype": "<f8",
    }
    data = np.concatenate([state.z_plus, state.z_minus])
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("ascii"))
        for comp in data:
            fh.write(np.ascontiguousarray(comp.ravel(order="F"), dtype="<f8").tobytes())


def read_checkpoint_header(path) -> tuple[dict, int]:
    with open(path, "rb") as fh:
        line = fh.readline()
    try:
        header = json.loads(line.decode("ascii"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint header") from exc
    if header.get("format") != MAGIC:
        raise CheckpointError(f"{path}: not an {MAGIC} file")
    return header, len(line)


def read_checkpoint(path) -> ElsasserState:
    header, offset = read_checkpoint_header(path)
    dims = tuple(header["dims"])
    grid = Grid3(dims, tuple(header["box"]), tuple(header["origin"]))
    n = int(np.prod(dims))
    raw = np.fromfile(path, dtype="<f8", offset=offset)
    if raw.size != 6 * n:
        raise CheckpointError(f"{path}: expected {6 * n} samples, found {raw.size}")
    comps = [raw[i * n:(i + 1) * n].reshape(dims, order="F") for i in range(6)]
    zp = np.stack(comps[:3]).astype(float)
    zm = np.stack(comps[3:]).astype(float)
    return ElsasserState.from_physical(grid, zp, zm, t=float(header["time"]),
                                       mu=float(header["mu"]), b0=float(header["b0"]))


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n")


def _default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
