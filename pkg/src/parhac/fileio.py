"""Points CSV, trace JSON lines and dendrogram text."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .core import (Dendrogram, Instance, LinkageKind, MalformedInput, MalformedTrace,
                   MergeRecord, MergeTrace)


def parse_points(text: str, kind="centroid") -> Instance:
    """One point per line: optional ``w=<weight>`` first field, then k coordinates.

    Blank lines and lines starting with ``#`` are skipped.
    """
    coords, weights = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = [f.strip() for f in line.split(",")]
        w = 1.0
        try:
            if fields[0].startswith("w="):
                w = float(fields[0][2:])
                fields = fields[1:]
            row = [float(f) for f in fields]
        except ValueError:
            raise MalformedInput(f"line {lineno}: not a number in {line!r}") from None
        if not row:
            raise MalformedInput(f"line {lineno}: no coordinates")
        if coords and len(row) != len(coords[0]):
            raise MalformedInput(f"line {lineno}: expected {len(coords[0])} coordinates")
        coords.append(row)
        weights.append(w)
    if not coords:
        raise MalformedInput("no points")
    return Instance(np.array(coords), np.array(weights), LinkageKind.parse(kind))


def read_points(path, kind="centroid") -> Instance:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise MalformedInput(f"cannot read {path}: {exc}") from None
    return parse_points(text, kind)


def format_points(inst: Instance) -> str:
    lines = []
    unit = bool(np.all(inst.weights == 1))
    for c, w in zip(inst.coords, inst.weights):
        row = [repr(float(x)) for x in c]
        if not unit:
            row.insert(0, f"w={float(w)!r}")
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def write_points(path, inst: Instance) -> None:
    Path(path).write_text(format_points(inst))


def format_trace(trace: MergeTrace) -> str:
    return "".join(json.dumps(r.to_dict()) + "\n" for r in trace)


def write_trace(path, trace: MergeTrace) -> None:
    Path(path).write_text(format_trace(trace))


def parse_trace(text: str, n_leaves: int) -> MergeTrace:
    trace = MergeTrace(n_leaves)
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedTrace(f"line {lineno}: {exc}") from None
        if not isinstance(d, dict):
            raise MalformedTrace(f"line {lineno}: expected an object")
        trace.append(MergeRecord.from_dict(d))
    return trace


def read_trace(path, n_leaves: int) -> MergeTrace:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise MalformedTrace(f"cannot read {path}: {exc}") from None
    return parse_trace(text, n_leaves)


def write_dendrogram(path, trace: MergeTrace) -> None:
    Path(path).write_text(Dendrogram.from_trace(trace).to_text() + "\n")
