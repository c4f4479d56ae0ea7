"""CSV and JSON readers/writers for sensor data, labels, and fit results."""

from __future__ import annotations

import csv
import json
import os
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError
from .model import ObservationSet


def load_csv(path: str) -> ObservationSet:
    """Read one sensor CSV: header `t,<c1>,...,<cd>`, strictly increasing t.

    Returns a single-sequence observation set with unit channel scales;
    rescaling is applied separately by the caller.
    """
    rows: list[list[float]] = []
    times: list[float] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ConfigError(f"{path}: empty file")
        header = [cell.strip() for cell in header]
        if len(header) < 2 or header[0] != "t":
            raise ConfigError(f"{path}: header must be 't,<channel names>', got {header}")
        width = len(header)
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != width:
                raise ConfigError(f"{path}:{lineno}: expected {width} fields, got {len(row)}")
            try:
                values = [float(cell) for cell in row]
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: non-numeric cell") from None
            times.append(values[0])
            rows.append(values[1:])
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    t_arr = np.asarray(times)
    if np.any(np.diff(t_arr) <= 0):
        bad = int(np.argmax(np.diff(t_arr) <= 0)) + 3  # first offending data line
        raise ConfigError(f"{path}:{bad}: timestamps must be strictly increasing")
    return ObservationSet(sequences=np.asarray(rows)[None, :, :])


def write_csv(path: str, sequence: np.ndarray, times: Optional[np.ndarray] = None) -> None:
    """Write one (T, d) sequence with full-precision floats (round-trip exact)."""
    sequence = np.asarray(sequence, dtype=float)
    t_steps, dim = sequence.shape
    if times is None:
        times = np.arange(t_steps)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t"] + [f"c{d + 1}" for d in range(dim)])
        for t in range(t_steps):
            writer.writerow([repr(float(times[t]))] + [repr(float(v)) for v in sequence[t]])


def load_labels(path: str, column: str = "label") -> np.ndarray:
    """Read integer labels from a `t,<column>` CSV."""
    labels: list[int] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ConfigError(f"{path}: empty file")
        header = [cell.strip() for cell in header]
        if len(header) != 2 or header[0] != "t" or header[1] != column:
            raise ConfigError(f"{path}: header must be 't,{column}', got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 2:
                raise ConfigError(f"{path}:{lineno}: expected 2 fields")
            try:
                labels.append(int(row[1]))
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: non-integer label") from None
    if not labels:
        raise ConfigError(f"{path}: no data rows")
    return np.asarray(labels, dtype=int)


def load_label_column(path: str) -> np.ndarray:
    """Labels from either a ground-truth file (`t,label`) or a prediction file (`t,map_mode`)."""
    for column in ("label", "map_mode"):
        try:
            return load_labels(path, column=column)
        except ConfigError as exc:
            err = exc
    raise err


def write_labels(path: str, labels: Sequence[int], column: str = "label") -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", column])
        for t, lab in enumerate(labels):
            writer.writerow([t, int(lab)])


def write_modes_csv(path: str, modes: Sequence[int]) -> None:
    write_labels(path, modes, column="map_mode")


def write_elbo_trace(path: str, trace: Sequence[float]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "elbo"])
        for i, value in enumerate(trace):
            writer.writerow([i, repr(float(value))])


def write_result_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def merge_observation_sets(parts: list[ObservationSet]) -> ObservationSet:
    """Stack single-sequence sets into one synchronized multi-sequence set."""
    lengths = {p.n_steps for p in parts}
    if len(lengths) != 1:
        raise ConfigError(f"sequences disagree on length: {sorted(lengths)}")
    dims = {p.dim_z for p in parts}
    if len(dims) != 1:
        raise ConfigError(f"sequences disagree on channel count: {sorted(dims)}")
    stacked = np.concatenate([p.sequences for p in parts], axis=0)
    return ObservationSet(sequences=stacked)


def ensure_dir(path: str) -> None:
    os.makedirs(path, exist_ok=True)
