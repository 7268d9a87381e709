"""Helpers for the flat text model files.

Floats are written with 17 significant digits, which round-trips every
IEEE-754 double exactly, so serialized models compare byte-identical
across reruns and reload to the same bits.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError


def fmt17(value: float) -> str:
    return format(float(value), ".17g")


def floats_line(values: np.ndarray) -> str:
    return " ".join(fmt17(v) for v in np.asarray(values, dtype=np.float64).ravel())


def parse_floats(text: str, expect: int | None = None, what: str = "values") -> np.ndarray:
    try:
        arr = np.array([float(tok) for tok in text.split()], dtype=np.float64)
    except ValueError as exc:
        raise DataError(f"malformed {what}: {exc}") from exc
    if expect is not None and arr.size != expect:
        raise DataError(f"expected {expect} {what}, got {arr.size}")
    return arr


def read_tagged_lines(path: str, expected_header: str) -> list[tuple[str, str]]:
    """Read 'tag payload' lines after checking the header line."""
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc
    with fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != expected_header:
        raise DataError(f"{path}: expected header {expected_header!r}")
    tagged = []
    for line in lines[1:]:
        if not line.strip():
            continue
        tag, _, payload = line.partition(" ")
        tagged.append((tag, payload))
    return tagged
