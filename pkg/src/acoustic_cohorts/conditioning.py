"""Cluster-conditioning features with the unknown-masking policy.

A conditioning feature is a one-hot vector of length k+1 whose last class
is UNKNOWN. Training features are masked to UNKNOWN with a fixed
probability; inference features are always UNKNOWN and consume neither
embeddings nor metadata.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, UsageError
from .kmeans import ClusterId
from .randstream import uniform_at


@dataclass(frozen=True)
class MaskingPolicy:
    """Replace a training assignment by UNKNOWN with probability p_unknown."""

    p_unknown: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if not (0.0 <= self.p_unknown <= 1.0):
            raise UsageError(f"p_unknown must be in [0, 1], got {self.p_unknown}")


@dataclass(frozen=True, eq=False)
class ConditioningFeature:
    """One-hot vector of length k+1; index k is the UNKNOWN class."""

    onehot: np.ndarray

    @property
    def k(self) -> int:
        return int(self.onehot.shape[0]) - 1

    @property
    def value(self) -> int:
        return int(np.argmax(self.onehot))


def apply_masking(assignments: list[ClusterId], policy: MaskingPolicy) -> list[ClusterId]:
    """Independently mask each assignment to UNKNOWN with probability p_unknown.

    The decision for index i is a pure function of (policy.seed, i,
    p_unknown): it reads value i of a counter-based uniform stream, so
    chunked or parallel emission and insertions elsewhere in the list
    cannot change it. Masking is applied once; unknown inputs are rejected.
    """
    for i, a in enumerate(assignments):
        if a.is_unknown:
            raise DataError(f"assignment {i} is already UNKNOWN; masking is applied once")
    u = uniform_at(policy.seed, 0, len(assignments))
    masked = u < policy.p_unknown
    return [ClusterId.unknown(a.k) if m else a for a, m in zip(assignments, masked)]


def one_hot(cluster: ClusterId, k: int) -> ConditioningFeature:
    """Length k+1 indicator with a 1 at the cluster value (k means UNKNOWN)."""
    if k < 1:
        raise UsageError(f"k must be at least 1, got {k}")
    if cluster.value > k:
        raise UsageError(f"cluster value {cluster.value} exceeds unknown index {k}")
    vec = np.zeros(k + 1, dtype=np.float64)
    vec[cluster.value] = 1.0
    vec.flags.writeable = False
    return ConditioningFeature(vec)


def inference_feature(k: int) -> ConditioningFeature:
    """The constant UNKNOWN one-hot used for every utterance at inference."""
    return one_hot(ClusterId.unknown(k), k)


def save_features(ids: tuple[str, ...], features: list[ConditioningFeature], k: int, path: str) -> None:
    """Write `utt_id,k=<k>` header then one 0/1 row of length k+1 per record."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"utt_id,k={k}\n")
        for utt_id, feat in zip(ids, features):
            if feat.onehot.shape != (k + 1,):
                raise DataError(f"feature for {utt_id!r} has length {feat.onehot.shape[0]}, expected {k + 1}")
            fh.write(utt_id + "," + ",".join(str(int(v)) for v in feat.onehot) + "\n")


def load_features(path: str) -> tuple[tuple[str, ...], int, np.ndarray]:
    """Read a feature file back as (ids, k, n x (k+1) matrix)."""
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read feature file {path}: {exc}") from exc
    with fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("utt_id,k="):
        raise DataError(f"{path}: expected header 'utt_id,k=<k>'")
    try:
        k = int(lines[0].removeprefix("utt_id,k="))
    except ValueError as exc:
        raise DataError(f"{path}: malformed k in header") from exc
    ids: list[str] = []
    rows: list[list[int]] = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != k + 2:
            raise DataError(f"{path}: line {line_no}: expected {k + 2} cells, got {len(cells)}")
        ids.append(cells[0])
        try:
            rows.append([int(c) for c in cells[1:]])
        except ValueError as exc:
            raise DataError(f"{path}: line {line_no}: non-integer cell") from exc
    return tuple(ids), k, np.asarray(rows, dtype=np.float64).reshape(len(rows), k + 1)
