"""Embedding corpus ingestion, validation, synthesis, and segmentation planning.

A corpus is an ordered list of utterance records, each carrying a fixed-length
embedding vector and optional evaluation-only metadata labels. Downstream
fitting code never touches records directly: it receives the bare embedding
matrix via `Corpus.matrix()`, which is the mechanical boundary keeping
metadata out of clustering and conditioning.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DataError, NumericError, UsageError
from .randstream import rng_from


@dataclass(frozen=True, eq=False)
class UtteranceRecord:
    """One embedded utterance: id, vector, optional duration and labels."""

    utt_id: str
    embedding: np.ndarray
    duration_s: float | None = None
    meta: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class Corpus:
    """Ordered, immutable collection of records sharing one embedding dim."""

    dim: int
    records: tuple[UtteranceRecord, ...]

    def __len__(self) -> int:
        return len(self.records)

    @cached_property
    def _matrix(self) -> np.ndarray:
        m = np.array([r.embedding for r in self.records], dtype=np.float64)
        m = m.reshape(len(self.records), self.dim)
        m.flags.writeable = False
        return m

    def matrix(self) -> np.ndarray:
        """n x dim embedding matrix; the only view fitting code receives."""
        return self._matrix

    def ids(self) -> tuple[str, ...]:
        return tuple(r.utt_id for r in self.records)


@dataclass(frozen=True)
class SegmentWindow:
    """Half-open time window [start_s, end_s) in seconds."""

    start_s: float
    end_s: float


def segment_plan(duration_s: float, chunk_s: float = 10.0) -> list[SegmentWindow]:
    """Plan contiguous windows covering [0, duration_s) in chunk_s pieces.

    Full-length chunks, then: a trailing remainder of at least one second
    becomes its own window; a shorter remainder is merged into the previous
    window; an utterance shorter than one chunk is a single window. Nothing
    is ever dropped.
    """
    if not (duration_s > 0):
        raise UsageError(f"duration_s must be positive, got {duration_s}")
    if not (chunk_s > 0):
        raise UsageError(f"chunk_s must be positive, got {chunk_s}")
    n_full = int(math.floor(duration_s / chunk_s))
    remainder = duration_s - n_full * chunk_s
    windows = [SegmentWindow(i * chunk_s, (i + 1) * chunk_s) for i in range(n_full)]
    if remainder > 0:
        if remainder >= 1.0 or not windows:
            windows.append(SegmentWindow(n_full * chunk_s, duration_s))
        else:
            last = windows[-1]
            windows[-1] = SegmentWindow(last.start_s, duration_s)
    return windows


def _record_from_obj(obj: object, expected_dim: int, line_no: int) -> UtteranceRecord:
    if not isinstance(obj, dict):
        raise DataError(f"line {line_no}: record must be an object")
    utt_id = obj.get("utt_id")
    if not isinstance(utt_id, str) or not utt_id:
        raise DataError(f"line {line_no}: missing or invalid utt_id")
    emb = obj.get("embedding")
    if not isinstance(emb, list) or not all(isinstance(v, (int, float)) for v in emb):
        raise DataError(f"line {line_no}: utt_id {utt_id!r}: embedding must be a number array")
    if len(emb) != expected_dim:
        raise DataError(
            f"utt_id {utt_id!r}: embedding has {len(emb)} entries, expected {expected_dim}"
        )
    vec = np.asarray(emb, dtype=np.float64)
    if not np.all(np.isfinite(vec)):
        raise DataError(f"utt_id {utt_id!r}: embedding contains non-finite values")
    vec.flags.writeable = False
    duration = obj.get("duration_s")
    if duration is not None:
        if not isinstance(duration, (int, float)) or not math.isfinite(duration) or duration < 0:
            raise DataError(f"utt_id {utt_id!r}: duration_s must be a nonnegative number")
        duration = float(duration)
    meta = obj.get("meta", {})
    if not isinstance(meta, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in meta.items()
    ):
        raise DataError(f"utt_id {utt_id!r}: meta must map strings to strings")
    return UtteranceRecord(utt_id, vec, duration, dict(meta))


def load_corpus(path: str, expected_dim: int) -> Corpus:
    """Read a line-delimited corpus file, validating every record."""
    if expected_dim <= 0:
        raise UsageError(f"expected_dim must be positive, got {expected_dim}")
    records: list[UtteranceRecord] = []
    seen: set[str] = set()
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read corpus file {path}: {exc}") from exc
    with fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except ValueError as exc:
                raise DataError(f"line {line_no}: malformed record: {exc}") from exc
            rec = _record_from_obj(obj, expected_dim, line_no)
            if rec.utt_id in seen:
                raise DataError(f"duplicate utt_id {rec.utt_id!r}")
            seen.add(rec.utt_id)
            records.append(rec)
    return Corpus(expected_dim, tuple(records))


def save_corpus(corpus: Corpus, path: str) -> None:
    """Write the line-delimited form; floats round-trip exactly via repr."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in corpus.records:
            obj: dict[str, object] = {
                "utt_id": rec.utt_id,
                "embedding": [float(v) for v in rec.embedding],
            }
            if rec.duration_s is not None:
                obj["duration_s"] = rec.duration_s
            if rec.meta:
                obj["meta"] = rec.meta
            fh.write(json.dumps(obj, separators=(", ", ": ")) + "\n")


def synth_corpus(
    n_clusters: int,
    per_cluster: int,
    dim: int,
    separation: float,
    noise_sigma: float,
    seed: int,
) -> tuple[Corpus, dict[str, int]]:
    """Generate isotropic Gaussian blobs with a known cluster assignment.

    Centers are rejection-sampled until all pairwise distances reach
    `separation`. The generating label of each record is returned and also
    stored in meta under axis "synthetic_truth" for evaluation only.
    """
    if n_clusters <= 0 or per_cluster <= 0 or dim <= 0:
        raise UsageError("n_clusters, per_cluster, and dim must be positive")
    if separation <= 0 or noise_sigma <= 0:
        raise UsageError("separation and noise_sigma must be positive")
    rng = rng_from(seed)
    centers: list[np.ndarray] = []
    for _ in range(n_clusters):
        for _attempt in range(10_000):
            cand = rng.normal(0.0, separation, dim)
            if all(float(np.linalg.norm(cand - c)) >= separation for c in centers):
                centers.append(cand)
                break
        else:
            raise NumericError(
                f"could not place {n_clusters} centers at pairwise distance {separation}"
            )
    records: list[UtteranceRecord] = []
    truth: dict[str, int] = {}
    for c, center in enumerate(centers):
        points = center + rng.normal(0.0, noise_sigma, (per_cluster, dim))
        for j in range(per_cluster):
            utt_id = f"synth-{c:03d}-{j:04d}"
            vec = points[j].copy()
            vec.flags.writeable = False
            records.append(UtteranceRecord(utt_id, vec, None, {"synthetic_truth": str(c)}))
            truth[utt_id] = c
    return Corpus(dim, tuple(records)), truth
