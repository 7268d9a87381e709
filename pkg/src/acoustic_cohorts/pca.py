"""Principal component analysis for embedding dimensionality reduction.

The embedding dimension is small (192 by default), so the model is fit by
exact eigendecomposition of the sample covariance rather than an iterative
solver: deterministic, and exact up to floating point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericError, UsageError
from .textio import fmt17, floats_line, parse_floats, read_tagged_lines

_HEADER = "acoustic-cohorts pca v1"


@dataclass(frozen=True)
class FixedRank:
    """Keep exactly r components."""

    r: int


@dataclass(frozen=True)
class VarianceFraction:
    """Keep the smallest rank reaching this fraction of total variance."""

    f: float


RankPolicy = FixedRank | VarianceFraction


@dataclass(frozen=True, eq=False)
class PcaModel:
    """Mean, orthonormal component rows, and the retained variance spectrum."""

    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    explained_variance_ratio: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.components.shape[1])

    @property
    def rank(self) -> int:
        return int(self.components.shape[0])


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.flags.writeable = False
    return arr


def fit_pca(X: np.ndarray, rank_policy: RankPolicy) -> PcaModel:
    """Fit mean and principal directions of the rows of X.

    Components are the eigenvectors of the sample covariance (divisor n-1),
    sorted by descending variance. Each component row is sign-flipped so its
    largest-magnitude entry is positive, making serialized models comparable
    across runs.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"X must be 2-D, got shape {X.shape}")
    n, d = X.shape
    if n < 2:
        raise NumericError(f"need at least 2 rows to fit, got {n}")
    if not np.all(np.isfinite(X)):
        raise NumericError("X contains non-finite values")
    max_rank = min(n - 1, d)

    mean = X.mean(axis=0)
    centered = X - mean
    cov = (centered.T @ centered) / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    eigvecs = eigvecs[:, order]

    total = float(eigvals.sum())
    if total <= 0.0:
        raise NumericError("zero total variance: all rows identical")
    ratios = eigvals / total

    if isinstance(rank_policy, FixedRank):
        r = rank_policy.r
        if not (1 <= r <= max_rank):
            raise UsageError(f"fixed rank {r} outside [1, {max_rank}]")
    elif isinstance(rank_policy, VarianceFraction):
        f = rank_policy.f
        if not (0.0 < f <= 1.0):
            raise UsageError(f"variance fraction must be in (0, 1], got {f}")
        # 1e-12 slack so f = 1.0 selects the numeric rank, not all of D
        cumulative = np.cumsum(ratios)
        r = int(np.searchsorted(cumulative, f - 1e-12) + 1)
        r = max(1, min(r, max_rank))
    else:
        raise UsageError(f"unknown rank policy: {rank_policy!r}")

    components = eigvecs[:, :r].T.copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return PcaModel(
        mean=_freeze(mean),
        components=_freeze(components),
        explained_variance=_freeze(eigvals[:r]),
        explained_variance_ratio=_freeze(ratios[:r]),
    )


def _check_vector(x: np.ndarray, length: int, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (length,):
        raise DataError(f"{name} must have length {length}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NumericError(f"{name} contains non-finite values")
    return x


def transform(model: PcaModel, x: np.ndarray) -> np.ndarray:
    """Project one vector: components . (x - mean)."""
    x = _check_vector(x, model.dim, "x")
    return model.components @ (x - model.mean)


def transform_batch(model: PcaModel, X: np.ndarray) -> np.ndarray:
    """Project rows of an n x dim matrix into the reduced space."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.dim:
        raise DataError(f"X must be n x {model.dim}, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise NumericError("X contains non-finite values")
    return (X - model.mean) @ model.components.T


def inverse_transform(model: PcaModel, y: np.ndarray) -> np.ndarray:
    """Reconstruct: mean + components^T . y."""
    y = _check_vector(y, model.rank, "y")
    return model.mean + model.components.T @ y


def save_pca(model: PcaModel, path: str) -> None:
    lines = [_HEADER, f"dim {model.dim}", f"rank {model.rank}", f"mean {floats_line(model.mean)}"]
    for row in model.components:
        lines.append(f"component {floats_line(row)}")
    lines.append(f"explained_variance {floats_line(model.explained_variance)}")
    lines.append(f"explained_variance_ratio {floats_line(model.explained_variance_ratio)}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_pca(path: str) -> PcaModel:
    tagged = read_tagged_lines(path, _HEADER)
    fields = {tag: payload for tag, payload in tagged if tag not in ("component",)}
    rows = [payload for tag, payload in tagged if tag == "component"]
    try:
        dim = int(fields["dim"])
        rank = int(fields["rank"])
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: missing or malformed dim/rank") from exc
    if len(rows) != rank:
        raise DataError(f"{path}: expected {rank} component rows, got {len(rows)}")
    components = np.vstack([parse_floats(r, dim, "component entries") for r in rows])
    return PcaModel(
        mean=_freeze(parse_floats(fields.get("mean", ""), dim, "mean entries")),
        components=_freeze(components),
        explained_variance=_freeze(
            parse_floats(fields.get("explained_variance", ""), rank, "variance entries")
        ),
        explained_variance_ratio=_freeze(
            parse_floats(fields.get("explained_variance_ratio", ""), rank, "ratio entries")
        ),
    )
