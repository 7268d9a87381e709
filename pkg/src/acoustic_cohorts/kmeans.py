"""Flat and hierarchical K-means with seeded k-means++ and elbow selection.

Determinism contract: identical (data, k, seed, row order) produces a
bit-identical model for any worker count. Distances are computed with a
broadcast subtract-square-sum whose per-row reduction is shape-independent,
points are processed in fixed-size chunks, and per-chunk partials are
reduced in chunk order, so threading never changes a result bit.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import prod

import numpy as np

from .errors import DataError, NumericError, UsageError
from .randstream import derive_seed, rng_from
from .textio import fmt17, floats_line, parse_floats, read_tagged_lines

_HEADER = "acoustic-cohorts kmeans v1"
_CHUNK = 2048  # fixed; chunk boundaries must not depend on worker count


@dataclass(frozen=True)
class ClusterId:
    """Cluster index in [0, k]; the value k itself denotes UNKNOWN."""

    value: int
    k: int

    def __post_init__(self) -> None:
        if self.k < 1:
            raise UsageError(f"k must be at least 1, got {self.k}")
        if not (0 <= self.value <= self.k):
            raise UsageError(f"cluster value {self.value} outside [0, {self.k}]")

    @property
    def is_unknown(self) -> bool:
        return self.value == self.k

    @classmethod
    def unknown(cls, k: int) -> "ClusterId":
        return cls(k, k)


@dataclass(frozen=True, eq=False)
class KMeansModel:
    """Centroids plus fit diagnostics; immutable after fit."""

    k: int
    centroids: np.ndarray
    inertia: float
    iterations: int
    seed: int
    converged: bool
    labels: np.ndarray | None = None
    inertia_history: tuple[float, ...] = ()
    early_stops: int = 0

    @property
    def r(self) -> int:
        return int(self.centroids.shape[1])


@dataclass(frozen=True)
class WssCurve:
    """Within-cluster sum of squares per candidate k, ordered by k."""

    points: tuple[tuple[int, float], ...]


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


def _check_data(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"X must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise NumericError("X contains non-finite values")
    return X


def _dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # broadcast form, not a matmul: per-row reductions are shape-stable,
    # which keeps single-point assign bit-identical to batched assignment
    return ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def _map_ordered(fn, n_items: int, workers: int) -> list:
    if workers <= 1 or n_items <= 1:
        return [fn(i) for i in range(n_items)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n_items)))


def _chunk_bounds(n: int) -> list[tuple[int, int]]:
    return [(s, min(s + _CHUNK, n)) for s in range(0, n, _CHUNK)]


def _assign_dists(X: np.ndarray, centroids: np.ndarray, workers: int) -> np.ndarray:
    bounds = _chunk_bounds(len(X))
    parts = _map_ordered(lambda i: _dists(X[bounds[i][0] : bounds[i][1]], centroids),
                         len(bounds), workers)
    return np.concatenate(parts, axis=0) if parts else np.empty((0, len(centroids)))


def _cluster_means(
    X: np.ndarray, labels: np.ndarray, k: int, old: np.ndarray, workers: int
) -> np.ndarray:
    bounds = _chunk_bounds(len(X))

    def partial(i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = bounds[i]
        chunk, lab = X[lo:hi], labels[lo:hi]
        sums = np.zeros((k, X.shape[1]))
        counts = np.zeros(k, dtype=np.int64)
        for c in np.unique(lab):
            mask = lab == c
            sums[c] = chunk[mask].sum(axis=0)
            counts[c] = int(mask.sum())
        return sums, counts

    parts = _map_ordered(partial, len(bounds), workers)
    sums = np.zeros((k, X.shape[1]))
    counts = np.zeros(k, dtype=np.int64)
    for s, c in parts:  # fixed chunk-order reduction
        sums += s
        counts += c
    means = old.copy()
    nonzero = counts > 0
    means[nonzero] = sums[nonzero] / counts[nonzero, None]
    return means


def _kmeanspp(X: np.ndarray, k: int, seed: int) -> np.ndarray:
    rng = rng_from(seed)
    n = len(X)
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[int(rng.integers(n))]
    if k == 1:
        return centers
    d2 = _dists(X, centers[0:1])[:, 0]
    for j in range(1, k):
        total = float(d2.sum())
        if total > 0.0:
            target = rng.random() * total
            idx = min(int(np.searchsorted(np.cumsum(d2), target, side="right")), n - 1)
        else:
            idx = int(rng.integers(n))
        centers[j] = X[idx]
        d2 = np.minimum(d2, _dists(X, centers[j : j + 1])[:, 0])
    return centers


def _repair_empty(labels: np.ndarray, point_d2: np.ndarray, k: int) -> None:
    """Give each empty cluster the point currently farthest from its centroid."""
    counts = np.bincount(labels, minlength=k)
    for j in np.flatnonzero(counts == 0):
        eligible = counts[labels] >= 2
        if not eligible.any():
            continue
        d2 = np.where(eligible, point_d2, -np.inf)
        victim = int(np.argmax(d2))
        counts[labels[victim]] -= 1
        labels[victim] = j
        counts[j] = 1
        point_d2[victim] = 0.0


def fit_kmeans(
    X: np.ndarray,
    k: int,
    seed: int,
    max_iter: int = 300,
    tol: float = 1e-6,
    workers: int = 1,
) -> KMeansModel:
    """Lloyd's algorithm from a seeded k-means++ start.

    Stops when the largest centroid shift falls to tol or max_iter is
    reached. Empty clusters steal the globally farthest point. The stored
    labels come from a final assignment pass against the final centroids,
    so labels[i] always equals assign(model, X[i]).
    """
    X = _check_data(X)
    n = len(X)
    if k < 1:
        raise UsageError(f"k must be at least 1, got {k}")
    if n < k:
        raise NumericError(f"cannot fit {k} clusters to {n} points")
    if max_iter < 1:
        raise UsageError(f"max_iter must be positive, got {max_iter}")
    if tol < 0:
        raise UsageError(f"tol must be nonnegative, got {tol}")

    centroids = _kmeanspp(X, k, seed)
    dist2 = _assign_dists(X, centroids, workers)
    history: list[float] = []
    converged = False
    iterations = 0
    rows = np.arange(n)
    for it in range(1, max_iter + 1):
        labels = dist2.argmin(axis=1)  # ties to the lowest index
        _repair_empty(labels, dist2[rows, labels].copy(), k)
        new_centroids = _cluster_means(X, labels, k, centroids, workers)
        shift2 = float(((new_centroids - centroids) ** 2).sum(axis=1).max())
        centroids = new_centroids
        dist2 = _assign_dists(X, centroids, workers)
        history.append(float(np.add.reduce(dist2[rows, labels])))
        iterations = it
        if shift2 <= tol * tol:
            converged = True
            break

    labels = dist2.argmin(axis=1)
    inertia = float(np.add.reduce(dist2[rows, labels])) if n else 0.0
    return KMeansModel(
        k=k,
        centroids=_freeze(centroids),
        inertia=inertia,
        iterations=iterations,
        seed=int(seed),
        converged=converged,
        labels=_freeze(labels.astype(np.int64)),
        inertia_history=tuple(history),
    )


def assign(model: KMeansModel, x: np.ndarray) -> ClusterId:
    """Nearest centroid by squared distance; ties to the lowest index."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.r,):
        raise DataError(f"x must have length {model.r}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NumericError("x contains non-finite values")
    return ClusterId(int(_dists(x[None, :], model.centroids)[0].argmin()), model.k)


def assign_batch(model: KMeansModel, X: np.ndarray, workers: int = 1) -> np.ndarray:
    X = _check_data(X)
    if X.shape[1] != model.r:
        raise DataError(f"X must be n x {model.r}, got shape {X.shape}")
    return _assign_dists(X, model.centroids, workers).argmin(axis=1).astype(np.int64)


def fit_hierarchical(
    X: np.ndarray,
    branching: list[int],
    seed: int,
    max_iter: int = 300,
    tol: float = 1e-6,
    workers: int = 1,
) -> KMeansModel:
    """Recursive K-means, flattened to one model over the leaf centroids.

    Each level's clusters are re-clustered with the next branching factor;
    child seeds are derived from the parent seed and cluster index. A
    cluster with fewer points than the next factor stops early and keeps
    its centroid, so k may fall short of the product of factors (the
    early_stops field counts these).
    """
    X = _check_data(X)
    branching = [int(b) for b in branching]
    if not branching or any(b < 1 for b in branching):
        raise UsageError(f"branching must be nonempty positive ints, got {branching}")
    if prod(branching) > len(X):
        raise NumericError(
            f"branching {branching} needs {prod(branching)} points, corpus has {len(X)}"
        )
    if len(branching) == 1:
        return fit_kmeans(X, branching[0], seed, max_iter, tol, workers)

    stats = {"iterations": 0, "converged": True, "early_stops": 0}

    def descend(idx: np.ndarray, factors: list[int], level_seed: int) -> list[np.ndarray]:
        sub = fit_kmeans(X[idx], factors[0], level_seed, max_iter, tol, workers)
        stats["iterations"] += sub.iterations
        stats["converged"] = stats["converged"] and sub.converged
        if len(factors) == 1:
            return [sub.centroids[c] for c in range(sub.k)]
        leaves: list[np.ndarray] = []
        for c in range(sub.k):
            members = idx[np.flatnonzero(sub.labels == c)]
            if len(members) < factors[1]:
                stats["early_stops"] += 1
                leaves.append(sub.centroids[c])
            else:
                leaves.extend(descend(members, factors[1:], derive_seed(level_seed, c)))
        return leaves

    centroids = np.vstack(descend(np.arange(len(X)), branching, int(seed)))
    dist2 = _assign_dists(X, centroids, workers)
    labels = dist2.argmin(axis=1)
    inertia = float(np.add.reduce(dist2[np.arange(len(X)), labels]))
    return KMeansModel(
        k=len(centroids),
        centroids=_freeze(centroids),
        inertia=inertia,
        iterations=stats["iterations"],
        seed=int(seed),
        converged=stats["converged"],
        labels=_freeze(labels.astype(np.int64)),
        inertia_history=(inertia,),
        early_stops=stats["early_stops"],
    )


def wss_curve(
    X: np.ndarray, k_values: list[int], seed: int, workers: int = 1
) -> WssCurve:
    """Inertia for each candidate k, each fit with a seed derived from (seed, k).

    The curve should be non-increasing in k; if a local optimum breaks that,
    the offending k is refit once with an alternate derived seed and the
    better inertia kept.
    """
    ks = [int(k) for k in k_values]
    if not ks or any(b <= a for a, b in zip(ks, ks[1:])):
        raise UsageError(f"k_values must be strictly increasing, got {k_values}")
    points: list[tuple[int, float]] = []
    prev = float("inf")
    for k in ks:
        wss = fit_kmeans(X, k, derive_seed(seed, k), workers=workers).inertia
        if wss > prev:
            retry = fit_kmeans(X, k, derive_seed(seed, k, 1), workers=workers).inertia
            wss = min(wss, retry)
        points.append((k, wss))
        prev = wss
    return WssCurve(tuple(points))


def elbow(curve: WssCurve) -> int:
    """k at the greatest curvature of the normalized curve; ties to smaller k.

    Both axes are min-max normalized and curvature is measured by divided
    second differences, so unevenly spaced k grids are handled and an
    exactly affine curve yields all zeros (the tie-break then picks the
    smallest interior k).
    """
    if len(curve.points) < 3:
        raise UsageError(f"elbow needs at least 3 curve points, got {len(curve.points)}")
    ks = np.array([p[0] for p in curve.points], dtype=np.float64)
    ws = np.array([p[1] for p in curve.points], dtype=np.float64)
    kn = (ks - ks[0]) / (ks[-1] - ks[0])
    span = ws.max() - ws.min()
    wn = (ws - ws.min()) / span if span > 0 else np.zeros_like(ws)
    left = (wn[1:-1] - wn[:-2]) / (kn[1:-1] - kn[:-2])
    right = (wn[2:] - wn[1:-1]) / (kn[2:] - kn[1:-1])
    second = (right - left) / (kn[2:] - kn[:-2])
    return int(ks[1 + int(np.argmax(second))])


def save_kmeans(model: KMeansModel, path: str) -> None:
    lines = [
        _HEADER,
        f"k {model.k}",
        f"r {model.r}",
        f"seed {model.seed}",
        f"iterations {model.iterations}",
        f"converged {int(model.converged)}",
        f"early_stops {model.early_stops}",
        f"inertia {fmt17(model.inertia)}",
    ]
    for row in model.centroids:
        lines.append(f"centroid {floats_line(row)}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_kmeans(path: str) -> KMeansModel:
    tagged = read_tagged_lines(path, _HEADER)
    fields = {tag: payload for tag, payload in tagged if tag != "centroid"}
    rows = [payload for tag, payload in tagged if tag == "centroid"]
    try:
        k = int(fields["k"])
        r = int(fields["r"])
        model = KMeansModel(
            k=k,
            centroids=_freeze(np.vstack([parse_floats(w, r, "centroid entries") for w in rows])),
            inertia=float(fields["inertia"]),
            iterations=int(fields["iterations"]),
            seed=int(fields["seed"]),
            converged=bool(int(fields["converged"])),
            early_stops=int(fields.get("early_stops", "0")),
        )
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: missing or malformed field: {exc}") from exc
    if len(rows) != k:
        raise DataError(f"{path}: expected {k} centroid rows, got {len(rows)}")
    return model


def save_assignments(ids: tuple[str, ...], labels: np.ndarray, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("utt_id,cluster_id\n")
        for utt_id, lab in zip(ids, labels):
            fh.write(f"{utt_id},{int(lab)}\n")


def load_assignments(path: str) -> tuple[tuple[str, ...], np.ndarray]:
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read assignments file {path}: {exc}") from exc
    with fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "utt_id,cluster_id":
        raise DataError(f"{path}: expected header 'utt_id,cluster_id'")
    ids: list[str] = []
    labels: list[int] = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        utt_id, sep, value = line.rpartition(",")
        if not sep or not utt_id:
            raise DataError(f"{path}: line {line_no}: expected 'utt_id,cluster_id'")
        try:
            labels.append(int(value))
        except ValueError as exc:
            raise DataError(f"{path}: line {line_no}: bad cluster_id {value!r}") from exc
        ids.append(utt_id)
    return tuple(ids), np.asarray(labels, dtype=np.int64)
