"""Desk-scale conditioned classifier.

A linear softmax classifier over concat(features, cluster one-hot). It
exists to exercise the conditioning mechanism end to end: training applies
unknown masking to the cluster IDs each epoch, and evaluation can feed
either the true cluster one-hots or the constant UNKNOWN feature, exposing
the accuracy gap between knowing and not knowing the cluster.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, UsageError
from .conditioning import ConditioningFeature, MaskingPolicy, apply_masking, inference_feature, one_hot
from .kmeans import ClusterId
from .randstream import derive_seed, rng_from
from .textio import fmt17, floats_line, parse_floats, read_tagged_lines

_HEADER = "acoustic-cohorts demo-classifier v1"

Example = tuple[np.ndarray, ClusterId, int]


@dataclass(frozen=True, eq=False)
class DemoClassifier:
    """Softmax weights over an input of F features plus a k+1 one-hot."""

    W: np.ndarray
    b: np.ndarray
    C: int
    F: int
    k: int


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    epochs: int
    seed: int
    p_unknown: float = 0.1

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise UsageError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 0:
            raise UsageError(f"epochs must be nonnegative, got {self.epochs}")
        if not (0.0 <= self.p_unknown <= 1.0):
            raise UsageError(f"p_unknown must be in [0, 1], got {self.p_unknown}")


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.flags.writeable = False
    return arr


def init_model(C: int, F: int, k: int, seed: int) -> DemoClassifier:
    """Small seeded Gaussian weights, zero bias."""
    if C < 2 or F < 1 or k < 1:
        raise UsageError(f"need C >= 2, F >= 1, k >= 1, got C={C} F={F} k={k}")
    rng = rng_from(seed)
    W = rng.normal(0.0, 0.01, (C, F + k + 1))
    return DemoClassifier(_freeze(W), _freeze(np.zeros(C)), C, F, k)


def _input_vector(model: DemoClassifier, x: np.ndarray, cond: ConditioningFeature) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.F,):
        raise DataError(f"x must have length {model.F}, got shape {x.shape}")
    if cond.onehot.shape != (model.k + 1,):
        raise DataError(
            f"conditioning must have length {model.k + 1}, got {cond.onehot.shape[0]}"
        )
    return np.concatenate([x, cond.onehot])


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    return expd / expd.sum(axis=1, keepdims=True)


def forward(model: DemoClassifier, x: np.ndarray, cond: ConditioningFeature) -> np.ndarray:
    """Class probabilities: softmax(W . concat(x, onehot) + b)."""
    z = _input_vector(model, x, cond)
    return _softmax_rows((model.W @ z + model.b)[None, :])[0]


def loss_and_grad(
    model: DemoClassifier, batch: list[tuple[np.ndarray, ConditioningFeature, int]]
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy and its exact analytic gradients (dW, db)."""
    if not batch:
        raise DataError("batch must be nonempty")
    Z = np.vstack([_input_vector(model, x, cond) for x, cond, _ in batch])
    labels = np.array([label for _, _, label in batch], dtype=np.int64)
    if labels.min() < 0 or labels.max() >= model.C:
        raise DataError(f"labels must lie in [0, {model.C}), got {labels.min()}..{labels.max()}")
    n = len(batch)
    logits = Z @ model.W.T + model.b
    shifted = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1)) + logits.max(axis=1)
    loss = float(np.mean(logsumexp - logits[np.arange(n), labels]))
    probs = _softmax_rows(logits)
    probs[np.arange(n), labels] -= 1.0
    probs /= n
    return loss, probs.T @ Z, probs.sum(axis=0)


def train(config: TrainConfig, data: list[Example], k: int) -> tuple[DemoClassifier, tuple[float, ...]]:
    """Full-batch gradient descent with per-epoch unknown masking.

    Every epoch re-masks the true cluster IDs with a fresh seed derived from
    (config.seed, epoch), so the model sees UNKNOWN on a changing subset and
    learns to work without a cluster ID. Returns the final model and the
    per-epoch loss curve (measured before each step).
    """
    if not data:
        raise DataError("training data must be nonempty")
    xs = [np.asarray(x, dtype=np.float64) for x, _, _ in data]
    ids = [cid for _, cid, _ in data]
    labels = [int(label) for _, _, label in data]
    C = max(labels) + 1
    if C < 2:
        C = 2
    model = init_model(C, xs[0].shape[0], k, config.seed)
    W, b = model.W.copy(), model.b.copy()
    curve: list[float] = []
    for epoch in range(config.epochs):
        policy = MaskingPolicy(config.p_unknown, derive_seed(config.seed, epoch))
        conds = [one_hot(cid, k) for cid in apply_masking(ids, policy)]
        step = DemoClassifier(W, b, C, model.F, k)
        loss, dW, db = loss_and_grad(step, list(zip(xs, conds, labels)))
        W -= config.learning_rate * dW
        b -= config.learning_rate * db
        curve.append(loss)
    return DemoClassifier(_freeze(W), _freeze(b), C, model.F, k), tuple(curve)


def evaluate(model: DemoClassifier, data: list[Example], mode: str) -> float:
    """Argmax accuracy with either true cluster IDs or UNKNOWN for all.

    mode "true-id" feeds each example's own cluster one-hot; mode
    "unknown-only" feeds the constant inference feature. Argmax ties break
    toward the lowest class index.
    """
    if not data:
        raise DataError("evaluation data must be nonempty")
    if mode not in ("true-id", "unknown-only"):
        raise UsageError(f"mode must be 'true-id' or 'unknown-only', got {mode!r}")
    unknown = inference_feature(model.k)
    correct = 0
    for x, cid, label in data:
        cond = one_hot(cid, model.k) if mode == "true-id" else unknown
        z = _input_vector(model, np.asarray(x, dtype=np.float64), cond)
        correct += int(int(np.argmax(model.W @ z + model.b)) == int(label))
    return correct / len(data)


def make_demo_data(
    n: int, k: int, seed: int, class_sep: float = 1.0, cluster_shift: float = 1.0,
    noise_sigma: float = 1.0, n_features: int = 2,
) -> list[Example]:
    """Cluster-dependent binary-label generator for conditioning experiments.

    The label moves feature 0 by +-class_sep and the cluster adds a shift
    spread symmetrically in [-cluster_shift, +cluster_shift], so the true
    cluster ID carries real information: a classifier that knows it can
    subtract the shift, one that does not faces overlapping classes.
    """
    if n < 1 or k < 1 or n_features < 1:
        raise UsageError("n, k, and n_features must be positive")
    rng = rng_from(seed)
    shifts = (
        np.linspace(-cluster_shift, cluster_shift, k) if k > 1 else np.zeros(1)
    )
    data: list[Example] = []
    for _ in range(n):
        label = int(rng.integers(2))
        cluster = int(rng.integers(k))
        x = rng.normal(0.0, noise_sigma, n_features)
        x[0] += (2 * label - 1) * class_sep + shifts[cluster]
        data.append((x, ClusterId(cluster, k), label))
    return data


def save_classifier(model: DemoClassifier, path: str) -> None:
    lines = [_HEADER, f"C {model.C}", f"F {model.F}", f"k {model.k}", f"bias {floats_line(model.b)}"]
    for row in model.W:
        lines.append(f"weights {floats_line(row)}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_classifier(path: str) -> DemoClassifier:
    tagged = read_tagged_lines(path, _HEADER)
    fields = {tag: payload for tag, payload in tagged if tag != "weights"}
    rows = [payload for tag, payload in tagged if tag == "weights"]
    try:
        C, F, k = int(fields["C"]), int(fields["F"]), int(fields["k"])
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: missing or malformed C/F/k") from exc
    if len(rows) != C:
        raise DataError(f"{path}: expected {C} weight rows, got {len(rows)}")
    W = np.vstack([parse_floats(r, F + k + 1, "weight entries") for r in rows])
    return DemoClassifier(_freeze(W), _freeze(parse_floats(fields.get("bias", ""), C, "bias entries")), C, F, k)


def save_loss_curve(curve: tuple[float, ...], path: str) -> None:
    """Two-column text file: epoch index and loss."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch loss\n")
        for i, loss in enumerate(curve):
            fh.write(f"{i} {fmt17(loss)}\n")
