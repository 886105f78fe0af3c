"""In-scope intent classifier: a softmax linear head over embeddings,
trained with focal loss to counter class imbalance.

The head models the in-scope probability distribution only; out-of-scope
handling lives entirely in the scoring and gate stages.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .domain import IntentCatalog, LabeledDataset, require_valid_catalog
from .errors import DataError

logger = logging.getLogger(__name__)

PT_CLAMP = 1e-12


@dataclass
class TrainingConfig:
    """Hyperparameters for the focal-loss head.

    ``alpha`` is a scalar, a per-class vector, or None for inverse class
    frequency normalized to mean 1 over the classes present in training.
    """

    gamma: float = 2.0
    alpha: Union[float, Sequence[float], None] = None
    learning_rate: float = 0.5
    epochs: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.gamma < 0:
            raise DataError("gamma must be >= 0")
        if self.alpha is not None:
            arr = np.atleast_1d(np.asarray(self.alpha, dtype=float))
            if np.any(arr <= 0):
                raise DataError("alpha entries must be > 0")
        if self.learning_rate <= 0:
            raise DataError("learning_rate must be > 0")
        if self.epochs < 1:
            raise DataError("epochs must be >= 1")


@dataclass(eq=False)
class ClassifierModel:
    """Trained softmax head: logits(x) = weights.T @ x + biases."""

    weights: np.ndarray  # (d, N)
    biases: np.ndarray  # (N,)
    classes: tuple[str, ...]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.biases = np.asarray(self.biases, dtype=float)
        if self.weights.ndim != 2:
            raise DataError("weights must be a d x N matrix")
        if self.weights.shape[1] != len(self.classes):
            raise DataError("weights column count must equal the number of classes")
        if self.biases.shape != (len(self.classes),):
            raise DataError("biases must be an N-vector")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.biases))):
            raise DataError("model parameters must be finite")

    @property
    def dim(self) -> int:
        return int(self.weights.shape[0])

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def logits(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise DataError(f"embedding dim {x.shape} does not match model dim {self.dim}")
        return x @ self.weights + self.biases


@dataclass(eq=False)
class TopKPrediction:
    """Ranked top-k intents with probabilities, plus the full distribution."""

    ranked: list[tuple[str, float]]
    probabilities: np.ndarray  # full distribution over all classes
    logits: np.ndarray

    @property
    def top1(self) -> str:
        return self.ranked[0][0]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.ranked)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def _alpha_for(alpha, gold: int, n: int) -> float:
    if alpha is None:
        return 1.0
    arr = np.atleast_1d(np.asarray(alpha, dtype=float))
    if arr.size == 1:
        return float(arr[0])
    if arr.size != n:
        raise DataError(f"alpha vector length {arr.size} does not match {n} classes")
    return float(arr[gold])


def focal_loss(probabilities, gold: int, gamma: float = 2.0, alpha=1.0):
    """Focal loss -alpha * (1 - p_t)^gamma * log(p_t) and its logit gradient.

    ``probabilities`` must lie on the simplex. The gradient is taken with
    respect to the logits that produced the distribution via softmax, using
    the softmax Jacobian. p_t is clamped at 1e-12 so the loss stays finite.
    """
    p = np.asarray(probabilities, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise DataError("probabilities must be a non-empty vector")
    if abs(float(p.sum()) - 1.0) > 1e-6:
        raise DataError("probabilities must sum to 1")
    if not 0 <= gold < p.size:
        raise DataError(f"gold index {gold} out of range for {p.size} classes")
    if gamma < 0:
        raise DataError("gamma must be >= 0")
    alpha_g = _alpha_for(alpha, gold, p.size)

    pt_raw = float(p[gold])
    pt = min(max(pt_raw, PT_CLAMP), 1.0)
    if pt_raw < PT_CLAMP:
        logger.debug("focal_loss: p_t=%.3g clamped to %.0e", pt_raw, PT_CLAMP)
    one_minus = 1.0 - pt

    if one_minus <= 0.0:
        # p_t == 1: zero loss; the gradient vanishes for gamma > 0 and
        # reduces to the cross-entropy gradient (also zero here) for gamma == 0.
        loss = 0.0
        dl_dpt = -alpha_g / pt if gamma == 0.0 else 0.0
    else:
        log_pt = np.log(pt)
        focal = one_minus**gamma
        loss = -alpha_g * focal * log_pt
        dfocal = gamma * one_minus ** (gamma - 1.0) if gamma > 0.0 else 0.0
        dl_dpt = alpha_g * (dfocal * log_pt - focal / pt)

    onehot = np.zeros_like(p)
    onehot[gold] = 1.0
    grad = dl_dpt * pt * (onehot - p)
    return float(loss), grad


def _resolve_alpha_vector(config: TrainingConfig, y: np.ndarray, n_classes: int) -> np.ndarray:
    """Materialize the per-class alpha vector used during training."""
    if config.alpha is not None:
        arr = np.atleast_1d(np.asarray(config.alpha, dtype=float))
        if arr.size == 1:
            return np.full(n_classes, float(arr[0]))
        if arr.size != n_classes:
            raise DataError(f"alpha vector length {arr.size} does not match {n_classes} classes")
        return arr.copy()
    # Inverse class frequency, normalized to mean 1 over classes with support.
    counts = np.bincount(y, minlength=n_classes).astype(float)
    present = counts > 0
    inv = np.ones(n_classes)
    inv[present] = 1.0 / counts[present]
    inv[present] /= inv[present].mean()
    return inv


def _batch_focal(probs, y, gamma, alpha_vec):
    """Mean focal loss and mean logit gradient over a batch."""
    n = probs.shape[0]
    pt = np.clip(probs[np.arange(n), y], PT_CLAMP, 1.0)
    one_minus = np.clip(1.0 - pt, 0.0, 1.0)
    alpha_g = alpha_vec[y]
    with np.errstate(divide="ignore", invalid="ignore"):
        log_pt = np.log(pt)
        focal = one_minus**gamma
        loss = -alpha_g * focal * log_pt
        if gamma > 0.0:
            dfocal = np.where(one_minus > 0.0, gamma * one_minus ** (gamma - 1.0), 0.0)
            dl_dpt = alpha_g * (dfocal * log_pt - focal / pt)
            dl_dpt = np.where(one_minus > 0.0, dl_dpt, 0.0)
        else:
            dl_dpt = -alpha_g / pt
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), y] = 1.0
    grad_logits = (dl_dpt * pt)[:, None] * (onehot - probs)
    return float(loss.mean()), grad_logits / n


def train(
    dataset: LabeledDataset,
    catalog: IntentCatalog,
    config: TrainingConfig = TrainingConfig(),
) -> ClassifierModel:
    """Fit the softmax head by full-batch gradient descent on focal loss.

    Deterministic given the seed. The parameters with the best training loss
    seen across epochs (initialization included) are returned, so the final
    mean loss never exceeds the initial one. OOS-labeled items are rejected:
    the head is trained on in-scope data only.
    """
    require_valid_catalog(catalog)
    if len(dataset) == 0:
        raise DataError("training dataset is empty")
    dataset.check_labels(catalog, allow_oos=False)
    if len(set(dataset.labels)) < 2:
        raise DataError("training dataset must contain at least 2 distinct labels")

    X = dataset.embedding_matrix()
    name_to_idx = {name: i for i, name in enumerate(catalog.names)}
    y = np.array([name_to_idx[label] for label in dataset.labels])
    n, d = X.shape
    n_classes = len(catalog)
    alpha_vec = _resolve_alpha_vector(config, y, n_classes)

    rng = np.random.default_rng(config.seed)
    W = 0.01 * rng.standard_normal((d, n_classes))
    b = np.zeros(n_classes)

    def mean_loss(W, b):
        probs = softmax(X @ W + b)
        loss, _ = _batch_focal(probs, y, config.gamma, alpha_vec)
        return loss

    best_loss = mean_loss(W, b)
    best = (W.copy(), b.copy())
    initial_loss = best_loss

    for epoch in range(config.epochs):
        probs = softmax(X @ W + b)
        loss, grad_logits = _batch_focal(probs, y, config.gamma, alpha_vec)
        gW = X.T @ grad_logits
        gb = grad_logits.sum(axis=0)
        W = W - config.learning_rate * gW
        b = b - config.learning_rate * gb
        loss_after = mean_loss(W, b)
        if loss_after < best_loss:
            best_loss = loss_after
            best = (W.copy(), b.copy())
        if epoch % 50 == 0 or epoch == config.epochs - 1:
            logger.debug("epoch %d: loss %.6f", epoch, loss_after)

    W, b = best
    meta = {
        "gamma": config.gamma,
        "alpha": "inverse_frequency" if config.alpha is None else np.atleast_1d(
            np.asarray(config.alpha, dtype=float)
        ).tolist(),
        "learning_rate": config.learning_rate,
        "epochs": config.epochs,
        "seed": config.seed,
        "initial_loss": initial_loss,
        "final_loss": best_loss,
        "n_train": n,
    }
    return ClassifierModel(W, b, catalog.names, meta)


def predict_topk(model: ClassifierModel, x, k: int) -> TopKPrediction:
    """Softmax over the head's logits; top-k by probability.

    Ties break by catalog order (stable sort over descending probability).
    """
    if k < 1:
        raise DataError("k must be >= 1")
    if k > model.n_classes:
        raise DataError(f"k={k} exceeds the {model.n_classes} catalog classes")
    logits = model.logits(np.asarray(x, dtype=float))
    probs = softmax(logits)
    order = np.argsort(-probs, kind="stable")
    ranked = [(model.classes[i], float(probs[i])) for i in order[:k]]
    return TopKPrediction(ranked, probs, logits)


def training_accuracy(model: ClassifierModel, dataset: LabeledDataset) -> float:
    correct = 0
    for utt, label in dataset:
        pred = predict_topk(model, utt.embedding, 1).top1
        correct += pred == label
    return correct / len(dataset)


# ---------------------------------------------------------------------------
# Model file format


def save_model(model: ClassifierModel, path) -> None:
    payload = {
        "dim": model.dim,
        "classes": list(model.classes),
        "weights": model.weights.tolist(),
        "biases": model.biases.tolist(),
        "meta": model.meta,
    }
    Path(path).write_text(json.dumps(payload) + "\n", encoding="utf-8")


def load_model(path) -> ClassifierModel:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    try:
        model = ClassifierModel(
            np.asarray(data["weights"], dtype=float),
            np.asarray(data["biases"], dtype=float),
            tuple(data["classes"]),
            data.get("meta", {}),
        )
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed model file: {exc}") from exc
    if model.dim != int(data.get("dim", model.dim)):
        raise DataError("model file dim field disagrees with the weight matrix")
    return model
