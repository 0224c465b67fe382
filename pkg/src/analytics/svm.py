"""
Linear SVM
==========
One-vs-all linear SVMs trained with plain SGD on the L2-regularized
hinge loss.

The bias is a weight on an appended constant-1 feature and is
regularized together with the other weights. All classes see the same
per-epoch sample order, so they are trained side by side.
"""

import logging
from dataclasses import dataclass
from typing import Hashable, List, Sequence, Tuple

import numpy as np

from src.utils import InvalidArgumentError, NumericalError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SgdConfig:
    lambda_: float = 1e-5
    eta: float = 0.2
    epochs: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.lambda_ < 0:
            raise InvalidArgumentError(f"sgd lambda must be >= 0, got {self.lambda_}")
        if not self.eta > 0:
            raise InvalidArgumentError(f"sgd eta must be > 0, got {self.eta}")
        if self.epochs < 1:
            raise InvalidArgumentError(f"sgd epochs must be >= 1, got {self.epochs}")

    def learning_rate(self, epoch: int) -> float:
        """eta / (1 + epoch * lambda * eta), epoch counted from 0."""
        return self.eta / (1.0 + epoch * self.lambda_ * self.eta)

    def to_dict(self) -> dict:
        return {"lambda": self.lambda_, "eta": self.eta, "epochs": self.epochs}


@dataclass(frozen=True, eq=False)
class SvmModel:
    """
    Attributes:
        classes: Class labels, index i scored by weights[i]
        weights: (C, D) per-class weight vectors
        biases: (C,) per-class biases
        objective_history: Mean regularized hinge objective (over classes) after each epoch
    """

    classes: Tuple[Hashable, ...]
    weights: np.ndarray
    biases: np.ndarray
    objective_history: Tuple[float, ...] = ()

    @property
    def dim(self) -> int:
        return int(self.weights.shape[1])

    def scores(self, X: np.ndarray) -> np.ndarray:
        """(N, C) matrix of w_c . x + b_c."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise InvalidArgumentError(f"feature dim {X.shape[1]} != classifier dim {self.dim}")
        return X @ self.weights.T + self.biases


def _augment(X: np.ndarray) -> np.ndarray:
    return np.hstack([X, np.ones((X.shape[0], 1))])


def _targets(labels: Sequence[Hashable], classes: Sequence[Hashable]) -> np.ndarray:
    """(N, C) one-vs-all targets in {-1, +1}."""
    index = {c: i for i, c in enumerate(classes)}
    Y = -np.ones((len(labels), len(classes)))
    Y[np.arange(len(labels)), [index[label] for label in labels]] = 1.0
    return Y


def _objective(W: np.ndarray, Xa: np.ndarray, Y: np.ndarray, lambda_: float) -> np.ndarray:
    """Per-class lambda/2 * |w|^2 + mean hinge."""
    margins = Y * (Xa @ W.T)
    hinge = np.maximum(0.0, 1.0 - margins).mean(axis=0)
    return 0.5 * lambda_ * np.sum(W * W, axis=1) + hinge


def sgd_epoch(W: np.ndarray, Xa: np.ndarray, Y: np.ndarray, order: np.ndarray,
              cfg: SgdConfig, epoch: int) -> np.ndarray:
    """
    One SGD pass over the samples in the given order.

    Per sample and class: w <- (1 - lr * lambda) * w, plus lr * y * x
    when the hinge is active (y * w.x < 1).

    Args:
        W: (C, D + 1) augmented weights, updated in place
        Xa: (N, D + 1) augmented features
        Y: (N, C) targets in {-1, +1}
        order: Sample visiting order
        cfg: SGD configuration
        epoch: 0-based epoch number (sets the learning rate)

    Returns:
        W
    """
    lr = cfg.learning_rate(epoch)
    shrink = 1.0 - lr * cfg.lambda_
    for i in order:
        x = Xa[i]
        y = Y[i]
        active = y * (W @ x) < 1.0
        W *= shrink
        W[active] += lr * y[active, None] * x
    return W


def svm_train(features: np.ndarray, labels: Sequence[Hashable], cfg: SgdConfig = SgdConfig()) -> SvmModel:
    """
    Train one-vs-all linear SVMs.

    Args:
        features: (N, D) training features
        labels: N class labels
        cfg: SGD hyperparameters and seed

    Returns:
        SvmModel with classes in sorted order
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidArgumentError(f"features must be a matrix, got shape {X.shape}")
    n = X.shape[0]
    if n != len(labels):
        raise InvalidArgumentError(f"{n} feature rows but {len(labels)} labels")
    if n < 2:
        raise InvalidArgumentError(f"svm needs at least 2 samples, got {n}")
    classes = tuple(sorted(set(labels)))
    if len(classes) < 2:
        raise InvalidArgumentError(f"svm needs at least 2 classes, got {list(classes)}")

    Xa = _augment(X)
    Y = _targets(labels, classes)
    W = np.zeros((len(classes), Xa.shape[1]))

    rng = np.random.default_rng(cfg.seed)
    history: List[float] = []
    for epoch in range(cfg.epochs):
        sgd_epoch(W, Xa, Y, rng.permutation(n), cfg, epoch)
        history.append(float(_objective(W, Xa, Y, cfg.lambda_).mean()))

    if not np.all(np.isfinite(W)):
        raise NumericalError("svm: non-finite weights after training")
    logger.debug(f"svm: {len(classes)} classes, objective {history[0]:.4g} -> {history[-1]:.4g}")
    return SvmModel(classes=classes, weights=W[:, :-1].copy(), biases=W[:, -1].copy(),
                    objective_history=tuple(history))


def svm_objective(model: SvmModel, features: np.ndarray, labels: Sequence[Hashable],
                  lambda_: float = 1e-5) -> float:
    """Regularized hinge objective averaged over the classes."""
    X = np.asarray(features, dtype=np.float64)
    W = np.hstack([model.weights, model.biases[:, None]])
    return float(_objective(W, _augment(X), _targets(labels, model.classes), lambda_).mean())


def svm_predict(model: SvmModel, feature: np.ndarray) -> Tuple[Hashable, np.ndarray]:
    """
    Label with the highest score; exact ties go to the lower class index.

    Returns:
        (label, (C,) per-class scores)
    """
    x = np.asarray(feature, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidArgumentError(f"svm_predict takes one feature vector, got shape {x.shape}")
    scores = model.scores(x)[0]
    return model.classes[int(np.argmax(scores))], scores


def predict_batch(model: SvmModel, features: np.ndarray) -> Tuple[List[Hashable], np.ndarray]:
    """Labels and (N, C) scores for every row."""
    scores = model.scores(features)
    return [model.classes[i] for i in np.argmax(scores, axis=1)], scores


def svm_accuracy(model: SvmModel, features: np.ndarray, labels: Sequence[Hashable]) -> float:
    predicted, _ = predict_batch(model, features)
    if len(predicted) != len(labels):
        raise InvalidArgumentError(f"{len(predicted)} feature rows but {len(labels)} labels")
    return float(np.mean([p == t for p, t in zip(predicted, labels)]))
