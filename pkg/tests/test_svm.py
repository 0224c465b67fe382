import numpy as np
import pytest

from src.analytics.svm import (SgdConfig, SvmModel, predict_batch, sgd_epoch, svm_accuracy,
                               svm_objective, svm_predict, svm_train)
from src.utils import InvalidArgumentError


def blobs(rng, per_class, spread=0.3, classes="abc"):
    centers = {"a": [4.0, 0.0, 0.0, 0.0], "b": [0.0, 4.0, 0.0, 0.0], "c": [0.0, 0.0, 4.0, 0.0]}
    X, y = [], []
    for label in classes:
        center = centers[label]
        X.append(rng.normal(center, spread, size=(per_class, 4)))
        y.extend([label] * per_class)
    return np.vstack(X), y


def test_two_separable_blobs_with_default_hyperparameters(rng):
    X, y = blobs(rng, 25, classes="ab")
    first = svm_train(X, y, SgdConfig(lambda_=1e-5, eta=0.2, epochs=100, seed=4))
    again = svm_train(X, y, SgdConfig(lambda_=1e-5, eta=0.2, epochs=100, seed=4))
    assert first.classes == ("a", "b")
    assert svm_accuracy(first, X, y) == 1.0
    assert np.array_equal(first.weights, again.weights)
    assert first.objective_history == again.objective_history


def test_separable_blobs_are_learned(rng):
    train_X, train_y = blobs(rng, 30)
    test_X, test_y = blobs(rng, 20)
    model = svm_train(train_X, train_y, SgdConfig(lambda_=1e-5, eta=0.2, epochs=100))

    assert model.classes == ("a", "b", "c")
    assert svm_accuracy(model, train_X, train_y) == 1.0
    assert svm_accuracy(model, test_X, test_y) == 1.0
    assert model.objective_history[-1] <= model.objective_history[0]
    assert len(model.objective_history) == 100


def test_training_is_deterministic(rng):
    X, y = blobs(rng, 10, spread=2.0)
    a = svm_train(X, y, SgdConfig(epochs=20, seed=5))
    b = svm_train(X, y, SgdConfig(epochs=20, seed=5))
    assert np.array_equal(a.weights, b.weights)
    assert np.array_equal(a.biases, b.biases)


def test_single_sgd_step_from_zero():
    cfg = SgdConfig(lambda_=0.0, eta=0.5, epochs=1)
    W = np.zeros((2, 3))
    Xa = np.array([[1.0, 2.0, 1.0]])
    Y = np.array([[1.0, -1.0]])
    sgd_epoch(W, Xa, Y, np.array([0]), cfg, epoch=0)
    assert W.tolist() == [[0.5, 1.0, 0.5], [-0.5, -1.0, -0.5]]


def test_inactive_hinge_only_shrinks():
    cfg = SgdConfig(lambda_=0.1, eta=1.0)
    W = np.array([[2.0, 0.0]])
    sgd_epoch(W, np.array([[1.0, 1.0]]), np.array([[1.0]]), np.array([0]), cfg, epoch=0)
    assert W.tolist() == [[pytest.approx(1.8), 0.0]]


def test_learning_rate_decay():
    cfg = SgdConfig(lambda_=0.5, eta=0.2)
    assert cfg.learning_rate(0) == 0.2
    assert cfg.learning_rate(10) == pytest.approx(0.2 / 2.0)


def test_ties_go_to_the_lower_class_index():
    model = SvmModel(classes=("cat", "dog"), weights=np.zeros((2, 3)), biases=np.zeros(2))
    label, scores = svm_predict(model, np.array([1.0, 2.0, 3.0]))
    assert label == "cat"
    assert scores.tolist() == [0.0, 0.0]
    labels, _ = predict_batch(model, np.ones((4, 3)))
    assert labels == ["cat"] * 4


def test_trained_objective_beats_the_zero_model(rng):
    X, y = blobs(rng, 15)
    model = svm_train(X, y, SgdConfig(epochs=30))
    zero = SvmModel(classes=model.classes, weights=np.zeros_like(model.weights),
                    biases=np.zeros(3))
    assert svm_objective(zero, X, y) == pytest.approx(1.0)
    assert svm_objective(model, X, y) < 1.0


def test_training_input_checks(rng):
    X = rng.normal(size=(6, 3))
    with pytest.raises(InvalidArgumentError, match="2 classes"):
        svm_train(X, ["a"] * 6)
    with pytest.raises(InvalidArgumentError):
        svm_train(X, ["a", "b"] * 2)
    with pytest.raises(InvalidArgumentError):
        svm_train(X[:1], ["a"])
    with pytest.raises(InvalidArgumentError):
        SgdConfig(eta=0.0)

    model = svm_train(X, ["a", "b"] * 3, SgdConfig(epochs=2))
    with pytest.raises(InvalidArgumentError):
        svm_predict(model, np.zeros(4))
