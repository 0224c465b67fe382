import numpy as np
import pytest

from src.utils import InvalidArgumentError
from utils.metrics import EvaluationMetrics


def looped_average_precision(ranking, relevant):
    hits, total = 0, 0.0
    for rank, item in enumerate(ranking, start=1):
        if item in relevant:
            hits += 1
            total += hits / rank
    return total / len(relevant)


def test_average_precision_matches_the_definition():
    rng = np.random.default_rng(9)
    for _ in range(100):
        n = int(rng.integers(1, 40))
        ranking = [f"id{i}" for i in rng.permutation(n)]
        size = int(rng.integers(1, n + 1))
        relevant = {f"id{i}" for i in rng.choice(n, size=size, replace=False)}
        got = EvaluationMetrics.average_precision(ranking, relevant)
        assert abs(got - looped_average_precision(ranking, relevant)) < 1e-12


def test_average_precision_hand_examples():
    assert EvaluationMetrics.average_precision(["a", "b", "c", "d"], {"a", "c"}) == pytest.approx(5 / 6)
    assert EvaluationMetrics.average_precision(["a", "b"], {"a", "b"}) == 1.0
    assert EvaluationMetrics.average_precision(["x", "y"], {"z"}) == 0.0
    # a relevant item that was never ranked contributes zero precision
    assert EvaluationMetrics.average_precision(["a", "b"], {"a", "z"}) == 0.5
    with pytest.raises(InvalidArgumentError):
        EvaluationMetrics.average_precision(["a"], set())


def test_mean_average_precision():
    assert EvaluationMetrics.mean_average_precision([1.0, 0.5]) == 0.75
    with pytest.raises(InvalidArgumentError):
        EvaluationMetrics.mean_average_precision([])


def test_accuracy():
    assert EvaluationMetrics.accuracy(["a", "b", "b", "c"], ["a", "b", "c", "c"]) == 0.75
    with pytest.raises(InvalidArgumentError):
        EvaluationMetrics.accuracy(["a"], ["a", "b"])


def test_confusion_matrix_and_per_class_accuracy():
    truth = ["cat", "cat", "dog", "owl"]
    predicted = ["cat", "dog", "dog", "dog"]
    table = EvaluationMetrics.confusion_matrix(predicted, truth)
    assert list(table.index) == ["cat", "dog", "owl"]
    assert table.loc["cat", "dog"] == 1
    assert table.loc["owl", "owl"] == 0
    assert int(table.values.sum()) == 4

    recall = EvaluationMetrics.per_class_accuracy(predicted, truth)
    assert recall.to_dict() == {"cat": 0.5, "dog": 1.0, "owl": 0.0}
