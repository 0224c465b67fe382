"""
Evaluation Metrics Module
=========================
Ranking and classification metrics: average precision, mean average
precision, accuracy and confusion tables.
"""

from typing import Hashable, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

from src.utils import InvalidArgumentError


class EvaluationMetrics:
    """
    Static methods for scoring retrieval rankings and classifier output.
    """

    @staticmethod
    def average_precision(ranked_ids: Sequence[Hashable], relevant: Iterable[Hashable]) -> float:
        """
        Non-interpolated average precision of one ranking.

        Mean, over the relevant items, of the precision at the rank where
        each one appears. Relevant items missing from the ranking count
        as precision 0.

        Args:
            ranked_ids: Database ids, best match first
            relevant: Ids relevant to the query (non-empty)

        Returns:
            AP in [0, 1]
        """
        relevant = set(relevant)
        if not relevant:
            raise InvalidArgumentError("average precision needs at least one relevant item")

        hits = np.fromiter((item in relevant for item in ranked_ids), dtype=bool, count=len(ranked_ids))
        if not hits.any():
            return 0.0
        ranks = np.flatnonzero(hits) + 1
        precision_at_hits = np.arange(1, len(ranks) + 1) / ranks
        return float(precision_at_hits.sum() / len(relevant))

    @staticmethod
    def mean_average_precision(average_precisions: Sequence[float]) -> float:
        if len(average_precisions) == 0:
            raise InvalidArgumentError("mAP of an empty query set")
        return float(np.mean(average_precisions))

    @staticmethod
    def accuracy(predicted: Sequence[Hashable], truth: Sequence[Hashable]) -> float:
        """Fraction of exact label matches."""
        if len(predicted) != len(truth):
            raise InvalidArgumentError(f"{len(predicted)} predictions for {len(truth)} labels")
        if len(truth) == 0:
            raise InvalidArgumentError("accuracy of an empty test set")
        return float(np.mean([p == t for p, t in zip(predicted, truth)]))

    @staticmethod
    def confusion_matrix(
        predicted: Sequence[Hashable],
        truth: Sequence[Hashable],
        classes: Optional[List[Hashable]] = None
    ) -> pd.DataFrame:
        """
        Counts of (true class, predicted class).

        Args:
            predicted: Predicted labels
            truth: True labels
            classes: Row/column order (defaults to the sorted union)

        Returns:
            DataFrame indexed by true class with one column per predicted class
        """
        if classes is None:
            classes = sorted(set(truth) | set(predicted))
        table = pd.crosstab(pd.Categorical(truth, categories=classes),
                            pd.Categorical(predicted, categories=classes),
                            rownames=["true"], colnames=["predicted"], dropna=False)
        return table.reindex(index=classes, columns=classes, fill_value=0)

    @staticmethod
    def per_class_accuracy(predicted: Sequence[Hashable], truth: Sequence[Hashable]) -> pd.Series:
        """Recall of every class, indexed by class."""
        frame = pd.DataFrame({"truth": list(truth), "correct": [p == t for p, t in zip(predicted, truth)]})
        return frame.groupby("truth")["correct"].mean().rename("accuracy")
