"""
Evaluation Module
=================
Protocols built on top of encoded features: classification with
ten-crop score averaging, Euclidean retrieval with mAP (optionally
after PCA-whitening compression), invariance sweeps over test-time
transformations, best-window search and level/pooling ablations.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Hashable, List, Optional, Sequence, Set, Tuple

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist

from modules.pipeline import (MopEncoder, PipelineSettings, PoolingMethod,
                              ScaleStrategy, StrategyKind, fit_pipeline,
                              gather_training_descriptors)
from src.analytics.encoding import l2_normalize_rows, pca_fit
from src.analytics.patchgrid import Level, PatchSpec, sliding_windows
from src.analytics.svm import SgdConfig, SvmModel, predict_batch, svm_train
from src.analytics.transforms import (TransformKind, TransformSpec,
                                      apply_transform, crop, normalize_frame,
                                      ten_crop)
from src.data.images import ImageTensor
from src.utils import InvalidArgumentError, NotFoundError
from utils.descriptors import DescriptorSource, ImageRef
from utils.metrics import EvaluationMetrics

logger = logging.getLogger(__name__)

INVARIANCE_COLUMNS = ["kind", "parameter", "accuracy", "feature_drift"]
WINDOW_SIDES = (224, 192, 160, 128)
WINDOW_STRIDE = 16


# ============================================================
# Classification
# ============================================================

def ten_crop_predict(model: SvmModel, crop_features: np.ndarray) -> Tuple[Hashable, np.ndarray]:
    """
    Average per-class scores over ten crops, then take the argmax.

    Args:
        model: Trained classifier
        crop_features: (10, D) features of the ten crops

    Returns:
        (label, (C,) averaged scores)
    """
    X = np.asarray(crop_features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != 10:
        raise InvalidArgumentError(f"ten-crop prediction needs exactly 10 feature rows, got shape {X.shape}")
    averaged = model.scores(X).mean(axis=0)
    return model.classes[int(np.argmax(averaged))], averaged


def ten_crop_accuracy(model: SvmModel, encoder: MopEncoder, images: Sequence[ImageTensor],
                      labels: Sequence[Hashable], crop_side: int = 224) -> float:
    """
    Test accuracy with ten-crop score averaging.

    Each crop is resampled back to the normalized frame before encoding.
    """
    if len(images) != len(labels):
        raise InvalidArgumentError(f"{len(images)} images but {len(labels)} labels")
    predicted = []
    for image in images:
        crops = ten_crop(image, crop_side)
        features = np.vstack([encoder.featurize(normalize_frame(c, image.width)) for c in crops])
        label, _ = ten_crop_predict(model, features)
        predicted.append(label)
    return EvaluationMetrics.accuracy(predicted, labels)


def classify(train_features: np.ndarray, train_labels: Sequence[Hashable], test_features: np.ndarray,
             test_labels: Sequence[Hashable], cfg: SgdConfig = SgdConfig()) -> Tuple[SvmModel, float]:
    """Train on the training split, return the model and its test accuracy."""
    model = svm_train(train_features, train_labels, cfg)
    predicted, _ = predict_batch(model, test_features)
    return model, EvaluationMetrics.accuracy(predicted, test_labels)


# ============================================================
# Retrieval
# ============================================================

@dataclass
class RetrievalResult:
    """
    Attributes:
        rankings: Per query id, the database as (item_id, distance), nearest first
        average_precisions: Per query id AP
        mean_average_precision: Mean of the APs
    """

    rankings: Dict[str, List[Tuple[str, float]]] = field(default_factory=dict)
    average_precisions: Dict[str, float] = field(default_factory=dict)
    mean_average_precision: float = 0.0

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"query_id": list(self.average_precisions),
                             "average_precision": list(self.average_precisions.values())})


def retrieve(db_features: np.ndarray, db_ids: Sequence[str], query_features: np.ndarray,
             query_ids: Sequence[str], relevance: Dict[str, Set[str]]) -> RetrievalResult:
    """
    Euclidean nearest-neighbor retrieval scored by mAP.

    A query never appears in its own ranking; equal distances keep the
    database order.

    Args:
        db_features: (M, D) database features
        db_ids: M database ids
        query_features: (Q, D) query features
        query_ids: Q query ids
        relevance: Non-empty relevant id set per query

    Returns:
        RetrievalResult
    """
    db = np.atleast_2d(np.asarray(db_features, dtype=np.float64))
    queries = np.atleast_2d(np.asarray(query_features, dtype=np.float64))
    if len(db_ids) == 0 or db.size == 0:
        raise InvalidArgumentError("retrieval needs a non-empty database")
    if db.shape[0] != len(db_ids) or queries.shape[0] != len(query_ids):
        raise InvalidArgumentError("feature rows and ids disagree in count")
    if db.shape[1] != queries.shape[1]:
        raise InvalidArgumentError(f"query dim {queries.shape[1]} != database dim {db.shape[1]}")
    if len(query_ids) == 0:
        raise InvalidArgumentError("retrieval needs at least one query")

    distances = cdist(queries, db, "euclidean")
    result = RetrievalResult()
    for q, query_id in enumerate(query_ids):
        relevant = set(relevance.get(query_id, ()))
        if not relevant:
            raise NotFoundError(f"no relevant items for query {query_id!r}")
        order = np.argsort(distances[q], kind="stable")
        ranking = [(db_ids[i], float(distances[q, i])) for i in order if db_ids[i] != query_id]
        result.rankings[query_id] = ranking
        result.average_precisions[query_id] = EvaluationMetrics.average_precision(
            [item for item, _ in ranking], relevant - {query_id})
    result.mean_average_precision = EvaluationMetrics.mean_average_precision(
        list(result.average_precisions.values()))
    return result


def compress_features(train_features: np.ndarray, features: np.ndarray, d_out: int,
                      whiten: bool = True) -> np.ndarray:
    """
    PCA-compress descriptors, then re-normalize every row to unit length.

    Args:
        train_features: Rows the PCA is fitted on
        features: Rows to compress
        d_out: Target dimension (clamped to the training rank)
        whiten: Divide by the square root of the eigenvalues

    Returns:
        (n, d_out) compressed features
    """
    pca = pca_fit(train_features, d_out, whiten=whiten)
    return l2_normalize_rows(pca.transform(np.atleast_2d(features)))


def retrieval_table(features: np.ndarray, ids: Sequence[str], relevance: Dict[str, Set[str]],
                    compression_dims: Sequence[int] = (), whiten: bool = True,
                    train_features: Optional[np.ndarray] = None) -> pd.DataFrame:
    """
    mAP of the full descriptor and of each compressed variant.

    Every image is both a database item and, when it has a relevance
    entry, a query.

    Returns:
        DataFrame with columns representation, dim, mAP
    """
    features = np.asarray(features, dtype=np.float64)
    query_ids = [i for i in ids if relevance.get(i)]
    if not query_ids:
        raise InvalidArgumentError("no image has a relevance entry")
    position = {image_id: row for row, image_id in enumerate(ids)}

    def score(matrix: np.ndarray) -> float:
        queries = matrix[[position[q] for q in query_ids]]
        return retrieve(matrix, ids, queries, query_ids, relevance).mean_average_precision

    rows = [{"representation": "full", "dim": features.shape[1], "mAP": score(features)}]
    fit_on = features if train_features is None else train_features
    for d in compression_dims:
        compressed = compress_features(fit_on, features, d, whiten=whiten)
        rows.append({"representation": f"pca{'_whiten' if whiten else ''}", "dim": compressed.shape[1],
                     "mAP": score(compressed)})
    return pd.DataFrame(rows, columns=["representation", "dim", "mAP"])


# ============================================================
# Invariance
# ============================================================

def default_sweep() -> List[TransformSpec]:
    """
    Scale 1.0-2.0 in 0.2 steps, horizontal and vertical translation
    -30..+30 px in 10 px steps plus the extreme shifts -38 and +38,
    rotation -20..+20 degrees in 5 degree steps, and one flip.
    """
    sweep = [TransformSpec(TransformKind.SCALE, round(1.0 + 0.2 * i, 1)) for i in range(6)]
    for kind in (TransformKind.TRANSLATE_H, TransformKind.TRANSLATE_V):
        sweep.extend(TransformSpec(kind, float(p)) for p in (-38, *range(-30, 31, 10), 38))
    sweep.extend(TransformSpec(TransformKind.ROTATE, float(p)) for p in range(-20, 21, 5))
    sweep.append(TransformSpec(TransformKind.FLIP))
    return sweep


def invariance_sweep(model: SvmModel, encoder: MopEncoder, images: Sequence[ImageTensor],
                     labels: Sequence[Hashable], sweep: Sequence[TransformSpec],
                     threads: int = 1) -> pd.DataFrame:
    """
    Test accuracy under each transformation of the whole test set.

    Identity cells reuse the untransformed features, so they equal the
    baseline accuracy exactly.

    Args:
        model: Classifier trained on untransformed training features
        encoder: Encoder the classifier's features came from
        images: Normalized test frames
        labels: Test labels
        sweep: Transformations, one output row each

    Returns:
        DataFrame with columns kind, parameter, accuracy, feature_drift
    """
    if len(images) != len(labels):
        raise InvalidArgumentError(f"{len(images)} images but {len(labels)} labels")
    if not images:
        raise InvalidArgumentError("invariance sweep needs test images")

    refs = [ImageRef(f"test-{i}", image) for i, image in enumerate(images)]
    baseline = encoder.encode_many(refs, threads)

    rows = []
    for spec in sweep:
        if spec.is_identity:
            features = baseline
        else:
            transformed = [ImageRef(ref.image_id, apply_transform(ref.tensor, spec)) for ref in refs]
            features = encoder.encode_many(transformed, threads)
        predicted, _ = predict_batch(model, features)
        accuracy = EvaluationMetrics.accuracy(predicted, labels)
        drift = float(np.linalg.norm(features - baseline, axis=1).mean())
        logger.info(f"invariance {spec.kind.value} {spec.parameter:+g}: accuracy {accuracy:.4f}")
        rows.append({"kind": spec.kind.value, "parameter": spec.parameter,
                     "accuracy": accuracy, "feature_drift": drift})
    return pd.DataFrame(rows, columns=INVARIANCE_COLUMNS)


# ============================================================
# Best window
# ============================================================

def score_windows(model: SvmModel, encoder: MopEncoder, image: ImageTensor, target_class: Hashable,
                  sides: Sequence[int] = WINDOW_SIDES, stride: int = WINDOW_STRIDE) -> pd.DataFrame:
    """
    Target-class score of every sliding window.

    Each window is resampled to the normalized frame and encoded.

    Returns:
        DataFrame with columns x, y, side, score in window order
    """
    if target_class not in model.classes:
        raise InvalidArgumentError(f"unknown class {target_class!r}")
    column = model.classes.index(target_class)
    frame = image.width
    rows = []
    for spec in sliding_windows(frame, sides, stride):
        window = normalize_frame(crop(image, spec.x, spec.y, spec.side, spec.side), frame)
        score = float(model.scores(encoder.featurize(window))[0, column])
        rows.append({"x": spec.x, "y": spec.y, "side": spec.side, "score": score})
    return pd.DataFrame(rows, columns=["x", "y", "side", "score"])


def best_window(model: SvmModel, encoder: MopEncoder, image: ImageTensor, target_class: Hashable,
                sides: Sequence[int] = WINDOW_SIDES, stride: int = WINDOW_STRIDE) -> Tuple[PatchSpec, float]:
    """
    Window with the highest score for the target class.

    Ties go to the earliest window (larger sides first, then row-major).

    Returns:
        (PatchSpec with level None, score)
    """
    table = score_windows(model, encoder, image, target_class, sides, stride)
    best = int(np.argmax(table["score"].to_numpy()))
    row = table.iloc[best]
    return PatchSpec(None, int(row["x"]), int(row["y"]), int(row["side"])), float(row["score"])


# ============================================================
# Ablations
# ============================================================

@dataclass(frozen=True)
class AblationVariant:
    method: PoolingMethod
    strategy: ScaleStrategy

    @property
    def label(self) -> str:
        return f"{self.method.value}/{self.strategy.kind.value}/{self.strategy.label}"


def level_subset_variants(method: PoolingMethod = PoolingMethod.VLAD) -> List[AblationVariant]:
    """Single levels, pairs and all three, concatenated, plus the multi-scale union."""
    subsets = [(Level.L1,), (Level.L2,), (Level.L3,), (Level.L1, Level.L2),
               (Level.L1, Level.L2, Level.L3)]
    variants = [AblationVariant(method, ScaleStrategy(StrategyKind.CONCATENATION, s)) for s in subsets]
    variants.append(AblationVariant(method, ScaleStrategy(StrategyKind.MULTISCALE, subsets[-1])))
    return variants


def ablation_table(source: DescriptorSource, base: PipelineSettings,
                   train: Sequence[ImageRef], train_labels: Sequence[Hashable],
                   test: Sequence[ImageRef], test_labels: Sequence[Hashable],
                   variants: Sequence[AblationVariant], sgd: SgdConfig = SgdConfig(),
                   threads: int = 1) -> pd.DataFrame:
    """
    Fit, encode and classify once per pooling method / strategy / level set.

    Returns:
        DataFrame with columns method, strategy, levels, dim, accuracy
    """
    rows = []
    for variant in variants:
        settings = PipelineSettings(
            method=variant.method, strategy=variant.strategy, grid=base.grid, vlad=base.vlad,
            patch_pca_dim=base.patch_pca_dim, codebook_size=base.codebook_size,
            pooled_pca_dim=base.pooled_pca_dim, kmeans_max_iters=base.kmeans_max_iters,
            kmeans_tol=base.kmeans_tol, seed=base.seed)
        model = fit_pipeline(gather_training_descriptors(source, train, settings, threads), settings)
        encoder = MopEncoder(model, source)
        _, accuracy = classify(encoder.encode_many(train, threads), train_labels,
                               encoder.encode_many(test, threads), test_labels, sgd)
        logger.info(f"ablation {variant.label}: accuracy {accuracy:.4f}")
        rows.append({"method": variant.method.value, "strategy": variant.strategy.kind.value,
                     "levels": variant.strategy.label, "dim": encoder.dim, "accuracy": accuracy})
    return pd.DataFrame(rows, columns=["method", "strategy", "levels", "dim", "accuracy"])


# ============================================================
# Splits
# ============================================================

def split_ids(labels: Dict[str, Hashable], image_ids: Sequence[str],
              split: Optional[Dict[str, Sequence[str]]] = None) -> Tuple[List[str], List[str]]:
    """
    Train and test ids, in image order.

    Without an explicit split, images of each class alternate between
    train and test (first train), in image order.

    Raises:
        InvalidArgumentError: when labels and images disagree, or a split id is unknown
    """
    missing = [i for i in image_ids if i not in labels]
    if missing:
        raise InvalidArgumentError(f"{len(missing)} images have no label (first: {missing[0]!r})")
    extra = sorted(set(labels) - set(image_ids))
    if extra:
        raise InvalidArgumentError(f"{len(extra)} labels for unknown images (first: {extra[0]!r})")

    if split is not None:
        known = set(image_ids)
        unknown = [i for part in ("train", "test") for i in split.get(part, ()) if i not in known]
        if unknown:
            raise InvalidArgumentError(f"split names unknown image {unknown[0]!r}")
        train_set, test_set = set(split.get("train", ())), set(split.get("test", ()))
        train = [i for i in image_ids if i in train_set]
        test = [i for i in image_ids if i in test_set]
    else:
        seen: Dict[Hashable, int] = {}
        train, test = [], []
        for image_id in image_ids:
            label = labels[image_id]
            (train if seen.get(label, 0) % 2 == 0 else test).append(image_id)
            seen[label] = seen.get(label, 0) + 1

    if not train or not test:
        raise InvalidArgumentError(f"empty split: {len(train)} train / {len(test)} test images")
    return train, test
