"""
MOP Pipeline Module
===================
Multi-scale orderless pooling: per-level pooling (average / max / VLAD),
the multi-scale vs. concatenation strategies, fitting of the per-level
models and assembly of the final descriptor.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.analytics.encoding import (Codebook, PcaModel, VladConfig, kmeans_fit,
                                    l2_normalize, normalize_chain, pca_fit,
                                    vlad_dim, vlad_encode)
from src.analytics.patchgrid import ALL_LEVELS, GridConfig, Level, level_grids
from src.data.formats import (read_json, read_matrix, read_model_container,
                              write_json, write_matrix, write_model_container)
from src.data.images import ImageTensor
from src.utils import (InvalidArgumentError, ModelMismatchError, NotFoundError,
                       NumericalError, config_fingerprint)
from utils.descriptors import DescriptorSource, ImageRef

logger = logging.getLogger(__name__)

MULTISCALE_KEY = "multiscale"


class PoolingMethod(str, Enum):
    AVERAGE = "average"
    MAX = "max"
    VLAD = "vlad"


class StrategyKind(str, Enum):
    MULTISCALE = "multiscale"
    CONCATENATION = "concatenation"


@dataclass(frozen=True)
class ScaleStrategy:
    """
    How levels are combined.

    MultiScale pools the union of all selected levels' patches into one
    block; Concatenation pools each level separately. With a single level
    the two coincide.
    """

    kind: StrategyKind = StrategyKind.CONCATENATION
    levels: Tuple[Level, ...] = ALL_LEVELS

    def __post_init__(self):
        object.__setattr__(self, "kind", StrategyKind(self.kind))
        levels = sorted({Level.parse(level) for level in self.levels}, key=lambda level: level.index)
        if not levels:
            raise InvalidArgumentError("a scale strategy needs at least one level")
        object.__setattr__(self, "levels", tuple(levels))

    @property
    def pools_union(self) -> bool:
        return self.kind == StrategyKind.MULTISCALE and len(self.levels) > 1

    @property
    def label(self) -> str:
        """Row label such as 'level1+level2+level3'."""
        return "+".join(f"level{level.index + 1}" for level in self.levels)

    def to_dict(self) -> Dict:
        return {"kind": self.kind.value, "levels": [level.value for level in self.levels]}


@dataclass(frozen=True)
class PipelineSettings:
    """Every hyperparameter of fitting and encoding."""

    method: PoolingMethod = PoolingMethod.VLAD
    strategy: ScaleStrategy = field(default_factory=ScaleStrategy)
    grid: GridConfig = field(default_factory=GridConfig)
    vlad: VladConfig = field(default_factory=VladConfig)
    patch_pca_dim: int = 500
    codebook_size: int = 100
    pooled_pca_dim: int = 4096
    kmeans_max_iters: int = 100
    kmeans_tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "method", PoolingMethod(self.method))
        for name in ("patch_pca_dim", "codebook_size", "pooled_pca_dim", "kmeans_max_iters"):
            if getattr(self, name) < 1:
                raise InvalidArgumentError(f"{name} must be >= 1, got {getattr(self, name)}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "method": self.method.value,
            "strategy": self.strategy.to_dict(),
            "grid": self.grid.to_dict(),
            "vlad": self.vlad.to_dict(),
            "patch_pca_dim": self.patch_pca_dim,
            "codebook_size": self.codebook_size,
            "pooled_pca_dim": self.pooled_pca_dim,
            "kmeans_max_iters": self.kmeans_max_iters,
            "kmeans_tol": self.kmeans_tol,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "PipelineSettings":
        return cls(
            method=PoolingMethod(payload["method"]),
            strategy=ScaleStrategy(StrategyKind(payload["strategy"]["kind"]),
                                   tuple(payload["strategy"]["levels"])),
            grid=GridConfig(**payload["grid"]),
            vlad=VladConfig(**payload["vlad"]),
            patch_pca_dim=payload["patch_pca_dim"],
            codebook_size=payload["codebook_size"],
            pooled_pca_dim=payload["pooled_pca_dim"],
            kmeans_max_iters=payload["kmeans_max_iters"],
            kmeans_tol=payload["kmeans_tol"],
            seed=payload["seed"],
        )


@dataclass(frozen=True, eq=False)
class LevelModels:
    """Patch PCA, codebook and pooled PCA of one VLAD-pooled group of patches."""

    patch_pca: PcaModel
    codebook: Codebook
    pooled_pca: PcaModel

    @property
    def output_dim(self) -> int:
        return self.pooled_pca.d_out


@dataclass(frozen=True)
class BlockLayout:
    label: str
    offset: int
    length: int


@dataclass(frozen=True, eq=False)
class MopDescriptor:
    """Concatenation of unit-normalized pooled blocks."""

    values: np.ndarray
    block_layout: Tuple[BlockLayout, ...]

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    def block(self, label: str) -> np.ndarray:
        for b in self.block_layout:
            if b.label == label:
                return self.values[b.offset:b.offset + b.length]
        raise NotFoundError(f"no block {label!r} in descriptor")


@dataclass(frozen=True, eq=False)
class MopPipelineModel:
    """
    Fitted pipeline.

    level_models is keyed by level value ("L2", "L3") for concatenation,
    or by "multiscale" for the shared union model. Level 1 never has
    models: the global descriptor is used directly.
    """

    settings: PipelineSettings
    descriptor_dim: int
    level_models: Dict[str, LevelModels]
    fingerprint: str


# ============================================================
# Layout
# ============================================================

def _groups(settings: PipelineSettings) -> List[Tuple[str, Tuple[Level, ...]]]:
    """Blocks of the descriptor as (label, levels pooled into it)."""
    strategy = settings.strategy
    if strategy.pools_union:
        return [(MULTISCALE_KEY, strategy.levels)]
    return [(level.value, (level,)) for level in strategy.levels]


def _uses_models(settings: PipelineSettings, label: str) -> bool:
    return settings.method == PoolingMethod.VLAD and label != Level.L1.value


def pre_pca_vlad_dim(settings: PipelineSettings, descriptor_dim: int) -> int:
    """VLAD length before the pooled PCA (k * patch PCA dim)."""
    return vlad_dim(settings.codebook_size, min(settings.patch_pca_dim, descriptor_dim))


def plan_layout(settings: PipelineSettings, descriptor_dim: int,
                model: Optional[MopPipelineModel] = None) -> Tuple[BlockLayout, ...]:
    """
    Block layout implied by the configuration.

    Without a model the requested pooled PCA dimension is used; with a
    fitted model its effective (possibly clamped) dimension is.
    """
    blocks = []
    offset = 0
    for label, _ in _groups(settings):
        if _uses_models(settings, label):
            if model is not None:
                length = model.level_models[label].output_dim
            else:
                length = settings.pooled_pca_dim
        else:
            length = descriptor_dim
        blocks.append(BlockLayout(label, offset, length))
        offset += length
    return tuple(blocks)


# ============================================================
# Pooling
# ============================================================

def pool_level(method: PoolingMethod, descriptors: np.ndarray,
               models: Optional[LevelModels] = None,
               vlad_cfg: VladConfig = VladConfig()) -> np.ndarray:
    """
    Pool one level's patch descriptors into a single vector.

    Args:
        method: Average, Max or Vlad
        descriptors: (n, D) patch descriptors, n >= 1
        models: Fitted models (required for Vlad)
        vlad_cfg: VLAD configuration

    Returns:
        Pooled vector: D for Average/Max, pooled PCA dim for Vlad
    """
    P = np.asarray(descriptors, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] == 0:
        raise InvalidArgumentError("pooling needs a non-empty list of descriptors")

    method = PoolingMethod(method)
    if method == PoolingMethod.AVERAGE:
        return P.mean(axis=0)
    if method == PoolingMethod.MAX:
        return P.max(axis=0)

    if models is None:
        raise InvalidArgumentError("VLAD pooling needs fitted level models")
    vlad = vlad_encode(vlad_cfg, models.codebook, models.patch_pca.transform(P))
    return models.pooled_pca.transform(normalize_chain(vlad, vlad_cfg.power_alpha))


def _normalized_vlad(settings: PipelineSettings, patch_pca: PcaModel, book: Codebook,
                     descriptors: np.ndarray) -> np.ndarray:
    vlad = vlad_encode(settings.vlad, book, patch_pca.transform(descriptors))
    return normalize_chain(vlad, settings.vlad.power_alpha)


# ============================================================
# Fitting
# ============================================================

def _fit_group(label: str, per_image: Sequence[np.ndarray], settings: PipelineSettings) -> LevelModels:
    stage = f"level {label}"
    patches = np.vstack(per_image)
    n = patches.shape[0]
    if n < 2:
        raise InvalidArgumentError(f"{stage} patch PCA: N < 2 ({n} patches)")
    if n < settings.codebook_size:
        raise InvalidArgumentError(f"{stage} codebook: N < k ({n} < {settings.codebook_size})")
    if len(per_image) < 2:
        raise InvalidArgumentError(f"{stage} pooled PCA: N < 2 ({len(per_image)} images)")

    logger.info(f"{stage}: patch PCA on {n} x {patches.shape[1]}")
    patch_pca = pca_fit(patches, settings.patch_pca_dim)

    logger.info(f"{stage}: k-means with k={settings.codebook_size}")
    book = kmeans_fit(patch_pca.transform(patches), settings.codebook_size, settings.seed,
                      max_iters=settings.kmeans_max_iters, tol=settings.kmeans_tol)

    pooled = np.vstack([_normalized_vlad(settings, patch_pca, book, P) for P in per_image])
    logger.info(f"{stage}: pooled PCA on {pooled.shape[0]} x {pooled.shape[1]}")
    pooled_pca = pca_fit(pooled, settings.pooled_pca_dim)

    for name, values in (("patch PCA", patch_pca.components), ("codebook", book.centers),
                         ("pooled PCA", pooled_pca.components)):
        if not np.all(np.isfinite(values)):
            raise NumericalError(f"{stage} {name}: non-finite values after fit")
    return LevelModels(patch_pca=patch_pca, codebook=book, pooled_pca=pooled_pca)


def fit_pipeline(training: Dict[Level, Sequence[np.ndarray]], settings: PipelineSettings,
                 fingerprint: Optional[str] = None) -> MopPipelineModel:
    """
    Fit every per-level model.

    For each VLAD-pooled group: patch PCA on the group's training patches,
    a k-means codebook on the PCA-reduced patches, then pooled PCA on the
    training images' power/L2-normalized VLAD vectors.

    Args:
        training: Per level, one (n_patches, D) descriptor matrix per training image
        settings: Pipeline hyperparameters
        fingerprint: Config fingerprint to record; defaults to a hash of the settings

    Returns:
        Fitted MopPipelineModel
    """
    training = {Level.parse(level): list(arrays) for level, arrays in training.items()}
    dims = {np.asarray(P).shape[1] for arrays in training.values() for P in arrays}
    if len(dims) != 1:
        raise InvalidArgumentError(f"training descriptors must share one dimension, got {sorted(dims)}")
    descriptor_dim = dims.pop()

    level_models: Dict[str, LevelModels] = {}
    for label, levels in _groups(settings):
        if not _uses_models(settings, label):
            continue
        missing = [level.value for level in levels if not training.get(level)]
        if missing:
            raise InvalidArgumentError(f"level {label}: no training descriptors for {missing}")
        counts = {len(training[level]) for level in levels}
        if len(counts) != 1:
            raise InvalidArgumentError(f"level {label}: levels disagree on the number of training images")

        # one matrix per training image (union of the group's levels)
        per_image = [np.vstack([np.asarray(training[level][i], dtype=np.float64) for level in levels])
                     for i in range(counts.pop())]
        level_models[label] = _fit_group(label, per_image, settings)

    if fingerprint is None:
        fingerprint = config_fingerprint({"settings": settings.to_dict(), "descriptor_dim": descriptor_dim})
    return MopPipelineModel(settings=settings, descriptor_dim=int(descriptor_dim),
                            level_models=level_models, fingerprint=fingerprint)


# ============================================================
# Encoding
# ============================================================

def collect_level_descriptors(source: DescriptorSource, image: ImageRef, grid_cfg: GridConfig,
                              levels: Sequence[Level]) -> Dict[Level, np.ndarray]:
    """
    Descriptors of every grid window of the requested levels.

    Raises:
        NotFoundError: when the source cannot serve a window, naming its PatchSpec
    """
    collected = {}
    for level, specs in level_grids(grid_cfg, levels).items():
        rows = []
        for spec in specs:
            try:
                rows.append(source.descriptor_for(image, spec))
            except NotFoundError as e:
                raise NotFoundError(f"{e} while encoding {image.image_id!r} at {spec}") from e
        collected[level] = np.vstack(rows).astype(np.float64)
    return collected


def encode_from_descriptors(model: MopPipelineModel, per_level: Dict[Level, np.ndarray]) -> MopDescriptor:
    """Assemble the MOP descriptor from already collected per-level descriptors."""
    settings = model.settings
    blocks = []
    layout = []
    offset = 0
    for label, levels in _groups(settings):
        P = np.vstack([per_level[level] for level in levels])
        if label == Level.L1.value:
            # the global activation, used as is
            pooled = P[0] if settings.method == PoolingMethod.VLAD else pool_level(settings.method, P)
        else:
            pooled = pool_level(settings.method, P, model.level_models.get(label), settings.vlad)

        block = l2_normalize(pooled)
        if not np.all(np.isfinite(block)):
            raise NumericalError(f"block {label}: non-finite values")
        blocks.append(block)
        layout.append(BlockLayout(label, offset, block.shape[0]))
        offset += block.shape[0]
    return MopDescriptor(values=np.concatenate(blocks), block_layout=tuple(layout))


def encode_image(model: MopPipelineModel, source: DescriptorSource, image: ImageRef,
                 strategy: Optional[ScaleStrategy] = None,
                 method: Optional[PoolingMethod] = None) -> MopDescriptor:
    """
    Encode one image into its MOP descriptor.

    Args:
        model: Fitted pipeline
        source: Descriptor source serving every window of the grid
        image: Image reference (id, plus pixels for pixel-based sources)
        strategy: Optional override; VLAD models only fit the strategy they were trained for
        method: Optional override of the pooling method

    Returns:
        MopDescriptor with one unit-norm (or zero) block per group
    """
    settings = model.settings
    if strategy is not None or method is not None:
        override = PipelineSettings(
            method=method or settings.method, strategy=strategy or settings.strategy,
            grid=settings.grid, vlad=settings.vlad, patch_pca_dim=settings.patch_pca_dim,
            codebook_size=settings.codebook_size, pooled_pca_dim=settings.pooled_pca_dim,
            kmeans_max_iters=settings.kmeans_max_iters, kmeans_tol=settings.kmeans_tol,
            seed=settings.seed)
        needed = {label for label, _ in _groups(override) if _uses_models(override, label)}
        if not needed <= set(model.level_models):
            raise ModelMismatchError(
                f"model has no fitted models for {sorted(needed - set(model.level_models))}")
        model = MopPipelineModel(settings=override, descriptor_dim=model.descriptor_dim,
                                 level_models=model.level_models, fingerprint=model.fingerprint)

    if source.dim != model.descriptor_dim:
        raise ModelMismatchError(f"source dim {source.dim} != model descriptor dim {model.descriptor_dim}")
    per_level = collect_level_descriptors(source, image, model.settings.grid, model.settings.strategy.levels)
    return encode_from_descriptors(model, per_level)


def gather_training_descriptors(source: DescriptorSource, images: Sequence[ImageRef],
                                settings: PipelineSettings, threads: int = 1) -> Dict[Level, List[np.ndarray]]:
    """Per-level descriptor matrices of every training image, in image order."""
    levels = settings.strategy.levels

    def collect(image: ImageRef) -> Dict[Level, np.ndarray]:
        return collect_level_descriptors(source, image, settings.grid, levels)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        collected = list(pool.map(collect, images))
    return {level: [item[level] for item in collected] for level in levels}


class MopEncoder:
    """
    Encodes images with a fitted pipeline and a descriptor source.

    Used by the feature extraction command and by the evaluation
    harnesses that need to featurize transformed images or windows.
    """

    def __init__(self, model: MopPipelineModel, source: DescriptorSource):
        """
        Args:
            model: Fitted pipeline
            source: Descriptor source matching the model's descriptor dim
        """
        if source.dim != model.descriptor_dim:
            raise ModelMismatchError(
                f"source dim {source.dim} != model descriptor dim {model.descriptor_dim}")
        self.model = model
        self.source = source

    @property
    def layout(self) -> Tuple[BlockLayout, ...]:
        return plan_layout(self.model.settings, self.model.descriptor_dim, self.model)

    @property
    def dim(self) -> int:
        return sum(block.length for block in self.layout)

    def encode(self, image: ImageRef) -> MopDescriptor:
        return encode_image(self.model, self.source, image)

    def featurize(self, tensor: ImageTensor, image_id: str = "<transient>") -> np.ndarray:
        """Feature vector of a raw normalized-frame image."""
        return self.encode(ImageRef(image_id, tensor)).values

    def encode_many(self, images: Sequence[ImageRef], threads: int = 1) -> np.ndarray:
        """(n, dim) feature matrix, rows in input order."""
        if not images:
            return np.zeros((0, self.dim))
        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            rows = list(pool.map(lambda image: self.encode(image).values, images))
        return np.vstack(rows)


# ============================================================
# Persistence
# ============================================================

def save_pipeline(model: MopPipelineModel, path: Union[str, Path]) -> None:
    """Write the fitted pipeline as a MOPM container."""
    meta = {
        "settings": model.settings.to_dict(),
        "descriptor_dim": model.descriptor_dim,
        "fingerprint": model.fingerprint,
        "groups": sorted(model.level_models),
    }
    sections = []
    for label in sorted(model.level_models):
        models = model.level_models[label]
        sections.extend([(f"{label}/patch_pca", models.patch_pca),
                         (f"{label}/codebook", models.codebook),
                         (f"{label}/pooled_pca", models.pooled_pca)])
    write_model_container(path, meta, sections)


def load_pipeline(path: Union[str, Path], expected_fingerprint: Optional[str] = None) -> MopPipelineModel:
    """
    Read a pipeline written by save_pipeline.

    Raises:
        ModelMismatchError: if expected_fingerprint is given and differs
    """
    meta, sections = read_model_container(path)
    if expected_fingerprint is not None and meta.get("fingerprint") != expected_fingerprint:
        raise ModelMismatchError(f"{path} was fitted with a different configuration "
                                 f"(fingerprint {meta.get('fingerprint', '?')[:12]} != {expected_fingerprint[:12]})")
    level_models = {
        label: LevelModels(patch_pca=sections[f"{label}/patch_pca"],
                           codebook=sections[f"{label}/codebook"],
                           pooled_pca=sections[f"{label}/pooled_pca"])
        for label in meta["groups"]
    }
    return MopPipelineModel(settings=PipelineSettings.from_dict(meta["settings"]),
                            descriptor_dim=int(meta["descriptor_dim"]),
                            level_models=level_models, fingerprint=meta["fingerprint"])


def features_sidecar_path(path: Union[str, Path]) -> Path:
    return Path(path).with_suffix(".json")


def save_features(path: Union[str, Path], features: np.ndarray, image_ids: Sequence[str],
                  layout: Sequence[BlockLayout], model: MopPipelineModel) -> None:
    """Write encoded features (MOPD) and the JSON sidecar next to them."""
    features = np.asarray(features)
    if features.shape[0] != len(image_ids):
        raise InvalidArgumentError(f"{features.shape[0]} feature rows for {len(image_ids)} image ids")
    write_matrix(path, features)
    settings = model.settings
    write_json(features_sidecar_path(path), {
        "image_ids": list(image_ids),
        "block_layout": [{"label": b.label, "offset": b.offset, "length": b.length} for b in layout],
        "fingerprint": model.fingerprint,
        "method": settings.method.value,
        "strategy": settings.strategy.kind.value,
        "levels": [level.value for level in settings.strategy.levels],
        "dim": int(features.shape[1]) if features.ndim == 2 else 0,
    })


def load_features(path: Union[str, Path],
                  expected_fingerprint: Optional[str] = None) -> Tuple[np.ndarray, Dict[str, Any]]:
    """
    Read features and their sidecar.

    Returns:
        (float64 feature matrix, sidecar dict)
    """
    sidecar = read_json(features_sidecar_path(path))
    if expected_fingerprint is not None and sidecar.get("fingerprint") != expected_fingerprint:
        raise ModelMismatchError(f"{path} was encoded with a different configuration")
    features = read_matrix(path).astype(np.float64)
    if features.shape[0] != len(sidecar.get("image_ids", [])):
        raise InvalidArgumentError(f"{path}: {features.shape[0]} rows but "
                                   f"{len(sidecar.get('image_ids', []))} image ids in sidecar")
    return features, sidecar
