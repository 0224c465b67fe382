"""
Desk Study Module
=================
End-to-end study on the synthetic texture dataset with the toy embedder:
fit, encode and classify the full three-level MOP descriptor against the
level-1 (global window) baseline, on a test split whose motifs are
re-sized and re-positioned, then sweep test-time transforms for both.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import pandas as pd

from modules.evaluation import (AblationVariant, ablation_table, classify,
                                invariance_sweep)
from modules.pipeline import (MopEncoder, PipelineSettings, PoolingMethod,
                              ScaleStrategy, StrategyKind, fit_pipeline,
                              gather_training_descriptors)
from src.analytics.encoding import VladConfig
from src.analytics.patchgrid import ALL_LEVELS, Level
from src.analytics.svm import SgdConfig
from src.analytics.transforms import TransformKind, TransformSpec
from src.data.synthetic import SyntheticDataset, make_texture_dataset
from utils.descriptors import ImageRef, ToyEmbedder, ToyEmbedderConfig
from utils.report_generator import ReportGenerator

logger = logging.getLogger(__name__)

MOP_VARIANT = AblationVariant(PoolingMethod.VLAD, ScaleStrategy(StrategyKind.CONCATENATION, ALL_LEVELS))
GLOBAL_VARIANT = AblationVariant(PoolingMethod.VLAD, ScaleStrategy(StrategyKind.CONCATENATION, (Level.L1,)))


@dataclass(frozen=True)
class DeskStudyConfig:
    """Desk-scale dimensions: small enough to run in seconds on a laptop."""

    seed: int = 0
    per_class: int = 40
    test_motif_sides: Tuple[int, ...] = (128, 160, 192)
    toy: ToyEmbedderConfig = field(default_factory=lambda: ToyEmbedderConfig(thumb_side=16, out_dim=32))
    patch_pca_dim: int = 16
    codebook_size: int = 16
    pooled_pca_dim: int = 32
    vlad: VladConfig = field(default_factory=VladConfig)
    sgd: SgdConfig = field(default_factory=SgdConfig)
    sweep: Tuple[TransformSpec, ...] = (
        TransformSpec(TransformKind.SCALE, 1.0),
        TransformSpec(TransformKind.SCALE, 1.4),
        TransformSpec(TransformKind.TRANSLATE_H, -20.0),
        TransformSpec(TransformKind.TRANSLATE_H, 20.0),
        TransformSpec(TransformKind.ROTATE, 10.0),
        TransformSpec(TransformKind.FLIP),
    )
    threads: int = 1

    def settings(self, variant: AblationVariant) -> PipelineSettings:
        return PipelineSettings(method=variant.method, strategy=variant.strategy, vlad=self.vlad,
                                patch_pca_dim=self.patch_pca_dim, codebook_size=self.codebook_size,
                                pooled_pca_dim=self.pooled_pca_dim, seed=self.seed)


def _refs(dataset: SyntheticDataset, ids: Sequence[str]):
    return [ImageRef(i, dataset.images[i]) for i in ids]


def run_desk_study(cfg: DeskStudyConfig = DeskStudyConfig(),
                   out_dir: Optional[str] = None,
                   with_invariance: bool = True) -> Dict[str, pd.DataFrame]:
    """
    Run the study.

    Args:
        cfg: Study configuration
        out_dir: When given, write desk_accuracy.csv, desk_invariance.csv and desk_report.txt
        with_invariance: Also sweep test-time transforms

    Returns:
        {"accuracy": table, "invariance": table (empty when skipped)}
    """
    dataset = make_texture_dataset(per_class=cfg.per_class, seed=cfg.seed,
                                   test_motif_sides=cfg.test_motif_sides)
    source = ToyEmbedder(cfg.toy)
    train, test = _refs(dataset, dataset.train_ids), _refs(dataset, dataset.test_ids)
    train_labels, test_labels = dataset.split_labels("train"), dataset.split_labels("test")
    logger.info(f"Desk study: {len(train)} train / {len(test)} test images, seed {cfg.seed}")

    sgd = SgdConfig(lambda_=cfg.sgd.lambda_, eta=cfg.sgd.eta, epochs=cfg.sgd.epochs, seed=cfg.seed)
    accuracy = ablation_table(source, cfg.settings(MOP_VARIANT), train, train_labels, test, test_labels,
                              [GLOBAL_VARIANT, MOP_VARIANT], sgd, cfg.threads)

    curves = []
    if with_invariance:
        for variant in (GLOBAL_VARIANT, MOP_VARIANT):
            settings = cfg.settings(variant)
            model = fit_pipeline(gather_training_descriptors(source, train, settings, cfg.threads), settings)
            encoder = MopEncoder(model, source)
            svm, _ = classify(encoder.encode_many(train, cfg.threads), train_labels,
                              encoder.encode_many(test, cfg.threads), test_labels, sgd)
            curve = invariance_sweep(svm, encoder, [ref.tensor for ref in test], test_labels,
                                     cfg.sweep, cfg.threads)
            curve.insert(0, "levels", variant.strategy.label)
            curves.append(curve)
    invariance = pd.concat(curves, ignore_index=True) if curves else pd.DataFrame()

    if out_dir is not None:
        reports = ReportGenerator(out_dir)
        reports.write_table("desk_accuracy.csv", accuracy)
        sections = [("accuracy on the re-sized test split", accuracy)]
        if with_invariance:
            reports.write_table("desk_invariance.csv", invariance)
            sections.append(("invariance", invariance))
        reports.write_text_report("desk_report.txt", "MOP DESK STUDY", sections,
                                  notes=[f"seed {cfg.seed}, {cfg.per_class} images per class"])

    return {"accuracy": accuracy, "invariance": invariance}
