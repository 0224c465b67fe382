#!/usr/bin/env python3
"""
MOP Toolkit - Command Line
==========================
Batch front end of the multi-scale orderless pooling pipeline.

    python app.py config --print-defaults > run.json
    python app.py fit --config run.json
    python app.py encode --config run.json
    python app.py classify --config run.json
    python app.py retrieve | invariance | windows --config run.json

Exit codes: 0 success, 2 invalid input, 3 model/config mismatch,
4 numerical failure.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd
from dotenv import load_dotenv

from modules.evaluation import (best_window, classify, invariance_sweep, retrieval_table,
                                split_ids, ten_crop_accuracy)
from modules.pipeline import (MopEncoder, fit_pipeline, gather_training_descriptors,
                              load_features, load_pipeline, plan_layout, pre_pca_vlad_dim,
                              save_features, save_pipeline)
from src.analytics.transforms import normalize_frame
from src.config import CONFIG_KEYS, RunConfig, load_run_config, with_overrides
from src.data.formats import read_json
from src.data.images import list_images, load_image
from src.utils import InvalidArgumentError, MopError, file_sha256, setup_logging
from utils.descriptors import ActivationStore, DescriptorSource, ImageRef, ToyEmbedder
from utils.report_generator import ReportGenerator

logger = logging.getLogger(__name__)

MODEL_FILE = "pipeline.mopm"
FIT_REPORT_FILE = "fit_report.json"
FEATURES_FILE = "features.mopd"


# ============================================================
# Inputs
# ============================================================

def build_source(cfg: RunConfig) -> Tuple[DescriptorSource, List[ImageRef]]:
    """
    Descriptor source and the run's images, in manifest / file-name order.

    Toy sources load every image of images_dir resampled to the frame.
    """
    cfg.validate()
    if cfg.source == "toy":
        refs = [ImageRef(image_id, normalize_frame(load_image(path), cfg.grid.frame))
                for image_id, path in list_images(cfg.images_dir)]
        source: DescriptorSource = ToyEmbedder(cfg.toy)
        where = cfg.images_dir
    else:
        store = ActivationStore.load(cfg.activations_path, cfg.manifest_path)
        refs = [ImageRef(image_id) for image_id in store.image_ids()]
        source = store
        where = cfg.manifest_path
    if not refs:
        raise InvalidArgumentError(f"no images found in {where}")
    logger.info(f"{len(refs)} images from {where} ({cfg.source} source, dim {source.dim})")
    return source, refs


def _require(cfg: RunConfig, key: str) -> str:
    value = getattr(cfg, key)
    if value is None:
        raise InvalidArgumentError(f"this command needs {key} in the config")
    return value


def _labels_and_split(cfg: RunConfig, image_ids: Sequence[str]) -> Tuple[Dict[str, str], List[str], List[str]]:
    labels = {str(k): str(v) for k, v in read_json(_require(cfg, "labels_path")).items()}
    split = read_json(cfg.split_path) if cfg.split_path else None
    train, test = split_ids(labels, list(image_ids), split)
    return labels, train, test


def _fit_ids(cfg: RunConfig, refs: Sequence[ImageRef]) -> List[ImageRef]:
    """Training images of the pipeline: the split's train part when there is one."""
    if cfg.split_path is None:
        return list(refs)
    train = set(read_json(cfg.split_path).get("train", ()))
    chosen = [ref for ref in refs if ref.image_id in train]
    if not chosen:
        raise InvalidArgumentError(f"split {cfg.split_path} names no training image")
    return chosen


def _model_path(cfg: RunConfig, model: Optional[str]) -> Path:
    return Path(model) if model else cfg.resolved_out_dir / MODEL_FILE


def _features_path(cfg: RunConfig, features: Optional[str]) -> Path:
    return Path(features) if features else cfg.resolved_out_dir / FEATURES_FILE


def _pixel_refs(cfg: RunConfig, refs: Sequence[ImageRef], what: str) -> None:
    if cfg.source != "toy" or any(ref.tensor is None for ref in refs):
        raise InvalidArgumentError(f"{what} re-encodes image pixels and needs source 'toy' with images_dir")


def _row_key(sidecar: Dict) -> Dict[str, object]:
    return {"method": sidecar["method"], "strategy": sidecar["strategy"],
            "levels": "+".join(f"level{lv[1:]}" for lv in sidecar["levels"])}


# ============================================================
# Commands
# ============================================================

def cmd_fit(cfg: RunConfig) -> str:
    source, refs = build_source(cfg)
    settings = cfg.pipeline_settings()
    training_refs = _fit_ids(cfg, refs)
    training = gather_training_descriptors(source, training_refs, settings, cfg.resolved_threads)
    model = fit_pipeline(training, settings, fingerprint=cfg.fingerprint())

    out = ReportGenerator(cfg.resolved_out_dir)
    model_path = out.path(MODEL_FILE)
    save_pipeline(model, model_path)

    layout = plan_layout(settings, model.descriptor_dim, model)
    out.write_summary(FIT_REPORT_FILE, {
        "fingerprint": model.fingerprint,
        "seed": cfg.seed,
        "projection_seed": cfg.toy.projection_seed if cfg.source == "toy" else None,
        "training_images": len(training_refs),
        "descriptor_dim": model.descriptor_dim,
        "pre_pca_vlad_dim": pre_pca_vlad_dim(settings, model.descriptor_dim),
        "groups": {
            label: {
                "patch_pca_dim": m.patch_pca.d_out,
                "codebook_size": m.codebook.k,
                "kmeans_iterations": len(m.codebook.inertia_history),
                "kmeans_inertia": m.codebook.inertia,
                "pooled_pca_dim": m.pooled_pca.d_out,
            }
            for label, m in sorted(model.level_models.items())
        },
        "block_layout": [{"label": b.label, "offset": b.offset, "length": b.length} for b in layout],
        "descriptor_length": sum(b.length for b in layout),
        "model_sha256": file_sha256(str(model_path)),
    })
    return (f"fit: {len(training_refs)} images, descriptor length "
            f"{sum(b.length for b in layout)} -> {model_path}")


def cmd_encode(cfg: RunConfig, model_path: Optional[str] = None, features_path: Optional[str] = None) -> str:
    model = load_pipeline(_model_path(cfg, model_path), expected_fingerprint=cfg.fingerprint())
    source, refs = build_source(cfg)
    encoder = MopEncoder(model, source)
    features = encoder.encode_many(refs, cfg.resolved_threads)

    path = _features_path(cfg, features_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_features(path, features, [ref.image_id for ref in refs], encoder.layout, model)
    return f"encode: {features.shape[0]} x {features.shape[1]} -> {path}"


def cmd_classify(cfg: RunConfig, features_path: Optional[str] = None, model_path: Optional[str] = None) -> str:
    features, sidecar = load_features(_features_path(cfg, features_path), cfg.fingerprint())
    ids = sidecar["image_ids"]
    labels, train, test = _labels_and_split(cfg, ids)
    row = {i: n for n, i in enumerate(ids)}

    svm, accuracy = classify(features[[row[i] for i in train]], [labels[i] for i in train],
                             features[[row[i] for i in test]], [labels[i] for i in test], cfg.sgd_config)
    base = {**_row_key(sidecar), "dim": features.shape[1], "train_images": len(train),
            "test_images": len(test)}
    rows = [{**base, "protocol": "global", "accuracy": accuracy}]

    if cfg.ten_crop.enabled:
        source, refs = build_source(cfg)
        _pixel_refs(cfg, refs, "ten-crop evaluation")
        encoder = MopEncoder(load_pipeline(_model_path(cfg, model_path), cfg.fingerprint()), source)
        by_id = {ref.image_id: ref for ref in refs}
        crop_accuracy = ten_crop_accuracy(svm, encoder, [by_id[i].tensor for i in test],
                                          [labels[i] for i in test], cfg.ten_crop.crop_side)
        rows.append({**base, "protocol": "ten_crop", "accuracy": crop_accuracy})

    table = pd.DataFrame(rows)
    ReportGenerator(cfg.resolved_out_dir).write_table("classification.csv", table)
    return "classify: " + ", ".join(f"{r['protocol']} accuracy {r['accuracy']:.4f}" for r in rows)


def cmd_retrieve(cfg: RunConfig, features_path: Optional[str] = None) -> str:
    features, sidecar = load_features(_features_path(cfg, features_path), cfg.fingerprint())
    relevance = {str(q): set(map(str, items))
                 for q, items in read_json(_require(cfg, "relevance_path")).items()}
    table = retrieval_table(features, sidecar["image_ids"], relevance, cfg.compression_dims, cfg.whiten)
    for key, value in _row_key(sidecar).items():
        table.insert(0, key, value)
    ReportGenerator(cfg.resolved_out_dir).write_table("retrieval.csv", table)
    return "retrieve: " + ", ".join(f"{r.representation}/{r.dim} mAP {r.mAP:.4f}"
                                    for r in table.itertuples(index=False))


def _trained_study(cfg: RunConfig, features_path: Optional[str], model_path: Optional[str], what: str):
    """Classifier on the training split plus an encoder for re-encoding test pixels."""
    features, sidecar = load_features(_features_path(cfg, features_path), cfg.fingerprint())
    ids = sidecar["image_ids"]
    labels, train, test = _labels_and_split(cfg, ids)
    row = {i: n for n, i in enumerate(ids)}
    svm, baseline = classify(features[[row[i] for i in train]], [labels[i] for i in train],
                             features[[row[i] for i in test]], [labels[i] for i in test], cfg.sgd_config)

    source, refs = build_source(cfg)
    _pixel_refs(cfg, refs, what)
    encoder = MopEncoder(load_pipeline(_model_path(cfg, model_path), cfg.fingerprint()), source)
    by_id = {ref.image_id: ref for ref in refs}
    return svm, encoder, [by_id[i] for i in test], [labels[i] for i in test], baseline


def cmd_invariance(cfg: RunConfig, features_path: Optional[str] = None, model_path: Optional[str] = None) -> str:
    svm, encoder, test_refs, test_labels, baseline = _trained_study(cfg, features_path, model_path, "invariance")
    table = invariance_sweep(svm, encoder, [ref.tensor for ref in test_refs], test_labels,
                             cfg.invariance.to_sweep(), cfg.resolved_threads)
    ReportGenerator(cfg.resolved_out_dir).write_table("invariance.csv", table)
    return f"invariance: {len(table)} cells, baseline accuracy {baseline:.4f}"


def cmd_windows(cfg: RunConfig, features_path: Optional[str] = None, model_path: Optional[str] = None) -> str:
    svm, encoder, test_refs, test_labels, _ = _trained_study(cfg, features_path, model_path, "window search")
    rows = []
    for ref, label in zip(test_refs, test_labels):
        spec, score = best_window(svm, encoder, ref.tensor, label, cfg.windows.sides, cfg.windows.stride)
        rows.append({"image_id": ref.image_id, "target_class": label, "x": spec.x, "y": spec.y,
                     "side": spec.side, "score": score})
    table = pd.DataFrame(rows, columns=["image_id", "target_class", "x", "y", "side", "score"])
    ReportGenerator(cfg.resolved_out_dir).write_table("windows.csv", table)
    return f"windows: best window for {len(table)} test images"


# ============================================================
# Argument parsing
# ============================================================

def _epilog() -> str:
    width = max(len(k) for k in CONFIG_KEYS)
    lines = ["config keys (JSON; nested keys shown dotted):"]
    lines.extend(f"  {key.ljust(width)}  {text}" for key, text in CONFIG_KEYS.items())
    lines.append("")
    lines.append("exit codes: 0 success, 2 invalid input, 3 model/config mismatch, 4 numerical failure")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="RunConfig JSON file")
    common.add_argument("--seed", type=int, help="override the config seed (u64)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, help="worker threads")
    common.add_argument("--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(
        prog="app.py", description="Multi-scale orderless pooling toolkit",
        epilog=_epilog(), formatter_class=argparse.RawDescriptionHelpFormatter)
    commands = parser.add_subparsers(dest="command", required=True)

    def command(name: str, help_text: str) -> argparse.ArgumentParser:
        return commands.add_parser(name, parents=[common], help=help_text, epilog=_epilog(),
                                   formatter_class=argparse.RawDescriptionHelpFormatter)

    command("fit", "fit patch PCA, codebooks and pooled PCA; writes pipeline.mopm + fit_report.json")
    sub = command("encode", "encode every image; writes features.mopd + features.json")
    sub.add_argument("--model", help="pipeline file (default <out>/pipeline.mopm)")
    sub.add_argument("--features", help="feature file (default <out>/features.mopd)")
    for name, help_text in (("classify", "one-vs-all SVM accuracy; writes classification.csv"),
                            ("invariance", "accuracy under test-time transforms; writes invariance.csv"),
                            ("windows", "best-scoring window per test image; writes windows.csv")):
        sub = command(name, help_text)
        sub.add_argument("--model", help="pipeline file (default <out>/pipeline.mopm)")
        sub.add_argument("--features", help="feature file (default <out>/features.mopd)")
    sub = command("retrieve", "Euclidean retrieval mAP (+ PCA compression); writes retrieval.csv")
    sub.add_argument("--features", help="feature file (default <out>/features.mopd)")
    sub = command("config", "print the default RunConfig JSON")
    sub.add_argument("--print-defaults", action="store_true", help="write the defaults to stdout")
    return parser


def run(args: argparse.Namespace) -> str:
    if args.command == "config":
        return RunConfig().to_json().rstrip("\n")

    cfg = with_overrides(load_run_config(args.config), seed=args.seed, out_dir=args.out, threads=args.threads)
    if args.command == "fit":
        return cmd_fit(cfg)
    if args.command == "encode":
        return cmd_encode(cfg, args.model, args.features)
    if args.command == "classify":
        return cmd_classify(cfg, args.features, args.model)
    if args.command == "retrieve":
        return cmd_retrieve(cfg, args.features)
    if args.command == "invariance":
        return cmd_invariance(cfg, args.features, args.model)
    return cmd_windows(cfg, args.features, args.model)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse arguments, run one command and map errors to exit codes.

    Returns:
        Process exit code
    """
    args = build_parser().parse_args(argv)
    load_dotenv()
    setup_logging("DEBUG" if getattr(args, "verbose", False) else None)
    try:
        print(run(args))
    except MopError as e:
        logger.debug("command failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
