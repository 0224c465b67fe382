"""
Run Configuration
=================
One JSON document describing a complete run: inputs, descriptor source,
grid, VLAD, pooling, dimensions, classifier and study settings.

Unknown keys are rejected at every level. Output directory, thread
count and log level fall back to MOP_OUT_DIR, MOP_THREADS and
MOP_LOG_LEVEL (read from the environment or a .env file).
"""

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from dotenv import load_dotenv

from modules.pipeline import PipelineSettings, PoolingMethod, ScaleStrategy, StrategyKind
from src.analytics.encoding import VladConfig
from src.analytics.patchgrid import ALL_LEVELS, GridConfig, Level
from src.analytics.svm import SgdConfig
from src.analytics.transforms import TransformKind, TransformSpec
from src.utils import InvalidArgumentError, config_fingerprint
from utils.descriptors import ToyEmbedderConfig

SOURCES = ("toy", "store")
DEFAULT_OUT_DIR = "out"

# Documented in `app.py --help`
CONFIG_KEYS: Dict[str, str] = {
    "source": "descriptor source: 'toy' (embed image pixels) or 'store' (precomputed activations)",
    "images_dir": "directory of input images (required for source 'toy' and pixel studies)",
    "activations_path": "MOPD activation matrix (source 'store')",
    "manifest_path": "activation manifest JSON (source 'store')",
    "labels_path": "JSON {image_id: class}",
    "split_path": "JSON {\"train\": [ids], \"test\": [ids]}; default alternates images per class",
    "relevance_path": "JSON {query_id: [relevant ids]}",
    "out_dir": "output directory (env MOP_OUT_DIR, default 'out')",
    "threads": "worker threads for descriptor extraction (env MOP_THREADS, default 1)",
    "seed": "seed for k-means and SGD shuffling",
    "toy.thumb_side": "toy embedder thumbnail side (16)",
    "toy.out_dim": "toy embedder output dim (64)",
    "toy.projection_seed": "toy embedder projection seed (0)",
    "grid.frame": "normalized frame side (256)",
    "grid.level_sides": "window side per level ([256, 128, 64])",
    "grid.stride": "grid stride (32)",
    "vlad.r": "nearest centers per descriptor (5)",
    "vlad.sigma": "soft-assignment kernel std (10.0)",
    "vlad.power_alpha": "power-normalization exponent (0.5)",
    "pooling": "'vlad', 'average' or 'max'",
    "strategy": "'concatenation' or 'multiscale'",
    "levels": "levels to pool (['L1', 'L2', 'L3'])",
    "patch_pca_dim": "patch PCA output dim (500)",
    "codebook_size": "k-means centers (100)",
    "pooled_pca_dim": "pooled-VLAD PCA output dim (4096)",
    "kmeans_max_iters": "k-means iteration cap (100)",
    "kmeans_tol": "k-means relative inertia tolerance (1e-6)",
    "compression_dims": "retrieval PCA compression dims ([512, 2048])",
    "whiten": "whiten retrieval compression (true)",
    "sgd.lambda": "SVM regularization (1e-5)",
    "sgd.eta": "SVM learning rate (0.2)",
    "sgd.epochs": "SVM epochs (100)",
    "invariance.scales": "scale ratios swept",
    "invariance.translations": "horizontal and vertical shifts swept (px)",
    "invariance.rotations": "rotation angles swept (degrees)",
    "invariance.flip": "include the flipped condition",
    "windows.sides": "best-window sliding window sides ([224, 192, 160, 128])",
    "windows.stride": "best-window stride (16)",
    "ten_crop.enabled": "also report ten-crop accuracy in classify",
    "ten_crop.crop_side": "ten-crop crop side (224)",
}


@dataclass(frozen=True)
class InvarianceConfig:
    scales: Tuple[float, ...] = (1.0, 1.2, 1.4, 1.6, 1.8, 2.0)
    translations: Tuple[float, ...] = (-38.0, -30.0, -20.0, -10.0, 0.0, 10.0, 20.0, 30.0, 38.0)
    rotations: Tuple[float, ...] = (-20.0, -15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0)
    flip: bool = True

    def __post_init__(self):
        for name in ("scales", "translations", "rotations"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        # validates every cell up front
        self.to_sweep()

    def to_sweep(self) -> List[TransformSpec]:
        """Scale, horizontal then vertical translation, rotation, flip."""
        sweep = [TransformSpec(TransformKind.SCALE, s) for s in self.scales]
        for kind in (TransformKind.TRANSLATE_H, TransformKind.TRANSLATE_V):
            sweep.extend(TransformSpec(kind, t) for t in self.translations)
        sweep.extend(TransformSpec(TransformKind.ROTATE, r) for r in self.rotations)
        if self.flip:
            sweep.append(TransformSpec(TransformKind.FLIP))
        return sweep

    def to_dict(self) -> Dict[str, Any]:
        return {"scales": list(self.scales), "translations": list(self.translations),
                "rotations": list(self.rotations), "flip": self.flip}


@dataclass(frozen=True)
class WindowConfig:
    sides: Tuple[int, ...] = (224, 192, 160, 128)
    stride: int = 16

    def __post_init__(self):
        object.__setattr__(self, "sides", tuple(int(s) for s in self.sides))
        if not self.sides or self.stride < 1:
            raise InvalidArgumentError(f"windows need sides and a stride >= 1, got {self.to_dict()}")

    def to_dict(self) -> Dict[str, Any]:
        return {"sides": list(self.sides), "stride": self.stride}


@dataclass(frozen=True)
class TenCropConfig:
    enabled: bool = False
    crop_side: int = 224

    def to_dict(self) -> Dict[str, Any]:
        return {"enabled": self.enabled, "crop_side": self.crop_side}


@dataclass(frozen=True)
class RunConfig:
    source: str = "toy"
    images_dir: Optional[str] = None
    activations_path: Optional[str] = None
    manifest_path: Optional[str] = None
    labels_path: Optional[str] = None
    split_path: Optional[str] = None
    relevance_path: Optional[str] = None
    out_dir: Optional[str] = None
    threads: Optional[int] = None
    seed: int = 0
    toy: ToyEmbedderConfig = field(default_factory=ToyEmbedderConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    vlad: VladConfig = field(default_factory=VladConfig)
    pooling: str = "vlad"
    strategy: str = "concatenation"
    levels: Tuple[str, ...] = tuple(level.value for level in ALL_LEVELS)
    patch_pca_dim: int = 500
    codebook_size: int = 100
    pooled_pca_dim: int = 4096
    kmeans_max_iters: int = 100
    kmeans_tol: float = 1e-6
    compression_dims: Tuple[int, ...] = (512, 2048)
    whiten: bool = True
    sgd: SgdConfig = field(default_factory=SgdConfig)
    invariance: InvarianceConfig = field(default_factory=InvarianceConfig)
    windows: WindowConfig = field(default_factory=WindowConfig)
    ten_crop: TenCropConfig = field(default_factory=TenCropConfig)

    def __post_init__(self):
        if self.source not in SOURCES:
            raise InvalidArgumentError(f"source must be one of {SOURCES}, got {self.source!r}")
        _check_choice("pooling", self.pooling, [m.value for m in PoolingMethod])
        _check_choice("strategy", self.strategy, [s.value for s in StrategyKind])
        object.__setattr__(self, "levels", tuple(Level.parse(level).value for level in self.levels))
        object.__setattr__(self, "compression_dims", tuple(int(d) for d in self.compression_dims))
        for name in ("patch_pca_dim", "codebook_size", "pooled_pca_dim", "kmeans_max_iters"):
            if getattr(self, name) < 1:
                raise InvalidArgumentError(f"{name} must be positive, got {getattr(self, name)}")
        if any(d < 1 for d in self.compression_dims):
            raise InvalidArgumentError(f"compression_dims must be positive, got {list(self.compression_dims)}")
        if self.threads is not None and self.threads < 1:
            raise InvalidArgumentError(f"threads must be >= 1, got {self.threads}")
        if not 0 <= self.seed < 2 ** 64:
            raise InvalidArgumentError(f"seed must be a u64, got {self.seed}")

    # ---------------------------------------------------------- derived views

    @property
    def resolved_out_dir(self) -> Path:
        return Path(self.out_dir or os.environ.get("MOP_OUT_DIR") or DEFAULT_OUT_DIR)

    @property
    def resolved_threads(self) -> int:
        if self.threads is not None:
            return self.threads
        try:
            return max(1, int(os.environ.get("MOP_THREADS", "1")))
        except ValueError:
            raise InvalidArgumentError(f"MOP_THREADS must be an integer, got {os.environ['MOP_THREADS']!r}")

    @property
    def sgd_config(self) -> SgdConfig:
        """SGD settings seeded with the run seed."""
        return replace(self.sgd, seed=self.seed)

    def pipeline_settings(self) -> PipelineSettings:
        return PipelineSettings(
            method=PoolingMethod(self.pooling),
            strategy=ScaleStrategy(StrategyKind(self.strategy), tuple(self.levels)),
            grid=self.grid, vlad=self.vlad, patch_pca_dim=self.patch_pca_dim,
            codebook_size=self.codebook_size, pooled_pca_dim=self.pooled_pca_dim,
            kmeans_max_iters=self.kmeans_max_iters, kmeans_tol=self.kmeans_tol, seed=self.seed)

    def model_hyperparameters(self) -> Dict[str, Any]:
        """Everything that changes fitted models or encoded features."""
        return {
            "source": self.source,
            "toy": self.toy.to_dict() if self.source == "toy" else None,
            "pipeline": self.pipeline_settings().to_dict(),
        }

    def fingerprint(self) -> str:
        return config_fingerprint(self.model_hyperparameters())

    # ---------------------------------------------------------- (de)serialization

    def to_dict(self) -> Dict[str, Any]:
        return {
            "source": self.source,
            "images_dir": self.images_dir,
            "activations_path": self.activations_path,
            "manifest_path": self.manifest_path,
            "labels_path": self.labels_path,
            "split_path": self.split_path,
            "relevance_path": self.relevance_path,
            "out_dir": self.out_dir,
            "threads": self.threads,
            "seed": self.seed,
            "toy": self.toy.to_dict(),
            "grid": self.grid.to_dict(),
            "vlad": self.vlad.to_dict(),
            "pooling": self.pooling,
            "strategy": self.strategy,
            "levels": list(self.levels),
            "patch_pca_dim": self.patch_pca_dim,
            "codebook_size": self.codebook_size,
            "pooled_pca_dim": self.pooled_pca_dim,
            "kmeans_max_iters": self.kmeans_max_iters,
            "kmeans_tol": self.kmeans_tol,
            "compression_dims": list(self.compression_dims),
            "whiten": self.whiten,
            "sgd": self.sgd.to_dict(),
            "invariance": self.invariance.to_dict(),
            "windows": self.windows.to_dict(),
            "ten_crop": self.ten_crop.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "RunConfig":
        """
        Build a config from its JSON form; missing keys take defaults.

        Raises:
            InvalidArgumentError: on unknown keys or invalid values
        """
        _check_keys(payload, [k for k in CONFIG_KEYS if "." not in k], "")
        kwargs = {k: v for k, v in payload.items() if k not in _SECTIONS}
        try:
            for name, build in _SECTIONS.items():
                if name in payload:
                    section = payload[name]
                    if not isinstance(section, dict):
                        raise InvalidArgumentError(f"config key {name!r} must be an object")
                    _check_keys(section, _section_keys(name), f"{name}.")
                    kwargs[name] = build(section)
            return cls(**kwargs)
        except (TypeError, ValueError) as e:
            if isinstance(e, InvalidArgumentError):
                raise
            raise InvalidArgumentError(f"invalid config value: {e}") from e

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as e:
            raise InvalidArgumentError(f"config is not valid JSON ({e})") from e
        if not isinstance(payload, dict):
            raise InvalidArgumentError("config must be a JSON object")
        return cls.from_dict(payload)

    def validate(self) -> None:
        """Check that every referenced input exists and the source has its inputs."""
        for key in ("images_dir", "activations_path", "manifest_path", "labels_path",
                    "split_path", "relevance_path"):
            value = getattr(self, key)
            if value is not None and not Path(value).exists():
                raise InvalidArgumentError(f"{key} not found: {value}")
        if self.source == "toy" and self.images_dir is None:
            raise InvalidArgumentError("source 'toy' needs images_dir")
        if self.source == "store" and (self.activations_path is None or self.manifest_path is None):
            raise InvalidArgumentError("source 'store' needs activations_path and manifest_path")


def _check_choice(key: str, value: Any, allowed: List[str]) -> None:
    if value not in allowed:
        raise InvalidArgumentError(f"{key} must be one of {allowed}, got {value!r}")


def _section_keys(name: str) -> List[str]:
    prefix = f"{name}."
    return [k[len(prefix):] for k in CONFIG_KEYS if k.startswith(prefix)]


def _check_keys(payload: Dict[str, Any], allowed: List[str], prefix: str) -> None:
    unknown = sorted(set(payload) - set(allowed))
    if unknown:
        raise InvalidArgumentError(f"unknown config key(s): {', '.join(prefix + k for k in unknown)}")


_SECTIONS = {
    "toy": lambda d: ToyEmbedderConfig(**d),
    "grid": lambda d: GridConfig(**d),
    "vlad": lambda d: VladConfig(**d),
    "sgd": lambda d: SgdConfig(**{("lambda_" if k == "lambda" else k): v for k, v in d.items()}),
    "invariance": lambda d: InvarianceConfig(**d),
    "windows": lambda d: WindowConfig(**d),
    "ten_crop": lambda d: TenCropConfig(**d),
}


def load_run_config(path: Optional[str] = None) -> RunConfig:
    """
    Read a RunConfig file (defaults when path is None) after loading .env.

    Raises:
        InvalidArgumentError: naming the path when it does not exist
    """
    load_dotenv()
    if path is None:
        return RunConfig()
    config_path = Path(path)
    if not config_path.exists():
        raise InvalidArgumentError(f"config file not found: {config_path}")
    return RunConfig.from_json(config_path.read_text(encoding="utf-8"))


def with_overrides(cfg: RunConfig, seed: Optional[int] = None, out_dir: Optional[str] = None,
                   threads: Optional[int] = None) -> RunConfig:
    """Apply command-line flags on top of the file config."""
    changes: Dict[str, Any] = {}
    if seed is not None:
        if not 0 <= seed < 2 ** 64:
            raise InvalidArgumentError(f"--seed must be a u64, got {seed}")
        changes["seed"] = seed
    if out_dir is not None:
        changes["out_dir"] = out_dir
    if threads is not None:
        changes["threads"] = threads
    return replace(cfg, **changes) if changes else cfg
