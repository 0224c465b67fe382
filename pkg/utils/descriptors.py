"""
Descriptor Sources
==================
Backends that map (image, patch geometry) to a fixed-length descriptor.

- ActivationStore: precomputed activations (e.g. 4096-d post-ReLU CNN
  features from any external tool) read from a MOPD matrix + manifest.
- ToyEmbedder: deterministic random-projection embedding of a grayscale
  thumbnail, so the whole pipeline runs without a neural network.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.analytics.patchgrid import Level, PatchSpec
from src.analytics.transforms import crop, resize_bilinear
from src.data.formats import (MANIFEST_COLUMNS, read_manifest, read_matrix,
                              write_manifest, write_matrix)
from src.data.images import ImageTensor, to_grayscale
from src.utils import FormatError, InvalidArgumentError, NotFoundError

logger = logging.getLogger(__name__)

StoreKey = Tuple[str, str, int, int, int]


@dataclass(frozen=True)
class ImageRef:
    """An image as seen by a descriptor source: its id and, when available, its pixels."""

    image_id: str
    tensor: Optional[ImageTensor] = None


class DescriptorSource(ABC):
    """
    Anything that yields one descriptor per (image, PatchSpec).

    The dimension is fixed for the lifetime of the source.
    """

    @property
    @abstractmethod
    def dim(self) -> int:
        ...

    @abstractmethod
    def descriptor_for(self, image: ImageRef, spec: PatchSpec) -> np.ndarray:
        ...

    def descriptors_for(self, image: ImageRef, specs: Sequence[PatchSpec]) -> np.ndarray:
        """Stack the descriptors of several windows into an (n, dim) float64 matrix."""
        if not specs:
            return np.zeros((0, self.dim))
        return np.vstack([self.descriptor_for(image, spec) for spec in specs]).astype(np.float64)


# ============================================================
# Toy embedder
# ============================================================

@dataclass(frozen=True)
class ToyEmbedderConfig:
    thumb_side: int = 16
    out_dim: int = 64
    projection_seed: int = 0

    def __post_init__(self):
        if self.out_dim < 1:
            raise InvalidArgumentError(f"toy out_dim must be >= 1, got {self.out_dim}")
        if self.thumb_side < 1:
            raise InvalidArgumentError(f"toy thumb_side must be >= 1, got {self.thumb_side}")
        if not 0 <= self.projection_seed < 2 ** 64:
            raise InvalidArgumentError(f"projection_seed must be a u64, got {self.projection_seed}")

    def to_dict(self) -> Dict:
        return {"thumb_side": self.thumb_side, "out_dim": self.out_dim,
                "projection_seed": self.projection_seed}


_GOLDEN_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX_1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX_2 = np.uint64(0x94D049BB133111EB)


def splitmix64(seed: int, count: int) -> np.ndarray:
    """First count outputs of the splitmix64 generator started at seed."""
    with np.errstate(over="ignore"):
        z = np.uint64(seed) + _GOLDEN_GAMMA * np.arange(1, count + 1, dtype=np.uint64)
        z = (z ^ (z >> np.uint64(30))) * _MIX_1
        z = (z ^ (z >> np.uint64(27))) * _MIX_2
        return z ^ (z >> np.uint64(31))


def rademacher_matrix(rows: int, cols: int, seed: int) -> np.ndarray:
    """
    Seeded +-1 matrix.

    Entry n of the splitmix64 stream fills position (n % rows, n // rows)
    (column-major); its top bit set means +1, clear means -1.
    """
    bits = splitmix64(seed, rows * cols) >> np.uint64(63)
    signs = np.where(bits == 1, 1.0, -1.0)
    return signs.reshape((rows, cols), order="F")


def embed_toy(cfg: ToyEmbedderConfig, patch: ImageTensor,
              projection: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Deterministic toy descriptor of an image patch.

    Resize to thumb_side x thumb_side, grayscale in [0, 1], subtract the
    scalar mean, project with the seeded +-1 matrix, then ReLU.

    Args:
        cfg: Embedder configuration
        patch: Non-empty image
        projection: Precomputed rademacher_matrix(out_dim, thumb_side**2, seed)

    Returns:
        (out_dim,) float64 descriptor, all entries >= 0
    """
    side = cfg.thumb_side
    if projection is None:
        projection = rademacher_matrix(cfg.out_dim, side * side, cfg.projection_seed)

    gray = to_grayscale(resize_bilinear(patch, side, side)).ravel()
    # flat patches carry no signal
    if np.ptp(gray) == 0:
        return np.zeros(cfg.out_dim)

    centered = gray - gray.mean()
    return np.maximum(projection @ centered, 0.0)


class ToyEmbedder(DescriptorSource):
    """DescriptorSource over image pixels using embed_toy."""

    def __init__(self, cfg: ToyEmbedderConfig = ToyEmbedderConfig()):
        """
        Args:
            cfg: Embedder configuration; the projection is built once here
        """
        self.cfg = cfg
        self._projection = rademacher_matrix(cfg.out_dim, cfg.thumb_side ** 2, cfg.projection_seed)
        self._projection.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.cfg.out_dim

    def embed(self, patch: ImageTensor) -> np.ndarray:
        return embed_toy(self.cfg, patch, self._projection)

    def descriptor_for(self, image: ImageRef, spec: PatchSpec) -> np.ndarray:
        if image.tensor is None:
            raise InvalidArgumentError(f"toy embedder needs pixels for image {image.image_id!r}")
        return self.embed(crop(image.tensor, spec.x, spec.y, spec.side, spec.side))


# ============================================================
# Precomputed activations
# ============================================================

def _level_label(level: Union[str, int, Level, None]) -> str:
    if level is None or level == "":
        return ""
    return Level.parse(level).value


class ActivationStore(DescriptorSource):
    """
    Immutable table of precomputed descriptors keyed by
    (image_id, level, x, y, side).
    """

    def __init__(self, rows: np.ndarray, manifest: pd.DataFrame):
        """
        Args:
            rows: (count, dim) descriptor matrix
            manifest: DataFrame with columns image_id, level, x, y, side, row
        """
        rows = np.asarray(rows, dtype=np.float32)
        if rows.ndim != 2:
            raise FormatError(f"activation rows must be 2-D, got shape {rows.shape}")
        if not np.all(np.isfinite(rows)):
            raise FormatError("activation rows contain non-finite values")
        rows = rows.copy()
        rows.setflags(write=False)

        manifest = manifest[MANIFEST_COLUMNS].reset_index(drop=True).copy()
        manifest["level"] = [_level_label(level) for level in manifest["level"]]
        count = rows.shape[0]

        bad_rows = manifest[(manifest["row"] < 0) | (manifest["row"] >= count)]
        if not bad_rows.empty:
            raise FormatError(f"manifest row index out of range (count={count}): "
                              f"{bad_rows.iloc[0].to_dict()}")
        key_columns = ["image_id", "level", "x", "y", "side"]
        duplicated = manifest.duplicated(subset=key_columns)
        if duplicated.any():
            raise FormatError(f"duplicate manifest key: {manifest[duplicated].iloc[0].to_dict()}")

        self.rows = rows
        self.manifest = manifest
        self._index: Dict[StoreKey, int] = {
            (str(r.image_id), r.level, int(r.x), int(r.y), int(r.side)): int(r.row)
            for r in manifest.itertuples(index=False)
        }

    @classmethod
    def load(cls, activations_path: Union[str, Path], manifest_path: Union[str, Path]) -> "ActivationStore":
        """Read a MOPD activation file and its JSON manifest."""
        store = cls(read_matrix(activations_path), read_manifest(manifest_path))
        logger.info(f"Loaded {store.count} activations of dim {store.dim} "
                    f"for {len(store.image_ids())} images")
        return store

    @classmethod
    def build(cls, records: Iterable[Tuple[str, PatchSpec]], rows: np.ndarray) -> "ActivationStore":
        """Store whose i-th record (image_id, PatchSpec) maps to rows[i]."""
        manifest = pd.DataFrame(
            [{"image_id": image_id, "level": _level_label(spec.level), "x": spec.x,
              "y": spec.y, "side": spec.side, "row": i}
             for i, (image_id, spec) in enumerate(records)],
            columns=MANIFEST_COLUMNS)
        return cls(rows, manifest)

    def save(self, activations_path: Union[str, Path], manifest_path: Union[str, Path]) -> None:
        write_matrix(activations_path, self.rows)
        write_manifest(manifest_path, self.manifest)

    @property
    def dim(self) -> int:
        return int(self.rows.shape[1])

    @property
    def count(self) -> int:
        return int(self.rows.shape[0])

    def image_ids(self) -> List[str]:
        """Image ids in order of first appearance in the manifest."""
        return list(dict.fromkeys(self.manifest["image_id"].astype(str)))

    def lookup(self, image_id: str, spec: PatchSpec) -> np.ndarray:
        """
        Stored row for one window.

        Raises:
            NotFoundError: naming the missing (image_id, level, x, y, side) tuple
        """
        key = (str(image_id), _level_label(spec.level), spec.x, spec.y, spec.side)
        row = self._index.get(key)
        if row is None:
            raise NotFoundError(f"no activation for (image_id={key[0]!r}, level={key[1] or None}, "
                                f"x={key[2]}, y={key[3]}, side={key[4]})")
        return self.rows[row]

    def descriptor_for(self, image: ImageRef, spec: PatchSpec) -> np.ndarray:
        return self.lookup(image.image_id, spec)


def lookup(store: ActivationStore, image_id: str, spec: PatchSpec) -> np.ndarray:
    """Functional alias of ActivationStore.lookup."""
    return store.lookup(image_id, spec)
