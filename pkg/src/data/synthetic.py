"""
Synthetic Textures
==================
Seeded toy dataset: a square stripe-texture motif (one orientation per
class) pasted at a random position into a uniform-noise frame.

The stripe period equals the frame / thumbnail ratio of the global
window, so a whole-frame thumbnail averages every stripe away while
smaller windows still resolve the orientation.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from src.data.formats import write_json
from src.data.images import ImageTensor, save_image
from src.utils import InvalidArgumentError

logger = logging.getLogger(__name__)

TEXTURE_CLASSES = ("horizontal", "vertical", "checker")
STRIPE_LOW = 40
STRIPE_HIGH = 215


def stripe_motif(kind: str, side: int, period: int = 16, phase: int = 0) -> np.ndarray:
    """
    (side, side) uint8 stripe pattern, half a period dark, half light.

    Args:
        kind: 'horizontal', 'vertical' or 'checker'
        side: Motif side in pixels
        period: Stripe period in pixels
        phase: Pixel offset of the pattern
    """
    if kind not in TEXTURE_CLASSES:
        raise InvalidArgumentError(f"unknown texture {kind!r}, expected one of {TEXTURE_CLASSES}")
    coords = (np.arange(side) + phase) % period < period // 2
    rows = coords[:, None]
    cols = coords[None, :]
    if kind == "horizontal":
        on = np.broadcast_to(rows, (side, side))
    elif kind == "vertical":
        on = np.broadcast_to(cols, (side, side))
    else:
        on = rows ^ cols
    return np.where(on, STRIPE_HIGH, STRIPE_LOW).astype(np.uint8)


def textured_frame(kind: str, rng: np.random.Generator, frame: int = 256, motif_side: int = 160,
                   period: int = 16) -> ImageTensor:
    """Noise frame with one motif at a uniformly random position and phase."""
    if not 1 <= motif_side <= frame:
        raise InvalidArgumentError(f"motif side {motif_side} does not fit frame {frame}")
    canvas = rng.integers(0, 256, size=(frame, frame), dtype=np.uint8)
    x, y = (int(v) for v in rng.integers(0, frame - motif_side + 1, size=2))
    motif = stripe_motif(kind, motif_side, period, phase=int(rng.integers(period)))
    canvas[y:y + motif_side, x:x + motif_side] = motif
    return ImageTensor(canvas[:, :, None])


@dataclass
class SyntheticDataset:
    images: Dict[str, ImageTensor] = field(default_factory=dict)
    labels: Dict[str, str] = field(default_factory=dict)
    train_ids: List[str] = field(default_factory=list)
    test_ids: List[str] = field(default_factory=list)

    @property
    def ids(self) -> List[str]:
        return self.train_ids + self.test_ids

    def split_labels(self, split: str) -> List[str]:
        ids = self.train_ids if split == "train" else self.test_ids
        return [self.labels[i] for i in ids]

    def write(self, directory: Union[str, Path]) -> Path:
        """
        Save images as PGM plus labels.json and split.json.

        Returns:
            The directory written to
        """
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for image_id, image in self.images.items():
            save_image(image, directory / f"{image_id}.pgm")
        write_json(directory / "labels.json", self.labels)
        write_json(directory / "split.json", {"train": self.train_ids, "test": self.test_ids})
        logger.info(f"Wrote {len(self.images)} synthetic images to {directory}")
        return directory


def make_texture_dataset(
    per_class: int = 40,
    seed: int = 0,
    classes: Sequence[str] = TEXTURE_CLASSES,
    train_fraction: float = 0.5,
    frame: int = 256,
    motif_side: int = 160,
    period: int = 16,
    test_motif_sides: Optional[Sequence[int]] = None
) -> SyntheticDataset:
    """
    Build the seeded texture dataset.

    Args:
        per_class: Images per class
        seed: Generator seed
        classes: Texture kinds, one class each
        train_fraction: Leading share of each class used for training
        frame: Image side
        motif_side: Motif side of training images
        period: Stripe period
        test_motif_sides: Motif sides drawn for test images (rescaled motifs);
            defaults to motif_side

    Returns:
        SyntheticDataset with ids '<class>_<nnn>'
    """
    if per_class < 2:
        raise InvalidArgumentError(f"need at least 2 images per class, got {per_class}")
    n_train = int(round(per_class * train_fraction))
    if not 1 <= n_train < per_class:
        raise InvalidArgumentError(f"train_fraction {train_fraction} leaves an empty split")
    test_sides = list(test_motif_sides) if test_motif_sides else [motif_side]

    rng = np.random.default_rng(seed)
    dataset = SyntheticDataset()
    for kind in classes:
        for i in range(per_class):
            image_id = f"{kind}_{i:03d}"
            if i < n_train:
                side = motif_side
                dataset.train_ids.append(image_id)
            else:
                side = int(test_sides[int(rng.integers(len(test_sides)))])
                dataset.test_ids.append(image_id)
            dataset.images[image_id] = textured_frame(kind, rng, frame, side, period)
            dataset.labels[image_id] = kind
    return dataset
