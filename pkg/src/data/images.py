"""
Image Rasters
=============
The 8-bit image type every stage works on, plus file loading through
Pillow (binary PPM/PGM round-trip bit-exactly; other formats are read
through the same loader).
"""

from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
from PIL import Image

from src.utils import FormatError, InvalidArgumentError

# luma weights for grayscale-from-RGB
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

IMAGE_SUFFIXES = (".ppm", ".pgm", ".pnm", ".png", ".jpg", ".jpeg", ".bmp")


@dataclass(frozen=True, eq=False)
class ImageTensor:
    """
    Row-major 8-bit raster.

    The samples live in a read-only uint8 array of shape (height, width,
    channels) with channels 1 (gray) or 3 (RGB).
    """

    data: np.ndarray

    def __post_init__(self):
        data = self.data
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise InvalidArgumentError(
                f"image data must be (h, w, 1|3), got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise InvalidArgumentError(f"image must be non-empty, got {data.shape}")
        if data.dtype != np.uint8:
            raise InvalidArgumentError(f"image samples must be uint8, got {data.dtype}")
        data = np.ascontiguousarray(data)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, array: np.ndarray) -> "ImageTensor":
        """Build from (h, w) or (h, w, c) samples; 2-D input becomes 1 channel."""
        array = np.asarray(array)
        if array.ndim == 2:
            array = array[:, :, None]
        return cls(array.astype(np.uint8, copy=True))

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def channels(self) -> int:
        return int(self.data.shape[2])

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.data.shape

    def as_array(self) -> np.ndarray:
        """Writable copy of the samples."""
        return self.data.copy()

    def equals(self, other: "ImageTensor") -> bool:
        """Byte-exact comparison."""
        return self.shape == other.shape and np.array_equal(self.data, other.data)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ImageTensor):
            return NotImplemented
        return self.equals(other)

    __hash__ = None


def to_grayscale(img: ImageTensor) -> np.ndarray:
    """
    Grayscale intensities in [0, 1].

    Args:
        img: Gray or RGB image

    Returns:
        (height, width) float64 array
    """
    samples = img.data.astype(np.float64)
    if img.channels == 1:
        return samples[:, :, 0] / 255.0
    return (samples @ LUMA_WEIGHTS) / 255.0


def load_image(path: Union[str, Path]) -> ImageTensor:
    """
    Read an image file.

    Args:
        path: PPM/PGM (bit-exact) or any format Pillow decodes

    Returns:
        ImageTensor with 1 channel for gray files, 3 otherwise
    """
    path = Path(path)
    if not path.exists():
        raise InvalidArgumentError(f"image file not found: {path}")
    try:
        with Image.open(path) as pil:
            pil.load()
            if pil.mode not in ("L", "RGB"):
                pil = pil.convert("L" if pil.mode in ("1", "I", "I;16", "F", "LA") else "RGB")
            array = np.asarray(pil, dtype=np.uint8)
    except OSError as e:
        raise FormatError(f"cannot decode image {path}: {e}") from e
    return ImageTensor.from_array(array)


def save_image(img: ImageTensor, path: Union[str, Path]) -> None:
    """
    Write an image; the suffix picks the format (.ppm/.pgm for binary P6/P5).

    Args:
        img: Image to write
        path: Destination file
    """
    path = Path(path)
    if img.channels == 1:
        pil = Image.fromarray(img.data[:, :, 0])
    else:
        pil = Image.fromarray(img.data)
    if path.suffix.lower() == ".pgm" and img.channels != 1:
        raise InvalidArgumentError("PGM output needs a 1-channel image")
    pil.save(path, format="PPM" if path.suffix.lower() in (".ppm", ".pgm", ".pnm") else None)


def list_images(directory: Union[str, Path]) -> List[Tuple[str, Path]]:
    """
    Image files of a directory as (image_id, path), sorted by image_id.

    The image_id is the file stem.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise InvalidArgumentError(f"images directory not found: {directory}")
    found = [(p.stem, p) for p in directory.iterdir()
             if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES]
    found.sort(key=lambda item: item[0])

    stems = [stem for stem, _ in found]
    if len(set(stems)) != len(stems):
        raise InvalidArgumentError(f"duplicate image ids in {directory}")
    return found
