"""
Image Transforms
================
Resampling, cropping and the geometric transforms of the invariance
study (scale, translate, flip, rotate), plus the ten-crop sampler.

All functions are pure: they take an ImageTensor and return a new one.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import List

import numpy as np
from scipy.ndimage import map_coordinates

from src.data.images import ImageTensor
from src.utils import InvalidArgumentError

FRAME = 256

# translation crops are 0.7 times the frame
TRANSLATION_CROP_RATIO = 0.7

MAX_TRANSLATION = 40
MAX_ROTATION = 20


class TransformKind(str, Enum):
    SCALE = "scale"
    TRANSLATE_H = "translate_h"
    TRANSLATE_V = "translate_v"
    FLIP = "flip"
    ROTATE = "rotate"


@dataclass(frozen=True)
class TransformSpec:
    """
    One test-time transformation.

    parameter is rho for scale, pixels (normalized 256 frame) for
    translation, degrees for rotation and ignored for flip.
    """

    kind: TransformKind
    parameter: float = 0.0

    def __post_init__(self):
        kind = TransformKind(self.kind)
        object.__setattr__(self, "kind", kind)
        p = float(self.parameter)
        if kind == TransformKind.FLIP:
            p = 0.0
        elif kind == TransformKind.SCALE and not p >= 1.0:
            raise InvalidArgumentError(f"scale ratio must be >= 1, got {p}")
        elif kind in (TransformKind.TRANSLATE_H, TransformKind.TRANSLATE_V) and abs(p) > MAX_TRANSLATION:
            raise InvalidArgumentError(f"translation must be within +-{MAX_TRANSLATION} px, got {p}")
        elif kind == TransformKind.ROTATE and abs(p) > MAX_ROTATION:
            raise InvalidArgumentError(f"rotation must be within +-{MAX_ROTATION} degrees, got {p}")
        object.__setattr__(self, "parameter", p)

    @property
    def is_identity(self) -> bool:
        if self.kind == TransformKind.SCALE:
            return self.parameter == 1.0
        if self.kind == TransformKind.FLIP:
            return False
        return self.parameter == 0.0


def _round_half_up(values: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8)


def _round_int(value: float) -> int:
    return int(math.floor(value + 0.5))


def _source_coords(n_out: int, n_in: int) -> np.ndarray:
    # pixel-center alignment, clamped to the source
    scale = n_in / n_out
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * scale - 0.5
    return np.clip(src, 0.0, n_in - 1.0)


def _sample(img: ImageTensor, rows: np.ndarray, cols: np.ndarray, mode: str = "nearest") -> ImageTensor:
    """Bilinear sampling of every channel at float (row, col) positions."""
    samples = img.data.astype(np.float64)
    out = np.empty(rows.shape + (img.channels,), dtype=np.float64)
    for c in range(img.channels):
        out[..., c] = map_coordinates(samples[:, :, c], [rows, cols], order=1,
                                      mode=mode, cval=0.0)
    return ImageTensor(_round_half_up(out))


def resize_bilinear(img: ImageTensor, out_w: int, out_h: int) -> ImageTensor:
    """
    Bilinear resize with pixel-center alignment.

    Source coordinate = (dst + 0.5) * scale - 0.5, clamped to the image;
    results are rounded half-up to 8 bits.

    Args:
        img: Input image
        out_w: Target width (>= 1)
        out_h: Target height (>= 1)

    Returns:
        Resized image with the same channel count
    """
    if out_w < 1 or out_h < 1:
        raise InvalidArgumentError(f"resize target must be >= 1x1, got {out_w}x{out_h}")
    if (out_w, out_h) == (img.width, img.height):
        return img

    rows, cols = np.meshgrid(_source_coords(out_h, img.height),
                             _source_coords(out_w, img.width), indexing="ij")
    return _sample(img, rows, cols)


def normalize_frame(img: ImageTensor, frame: int = FRAME) -> ImageTensor:
    """Resample an input image to the square normalized frame."""
    return resize_bilinear(img, frame, frame)


def crop(img: ImageTensor, x: int, y: int, w: int, h: int) -> ImageTensor:
    """
    Exact sub-rectangle, no resampling.

    Raises:
        InvalidArgumentError: if the rectangle leaves the image
    """
    if w < 1 or h < 1 or x < 0 or y < 0 or x + w > img.width or y + h > img.height:
        raise InvalidArgumentError(
            f"crop ({x}, {y}, {w}, {h}) outside {img.width}x{img.height} image")
    return ImageTensor(img.data[y:y + h, x:x + w])


def flip_horizontal(img: ImageTensor) -> ImageTensor:
    """Mirror left-right."""
    return ImageTensor(img.data[:, ::-1])


def center_crop(img: ImageTensor, side: int) -> ImageTensor:
    x0 = (img.width - side) // 2
    y0 = (img.height - side) // 2
    return crop(img, x0, y0, side, side)


def translation_crop_side(frame: int = FRAME) -> int:
    return int(math.floor(TRANSLATION_CROP_RATIO * frame + 0.5))


def rotation_crop_side(degrees: float, frame: int = FRAME) -> int:
    """Side of the largest axis-aligned square inside the rotated frame."""
    theta = math.radians(degrees)
    return int(math.floor(frame / (abs(math.sin(theta)) + abs(math.cos(theta)))))


def rotate(img: ImageTensor, degrees: float) -> ImageTensor:
    """
    Rotate about the image center with bilinear sampling; source
    positions past the border take the nearest edge pixel.

    Positive angles rotate counter-clockwise on screen.
    """
    theta = math.radians(degrees)
    cy = (img.height - 1) / 2.0
    cx = (img.width - 1) / 2.0
    dy, dx = np.meshgrid(np.arange(img.height) - cy, np.arange(img.width) - cx, indexing="ij")

    cols = cx + math.cos(theta) * dx - math.sin(theta) * dy
    rows = cy + math.sin(theta) * dx + math.cos(theta) * dy
    return _sample(img, rows, cols, mode="nearest")


def apply_transform(img: ImageTensor, t: TransformSpec) -> ImageTensor:
    """
    Apply one invariance-study transform to a normalized frame.

    Args:
        img: Square normalized frame (256x256 by default)
        t: Transform to apply

    Returns:
        Transformed image of the same size
    """
    if img.width != img.height:
        raise InvalidArgumentError(f"transforms need a square frame, got {img.width}x{img.height}")
    frame = img.width

    # Identity parameters hand back the input unchanged
    if t.is_identity:
        return img

    if t.kind == TransformKind.FLIP:
        return flip_horizontal(img)

    if t.kind == TransformKind.SCALE:
        side = _round_int(frame / t.parameter)
        return normalize_frame(center_crop(img, side), frame)

    if t.kind in (TransformKind.TRANSLATE_H, TransformKind.TRANSLATE_V):
        side = translation_crop_side(frame)
        origin = (frame - side) // 2
        shift = _round_int(t.parameter)
        x0, y0 = origin, origin
        if t.kind == TransformKind.TRANSLATE_H:
            x0 += shift
        else:
            y0 += shift
        if not (0 <= x0 <= frame - side and 0 <= y0 <= frame - side):
            raise InvalidArgumentError(
                f"{t.kind.value} {t.parameter:+g} moves the {side}px crop outside the frame "
                f"(feasible shifts {-origin}..{frame - side - origin})")
        return normalize_frame(crop(img, x0, y0, side, side), frame)

    # Rotation: crop away the undefined corners
    rotated = rotate(img, t.parameter)
    side = rotation_crop_side(t.parameter, frame)
    return normalize_frame(center_crop(rotated, side), frame)


def ten_crop(img: ImageTensor, crop_side: int) -> List[ImageTensor]:
    """
    Center and four corner crops, followed by their horizontal flips.

    Order: top-left, top-right, bottom-left, bottom-right, center, then
    the five flipped crops in the same order.

    Args:
        img: Normalized frame
        crop_side: Side of every crop (<= frame)

    Returns:
        Exactly ten crop_side x crop_side images
    """
    if crop_side < 1 or crop_side > min(img.width, img.height):
        raise InvalidArgumentError(
            f"crop side {crop_side} does not fit a {img.width}x{img.height} image")
    dx = img.width - crop_side
    dy = img.height - crop_side
    origins = [(0, 0), (dx, 0), (0, dy), (dx, dy), (dx // 2, dy // 2)]

    crops = [crop(img, x, y, crop_side, crop_side) for x, y in origins]
    return crops + [flip_horizontal(c) for c in crops]
