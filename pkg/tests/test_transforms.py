import numpy as np
import pytest

from src.analytics.transforms import (TransformKind, TransformSpec, apply_transform,
                                      crop, flip_horizontal, normalize_frame,
                                      resize_bilinear, rotate, rotation_crop_side,
                                      ten_crop, translation_crop_side)
from src.data.images import ImageTensor, list_images, load_image, save_image, to_grayscale
from src.utils import FormatError, InvalidArgumentError


# ============================================================
# Resize and crop
# ============================================================

def test_resize_to_same_size_is_identity(noise_frame):
    assert resize_bilinear(noise_frame, 256, 256).equals(noise_frame)


def test_resize_constant_image_stays_constant():
    img = ImageTensor.from_array(np.full((2, 2), 90, dtype=np.uint8))
    out = resize_bilinear(img, 4, 4)
    assert out.shape == (4, 4, 1)
    assert np.all(out.data == 90)


def test_resize_midpoint_between_black_and_white():
    img = ImageTensor.from_array(np.array([[0, 255]], dtype=np.uint8))
    out = resize_bilinear(img, 3, 1)
    assert out.data[0, 0, 0] == 0
    assert out.data[0, 1, 0] in (127, 128)
    assert out.data[0, 2, 0] == 255


def test_resize_rejects_empty_target(noise_frame):
    with pytest.raises(InvalidArgumentError):
        resize_bilinear(noise_frame, 0, 10)


def test_crop_whole_frame_and_offset(gradient_frame):
    assert crop(gradient_frame, 0, 0, 256, 256).equals(gradient_frame)
    sub = crop(gradient_frame, 64, 64, 128, 128)
    assert sub.shape == (128, 128, 1)
    assert sub.data[0, 0, 0] == gradient_frame.data[64, 64, 0]


def test_crop_out_of_bounds():
    img = ImageTensor.from_array(np.zeros((100, 100), dtype=np.uint8))
    with pytest.raises(InvalidArgumentError):
        crop(img, 90, 90, 20, 20)


def test_image_tensor_is_read_only(noise_frame):
    with pytest.raises(ValueError):
        noise_frame.data[0, 0, 0] = 1


def test_grayscale_range(noise_frame):
    gray = to_grayscale(noise_frame)
    assert gray.shape == (256, 256)
    assert gray.min() >= 0.0 and gray.max() <= 1.0


# ============================================================
# Transforms
# ============================================================

def test_identity_parameters_return_input(noise_frame):
    for spec in (TransformSpec(TransformKind.SCALE, 1.0),
                 TransformSpec(TransformKind.TRANSLATE_H, 0.0),
                 TransformSpec(TransformKind.TRANSLATE_V, 0.0),
                 TransformSpec(TransformKind.ROTATE, 0.0)):
        assert spec.is_identity
        assert apply_transform(noise_frame, spec).equals(noise_frame)


def test_flip_is_an_involution(noise_frame):
    flip = TransformSpec(TransformKind.FLIP)
    twice = apply_transform(apply_transform(noise_frame, flip), flip)
    assert twice.equals(noise_frame)
    assert not flip.is_identity


def test_translation_shifts_the_crop(gradient_frame):
    side = translation_crop_side()
    assert side == 179
    origin = (256 - side) // 2
    shifted = apply_transform(gradient_frame, TransformSpec(TransformKind.TRANSLATE_H, 30))
    expected = normalize_frame(crop(gradient_frame, origin + 30, origin, side, side))
    assert shifted.equals(expected)

    down = apply_transform(gradient_frame, TransformSpec(TransformKind.TRANSLATE_V, -20))
    assert down.equals(normalize_frame(crop(gradient_frame, origin, origin - 20, side, side)))


def test_translation_beyond_the_frame_is_rejected(gradient_frame):
    with pytest.raises(InvalidArgumentError):
        apply_transform(gradient_frame, TransformSpec(TransformKind.TRANSLATE_H, 40))


def test_transform_parameter_ranges():
    with pytest.raises(InvalidArgumentError):
        TransformSpec(TransformKind.SCALE, 0.5)
    with pytest.raises(InvalidArgumentError):
        TransformSpec(TransformKind.ROTATE, 25)
    with pytest.raises(InvalidArgumentError):
        TransformSpec(TransformKind.TRANSLATE_V, -41)


def test_scale_and_rotation_keep_the_frame_size(noise_frame):
    for spec in (TransformSpec(TransformKind.SCALE, 2.0), TransformSpec(TransformKind.ROTATE, -15)):
        assert apply_transform(noise_frame, spec).shape == noise_frame.shape


def test_rotation_crop_side_shrinks_with_angle():
    assert rotation_crop_side(0) == 256
    assert rotation_crop_side(20) < rotation_crop_side(10) < 256


def test_rotate_zero_degrees_is_lossless(noise_frame):
    assert rotate(noise_frame, 0.0).equals(noise_frame)


def test_rotated_flat_frame_has_no_dark_corners():
    flat = ImageTensor.from_array(np.full((256, 256, 3), 200, dtype=np.uint8))
    for degrees in (-20, -15, 5, 10, 15, 20):
        out = apply_transform(flat, TransformSpec(TransformKind.ROTATE, degrees))
        assert np.all(out.data == 200), degrees
        assert np.all(rotate(flat, degrees).data == 200), degrees


def test_flip_mirrors_columns(gradient_frame):
    flipped = flip_horizontal(gradient_frame)
    assert flipped.data[5, 0, 0] == gradient_frame.data[5, 255, 0]


# ============================================================
# Ten-crop
# ============================================================

def test_ten_crop_full_side(noise_frame):
    crops = ten_crop(noise_frame, 256)
    assert len(crops) == 10
    flipped = flip_horizontal(noise_frame)
    assert all(c.equals(noise_frame) for c in crops[:5])
    assert all(c.equals(flipped) for c in crops[5:])


def test_ten_crop_origins(gradient_frame):
    crops = ten_crop(gradient_frame, 224)
    assert len(crops) == 10
    assert crops[0].equals(crop(gradient_frame, 0, 0, 224, 224))
    assert crops[3].equals(crop(gradient_frame, 32, 32, 224, 224))
    assert crops[4].equals(crop(gradient_frame, 16, 16, 224, 224))
    assert crops[9].equals(flip_horizontal(crops[4]))


def test_ten_crop_rejects_oversized_crop(noise_frame):
    with pytest.raises(InvalidArgumentError):
        ten_crop(noise_frame, 300)


# ============================================================
# Image files
# ============================================================

def test_pgm_and_ppm_files_are_bit_exact(tmp_path, gradient_frame, noise_frame):
    save_image(gradient_frame, tmp_path / "gray.pgm")
    save_image(noise_frame, tmp_path / "color.ppm")
    assert load_image(tmp_path / "gray.pgm").equals(gradient_frame)
    assert load_image(tmp_path / "color.ppm").equals(noise_frame)
    assert [stem for stem, _ in list_images(tmp_path)] == ["color", "gray"]


def test_undecodable_image(tmp_path):
    path = tmp_path / "broken.png"
    path.write_bytes(b"not an image")
    with pytest.raises(FormatError):
        load_image(path)


def test_missing_image_directory(tmp_path):
    with pytest.raises(InvalidArgumentError):
        list_images(tmp_path / "nowhere")
