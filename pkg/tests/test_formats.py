import struct

import numpy as np
import pandas as pd
import pytest

from src.analytics.encoding import Codebook, kmeans_fit, pca_fit
from src.data.formats import (read_json, read_manifest, read_matrix, read_model_container,
                              write_json, write_manifest, write_matrix, write_model_container)
from src.utils import FormatError, InvalidArgumentError


def test_matrix_file_layout(tmp_path):
    rows = np.array([[1.0, -2.5, 3.25], [0.0, 4.0, 1e-3]], dtype=np.float32)
    path = tmp_path / "m.mopd"
    write_matrix(path, rows)

    raw = path.read_bytes()
    assert raw[:4] == b"MOPD"
    assert struct.unpack_from("<III", raw, 4) == (1, 2, 3)
    assert len(raw) == 16 + 4 * 6
    assert np.array_equal(read_matrix(path), rows)


def test_matrix_bad_magic_and_truncation(tmp_path):
    path = tmp_path / "m.mopd"
    write_matrix(path, np.ones((2, 2), dtype=np.float32))
    raw = path.read_bytes()

    (tmp_path / "magic.mopd").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError, match="bad magic"):
        read_matrix(tmp_path / "magic.mopd")

    (tmp_path / "short.mopd").write_bytes(raw[:-4])
    with pytest.raises(FormatError):
        read_matrix(tmp_path / "short.mopd")

    with pytest.raises(InvalidArgumentError):
        read_matrix(tmp_path / "absent.mopd")


def test_manifest_round_trip(tmp_path):
    manifest = pd.DataFrame({"image_id": ["a", "b"], "level": ["L1", "L2"], "x": [0, 32],
                             "y": [0, 64], "side": [256, 128], "row": [0, 1]})
    write_manifest(tmp_path / "manifest.json", manifest)
    loaded = read_manifest(tmp_path / "manifest.json")
    assert loaded.to_dict("records") == manifest.to_dict("records")


def test_manifest_requires_every_field(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text('[{"image_id": "a", "level": "L1", "x": 0, "y": 0, "side": 256}]')
    with pytest.raises(FormatError):
        read_manifest(path)
    path.write_text('{"image_id": "a"}')
    with pytest.raises(FormatError):
        read_manifest(path)


def test_model_container_round_trip(tmp_path, rng):
    data = rng.normal(size=(30, 5))
    pca = pca_fit(data, 3, whiten=True, epsilon=1e-6)
    book = kmeans_fit(data, k=4, seed=0)
    meta = {"fingerprint": "abc", "dims": [1, 2]}

    path = tmp_path / "model.mopm"
    write_model_container(path, meta, [("L2/patch_pca", pca), ("L2/codebook", book)])
    loaded_meta, models = read_model_container(path)

    assert loaded_meta == meta
    assert list(models) == ["L2/patch_pca", "L2/codebook"]
    restored = models["L2/patch_pca"]
    assert restored.whiten and restored.epsilon == 1e-6
    assert np.array_equal(restored.components, pca.components)
    assert np.array_equal(restored.transform(data), pca.transform(data))
    assert np.array_equal(models["L2/codebook"].centers, book.centers)


def test_model_container_rejects_other_files(tmp_path):
    path = tmp_path / "model.mopm"
    write_model_container(path, {}, [("cb", Codebook(centers=np.zeros((2, 2))))])
    raw = path.read_bytes()

    (tmp_path / "bad.mopm").write_bytes(b"MOPD" + raw[4:])
    with pytest.raises(FormatError, match="bad magic"):
        read_model_container(tmp_path / "bad.mopm")

    (tmp_path / "cut.mopm").write_bytes(raw[:-8])
    with pytest.raises(FormatError):
        read_model_container(tmp_path / "cut.mopm")


def test_json_documents_are_stable(tmp_path):
    write_json(tmp_path / "a.json", {"b": 1, "a": [1, 2]})
    assert (tmp_path / "a.json").read_text() == '{\n  "a": [\n    1,\n    2\n  ],\n  "b": 1\n}\n'
    assert read_json(tmp_path / "a.json") == {"a": [1, 2], "b": 1}
    (tmp_path / "broken.json").write_text("{")
    with pytest.raises(FormatError):
        read_json(tmp_path / "broken.json")
