"""
File Formats
============
Binary and JSON containers shared by the descriptor store, the fitted
pipeline and encoded features.

MOPD matrix file (little-endian):
    magic "MOPD" | u32 version=1 | u32 count | u32 dim | count*dim f32, row-major

MOPM model container (little-endian):
    magic "MOPM" | u32 version=1 | u32 n_sections
    per section: u32 name_len | name (utf-8) | u32 kind | u64 payload_len | payload
    kind 1 (PCA):      u32 d_in | u32 d_out | u32 whiten | f64 epsilon |
                       f64 mean[d_in] | f64 components[d_out*d_in] | f64 eigenvalues[d_out]
    kind 2 (codebook): u32 k | u32 dim | f64 centers[k*dim]
    kind 3 (metadata): utf-8 JSON document

Manifest: JSON array of {"image_id", "level", "x", "y", "side", "row"}.
"""

import json
import struct
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import numpy as np
import pandas as pd

from src.analytics.encoding import Codebook, PcaModel
from src.utils import FormatError, InvalidArgumentError

PathLike = Union[str, Path]

MATRIX_MAGIC = b"MOPD"
MATRIX_VERSION = 1
MODEL_MAGIC = b"MOPM"
MODEL_VERSION = 1

SECTION_PCA = 1
SECTION_CODEBOOK = 2
SECTION_META = 3

MANIFEST_COLUMNS = ["image_id", "level", "x", "y", "side", "row"]

_MATRIX_HEADER = struct.Struct("<4sIII")


# ============================================================
# MOPD matrices
# ============================================================

def write_matrix(path: PathLike, rows: np.ndarray) -> None:
    """
    Write a (count, dim) matrix as little-endian f32.

    Args:
        path: Destination file
        rows: 2-D array; values are cast to float32
    """
    rows = np.asarray(rows)
    if rows.ndim != 2:
        raise InvalidArgumentError(f"matrix must be 2-D, got shape {rows.shape}")
    count, dim = rows.shape
    with open(path, "wb") as f:
        f.write(_MATRIX_HEADER.pack(MATRIX_MAGIC, MATRIX_VERSION, count, dim))
        f.write(np.ascontiguousarray(rows, dtype="<f4").tobytes())


def read_matrix(path: PathLike) -> np.ndarray:
    """
    Read a MOPD matrix.

    Returns:
        (count, dim) float32 array (a fresh copy)
    """
    path = Path(path)
    if not path.exists():
        raise InvalidArgumentError(f"matrix file not found: {path}")
    raw = path.read_bytes()
    if len(raw) < _MATRIX_HEADER.size:
        raise FormatError(f"{path}: truncated header")

    magic, version, count, dim = _MATRIX_HEADER.unpack_from(raw)
    if magic != MATRIX_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != MATRIX_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = _MATRIX_HEADER.size + 4 * count * dim
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(raw)}")

    rows = np.frombuffer(raw, dtype="<f4", offset=_MATRIX_HEADER.size).reshape(count, dim)
    return rows.astype(np.float32)


# ============================================================
# Manifests
# ============================================================

def read_manifest(path: PathLike) -> pd.DataFrame:
    """
    Read an activation manifest.

    Returns:
        DataFrame with columns image_id, level, x, y, side, row
    """
    path = Path(path)
    if not path.exists():
        raise InvalidArgumentError(f"manifest not found: {path}")
    try:
        records = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON ({e})") from e
    if not isinstance(records, list):
        raise FormatError(f"{path}: manifest must be a JSON array")

    manifest = pd.DataFrame.from_records(records, columns=MANIFEST_COLUMNS)
    if manifest[MANIFEST_COLUMNS].isna().any().any():
        raise FormatError(f"{path}: every record needs {MANIFEST_COLUMNS}")
    manifest["image_id"] = manifest["image_id"].astype(str)
    manifest["level"] = manifest["level"].astype(str)
    for column in ("x", "y", "side", "row"):
        manifest[column] = manifest[column].astype(np.int64)
    return manifest


def write_manifest(path: PathLike, manifest: pd.DataFrame) -> None:
    records = [
        {"image_id": str(r.image_id), "level": str(r.level), "x": int(r.x),
         "y": int(r.y), "side": int(r.side), "row": int(r.row)}
        for r in manifest[MANIFEST_COLUMNS].itertuples(index=False)
    ]
    Path(path).write_text(json.dumps(records, indent=1), encoding="utf-8")


# ============================================================
# MOPM model containers
# ============================================================

def _f64(values: np.ndarray) -> bytes:
    return np.ascontiguousarray(values, dtype="<f8").tobytes()


def _encode_pca(model: PcaModel) -> bytes:
    head = struct.pack("<IIId", model.d_in, model.d_out, int(model.whiten), model.epsilon)
    return head + _f64(model.mean) + _f64(model.components) + _f64(model.eigenvalues)


def _decode_pca(payload: bytes) -> PcaModel:
    d_in, d_out, whiten, epsilon = struct.unpack_from("<IIId", payload)
    values = np.frombuffer(payload, dtype="<f8", offset=struct.calcsize("<IIId")).astype(np.float64)
    if values.size != d_in + d_out * d_in + d_out:
        raise FormatError("PCA section has the wrong payload size")
    mean = values[:d_in]
    components = values[d_in:d_in + d_out * d_in].reshape(d_out, d_in)
    eigenvalues = values[d_in + d_out * d_in:]
    return PcaModel(mean=mean.copy(), components=components.copy(), eigenvalues=eigenvalues.copy(),
                    whiten=bool(whiten), epsilon=float(epsilon))


def _encode_codebook(book: Codebook) -> bytes:
    return struct.pack("<II", book.k, book.dim) + _f64(book.centers)


def _decode_codebook(payload: bytes) -> Codebook:
    k, dim = struct.unpack_from("<II", payload)
    values = np.frombuffer(payload, dtype="<f8", offset=8)
    if values.size != k * dim:
        raise FormatError("codebook section has the wrong payload size")
    return Codebook(centers=values.reshape(k, dim).astype(np.float64))


def write_model_container(path: PathLike, meta: Dict[str, Any],
                          models: List[Tuple[str, Union[PcaModel, Codebook]]]) -> None:
    """
    Write a MOPM container.

    Args:
        path: Destination file
        meta: JSON metadata (settings, fingerprint, ...), stored first
        models: Named PCA models / codebooks in a fixed order
    """
    sections = [("meta", SECTION_META,
                 json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8"))]
    for name, model in models:
        if isinstance(model, PcaModel):
            sections.append((name, SECTION_PCA, _encode_pca(model)))
        elif isinstance(model, Codebook):
            sections.append((name, SECTION_CODEBOOK, _encode_codebook(model)))
        else:
            raise InvalidArgumentError(f"cannot persist {type(model).__name__} section {name!r}")

    with open(path, "wb") as f:
        f.write(struct.pack("<4sII", MODEL_MAGIC, MODEL_VERSION, len(sections)))
        for name, kind, payload in sections:
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)) + encoded)
            f.write(struct.pack("<IQ", kind, len(payload)))
            f.write(payload)


def read_model_container(path: PathLike) -> Tuple[Dict[str, Any], Dict[str, Union[PcaModel, Codebook]]]:
    """
    Read a MOPM container.

    Returns:
        (metadata, {section name: PcaModel | Codebook})
    """
    path = Path(path)
    if not path.exists():
        raise InvalidArgumentError(f"model file not found: {path}")
    raw = path.read_bytes()
    try:
        magic, version, n_sections = struct.unpack_from("<4sII", raw)
        if magic != MODEL_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != MODEL_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")

        offset = 12
        meta: Dict[str, Any] = {}
        models: Dict[str, Union[PcaModel, Codebook]] = {}
        for _ in range(n_sections):
            (name_len,) = struct.unpack_from("<I", raw, offset)
            offset += 4
            name = raw[offset:offset + name_len].decode("utf-8")
            offset += name_len
            kind, size = struct.unpack_from("<IQ", raw, offset)
            offset += 12
            payload = raw[offset:offset + size]
            if len(payload) != size:
                raise FormatError(f"{path}: truncated section {name!r}")
            offset += size

            if kind == SECTION_META:
                meta = json.loads(payload.decode("utf-8"))
            elif kind == SECTION_PCA:
                models[name] = _decode_pca(payload)
            elif kind == SECTION_CODEBOOK:
                models[name] = _decode_codebook(payload)
            else:
                raise FormatError(f"{path}: unknown section kind {kind}")
    except struct.error as e:
        raise FormatError(f"{path}: truncated container ({e})") from e
    return meta, models


# ============================================================
# JSON sidecars
# ============================================================

def write_json(path: PathLike, payload: Any) -> None:
    """Stable-key-order JSON document."""
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_json(path: PathLike) -> Any:
    path = Path(path)
    if not path.exists():
        raise InvalidArgumentError(f"file not found: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON ({e})") from e
