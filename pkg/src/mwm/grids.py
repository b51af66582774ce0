"""Grid and mask file I/O.

Two on-disk formats are used everywhere in the pipeline:

* ``MWMG`` grids — magic ``b"MWMG"``, u32 height, u32 width (little-endian),
  then ``height*width`` little-endian float32 values in row-major order.
  Used for saliency maps and grayscale images.
* Binary PGM (P5, maxval 255) for masks; pixels > 127 are foreground.

All functions are pure given file contents; grids are plain 2-D numpy
arrays (float32 for grids/images, uint8 in {0,1} for masks).
"""
from __future__ import annotations

import os
import struct

import numpy as np

from .errors import (
    ConstantMap,
    MagicMismatch,
    NonFinite,
    NotPGM,
    TruncatedFile,
    UnsupportedMaxval,
)

GRID_MAGIC = b"MWMG"
_HEADER = struct.Struct("<4sII")


def save_grid(path: str | os.PathLike, values: np.ndarray) -> None:
    """Write a 2-D float grid in the MWMG format."""
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"grid must be 2-D and nonempty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFinite("refusing to write non-finite grid")
    h, w = arr.shape
    with open(path, "wb") as f:
        f.write(_HEADER.pack(GRID_MAGIC, h, w))
        f.write(arr.astype("<f4").tobytes())


def load_grid(path: str | os.PathLike) -> np.ndarray:
    """Read an MWMG grid; returns a float32 array of shape (height, width)."""
    with open(path, "rb") as f:
        header = f.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise TruncatedFile(f"{path}: header truncated")
        magic, h, w = _HEADER.unpack(header)
        if magic != GRID_MAGIC:
            raise MagicMismatch(f"{path}: expected {GRID_MAGIC!r}, got {magic!r}")
        payload = f.read(4 * h * w)
    if len(payload) < 4 * h * w:
        raise TruncatedFile(
            f"{path}: expected {4 * h * w} payload bytes, got {len(payload)}"
        )
    arr = np.frombuffer(payload, dtype="<f4").reshape(h, w)
    if not np.all(np.isfinite(arr)):
        raise NonFinite(f"{path}: grid contains NaN/Inf")
    return arr.astype(np.float32)


def normalize_saliency(raw: np.ndarray) -> np.ndarray:
    """Affinely rescale a finite grid to [0, 1].

    Raises ConstantMap when max == min: a flat map carries no localization
    signal and cannot be binarized downstream.
    """
    arr = np.asarray(raw, dtype=np.float32)
    if not np.all(np.isfinite(arr)):
        raise NonFinite("saliency map contains NaN/Inf")
    lo = float(arr.min())
    hi = float(arr.max())
    if hi == lo:
        raise ConstantMap(f"saliency map is constant ({lo})")
    return ((arr - lo) / (hi - lo)).astype(np.float32)


def save_mask_pgm(path: str | os.PathLike, bits: np.ndarray) -> None:
    """Write a {0,1} mask as a binary PGM (P5, maxval 255)."""
    mask = np.asarray(bits)
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
    h, w = mask.shape
    data = np.where(mask > 0, 255, 0).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def load_mask_pgm(path: str | os.PathLike) -> np.ndarray:
    """Read a binary PGM and threshold at 127; returns uint8 {0,1}."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:2] != b"P5":
        raise NotPGM(f"{path}: not a binary PGM (P5)")
    # Header: magic, width, height, maxval — whitespace separated, with
    # optional '#' comment lines.
    pos = 2
    fields: list[int] = []
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise NotPGM(f"{path}: malformed header")
        try:
            fields.append(int(raw[start:pos]))
        except ValueError as exc:
            raise NotPGM(f"{path}: malformed header token") from exc
    pos += 1  # single whitespace byte after maxval
    w, h, maxval = fields
    if maxval != 255:
        raise UnsupportedMaxval(f"{path}: maxval {maxval}, only 255 supported")
    payload = raw[pos : pos + h * w]
    if len(payload) < h * w:
        raise TruncatedFile(f"{path}: expected {h * w} pixels, got {len(payload)}")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(h, w)
    return (pixels > 127).astype(np.uint8)


def save_image_pgm(path: str | os.PathLike, image: np.ndarray) -> None:
    """Write a [0,1] grayscale image as an 8-bit PGM (lossy; for viewing)."""
    arr = np.clip(np.asarray(image, dtype=np.float32), 0.0, 1.0)
    data = np.rint(arr * 255).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def check_image(image: np.ndarray) -> np.ndarray:
    """Validate a grayscale image: 2-D, finite, values in [0,1]."""
    arr = np.asarray(image, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError(f"image must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFinite("image contains NaN/Inf")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("image intensities must lie in [0, 1]")
    return arr
