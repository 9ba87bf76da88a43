"""Deterministic file outputs: grayscale PNGs, CSV dumps, manifests.

The PNG writer is self-contained (stdlib zlib) so identical arrays always
produce byte-identical files, which the reproducibility contract relies on.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .core import GridShape, ValidationError

__all__ = [
    "write_png_gray",
    "gamma_preview",
    "save_image_16bit",
    "save_preview_8bit",
    "write_manifest",
    "read_manifest",
    "write_point_cloud",
]


def _png_chunk(tag: bytes, payload: bytes) -> bytes:
    chunk = tag + payload
    return struct.pack(">I", len(payload)) + chunk + struct.pack(">I", zlib.crc32(chunk))


def write_png_gray(path, image: np.ndarray, bit_depth: int = 16) -> None:
    """Write a 2-D array of integers as an 8- or 16-bit grayscale PNG."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValidationError("PNG writer expects a 2-D image")
    if bit_depth not in (8, 16):
        raise ValidationError("bit depth must be 8 or 16")
    limit = (1 << bit_depth) - 1
    if image.min() < 0 or image.max() > limit:
        raise ValidationError(f"pixel values must lie in [0, {limit}]")
    h, w = image.shape
    if bit_depth == 16:
        raw = image.astype(">u2").tobytes()
        stride = 2 * w
    else:
        raw = image.astype(np.uint8).tobytes()
        stride = w
    scanlines = b"".join(
        b"\x00" + raw[r * stride : (r + 1) * stride] for r in range(h)
    )
    ihdr = struct.pack(">IIBBBBB", w, h, bit_depth, 0, 0, 0, 0)
    data = (
        b"\x89PNG\r\n\x1a\n"
        + _png_chunk(b"IHDR", ihdr)
        + _png_chunk(b"IDAT", zlib.compress(scanlines, 9))
        + _png_chunk(b"IEND", b"")
    )
    Path(path).write_bytes(data)


def _quantize(values: np.ndarray, lo: float, hi: float, limit: int) -> np.ndarray:
    if hi <= lo:
        return np.zeros(values.shape, dtype=np.int64)
    scaled = (np.clip(values, lo, hi) - lo) / (hi - lo)
    return np.round(scaled * limit).astype(np.int64)


def save_image_16bit(path, vector: np.ndarray, shape: GridShape,
                     lo: float | None = None, hi: float | None = None) -> None:
    """Scale a pixel vector to the full 16-bit range and write a PNG."""
    img = shape.unvectorize(np.nan_to_num(np.asarray(vector, dtype=np.float64)))
    lo = float(np.min(img)) if lo is None else lo
    hi = float(np.max(img)) if hi is None else hi
    write_png_gray(path, _quantize(img, lo, hi, 65535), bit_depth=16)


def gamma_preview(vector: np.ndarray, gamma: float = 2.2) -> np.ndarray:
    """Gamma-corrected 8-bit values for quick visual inspection."""
    v = np.nan_to_num(np.asarray(vector, dtype=np.float64))
    v = v - v.min()
    peak = v.max()
    if peak > 0:
        v = v / peak
    return np.round(255.0 * v ** (1.0 / gamma)).astype(np.int64)


def save_preview_8bit(path, vector: np.ndarray, shape: GridShape, gamma: float = 2.2) -> None:
    write_png_gray(path, shape.unvectorize(gamma_preview(vector, gamma)), bit_depth=8)


def write_manifest(path, payload: dict) -> None:
    """Persist run parameters as canonical (sorted, stable) JSON."""
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())


def write_point_cloud(path, shape: GridShape, depth: np.ndarray,
                      valid: np.ndarray, pixel_pitch_m: float) -> None:
    """Write valid pixels as x y z rows for 3-D viewing."""
    depth_img = shape.unvectorize(np.asarray(depth, dtype=np.float64))
    valid_img = shape.unvectorize(np.asarray(valid)).astype(bool)
    with open(path, "w") as fh:
        fh.write("# x_m y_m z_m\n")
        for r in range(shape.rows):
            for c in range(shape.cols):
                if valid_img[r, c]:
                    x = (c - (shape.cols - 1) / 2.0) * pixel_pitch_m
                    y = ((shape.rows - 1) / 2.0 - r) * pixel_pitch_m
                    fh.write(f"{x!r} {y!r} {float(depth_img[r, c])!r}\n")
