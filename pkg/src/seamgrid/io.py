"""Binary field, delta and image files.

Field layout (little-endian)::

    4s   magic        b"SNRF" (fields) or b"SNRD" (delta checkpoints)
    u32  version      1
    u32  sh_degree
    3u32 density resolution (all zero in delta files, which carry no density)
    3u32 colour resolution
    6f64 aabb min xyz, max xyz
    f32  density values, x fastest
    f32  SH coefficients, x fastest, then y, z, channel, coefficient

Raw images use magic b"SNRI", version, width, height, then row-major f32 rgb.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FieldFormatError
from .field import Aabb, DensityGrid, RadianceField, ShColorGrid
from .render import ImageBuffer

FIELD_MAGIC = b"SNRF"
DELTA_MAGIC = b"SNRD"
IMAGE_MAGIC = b"SNRI"
VERSION = 1
_HEADER = struct.Struct("<4sII3I3I6d")
_IMAGE_HEADER = struct.Struct("<4sIII")


def _pack_grid(a: np.ndarray) -> bytes:
    return np.asarray(a, dtype="<f4").ravel(order="F").tobytes()


def _unpack_grid(buf: bytes, offset: int, shape) -> tuple[np.ndarray, int]:
    n = int(np.prod(shape))
    end = offset + 4 * n
    if len(buf) < end:
        raise FieldFormatError(f"file truncated: need {end} bytes, have {len(buf)}")
    a = np.frombuffer(buf, dtype="<f4", count=n, offset=offset).astype(np.float64)
    return a.reshape(shape, order="F"), end


def field_to_bytes(field: RadianceField, magic: bytes = FIELD_MAGIC) -> bytes:
    header = _HEADER.pack(
        magic, VERSION, field.color.degree, *field.density.resolution, *field.color.resolution,
        *field.aabb.min, *field.aabb.max,
    )
    return header + _pack_grid(field.density.values) + _pack_grid(field.color.coeffs)


def _read_header(buf: bytes, magic: bytes):
    if len(buf) < _HEADER.size:
        raise FieldFormatError(f"file truncated: header needs {_HEADER.size} bytes, have {len(buf)}")
    fields = _HEADER.unpack_from(buf)
    if fields[0] != magic:
        raise FieldFormatError(f"bad magic {fields[0]!r}, expected {magic!r}")
    if fields[1] != VERSION:
        raise FieldFormatError(f"unsupported version {fields[1]}, expected {VERSION}")
    degree = fields[2]
    if degree not in (0, 1):
        raise FieldFormatError(f"unsupported SH degree {degree}")
    return degree, tuple(fields[3:6]), tuple(fields[6:9]), np.array(fields[9:12]), np.array(fields[12:15])


def field_from_bytes(buf: bytes) -> RadianceField:
    degree, dres, cres, lo, hi = _read_header(buf, FIELD_MAGIC)
    density, off = _unpack_grid(buf, _HEADER.size, dres)
    coeffs, off = _unpack_grid(buf, off, cres + (3, (degree + 1) ** 2))
    if off != len(buf):
        raise FieldFormatError(f"{len(buf) - off} trailing bytes after field data")
    try:
        return RadianceField(Aabb(lo, hi), DensityGrid(density), ShColorGrid(coeffs))
    except ValueError as exc:
        raise FieldFormatError(str(exc)) from exc


def save_field(path, field: RadianceField) -> None:
    Path(path).write_bytes(field_to_bytes(field))


def load_field(path) -> RadianceField:
    return field_from_bytes(Path(path).read_bytes())


def save_delta(path, delta: np.ndarray, target: RadianceField) -> None:
    """Checkpoint a delta grid congruent to ``target``'s colour grid."""
    delta = np.asarray(delta)
    if delta.shape != target.color.coeffs.shape:
        raise ValueError(f"delta shape {delta.shape} does not match target {target.color.coeffs.shape}")
    header = _HEADER.pack(
        DELTA_MAGIC, VERSION, target.color.degree, 0, 0, 0, *target.color.resolution,
        *target.aabb.min, *target.aabb.max,
    )
    Path(path).write_bytes(header + _pack_grid(delta))


def load_delta(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    degree, dres, cres, _, _ = _read_header(buf, DELTA_MAGIC)
    if any(dres):
        raise FieldFormatError("delta files carry no density grid")
    delta, off = _unpack_grid(buf, _HEADER.size, cres + (3, (degree + 1) ** 2))
    if off != len(buf):
        raise FieldFormatError(f"{len(buf) - off} trailing bytes after delta data")
    return delta


def save_ppm(path, image: ImageBuffer) -> None:
    """Binary P6 with maxval 255; values clamped to [0, 1] then scaled."""
    px = np.rint(np.clip(image.rgb, 0.0, 1.0) * 255.0).astype(np.uint8)
    header = f"P6\n{image.width} {image.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + px.tobytes())


def save_raw(path, image: ImageBuffer) -> None:
    header = _IMAGE_HEADER.pack(IMAGE_MAGIC, VERSION, image.width, image.height)
    Path(path).write_bytes(header + np.asarray(image.rgb, dtype="<f4").tobytes())


def load_raw(path) -> ImageBuffer:
    buf = Path(path).read_bytes()
    if len(buf) < _IMAGE_HEADER.size:
        raise FieldFormatError("image file truncated")
    magic, version, w, h = _IMAGE_HEADER.unpack_from(buf)
    if magic != IMAGE_MAGIC:
        raise FieldFormatError(f"bad magic {magic!r}, expected {IMAGE_MAGIC!r}")
    if version != VERSION:
        raise FieldFormatError(f"unsupported version {version}")
    n = w * h * 3
    if len(buf) != _IMAGE_HEADER.size + 4 * n:
        raise FieldFormatError(f"image payload has {len(buf) - _IMAGE_HEADER.size} bytes, expected {4 * n}")
    rgb = np.frombuffer(buf, dtype="<f4", offset=_IMAGE_HEADER.size).reshape(h, w, 3)
    return ImageBuffer(w, h, rgb.copy())
