"""Grayscale image buffers and their on-disk formats.

Supported inputs are binary PGM (P5), binary PPM (P6, only with an explicit
colour conversion) and, through Pillow, 8/16-bit grayscale PNG. Noisy data is
persisted in a lossless float container so the noise statistics survive a
round trip:

    offset 0   b"PGFL"
    offset 4   u32 width       (little-endian)
    offset 8   u32 height
    offset 12  u32 reserved    (0)
    offset 16  width*height float64, little-endian, row-major
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

FLOAT_MAGIC = b"PGFL"
_HEADER = struct.Struct("<4sIII")

# ITU-R BT.601 luma weights
LUMA_WEIGHTS = (0.299, 0.587, 0.114)
COLOR_MODES = ("reject", "luma", "r", "g", "b")


class ImageFormatError(ValueError):
    """Raised for unreadable, malformed or unsupported image files."""


@dataclass(frozen=True)
class ImageBuffer:
    """Immutable 2-D intensity array, row-major, shape ``(height, width)``."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, order="C", copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"expected a non-empty 2-D array, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def ravel(self) -> np.ndarray:
        return self.data.ravel()

    def __eq__(self, other):
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.data, other.data)

    __hash__ = None


@dataclass(frozen=True)
class ImagePair:
    """Pixel-aligned noise-free (``clean``) and noisy buffers."""

    clean: ImageBuffer
    noisy: ImageBuffer
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.clean.shape != self.noisy.shape:
            raise ValueError(
                f"shape mismatch: clean {self.clean.shape} vs noisy {self.noisy.shape}"
            )

    @classmethod
    def from_arrays(cls, clean, noisy, **meta) -> "ImagePair":
        clean = np.asarray(clean, dtype=np.float64)
        noisy = np.asarray(noisy, dtype=np.float64)
        if clean.ndim == 1:
            clean = clean[None, :]
        if noisy.ndim == 1:
            noisy = noisy[None, :]
        return cls(ImageBuffer(clean), ImageBuffer(noisy), dict(meta))


def _read_token(data: bytes, pos: int):
    n = len(data)
    while pos < n:
        ch = data[pos : pos + 1]
        if ch == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise ImageFormatError("truncated PNM header")
    return data[start:pos], pos


def _parse_pnm(data: bytes):
    magic, pos = _read_token(data, 0)
    if magic not in (b"P5", b"P6"):
        raise ImageFormatError(f"unsupported PNM type {magic!r}; only P5/P6 are read")
    fields = []
    for _ in range(3):
        tok, pos = _read_token(data, pos)
        try:
            fields.append(int(tok))
        except ValueError:
            raise ImageFormatError(f"bad PNM header field {tok!r}") from None
    width, height, maxval = fields
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise ImageFormatError(f"bad PNM header: {width}x{height}, maxval {maxval}")
    pos += 1  # exactly one whitespace byte before the raster
    channels = 1 if magic == b"P5" else 3
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height * channels
    raster = data[pos : pos + count * dtype.itemsize]
    if len(raster) != count * dtype.itemsize:
        raise ImageFormatError("truncated PNM raster")
    arr = np.frombuffer(raster, dtype=dtype).astype(np.float64)
    shape = (height, width) if channels == 1 else (height, width, 3)
    return arr.reshape(shape), maxval


def _read_png(path: Path):
    try:
        from PIL import Image
    except ImportError:  # pragma: no cover
        raise ImageFormatError("PNG input requires Pillow") from None
    with Image.open(path) as im:
        mode = im.mode
        if mode in ("L", "P"):
            return np.asarray(im.convert("L"), dtype=np.float64), 255
        if mode in ("I;16", "I;16B", "I;16L", "I"):
            return np.asarray(im, dtype=np.float64), 65535
        if mode in ("RGB", "RGBA"):
            return np.asarray(im.convert("RGB"), dtype=np.float64), 255
        raise ImageFormatError(f"unsupported PNG mode {mode}")


def _to_gray(arr: np.ndarray, color: str) -> np.ndarray:
    if arr.ndim == 2:
        return arr
    if color == "reject":
        raise ImageFormatError(
            "colour image; pass color='luma' (BT.601) or a channel name to convert"
        )
    if color == "luma":
        r, g, b = LUMA_WEIGHTS
        # rounded back to integer codes so the result keeps the file's bit depth
        return np.rint(r * arr[..., 0] + g * arr[..., 1] + b * arr[..., 2])
    return arr[..., "rgb".index(color)]


def load_image(path, bit_depth_hint: Optional[int] = None, color: str = "reject") -> ImageBuffer:
    """Read a grayscale raster and normalise it to [0, 1].

    Values are divided by the file's maxval, or by ``2**bit_depth_hint - 1``
    when the container is wider than the data (e.g. 12-bit data in 16-bit PNG).
    """
    if color not in COLOR_MODES:
        raise ValueError(f"color must be one of {COLOR_MODES}")
    path = Path(path)
    try:
        head = path.read_bytes()
    except OSError as exc:
        raise ImageFormatError(f"cannot read {path}: {exc}") from exc

    if head[:2] in (b"P5", b"P6"):
        arr, maxval = _parse_pnm(head)
    elif head[:8] == b"\x89PNG\r\n\x1a\n":
        arr, maxval = _read_png(path)
    elif head[:4] == FLOAT_MAGIC:
        raise ImageFormatError(f"{path} is a float container; use load_float")
    else:
        raise ImageFormatError(f"unsupported image format: {path}")

    if bit_depth_hint is not None:
        if not 1 <= bit_depth_hint <= 16:
            raise ValueError("bit_depth_hint must be in [1, 16]")
        maxval = 2**bit_depth_hint - 1
    gray = _to_gray(arr, color)
    if gray.max(initial=0.0) > maxval:
        raise ImageFormatError(f"pixel values exceed {maxval}; wrong bit_depth_hint?")
    return ImageBuffer(gray / maxval)


def save_float(buf: ImageBuffer, path) -> None:
    header = _HEADER.pack(FLOAT_MAGIC, buf.width, buf.height, 0)
    payload = np.ascontiguousarray(buf.data, dtype="<f8").tobytes()
    _atomic_write(Path(path), header + payload)


def load_float(path) -> ImageBuffer:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ImageFormatError(f"{path}: truncated float container")
    magic, width, height, _ = _HEADER.unpack_from(raw)
    if magic != FLOAT_MAGIC:
        raise ImageFormatError(f"{path}: not a float container")
    expected = _HEADER.size + 8 * width * height
    if len(raw) != expected or width < 1 or height < 1:
        raise ImageFormatError(f"{path}: size does not match {width}x{height} header")
    arr = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    return ImageBuffer(arr.reshape(height, width))


def save_pgm(buf: ImageBuffer, path, maxval: int = 255) -> None:
    """Quantised export: clamp to [0, 1], then ``round(v * maxval)``."""
    if maxval not in (255, 65535):
        raise ValueError("maxval must be 255 or 65535")
    q = np.rint(np.clip(buf.data, 0.0, 1.0) * maxval)
    dtype = ">u2" if maxval > 255 else "u1"
    header = f"P5\n{buf.width} {buf.height}\n{maxval}\n".encode("ascii")
    _atomic_write(Path(path), header + q.astype(dtype).tobytes())


def save_buffer(buf: ImageBuffer, path, fmt: Optional[str] = None) -> None:
    """Write ``buf``; ``.pgm`` paths are quantised to 8 bits, anything else is
    stored losslessly in the float container."""
    if fmt is None:
        fmt = "pgm" if str(path).lower().endswith(".pgm") else "float"
    if fmt == "pgm":
        save_pgm(buf, path)
    elif fmt == "float":
        save_float(buf, path)
    else:
        raise ValueError(f"unknown format {fmt!r}")


def read_buffer(path, color: str = "reject") -> ImageBuffer:
    """Load either container: float files verbatim, rasters normalised."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == FLOAT_MAGIC:
        return load_float(path)
    return load_image(path, color=color)


def _atomic_write(path: Path, payload: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)
