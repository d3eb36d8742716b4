"""Axial slice I/O, CNN input preparation and augmentation.

Slices are read from binary portable graymaps (P5). Preparation resizes to
the 227x227 network input with bilinear interpolation, subtracts the dataset
mean and replicates the grey channel three times.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import kernels
from .errors import DomainError, FormatError, LengthError, PreconditionError

INPUT_SIZE = 227
MAX_ROTATION = 10.0

_HEADER_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


@dataclass(frozen=True)
class ImageSlice:
    """One axial slice.

    ``pixel_data`` is a (height, width) array in row-major order. Raw loads
    keep the integer samples; augmented slices hold float64 intensities.
    """

    width: int
    height: int
    depth_index: int
    pixel_data: np.ndarray
    bit_depth: int = 8

    def __post_init__(self):
        if self.pixel_data.size != self.width * self.height:
            raise LengthError(
                f"pixel_data has {self.pixel_data.size} samples, expected "
                f"{self.width}x{self.height}"
            )
        if self.depth_index < 0:
            raise DomainError(f"depth_index must be >= 0, got {self.depth_index}")
        if self.bit_depth not in (8, 16):
            raise DomainError(f"bit_depth must be 8 or 16, got {self.bit_depth}")
        object.__setattr__(
            self, "pixel_data", self.pixel_data.reshape(self.height, self.width)
        )

    @classmethod
    def from_array(cls, array, depth_index=0, bit_depth=None):
        array = np.asarray(array)
        if array.ndim != 2:
            raise DomainError("slice arrays must be two-dimensional")
        if bit_depth is None:
            bit_depth = 16 if array.dtype == np.uint16 else 8
        return cls(array.shape[1], array.shape[0], depth_index, array, bit_depth)


@dataclass(frozen=True)
class PreparedTensor:
    values: np.ndarray  # float32, (3, 227, 227)

    def __post_init__(self):
        if self.values.shape != (3, INPUT_SIZE, INPUT_SIZE):
            raise DomainError(f"prepared tensor must be 3x227x227, got {self.values.shape}")


def _read_header(buf):
    tokens = []
    pos = 0
    while len(tokens) < 4:
        m = _HEADER_TOKEN.match(buf, pos)
        if m is None:
            raise FormatError("truncated graymap header")
        tokens.append(m.group(1))
        pos = m.end()
    # exactly one whitespace byte separates header from raster
    if pos >= len(buf) or buf[pos:pos + 1] not in (b" ", b"\t", b"\n", b"\r"):
        raise FormatError("missing whitespace after graymap header")
    return tokens, pos + 1


def load_slice(path, depth_index=0):
    """Read a binary graymap (P5) into an :class:`ImageSlice`.

    Samples are returned exactly as stored: no rescaling. 16-bit samples are
    big-endian per the graymap convention.
    """
    buf = Path(path).read_bytes()
    tokens, offset = _read_header(buf)
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary graymap (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError(f"{path}: non-integer graymap header field") from None
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise FormatError(f"{path}: invalid header values {width}x{height} maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    expected = width * height * dtype.itemsize
    raster = buf[offset:]
    if len(raster) != expected:
        raise LengthError(
            f"{path}: raster has {len(raster)} bytes, header implies {expected}"
        )
    data = np.frombuffer(raster, dtype=dtype).astype(
        np.uint16 if maxval > 255 else np.uint8
    )
    return ImageSlice(width, height, depth_index, data.reshape(height, width),
                      16 if maxval > 255 else 8)


def save_slice(path, image):
    """Write an :class:`ImageSlice` as P5 (values rounded and clipped)."""
    maxval = 65535 if image.bit_depth == 16 else 255
    data = np.clip(np.rint(image.pixel_data), 0, maxval)
    dtype = ">u2" if maxval > 255 else "u1"
    header = f"P5\n{image.width} {image.height}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(header + data.astype(dtype).tobytes())


def _intensity(image):
    px = np.asarray(image.pixel_data, dtype=np.float64)
    if image.bit_depth == 16:
        px = px * (255.0 / 65535.0)
    return np.ascontiguousarray(px)


def resize_bilinear(px, out_h, out_w, backend=None):
    """Bilinear resize with corner-aligned sample grids."""
    h, w = px.shape
    ys = np.linspace(0.0, h - 1, out_h) if out_h > 1 else np.zeros(1)
    xs = np.linspace(0.0, w - 1, out_w) if out_w > 1 else np.zeros(1)
    gx, gy = np.meshgrid(xs, ys)
    k = kernels.get_backend(backend)
    return k.bilinear_sample(np.ascontiguousarray(px, dtype=np.float64),
                             np.ascontiguousarray(gx), np.ascontiguousarray(gy), 0.0)


def prepare(image, dataset_mean, backend=None):
    """Turn a slice into the 3x227x227 network input.

    16-bit slices are first rescaled onto [0, 255] so that one
    ``dataset_mean`` convention covers both bit depths.
    """
    if image.width < 2 or image.height < 2:
        raise PreconditionError(
            f"slice must be at least 2x2 for bilinear resizing, got {image.width}x{image.height}"
        )
    px = _intensity(image)
    if px.shape == (INPUT_SIZE, INPUT_SIZE):
        resized = px
    else:
        resized = resize_bilinear(px, INPUT_SIZE, INPUT_SIZE, backend)
    grey = (resized - float(dataset_mean)).astype(np.float32)
    return PreparedTensor(np.ascontiguousarray(np.broadcast_to(grey, (3,) + grey.shape)))


def mirror(image):
    """Horizontal flip. An involution; depth_index is preserved."""
    return replace(image, pixel_data=image.pixel_data[:, ::-1].copy())


def rotate(image, angle, fill, backend=None):
    """Rotate by ``angle`` degrees about the image centre.

    Positive angles turn the picture counter-clockwise as displayed (rows
    growing downwards). Samples falling outside the source take ``fill``.
    Only the augmentation range [-10, 10] is accepted.
    """
    if not -MAX_ROTATION <= angle <= MAX_ROTATION:
        raise DomainError(f"rotation angle {angle} outside [-10, 10] degrees")
    if angle == 0:
        return replace(image, pixel_data=image.pixel_data.copy())
    h, w = image.height, image.width
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    t = math.radians(angle)
    c, s = math.cos(t), math.sin(t)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dx, dy = xx - cx, yy - cy
    # inverse map of a counter-clockwise turn in a y-down frame
    src_x = cx + c * dx - s * dy
    src_y = cy + s * dx + c * dy
    px = np.ascontiguousarray(image.pixel_data, dtype=np.float64)
    out = kernels.get_backend(backend).bilinear_sample(px, src_x, src_y, float(fill))
    return replace(image, pixel_data=out)


def augment(slices, seed, fill=None):
    """Mirrored and randomly rotated copies of ``slices``.

    Returns ``[mirror(s), rotate(s, a)]`` for each input, with angles drawn
    uniformly from [-10, 10] by a generator seeded with ``seed``. ``fill``
    defaults to the mean intensity over all input slices.
    """
    rng = np.random.default_rng(seed)
    if fill is None:
        fill = float(np.mean([np.mean(s.pixel_data) for s in slices])) if slices else 0.0
    out = []
    for s in slices:
        out.append(mirror(s))
        out.append(rotate(s, float(rng.uniform(-MAX_ROTATION, MAX_ROTATION)), fill))
    return out


def dataset_mean(slices):
    """Mean intensity over slices on the common [0, 255] scale."""
    total = sum(float(_intensity(s).sum()) for s in slices)
    count = sum(s.width * s.height for s in slices)
    if count == 0:
        raise PreconditionError("no slices to average")
    return total / count
