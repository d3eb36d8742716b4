"""Network weight records and the CNNW binary format.

CNNW v1 layout (little-endian)::

    b"CNNW"  u32 version  u32 record_count
    per record: u16 name_len, name (UTF-8), u8 rank, u32 dims[rank],
                float32 data (row-major)
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import FormatError, LengthError, ShapeError

MAGIC = b"CNNW"
VERSION = 1


@dataclass(frozen=True)
class WeightRecord:
    name: str
    shape: tuple
    data: np.ndarray

    def __post_init__(self):
        shape = tuple(int(d) for d in self.shape)
        object.__setattr__(self, "shape", shape)
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        if self.data.size != n:
            raise LengthError(f"record {self.name}: {self.data.size} values for shape {shape}")
        object.__setattr__(
            self, "data", np.ascontiguousarray(self.data, dtype=np.float32).reshape(shape)
        )


class NetworkWeights:
    """Ordered weight records; ``weights["conv1.weight"]`` returns the array."""

    def __init__(self, records):
        self.records = list(records)
        self._by_name = {r.name: r for r in self.records}
        if len(self._by_name) != len(self.records):
            raise FormatError("duplicate record names in weights")

    def __getitem__(self, name):
        return self._by_name[name].data

    def __contains__(self, name):
        return name in self._by_name

    def __len__(self):
        return len(self.records)

    def names(self):
        return [r.name for r in self.records]

    @classmethod
    def from_arrays(cls, named_arrays):
        return cls(WeightRecord(n, np.shape(a), np.asarray(a)) for n, a in named_arrays)


def expected_records(layers):
    """(name, shape) pairs for the trainable layers of ``layers`` in order."""
    out = []
    for layer in layers:
        if layer.trainable:
            wshape, bshape = layer.parameter_shapes()
            out.append((f"{layer.name}.weight", wshape))
            out.append((f"{layer.name}.bias", bshape))
    return out


def validate(weights, layers):
    """Raise ShapeError naming the first record that does not fit ``layers``."""
    expected = expected_records(layers)
    for i, (name, shape) in enumerate(expected):
        if i >= len(weights.records):
            raise ShapeError(f"missing layer record {name} (have {len(weights.records)} records)")
        rec = weights.records[i]
        if rec.name != name or rec.shape != tuple(shape):
            raise ShapeError(
                f"layer record {i} mismatch: expected {name}{tuple(shape)}, "
                f"got {rec.name}{rec.shape}"
            )
    if len(weights.records) > len(expected):
        extra = weights.records[len(expected)]
        raise ShapeError(f"unexpected extra layer record {extra.name}")


def random_weights(layers, seed, scale=None):
    """Seeded Gaussian weights with fan-in scaling and small positive biases."""
    rng = np.random.default_rng(seed)
    records = []
    for name, shape in expected_records(layers):
        if name.endswith(".weight"):
            fan_in = int(np.prod(shape[1:]))
            std = scale if scale is not None else np.sqrt(2.0 / fan_in)
            data = rng.standard_normal(shape, dtype=np.float32) * np.float32(std)
        else:
            data = np.full(shape, 0.01, dtype=np.float32)
        records.append(WeightRecord(name, shape, data))
    return NetworkWeights(records)


def zero_weights(layers):
    return NetworkWeights(
        WeightRecord(n, s, np.zeros(s, dtype=np.float32)) for n, s in expected_records(layers)
    )


def save_weights(path, weights):
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<II", VERSION, len(weights.records)))
        for rec in weights.records:
            name = rec.name.encode("utf-8")
            fh.write(struct.pack("<H", len(name)) + name)
            fh.write(struct.pack("<B", len(rec.shape)))
            fh.write(struct.pack(f"<{len(rec.shape)}I", *rec.shape))
            fh.write(rec.data.astype("<f4").tobytes())


def load_weights(path, layers=None):
    """Read a CNNW file; validate against ``layers`` when given."""
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {buf[:4]!r}, expected CNNW")
    if len(buf) < 12:
        raise LengthError(f"{path}: truncated header")
    version, count = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported CNNW version {version}")
    pos = 12
    records = []
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            name = buf[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<B", buf, pos)
            pos += 1
            dims = struct.unpack_from(f"<{rank}I", buf, pos)
            pos += 4 * rank
            n = int(np.prod(dims, dtype=np.int64)) if rank else 1
            end = pos + 4 * n
            if end > len(buf):
                raise LengthError(f"{path}: record {name} truncated")
            data = np.frombuffer(buf, dtype="<f4", count=n, offset=pos)
            pos = end
            records.append(WeightRecord(name, dims, data.astype(np.float32)))
    except struct.error as exc:
        raise LengthError(f"{path}: truncated record table ({exc})") from None
    if pos != len(buf):
        raise LengthError(f"{path}: {len(buf) - pos} trailing bytes")
    weights = NetworkWeights(records)
    if layers is not None:
        validate(weights, layers)
    return weights
