"""PCA over fc6 feature matrices and the FMAT/PCAM binary containers.

FMAT v1 (little-endian)::

    b"FMAT" u32 version u32 rows u32 cols
    rows x (u32 patient, u8 protocol, u8 timestep, u16 slice)
    rows x cols float32, row-major

PCAM v1 uses the same header with magic ``b"PCAM"``, ``rows`` = number of
components and no label table, followed by float64 payload::

    mean[cols] components[rows, cols] explained_variance[rows]
    total_variance n_samples sign_anchor
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse.linalg import svds

from .errors import DegenerateVarianceError, DomainError, FormatError, LengthError, ShapeError
from .protocols import protocol_code, protocol_name

LABEL_DTYPE = np.dtype([("patient", "<u4"), ("protocol", "u1"), ("timestep", "u1"),
                        ("slice", "<u2")])
FMAT_MAGIC = b"FMAT"
PCAM_MAGIC = b"PCAM"
VERSION = 1

# below this many columns/rows a dense SVD is cheap enough
_DENSE_LIMIT = 600


class FeatureMatrix:
    """Feature rows with (patient, protocol, timestep, slice) labels."""

    def __init__(self, data, labels):
        data = np.asarray(data)
        if data.ndim != 2:
            raise ShapeError("feature data must be two-dimensional")
        labels = np.asarray(labels, dtype=LABEL_DTYPE)
        if labels.shape != (data.shape[0],):
            raise ShapeError(f"{labels.shape[0]} labels for {data.shape[0]} rows")
        self.data = data
        self.labels = labels

    def __len__(self):
        return self.data.shape[0]

    @property
    def cols(self):
        return self.data.shape[1]

    @classmethod
    def from_rows(cls, data, patients, protocols, timesteps, slices):
        labels = np.empty(len(patients), dtype=LABEL_DTYPE)
        labels["patient"] = patients
        labels["protocol"] = [protocol_code(p) if isinstance(p, str) else p for p in protocols]
        labels["timestep"] = timesteps
        labels["slice"] = slices
        return cls(data, labels)

    def check_unique(self):
        if len(np.unique(self.labels)) != len(self.labels):
            raise DomainError("duplicate row labels in feature matrix")

    def mask(self, patient=None, protocol=None, timestep=None):
        m = np.ones(len(self), dtype=bool)
        if patient is not None:
            m &= self.labels["patient"] == patient
        if protocol is not None:
            code = protocol_code(protocol) if isinstance(protocol, str) else protocol
            m &= self.labels["protocol"] == code
        if timestep is not None:
            m &= self.labels["timestep"] == timestep
        return m

    def select(self, mask):
        return FeatureMatrix(self.data[mask], self.labels[mask])

    def studies(self):
        """Distinct (patient, protocol name, timestep) keys in canonical order."""
        keys = np.unique(self.labels[["patient", "protocol", "timestep"]])
        return [(int(k["patient"]), protocol_name(int(k["protocol"])), int(k["timestep"]))
                for k in keys]

    @staticmethod
    def concatenate(matrices):
        return FeatureMatrix(np.concatenate([m.data for m in matrices]),
                             np.concatenate([m.labels for m in matrices]))


def save_fmat(path, fm):
    rows, cols = fm.data.shape
    with open(path, "wb") as fh:
        fh.write(FMAT_MAGIC + struct.pack("<III", VERSION, rows, cols))
        fh.write(fm.labels.astype(LABEL_DTYPE).tobytes())
        fh.write(np.ascontiguousarray(fm.data, dtype="<f4").tobytes())


def _header(buf, magic, path):
    if buf[:4] != magic:
        raise FormatError(f"{path}: bad magic {buf[:4]!r}, expected {magic!r}")
    if len(buf) < 16:
        raise LengthError(f"{path}: truncated header")
    version, rows, cols = struct.unpack_from("<III", buf, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    return rows, cols


def load_fmat(path):
    buf = Path(path).read_bytes()
    rows, cols = _header(buf, FMAT_MAGIC, path)
    expected = 16 + rows * LABEL_DTYPE.itemsize + rows * cols * 4
    if len(buf) != expected:
        raise LengthError(f"{path}: {len(buf)} bytes, header implies {expected}")
    labels = np.frombuffer(buf, dtype=LABEL_DTYPE, count=rows, offset=16).copy()
    data = np.frombuffer(buf, dtype="<f4", count=rows * cols,
                         offset=16 + rows * LABEL_DTYPE.itemsize).reshape(rows, cols)
    return FeatureMatrix(data.astype(np.float32), labels)


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray                 # (d,)
    components: np.ndarray           # (k, d), orthonormal rows
    explained_variance: np.ndarray   # (k,), non-increasing
    total_variance: float
    n_samples: int
    sign_anchor: float

    @property
    def k(self):
        return self.components.shape[0]

    def transform(self, x):
        """Scores on all components for rows of ``x``."""
        x = np.asarray(x, dtype=np.float64)
        return (x - self.mean) @ self.components.T

    def project_pc1(self, x):
        """PC1 scores for a single vector or for each row of a matrix."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.mean.shape[0]:
            raise ShapeError(f"feature has {x.shape[-1]} entries, model expects {self.mean.shape[0]}")
        c = self.components[0]
        if x.ndim == 1:
            return float(np.dot(x - self.mean, c))
        # one dot per row so a row's score does not depend on its neighbours
        return np.array([np.dot(row - self.mean, c) for row in x])

    def reconstruct(self, x, m=None):
        comps = self.components if m is None else self.components[:m]
        scores = (np.asarray(x, dtype=np.float64) - self.mean) @ comps.T
        return self.mean + scores @ comps


def _orient_by_loading(vec):
    i = int(np.argmax(np.abs(vec)))
    return (-vec, -vec[i]) if vec[i] < 0 else (vec, vec[i])


def pca_fit(features, k=1, injured_mask=None, healthy_mask=None, seed=0):
    """Fit principal components by SVD of the centred matrix.

    Parameters
    ----------
    features : (n, d) array or FeatureMatrix
    k : int
        Number of components, ``1 <= k <= min(n - 1, d)``.
    injured_mask, healthy_mask : (n,) bool arrays, optional
        Reference rows for orienting PC1: the component is flipped so the
        mean PC1 score of the injured rows exceeds that of the healthy rows.
        Without both masks, and for every other component, the
        largest-magnitude loading is made positive.
    seed : int
        Seeds the start vector of the iterative solver used when ``k`` is
        small relative to a large matrix.

    Notes
    -----
    Explained variances are squared singular values over ``n - 1``. The total
    variance is kept separately so ratios stay exact with truncated fits.
    """
    x = features.data if isinstance(features, FeatureMatrix) else features
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError("features must be a two-dimensional matrix")
    n, d = x.shape
    if n < 2:
        raise DomainError(f"need at least 2 rows to fit, got {n}")
    kmax = min(n - 1, d)
    if not 1 <= k <= kmax:
        raise DomainError(f"k={k} outside [1, {kmax}]")
    mean = x.mean(axis=0)
    xc = x - mean
    total = float(np.sum(xc * xc)) / (n - 1)
    if total == 0.0:
        raise DegenerateVarianceError("all feature rows are identical")

    if min(n, d) <= _DENSE_LIMIT or k > min(n, d) // 4:
        _, s, vt = np.linalg.svd(xc, full_matrices=False)
        s, vt = s[:k], vt[:k]
    else:
        v0 = np.random.default_rng(seed).standard_normal(min(n, d))
        _, s, vt = svds(xc, k=k, tol=0, v0=v0, maxiter=20 * min(n, d))
        order = np.argsort(s)[::-1]
        s, vt = s[order], vt[order]
    # re-orthonormalise; the iterative solver stops near machine precision
    q, r = np.linalg.qr(vt.T)
    vt = (q * np.sign(np.diag(r))).T
    var = s ** 2 / (n - 1)

    comps = np.empty_like(vt)
    anchor = 0.0
    for i in range(k):
        comps[i], loading = _orient_by_loading(vt[i])
        if i == 0:
            anchor = float(loading)
    if injured_mask is not None and healthy_mask is not None:
        injured_mask = np.asarray(injured_mask, dtype=bool)
        healthy_mask = np.asarray(healthy_mask, dtype=bool)
        if injured_mask.any() and healthy_mask.any():
            scores = xc @ comps[0]
            gap = scores[injured_mask].mean() - scores[healthy_mask].mean()
            if gap < 0:
                comps[0] = -comps[0]
                gap = -gap
            if gap > 0:
                anchor = float(gap)
    return PcaModel(mean, comps, var, total, n, anchor)


def explained_variance_ratio(model, m):
    """Cumulative share of total variance carried by the first ``m`` components."""
    if not 1 <= m <= model.k:
        raise DomainError(f"m={m} outside [1, {model.k}]")
    return float(min(np.sum(model.explained_variance[:m]) / model.total_variance, 1.0))


def project_pc1(model, feature):
    """Score of ``feature`` on the oriented first component."""
    values = getattr(feature, "values", feature)
    return model.project_pc1(values)


def save_pcam(path, model):
    k, d = model.components.shape
    with open(path, "wb") as fh:
        fh.write(PCAM_MAGIC + struct.pack("<III", VERSION, k, d))
        payload = np.concatenate([
            model.mean, model.components.ravel(), model.explained_variance,
            [model.total_variance, float(model.n_samples), model.sign_anchor],
        ]).astype("<f8")
        fh.write(payload.tobytes())


def load_pcam(path):
    buf = Path(path).read_bytes()
    k, d = _header(buf, PCAM_MAGIC, path)
    count = d + k * d + k + 3
    if len(buf) != 16 + 8 * count:
        raise LengthError(f"{path}: {len(buf)} bytes, header implies {16 + 8 * count}")
    p = np.frombuffer(buf, dtype="<f8", count=count, offset=16).astype(np.float64)
    mean = p[:d]
    comps = p[d:d + k * d].reshape(k, d)
    var = p[d + k * d:d + k * d + k]
    total, n, anchor = p[-3:]
    return PcaModel(mean, comps, var, float(total), int(n), float(anchor))
