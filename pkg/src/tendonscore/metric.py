"""Study-level healing score H and per-protocol healing curves.

H for one 3D study is the trimmed mean of the per-slice PC1 scores. The
default trim removes 2.5% of slices from each tail (rounded down); an
absolute mode trims a fixed slice count instead.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, EmptyInputError, LabelError
from .protocols import N_TIMESTEPS, PROTOCOLS, WEEKS, protocol_name

DEFAULT_TRIM = 0.025
SCORE_FIELDS = ("patient", "protocol", "timestep", "week", "h_value", "slice_count")


@dataclass(frozen=True)
class StudyScore:
    patient: int
    protocol: str
    timestep: int
    h_value: float
    slice_count: int

    def __post_init__(self):
        if self.slice_count < 1:
            raise DomainError("a study score needs at least one slice")
        if not 0 <= self.timestep < N_TIMESTEPS:
            raise DomainError(f"timestep {self.timestep} outside the 10-point schedule")

    @property
    def week(self):
        return WEEKS[self.timestep]


@dataclass(frozen=True)
class HealingCurve:
    protocol: str
    timesteps: tuple
    values: tuple
    patient_counts: tuple

    @property
    def points(self):
        return list(zip(self.timesteps, self.values))

    def __len__(self):
        return len(self.timesteps)


def trim_count(n, trim, absolute=False):
    """Number of values dropped from each tail."""
    if absolute:
        if trim < 0:
            raise DomainError(f"absolute trim must be >= 0, got {trim}")
        g = int(math.floor(trim))
        if 2 * g >= n:
            raise DomainError(f"trimming {g} from each end of {n} values leaves nothing")
        return g
    if not 0 <= trim < 0.5:
        raise DomainError(f"trim fraction must lie in [0, 0.5), got {trim}")
    return int(math.floor(n * trim))


def truncated_mean(values, trim_fraction=DEFAULT_TRIM, absolute=False):
    """Sort, drop ``floor(n * trim_fraction)`` values per tail, average the rest.

    With ``absolute=True`` the trim argument is a slice count per tail. The
    sum is exactly rounded (``math.fsum``), so the result does not depend on
    input order.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    n = v.size
    if n == 0:
        raise DomainError("truncated mean of an empty sequence")
    g = trim_count(n, trim_fraction, absolute)
    kept = np.sort(v, kind="stable")[g:n - g]
    return math.fsum(kept.tolist()) / kept.size


def compute_h(features, model, trim_fraction=DEFAULT_TRIM, absolute=False):
    """Score one study from its slice features.

    ``features`` is a :class:`~tendonscore.decomposition.FeatureMatrix`
    holding the rows of exactly one (patient, protocol, timestep) study.
    """
    if len(features) == 0:
        raise EmptyInputError("study has no slices")
    keys = np.unique(features.labels[["patient", "protocol", "timestep"]])
    if keys.size != 1:
        raise LabelError(f"rows span {keys.size} studies; compute_h takes one study")
    key = keys[0]
    scores = model.project_pc1(features.data)
    return StudyScore(int(key["patient"]), protocol_name(int(key["protocol"])),
                      int(key["timestep"]), truncated_mean(scores, trim_fraction, absolute),
                      int(len(features)))


def score_studies(features, model, trim_fraction=DEFAULT_TRIM, absolute=False, patients=None):
    """H for every study in ``features`` (optionally restricted to ``patients``)."""
    out = []
    for patient, protocol, timestep in features.studies():
        if patients is not None and patient not in patients:
            continue
        mask = features.mask(patient, protocol, timestep)
        out.append(compute_h(features.select(mask), model, trim_fraction, absolute))
    return out


def healing_curve(scores, protocol):
    """Mean H over patients at each observed timestep of ``protocol``."""
    by_t = {}
    for s in scores:
        if s.protocol == protocol:
            by_t.setdefault(s.timestep, []).append(s.h_value)
    if not by_t:
        raise EmptyInputError(f"no scores for protocol {protocol}")
    ts = tuple(sorted(by_t))
    return HealingCurve(protocol, ts,
                        tuple(math.fsum(by_t[t]) / len(by_t[t]) for t in ts),
                        tuple(len(by_t[t]) for t in ts))


def healing_delta(curve):
    """H at the last observed timestep minus H at the first."""
    if len(curve) < 2:
        raise DomainError("healing delta needs at least two curve points")
    return curve.values[-1] - curve.values[0]


def patient_series(scores, protocol, timesteps=None):
    """{patient: array of H over ``timesteps``} for one protocol (NaN where missing)."""
    timesteps = range(N_TIMESTEPS) if timesteps is None else timesteps
    table = {}
    for s in scores:
        if s.protocol == protocol:
            table.setdefault(s.patient, {})[s.timestep] = s.h_value
    return {p: np.array([row.get(t, np.nan) for t in timesteps]) for p, row in sorted(table.items())}


def write_scores_csv(path, scores):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCORE_FIELDS)
        for s in scores:
            w.writerow([s.patient, s.protocol, s.timestep, s.week, repr(float(s.h_value)), s.slice_count])


def read_scores_csv(path):
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(SCORE_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise DomainError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            if row["protocol"] not in PROTOCOLS:
                raise DomainError(f"{path}: unknown protocol {row['protocol']!r}")
            out.append(StudyScore(int(row["patient"]), row["protocol"], int(row["timestep"]),
                                  float(row["h_value"]), int(row["slice_count"])))
    return out


def write_curves_csv(path, curves):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("protocol", "timestep", "week", "mean_h", "patient_count"))
        for c in curves:
            for t, v, n in zip(c.timesteps, c.values, c.patient_counts):
                w.writerow([c.protocol, t, WEEKS[t], repr(float(v)), n])
