"""Pearson correlation with significance gating and protocol-pair selection."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betaincinv

from .errors import DomainError, ShapeError, ValidationError, ZeroVarianceError
from .protocols import N_TIMESTEPS, SURVEY_PARAMS, WEEKS, protocol_order

DEFAULT_ALPHA = 0.01
STRATEGIES = ("global-min", "redundancy-prune", "anchor")


@dataclass(frozen=True)
class SurveyScores:
    patient: int
    timestep: int
    sct: int
    tt: int
    ste: int
    te: int
    tu: int
    tise: int

    def __post_init__(self):
        for name in ("sct", "tt", "ste", "te", "tu", "tise"):
            v = getattr(self, name)
            if v not in (1, 2, 3, 4, 5):
                raise DomainError(f"survey {name.upper()}={v} outside the 1-5 scale")
        if not 0 <= self.timestep < N_TIMESTEPS:
            raise DomainError(f"survey timestep {self.timestep} out of range")

    def value(self, param):
        return getattr(self, param.lower())


def write_surveys_csv(path, surveys):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("patient", "timestep", "week") + SURVEY_PARAMS)
        for s in surveys:
            w.writerow([s.patient, s.timestep, WEEKS[s.timestep]] + [s.value(p) for p in SURVEY_PARAMS])


def read_surveys_csv(path):
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"patient", "timestep", *SURVEY_PARAMS}
        if not need <= set(reader.fieldnames or ()):
            raise ValidationError(f"{path}: survey table needs columns {sorted(need)}")
        for row in reader:
            out.append(SurveyScores(int(row["patient"]), int(row["timestep"]),
                                    *(int(row[p]) for p in SURVEY_PARAMS)))
    return out


def survey_means(surveys, param, patients=None, timesteps=range(N_TIMESTEPS)):
    """Mean score of ``param`` over patients, per timestep (NaN where absent)."""
    acc = {t: [] for t in timesteps}
    for s in surveys:
        if s.timestep in acc and (patients is None or s.patient in patients):
            acc[s.timestep].append(s.value(param))
    return np.array([math.fsum(v) / len(v) if v else np.nan for v in acc.values()])


def pearson(x, y):
    """Sample Pearson correlation coefficient."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ShapeError(f"series shapes differ: {x.shape} vs {y.shape}")
    if x.size < 3:
        raise DomainError(f"need at least 3 paired samples, got {x.size}")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise ZeroVarianceError("constant series has no correlation")
    dx = x - x.mean()
    dy = y - y.mean()
    r = np.dot(dx, dy) / math.sqrt(np.dot(dx, dx) * np.dot(dy, dy))
    return float(min(1.0, max(-1.0, r)))


def critical_r(n, alpha=DEFAULT_ALPHA):
    """Smallest |r| significant at two-tailed level ``alpha`` for ``n`` samples.

    With ``df = n - 2``, the two-tailed t tail probability is
    ``I_x(df/2, 1/2)`` at ``x = df / (df + t^2)``, and ``r^2 = t^2 / (t^2 + df)``
    gives ``r = sqrt(1 - x)``.
    """
    if n < 3:
        raise DomainError(f"critical r needs n >= 3, got {n}")
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    x = float(betaincinv((n - 2) / 2.0, 0.5, alpha))
    return math.sqrt(1.0 - x)


@dataclass(frozen=True)
class CorrelationReport:
    rows: tuple
    cols: tuple
    r: np.ndarray
    significant: np.ndarray
    n: int
    alpha: float

    def __post_init__(self):
        shape = (len(self.rows), len(self.cols))
        if self.r.shape != shape or self.significant.shape != shape:
            raise ShapeError(f"report matrices must be {shape}")

    @property
    def threshold(self):
        return critical_r(self.n, self.alpha)

    def value(self, row, col):
        return float(self.r[self.rows.index(row), self.cols.index(col)])

    def significant_counts(self):
        """Number of significant entries in each column."""
        return {c: int(self.significant[:, j].sum()) for j, c in enumerate(self.cols)}

    def to_dict(self):
        return {"rows": list(self.rows), "cols": list(self.cols),
                "r": [[float(v) for v in row] for row in self.r],
                "significant": [[bool(v) for v in row] for row in self.significant],
                "n": int(self.n), "alpha": float(self.alpha)}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["rows"]), tuple(d["cols"]), np.array(d["r"], dtype=np.float64),
                   np.array(d["significant"], dtype=bool), int(d["n"]), float(d["alpha"]))

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("",) + tuple(self.cols))
            for name, row in zip(self.rows, self.r):
                w.writerow([name] + [repr(float(v)) for v in row])

    def render(self, digits=2):
        """Plain-text table; significant entries carry a trailing asterisk."""
        width = max(8, max(len(c) for c in self.cols) + 1)
        label = max(6, max(len(r) for r in self.rows) + 1)
        lines = [" " * label + "".join(c.rjust(width) for c in self.cols)]
        for i, name in enumerate(self.rows):
            cells = []
            for j in range(len(self.cols)):
                cell = f"{self.r[i, j]:.{digits}f}" + ("*" if self.significant[i, j] else " ")
                cells.append(cell.rjust(width))
            lines.append(name.ljust(label) + "".join(cells))
        lines.append(f"* |r| > {self.threshold:.4f} (two-tailed p < {self.alpha:g}, n = {self.n})")
        return "\n".join(lines)


def significance(r, n, alpha=DEFAULT_ALPHA):
    """Boolean mask of |r| strictly above the critical value."""
    return np.abs(np.asarray(r, dtype=np.float64)) > critical_r(n, alpha)


def _aligned(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"series lengths differ: {a.shape} vs {b.shape}")
    return a, b


def correlate_with_ground_truth(h_series, survey_series, alpha=DEFAULT_ALPHA):
    """Survey parameter x protocol correlation matrix.

    Parameters
    ----------
    h_series : dict
        protocol -> H series (e.g. patient-averaged, one value per timestep).
    survey_series : dict
        survey parameter -> score series aligned with every H series.
    """
    cols = tuple(h_series)
    rows = tuple(survey_series)
    if not cols or not rows:
        raise DomainError("need at least one protocol and one survey parameter")
    lengths = {len(v) for v in h_series.values()} | {len(v) for v in survey_series.values()}
    if len(lengths) != 1:
        raise ShapeError(f"series lengths differ: {sorted(lengths)}")
    n = lengths.pop()
    r = np.empty((len(rows), len(cols)))
    for i, p in enumerate(rows):
        for j, c in enumerate(cols):
            r[i, j] = pearson(*_aligned(h_series[c], survey_series[p]))
    return CorrelationReport(rows, cols, r, significance(r, n, alpha), n, alpha)


def interprotocol_matrix(h_series, alpha=DEFAULT_ALPHA):
    """Symmetric protocol x protocol correlations with a unit diagonal."""
    names = tuple(h_series)
    if len(names) < 2:
        raise DomainError("inter-protocol correlation needs at least two protocols")
    lengths = {len(v) for v in h_series.values()}
    if len(lengths) != 1:
        raise ShapeError(f"series lengths differ: {sorted(lengths)}")
    n = lengths.pop()
    m = len(names)
    r = np.eye(m)
    for i in range(m):
        for j in range(i + 1, m):
            r[i, j] = r[j, i] = pearson(h_series[names[i]], h_series[names[j]])
    sig = significance(r, n, alpha)
    np.fill_diagonal(sig, False)
    return CorrelationReport(names, names, r, sig, n, alpha)


def report_from_matrix(names, r, n, alpha=DEFAULT_ALPHA):
    """Inter-protocol report from a precomputed symmetric matrix."""
    r = np.array(r, dtype=np.float64)
    sig = significance(r, n, alpha)
    np.fill_diagonal(sig, False)
    return CorrelationReport(tuple(names), tuple(names), r, sig, n, alpha)


def _rank(order):
    return {name: i for i, name in enumerate(order)}


def _min_pair(names, r, rank):
    best = None
    for a_i, a in enumerate(names):
        for b in names[a_i + 1:]:
            x, y = sorted((a, b), key=rank.__getitem__)
            key = (abs(r[(x, y)]), rank[x], rank[y])
            if best is None or key < best[0]:
                best = (key, (x, y))
    return best[1]


def select_protocol_pair(matrix, strategy="redundancy-prune", significant_counts=None,
                         redundancy_threshold=0.95):
    """Pick two complementary protocols from an inter-protocol report.

    Strategies
    ----------
    global-min
        The off-diagonal pair with the smallest |r|.
    redundancy-prune
        Visit pairs with |r| above ``redundancy_threshold`` from the most
        correlated down; drop the member with fewer significant
        ground-truth correlations (ties keep the earlier protocol). Then
        take the global-min pair among survivors.
    anchor
        Keep the protocol with the most significant ground-truth
        correlations and pair it with the protocol least correlated to it.

    Ties are broken by the canonical protocol order. Returns the pair in
    canonical order.
    """
    if strategy not in STRATEGIES:
        raise DomainError(f"unknown selection strategy {strategy!r}; choose from {STRATEGIES}")
    names = list(matrix.cols)
    if len(names) < 2:
        raise DomainError("pair selection needs at least two protocols")
    order = protocol_order(names)
    rank = _rank(order)
    names = order
    idx = {c: j for j, c in enumerate(matrix.cols)}
    r = {(a, b): float(matrix.r[idx[a], idx[b]]) for a in names for b in names}
    counts = {c: 0 for c in names}
    if significant_counts:
        counts.update({c: int(v) for c, v in significant_counts.items() if c in counts})

    if len(names) == 2 or strategy == "global-min":
        return _min_pair(names, r, rank)

    if strategy == "anchor":
        anchor = min(names, key=lambda c: (-counts[c], rank[c]))
        partner = min((c for c in names if c != anchor), key=lambda c: (abs(r[(anchor, c)]), rank[c]))
        return tuple(sorted((anchor, partner), key=rank.__getitem__))

    alive = list(names)
    redundant = sorted(
        ((abs(r[(a, b)]), a, b) for i, a in enumerate(names) for b in names[i + 1:]
         if abs(r[(a, b)]) > redundancy_threshold),
        key=lambda t: (-t[0], rank[t[1]], rank[t[2]]),
    )
    for _, a, b in redundant:
        if a in alive and b in alive:
            # a precedes b in canonical order, so a wins ties
            drop = b if counts[a] >= counts[b] else a
            alive.remove(drop)
    if len(alive) < 2:
        return _min_pair(names, r, rank)
    return _min_pair(alive, r, rank)
