"""Published correlation tables (n = 10, two-tailed p < 0.01) with bold flags.

Each entry is (r, bold). Column order follows the source tables.
"""

GROUND_TRUTH_COLS = ("PD", "IDEALF", "IDEALP", "IDEALOP", "IDEALW", "T1", "T2",
                     "T2STARGRE", "T2STARGREMIN")
GROUND_TRUTH = {
    "SCT": [(0.69, 0), (0.42, 0), (0.53, 0), (0.59, 0), (0.55, 0), (0.66, 0), (0.60, 0), (0.74, 0), (0.4, 0)],
    "TT": [(0.52, 0), (0.71, 0), (0.46, 0), (0.30, 0), (0.37, 0), (0.55, 0), (0.40, 0), (0.38, 0), (0.45, 0)],
    "STE": [(0.87, 1), (0.74, 0), (0.60, 0), (0.50, 0), (0.54, 0), (0.84, 1), (0.81, 1), (0.72, 0), (0.64, 0)],
    "TE": [(0.89, 1), (0.53, 0), (0.63, 0), (0.62, 0), (0.58, 0), (0.81, 1), (0.82, 1), (0.82, 1), (0.60, 0)],
    "TU": [(0.45, 0), (0.19, 0), (0.48, 0), (0.59, 0), (0.50, 0), (0.44, 0), (0.26, 0), (0.64, 0), (0.56, 0)],
    "TisE": [(0.82, 1), (0.51, 0), (0.61, 0), (0.65, 0), (0.58, 0), (0.84, 1), (0.67, 0), (0.90, 1), (0.73, 0)],
}

INTERPROTOCOL_NAMES = ("PD", "T1", "T2", "T2STARGRE")
INTERPROTOCOL = [
    [(1.00, 0), (0.96, 1), (0.90, 1), (0.89, 1)],
    [(0.96, 1), (1.00, 0), (0.85, 1), (0.92, 1)],
    [(0.90, 1), (0.85, 1), (1.00, 0), (0.71, 0)],
    [(0.89, 1), (0.92, 1), (0.71, 0), (1.00, 0)],
]
N = 10


def off_diagonal(table):
    return [cell for i, row in enumerate(table) for j, cell in enumerate(row) if i != j]


def all_cells():
    """Every (r, bold) coefficient in both tables, diagonal excluded."""
    return [c for row in GROUND_TRUTH.values() for c in row] + off_diagonal(INTERPROTOCOL)


def significant_counts():
    """Bold entries per protocol column of the ground-truth table."""
    return {p: sum(GROUND_TRUTH[row][j][1] for row in GROUND_TRUTH)
            for j, p in enumerate(GROUND_TRUTH_COLS)}


def series_with_correlation(r, n, seed, base=None):
    """A length-n series whose sample correlation with ``base`` is exactly ``r``."""
    import numpy as np
    rng = np.random.default_rng(seed)
    base = rng.standard_normal(n) if base is None else np.asarray(base, float)
    b = (base - base.mean()) / np.linalg.norm(base - base.mean())
    e = rng.standard_normal(n)
    e = e - e.mean()
    e = e - (e @ b) * b
    e = e / np.linalg.norm(e)
    return base, r * b + np.sqrt(1 - r * r) * e
