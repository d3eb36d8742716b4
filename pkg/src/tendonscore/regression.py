"""Ordinary least squares from per-protocol H series to survey parameters."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import qr, solve_triangular

from .errors import DomainError, ShapeError, SingularDesignError

RANK_TOL = 1e-10


@dataclass(frozen=True)
class RegressionModel:
    parameter: str
    intercept: float
    coefficients: tuple
    predictor_protocols: tuple

    def __post_init__(self):
        if len(self.coefficients) != len(self.predictor_protocols):
            raise ShapeError("one coefficient per predictor protocol is required")

    def to_dict(self):
        return {"parameter": self.parameter, "intercept": float(self.intercept),
                "coefficients": [float(c) for c in self.coefficients],
                "predictor_protocols": list(self.predictor_protocols)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["parameter"], float(d["intercept"]), tuple(float(c) for c in d["coefficients"]),
                   tuple(d["predictor_protocols"]))


@dataclass(frozen=True)
class PredictionReport:
    actual: np.ndarray
    predicted: np.ndarray
    absolute_error: np.ndarray
    mse: float
    max_abs_error: float
    labels: tuple = ()

    def to_dict(self):
        return {"mse": float(self.mse), "max_abs_error": float(self.max_abs_error),
                "n": int(self.actual.size)}


def ols_fit(predictors, targets, parameter="", predictor_protocols=None):
    """Least-squares fit with an intercept.

    The design ``[1, X]`` is factorised by column-pivoted QR; a trailing
    diagonal of R below ``RANK_TOL`` times the leading one is treated as
    rank deficiency.
    """
    x = np.asarray(predictors, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(targets, dtype=np.float64)
    n, p = x.shape
    if y.shape != (n,):
        raise ShapeError(f"{y.size} targets for {n} predictor rows")
    if n < p + 1:
        raise DomainError(f"need at least {p + 1} samples for {p} predictors, got {n}")
    design = np.column_stack([np.ones(n), x])
    q, r, piv = qr(design, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag[0] == 0 or diag[-1] <= RANK_TOL * diag[0]:
        raise SingularDesignError("design matrix (with intercept) is rank deficient")
    beta = np.empty(p + 1)
    beta[piv] = solve_triangular(r, q.T @ y)
    if predictor_protocols is None:
        predictor_protocols = tuple(f"x{i}" for i in range(p))
    return RegressionModel(parameter, float(beta[0]), tuple(float(b) for b in beta[1:]),
                           tuple(predictor_protocols))


def predict(model, h_values, clamp=False):
    """Intercept plus the coefficient-weighted H values; optional [1, 5] clamp."""
    h = np.asarray(h_values, dtype=np.float64)
    coef = np.asarray(model.coefficients, dtype=np.float64)
    if h.shape[-1] != coef.size:
        raise ShapeError(f"model takes {coef.size} predictors, got {h.shape[-1]}")
    out = model.intercept + h @ coef
    if clamp:
        out = np.clip(out, 1.0, 5.0)
    return float(out) if out.ndim == 0 else out


def _report(actual, predicted, labels=()):
    actual = np.asarray(actual, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    resid = predicted - actual
    return PredictionReport(actual, predicted, np.abs(resid),
                            math.fsum((resid ** 2).tolist()) / resid.size,
                            float(np.max(np.abs(resid))), tuple(labels))


def evaluate(model, predictors, targets, clamp=False, labels=()):
    """Residual summary of ``model`` on a (held-out) evaluation set."""
    x = np.asarray(predictors, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(targets, dtype=np.float64)
    if y.size == 0:
        raise DomainError("evaluation set is empty")
    if x.shape[0] != y.size:
        raise ShapeError("predictor rows and targets differ in length")
    return _report(y, predict(model, x, clamp), labels)


def leave_one_out(predictors, targets, parameter="", predictor_protocols=None, clamp=False,
                  labels=()):
    """Predict each sample from a model fitted on all the others."""
    x = np.asarray(predictors, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(targets, dtype=np.float64)
    preds = np.empty_like(y)
    for i in range(y.size):
        keep = np.arange(y.size) != i
        m = ols_fit(x[keep], y[keep], parameter, predictor_protocols)
        preds[i] = predict(m, x[i], clamp)
    return _report(y, preds, labels)


def save_model(path, model):
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh, indent=2)
        fh.write("\n")


def load_model(path):
    with open(path) as fh:
        return RegressionModel.from_dict(json.load(fh))


def write_report_csv(path, report, label_name="timestep"):
    labels = report.labels or tuple(range(report.actual.size))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow((label_name, "actual", "predicted", "absolute_error"))
        for lab, a, p, e in zip(labels, report.actual, report.predicted, report.absolute_error):
            w.writerow([lab, repr(float(a)), repr(float(p)), repr(float(e))])
