"""Patient-level k-fold splits and the cross-validated classification harness."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..cnn.head import pack_head, predict, train_head
from ..errors import DegenerateDataError, DomainError


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    assignment: dict  # patient id -> fold index

    def members(self, fold):
        return sorted(p for p, f in self.assignment.items() if f == fold)

    def sizes(self):
        return [len(self.members(f)) for f in range(self.k)]

    def arrangement(self, i):
        """(train folds, validation fold, test fold) for rotation ``i``."""
        test = i % self.k
        val = (i + 1) % self.k
        return [f for f in range(self.k) if f not in (test, val)], val, test


@dataclass(frozen=True)
class HeadConfig:
    epochs: int = 100
    learning_rate: float = 0.5
    hidden: int = 32
    seed: int = 0
    adaptive: bool = True


@dataclass(frozen=True)
class CrossvalResult:
    accuracies: tuple  # percent, one per arrangement
    average: float
    min: float
    max: float
    sd: float

    def to_dict(self):
        return {"accuracies": list(self.accuracies), "average": self.average,
                "min": self.min, "max": self.max, "sd": self.sd}


def kfold_split(patients, k, seed, groups=None):
    """Seeded shuffle, then round-robin over folds.

    With ``groups`` (patient -> label), each group is shuffled separately and
    the groups are dealt one after another, so every fold receives a near
    equal share of each group while total fold sizes still differ by at most
    one.
    """
    patients = list(patients)
    ids = sorted(set(patients))
    if len(ids) != len(patients):
        raise DomainError("patient ids must be unique")
    if k < 2:
        raise DomainError(f"k must be >= 2, got {k}")
    if k > len(ids):
        raise DomainError(f"k={k} exceeds the number of patients ({len(ids)})")
    rng = np.random.default_rng(seed)
    if groups is None:
        order = [ids[i] for i in rng.permutation(len(ids))]
    else:
        order = []
        for g in sorted({groups[p] for p in ids}):
            members = [p for p in ids if groups[p] == g]
            order.extend(members[i] for i in rng.permutation(len(members)))
    return FoldAssignment(k, {p: i % k for i, p in enumerate(order)})


def accuracy_statistics(accuracies):
    """Average, min, max and sample standard deviation of fold accuracies."""
    a = [float(v) for v in accuracies]
    if not a:
        raise DomainError("no accuracies to summarise")
    mean = math.fsum(a) / len(a)
    sd = math.sqrt(math.fsum((v - mean) ** 2 for v in a) / (len(a) - 1)) if len(a) > 1 else 0.0
    return CrossvalResult(tuple(a), mean, min(a), max(a), sd)


def crossval_classify(features, labels, patients, k=5, seed=0, config=HeadConfig(), groups=None):
    """Rotate (k-2 train, 1 validation, 1 test) folds and report test accuracy.

    Features are centred on the training-split mean and divided by the
    root-mean-square norm of the centred training rows. Both are folded back
    into fc7 so the head applies to raw features. The validation fold picks
    the training epoch whose weights are kept.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels).astype(np.intp)
    pat = np.asarray(patients)
    if x.ndim != 2 or y.shape != (x.shape[0],) or pat.shape != y.shape:
        raise DomainError("features, labels and patients must align row-wise")
    if k < 3:
        raise DomainError("train/validation/test rotation needs k >= 3")
    if groups is None:
        groups = {}
        for p, lab in zip(pat.tolist(), y.tolist()):
            groups.setdefault(p, lab)
    folds = kfold_split(sorted(set(pat.tolist())), k, seed, groups)
    row_fold = np.array([folds.assignment[p] for p in pat.tolist()])

    accs = []
    for i in range(k):
        train_f, val_f, test_f = folds.arrangement(i)
        tr = np.isin(row_fold, train_f)
        va = row_fold == val_f
        te = row_fold == test_f
        if len(np.unique(y[tr])) < 2:
            raise DegenerateDataError(f"training split of arrangement {i} has a single class")
        centre = x[tr].mean(axis=0)
        scale = math.sqrt(float(np.mean(np.sum((x[tr] - centre) ** 2, axis=1)))) or 1.0
        xs = (x - centre) / scale
        best = {"acc": -1.0, "params": None}

        def track(epoch, loss, params):
            if not va.any():
                return
            w7, b7, w8, b8 = params
            logits = np.maximum(xs[va] @ w7.T + b7, 0.0) @ w8.T + b8
            acc = float(np.mean(np.argmax(logits, axis=1) == y[va]))
            if acc > best["acc"]:
                best["acc"] = acc
                best["params"] = tuple(p.copy() for p in params)

        head = train_head(xs[tr], y[tr], config.epochs, config.learning_rate,
                          config.seed + i, config.hidden, on_epoch=track, adaptive=config.adaptive)
        if best["params"] is not None:
            final_acc = float(np.mean(predict(xs[va], head) == y[va]))
            if final_acc < best["acc"]:
                head = pack_head(*best["params"])
        w7 = head["fc7.weight"].astype(np.float64) / scale
        b7 = head["fc7.bias"].astype(np.float64) - w7 @ centre
        head = pack_head(w7, b7, head["fc8.weight"], head["fc8.bias"])
        accs.append(100.0 * float(np.mean(predict(x[te], head) == y[te])))
    return accuracy_statistics(accs)
