"""Binary classifier head (fc7 -> ReLU -> fc8 -> softmax) and its training.

Class index 0 is healthy, 1 is injured. Head arithmetic runs in float64.
"""
from __future__ import annotations

import numpy as np

from ..errors import DegenerateDataError, ShapeError
from .network import FEATURE_DIM, FeatureVector, softmax
from .weights import NetworkWeights, WeightRecord

HEALTHY, INJURED = 0, 1
_MIN_RATE = 1e-12  # adaptive descent stops once no step this small lowers the loss


def _unpack(head, n_in=None):
    try:
        w7, b7 = head["fc7.weight"].astype(np.float64), head["fc7.bias"].astype(np.float64)
        w8, b8 = head["fc8.weight"].astype(np.float64), head["fc8.bias"].astype(np.float64)
    except KeyError as exc:
        raise ShapeError(f"head is missing record {exc}") from None
    hidden = w7.shape[0]
    if n_in is not None and w7.shape[1] != n_in:
        raise ShapeError(f"fc7 expects {w7.shape[1]} inputs, got {n_in}")
    if b7.shape != (hidden,) or w8.shape != (2, hidden) or b8.shape != (2,):
        raise ShapeError(
            f"head shapes do not chain: fc7 {w7.shape}/{b7.shape}, fc8 {w8.shape}/{b8.shape}"
        )
    return w7, b7, w8, b8


def pack_head(w7, b7, w8, b8):
    return NetworkWeights([
        WeightRecord("fc7.weight", w7.shape, w7.astype(np.float32)),
        WeightRecord("fc7.bias", b7.shape, b7.astype(np.float32)),
        WeightRecord("fc8.weight", w8.shape, w8.astype(np.float32)),
        WeightRecord("fc8.bias", b8.shape, b8.astype(np.float32)),
    ])


def init_head(seed, hidden=FEATURE_DIM, n_in=FEATURE_DIM):
    """Uniform [-0.01, 0.01] initialisation from ``seed``."""
    rng = np.random.default_rng(seed)
    return pack_head(rng.uniform(-0.01, 0.01, (hidden, n_in)),
                 rng.uniform(-0.01, 0.01, hidden),
                 rng.uniform(-0.01, 0.01, (2, hidden)),
                 rng.uniform(-0.01, 0.01, 2))


def head_logits(features, head):
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    w7, b7, w8, b8 = _unpack(head, x.shape[1])
    return np.maximum(x @ w7.T + b7, 0.0) @ w8.T + b8


def forward_classify(feature, head):
    """(p_healthy, p_injured) for one feature vector."""
    values = feature.values if isinstance(feature, FeatureVector) else feature
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1:
        raise ShapeError("forward_classify takes a single feature vector")
    return softmax(head_logits(values, head)[0])


def predict(features, head):
    """Class indices for each row of ``features``."""
    return np.argmax(head_logits(features, head), axis=1)


def loss_and_grad(params, x, y):
    """Mean cross-entropy and its gradient for ``params = (w7, b7, w8, b8)``."""
    w7, b7, w8, b8 = params
    n = x.shape[0]
    z1 = x @ w7.T + b7
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ w8.T + b8
    z2 = z2 - z2.max(axis=1, keepdims=True)
    logp = z2 - np.log(np.exp(z2).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(n), y].mean()
    dz2 = np.exp(logp)
    dz2[np.arange(n), y] -= 1.0
    dz2 /= n
    gw8 = dz2.T @ a1
    gb8 = dz2.sum(axis=0)
    dz1 = (dz2 @ w8) * (z1 > 0)
    gw7 = dz1.T @ x
    gb7 = dz1.sum(axis=0)
    return loss, (gw7, gb7, gw8, gb8)


def stable_learning_rate(features):
    """Step size below which full-batch descent has not been seen to increase the loss.

    Heuristic: ``1 / (1 + mean squared row norm)``. For unit-scale features
    this is about 0.5.
    """
    x = np.asarray(features, dtype=np.float64)
    return 1.0 / (1.0 + float(np.mean(np.sum(x * x, axis=1))))


def train_head(features, labels, epochs, learning_rate, seed, hidden=FEATURE_DIM,
               on_epoch=None, adaptive=False):
    """Full-batch gradient descent on the head's cross-entropy.

    Parameters
    ----------
    features : (n, d) array
        fc6 activations, one row per slice.
    labels : (n,) array of {0, 1}
        0 = healthy, 1 = injured.
    epochs : int
        Number of full-batch steps. Zero returns the initialisation.
    learning_rate : float
        Step size; see :func:`stable_learning_rate`.
    seed : int
        Seeds the uniform [-0.01, 0.01] initialisation.
    hidden : int
        Width of fc7.
    on_epoch : callable, optional
        Called as ``on_epoch(epoch, loss, weights_tuple)`` before each step's
        update is applied.
    adaptive : bool
        Backtracking step control: a step that would raise the loss is
        rejected and the rate halved; an accepted step grows the rate by
        10%. The loss is then non-increasing for any starting rate.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels).astype(np.intp)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ShapeError("features must be (n, d) with one label per row")
    if not np.isin(y, (0, 1)).all():
        raise ShapeError("labels must be 0 (healthy) or 1 (injured)")
    if len(np.unique(y)) < 2:
        raise DegenerateDataError("training labels contain a single class")
    head = init_head(seed, hidden, x.shape[1])
    if epochs <= 0:
        return head
    params = list(_unpack(head))
    if adaptive:
        return pack_head(*_descend_adaptive(params, x, y, epochs, learning_rate, on_epoch))
    for epoch in range(epochs):
        loss, grads = loss_and_grad(params, x, y)
        if on_epoch is not None:
            on_epoch(epoch, loss, tuple(params))
        for p, g in zip(params, grads):
            p -= learning_rate * g
    return pack_head(*params)


def _descend_adaptive(params, x, y, epochs, rate, on_epoch):
    loss, grads = loss_and_grad(params, x, y)
    for epoch in range(epochs):
        if on_epoch is not None:
            on_epoch(epoch, loss, tuple(params))
        while True:
            trial = [p - rate * g for p, g in zip(params, grads)]
            trial_loss, trial_grads = loss_and_grad(trial, x, y)
            if trial_loss <= loss:
                break
            rate *= 0.5
            if rate < _MIN_RATE:
                return params
        params, loss, grads = trial, trial_loss, trial_grads
        rate *= 1.1
    return params


def cross_entropy(features, labels, head):
    x = np.asarray(features, dtype=np.float64)
    return loss_and_grad(_unpack(head, x.shape[1]), x, np.asarray(labels).astype(np.intp))[0]
