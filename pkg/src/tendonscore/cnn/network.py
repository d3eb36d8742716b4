"""Forward inference through the truncated feature extractor."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..errors import ShapeError
from ..imaging import PreparedTensor
from . import topology
from .weights import validate

FEATURE_DIM = 4096


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray  # float32, post-ReLU fc6 activations
    slice_index: int = 0


def conv2d(x, weight, bias, stride=1, padding=0, groups=1, backend=None):
    """Grouped 2-D cross-correlation of a (C, H, W) tensor.

    Output spatial size is ``(in + 2*padding - k) // stride + 1``.
    Inputs are cast to float32; sums are accumulated in float64.
    """
    x = np.ascontiguousarray(x, dtype=np.float32)
    weight = np.ascontiguousarray(weight, dtype=np.float32)
    bias = np.ascontiguousarray(bias, dtype=np.float32)
    if x.ndim != 3 or weight.ndim != 4 or bias.ndim != 1:
        raise ShapeError("conv2d expects input (C,H,W), weight (O,C/g,kh,kw), bias (O,)")
    c, h, w = x.shape
    o, cg, kh, kw = weight.shape
    if groups < 1 or c % groups or o % groups:
        raise ShapeError(f"channels {c}->{o} not divisible by groups={groups}")
    if cg != c // groups:
        raise ShapeError(f"weight expects {cg} channels per group, input has {c // groups}")
    if bias.shape[0] != o:
        raise ShapeError(f"bias has {bias.shape[0]} entries for {o} output channels")
    if stride < 1 or padding < 0:
        raise ShapeError("stride must be >= 1 and padding >= 0")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise ShapeError(f"kernel {kh}x{kw} does not fit padded input {h}x{w}+{padding}")
    return kernels.get_backend(backend).conv2d(x, weight, bias, int(stride), int(padding), int(groups))


class FeatureExtractor:
    """Bound weights plus topology; evaluates slices to fc activations.

    Fully connected weights are kept as float64 copies so repeated calls
    do not pay the conversion again.
    """

    def __init__(self, weights, layers=None, backend=None):
        self.layers = topology.alexnet_fc6() if layers is None else list(layers)
        validate(weights, self.layers)
        self.weights = weights
        self.kernels = kernels.get_backend(backend)
        self._fc = {
            layer.name: (weights[f"{layer.name}.weight"].astype(np.float64),
                         weights[f"{layer.name}.bias"].astype(np.float64))
            for layer in self.layers if layer.kind == "fully-connected"
        }

    def __call__(self, x):
        if isinstance(x, PreparedTensor):
            x = x.values
        x = np.ascontiguousarray(x, dtype=np.float32)
        topology.chain_shapes(self.layers, x.shape)
        k = self.kernels
        for layer in self.layers:
            if layer.kind == "convolution":
                x = k.conv2d(x, self.weights[f"{layer.name}.weight"],
                             self.weights[f"{layer.name}.bias"],
                             layer.stride, layer.padding, layer.groups)
            elif layer.kind == "relu":
                x = np.maximum(x, np.float32(0.0))
            elif layer.kind == "local-response-norm":
                x = k.local_response_norm(x, topology.LRN_DEPTH, topology.LRN_ALPHA,
                                          topology.LRN_BETA, topology.LRN_K)
            elif layer.kind == "max-pool":
                x = k.max_pool(x, layer.kernel, layer.stride)
            elif layer.kind == "fully-connected":
                w, b = self._fc[layer.name]
                x = (w @ x.reshape(-1).astype(np.float64) + b).astype(np.float32)
            elif layer.kind == "softmax":
                x = softmax(x.astype(np.float64)).astype(np.float32)
            x = np.ascontiguousarray(x)
        return x

    def features(self, tensor, slice_index=0):
        return FeatureVector(self(tensor), slice_index)

    def batch(self, tensors):
        """Stack features for ``tensors`` into an (n, d) float32 matrix."""
        return np.stack([self(t) for t in tensors]) if tensors else np.empty((0, FEATURE_DIM), np.float32)


def forward_features(tensor, weights, layers=None, backend=None, slice_index=0):
    """fc6 activations (post-ReLU) of one prepared slice."""
    return FeatureExtractor(weights, layers, backend).features(tensor, slice_index)


def softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)
