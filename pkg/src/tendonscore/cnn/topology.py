"""Layer specifications and shape chaining for the feature extractor."""
from __future__ import annotations

from dataclasses import dataclass

from ..errors import ShapeError

LAYER_KINDS = ("convolution", "relu", "local-response-norm", "max-pool",
               "fully-connected", "softmax")

# Canonical response-normalisation constants.
LRN_DEPTH = 5
LRN_ALPHA = 1e-4
LRN_BETA = 0.75
LRN_K = 2.0


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    name: str = ""
    in_channels: int = 0
    out_channels: int = 0
    kernel: int = 0
    stride: int = 1
    padding: int = 0
    groups: int = 1
    in_features: int = 0
    out_features: int = 0

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ShapeError(f"unknown layer kind {self.kind!r}")

    @property
    def trainable(self):
        return self.kind in ("convolution", "fully-connected")

    def parameter_shapes(self):
        """(weight shape, bias shape) for trainable layers."""
        if self.kind == "convolution":
            return ((self.out_channels, self.in_channels // self.groups,
                     self.kernel, self.kernel), (self.out_channels,))
        if self.kind == "fully-connected":
            return (self.out_features, self.in_features), (self.out_features,)
        return ()

    def output_shape(self, shape):
        """Shape produced from input ``shape``; raises ShapeError on mismatch."""
        if self.kind == "convolution":
            if len(shape) != 3 or shape[0] != self.in_channels:
                raise ShapeError(f"{self.name}: expected {self.in_channels} input channels, got {shape}")
            if self.in_channels % self.groups or self.out_channels % self.groups:
                raise ShapeError(f"{self.name}: channels not divisible by groups={self.groups}")
            c, h, w = shape
            oh = (h + 2 * self.padding - self.kernel) // self.stride + 1
            ow = (w + 2 * self.padding - self.kernel) // self.stride + 1
            if oh < 1 or ow < 1:
                raise ShapeError(f"{self.name}: kernel {self.kernel} does not fit input {shape}")
            return (self.out_channels, oh, ow)
        if self.kind == "max-pool":
            c, h, w = shape
            oh = (h - self.kernel) // self.stride + 1
            ow = (w - self.kernel) // self.stride + 1
            if oh < 1 or ow < 1:
                raise ShapeError(f"{self.name}: pool window does not fit input {shape}")
            return (c, oh, ow)
        if self.kind == "fully-connected":
            n = 1
            for d in shape:
                n *= d
            if n != self.in_features:
                raise ShapeError(f"{self.name}: expected {self.in_features} inputs, got {n} from {shape}")
            return (self.out_features,)
        return tuple(shape)


def conv(name, cin, cout, kernel, stride=1, padding=0, groups=1):
    return LayerSpec("convolution", name, cin, cout, kernel, stride, padding, groups)


def fc(name, n_in, n_out):
    return LayerSpec("fully-connected", name, in_features=n_in, out_features=n_out)


def relu(name=""):
    return LayerSpec("relu", name)


def lrn(name=""):
    return LayerSpec("local-response-norm", name)


def max_pool(name="", kernel=3, stride=2):
    return LayerSpec("max-pool", name, kernel=kernel, stride=stride)


def alexnet_fc6():
    """AlexNet trunk up to and including the ReLU after fc6.

    Grouped convolutions (groups=2) in conv2, conv4 and conv5 follow the
    original two-tower layout so converted weights load unchanged.
    """
    return [
        conv("conv1", 3, 96, 11, stride=4), relu("relu1"), lrn("norm1"), max_pool("pool1"),
        conv("conv2", 96, 256, 5, padding=2, groups=2), relu("relu2"), lrn("norm2"), max_pool("pool2"),
        conv("conv3", 256, 384, 3, padding=1), relu("relu3"),
        conv("conv4", 384, 384, 3, padding=1, groups=2), relu("relu4"),
        conv("conv5", 384, 256, 3, padding=1, groups=2), relu("relu5"), max_pool("pool5"),
        fc("fc6", 256 * 6 * 6, 4096), relu("relu6"),
    ]


def classifier_head(hidden=4096, n_in=4096, n_classes=2):
    """fc7 (ReLU) and fc8 followed by softmax."""
    return [fc("fc7", n_in, hidden), relu("relu7"), fc("fc8", hidden, n_classes),
            LayerSpec("softmax", "prob")]


def chain_shapes(layers, input_shape):
    """Propagate ``input_shape`` through ``layers``; returns every output shape."""
    shapes = []
    shape = tuple(input_shape)
    for layer in layers:
        shape = layer.output_shape(shape)
        shapes.append(shape)
    return shapes
