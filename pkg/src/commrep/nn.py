"""Dense feed-forward networks on top of the tape autodiff."""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import ConfigurationError

ACTIVATIONS = ("linear", "tanh", "relu")

_PLAIN = {
    "linear": lambda x: x,
    "tanh": np.tanh,
    "relu": lambda x: np.maximum(x, 0.0),
}


class Parameter:
    """A named trainable array."""

    __slots__ = ("name", "value")

    def __init__(self, name, value):
        self.name = name
        self.value = np.asarray(value, dtype=float)

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.value.shape})"


class Layer:
    def __init__(self, weight: Parameter, bias: Parameter, activation: str):
        if activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {activation!r}")
        self.weight = weight
        self.bias = bias
        self.activation = activation


class DenseNetwork:
    """Fully connected network; weights stored as (fan_in, fan_out) matrices."""

    def __init__(self, layers, name="net"):
        self.layers = layers
        self.name = name
        for prev, nxt in zip(layers, layers[1:]):
            if prev.weight.value.shape[1] != nxt.weight.value.shape[0]:
                raise ConfigurationError(f"layer dims do not chain in {name}")
        self.input_dim = layers[0].weight.value.shape[0]
        self.output_dim = layers[-1].weight.value.shape[1]

    @classmethod
    def build(cls, sizes, rng, hidden_activation="tanh",
              output_activation="linear", name="net"):
        """Create a network with scaled-uniform weights and zero biases.

        ``sizes`` lists the layer widths including input and output, e.g.
        (40, 64, 64, 3).
        """
        if len(sizes) < 2:
            raise ConfigurationError("need at least input and output sizes")
        layers = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = Parameter(f"{name}.l{i}.W", rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            b = Parameter(f"{name}.l{i}.b", np.zeros(fan_out))
            act = output_activation if i == len(sizes) - 2 else hidden_activation
            layers.append(Layer(w, b, act))
        return cls(layers, name=name)

    def parameters(self):
        out = []
        for layer in self.layers:
            out.append(layer.weight)
            out.append(layer.bias)
        return out

    def forward(self, tape, x):
        """Tape forward pass. ``x`` is a constant array or a node, shape (batch, input_dim)."""
        xv = ad.value_of(x)
        if xv.shape[-1] != self.input_dim:
            raise ConfigurationError(
                f"{self.name}: input width {xv.shape[-1]} != {self.input_dim}")
        h = x
        for layer in self.layers:
            h = ad.add(tape, ad.matmul(tape, h, ad.leaf(tape, layer.weight)),
                       ad.leaf(tape, layer.bias))
            if layer.activation == "tanh":
                h = ad.tanh(tape, h)
            elif layer.activation == "relu":
                h = ad.relu(tape, h)
        return h

    def forward_plain(self, x):
        """Numpy-only forward pass (no tape, no gradients)."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.input_dim:
            raise ConfigurationError(
                f"{self.name}: input width {x.shape[-1]} != {self.input_dim}")
        h = x
        for layer in self.layers:
            h = _PLAIN[layer.activation](h @ layer.weight.value + layer.bias.value)
        return h
