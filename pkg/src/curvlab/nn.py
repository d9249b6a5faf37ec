"""Sequential MLPs: forward capture and analytic Jacobian machinery.

Layer indices always refer to positions in ``Network.layers`` (activation
layers included). Parameters of a linear layer are the combined matrix
``[W b]`` acting on the augmented input ``[x; 1]`` whenever the layer has a
bias and ``include_bias`` is true.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
import json
import math
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, DimensionError, UnsupportedLayerError
from .tensor_core import FlattenOrder, as_order, flatten, kron, unflatten


class ActivationKind(str, Enum):
    RELU = "relu"
    TANH = "tanh"
    SIGMOID = "sigmoid"
    IDENTITY = "identity"


SMOOTH_ACTIVATIONS = frozenset({ActivationKind.TANH, ActivationKind.SIGMOID, ActivationKind.IDENTITY})


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass(frozen=True)
class Linear:
    weight: np.ndarray
    bias: Optional[np.ndarray] = None

    def __post_init__(self):
        w = np.atleast_2d(np.array(self.weight, dtype=np.float64))
        w.setflags(write=False)
        object.__setattr__(self, "weight", w)
        if self.bias is not None:
            b = np.array(self.bias, dtype=np.float64).reshape(-1)
            if b.size != w.shape[0]:
                raise DimensionError(f"bias of length {b.size} for weight of shape {w.shape}")
            b.setflags(write=False)
            object.__setattr__(self, "bias", b)

    @property
    def in_dim(self):
        return self.weight.shape[1]

    @property
    def out_dim(self):
        return self.weight.shape[0]

    def augments(self, include_bias=True):
        return include_bias and self.bias is not None

    def param_shape(self, include_bias=True):
        return (self.out_dim, self.in_dim + int(self.augments(include_bias)))

    def num_params(self, include_bias=True):
        return math.prod(self.param_shape(include_bias))

    def combined_weight(self, include_bias=True):
        """``[W b]`` (or ``W`` alone when there is no bias to include)."""
        if self.augments(include_bias):
            return np.hstack([self.weight, self.bias[:, None]])
        return np.array(self.weight)

    def augment(self, x, include_bias=True):
        """Append a trailing one to inputs (last axis) when the bias is included."""
        x = np.asarray(x, dtype=np.float64)
        if not self.augments(include_bias):
            return x
        return np.concatenate([x, np.ones(x.shape[:-1] + (1,))], axis=-1)

    def forward(self, x):
        z = x @ self.weight.T
        return z + self.bias if self.bias is not None else z


@dataclass(frozen=True)
class Activation:
    kind: ActivationKind

    def __post_init__(self):
        object.__setattr__(self, "kind", ActivationKind(self.kind))

    def forward(self, x):
        if self.kind is ActivationKind.RELU:
            return np.maximum(x, 0.0)
        if self.kind is ActivationKind.TANH:
            return np.tanh(x)
        if self.kind is ActivationKind.SIGMOID:
            return _sigmoid(x)
        return np.array(x, dtype=np.float64)

    def derivative(self, x):
        # ReLU'(0) := 0
        if self.kind is ActivationKind.RELU:
            return (x > 0).astype(np.float64)
        if self.kind is ActivationKind.TANH:
            return 1.0 - np.tanh(x) ** 2
        if self.kind is ActivationKind.SIGMOID:
            s = _sigmoid(x)
            return s * (1.0 - s)
        return np.ones_like(x, dtype=np.float64)


Layer = Union[Linear, Activation]


class Network:
    """An immutable stack of layers ``f = f_L ∘ ... ∘ f_1``."""

    def __init__(self, layers: Sequence[Layer], input_dim: Optional[int] = None):
        self.layers = tuple(layers)
        if not self.layers:
            raise ConfigError("a network needs at least one layer")
        dim = input_dim
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Linear):
                if dim is not None and layer.in_dim != dim:
                    raise DimensionError(f"layer {i} expects width {layer.in_dim}, receives {dim}")
                dim = layer.out_dim
            elif not isinstance(layer, Activation):
                raise UnsupportedLayerError(f"layer {i} has unsupported type {type(layer).__name__}")
        if dim is None:
            raise ConfigError("input_dim is required for a network without linear layers")
        self.output_dim = dim
        self.input_dim = input_dim if input_dim is not None else next(
            l.in_dim for l in self.layers if isinstance(l, Linear)
        )

    def __repr__(self):
        parts = [
            f"Linear({l.in_dim}->{l.out_dim}{', bias' if l.bias is not None else ''})"
            if isinstance(l, Linear)
            else l.kind.value
            for l in self.layers
        ]
        return f"Network([{', '.join(parts)}])"

    @property
    def linear_indices(self):
        return tuple(i for i, l in enumerate(self.layers) if isinstance(l, Linear))

    def is_smooth(self):
        return all(l.kind in SMOOTH_ACTIVATIONS for l in self.layers if isinstance(l, Activation))

    def is_deep_linear(self):
        return all(
            isinstance(l, Linear) or l.kind is ActivationKind.IDENTITY for l in self.layers
        )

    def param_shapes(self, include_bias=True):
        return [self.layers[i].param_shape(include_bias) for i in self.linear_indices]

    def num_params(self, include_bias=True):
        return sum(math.prod(s) for s in self.param_shapes(include_bias))

    def param_offsets(self, include_bias=True):
        """``{layer_index: (start, stop)}`` into the concatenated parameter vector."""
        out, start = {}, 0
        for i in self.linear_indices:
            stop = start + self.layers[i].num_params(include_bias)
            out[i] = (start, stop)
            start = stop
        return out

    def parameters(self, order=FlattenOrder.CVEC):
        """All combined weights, flattened in ``order`` and concatenated in forward order."""
        vecs = [flatten(self.layers[i].combined_weight(), order) for i in self.linear_indices]
        return np.concatenate(vecs) if vecs else np.zeros(0)

    def with_parameters(self, theta, order=FlattenOrder.CVEC):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.size != self.num_params():
            raise DimensionError(f"expected {self.num_params()} parameters, got {theta.size}")
        layers = list(self.layers)
        for i, (start, stop) in self.param_offsets().items():
            lin = layers[i]
            wt = unflatten(theta[start:stop], lin.param_shape(), order)
            if lin.bias is not None:
                layers[i] = Linear(wt[:, :-1], wt[:, -1])
            else:
                layers[i] = Linear(wt)
        return Network(layers, self.input_dim)

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        for layer in self.layers:
            x = layer.forward(x)
        return x


@dataclass(frozen=True)
class Capture:
    """Per-layer inputs and outputs recorded during a forward pass.

    ``layer_inputs[i]`` and ``layer_outputs[i]`` are ``N x dim`` arrays.
    """

    network: Network
    layer_inputs: tuple
    layer_outputs: tuple

    @property
    def prediction(self):
        return self.layer_outputs[-1]

    @property
    def num_data(self):
        return self.layer_inputs[0].shape[0]

    def check_layer(self, layer_index):
        if not 0 <= layer_index < len(self.network.layers):
            raise IndexError(f"layer index {layer_index} out of range")

    def check_datum(self, datum):
        if not 0 <= datum < self.num_data:
            raise IndexError(f"datum index {datum} out of range")


def forward_capture(net: Network, inputs) -> Capture:
    x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    if x.shape[1] != net.input_dim:
        raise DimensionError(f"inputs have width {x.shape[1]}, network expects {net.input_dim}")
    ins, outs = [], []
    for layer in net.layers:
        ins.append(x)
        x = layer.forward(x)
        outs.append(x)
    for arr in ins + outs:
        arr.setflags(write=False)
    return Capture(net, tuple(ins), tuple(outs))


# --------------------------------------------------------------------------
# per-datum Jacobians
# --------------------------------------------------------------------------


def linear_param_jacobian(x, d_out, order=FlattenOrder.CVEC, with_bias=False):
    """Jacobian of ``z = W̃ x̃`` w.r.t. the flattened ``W̃``.

    ``x̃ᵀ ⊗ I`` for cvec and ``I ⊗ x̃ᵀ`` for rvec.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if with_bias:
        x = np.append(x, 1.0)
    eye = np.eye(d_out)
    if as_order(order) is FlattenOrder.CVEC:
        return kron(x[None, :], eye)
    return kron(eye, x[None, :])


def layer_input_jacobian(layer: Layer, x):
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if isinstance(layer, Linear):
        if x.size != layer.in_dim:
            raise DimensionError(f"input of length {x.size} for layer with width {layer.in_dim}")
        return np.array(layer.weight)
    return np.diag(layer.derivative(x))


def net_jacobian_from_layer(capture: Capture, layer_index, datum):
    """``J_{x^(i)_n} f_n``: prediction w.r.t. the output of layer ``i``."""
    capture.check_layer(layer_index)
    capture.check_datum(datum)
    layers = capture.network.layers
    jac = np.eye(capture.network.output_dim)
    for j in range(len(layers) - 1, layer_index, -1):
        jac = jac @ layer_input_jacobian(layers[j], capture.layer_inputs[j][datum])
    return jac


def _vjp_layer(layer, x, v):
    if isinstance(layer, Linear):
        return v @ layer.weight
    return v * layer.derivative(x)


def _jvp_layer(layer, x, u):
    if isinstance(layer, Linear):
        return u @ layer.weight.T
    return u * layer.derivative(x)


def vjp_to_layer(capture: Capture, layer_index, datum, v):
    """``(J_{x^(i)_n} f_n)^T v`` by backward accumulation."""
    capture.check_layer(layer_index)
    capture.check_datum(datum)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.size != capture.network.output_dim:
        raise DimensionError(f"vector of length {v.size}, prediction has {capture.network.output_dim}")
    layers = capture.network.layers
    for j in range(len(layers) - 1, layer_index, -1):
        v = _vjp_layer(layers[j], capture.layer_inputs[j][datum], v)
    return v


def jvp_from_layer(capture: Capture, layer_index, datum, u):
    """``(J_{x^(i)_n} f_n) u`` by forward accumulation."""
    capture.check_layer(layer_index)
    capture.check_datum(datum)
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    if u.size != capture.layer_outputs[layer_index].shape[1]:
        raise DimensionError("tangent does not match the layer output width")
    layers = capture.network.layers
    for j in range(layer_index + 1, len(layers)):
        u = _jvp_layer(layers[j], capture.layer_inputs[j][datum], u)
    return u


def _linear_at(capture, layer_index):
    capture.check_layer(layer_index)
    layer = capture.network.layers[layer_index]
    if not isinstance(layer, Linear):
        raise UnsupportedLayerError(f"layer {layer_index} ({layer.kind.value}) has no parameters")
    return layer


def net_param_jacobian(capture: Capture, layer_index, datum, order=FlattenOrder.CVEC, include_bias=True):
    """Prediction Jacobian w.r.t. the flattened combined weight of a linear layer."""
    layer = _linear_at(capture, layer_index)
    down = net_jacobian_from_layer(capture, layer_index, datum)
    local = linear_param_jacobian(
        capture.layer_inputs[layer_index][datum], layer.out_dim, order, layer.augments(include_bias)
    )
    return down @ local


# --------------------------------------------------------------------------
# batched versions used for curvature assembly
# --------------------------------------------------------------------------


def backprop_to_layer(capture: Capture, layer_index, vectors):
    """Batched VJP: ``vectors`` is ``N x K x C``, result ``N x K x D_out(i)``."""
    capture.check_layer(layer_index)
    v = np.asarray(vectors, dtype=np.float64)
    if v.ndim != 3 or v.shape[0] != capture.num_data or v.shape[2] != capture.network.output_dim:
        raise DimensionError(f"expected N x K x {capture.network.output_dim} vectors, got {v.shape}")
    layers = capture.network.layers
    for j in range(len(layers) - 1, layer_index, -1):
        layer = layers[j]
        if isinstance(layer, Linear):
            v = v @ layer.weight
        else:
            v = v * layer.derivative(capture.layer_inputs[j])[:, None, :]
    return v


def output_jacobians(capture: Capture, layer_index):
    """``N x C x D_out(i)`` stack of :func:`net_jacobian_from_layer`."""
    eye = np.broadcast_to(np.eye(capture.network.output_dim), (capture.num_data,) + (capture.network.output_dim,) * 2)
    return backprop_to_layer(capture, layer_index, eye)


def _outer_flat(g, xt, order):
    # g: (..., D_out), xt: (..., D_in~); flattened outer product g x̃ᵀ
    if as_order(order) is FlattenOrder.CVEC:
        out = xt[..., :, None] * g[..., None, :]
    else:
        out = g[..., :, None] * xt[..., None, :]
    return out.reshape(out.shape[:-2] + (-1,))


def pullback_to_params(capture: Capture, layer_index, grads, order=FlattenOrder.CVEC, include_bias=True):
    """Map layer-output vectors ``N x K x D_out`` to parameter space ``N x K x P``.

    Each result is ``vec(g x̃ᵀ)``, i.e. ``(J^vec_W̃ z)ᵀ g``.
    """
    layer = _linear_at(capture, layer_index)
    xt = layer.augment(capture.layer_inputs[layer_index], include_bias)
    grads = np.asarray(grads, dtype=np.float64)
    return _outer_flat(grads, xt[:, None, :], order)


def param_jacobians(capture: Capture, layer_index, order=FlattenOrder.CVEC, include_bias=True):
    """``N x C x P`` stack of :func:`net_param_jacobian`."""
    _linear_at(capture, layer_index)
    return pullback_to_params(capture, layer_index, output_jacobians(capture, layer_index), order, include_bias)


def full_param_jacobians(capture: Capture, order=FlattenOrder.CVEC, include_bias=True):
    """``N x C x D`` Jacobian w.r.t. all linear-layer parameters, in forward order."""
    blocks = [param_jacobians(capture, i, order, include_bias) for i in capture.network.linear_indices]
    return np.concatenate(blocks, axis=2)


# --------------------------------------------------------------------------
# construction and the JSON network spec
# --------------------------------------------------------------------------


def seeded_linear(d_in, d_out, seed, scale=None, bias=True):
    rng = np.random.default_rng(seed)
    scale = 1.0 / math.sqrt(d_in) if scale is None else scale
    w = scale * rng.standard_normal((d_out, d_in))
    b = scale * rng.standard_normal(d_out) if bias else None
    return Linear(w, b)


def mlp(dims, activation="relu", seed=0, bias=True, scale=None):
    """Fully-connected net ``dims[0] -> ... -> dims[-1]``; no activation after the last layer."""
    layers = []
    for k, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
        layers.append(seeded_linear(d_in, d_out, seed + k, scale, bias))
        if k < len(dims) - 2 and activation is not None:
            layers.append(Activation(activation))
    return Network(layers, dims[0])


def network_from_spec(spec) -> Network:
    """Build a network from the JSON layer list (or ``{"layers": [...]}``)."""
    if isinstance(spec, dict):
        spec = spec.get("layers")
    if not isinstance(spec, list) or not spec:
        raise ConfigError("network spec must be a nonempty list of layers")
    layers, input_dim = [], None
    for k, entry in enumerate(spec):
        if not isinstance(entry, dict) or "type" not in entry:
            raise ConfigError(f"layer {k}: expected an object with a 'type' field")
        kind = str(entry["type"]).lower()
        if kind != "linear":
            try:
                layers.append(Activation(ActivationKind(kind)))
            except ValueError:
                raise ConfigError(f"layer {k}: unknown layer type {kind!r}") from None
            continue
        try:
            d_in, d_out = int(entry["in"]), int(entry["out"])
        except (KeyError, TypeError, ValueError):
            raise ConfigError(f"layer {k}: linear layers need integer 'in' and 'out'") from None
        has_bias = bool(entry.get("bias", True))
        weights = entry.get("weights", {"init": "seeded-normal", "seed": k})
        if isinstance(weights, dict):
            if weights.get("init", "seeded-normal") != "seeded-normal":
                raise ConfigError(f"layer {k}: unknown init {weights.get('init')!r}")
            layer = seeded_linear(d_in, d_out, int(weights.get("seed", k)), weights.get("scale"), has_bias)
        else:
            w = np.asarray(weights, dtype=np.float64)
            if w.shape != (d_out, d_in):
                raise ConfigError(f"layer {k}: weights have shape {w.shape}, expected {(d_out, d_in)}")
            b = None
            if has_bias:
                b = np.asarray(entry.get("bias_values", np.zeros(d_out)), dtype=np.float64)
                if b.shape != (d_out,):
                    raise ConfigError(f"layer {k}: bias_values must have length {d_out}")
            layer = Linear(w, b)
        if input_dim is None and not layers:
            input_dim = d_in
        layers.append(layer)
    if input_dim is None:
        linear = [l for l in layers if isinstance(l, Linear)]
        if not linear:
            raise ConfigError("network spec has no linear layer; cannot infer input width")
        input_dim = linear[0].in_dim
    try:
        return Network(layers, input_dim)
    except DimensionError as exc:
        raise ConfigError(str(exc)) from None


def network_to_spec(net: Network):
    out = []
    for layer in net.layers:
        if isinstance(layer, Linear):
            entry = {
                "type": "linear",
                "in": layer.in_dim,
                "out": layer.out_dim,
                "bias": layer.bias is not None,
                "weights": layer.weight.tolist(),
            }
            if layer.bias is not None:
                entry["bias_values"] = layer.bias.tolist()
            out.append(entry)
        else:
            out.append({"type": layer.kind.value})
    return out


def load_network(path) -> Network:
    try:
        with open(path) as fh:
            spec = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read network spec {path}: {exc}") from None
    return network_from_spec(spec)
