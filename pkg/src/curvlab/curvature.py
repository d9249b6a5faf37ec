"""Exact curvature matrices for sequential MLPs.

All curvatures share the form ``R Σ_n J_nᵀ [•] J_n`` with ``J_n`` the Jacobian
of the prediction w.r.t. the flattened parameters:

* GGN / type-II Fisher: ``[•] = H_n`` (criterion Hessian)
* MC type-I Fisher: ``[•] = (1/M) Σ_m g̃_nm g̃_nmᵀ`` (would-be gradients)
* empirical Fisher: ``[•] = g_n g_nᵀ`` (gradient at the true label)

The GGN is assembled from materialized Jacobians and Hessians; the type-II
Fisher from backpropagated Hessian-factor columns. Their agreement is tested,
not assumed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import _kernels
from .errors import ContractViolation, DimensionError, UnsupportedLayerError
from .losses import (
    Criterion,
    LossConfig,
    criterion_gradients,
    criterion_hessians,
    datum_rng,
    empirical_risk,
    hessian_factorizations,
    softmax,
    would_be_gradients,
)
from .nn import (
    Capture,
    Linear,
    Network,
    backprop_to_layer,
    forward_capture,
    full_param_jacobians,
    param_jacobians,
    pullback_to_params,
)
from .tensor_core import FlattenOrder, check_dense_size, as_order, is_symmetric, min_eigenvalue

SYMMETRY_TOL = 1e-10
PSD_TOL = 1e-8
FD_REL_STEP = 1e-5


@dataclass(frozen=True)
class Dataset:
    """Inputs ``N x D_in`` and targets (``N x C`` reals or ``N`` class indices)."""

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        y = np.asarray(self.targets)
        if y.shape[0] != x.shape[0]:
            raise DimensionError(f"{x.shape[0]} inputs but {y.shape[0]} targets")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets", y)

    def __len__(self):
        return self.inputs.shape[0]

    def subset(self, idx):
        return Dataset(self.inputs[idx], self.targets[idx])


# curvature kinds -------------------------------------------------------------


@dataclass(frozen=True)
class GGN:
    """Generalized Gauss-Newton, equal to the type-II Fisher for the supported losses."""

    name = "ggn"


@dataclass(frozen=True)
class MCFisher:
    """Type-I Fisher estimated with ``m_samples`` sampled labels per datum."""

    m_samples: int = 1
    seed: int = 0
    name = "fisher-mc"

    def __post_init__(self):
        if self.m_samples < 1:
            raise ValueError("m_samples must be >= 1")


@dataclass(frozen=True)
class EmpiricalFisher:
    name = "fisher-emp"


CurvatureKind = Union[GGN, MCFisher, EmpiricalFisher]


def kind_from_name(name, m_samples=1, seed=0) -> CurvatureKind:
    if name == "ggn":
        return GGN()
    if name == "fisher-mc":
        return MCFisher(m_samples, seed)
    if name == "fisher-emp":
        return EmpiricalFisher()
    raise ValueError(f"unknown curvature kind {name!r}")


@dataclass(frozen=True)
class CurvatureBlock:
    """A curvature matrix for one linear layer (or all layers when ``layer_index`` is None)."""

    layer_index: Optional[int]
    order: FlattenOrder
    matrix: np.ndarray
    kind: str = "ggn"
    reduction_factor: float = 1.0
    meta: dict = field(default_factory=dict)

    def validate(self, sym_tol=SYMMETRY_TOL, psd_tol=PSD_TOL):
        if not is_symmetric(self.matrix, sym_tol):
            raise ContractViolation(f"{self.kind} block for layer {self.layer_index} is not symmetric")
        lam = min_eigenvalue(self.matrix)
        if lam < -psd_tol:
            raise ContractViolation(f"{self.kind} block for layer {self.layer_index} has eigenvalue {lam:.3g}")
        return self


# backpropagated vectors --------------------------------------------------------


def backprop_vector_stack(kind: CurvatureKind, cfg: LossConfig, preds, targets):
    """Vectors ``▲_{n,c}`` for every datum as an ``N x K x C`` array, plus their weight.

    The curvature equals ``R * weight * Σ_{n,c} J_nᵀ ▲ ▲ᵀ J_n``. Sampled labels
    for datum ``n`` come from the stream keyed by ``(seed, n)``.
    """
    preds = np.asarray(preds, dtype=np.float64)
    if isinstance(kind, GGN):
        return np.swapaxes(hessian_factorizations(cfg, preds), 1, 2), 1.0
    if isinstance(kind, EmpiricalFisher):
        return criterion_gradients(cfg, preds, targets)[:, None, :], 1.0
    if isinstance(kind, MCFisher):
        m = kind.m_samples
        vecs = np.stack([would_be_gradients(cfg, f, datum_rng(kind.seed, n), m) for n, f in enumerate(preds)])
        return vecs, 1.0 / m
    raise TypeError(f"unsupported curvature kind {kind!r}")


# generic assembly ---------------------------------------------------------------


def ggn_from_jacobians(jacobians, hessians, factor):
    """``factor * Σ_n J_nᵀ H_n J_n`` for ``N x C x P`` Jacobians and ``N x C x C`` Hessians."""
    jacobians = np.asarray(jacobians, dtype=np.float64)
    hessians = np.asarray(hessians, dtype=np.float64)
    if jacobians.ndim != 3 or hessians.shape != (jacobians.shape[0],) + (jacobians.shape[1],) * 2:
        raise DimensionError(f"incompatible Jacobians {jacobians.shape} and Hessians {hessians.shape}")
    check_dense_size(jacobians.shape[2] ** 2, None)
    return factor * _kernels.sandwich_sum(jacobians, hessians)


def outer_product_sum(vectors, factor):
    """``factor * Σ_k v_k v_kᵀ`` for the rows of a ``K x P`` array."""
    vectors = np.asarray(vectors, dtype=np.float64)
    check_dense_size(vectors.shape[1] ** 2, None)
    return factor * _kernels.gram(np.asarray(vectors, dtype=np.float64))


def _prepare(net, data, cfg):
    cap = forward_capture(net, data.inputs)
    factor = cfg.factor(len(data), net.output_dim)
    return cap, factor


def _check_linear(net, layer):
    if not 0 <= layer < len(net.layers):
        raise IndexError(f"layer index {layer} out of range")
    if not isinstance(net.layers[layer], Linear):
        raise UnsupportedLayerError(f"layer {layer} ({net.layers[layer].kind.value}) has no parameters")


def _param_vectors(cap: Capture, vecs, order, include_bias, layers=None):
    """Pull ``N x K x C`` output-space vectors back to parameter space of the given layers."""
    layers = cap.network.linear_indices if layers is None else layers
    blocks = [
        pullback_to_params(cap, i, backprop_to_layer(cap, i, vecs), order, include_bias) for i in layers
    ]
    out = np.concatenate(blocks, axis=2)
    return out.reshape(-1, out.shape[2])


# GGN ----------------------------------------------------------------------------


def ggn_block(net: Network, data: Dataset, cfg: LossConfig, layer, order=FlattenOrder.CVEC, include_bias=True):
    """``R Σ_n J_nᵀ H_n J_n`` for the combined weight of one linear layer."""
    _check_linear(net, layer)
    order = as_order(order)
    cap, factor = _prepare(net, data, cfg)
    jac = param_jacobians(cap, layer, order, include_bias)
    mat = ggn_from_jacobians(jac, criterion_hessians(cfg, cap.prediction), factor)
    return CurvatureBlock(layer, order, mat, "ggn", factor)


def ggn_full(net: Network, data: Dataset, cfg: LossConfig, order=FlattenOrder.CVEC, include_bias=True):
    """GGN over all linear-layer parameters, including cross-layer blocks."""
    order = as_order(order)
    cap, factor = _prepare(net, data, cfg)
    jac = full_param_jacobians(cap, order, include_bias)
    mat = ggn_from_jacobians(jac, criterion_hessians(cfg, cap.prediction), factor)
    return CurvatureBlock(None, order, mat, "ggn", factor)


def type2_fisher_block(net, data, cfg, layer, order=FlattenOrder.CVEC, include_bias=True):
    """``R Σ_n Σ_c (J_nᵀ s_nc)(J_nᵀ s_nc)ᵀ`` with ``s_nc`` the Hessian-factor columns."""
    _check_linear(net, layer)
    order = as_order(order)
    cap, factor = _prepare(net, data, cfg)
    cols, _ = backprop_vector_stack(GGN(), cfg, cap.prediction, data.targets)
    mat = outer_product_sum(_param_vectors(cap, cols, order, include_bias, [layer]), factor)
    return CurvatureBlock(layer, order, mat, "fisher-type2", factor)


def _hessian_apply(cfg, preds, t):
    if cfg.criterion is Criterion.MSE:
        return t
    s = softmax(preds)
    return s * t - s * np.sum(s * t, axis=1, keepdims=True)


def ggn_vector_product(net: Network, data: Dataset, cfg: LossConfig, v, order=FlattenOrder.CVEC):
    """``G v`` as ``R Σ_n J_nᵀ (H_n (J_n v))`` without forming ``G``.

    ``J_n v`` is pushed forward through the net (JVP), multiplied by the
    criterion Hessian, and pulled back to the parameters (VJP).
    """
    order = as_order(order)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.size != net.num_params():
        raise DimensionError(f"vector of length {v.size}, network has {net.num_params()} parameters")
    cap, factor = _prepare(net, data, cfg)
    offsets = net.param_offsets()
    directions = {i: net.with_parameters(v, order).layers[i].combined_weight() for i in offsets}

    # forward: tangent of every layer output
    tangent = np.zeros((len(data), net.input_dim))
    for i, layer in enumerate(net.layers):
        x = cap.layer_inputs[i]
        if isinstance(layer, Linear):
            tangent = tangent @ layer.weight.T + layer.augment(x) @ directions[i].T
        else:
            tangent = tangent * layer.derivative(x)

    back = factor * _hessian_apply(cfg, cap.prediction, tangent)

    # backward: accumulate parameter gradients of <back, f>
    out = np.zeros_like(v)
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        x = cap.layer_inputs[i]
        if isinstance(layer, Linear):
            start, stop = offsets[i]
            grad_w = back.T @ layer.augment(x)
            out[start:stop] = grad_w.ravel(order=order.numpy_order)
            back = back @ layer.weight
        else:
            back = back * layer.derivative(x)
    return out


# Fisher variants -----------------------------------------------------------------


def _outer_block(kind, net, data, cfg, layer, order, include_bias):
    order = as_order(order)
    cap, factor = _prepare(net, data, cfg)
    vecs, weight = backprop_vector_stack(kind, cfg, cap.prediction, data.targets)
    layers = None if layer is None else [layer]
    mat = outer_product_sum(_param_vectors(cap, vecs, order, include_bias, layers), factor * weight)
    meta = {"m_samples": kind.m_samples, "seed": kind.seed} if isinstance(kind, MCFisher) else {}
    return CurvatureBlock(layer, order, mat, kind.name, factor, meta)


def mc_fisher_block(net, data, cfg, layer, order=FlattenOrder.CVEC, m=1, seed=0, include_bias=True):
    """``(R/M) Σ_n Σ_m J_nᵀ g̃_nm g̃_nmᵀ J_n`` with labels drawn from the model."""
    _check_linear(net, layer)
    return _outer_block(MCFisher(m, seed), net, data, cfg, layer, order, include_bias)


def mc_fisher_full(net, data, cfg, order=FlattenOrder.CVEC, m=1, seed=0, include_bias=True):
    return _outer_block(MCFisher(m, seed), net, data, cfg, None, order, include_bias)


def empirical_fisher_block(net, data, cfg, layer, order=FlattenOrder.CVEC, include_bias=True):
    """``R Σ_n J_nᵀ g_n g_nᵀ J_n`` with gradients at the true labels."""
    _check_linear(net, layer)
    return _outer_block(EmpiricalFisher(), net, data, cfg, layer, order, include_bias)


def empirical_fisher_full(net, data, cfg, order=FlattenOrder.CVEC, include_bias=True):
    return _outer_block(EmpiricalFisher(), net, data, cfg, None, order, include_bias)


def curvature_block(kind: CurvatureKind, net, data, cfg, layer, order=FlattenOrder.CVEC, include_bias=True):
    if isinstance(kind, GGN):
        return ggn_block(net, data, cfg, layer, order, include_bias)
    _check_linear(net, layer)
    return _outer_block(kind, net, data, cfg, layer, order, include_bias)


def curvature_full(kind: CurvatureKind, net, data, cfg, order=FlattenOrder.CVEC, include_bias=True):
    if isinstance(kind, GGN):
        return ggn_full(net, data, cfg, order, include_bias)
    return _outer_block(kind, net, data, cfg, None, order, include_bias)


# Hessian by finite differences -----------------------------------------------------


def risk(net: Network, data: Dataset, cfg: LossConfig):
    return empirical_risk(cfg, net(data.inputs), data.targets)


def risk_gradient(net: Network, data: Dataset, cfg: LossConfig, order=FlattenOrder.CVEC):
    """Analytic gradient of the empirical risk w.r.t. all flattened parameters."""
    cap, factor = _prepare(net, data, cfg)
    grads = criterion_gradients(cfg, cap.prediction, data.targets)[:, None, :]
    return factor * _param_vectors(cap, grads, as_order(order), True).sum(axis=0)


def fd_hessian(grad_fn, x, rel_step=FD_REL_STEP):
    """Central differences of an analytic gradient; column ``j`` perturbs ``x_j``.

    The step is ``rel_step * max(1, |x_j|)``. The result is not symmetrized.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    cols = []
    for j in range(x.size):
        h = rel_step * max(1.0, abs(x[j]))
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        cols.append((np.asarray(grad_fn(xp)) - np.asarray(grad_fn(xm))) / (2.0 * h))
    return np.stack(cols, axis=1)


def hessian_full_fd(net: Network, data: Dataset, cfg: LossConfig, order=FlattenOrder.CVEC):
    """Full parameter Hessian of the empirical risk (smooth activations only)."""
    if not net.is_smooth():
        raise UnsupportedLayerError("finite-difference Hessian requires smooth activations (no ReLU)")
    order = as_order(order)
    theta = net.parameters(order)
    check_dense_size(theta.size**2, None)

    def grad(t):
        return risk_gradient(net.with_parameters(t, order), data, cfg, order)

    mat = fd_hessian(grad, theta)
    return CurvatureBlock(None, order, mat, "hessian-fd", cfg.factor(len(data), net.output_dim))
