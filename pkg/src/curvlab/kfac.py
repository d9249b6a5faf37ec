"""KFAC for linear layers without weight sharing.

For a linear layer with augmented inputs ``x̃_n`` and backpropagated
output-gradients ``g_{n,c} = (J_{z_n} f_n)ᵀ ▲_{n,c}``::

    A = R Σ_n x̃_n x̃_nᵀ                     (input-based)
    B = 1/(N·K) Σ_n Σ_c g_{n,c} g_{n,c}ᵀ     (grad-output-based)

with ``K = M`` for the MC Fisher and ``K = 1`` otherwise. The curvature block
is approximated by ``A ⊗ B`` under cvec flattening and ``B ⊗ A`` under rvec.
The sign of ``▲`` does not matter since only outer products enter ``B``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .curvature import GGN, CurvatureBlock, CurvatureKind, EmpiricalFisher, MCFisher, backprop_vector_stack
from .errors import DimensionError, UnsupportedLayerError
from .losses import LossConfig, criterion_gradient, hessian_factorization, would_be_gradients
from .nn import Linear, backprop_to_layer, forward_capture
from .tensor_core import (
    FlattenOrder,
    KroneckerOperator,
    as_order,
    frobenius_norm,
    kron,
    spectral_norm,
)


def backprop_vectors(kind: CurvatureKind, cfg: LossConfig, f_n, y_n=None, rng=None):
    """Vectors ``▲_{n,c}`` for one datum as rows of a ``K x C`` array.

    Type-II: the columns of the Hessian factorization. MC: ``M`` criterion
    gradients at labels drawn with ``rng``. Empirical: the gradient at ``y_n``.
    """
    f_n = np.asarray(f_n, dtype=np.float64).reshape(-1)
    if isinstance(kind, GGN):
        return hessian_factorization(cfg, f_n).T.copy()
    if isinstance(kind, EmpiricalFisher):
        return criterion_gradient(cfg, f_n, y_n)[None, :]
    if isinstance(kind, MCFisher):
        if rng is None:
            raise ValueError("MC backpropagated vectors need an rng")
        return would_be_gradients(cfg, f_n, rng, kind.m_samples)
    raise TypeError(f"unsupported curvature kind {kind!r}")


@dataclass(frozen=True)
class KfacBlock:
    layer_index: int
    order: FlattenOrder
    A: np.ndarray
    B: np.ndarray
    kind: str = "ggn"
    reduction_factor: float = 1.0
    meta: dict = field(default_factory=dict)

    @property
    def operator(self):
        if self.order is FlattenOrder.CVEC:
            return KroneckerOperator(self.A, self.B)
        return KroneckerOperator(self.B, self.A)

    @property
    def dim(self):
        return self.A.shape[0] * self.B.shape[0]


def kfac_expectation_fit(gradients):
    """Frobenius-optimal ``B`` for ``I ⊗ B ≈ cvec(G) cvec(G)ᵀ``: the mean outer product."""
    g = np.atleast_2d(np.asarray(gradients, dtype=np.float64))
    if g.shape[0] == 0:
        raise DimensionError("need at least one vector")
    return _kernels.gram(g) / g.shape[0]


def kfac_block(
    net,
    data,
    cfg: LossConfig,
    layer,
    kind: CurvatureKind = GGN(),
    order=FlattenOrder.CVEC,
    include_bias=True,
) -> KfacBlock:
    order = as_order(order)
    if not 0 <= layer < len(net.layers):
        raise IndexError(f"layer index {layer} out of range")
    lin = net.layers[layer]
    if not isinstance(lin, Linear):
        raise UnsupportedLayerError(f"layer {layer} ({lin.kind.value}) has no parameters")

    cap = forward_capture(net, data.inputs)
    n = len(data)
    factor = cfg.factor(n, net.output_dim)

    xt = lin.augment(cap.layer_inputs[layer], include_bias)
    a = factor * _kernels.gram(xt)

    vecs, weight = backprop_vector_stack(kind, cfg, cap.prediction, data.targets)
    grads = backprop_to_layer(cap, layer, vecs)
    per_datum = grads.shape[1]
    b = (weight / n) * _kernels.gram(grads.reshape(-1, grads.shape[2]))

    meta = {
        "num_data": n,
        "vectors_per_datum": per_datum,
        "a_normalizer": factor,
        "b_normalizer": n * (kind.m_samples if isinstance(kind, MCFisher) else 1),
        "include_bias": bool(lin.augments(include_bias)),
    }
    if isinstance(kind, MCFisher):
        meta.update(m_samples=kind.m_samples, seed=kind.seed)
    return KfacBlock(layer, order, a, b, kind.name, factor, meta)


def kfac_blocks(net, data, cfg, kind: CurvatureKind = GGN(), order=FlattenOrder.CVEC, include_bias=True):
    return [kfac_block(net, data, cfg, i, kind, order, include_bias) for i in net.linear_indices]


def kfac_materialize(block: KfacBlock, max_elements=None):
    op = block.operator
    return kron(op.left, op.right, max_elements=max_elements)


def kfac_residual(block: KfacBlock, exact: CurvatureBlock, metric="frobenius"):
    """``‖KFAC - C‖ / ‖C‖`` in the chosen norm (absolute norm if ``C`` is zero)."""
    if exact.order is not block.order:
        raise DimensionError(f"order mismatch: KFAC is {block.order.value}, exact is {exact.order.value}")
    if exact.matrix.shape != (block.dim, block.dim):
        raise DimensionError(f"KFAC has dimension {block.dim}, exact block {exact.matrix.shape}")
    return relative_residual(kfac_materialize(block), exact.matrix, metric)


def relative_residual(approx, exact, metric="frobenius"):
    norm = {"frobenius": frobenius_norm, "spectral": spectral_norm}[metric]
    diff = approx - exact
    if metric == "spectral":
        diff = 0.5 * (diff + diff.T)
    scale = norm(exact)
    res = norm(diff)
    return res / scale if scale > 0 else res
