import numpy as np
import pytest

from curvlab import _kernels, tensor_core
from curvlab.curvature import (
    GGN,
    CurvatureBlock,
    Dataset,
    EmpiricalFisher,
    MCFisher,
    curvature_block,
    curvature_full,
    empirical_fisher_block,
    ggn_block,
    ggn_full,
    ggn_vector_product,
    hessian_full_fd,
    kind_from_name,
    mc_fisher_block,
    mc_fisher_full,
    risk,
    risk_gradient,
    type2_fisher_block,
)
from curvlab.errors import ContractViolation, DimensionError, SizeLimitError, UnsupportedLayerError
from curvlab.losses import LossConfig
from curvlab.nn import Linear, Network, forward_capture, mlp
from curvlab.tensor_core import FlattenOrder, kron, min_eigenvalue
from conftest import make_data
from oracles import fd_jacobian

CVEC, RVEC = FlattenOrder.CVEC, FlattenOrder.RVEC


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def test_dataset_checks():
    with pytest.raises(DimensionError):
        Dataset(np.zeros((3, 2)), np.zeros(2))
    d = Dataset(np.arange(6.0).reshape(3, 2), np.arange(3))
    assert len(d) == 3 and len(d.subset([0, 2])) == 2


def test_kind_names():
    assert kind_from_name("ggn") == GGN()
    assert kind_from_name("fisher-mc", 5, 2) == MCFisher(5, 2)
    assert kind_from_name("fisher-emp") == EmpiricalFisher()
    with pytest.raises(ValueError):
        kind_from_name("hessian")
    with pytest.raises(ValueError):
        MCFisher(0)


@pytest.mark.parametrize("reduction", ["sum", "mean"])
def test_linear_regression_ggn_is_kronecker(rng, reduction):
    cfg = LossConfig("mse", reduction)
    lin = Linear(rng.standard_normal((3, 4)), rng.standard_normal(3))
    net = Network([lin])
    data = make_data(cfg, 10, seed=3, d_in=4, c=3)
    xt = np.hstack([data.inputs, np.ones((10, 1))])
    a = cfg.factor(10, 3) * xt.T @ xt
    np.testing.assert_allclose(ggn_block(net, data, cfg, 0, CVEC).matrix, kron(a, np.eye(3)), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(ggn_block(net, data, cfg, 0, RVEC).matrix, kron(np.eye(3), a), rtol=1e-12, atol=1e-12)


def test_ggn_equals_type2_fisher(relu_mlp, loss_cfg):
    data = make_data(loss_cfg, 30, seed=1)
    for layer in relu_mlp.linear_indices:
        g = ggn_block(relu_mlp, data, loss_cfg, layer).matrix
        f = type2_fisher_block(relu_mlp, data, loss_cfg, layer).matrix
        assert np.abs(g - f).max() <= 1e-10 * max(1.0, np.abs(g).max())


@pytest.mark.parametrize("order", [CVEC, RVEC])
def test_ggn_vector_product_matches_dense(tanh_mlp, loss_cfg, rng, order):
    data = make_data(loss_cfg, 12, seed=2)
    g = ggn_full(tanh_mlp, data, loss_cfg, order).matrix
    for j in (0, 17, 58):
        e = np.zeros(59)
        e[j] = 1.0
        np.testing.assert_allclose(ggn_vector_product(tanh_mlp, data, loss_cfg, e, order), g[:, j], rtol=1e-10, atol=1e-12)
    v = rng.standard_normal(59)
    np.testing.assert_allclose(ggn_vector_product(tanh_mlp, data, loss_cfg, v, order), g @ v, rtol=1e-10, atol=1e-12)
    with pytest.raises(DimensionError):
        ggn_vector_product(tanh_mlp, data, loss_cfg, np.ones(3))


def test_full_diagonal_blocks_match_layer_blocks(relu_mlp, loss_cfg):
    data = make_data(loss_cfg, 20, seed=4)
    offsets = relu_mlp.param_offsets()
    for kind in (GGN(), EmpiricalFisher(), MCFisher(3, 1)):
        full = curvature_full(kind, relu_mlp, data, loss_cfg).matrix
        assert full.shape == (59, 59)
        for layer, (a, b) in offsets.items():
            block = curvature_block(kind, relu_mlp, data, loss_cfg, layer).matrix
            np.testing.assert_allclose(full[a:b, a:b], block, rtol=1e-12, atol=1e-14)


def test_mc_fisher_is_deterministic(relu_mlp, loss_cfg):
    data = make_data(loss_cfg, 15, seed=5)
    a = mc_fisher_block(relu_mlp, data, loss_cfg, 2, m=4, seed=11).matrix
    b = mc_fisher_block(relu_mlp, data, loss_cfg, 2, m=4, seed=11).matrix
    np.testing.assert_array_equal(a, b)
    c = mc_fisher_block(relu_mlp, data, loss_cfg, 2, m=4, seed=12).matrix
    assert not np.array_equal(a, c)


def test_mc_fisher_prefix_consistency(relu_mlp, loss_cfg):
    # a datum's samples do not depend on which other data are present
    data = make_data(loss_cfg, 6, seed=6)
    full = mc_fisher_block(relu_mlp, data, loss_cfg, 0, m=2, seed=3)
    part = mc_fisher_block(relu_mlp, data.subset(slice(0, 3)), loss_cfg, 0, m=2, seed=3)
    rest = full.matrix / full.reduction_factor - part.matrix / part.reduction_factor
    assert min_eigenvalue(rest) >= -1e-10


def test_single_datum_outer_products_are_rank_one(relu_mlp):
    cfg = LossConfig("ce", "sum")
    data = make_data(cfg, 1, seed=7)
    ef = empirical_fisher_block(relu_mlp, data, cfg, 0).matrix
    mc = mc_fisher_block(relu_mlp, data, cfg, 0, m=1).matrix
    for mat in (ef, mc):
        assert np.linalg.matrix_rank(mat, tol=1e-10 * max(1.0, np.abs(mat).max())) <= 1


def test_ce_ggn_single_datum_rank(relu_mlp):
    cfg = LossConfig("ce", "sum")
    data = make_data(cfg, 1, seed=8)
    g = ggn_block(relu_mlp, data, cfg, 4).matrix
    # softmax Hessian of C classes has rank C-1
    assert np.linalg.matrix_rank(g, tol=1e-10) == 2


def test_empirical_fisher_vanishes_at_interpolation(relu_mlp):
    cfg = LossConfig("mse", "sum")
    x = np.random.default_rng(0).standard_normal((8, 5))
    data = Dataset(x, relu_mlp(x))
    for layer in relu_mlp.linear_indices:
        assert np.abs(empirical_fisher_block(relu_mlp, data, cfg, layer).matrix).max() == 0.0
        assert np.abs(ggn_block(relu_mlp, data, cfg, layer).matrix).max() > 1e-3


def test_empirical_fisher_differs_from_ggn(relu_mlp, loss_cfg):
    data = make_data(loss_cfg, 40, seed=9)
    g = ggn_block(relu_mlp, data, loss_cfg, 0).matrix
    e = empirical_fisher_block(relu_mlp, data, loss_cfg, 0).matrix
    assert rel(e, g) > 1e-3


def test_reduction_factor_scaling(relu_mlp):
    n = 25
    for crit, ratio in (("mse", n * 3), ("ce", n)):
        s_cfg, m_cfg = LossConfig(crit, "sum"), LossConfig(crit, "mean")
        data = make_data(s_cfg, n, seed=10)
        for kind in (GGN(), EmpiricalFisher(), MCFisher(2, 0)):
            s = curvature_block(kind, relu_mlp, data, s_cfg, 2).matrix
            m = curvature_block(kind, relu_mlp, data, m_cfg, 2).matrix
            np.testing.assert_allclose(s, ratio * m, rtol=1e-12, atol=1e-14)


def test_blocks_validate(relu_mlp, loss_cfg):
    data = make_data(loss_cfg, 20, seed=11)
    for kind in (GGN(), EmpiricalFisher(), MCFisher(3, 0)):
        for layer in relu_mlp.linear_indices:
            block = curvature_block(kind, relu_mlp, data, loss_cfg, layer)
            assert block.validate() is block


def test_validate_rejects_bad_matrices():
    with pytest.raises(ContractViolation):
        CurvatureBlock(0, CVEC, np.array([[1.0, 2.0], [0.0, 1.0]])).validate()
    with pytest.raises(ContractViolation):
        CurvatureBlock(0, CVEC, np.diag([1.0, -1.0])).validate()


def test_block_errors(relu_mlp, loss_cfg):
    data = make_data(loss_cfg, 3)
    with pytest.raises(UnsupportedLayerError):
        ggn_block(relu_mlp, data, loss_cfg, 1)
    with pytest.raises(IndexError):
        mc_fisher_block(relu_mlp, data, loss_cfg, 9)


def test_weight_only_blocks(relu_mlp, loss_cfg):
    data = make_data(loss_cfg, 10, seed=12)
    full = ggn_block(relu_mlp, data, loss_cfg, 0).matrix
    w = ggn_block(relu_mlp, data, loss_cfg, 0, include_bias=False).matrix
    np.testing.assert_allclose(w, full[:20, :20], rtol=1e-12, atol=1e-14)


def test_risk_gradient_matches_fd(tanh_mlp, loss_cfg):
    data = make_data(loss_cfg, 7, seed=13)
    theta = tanh_mlp.parameters(CVEC)
    fd = fd_jacobian(lambda t: risk(tanh_mlp.with_parameters(t, CVEC), data, loss_cfg), theta)[0]
    assert np.abs(risk_gradient(tanh_mlp, data, loss_cfg) - fd).max() <= 1e-7


def test_fd_hessian_equals_ggn_for_linear_regression(rng):
    cfg = LossConfig("mse", "mean")
    net = Network([Linear(rng.standard_normal((2, 3)), rng.standard_normal(2))])
    data = make_data(cfg, 9, seed=14, d_in=3, c=2)
    h = hessian_full_fd(net, data, cfg).matrix
    g = ggn_full(net, data, cfg).matrix
    assert np.abs(h - g).max() <= 1e-6


def test_fd_hessian_close_to_symmetric(tanh_mlp, loss_cfg):
    data = make_data(loss_cfg, 5, seed=15)
    h = hessian_full_fd(tanh_mlp, data, loss_cfg).matrix
    assert np.abs(h - h.T).max() <= 1e-6 * max(1.0, np.abs(h).max())


def test_fd_hessian_rejects_relu(relu_mlp, loss_cfg):
    with pytest.raises(UnsupportedLayerError):
        hessian_full_fd(relu_mlp, make_data(loss_cfg, 2), loss_cfg)


def test_mc_fisher_converges_to_ggn(relu_mlp, loss_cfg):
    data = make_data(loss_cfg, 30, seed=16)
    g = ggn_full(relu_mlp, data, loss_cfg).matrix
    r10 = np.median([rel(mc_fisher_full(relu_mlp, data, loss_cfg, m=10, seed=s).matrix, g) for s in range(3)])
    r1000 = np.median([rel(mc_fisher_full(relu_mlp, data, loss_cfg, m=1000, seed=s).matrix, g) for s in range(3)])
    assert r1000 < 0.5 * r10


def test_backends_give_same_blocks(relu_mlp, loss_cfg):
    data = make_data(loss_cfg, 20, seed=17)
    cap = forward_capture(relu_mlp, data.inputs)
    assert cap.num_data == 20
    ours = ggn_full(relu_mlp, data, loss_cfg).matrix
    active = _kernels.active
    try:
        _kernels.active = _kernels.numpy_kernels
        ref = ggn_full(relu_mlp, data, loss_cfg).matrix
    finally:
        _kernels.active = active
    np.testing.assert_allclose(ours, ref, rtol=1e-11, atol=1e-13)


def test_deep_linear_ggn_is_data_independent_in_jacobian(deep_linear):
    # with MSE the GGN of a deep linear net depends only on the inputs
    cfg = LossConfig("mse", "sum")
    data = make_data(cfg, 10, seed=18)
    other = Dataset(data.inputs, data.targets + 5.0)
    for layer in deep_linear.linear_indices:
        np.testing.assert_array_equal(
            ggn_block(deep_linear, data, cfg, layer).matrix, ggn_block(deep_linear, other, cfg, layer).matrix
        )


def test_mlp_sizes():
    assert mlp([5, 4, 4, 3], "relu").num_params() == 59


def test_dense_size_cap(relu_mlp, loss_cfg, monkeypatch):
    data = make_data(loss_cfg, 3)
    monkeypatch.setattr(tensor_core, "MAX_DENSE_ELEMENTS", 59 * 59 - 1)
    with pytest.raises(SizeLimitError):
        ggn_full(relu_mlp, data, loss_cfg)
    with pytest.raises(SizeLimitError):
        mc_fisher_full(relu_mlp, data, loss_cfg)
    assert ggn_block(relu_mlp, data, loss_cfg, 0).matrix.shape == (24, 24)
