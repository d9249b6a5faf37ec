import numpy as np
import pytest

from curvlab.reference import (
    rosenbrock_ggn,
    rosenbrock_ggn_generic,
    rosenbrock_gradient,
    rosenbrock_hessian,
    rosenbrock_hessian_fd,
    rosenbrock_value,
)
from oracles import fd_jacobian

GGN_10 = np.array([[82.0, -40.0], [-40.0, 20.0]])
HESS_10 = np.array([[42.0, -40.0], [-40.0, 20.0]])


def test_printed_values():
    np.testing.assert_allclose(rosenbrock_ggn([1.0, 2.0], 10.0), GGN_10, atol=1e-12)
    np.testing.assert_allclose(rosenbrock_hessian([1.0, 2.0], 10.0), HESS_10, atol=1e-12)
    assert np.abs(rosenbrock_ggn_generic([1.0, 2.0], 10.0) - GGN_10).max() <= 1e-8
    assert np.abs(rosenbrock_hessian_fd([1.0, 2.0], 10.0) - HESS_10).max() <= 1e-4


def test_minimum():
    assert rosenbrock_value([1.0, 1.0], 100.0) == 0.0
    np.testing.assert_array_equal(rosenbrock_gradient([1.0, 1.0], 100.0), [0.0, 0.0])
    # GGN and Hessian coincide where the residual vanishes
    np.testing.assert_allclose(rosenbrock_ggn([1.0, 1.0], 100.0), rosenbrock_hessian([1.0, 1.0], 100.0))


@pytest.mark.parametrize("seed", range(10))
def test_generic_and_closed_forms_agree(seed):
    r = np.random.default_rng(seed)
    x, alpha = r.standard_normal(2) * 2, float(r.uniform(0.5, 50))
    np.testing.assert_allclose(rosenbrock_ggn_generic(x, alpha), rosenbrock_ggn(x, alpha), rtol=1e-12, atol=1e-12)
    grad_fd = fd_jacobian(lambda v: rosenbrock_value(v, alpha), x)[0]
    np.testing.assert_allclose(rosenbrock_gradient(x, alpha), grad_fd, rtol=1e-6, atol=1e-6)
    h = rosenbrock_hessian(x, alpha)
    assert np.abs(rosenbrock_hessian_fd(x, alpha) - h).max() <= 1e-4 * max(1.0, np.abs(h).max())
    assert np.linalg.eigvalsh(rosenbrock_ggn(x, alpha)).min() >= -1e-9


def test_alpha_must_be_positive():
    with pytest.raises(ValueError):
        rosenbrock_ggn([1.0, 2.0], 0.0)
    with pytest.raises(ValueError):
        rosenbrock_value([1.0, 2.0], -1.0)
