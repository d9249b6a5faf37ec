"""Closed-form GGN and Hessian of the 2d Rosenbrock function.

``f(x) = (1 - x1)^2 + alpha (x2 - x1^2)^2`` is written as ``g(h(x))`` with
``h(x) = (1 - x1, sqrt(alpha) (x2 - x1^2))`` and ``g(h) = hᵀh``. Note that
``g`` has no factor 1/2, so the closed forms carry an overall factor 2.
"""
import math

import numpy as np

from .curvature import fd_hessian, ggn_from_jacobians
from .losses import Criterion, LossConfig, Reduction, criterion_hessian, reduction_factor


def _check_alpha(alpha):
    if not alpha > 0:
        raise ValueError("alpha must be positive")


def rosenbrock_value(x, alpha):
    _check_alpha(alpha)
    x1, x2 = np.asarray(x, dtype=np.float64)
    return float((1.0 - x1) ** 2 + alpha * (x2 - x1**2) ** 2)


def rosenbrock_h(x, alpha):
    _check_alpha(alpha)
    x1, x2 = np.asarray(x, dtype=np.float64)
    return np.array([1.0 - x1, math.sqrt(alpha) * (x2 - x1**2)])


def rosenbrock_h_jacobian(x, alpha):
    _check_alpha(alpha)
    x1 = float(np.asarray(x, dtype=np.float64)[0])
    sa = math.sqrt(alpha)
    return np.array([[-1.0, 0.0], [-2.0 * sa * x1, sa]])


def rosenbrock_gradient(x, alpha):
    return 2.0 * rosenbrock_h_jacobian(x, alpha).T @ rosenbrock_h(x, alpha)


def rosenbrock_ggn(anchor, alpha):
    _check_alpha(alpha)
    x1, _ = np.asarray(anchor, dtype=np.float64)
    return 2.0 * np.array([[1.0 + 4.0 * alpha * x1**2, -2.0 * alpha * x1], [-2.0 * alpha * x1, alpha]])


def rosenbrock_hessian(anchor, alpha):
    _check_alpha(alpha)
    x1, x2 = np.asarray(anchor, dtype=np.float64)
    return 2.0 * np.array(
        [[1.0 + 6.0 * alpha * x1**2 - 2.0 * alpha * x2, -2.0 * alpha * x1], [-2.0 * alpha * x1, alpha]]
    )


# the same matrices through the generic curvature machinery -----------------------

# hᵀh = 2 * (½‖h - 0‖²): square loss with target 0 and sum reduction (R = 2)
_ADAPTER_LOSS = LossConfig(Criterion.MSE, Reduction.SUM)


def rosenbrock_ggn_generic(anchor, alpha):
    """GGN assembled as ``R Jᵀ H J`` from the square-loss Hessian."""
    anchor = np.asarray(anchor, dtype=np.float64)
    jac = rosenbrock_h_jacobian(anchor, alpha)[None]
    hess = criterion_hessian(_ADAPTER_LOSS, rosenbrock_h(anchor, alpha))[None]
    factor = reduction_factor(_ADAPTER_LOSS, 1, 2)
    return ggn_from_jacobians(jac, hess, factor)


def rosenbrock_hessian_fd(anchor, alpha):
    """Finite-difference Hessian from the analytic gradient."""
    return fd_hessian(lambda x: rosenbrock_gradient(x, alpha), np.asarray(anchor, dtype=np.float64))
