"""Flattening conventions, Kronecker algebra and small dense-matrix helpers.

Arrays are plain ``numpy.ndarray`` objects in float64. The two flattening
conventions only exist in :func:`flatten` / :func:`unflatten`; storage is
always numpy's default C layout.
"""
from dataclasses import dataclass
from enum import Enum
import math

import numpy as np

from . import _kernels
from .errors import ContractViolation, DimensionError, SingularityError, SizeLimitError

MAX_DENSE_ELEMENTS = 10**8
MAX_CONDITION = 1e12
POWER_MAXITER = 10_000
POWER_TOL = 1e-10
POWER_SEED = 0


class FlattenOrder(str, Enum):
    """``CVEC`` varies the first index fastest, ``RVEC`` the last."""

    CVEC = "cvec"
    RVEC = "rvec"

    @property
    def numpy_order(self):
        return "F" if self is FlattenOrder.CVEC else "C"


def as_order(order):
    """Coerce a string or :class:`FlattenOrder` to :class:`FlattenOrder`."""
    if isinstance(order, FlattenOrder):
        return order
    try:
        return FlattenOrder(str(order).lower())
    except ValueError:
        raise ValueError(f"unknown flatten order {order!r}, expected 'cvec' or 'rvec'") from None


def flatten(t, order):
    t = np.asarray(t, dtype=np.float64)
    if t.size == 0:
        raise DimensionError("cannot flatten an empty tensor")
    return t.ravel(order=as_order(order).numpy_order).copy()


def unflatten(v, shape, order):
    v = np.asarray(v, dtype=np.float64)
    shape = tuple(int(s) for s in np.atleast_1d(shape))
    if v.ndim != 1 or v.size != math.prod(shape):
        raise DimensionError(f"vector of length {v.size} does not fit shape {shape}")
    return v.reshape(shape, order=as_order(order).numpy_order).copy()


def flatten_permutation(shape):
    """Index map ``p`` with ``flatten(T, RVEC)[i] == flatten(T, CVEC)[p[i]]``.

    A curvature matrix ``C`` in cvec coordinates becomes ``C[p][:, p]`` in
    rvec coordinates.
    """
    shape = tuple(int(s) for s in np.atleast_1d(shape))
    if len(shape) == 0 or math.prod(shape) == 0:
        raise DimensionError("flatten_permutation needs a nonempty shape")
    cvec_pos = np.arange(math.prod(shape)).reshape(shape, order="F")
    return cvec_pos.ravel(order="C")


def block_permutation(shapes):
    """Concatenated :func:`flatten_permutation` for consecutive parameter blocks."""
    perms, offset = [], 0
    for shape in shapes:
        p = flatten_permutation(shape)
        perms.append(p + offset)
        offset += p.size
    return np.concatenate(perms) if perms else np.zeros(0, dtype=int)


def cvec_to_rvec(mat, perm):
    """Conjugate a square matrix by the permutation ``perm`` (``P C P^T``)."""
    return np.asarray(mat)[np.ix_(perm, perm)]


def check_dense_size(n_elements, max_elements):
    cap = MAX_DENSE_ELEMENTS if max_elements is None else max_elements
    if n_elements > cap:
        raise SizeLimitError(f"dense result would hold {n_elements} elements (cap {cap})")


def kron(a, b, max_elements=None):
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    check_dense_size(a.size * b.size, max_elements)
    return _kernels.kron(a, b)


@dataclass(frozen=True)
class KroneckerOperator:
    """Implicit ``left ⊗ right``; only the two factors are stored."""

    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "left", np.atleast_2d(np.asarray(self.left, dtype=np.float64)))
        object.__setattr__(self, "right", np.atleast_2d(np.asarray(self.right, dtype=np.float64)))

    @property
    def shape(self):
        return (
            self.left.shape[0] * self.right.shape[0],
            self.left.shape[1] * self.right.shape[1],
        )

    def todense(self, max_elements=None):
        return kron(self.left, self.right, max_elements=max_elements)

    def __matmul__(self, v):
        return kron_matvec(self, v)


def kron_matvec(op, v, order=FlattenOrder.CVEC):
    """``(A ⊗ B) v`` without materializing the Kronecker product.

    With ``CVEC`` the vector is reshaped column-major and the product is
    ``cvec(B V A^T)``; with ``RVEC`` it is reshaped row-major and the product
    is ``rvec(A V B^T)``. Both give the same vector.
    """
    a, b = op.left, op.right
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size != a.shape[1] * b.shape[1]:
        raise DimensionError(f"operator with {a.shape[1] * b.shape[1]} columns applied to length {v.size}")
    order = as_order(order)
    if order is FlattenOrder.CVEC:
        mat = unflatten(v, (b.shape[1], a.shape[1]), order)
        return flatten(b @ mat @ a.T, order)
    mat = unflatten(v, (a.shape[1], b.shape[1]), order)
    return flatten(a @ mat @ b.T, order)


def kron_inverse(op, max_condition=MAX_CONDITION):
    """Inverse of ``A ⊗ B`` as ``A^{-1} ⊗ B^{-1}``."""
    inverses = []
    for name, factor in (("left", op.left), ("right", op.right)):
        if factor.shape[0] != factor.shape[1]:
            raise DimensionError(f"{name} Kronecker factor is not square: {factor.shape}")
        cond = np.linalg.cond(factor)
        if not np.isfinite(cond) or cond > max_condition:
            raise SingularityError(f"{name} Kronecker factor is singular (condition number {cond:.3g})")
        inverses.append(np.linalg.inv(factor))
    return KroneckerOperator(*inverses)


def frobenius_norm(m):
    m = np.asarray(m, dtype=np.float64)
    if m.size == 0:
        raise DimensionError("norm of an empty matrix")
    return float(np.sqrt(np.sum(m * m)))


def is_symmetric(m, atol=1e-10):
    m = np.asarray(m)
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    return m.ndim == 2 and m.shape[0] == m.shape[1] and float(np.max(np.abs(m - m.T), initial=0.0)) <= atol * scale


def spectral_norm(m, iters=POWER_MAXITER, tol=POWER_TOL):
    """Largest absolute eigenvalue of a symmetric matrix by power iteration.

    The start vector is drawn from a fixed seed so results are reproducible.
    """
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    if m.size == 0:
        raise DimensionError("norm of an empty matrix")
    if not is_symmetric(m):
        raise ContractViolation("spectral_norm requires a symmetric matrix")
    v0 = np.random.default_rng(POWER_SEED).standard_normal(m.shape[0])
    value, _ = _kernels.power_iteration(m, v0, iters, tol)
    return float(value)


def min_eigenvalue(m):
    """Smallest eigenvalue of a symmetric matrix (LAPACK ``eigvalsh``)."""
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    if not is_symmetric(m):
        raise ContractViolation("min_eigenvalue requires a symmetric matrix")
    return float(np.linalg.eigvalsh(0.5 * (m + m.T))[0])


def save_matrix_csv(path, m):
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    np.savetxt(path, m, delimiter=",", fmt="%.17g")


def load_matrix_csv(path):
    return np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
