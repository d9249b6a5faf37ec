"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is chosen once at import time. Set ``CURVLAB_DISABLE_NUMBA=1``
to force the numpy path (also used automatically when numba is missing).
Both backends are importable directly as :data:`numpy_kernels` and
:data:`numba_kernels` so they can be compared in tests and benchmarks.
"""
import os
from types import SimpleNamespace

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False


def _env_disabled():
    return os.environ.get("CURVLAB_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}


# --------------------------------------------------------------------------
# numpy implementations
# --------------------------------------------------------------------------


_CHUNK_ELEMENTS = 1 << 22


def _np_outer_sum(u, w):
    """``sum_k u_k w_k^T`` by elementwise products reduced along the rows.

    BLAS products round differently depending on where an entry sits in a
    tile, so permuting columns would not permute the result bitwise. Reducing
    chunks of outer products along axis 0 gives every entry the same
    operation sequence. That needs C-ordered operands: on other layouts numpy
    may switch to pairwise summation along axis 0.
    """
    u, w = np.ascontiguousarray(u), np.ascontiguousarray(w)
    k, p = u.shape
    q = w.shape[1]
    out = np.zeros((p, q))
    step = max(1, _CHUNK_ELEMENTS // max(1, p * q))
    for s in range(0, k, step):
        out += np.multiply(u[s:s + step, :, None], w[s:s + step, None, :], order="C").sum(axis=0)
    return out


def _np_gram(vecs):
    """Sum of outer products ``sum_k v_k v_k^T`` for rows of ``vecs`` (K x P)."""
    return _np_outer_sum(vecs, vecs)


def _np_sandwich_sum(jac, hess):
    """``sum_n J_n^T H_n J_n`` for ``jac`` (N x C x P) and ``hess`` (N x C x C)."""
    n, c, p = jac.shape
    hj = np.zeros_like(jac)
    for b in range(c):
        hj += hess[:, :, b, None] * jac[:, None, b, :]
    out = _np_outer_sum(jac.reshape(n * c, p), hj.reshape(n * c, p))
    return 0.5 * (out + out.T)


def _np_kron(a, b):
    return np.kron(a, b)


def _np_power_iteration(mat, v0, maxiter, tol):
    v = v0 / np.linalg.norm(v0)
    est = 0.0
    for it in range(maxiter):
        w = mat @ v
        new = np.linalg.norm(w)
        if new == 0.0:
            return 0.0, it + 1
        v = w / new
        if abs(new - est) < tol * max(1.0, new):
            return new, it + 1
        est = new
    return est, -1


# --------------------------------------------------------------------------
# loop implementations (compiled by numba when available)
# --------------------------------------------------------------------------


def _loop_gram(vecs):
    k, p = vecs.shape
    out = np.zeros((p, p))
    for r in range(k):
        for i in range(p):
            vi = vecs[r, i]
            if vi == 0.0:
                continue
            for j in range(i, p):
                out[i, j] += vi * vecs[r, j]
    for i in range(p):
        for j in range(i + 1, p):
            out[j, i] = out[i, j]
    return out


def _loop_sandwich_sum(jac, hess):
    n, c, p = jac.shape
    out = np.zeros((p, p))
    hj = np.empty((c, p))
    for d in range(n):
        for a in range(c):
            for j in range(p):
                acc = 0.0
                for b in range(c):
                    acc += hess[d, a, b] * jac[d, b, j]
                hj[a, j] = acc
        for a in range(c):
            for i in range(p):
                ji = jac[d, a, i]
                if ji == 0.0:
                    continue
                for j in range(p):
                    out[i, j] += ji * hj[a, j]
    # full product then average: keeps the result equivariant under index permutations
    for i in range(p):
        for j in range(i + 1, p):
            s = 0.5 * (out[i, j] + out[j, i])
            out[i, j] = s
            out[j, i] = s
    return out


def _loop_kron(a, b):
    n1, n2 = a.shape
    m1, m2 = b.shape
    out = np.empty((n1 * m1, n2 * m2))
    for i in range(n1):
        for j in range(n2):
            aij = a[i, j]
            for k in range(m1):
                for l in range(m2):
                    out[i * m1 + k, j * m2 + l] = aij * b[k, l]
    return out


def _loop_power_iteration(mat, v0, maxiter, tol):
    n = mat.shape[0]
    v = v0.copy()
    nrm = 0.0
    for i in range(n):
        nrm += v[i] * v[i]
    nrm = np.sqrt(nrm)
    for i in range(n):
        v[i] /= nrm
    w = np.empty(n)
    est = 0.0
    for it in range(maxiter):
        new = 0.0
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += mat[i, j] * v[j]
            w[i] = acc
            new += acc * acc
        new = np.sqrt(new)
        if new == 0.0:
            return 0.0, it + 1
        for i in range(n):
            v[i] = w[i] / new
        if abs(new - est) < tol * max(1.0, new):
            return new, it + 1
        est = new
    return est, -1


numpy_kernels = SimpleNamespace(
    name="numpy",
    gram=_np_gram,
    sandwich_sum=_np_sandwich_sum,
    kron=_np_kron,
    power_iteration=_np_power_iteration,
)

if HAVE_NUMBA:
    numba_kernels = SimpleNamespace(
        name="numba",
        gram=njit(cache=True)(_loop_gram),
        sandwich_sum=njit(cache=True)(_loop_sandwich_sum),
        kron=njit(cache=True)(_loop_kron),
        power_iteration=njit(cache=True)(_loop_power_iteration),
    )
else:  # pragma: no cover
    numba_kernels = None

active = numpy_kernels if (numba_kernels is None or _env_disabled()) else numba_kernels
BACKEND = active.name


def gram(vecs):
    return active.gram(np.ascontiguousarray(vecs, dtype=np.float64))


def sandwich_sum(jac, hess):
    return active.sandwich_sum(
        np.ascontiguousarray(jac, dtype=np.float64), np.ascontiguousarray(hess, dtype=np.float64)
    )


def kron(a, b):
    return active.kron(np.ascontiguousarray(a, dtype=np.float64), np.ascontiguousarray(b, dtype=np.float64))


def power_iteration(mat, v0, maxiter, tol):
    return active.power_iteration(
        np.ascontiguousarray(mat, dtype=np.float64), np.array(v0, dtype=np.float64), int(maxiter), float(tol)
    )
