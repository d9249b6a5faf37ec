"""Reference implementations used only by the tests.

These deliberately avoid the package's code paths: plain loops over index
definitions, central finite differences, and a cyclic Jacobi eigensolver.
"""
import itertools
import math

import numpy as np


def cvec_by_enumeration(t):
    """First index varies fastest."""
    t = np.asarray(t)
    idx = itertools.product(*[range(s) for s in reversed(t.shape)])
    return np.array([t[tuple(reversed(i))] for i in idx])


def rvec_by_enumeration(t):
    """Last index varies fastest."""
    t = np.asarray(t)
    idx = itertools.product(*[range(s) for s in t.shape])
    return np.array([t[i] for i in idx])


def kron_by_definition(a, b):
    n1, n2 = a.shape
    m1, m2 = b.shape
    out = np.zeros((n1 * m1, n2 * m2))
    for i in range(n1):
        for j in range(n2):
            for k in range(m1):
                for l in range(m2):
                    out[i * m1 + k, j * m2 + l] = a[i, j] * b[k, l]
    return out


def fd_jacobian(fn, x, h=1e-5):
    """Central-difference Jacobian of a vector function; step scaled by magnitude."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    cols = []
    for j in range(x.size):
        step = h * max(1.0, abs(x[j]))
        xp, xm = x.copy(), x.copy()
        xp[j] += step
        xm[j] -= step
        cols.append((np.atleast_1d(fn(xp)) - np.atleast_1d(fn(xm))) / (2 * step))
    return np.stack(cols, axis=1)


def jacobi_eigenvalues(a, tol=1e-14, max_sweeps=100):
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations."""
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    for _ in range(max_sweeps):
        off = math.sqrt(sum(a[i, j] ** 2 for i in range(n) for j in range(n) if i != j))
        if off < tol * max(1.0, np.abs(a).max()):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2 * a[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1))
                c = 1 / math.sqrt(t * t + 1)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
    return np.sort(np.diag(a))


def minimize_frobenius_fit(gradients, iters=20000, lr=None):
    """Gradient descent on ``Σ_n ‖g_n g_nᵀ - B‖_F²`` over ``B`` (from ``B = 0``)."""
    g = np.asarray(gradients, dtype=np.float64)
    n, d = g.shape
    targets = [np.outer(v, v) for v in g]
    b = np.zeros((d, d))
    lr = 0.25 / n if lr is None else lr
    for _ in range(iters):
        grad = sum(2 * (b - t) for t in targets)
        b -= lr * grad
    return b
