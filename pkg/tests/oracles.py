"""Independent reference computations used only by the tests."""
import math

import numpy as np


def jacobi_rotate_inplace(A, p, q):
    theta = (A[q, q] - A[p, p]) / (2 * A[p, q])
    if abs(theta) > 1e150:
        t = 1 / (2 * theta)
    else:
        t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1))
    c = 1 / math.sqrt(t * t + 1)
    s = t * c
    Ap, Aq = A[:, p].copy(), A[:, q].copy()
    A[:, p], A[:, q] = c * Ap - s * Aq, s * Ap + c * Aq
    Ap, Aq = A[p, :].copy(), A[q, :].copy()
    A[p, :], A[q, :] = c * Ap - s * Aq, s * Ap + c * Aq


def jacobi_top_singular_value(M, tol=1e-15, max_sweeps=60):
    """Largest singular value of ``M`` from Jacobi eigenvalues of ``M^T M``."""
    M = np.asarray(M, dtype=float)
    G = M.T @ M if M.shape[1] <= M.shape[0] else M @ M.T
    A = G.copy()
    n = A.shape[0]
    for _ in range(max_sweeps):
        off = np.sum(A ** 2) - np.sum(np.diag(A) ** 2)
        if off <= (tol * np.trace(np.abs(A))) ** 2:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(A[p, q]) > 1e-300:
                    jacobi_rotate_inplace(A, p, q)
    return math.sqrt(max(np.max(np.diag(A)), 0.0))


def central_difference(f, W, h=1e-6):
    """Numerical gradient of scalar ``f`` with respect to array ``W`` (modified in place, restored)."""
    g = np.zeros_like(W)
    it = np.nditer(W, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = W[idx]
        W[idx] = old + h
        fp = f()
        W[idx] = old - h
        fm = f()
        W[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def relative_error(a, b):
    a, b = np.ravel(a), np.ravel(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-300))
