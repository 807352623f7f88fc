"""Cyclic Jacobi eigensolver and a Gram-matrix SVD for small matrices."""

from __future__ import annotations

import numpy as np

MAX_JACOBI_DIM = 16


def sym_eig_small(S, tol: float = 1e-12, max_sweeps: int = 100):
    """Eigen-decomposition of a small symmetric matrix by cyclic Jacobi rotations.

    Parameters
    ----------
    S : (m, m) array_like
        Symmetric matrix, ``m <= 16``.
    tol : float
        Sweeps stop once the off-diagonal Frobenius norm is below
        ``tol * max(1, ||S||_F)``.

    Returns
    -------
    w : (m,) ndarray
        Eigenvalues in descending order.
    V : (m, m) ndarray
        Orthonormal eigenvectors as columns, ``S = V diag(w) V^T``.
    """
    A = np.array(S, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    m = A.shape[0]
    if m > MAX_JACOBI_DIM:
        raise ValueError(f"matrix size {m} exceeds {MAX_JACOBI_DIM}")
    scale = max(1.0, float(np.abs(A).max(initial=0.0)))
    if np.abs(A - A.T).max(initial=0.0) > 1e-10 * scale:
        raise ValueError("matrix is not symmetric")
    A = 0.5 * (A + A.T)
    V = np.eye(m)
    target = tol * max(1.0, float(np.linalg.norm(A)))
    for _ in range(max_sweeps):
        # norm of the off-diagonal part taken directly; sum(A^2) - sum(diag^2) cancels catastrophically
        off = float(np.linalg.norm(A - np.diag(np.diag(A))))
        if off <= target:
            break
        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:  # theta^2 would overflow; tan of the angle is ~1/(2 theta)
                    t = 0.5 / theta
                else:
                    t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J with J the (p, q) Givens rotation
                ap = A[:, p].copy()
                aq = A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap = A[p, :].copy()
                aq = A[q, :].copy()
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                A[p, q] = A[q, p] = 0.0
                vp = V[:, p].copy()
                vq = V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    w = np.diag(A).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], V[:, order]


def _complete_basis(U: np.ndarray, k: int) -> np.ndarray:
    """Fill columns ``k:`` of ``U`` with an orthonormal complement of its first ``k``."""
    m = U.shape[0]
    basis = [U[:, j] for j in range(k)]
    for e in np.eye(m):
        if len(basis) == m:
            break
        v = e - sum(np.dot(b, e) * b for b in basis)
        n = np.linalg.norm(v)
        if n > 1e-8:
            basis.append(v / n)
    return np.stack(basis, axis=1)


def small_svd(H, rank_tol: float = 1e-10):
    """Full SVD ``H = U diag(s) V^T`` of a small square matrix via :func:`sym_eig_small`.

    Right singular vectors come from ``H^T H``; left vectors are ``H v / s``
    for the numerically nonzero singular values and an orthonormal
    completion for the rest.  Also returns the numerical rank.
    """
    H = np.asarray(H, dtype=float)
    m = H.shape[1]
    evals, V = sym_eig_small(H.T @ H)
    s = np.sqrt(np.clip(evals, 0.0, None))
    cutoff = rank_tol * max(1.0, s[0] if m else 0.0)
    rank = int(np.sum(s > cutoff))
    U = np.zeros((H.shape[0], m))
    for j in range(rank):
        U[:, j] = H @ V[:, j] / s[j]
    if rank < m:
        U = _complete_basis(U, rank)
    return U, s, V, rank
