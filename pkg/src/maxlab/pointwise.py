"""Pointwise linear algebra on matrix fields.

Matrix fields are stored with the matrix indices first, shape ``(k, k, *grid)``,
and vector fields as ``(k, *grid)``. Helpers here move the matrix axes to the
end where numpy's batched routines expect them.
"""

from __future__ import annotations

import numpy as np


def matvec(M: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("ij...,j...->i...", M, v)


def matmul(M: np.ndarray, N: np.ndarray) -> np.ndarray:
    return np.einsum("ij...,jk...->ik...", M, N)


def transpose(M: np.ndarray) -> np.ndarray:
    return np.swapaxes(M, 0, 1)


def _to_batched(M: np.ndarray) -> np.ndarray:
    return np.moveaxis(M, (0, 1), (-2, -1))


def _from_batched(M: np.ndarray) -> np.ndarray:
    return np.moveaxis(M, (-2, -1), (0, 1))


def det(M: np.ndarray) -> np.ndarray:
    k = M.shape[0]
    if k == 1:
        return M[0, 0].copy()
    if k == 2:
        return M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    if k == 3:
        return (
            M[0, 0] * (M[1, 1] * M[2, 2] - M[1, 2] * M[2, 1])
            - M[0, 1] * (M[1, 0] * M[2, 2] - M[1, 2] * M[2, 0])
            + M[0, 2] * (M[1, 0] * M[2, 1] - M[1, 1] * M[2, 0])
        )
    return np.linalg.det(_to_batched(M))


def inv(M: np.ndarray) -> np.ndarray:
    return _from_batched(np.linalg.inv(_to_batched(M)))


def eigvalsh(M: np.ndarray) -> np.ndarray:
    """Eigenvalues of a symmetric matrix field, shape ``(k, *grid)`` ascending."""
    return np.moveaxis(np.linalg.eigvalsh(_to_batched(M)), -1, 0)


def cholesky(M: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive definite matrix field."""
    return _from_batched(np.linalg.cholesky(_to_batched(M)))


def identity_field(k: int, shape: tuple[int, ...]) -> np.ndarray:
    out = np.zeros((k, k) + tuple(shape))
    for i in range(k):
        out[i, i] = 1.0
    return out


def scalar_times_identity(s: np.ndarray, k: int) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    out = np.zeros((k, k) + s.shape)
    for i in range(k):
        out[i, i] = s
    return out
