"""Cyclic Jacobi diagonalization for small symmetric matrices, batched.

For the n <= 4 matrices handled here Jacobi is unconditionally stable and
needs no external linear algebra; the batched form applies the same cyclic
pivot order to a whole stack of matrices at once (each with its own rotation
angle), which is what makes per-point diagonalization of grid fields cheap.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError

_MAX_N = 4
_SWEEP_LIMIT = 40
_OFFDIAG_TOL = 1e-13


def eig_sym_batch(mats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and orthonormal eigenvector columns.

    ``mats`` has shape ``batch + (n, n)``; the result is ``(w, v)`` with
    shapes ``batch + (n,)`` and ``batch + (n, n)`` so that for every matrix
    ``a @ v[:, i] == w[i] * v[:, i]``. Sweeps stop once each matrix's
    off-diagonal Frobenius norm is below 1e-13 of its total norm.
    """
    a = np.asarray(mats, dtype=np.float64)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise InvalidInputError(f"expected square matrices, got shape {a.shape}")
    n = a.shape[-1]
    if n > _MAX_N:
        raise InvalidInputError(f"matrices larger than {_MAX_N}x{_MAX_N} are not supported")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("matrix entries must be finite")
    batch_shape = a.shape[:-2]
    work = a.reshape(-1, n, n).copy()
    m = work.shape[0]

    scale = np.sqrt(np.einsum("mij,mij->m", work, work))
    asym = np.abs(work - np.transpose(work, (0, 2, 1))).max(axis=(1, 2)) if n > 1 else np.zeros(m)
    if np.any(asym > 1e-12 * np.maximum(scale, 1.0)):
        raise InvalidInputError("matrices must be symmetric")
    work = 0.5 * (work + np.transpose(work, (0, 2, 1)))

    v = np.tile(np.eye(n), (m, 1, 1))
    if n == 1:
        w = work[:, 0, 0].reshape(batch_shape + (1,))
        return w, v.reshape(batch_shape + (n, n))

    threshold2 = (_OFFDIAG_TOL * scale) ** 2
    off_mask = ~np.eye(n, dtype=bool)
    for _ in range(_SWEEP_LIMIT):
        off = np.where(off_mask, work, 0.0)
        off2 = np.einsum("mij,mij->m", off, off)
        if np.all(off2 <= threshold2):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = work[:, p, q]
                rotate = apq != 0.0
                if not rotate.any():
                    continue
                app = work[:, p, p]
                aqq = work[:, q, q]
                tau = np.zeros(m)
                np.divide(aqq - app, 2.0 * apq, out=tau, where=rotate)
                sgn = np.where(tau >= 0.0, 1.0, -1.0)
                t = np.where(rotate, sgn / (np.abs(tau) + np.hypot(1.0, tau)), 0.0)
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c

                colp = work[:, :, p].copy()
                colq = work[:, :, q].copy()
                work[:, :, p] = c[:, None] * colp - s[:, None] * colq
                work[:, :, q] = s[:, None] * colp + c[:, None] * colq
                rowp = work[:, p, :].copy()
                rowq = work[:, q, :].copy()
                work[:, p, :] = c[:, None] * rowp - s[:, None] * rowq
                work[:, q, :] = s[:, None] * rowp + c[:, None] * rowq
                work[:, p, q] = np.where(rotate, 0.0, work[:, p, q])
                work[:, q, p] = work[:, p, q]

                vp = v[:, :, p].copy()
                vq = v[:, :, q].copy()
                v[:, :, p] = c[:, None] * vp - s[:, None] * vq
                v[:, :, q] = s[:, None] * vp + c[:, None] * vq
    else:
        raise InvalidInputError("Jacobi sweeps did not converge (non-symmetric or pathological input)")

    w = np.einsum("mii->mi", work).copy()
    order = np.argsort(w, axis=1, kind="stable")
    w = np.take_along_axis(w, order, axis=1)
    v = np.take_along_axis(v, order[:, None, :], axis=2)
    return w.reshape(batch_shape + (n,)), v.reshape(batch_shape + (n, n))


def eig_sym(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a single symmetric matrix, eigenvalues ascending."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise InvalidInputError(f"expected a single matrix, got shape {a.shape}")
    w, v = eig_sym_batch(a[None])
    return w[0], v[0]


def field_eigensystem(field) -> tuple[np.ndarray, np.ndarray]:
    """Per-point eigen-decomposition of a SymMatrixField."""
    return eig_sym_batch(field.to_full())
