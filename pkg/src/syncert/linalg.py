"""Dense symmetric linear algebra kernels.

Small symmetric eigenproblems are solved with a cyclic Jacobi sweep; larger
ones (the PDE operators) go through LAPACK. Everything here is a pure
function on numpy arrays.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import ConditionViolated, InputError

#: Matrices up to this dimension use the Jacobi solver by default.
JACOBI_MAX_DIM = 64

PSD_TOL = 1e-10
ABS_FLOOR = 1e-14


class EigenDecomposition(NamedTuple):
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _finite(m, name="matrix"):
    arr = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} has non-finite entries")
    return arr


def as_sym(m) -> np.ndarray:
    """Return ``(m + m.T) / 2`` as a float array, validating shape and finiteness."""
    arr = _finite(m)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise InputError(f"expected a non-empty square matrix, got shape {arr.shape}")
    return 0.5 * (arr + arr.T)


def tolerance(m, rel) -> float:
    """Relative tolerance scaled by the Frobenius norm, with an absolute floor."""
    return max(rel * float(np.linalg.norm(m)), ABS_FLOOR)


def unit_projector(n: int, k: int) -> np.ndarray:
    """``E_k = e_k e_k^T`` in ``R^{n x n}`` (0-based ``k``)."""
    if not 0 <= k < n:
        raise InputError(f"component index {k} out of range for n={n}")
    e = np.zeros((n, n))
    e[k, k] = 1.0
    return e


def jacobi_eigh(m, tol=1e-13, max_sweeps=100) -> EigenDecomposition:
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Sweeps over the upper triangle in row order until the largest
    off-diagonal magnitude drops below ``tol * ||m||_F``.
    """
    a = as_sym(m).copy()
    n = a.shape[0]
    v = np.eye(n)
    thresh = tolerance(a, tol)
    for _ in range(max_sweeps):
        off = np.abs(np.triu(a, 1))
        if n == 1 or off.max() < thresh:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return EigenDecomposition(w[order], v[:, order])


def sym_eigs(m, method="auto") -> EigenDecomposition:
    """Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric matrix.

    ``method`` is ``"jacobi"``, ``"lapack"`` or ``"auto"`` (Jacobi up to
    ``JACOBI_MAX_DIM``).
    """
    a = as_sym(m)
    if method == "auto":
        method = "jacobi" if a.shape[0] <= JACOBI_MAX_DIM else "lapack"
    if method == "jacobi":
        return jacobi_eigh(a)
    if method == "lapack":
        w, v = np.linalg.eigh(a)
        return EigenDecomposition(w, v)
    raise InputError(f"unknown eigensolver {method!r}")


def eigvals(m, method="auto") -> np.ndarray:
    return sym_eigs(m, method).eigenvalues


def kron(a, b) -> np.ndarray:
    """Kronecker product; block ``(i, j)`` of the result is ``a[i, j] * b``."""
    a = np.atleast_2d(_finite(a, "a"))
    b = np.atleast_2d(_finite(b, "b"))
    ra, ca = a.shape
    rb, cb = b.shape
    out = a[:, None, :, None] * b[None, :, None, :]
    return out.reshape(ra * rb, ca * cb)


def half_commutator(p, k: int) -> np.ndarray:
    """``(P E_k + E_k P) / 2``."""
    p = as_sym(p)
    e = unit_projector(p.shape[0], k)
    return 0.5 * (p @ e + e @ p)


def factor_half_sym(p, k: int, tol=PSD_TOL) -> np.ndarray:
    """Square-root factor ``Q_k`` with ``Q_k^T Q_k = (P E_k + E_k P) / 2``.

    The target is rank deficient by construction, so the factor comes from
    the eigendecomposition (``Q = sqrt(Lambda) V^T``) rather than Cholesky.
    Eigenvalues in ``[-tol*||.||, 0)`` are clamped to zero.
    """
    h = half_commutator(p, k)
    w, v = sym_eigs(h)
    floor = tolerance(h, tol)
    if w[0] < -floor:
        raise ConditionViolated(
            f"P E_{k + 1} + E_{k + 1} P is not positive semidefinite "
            f"(min eigenvalue {w[0]:.3e})"
        )
    w = np.clip(w, 0.0, None)
    return np.sqrt(w)[:, None] * v.T


def is_negative_definite(m, margin=0.0):
    """Return ``(lambda_max(m) <= -margin, lambda_max(m))``."""
    lmax = float(eigvals(m)[-1])
    return lmax <= -margin, lmax
