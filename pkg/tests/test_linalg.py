import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from syncert.errors import ConditionViolated, InputError
from syncert.linalg import (
    as_sym,
    eigvals,
    factor_half_sym,
    half_commutator,
    is_negative_definite,
    jacobi_eigh,
    kron,
    sym_eigs,
    unit_projector,
)


def sturm_count(m, x):
    """Number of eigenvalues of symmetric ``m`` below ``x`` (LDL^T pivot signs)."""
    a = m - x * np.eye(len(m))
    count = 0
    n = len(a)
    a = a.copy()
    for i in range(n):
        piv = a[i, i]
        if piv == 0.0:
            piv = 1e-300
        if piv < 0:
            count += 1
        if i + 1 < n:
            col = a[i + 1:, i] / piv
            a[i + 1:, i + 1:] -= np.outer(col, a[i, i + 1:])
    return count


def bisection_eigs(m, tol=1e-12):
    """Eigenvalues from bisection on the characteristic-polynomial sign count."""
    r = np.abs(m).sum(axis=1).max() + 1.0
    out = []
    for k in range(len(m)):
        lo, hi = -r, r
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if sturm_count(m, mid) > k:
                hi = mid
            else:
                lo = mid
        out.append(0.5 * (lo + hi))
    return np.array(out)


def cofactor_det(m):
    if len(m) == 1:
        return m[0, 0]
    return sum((-1) ** j * m[0, j] * cofactor_det(np.delete(m[1:], j, axis=1))
               for j in range(len(m)))


sym_matrices = st.integers(1, 6).flatmap(
    lambda n: arrays(np.float64, (n, n), elements=st.floats(-10, 10, allow_nan=False))
).map(lambda a: 0.5 * (a + a.T))


def test_identity_eigenvalues():
    np.testing.assert_allclose(eigvals(np.eye(3)), [1, 1, 1])


def test_swap_matrix_eigenvalues():
    np.testing.assert_allclose(eigvals([[0, 1], [1, 0]]), [-1, 1], atol=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_jacobi_matches_bisection_oracle(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((5, 5))
    m = a + a.T
    np.testing.assert_allclose(jacobi_eigh(m).eigenvalues, bisection_eigs(m), atol=1e-8)


def test_jacobi_agrees_with_lapack():
    rng = np.random.default_rng(11)
    a = rng.standard_normal((20, 20))
    m = a + a.T
    np.testing.assert_allclose(eigvals(m, "jacobi"), eigvals(m, "lapack"), atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(sym_matrices)
def test_eigen_invariants(m):
    w, v = sym_eigs(m)
    scale = max(np.linalg.norm(m), 1.0)
    assert np.all(np.diff(w) >= 0)
    assert np.linalg.norm(m @ v - v * w) <= 1e-10 * scale
    assert np.linalg.norm(v.T @ v - np.eye(len(m))) <= 1e-10
    assert abs(w.sum() - np.trace(m)) <= 1e-9 * scale
    if len(m) <= 4:
        det = cofactor_det(m)
        assert abs(np.prod(w) - det) <= 1e-8 * scale ** len(m)


def test_non_finite_input_rejected():
    with pytest.raises(InputError):
        sym_eigs([[1.0, np.nan], [np.nan, 1.0]])


def test_as_sym_symmetrizes():
    s = as_sym([[1.0, 2.0], [0.0, 3.0]])
    assert np.array_equal(s, s.T)
    assert s[0, 1] == 1.0


def test_kron_identity_blocks():
    np.testing.assert_array_equal(kron(np.eye(2), unit_projector(2, 0)), np.diag([1.0, 0, 1, 0]))


def test_kron_scalar():
    b = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(kron([[2.0]], b), 2 * b)


def test_kron_elementwise_definition():
    lap = np.array([[1.0, -1.0], [-1.0, 1.0]])
    e1 = unit_projector(2, 0)
    out = kron(lap, e1)
    assert out.shape == (4, 4)
    for i, j, k, l in itertools.product(range(2), repeat=4):
        assert out[2 * i + k, 2 * j + l] == lap[i, j] * e1[k, l]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_kron_mixed_product(seed):
    rng = np.random.default_rng(seed)
    p, q, r, s, t, u = rng.integers(1, 4, 6)
    A, B = rng.standard_normal((p, q)), rng.standard_normal((r, s))
    C, D = rng.standard_normal((q, t)), rng.standard_normal((s, u))
    np.testing.assert_allclose(kron(A, B) @ kron(C, D), kron(A @ C, B @ D), atol=1e-10)


def test_factor_identity():
    q = factor_half_sym(np.eye(3), 0)
    np.testing.assert_allclose(q.T @ q, unit_projector(3, 0), atol=1e-12)


def test_factor_hand_example():
    p = np.diag([4.0, 1.0])
    q = factor_half_sym(p, 0)
    np.testing.assert_allclose(q.T @ q, np.diag([4.0, 0.0]), atol=1e-12)
    np.testing.assert_allclose(np.abs(q).max(), 2.0)


def test_factor_rejects_indefinite():
    p = np.array([[2.0, 1.0], [1.0, 2.0]])
    with pytest.raises(ConditionViolated):
        factor_half_sym(p, 0)


def test_factor_deterministic_and_accurate():
    p = np.diag([3.0, 2.0, 5.0])
    q1, q2 = factor_half_sym(p, 1), factor_half_sym(p, 1)
    assert np.array_equal(q1, q2)
    assert np.linalg.norm(q1.T @ q1 - half_commutator(p, 1)) <= 1e-9


def test_negative_definite_examples():
    assert is_negative_definite(-np.eye(3), 0.5) == (True, -1.0)
    ok, lmax = is_negative_definite([[0.0, 1.0], [1.0, 0.0]], 0.0)
    assert not ok and lmax == pytest.approx(1.0)


def test_unit_projector_range():
    with pytest.raises(InputError):
        unit_projector(3, 3)
