"""Feasibility solver for small dense linear matrix inequalities.

The unknown is a structured symmetric matrix ``P(theta) = sum_i theta_i V_i``.
Each constraint block is an affine symmetric map
``theta -> F0 + sum_i theta_i F_i`` that must be negative definite (strict
blocks) or negative semidefinite (semidefinite blocks), and ``P`` itself must
satisfy ``P >= delta_p I``.

The search minimizes a common slack ``s`` subject to::

    F_strict(theta) + delta_strict I <= s I
    F_semidef(theta)                 <= s I
    delta_p I - P(theta)             <= s I

with a log-det barrier and damped Newton steps. The problem is feasible
exactly when the optimal ``s`` is non-positive. Every feasible answer is
re-checked from scratch with the Jacobi eigensolver before it is returned;
an infeasible answer means the barrier lower bound on ``s`` became positive
(or the gap closed without a feasible point).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, StateError
from .linalg import eigvals

DELTA_STRICT = 1e-6
DELTA_P = 1e-6
SEMIDEF_TOL = 1e-9


@dataclass(frozen=True)
class VariableStructure:
    """Shape of the matrix variable.

    ``kind`` is one of ``"full_symmetric"``, ``"diagonal"`` or
    ``"block_full_plus_scalars"`` (an ``n x n`` symmetric block followed by
    ``l`` independent diagonal scalars). ``zero_pairs`` lists 0-based
    off-diagonal positions ``(i, j)`` of the leading block pinned to zero.
    """

    kind: str
    n: int
    l: int = 0
    zero_pairs: frozenset = frozenset()

    def __post_init__(self):
        if self.kind not in ("full_symmetric", "diagonal", "block_full_plus_scalars"):
            raise InputError(f"unknown variable structure {self.kind!r}")
        if self.n < 1 or self.l < 0:
            raise InputError("structure dimensions must be positive")
        if self.kind != "block_full_plus_scalars" and self.l:
            raise InputError(f"{self.kind} takes no scalar block")
        pairs = set()
        for i, j in self.zero_pairs:
            i, j = min(i, j), max(i, j)
            if i == j or not (0 <= i and j < self.n):
                raise InputError(f"invalid zero pair {(i, j)}")
            pairs.add((i, j))
        object.__setattr__(self, "zero_pairs", frozenset(pairs))

    @classmethod
    def full_symmetric(cls, n, zero_pairs=()):
        return cls("full_symmetric", n, 0, frozenset(zero_pairs))

    @classmethod
    def diagonal(cls, n):
        return cls("diagonal", n)

    @classmethod
    def block_full_plus_scalars(cls, n, l, zero_pairs=()):
        return cls("block_full_plus_scalars", n, l, frozenset(zero_pairs))

    @property
    def dim(self) -> int:
        return self.n + self.l

    def _entries(self):
        # (i, j) positions of free parameters: diagonal first, then upper off-diagonal
        entries = [(i, i) for i in range(self.n)]
        if self.kind != "diagonal":
            entries += [(i, j) for i in range(self.n) for j in range(i + 1, self.n)
                        if (i, j) not in self.zero_pairs]
        entries += [(self.n + i, self.n + i) for i in range(self.l)]
        return entries

    @property
    def dof(self) -> int:
        return len(self._entries())

    def basis(self) -> np.ndarray:
        entries = self._entries()
        out = np.zeros((len(entries), self.dim, self.dim))
        for a, (i, j) in enumerate(entries):
            out[a, i, j] = out[a, j, i] = 1.0
        return out

    def identity_theta(self) -> np.ndarray:
        return np.array([1.0 if i == j else 0.0 for i, j in self._entries()])

    def matrix(self, theta) -> np.ndarray:
        return np.tensordot(np.asarray(theta, dtype=float), self.basis(), axes=1)


@dataclass(frozen=True)
class AffineBlock:
    """``theta -> F0 + sum_i theta_i F[i]``."""

    F0: np.ndarray
    F: np.ndarray
    label: str = ""

    def __call__(self, theta) -> np.ndarray:
        return self.F0 + np.tensordot(np.asarray(theta, dtype=float), self.F, axes=1)

    @property
    def size(self) -> int:
        return self.F0.shape[0]


def linear_block(structure: VariableStructure, fn, label="") -> AffineBlock:
    """Block ``theta -> fn(P(theta))`` for a linear map ``fn``."""
    basis = structure.basis()
    F = np.array([fn(v) for v in basis])
    F = 0.5 * (F + np.swapaxes(F, 1, 2))
    return AffineBlock(np.zeros(F.shape[1:]), F, label)


def lyapunov_block(structure: VariableStructure, a, label="") -> AffineBlock:
    """Block ``P A + A^T P`` (``A`` must match the full variable dimension)."""
    a = np.asarray(a, dtype=float)
    if a.shape != (structure.dim, structure.dim):
        raise InputError(f"matrix shape {a.shape} does not match variable dimension {structure.dim}")
    return linear_block(structure, lambda p: p @ a + a.T @ p, label)


@dataclass
class LmiProblem:
    structure: VariableStructure
    strict_blocks: list
    semidef_blocks: list = field(default_factory=list)
    delta_strict: float = DELTA_STRICT
    delta_p: float = DELTA_P

    def __post_init__(self):
        m = self.structure.dof
        for blk in list(self.strict_blocks) + list(self.semidef_blocks):
            F0, F = np.asarray(blk.F0), np.asarray(blk.F)
            if F0.ndim != 2 or F0.shape[0] != F0.shape[1]:
                raise InputError(f"block {blk.label!r}: F0 must be square")
            if F.shape != (m,) + F0.shape:
                raise InputError(
                    f"block {blk.label!r}: expected coefficient shape {(m,) + F0.shape}, got {F.shape}")
            if not (np.all(np.isfinite(F0)) and np.all(np.isfinite(F))):
                raise InputError(f"block {blk.label!r} has non-finite entries")
            if not (np.allclose(F0, F0.T) and np.allclose(F, np.swapaxes(F, 1, 2))):
                raise InputError(f"block {blk.label!r} is not symmetric")
        if not self.strict_blocks and not self.semidef_blocks:
            raise InputError("problem has no constraint blocks")


@dataclass
class LmiResult:
    feasible: bool
    theta: np.ndarray
    variable_matrix: np.ndarray
    strict_worst: np.ndarray
    semidef_worst: np.ndarray
    min_variable_eig: float
    iterations: int
    slack: float
    status: str

    @property
    def worst_eig(self) -> np.ndarray:
        return np.concatenate([self.strict_worst, self.semidef_worst])


def _range_basis(blk: AffineBlock, m: int):
    """Orthonormal basis of the span of the ranges of F0, F_1, ..., F_m.

    Every matrix in the block's image vanishes on the orthogonal complement,
    so constraining the compression onto this basis is equivalent.
    """
    stack = np.concatenate([blk.F0[None]] + [blk.F[i][None] for i in range(m)], axis=0)
    cols = np.concatenate(list(stack), axis=1)
    if not np.any(cols):
        return None
    u, sv, _ = np.linalg.svd(cols, full_matrices=False)
    rank = int(np.sum(sv > sv[0] * 1e-12))
    return u[:, :rank]


def evaluate(problem: LmiProblem, theta):
    """Worst eigenvalues of every block and of ``P`` at ``theta``."""
    p = problem.structure.matrix(theta)
    strict = np.array([eigvals(b(theta))[-1] for b in problem.strict_blocks])
    semi = np.array([eigvals(b(theta))[-1] for b in problem.semidef_blocks])
    return p, strict, semi, float(eigvals(p)[0])


def _check(problem, theta):
    p, strict, semi, pmin = evaluate(problem, theta)
    ok = (np.all(strict <= -problem.delta_strict)
          and np.all(semi <= SEMIDEF_TOL)
          and pmin >= problem.delta_p)
    return bool(ok), p, strict, semi, pmin


class _Barrier:
    """Log-det barrier for ``(s - shift) I - C_j - sum_a z_a D_ja > 0``."""

    def __init__(self, blocks, ball_radius=None):
        self.blocks = blocks  # list of (shift, C, D)
        self.ball_radius = ball_radius
        self.total_dim = sum(C.shape[0] for _, C, _ in blocks) + (1 if ball_radius else 0)

    def slacks(self, z, s):
        out = []
        for shift, C, D in self.blocks:
            g = (s - shift) * np.eye(C.shape[0]) - C - np.tensordot(z, D, axes=1)
            out.append(0.5 * (g + g.T))
        return out

    def value(self, z, s, t):
        """Barrier objective, or ``inf`` outside the domain."""
        total = t * s
        for g in self.slacks(z, s):
            try:
                chol = np.linalg.cholesky(g)
            except np.linalg.LinAlgError:
                return np.inf
            total -= 2.0 * np.sum(np.log(np.diag(chol)))
        if self.ball_radius:
            r = self.ball_radius ** 2 - z @ z
            if r <= 0:
                return np.inf
            total -= np.log(r)
        return total

    def max_step(self, z, s, dz, ds):
        """Largest ``alpha`` keeping every slack matrix positive definite along the step."""
        limit = np.inf
        for g, (_, C, D) in zip(self.slacks(z, s), self.blocks):
            dg = ds * np.eye(C.shape[0]) - np.tensordot(dz, D, axes=1)
            chol_inv = np.linalg.inv(np.linalg.cholesky(g))
            w = np.linalg.eigvalsh(chol_inv @ (0.5 * (dg + dg.T)) @ chol_inv.T)
            if w[0] < 0.0:
                limit = min(limit, -1.0 / w[0])
        if self.ball_radius:
            # |z + a dz|^2 = R^2
            a, b, c = dz @ dz, 2.0 * z @ dz, z @ z - self.ball_radius ** 2
            if a > 0.0:
                limit = min(limit, (-b + np.sqrt(b * b - 4.0 * a * c)) / (2.0 * a))
        return limit

    def derivatives(self, z, s, t):
        m = z.size
        grad = np.zeros(m + 1)
        hess = np.zeros((m + 1, m + 1))
        grad[m] = t
        for g, (_, C, D) in zip(self.slacks(z, s), self.blocks):
            ginv = np.linalg.inv(g)
            k = C.shape[0]
            # dG/dz_a = -D_a, dG/ds = I
            dirs = np.concatenate([-D, np.eye(k)[None]], axis=0)
            w = np.einsum("ij,ajk->aik", ginv, dirs)
            grad -= np.einsum("aii->a", w)
            hess += np.einsum("aij,bji->ab", w, w)
        if self.ball_radius:
            r = self.ball_radius ** 2 - z @ z
            grad[:m] += 2.0 * z / r
            hess[:m, :m] += 2.0 * np.eye(m) / r + 4.0 * np.outer(z, z) / r ** 2
        return grad, hess


def solve_feasibility(problem: LmiProblem, optimize=True, gap_tol=1e-9,
                      max_iter=600, mu=10.0) -> LmiResult:
    """Search for ``theta`` satisfying every block of ``problem``.

    With ``optimize=True`` the slack is driven to its optimum (within
    ``gap_tol``) so the returned variable has the largest common margin the
    normalization allows; otherwise the first verified feasible point is
    returned. Homogeneous problems are normalized to ``trace(P) = dim``.
    """
    st = problem.structure
    V = st.basis()
    m = V.shape[0]
    theta0 = st.identity_theta()
    all_blocks = list(problem.strict_blocks) + list(problem.semidef_blocks)
    homogeneous = all(not np.any(b.F0) for b in all_blocks)
    if homogeneous:
        trace_row = np.einsum("aii->a", V)[None, :]
        _, _, vt = np.linalg.svd(trace_row)
        N = vt[1:].T
    else:
        N = np.eye(m)

    def reduce(F0, F, shift):
        C = F0 + np.tensordot(theta0, F, axes=1)
        D = np.einsum("ia,ijk->ajk", N, F)
        return shift, C, D

    barrier_blocks = [reduce(b.F0, b.F, problem.delta_strict) for b in problem.strict_blocks]
    for b in problem.semidef_blocks:
        u = _range_basis(b, m)
        if u is None:
            continue
        F0 = u.T @ b.F0 @ u
        F = np.einsum("ji,ajk,kl->ail", u, b.F, u)
        barrier_blocks.append(reduce(F0, F, 0.0))
    barrier_blocks.append(reduce(np.zeros((st.dim, st.dim)), -V, problem.delta_p))

    ball = None if homogeneous else 1e4 * (1.0 + np.linalg.norm(theta0))
    barrier = _Barrier(barrier_blocks, ball)

    z = np.zeros(N.shape[1])
    s = max(float(eigvals(C + shift * np.eye(C.shape[0]))[-1]) for shift, C, _ in barrier_blocks) + 1.0
    t = 1.0
    iterations = 0
    best = None
    status = "iteration budget exhausted"

    def theta_of(zz):
        return theta0 + N @ zz

    done = False
    while not done:
        for _ in range(100):
            if iterations >= max_iter:
                done = True
                break
            grad, hess = barrier.derivatives(z, s, t)
            try:
                step = -np.linalg.solve(hess, grad)
            except np.linalg.LinAlgError:
                step = -np.linalg.lstsq(hess, grad, rcond=None)[0]
            decrement = -grad @ step
            iterations += 1
            if decrement / 2.0 <= 1e-10:
                break
            f0 = barrier.value(z, s, t)
            alpha = min(1.0, 0.99 * barrier.max_step(z, s, step[:-1], step[-1]))
            while alpha > 1e-12:
                zn, sn = z + alpha * step[:-1], s + alpha * step[-1]
                if barrier.value(zn, sn, t) <= f0 - 0.25 * alpha * decrement:
                    break
                alpha *= 0.5
            else:
                break
            z, s = zn, sn
            if not optimize and s < 0.0 and _check(problem, theta_of(z))[0]:
                best = (z.copy(), s)
                done = True
                status = "feasible point found"
                break
        if done:
            break
        if s < 0.0 and (best is None or s < best[1]) and _check(problem, theta_of(z))[0]:
            best = (z.copy(), s)
        gap = barrier.total_dim / t
        if s - gap > 0.0:
            status = "infeasible: slack lower bound is positive"
            break
        if gap < gap_tol:
            status = "converged"
            break
        t *= mu

    if best is not None:
        z_final, s_final = best
        if status not in ("feasible point found",):
            status = "feasible"
    else:
        z_final, s_final = z, s
    theta = theta_of(z_final)
    ok, p, strict, semi, pmin = _check(problem, theta)
    return LmiResult(ok, theta, p, strict, semi, pmin, iterations, float(s_final), status)


def extract_margin(result: LmiResult, blocks=None) -> float:
    """``epsilon = min_j (-lambda_max(block_j(theta)))`` over strict blocks."""
    if not result.feasible:
        raise StateError("cannot extract a margin from an infeasible result")
    if blocks is None:
        worst = result.strict_worst
    else:
        worst = np.array([eigvals(b(result.theta))[-1] for b in blocks])
    if worst.size == 0:
        raise StateError("no strict blocks to extract a margin from")
    return float(-np.max(worst))
