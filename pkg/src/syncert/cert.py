"""Synchronization certificates for diffusively coupled networks.

A certificate is a positive definite ``P`` and a margin ``epsilon`` with::

    P (J - sum_k lam2_k E_k) + (J - sum_k lam2_k E_k)^T P <= -epsilon I

for every Jacobian ``J`` allowed by a :class:`JacobianBound`, together with
``P E_k + E_k P >= 0`` for every coupled component ``k``.

The second condition is equivalent to row ``k`` of ``P`` vanishing off the
diagonal: ``P E_k + E_k P`` has the 2x2 principal minor
``[[2 p_kk, p_ik], [p_ik, 0]]`` whose determinant is ``-p_ik**2``. The
solvers therefore impose it through the sparsity of ``P``, which also makes
``P E_k`` symmetric as required for non-symmetric Laplacians.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .linalg import eigvals, half_commutator
from .lmi import (LmiProblem, LmiResult, VariableStructure, extract_margin, linear_block,
                  lyapunov_block, solve_feasibility)

MAX_HULL_TERMS = 12


@dataclass(frozen=True)
class JacobianBound:
    """Convex parametrization of the Jacobian over the state set.

    ``kind == "hull_cone"``: ``J in conv{Z} + cone{S}``.
    ``kind == "box"``: ``J = A0 + sum_i w_i B[:, i] C[:, i]^T`` with ``w_i in [0, 1]``.
    """

    kind: str
    n: int
    Z: tuple = ()
    S: tuple = ()
    A0: np.ndarray | None = None
    B: np.ndarray | None = None
    C: np.ndarray | None = None

    @classmethod
    def hull_cone(cls, Z, S=()):
        Z = tuple(np.array(z, dtype=float) for z in Z)
        S = tuple(np.array(s, dtype=float) for s in S)
        if not Z:
            raise InputError("a hull bound needs at least one vertex")
        n = Z[0].shape[0]
        for mat in Z + S:
            if mat.shape != (n, n) or not np.all(np.isfinite(mat)):
                raise InputError(f"hull/cone matrices must be finite {n}x{n} arrays")
        return cls("hull_cone", n, Z=Z, S=S)

    @classmethod
    def box(cls, A0, terms=()):
        """``terms`` is a sequence of ``(B_i, C_i)`` vector pairs."""
        A0 = np.array(A0, dtype=float)
        n = A0.shape[0]
        if A0.shape != (n, n) or not np.all(np.isfinite(A0)):
            raise InputError("A0 must be a finite square matrix")
        B = np.zeros((n, len(terms)))
        C = np.zeros((n, len(terms)))
        for i, (b, c) in enumerate(terms):
            b, c = np.asarray(b, dtype=float), np.asarray(c, dtype=float)
            if b.shape != (n,) or c.shape != (n,):
                raise InputError(f"rank-one term {i + 1} must be a pair of length-{n} vectors")
            B[:, i], C[:, i] = b, c
        if not (np.all(np.isfinite(B)) and np.all(np.isfinite(C))):
            raise InputError("rank-one terms must be finite")
        return cls("box", n, A0=A0, B=B, C=C)

    @property
    def num_terms(self) -> int:
        return self.B.shape[1] if self.kind == "box" else 0

    def rank_one_matrices(self):
        return [np.outer(self.B[:, i], self.C[:, i]) for i in range(self.num_terms)]

    def at(self, omega) -> np.ndarray:
        """Box member for coefficients ``omega``."""
        omega = np.asarray(omega, dtype=float)
        return self.A0 + (self.B * omega) @ self.C.T

    def vertices(self):
        """Hull vertices: the ``Z`` list, or the ``2**l`` corners of a box."""
        if self.kind == "hull_cone":
            return list(self.Z)
        if self.num_terms > MAX_HULL_TERMS:
            raise InputError(
                f"box has {self.num_terms} terms; vertex enumeration is limited to {MAX_HULL_TERMS}")
        return [self.at(w) for w in itertools.product((0.0, 1.0), repeat=self.num_terms)]

    def to_hull(self) -> "JacobianBound":
        return JacobianBound.hull_cone(self.vertices())

    def augmented(self, lambda2s) -> np.ndarray:
        """``[[A0 - sum lam2_k E_k, B], [C^T, -I]]``."""
        if self.kind != "box":
            raise InputError("augmented matrix is only defined for box bounds")
        l = self.num_terms
        top = np.hstack([reduced_matrix(self.A0, lambda2s), self.B])
        bottom = np.hstack([self.C.T, -np.eye(l)])
        return np.vstack([top, bottom])


@dataclass
class Certificate:
    P: np.ndarray
    epsilon: float
    lambda2s: np.ndarray
    method: str
    residuals: np.ndarray
    commutation_checked: dict
    lmi: LmiResult | None = None
    extras: dict = field(default_factory=dict)
    ok = True

    @property
    def rate(self) -> float:
        """Guaranteed exponential rate of the synchronization error norm."""
        return self.epsilon / (2.0 * float(eigvals(self.P)[-1]))


@dataclass
class Failure:
    method: str
    reason: str
    lambda2s: np.ndarray
    lmi: LmiResult | None = None
    extras: dict = field(default_factory=dict)
    ok = False


def reduced_matrix(Z, lambda2s) -> np.ndarray:
    """``Z - sum_k lam2_k E_k``: subtract ``lam2_k`` from the ``k``-th diagonal entry."""
    Z = np.array(Z, dtype=float)
    lam = np.asarray(lambda2s, dtype=float)
    if Z.ndim != 2 or Z.shape[0] != Z.shape[1]:
        raise InputError("reduced_matrix needs a square matrix")
    if lam.shape != (Z.shape[0],):
        raise InputError(f"expected {Z.shape[0]} algebraic connectivities, got {lam.shape}")
    return Z - np.diag(lam)


def _coupled_set(require_commutation, n):
    ks = sorted({int(k) for k in require_commutation})
    for k in ks:
        if not 0 <= k < n:
            raise InputError(f"component index {k} out of range for n={n}")
    return ks


def _commutation_pairs(ks, n):
    return [(k, j) for k in ks for j in range(n) if j != k]


def _commutation_blocks(structure, ks, n):
    blocks = []
    for k in ks:
        e = np.zeros((structure.dim, structure.dim))
        e[k, k] = 1.0
        # -(P E_k + E_k P) <= 0, on the n x n leading block only
        blocks.append(linear_block(
            structure, lambda p, e=e: -(p @ e + e @ p)[:n, :n], label=f"commutation k={k + 1}"))
    return blocks


def _commutation_report(P, ks):
    return {k: bool(eigvals(2.0 * half_commutator(P, k))[0] >= -1e-9) for k in ks}


def condition_residuals(P, jacobians, lambda2s) -> np.ndarray:
    """``lambda_max(P R + R^T P)`` with ``R = reduced_matrix(J, lambda2s)`` for each ``J``."""
    out = []
    for J in jacobians:
        R = reduced_matrix(J, lambda2s)
        out.append(eigvals(P @ R + R.T @ P)[-1])
    return np.array(out)


def certify_hull_cone(bound: JacobianBound, lambda2s, require_commutation=()):
    """Common Lyapunov matrix for every hull vertex and cone generator."""
    if bound.kind != "hull_cone":
        raise InputError("certify_hull_cone needs a hull_cone bound")
    n = bound.n
    lam = np.asarray(lambda2s, dtype=float)
    ks = _coupled_set(require_commutation, n)
    st = VariableStructure.full_symmetric(n, _commutation_pairs(ks, n))
    strict = [lyapunov_block(st, reduced_matrix(Z, lam), label=f"vertex {i + 1}")
              for i, Z in enumerate(bound.Z)]
    semidef = [lyapunov_block(st, S, label=f"cone {i + 1}") for i, S in enumerate(bound.S)]
    semidef += _commutation_blocks(st, ks, n)
    result = solve_feasibility(LmiProblem(st, strict, semidef))
    if not result.feasible:
        return Failure("hull_cone", result.status, lam, result)
    P = result.variable_matrix
    return Certificate(P, extract_margin(result), lam, "hull_cone", result.strict_worst,
                       _commutation_report(P, ks), result)


def _box_certificate(bound, lam, ks, P, method, result, extras):
    if bound.num_terms <= MAX_HULL_TERMS:
        residuals = condition_residuals(P, bound.vertices(), lam)
        eps = float(-np.max(residuals))
    else:
        # the augmented margin lower-bounds the margin over the box
        residuals = result.strict_worst
        eps = extract_margin(result)
    if eps <= 0.0:
        return Failure(method, "box vertices not certified by the recovered P", lam, result, extras)
    return Certificate(P, eps, lam, method, residuals, _commutation_report(P, ks), result, extras)


def certify_box(bound: JacobianBound, lambda2s, require_commutation=()):
    """Certify a convex box through the rank-one augmentation.

    Solves ``Pc M + M^T Pc < 0`` with ``M = bound.augmented(lambda2s)`` and
    ``Pc = diag(P, q_1, ..., q_l)``; ``P`` is the leading block.
    """
    if bound.kind != "box":
        raise InputError("certify_box needs a box bound")
    n, l = bound.n, bound.num_terms
    lam = np.asarray(lambda2s, dtype=float)
    ks = _coupled_set(require_commutation, n)
    M = bound.augmented(lam)
    st = VariableStructure.block_full_plus_scalars(n, l, _commutation_pairs(ks, n))
    strict = [lyapunov_block(st, M, label="augmented")]
    result = solve_feasibility(LmiProblem(st, strict, _commutation_blocks(st, ks, n)))
    extras = {"augmented_margin": float(-result.strict_worst[0])}
    if not result.feasible:
        return Failure("box", result.status, lam, result, extras)
    P = result.variable_matrix[:n, :n]
    return _box_certificate(bound, lam, ks, P, "box", result, extras)


def secant_threshold(length: int) -> float:
    """``sec(pi/m)**m`` for a cycle of length ``m >= 3``."""
    if length < 3:
        raise InputError("the secant criterion needs a cycle of length >= 3")
    return 1.0 / math.cos(math.pi / length) ** length


def secant_criterion(etas, alphabetas, lambda2s):
    """Gain ratio ``prod(alpha_k beta_k) / prod(eta_k + lam2_k)`` against ``sec(pi/n)**n``.

    Returns ``(passed, ratio, threshold)``; the comparison is strict.
    """
    etas = np.asarray(etas, dtype=float)
    ab = np.asarray(alphabetas, dtype=float)
    lam = np.asarray(lambda2s, dtype=float)
    n = etas.size
    if not (ab.size == n and lam.size == n):
        raise InputError("etas, alphabetas and lambda2s must have the same length")
    if n < 3:
        raise InputError("the secant criterion needs n >= 3")
    den = etas + lam
    if np.any(den <= 0.0):
        raise InputError("every eta_k + lambda2_k must be positive")
    if np.any(ab <= 0.0):
        raise InputError("every alpha_k beta_k must be positive")
    ratio = float(np.prod(ab) / np.prod(den))
    threshold = secant_threshold(n)
    return ratio < threshold, ratio, threshold


def cyclic_permutation(M, tol=0.0):
    """Order the states so that ``M`` becomes cyclic.

    Returns ``(G, Mtilde, order)`` with ``Mtilde = G M G^T`` having
    off-diagonal entries only at ``(i, i-1)`` and ``(0, dim-1)``, or ``None``
    if no such ordering exists. Each off-diagonal entry ``(r, c)`` forces
    ``r`` to come right after ``c``; the orderings are the chains these
    constraints form, joined into one loop.
    """
    M = np.asarray(M, dtype=float)
    d = M.shape[0]
    succ, pred = {}, {}
    for r, c in zip(*np.nonzero(np.abs(M) > tol)):
        if r == c:
            continue
        r, c = int(r), int(c)
        if succ.get(c, r) != r or pred.get(r, c) != c:
            return None
        succ[c], pred[r] = r, c
    # a closed loop must cover every state
    seen = set()
    for start in range(d):
        if start in seen:
            continue
        node, length = start, 0
        while node in succ and node not in seen:
            seen.add(node)
            node = succ[node]
            length += 1
        if node == start and length and length < d:
            return None
    heads = [i for i in range(d) if i not in pred]
    order = []
    if not heads:
        node = 0
        for _ in range(d):
            order.append(node)
            node = succ[node]
    for head in heads:
        node = head
        while node is not None:
            order.append(node)
            node = succ.get(node)
    G = np.zeros((d, d))
    G[np.arange(d), order] = 1.0
    Mt = G @ M @ G.T
    allowed = np.eye(d, dtype=bool)
    allowed[np.arange(1, d), np.arange(d - 1)] = True
    if d > 1:
        allowed[0, d - 1] = True
    if np.any((np.abs(Mt) > tol) & ~allowed):
        return None
    return G, Mt, order


def cyclic_secant(Mt):
    """Secant test for a cyclic matrix with negative diagonal.

    Returns ``(passed, ratio, threshold)``. With a negative loop gain the
    threshold is ``sec(pi/m)**m``; with a positive loop the matrix is
    sign-similar to a Metzler matrix and the threshold is 1.
    """
    Mt = np.asarray(Mt, dtype=float)
    d = Mt.shape[0]
    diag = np.diag(Mt)
    if np.any(diag >= 0.0):
        raise InputError("cyclic secant test needs a strictly negative diagonal")
    loop = np.concatenate([np.diag(Mt, -1), [Mt[0, d - 1]]]) if d > 1 else np.zeros(1)
    if np.any(loop == 0.0):
        return True, 0.0, math.inf
    ratio = float(np.prod(np.abs(loop)) / np.prod(-diag))
    threshold = secant_threshold(d) if np.prod(np.sign(loop)) < 0 else 1.0
    return ratio < threshold, ratio, threshold


def diagonal_stability_transfer(G, Ptilde) -> np.ndarray:
    """``G^T Ptilde G``: a diagonal Lyapunov matrix for ``M`` from one for ``G M G^T``."""
    Pt = np.asarray(Ptilde, dtype=float)
    if np.any(Pt != np.diag(np.diag(Pt))) or np.any(np.diag(Pt) <= 0.0):
        raise InputError("Ptilde must be diagonal with positive entries")
    return G.T @ Pt @ G


def certify_secant_diagonal(bound: JacobianBound, lambda2s):
    """Diagonal certificate for a box whose augmented matrix is cyclic."""
    if bound.kind != "box":
        raise InputError("certify_secant_diagonal needs a box bound")
    n = bound.n
    lam = np.asarray(lambda2s, dtype=float)
    M = bound.augmented(lam)
    found = cyclic_permutation(M)
    if found is None:
        return Failure("secant_diagonal", "augmented matrix is not cyclic", lam)
    G, Mt, order = found
    passed, ratio, threshold = cyclic_secant(Mt)
    extras = {"order": order, "cyclic_ratio": ratio, "cyclic_threshold": threshold,
              "cyclic_secant_pass": passed}
    st = VariableStructure.diagonal(M.shape[0])
    result = solve_feasibility(LmiProblem(st, [lyapunov_block(st, Mt, label="cyclic")]))
    if not result.feasible:
        return Failure("secant_diagonal", result.status, lam, result, extras)
    Pc = diagonal_stability_transfer(G, np.diag(np.diag(result.variable_matrix)))
    P = Pc[:n, :n]
    extras["augmented_P"] = Pc
    return _box_certificate(bound, lam, list(range(n)), P, "secant_diagonal", result, extras)


def certify(bound: JacobianBound, lambda2s, require_commutation=(), method="auto"):
    """Dispatch on ``method``: ``hull_cone``, ``box``, ``secant_diagonal`` or ``auto``."""
    if method == "auto":
        method = "box" if bound.kind == "box" else "hull_cone"
    if method == "hull_cone":
        if bound.kind == "box":
            bound = bound.to_hull()
        return certify_hull_cone(bound, lambda2s, require_commutation)
    if method == "box":
        return certify_box(bound, lambda2s, require_commutation)
    if method == "secant_diagonal":
        return certify_secant_diagonal(bound, lambda2s)
    raise InputError(f"unknown certification method {method!r}")


@dataclass
class Verification:
    worst: float
    commutation_min: float
    p_min: float
    ok: bool


def verify_certificate(cert: Certificate, bound: JacobianBound, samples=100, seed=0,
                       require_commutation=None, tol=1e-6) -> Verification:
    """Re-check a certificate from scratch on vertices plus random box samples."""
    P, lam = cert.P, cert.lambda2s
    jacobians = []
    if bound.kind == "hull_cone":
        jacobians = list(bound.Z)
    else:
        if bound.num_terms <= MAX_HULL_TERMS:
            jacobians = bound.vertices()
        rng = np.random.default_rng(seed)
        jacobians += [bound.at(w) for w in rng.uniform(0.0, 1.0, (samples, bound.num_terms))]
    worst = float(np.max(condition_residuals(P, jacobians, lam)))
    ks = cert.commutation_checked.keys() if require_commutation is None else require_commutation
    comm = min((float(eigvals(2.0 * half_commutator(P, k))[0]) for k in ks), default=0.0)
    pmin = float(eigvals(P)[0])
    ok = worst <= -cert.epsilon + tol and comm >= -1e-9 and pmin > 0.0
    if bound.kind == "hull_cone":
        for S in bound.S:
            ok = ok and eigvals(P @ S + S.T @ P)[-1] <= 1e-9
    return Verification(worst, comm, pmin, bool(ok))
