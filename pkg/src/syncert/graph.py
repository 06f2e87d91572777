"""Per-component interconnection graphs and their generalized Laplacians."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .linalg import eigvals, tolerance


@dataclass(frozen=True)
class ComponentGraph:
    """Weighted graph over ``num_nodes`` compartments.

    Edges are ``(i, j, w)`` triples with 1-based node indices. For a symmetric
    graph each listed edge is mirrored, so ``[(1, 2, 3.0)]`` already means
    ``w_12 = w_21 = 3``. For a directed graph ``(i, j, w)`` is the weight with
    which node ``i`` is pulled toward node ``j``.
    """

    num_nodes: int
    edges: tuple = ()
    symmetric: bool = True

    def __post_init__(self):
        if int(self.num_nodes) != self.num_nodes or self.num_nodes < 1:
            raise InputError(f"num_nodes must be a positive integer, got {self.num_nodes!r}")
        cleaned = []
        for edge in self.edges:
            if len(edge) != 3:
                raise InputError(f"edge {edge!r} is not an (i, j, w) triple")
            i, j, w = edge
            if int(i) != i or int(j) != j:
                raise InputError(f"edge {edge!r} has non-integer node indices")
            i, j, w = int(i), int(j), float(w)
            if not (1 <= i <= self.num_nodes and 1 <= j <= self.num_nodes):
                raise InputError(f"edge {edge!r} references a node outside 1..{self.num_nodes}")
            if i == j:
                raise InputError(f"self-loop on node {i} is not allowed")
            if not np.isfinite(w):
                raise InputError(f"edge {edge!r} has a non-finite weight")
            cleaned.append((i, j, w))
        object.__setattr__(self, "edges", tuple(cleaned))
        if self.symmetric:
            seen = {}
            for i, j, w in cleaned:
                key = (min(i, j), max(i, j))
                if key in seen and seen[key] != w:
                    raise InputError(f"conflicting weights for symmetric edge {key}")
                seen[key] = w

    def weight_matrix(self) -> np.ndarray:
        """``W[i, j] = w_ij`` (0-based), mirrored when symmetric."""
        n = self.num_nodes
        w = np.zeros((n, n))
        for i, j, wt in self.edges:
            w[i - 1, j - 1] = wt
            if self.symmetric:
                w[j - 1, i - 1] = wt
        return w

    def with_edge(self, i, j, w):
        return ComponentGraph(self.num_nodes, self.edges + ((i, j, w),), self.symmetric)

    @classmethod
    def from_json(cls, data):
        if not isinstance(data, dict):
            raise InputError("graph must be a JSON object")
        unknown = set(data) - {"num_nodes", "edges", "symmetric"}
        if unknown:
            raise InputError(f"unknown graph keys: {sorted(unknown)}")
        if "num_nodes" not in data:
            raise InputError("graph is missing 'num_nodes'")
        return cls(data["num_nodes"], tuple(tuple(e) for e in data.get("edges", [])),
                   bool(data.get("symmetric", True)))

    def to_json(self):
        return {"num_nodes": self.num_nodes,
                "edges": [list(e) for e in self.edges],
                "symmetric": self.symmetric}

    # common topologies, unit weights unless stated
    @classmethod
    def complete(cls, n, w=1.0):
        return cls(n, tuple((i, j, w) for i in range(1, n + 1) for j in range(i + 1, n + 1)))

    @classmethod
    def cycle(cls, n, w=1.0):
        if n < 3:
            raise InputError("a cycle needs at least 3 nodes")
        return cls(n, tuple((i, i % n + 1, w) for i in range(1, n + 1)))

    @classmethod
    def path(cls, n, w=1.0):
        return cls(n, tuple((i, i + 1, w) for i in range(1, n)))

    @classmethod
    def empty(cls, n):
        return cls(n, ())


@dataclass(frozen=True)
class LaplacianMatrix:
    matrix: np.ndarray
    lambda2: float
    symmetric: bool
    # False when negative weights make a symmetric Laplacian indefinite
    psd: bool = True
    # False for a non-symmetric Laplacian whose symmetric part is not positive on 1-perp
    has_positive_lambda2: bool = True
    notes: tuple = field(default=())

    @property
    def is_zero(self) -> bool:
        return not np.any(self.matrix)

    @property
    def num_nodes(self) -> int:
        return self.matrix.shape[0]


def _ones_complement_basis(n: int) -> np.ndarray:
    """Orthonormal ``n x (n-1)`` basis of the complement of the all-ones vector."""
    # Householder reflector mapping e_1 onto 1/sqrt(n); its last n-1 columns span 1-perp.
    u = np.ones(n) / np.sqrt(n)
    u[0] -= 1.0
    nu = np.dot(u, u)
    h = np.eye(n) if nu == 0.0 else np.eye(n) - 2.0 * np.outer(u, u) / nu
    return h[:, 1:]


def _restricted_min_eig(sym_part: np.ndarray) -> float:
    n = sym_part.shape[0]
    if n == 1:
        return 0.0
    b = _ones_complement_basis(n)
    return float(eigvals(b.T @ sym_part @ b)[0])


def laplacian_from_weights(w: np.ndarray) -> np.ndarray:
    """``L = diag(W 1) - W``."""
    w = np.array(w, dtype=float)
    np.fill_diagonal(w, 0.0)
    return np.diag(w.sum(axis=1)) - w


def build_laplacian(g: ComponentGraph, scale: float = 1.0) -> LaplacianMatrix:
    """Generalized Laplacian of ``g`` with every weight multiplied by ``scale``."""
    lap = scale * laplacian_from_weights(g.weight_matrix())
    lap = lap + 0.0  # normalize -0.0 entries
    if g.symmetric:
        lam2 = lambda2_symmetric(lap)
        lam_min = float(eigvals(lap)[0]) if lap.shape[0] > 0 else 0.0
        psd = lam_min >= -tolerance(lap, 1e-10)
        notes = ()
        if not psd:
            notes = ("negative weights make this Laplacian indefinite",)
            warnings.warn(notes[0], stacklevel=2)
        return LaplacianMatrix(lap, lam2, True, psd=psd, notes=notes)
    lam2, ok = lambda2_general(lap)
    notes = () if ok else ("no positive algebraic connectivity for this directed graph",)
    return LaplacianMatrix(lap, lam2, False, psd=ok, has_positive_lambda2=ok, notes=notes)


def _as_matrix(lap):
    if isinstance(lap, LaplacianMatrix):
        return lap.matrix
    return np.asarray(lap, dtype=float)


def lambda2_symmetric(lap) -> float:
    """Second smallest eigenvalue of a symmetric Laplacian (0 for the zero matrix)."""
    m = _as_matrix(lap)
    if isinstance(lap, LaplacianMatrix) and not lap.symmetric:
        raise InputError("lambda2_symmetric requires a symmetric Laplacian")
    if not np.allclose(m, m.T, rtol=0.0, atol=tolerance(m, 1e-12)):
        raise InputError("matrix is not symmetric")
    if m.shape[0] < 2 or not np.any(m):
        return 0.0
    return float(eigvals(m)[1])


def lambda2_general(lap):
    """Largest constant ``lam`` with ``z^T L z >= lam z^T z`` for all ``z`` orthogonal to ones.

    Computed as the smallest eigenvalue of ``(L + L^T)/2`` restricted to the
    complement of the ones vector. Returns ``(lam, ok)`` where ``ok`` is
    False when ``lam <= 0``, i.e. no positive constant exists.
    """
    m = _as_matrix(lap)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InputError("Laplacian must be square")
    rows = m.sum(axis=1)
    if np.max(np.abs(rows), initial=0.0) > tolerance(m, 1e-12):
        raise InputError("Laplacian rows must sum to zero")
    if not np.any(m):
        return 0.0, False
    lam = _restricted_min_eig(0.5 * (m + m.T))
    return lam, lam > 0.0
