"""Coupled ring oscillators: an n-stage inverter loop per circuit.

Stage 1 is driven by the inverted output of stage n, every other stage by
its predecessor; like nodes of different circuits are coupled through
resistors, which enter as weighted graph Laplacians.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cert import JacobianBound
from .errors import InputError
from .graph import ComponentGraph, build_laplacian
from .simode import NetworkModel

SECH_CLAMP = 350.0


@dataclass(frozen=True)
class RingOscillatorParams:
    """Stage parameters; ``eta = 1/(R C)`` and ``coupling_d = 1/(R_coupling C)`` in 1/s."""

    eta: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    coupling_d: np.ndarray

    def __post_init__(self):
        arrays = {}
        for name in ("eta", "alpha", "beta", "coupling_d"):
            arr = np.array(getattr(self, name), dtype=float).reshape(-1)
            if not np.all(np.isfinite(arr)):
                raise InputError(f"{name} must be finite")
            arrays[name] = arr
        n = arrays["eta"].size
        if n < 3:
            raise InputError("a ring oscillator needs at least 3 stages")
        for name, arr in arrays.items():
            if arr.size != n:
                raise InputError(f"{name} has {arr.size} entries, expected {n}")
            object.__setattr__(self, name, arr)
        if np.any(self.eta <= 0) or np.any(self.alpha <= 0) or np.any(self.beta <= 0):
            raise InputError("eta, alpha and beta must be positive")
        if np.any(self.coupling_d < 0):
            raise InputError("coupling_d must be non-negative")

    @property
    def n(self) -> int:
        return self.eta.size

    @property
    def alphabeta(self) -> np.ndarray:
        return self.alpha * self.beta

    @classmethod
    def uniform(cls, n, eta=1.0, alpha=1.0, beta=1.0, d=0.0):
        return cls(*(np.full(n, float(v)) for v in (eta, alpha, beta, d)))


def sech2(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) <= SECH_CLAMP
    out[inside] = 1.0 / np.cosh(u[inside]) ** 2
    return out


def vector_field(p: RingOscillatorParams, x) -> np.ndarray:
    """Isolated-circuit dynamics; acts on the last axis of ``x`` (coupling excluded)."""
    x = np.asarray(x, dtype=float)
    out = -p.eta * x
    out[..., 0] -= p.alpha[0] * np.tanh(p.beta[0] * x[..., -1])
    out[..., 1:] += p.alpha[1:] * np.tanh(p.beta[1:] * x[..., :-1])
    return out


def jacobian(p: RingOscillatorParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = p.n
    J = np.diag(-p.eta)
    J[0, n - 1] = -p.alphabeta[0] * sech2(p.beta[0] * x[n - 1])
    idx = np.arange(1, n)
    J[idx, idx - 1] = p.alphabeta[1:] * sech2(p.beta[1:] * x[:-1])
    return J


def box_bound(p: RingOscillatorParams) -> JacobianBound:
    """``J(x) in box{A0, A1, ..., An}`` with one rank-one term per feedback edge.

    Term 1 is the inverting corner ``-alpha_1 beta_1 e_1 e_n^T``; term ``k``
    is ``alpha_k beta_k e_k e_{k-1}^T``.
    """
    n = p.n
    eye = np.eye(n)
    terms = [(-p.alphabeta[0] * eye[0], eye[n - 1])]
    terms += [(p.alphabeta[k] * eye[k], eye[k - 1]) for k in range(1, n)]
    return JacobianBound.box(np.diag(-p.eta), terms)


def build_network(p: RingOscillatorParams, graphs) -> NetworkModel:
    """Network whose component ``k`` couples through ``d_k`` times the Laplacian of ``graphs[k]``."""
    graphs = list(graphs)
    if len(graphs) != p.n:
        raise InputError(f"expected {p.n} graphs, got {len(graphs)}")
    N = graphs[0].num_nodes
    if any(g.num_nodes != N for g in graphs):
        raise InputError("all component graphs must have the same number of nodes")
    laps, weights = [], []
    for g, d in zip(graphs, p.coupling_d):
        laps.append(build_laplacian(g, scale=d).matrix)
        weights.append(d * g.weight_matrix())
    return NetworkModel(N, p.n, lambda x: vector_field(p, x), lambda x: jacobian(p, x),
                        laps, weights)


def mixed_coupling_graphs():
    """Three circuits: node 1 coupled all-to-all, node 2 along a path, node 3 uncoupled."""
    return [ComponentGraph.complete(3), ComponentGraph.path(3), ComponentGraph.empty(3)]
