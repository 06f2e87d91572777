"""Simulation of diffusively coupled compartmental ODE networks.

The stacked state is ``X = [x_1; ...; x_N]`` with ``x_i`` in ``R^n``; its
dynamics are ``dX/dt = F(X) - (sum_k L_k kron E_k) X``, integrated with
fixed-step classical RK4.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import DivergenceError, InputError
from .graph import lambda2_general, lambda2_symmetric
from .linalg import eigvals, kron, unit_projector

FLOAT_FMT = "%.17g"


@dataclass
class NetworkModel:
    """``N`` compartments of an ``n``-dimensional system.

    ``f`` and ``jacobian`` act on the last axis: ``f`` maps an array of shape
    ``(..., n)`` to the same shape, ``jacobian`` maps an ``n``-vector to an
    ``n x n`` matrix. ``laplacians[k]`` couples component ``k`` across
    compartments (an all-zero matrix leaves it uncoupled). ``weights``, when
    given, holds the edge weights each Laplacian was built from.
    """

    N: int
    n: int
    f: Callable
    jacobian: Callable | None
    laplacians: list
    weights: list | None = None

    def __post_init__(self):
        self.laplacians = [np.asarray(lap, dtype=float) for lap in self.laplacians]
        if len(self.laplacians) != self.n:
            raise InputError(f"expected {self.n} Laplacians, got {len(self.laplacians)}")
        for lap in self.laplacians:
            if lap.shape != (self.N, self.N):
                raise InputError(f"Laplacian shape {lap.shape} does not match N={self.N}")

    @property
    def coupled(self):
        """Components with a nonzero Laplacian (0-based)."""
        return [k for k, lap in enumerate(self.laplacians) if np.any(lap)]

    def lambda2s(self) -> np.ndarray:
        out = []
        for lap in self.laplacians:
            if np.allclose(lap, lap.T, rtol=0.0, atol=1e-14):
                out.append(lambda2_symmetric(lap))
            else:
                out.append(lambda2_general(lap)[0])
        return np.array(out)

    def aggregate_laplacian(self) -> np.ndarray:
        """``sum_k L_k kron E_k`` (``N n x N n``)."""
        total = np.zeros((self.N * self.n, self.N * self.n))
        for k, lap in enumerate(self.laplacians):
            total += kron(lap, unit_projector(self.n, k))
        return total

    def rhs(self, X) -> np.ndarray:
        x = np.asarray(X, dtype=float).reshape(self.N, self.n)
        dx = np.array(self.f(x), dtype=float)
        for k in self.coupled:
            dx[:, k] -= self.laplacians[k] @ x[:, k]
        return dx.reshape(-1)


def rhs_neighbor_sum(model: NetworkModel, X) -> np.ndarray:
    """Right-hand side written as explicit neighbor sums ``sum_j w_ij (x_j,k - x_i,k)``."""
    if model.weights is None:
        raise InputError("model has no edge weights")
    x = np.asarray(X, dtype=float).reshape(model.N, model.n)
    dx = np.array(model.f(x), dtype=float)
    for k, w in enumerate(model.weights):
        for i in range(model.N):
            for j in np.nonzero(w[i])[0]:
                dx[i, k] += w[i, j] * (x[j, k] - x[i, k])
    return dx.reshape(-1)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    left_box_at: float | None = None

    def write_csv(self, path, N, n):
        header = ["t"] + [f"x_{i}_{k}" for i in range(1, N + 1) for k in range(1, n + 1)]
        _write_rows(path, header, np.column_stack([self.times, self.states]))


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([FLOAT_FMT % v for v in row])


def rk4_step(rhs, x, dt):
    k1 = rhs(x)
    k2 = rhs(x + 0.5 * dt * k1)
    k3 = rhs(x + 0.5 * dt * k2)
    k4 = rhs(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def simulate(model: NetworkModel, x0, t_end, dt, state_box=None, record_every=1) -> Trajectory:
    """Integrate the network from ``x0`` (length ``N n``) with RK4.

    ``state_box = (lo, hi)`` optionally declares the convex state set; the
    first time any compartment leaves it is recorded but not enforced.
    """
    x = np.array(x0, dtype=float).reshape(-1)
    if x.size != model.N * model.n:
        raise InputError(f"initial state has {x.size} entries, expected {model.N * model.n}")
    if not np.all(np.isfinite(x)):
        raise InputError("initial state is not finite")
    if not (dt > 0 and t_end >= dt):
        raise InputError("need dt > 0 and t_end >= dt")
    steps = int(round(t_end / dt))
    left_at = None
    if state_box is not None:
        lo, hi = (np.asarray(b, dtype=float) for b in state_box)

    def outside(state, t):
        xs = state.reshape(model.N, model.n)
        return np.any(xs < lo) or np.any(xs > hi)

    if state_box is not None and outside(x, 0.0):
        left_at = 0.0
    times = [0.0]
    states = [x.copy()]
    for step in range(1, steps + 1):
        x = rk4_step(model.rhs, x, dt)
        t = step * dt
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"state became non-finite at t={t:.6g}", t)
        if state_box is not None and left_at is None and outside(x, t):
            left_at = t
        if step % record_every == 0 or step == steps:
            times.append(t)
            states.append(x.copy())
    return Trajectory(np.array(times), np.array(states), left_at)


@dataclass
class SyncMetrics:
    times: np.ndarray
    error_norm: np.ndarray
    fitted_rate: float | None = None
    predicted_rate: float | None = None
    fit_window: tuple | None = None
    extras: dict = field(default_factory=dict)

    def write_csv(self, path):
        _write_rows(path, ["t", "sync_error"], np.column_stack([self.times, self.error_norm]))


def deviation(states, N, n) -> np.ndarray:
    """``X - 1_N kron mean_i(x_i)`` for each sample (shape ``(T, N n)``)."""
    xs = np.asarray(states, dtype=float).reshape(-1, N, n)
    return (xs - xs.mean(axis=1, keepdims=True)).reshape(len(xs), N * n)


def sync_error(traj: Trajectory, N, n) -> SyncMetrics:
    """Euclidean norm of the deviation from the compartment average at each sample."""
    if traj.states.shape[1] != N * n:
        raise InputError("trajectory width does not match N * n")
    return SyncMetrics(traj.times, np.linalg.norm(deviation(traj.states, N, n), axis=1))


class DecayFit(NamedTuple):
    rate: float
    start: int
    stop: int
    floored: bool


def fit_decay_rate(times, error, window_fraction=0.6, floor=1e-12) -> DecayFit:
    """Least-squares exponential rate of ``error`` over the tail of the record.

    Samples at or below ``floor`` are dropped (the fit then runs on the
    prefix before the first one, and ``floored`` is set); of what remains the
    last ``window_fraction`` is fitted. The rate is minus the slope of
    ``log(error)`` against time, so growth gives a negative rate.
    """
    times = np.asarray(times, dtype=float)
    error = np.asarray(error, dtype=float)
    below = np.nonzero(error <= floor)[0]
    stop = int(below[0]) if below.size else len(error)
    floored = bool(below.size)
    start = int(stop - max(2, int(round(window_fraction * stop))))
    if start < 0:
        raise InputError("not enough samples above the floor to fit a rate")
    slope = np.polyfit(times[start:stop], np.log(error[start:stop]), 1)[0]
    return DecayFit(float(-slope), start, stop, floored)


def predicted_rate(cert) -> float:
    """``epsilon / (2 lambda_max(P))``: guaranteed decay rate of the error norm."""
    return cert.epsilon / (2.0 * float(eigvals(cert.P)[-1]))


def certified_envelope(cert, times, e0, t0=0.0) -> np.ndarray:
    """Upper bound on the error norm implied by the certificate."""
    w = eigvals(cert.P)
    return e0 * np.sqrt(w[-1] / w[0]) * np.exp(-predicted_rate(cert) * (np.asarray(times) - t0))
