"""Reaction-diffusion on an interval with no-flux boundaries.

Space is discretized with cell-centered finite volumes on ``[0, length]``;
diffusion coefficients live on cell faces, so each component's operator is
a symmetric matrix with constants in its kernel. Time stepping is explicit
RK4 with a hard step-size guard.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, InputError
from .linalg import eigvals
from .simode import FLOAT_FMT, rk4_step

CFL_SAFETY = 0.9


@dataclass(frozen=True)
class PdeGrid:
    length: float
    cells: int

    def __post_init__(self):
        if not (self.length > 0 and np.isfinite(self.length)):
            raise InputError("grid length must be positive")
        if int(self.cells) != self.cells or self.cells < 3:
            raise InputError("grid needs at least 3 cells")

    @property
    def h(self) -> float:
        return self.length / self.cells

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.cells) + 0.5) * self.h

    @property
    def faces(self) -> np.ndarray:
        return np.arange(self.cells + 1) * self.h


@dataclass(frozen=True)
class DiffusionProfile:
    """Face samples ``a[k, m]`` of each component's coefficient (shape ``(n, cells + 1)``)."""

    a: np.ndarray
    alpha: float

    def __post_init__(self):
        a = np.atleast_2d(np.array(self.a, dtype=float))
        if not np.all(np.isfinite(a)):
            raise InputError("diffusion coefficients must be finite")
        if not self.alpha > 0:
            raise InputError("ellipticity floor alpha must be positive")
        low = a[:, 1:-1].min()
        if low < self.alpha:
            raise InputError(f"diffusion coefficient {low:.6g} is below the floor {self.alpha:.6g}")
        object.__setattr__(self, "a", a)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @classmethod
    def from_functions(cls, grid: PdeGrid, funcs, alpha=None):
        """Sample callables ``a_k(xi)`` at the face coordinates."""
        a = np.array([np.broadcast_to(np.asarray(f(grid.faces), dtype=float), grid.faces.shape)
                      for f in funcs])
        if alpha is None:
            alpha = float(a[:, 1:-1].min())
        return cls(a, alpha)

    @classmethod
    def constant(cls, grid: PdeGrid, values):
        vals = np.asarray(values, dtype=float).reshape(-1)
        return cls(np.repeat(vals[:, None], grid.cells + 1, axis=1), float(vals.min()))


@dataclass(frozen=True)
class DiscreteOperator:
    matrix: np.ndarray
    k: int
    lambda2: float
    face_coeffs: np.ndarray
    h: float

    def apply(self, u) -> np.ndarray:
        """Flux-form ``(a u')'`` on the last axis of ``u``."""
        flux = self.face_coeffs[1:-1] * np.diff(u, axis=-1) / self.h
        pad = np.zeros(u.shape[:-1] + (1,))
        return np.diff(np.concatenate([pad, flux, pad], axis=-1), axis=-1) / self.h


def operator_matrix(grid: PdeGrid, faces) -> np.ndarray:
    M, h2 = grid.cells, grid.h ** 2
    inner = np.asarray(faces, dtype=float)[1:-1] / h2
    mat = np.zeros((M, M))
    idx = np.arange(M - 1)
    mat[idx, idx + 1] = inner
    mat[idx + 1, idx] = inner
    diag = np.zeros(M)
    diag[:-1] -= inner
    diag[1:] -= inner
    mat[np.arange(M), np.arange(M)] = diag
    return mat


def discretize_operator(grid: PdeGrid, prof: DiffusionProfile, k: int) -> DiscreteOperator:
    """Cell-centered discretization of ``d/dxi (a_k d/dxi)`` with zero boundary flux."""
    if prof.a.shape[1] != grid.cells + 1:
        raise InputError(f"profile has {prof.a.shape[1]} face values, grid needs {grid.cells + 1}")
    if not 0 <= k < prof.n:
        raise InputError(f"component {k} out of range")
    mat = operator_matrix(grid, prof.a[k])
    lam2 = float(eigvals(-mat)[1])
    return DiscreteOperator(mat, k, lam2, prof.a[k].copy(), grid.h)


def neumann_lambda2(op: DiscreteOperator) -> float:
    """Second smallest eigenvalue of the negated operator."""
    return float(eigvals(-op.matrix)[1])


def pi_projection(v, grid: PdeGrid) -> np.ndarray:
    """Subtract each component's spatial mean (midpoint rule over the cells)."""
    v = np.asarray(v, dtype=float)
    return v - v.mean(axis=-1, keepdims=True)


def l2_norm(v, grid: PdeGrid) -> float:
    """``sqrt(h * sum |v|^2)`` over all cells and components."""
    v = np.asarray(v, dtype=float)
    return float(np.sqrt(grid.h * np.sum(v * v)))


def check_dirichlet_bound(op: DiscreteOperator, trials=1000, seed=0) -> float:
    """Worst ratio of the Dirichlet form to ``lambda2 * ||v||^2`` over random mean-zero ``v``.

    White noise alone only probes high frequencies, where the bound is
    loose, so the samples rotate through white noise, random walks and
    random low-mode cosine series (the last come close to equality).
    """
    rng = np.random.default_rng(seed)
    cells = op.matrix.shape[0]
    xi = (np.arange(cells) + 0.5) / cells
    modes = np.cos(np.pi * np.outer(np.arange(1, 6), xi))
    v = rng.standard_normal((trials, cells))
    v[1::3] = np.cumsum(v[1::3], axis=1)
    smooth = rng.standard_normal((len(v[2::3]), 5)) / np.arange(1, 6) ** 2
    v[2::3] = smooth @ modes
    v -= v.mean(axis=1, keepdims=True)
    dirichlet = -np.einsum("ti,ij,tj->t", v, op.matrix, v) * op.h
    mass = op.lambda2 * np.einsum("ti,ti->t", v, v) * op.h
    return float(np.min(dirichlet / mass))


def max_stable_dt(grid: PdeGrid, prof: DiffusionProfile) -> float:
    return CFL_SAFETY * grid.h ** 2 / (2.0 * float(prof.a.max()))


@dataclass
class PdeTrajectory:
    times: np.ndarray
    fields: np.ndarray  # (samples, n, cells)

    def pi_norms(self, grid: PdeGrid) -> np.ndarray:
        return np.array([l2_norm(pi_projection(f, grid), grid) for f in self.fields])

    def write_snapshots(self, path, grid: PdeGrid):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "xi", "component", "value"])
            for t, field in zip(self.times, self.fields):
                for k, comp in enumerate(field, start=1):
                    for xi, val in zip(grid.centers, comp):
                        writer.writerow([FLOAT_FMT % t, FLOAT_FMT % xi, k, FLOAT_FMT % val])


def simulate_pde(grid: PdeGrid, prof: DiffusionProfile, f, x0, t_end, dt,
                 record_every=1) -> PdeTrajectory:
    """Method of lines: ``dx/dt = f(x) + diffusion`` with RK4 in time.

    ``f`` acts pointwise on the component axis: it maps an ``(cells, n)``
    array to the same shape. ``x0`` has shape ``(n, cells)``.
    """
    x = np.array(x0, dtype=float)
    n = prof.n
    if x.shape != (n, grid.cells):
        raise InputError(f"initial field shape {x.shape}, expected {(n, grid.cells)}")
    if not np.all(np.isfinite(x)):
        raise InputError("initial field is not finite")
    dt_max = max_stable_dt(grid, prof)
    if dt > dt_max:
        raise InputError(f"dt={dt:.6g} exceeds the stability limit; max admissible dt is {dt_max:.6g}")
    if not (dt > 0 and t_end >= dt):
        raise InputError("need dt > 0 and t_end >= dt")
    coeffs = prof.a[:, 1:-1]
    h = grid.h
    pad = np.zeros((n, 1))

    # same stencil as DiscreteOperator.apply, all components at once
    def rhs(state):
        flux = coeffs * np.diff(state, axis=1) / h
        diffusion = np.diff(np.concatenate([pad, flux, pad], axis=1), axis=1) / h
        return np.asarray(f(state.T), dtype=float).T + diffusion

    steps = int(round(t_end / dt))
    times, fields = [0.0], [x.copy()]
    for step in range(1, steps + 1):
        x = rk4_step(rhs, x, dt)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"field became non-finite at t={step * dt:.6g}", step * dt)
        if step % record_every == 0 or step == steps:
            times.append(step * dt)
            fields.append(x.copy())
    return PdeTrajectory(np.array(times), np.array(fields))
