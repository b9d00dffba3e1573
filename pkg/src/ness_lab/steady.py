"""Stationary profiles of the nonlinear diffusion under reservoir boundaries.

The discrete right-hand side is ``D [K(qbar_f) (G q)_f]`` where ``qbar_f`` is
the arithmetic mean of the two cells adjacent to flux point ``f`` (ghost
cells hold the boundary densities). Its exact Jacobian is the linearized
generator, assembled by :func:`linearization_matrix`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .exceptions import SolverError
from .grid import Grid1D, averaging_op, divergence_op, gradient_op
from .models import ModelSpec

__all__ = [
    "Profile",
    "extended_values",
    "flux_states",
    "flux_gradients",
    "linearization_matrix",
    "stationarity_residual",
    "solve_steady",
    "profile_from_function",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Profile:
    grid: Grid1D
    values: np.ndarray  # (M, n)
    boundary: tuple  # (q_left, q_right)
    converged: bool = False
    residual: float = np.nan
    history: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)


def extended_values(values: np.ndarray, boundary) -> np.ndarray:
    """Cell values with the two ghost rows prepended/appended, shape (M+2, n)."""
    left = np.atleast_1d(boundary[0])[None, :]
    right = np.atleast_1d(boundary[1])[None, :]
    return np.vstack([left, values, right])


def flux_states(values, boundary) -> np.ndarray:
    ext = extended_values(values, boundary)
    return 0.5 * (ext[1:] + ext[:-1])


def flux_gradients(values, boundary, h) -> np.ndarray:
    ext = extended_values(values, boundary)
    return (ext[1:] - ext[:-1]) / h


def _check_all(spec: ModelSpec, points: np.ndarray):
    for q in points:
        spec.check_domain(q)


def _residual_vector(spec, grid, values, boundary) -> np.ndarray:
    qf = flux_states(values, boundary)
    gf = flux_gradients(values, boundary, grid.h)
    fluxes = np.stack([spec.mobility(q) @ g for q, g in zip(qf, gf)])
    return divergence_op(grid, spec.n).matrix @ fluxes.reshape(-1)


def linearization_matrix(spec: ModelSpec, grid: Grid1D, values, boundary) -> np.ndarray:
    """Jacobian of the discrete right-hand side at ``values``.

    Flux perturbation at ``f``:
    ``K(qbar_f) (G dq)_f + [K'(qbar_f) dqbar_f] (G q)_f`` with
    ``[K' v]_jk = sum_l dK_jk/dq_l v_l``.
    """
    n, M = spec.n, grid.M
    qf = flux_states(values, boundary)
    gf = flux_gradients(values, boundary, grid.h)
    Kblk = np.zeros(((M + 1) * n, (M + 1) * n))
    Ablk = np.zeros_like(Kblk)
    for f, (q, g) in enumerate(zip(qf, gf)):
        sl = slice(f * n, (f + 1) * n)
        Kblk[sl, sl] = spec.mobility(q)
        # A[j, l] = sum_k dK_jk/dq_l g_k
        Ablk[sl, sl] = np.einsum("jkl,k->jl", spec.mobility_grad(q), g)
    G = gradient_op(grid, n=n).matrix
    S = averaging_op(grid, n).matrix
    D = divergence_op(grid, n).matrix
    return D @ (Kblk @ G + Ablk @ S)


def stationarity_residual(spec: ModelSpec, profile: Profile) -> float:
    """Max-norm of the discrete right-hand side at ``profile``."""
    _check_all(spec, profile.values)
    r = _residual_vector(spec, profile.grid, profile.values, profile.boundary)
    return float(np.max(np.abs(r)))


def profile_from_function(spec: ModelSpec, grid: Grid1D, fn) -> Profile:
    """Sample ``fn(x) -> (..., n)`` at cell points (for analytic profiles)."""
    values = np.asarray(fn(grid.cell_points), dtype=float).reshape(grid.M, spec.n)
    boundary = (spec.q_left.copy(), spec.q_right.copy())
    prof = Profile(grid, values, boundary)
    res = stationarity_residual(spec, prof)
    return Profile(grid, values, boundary, converged=True, residual=res)


def _initial_guess(spec, grid, init):
    x = grid.cell_points[:, None]
    if init == "linear":
        return spec.q_left[None, :] * (1 - x) + spec.q_right[None, :] * x
    if init == "midpoint":
        return np.repeat(0.5 * (spec.q_left + spec.q_right)[None, :], grid.M, axis=0)
    init = np.asarray(init, dtype=float).reshape(grid.M, spec.n)
    return init.copy()


def _in_window(spec, values):
    return bool(np.all(values >= spec.window_lo) and np.all(values <= spec.window_hi))


def _pseudo_time(spec, grid, values, boundary, steps):
    rho = max(
        np.abs(np.linalg.eigvals(spec.mobility(q))).max()
        for q in flux_states(values, boundary)
    )
    dt = grid.h**2 / (2.0 * rho)
    for _ in range(steps):
        values = values + dt * _residual_vector(spec, grid, values, boundary).reshape(values.shape)
        _check_all(spec, values)
    return values


def solve_steady(
    spec: ModelSpec,
    grid: Grid1D,
    tol: float = 1e-10,
    max_iter: int = 100,
    init="linear",
) -> Profile:
    """Damped Newton with backtracking; pseudo-time marching when Newton stalls.

    Raises
    ------
    SolverError
        No convergence within ``max_iter`` Newton iterations; carries the
        max-norm residual history.
    DomainViolation
        The iterate left the model's domain window.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    boundary = (spec.q_left.copy(), spec.q_right.copy())
    values = _initial_guess(spec, grid, init)
    _check_all(spec, values)
    history = []
    for it in range(max_iter):
        F = _residual_vector(spec, grid, values, boundary)
        res = float(np.max(np.abs(F)))
        history.append(res)
        if res <= tol:
            return Profile(grid, values, boundary, True, res, history)
        Jac = linearization_matrix(spec, grid, values, boundary)
        try:
            step = np.linalg.solve(Jac, -F).reshape(values.shape)
        except np.linalg.LinAlgError:
            step = None
        merit = np.linalg.norm(F)
        accepted = False
        lam = 1.0
        while step is not None and lam > 1e-6:
            trial = values + lam * step
            if _in_window(spec, trial):
                Ft = _residual_vector(spec, grid, trial, boundary)
                if np.linalg.norm(Ft) <= (1 - 1e-4 * lam) * merit or np.max(np.abs(Ft)) <= tol:
                    values = trial
                    accepted = True
                    break
            lam *= 0.5
        if not accepted:
            log.debug("Newton stalled at iteration %d (res %.3e); pseudo-time marching", it, res)
            values = _pseudo_time(spec, grid, values, boundary, steps=50 * grid.M)
    F = _residual_vector(spec, grid, values, boundary)
    res = float(np.max(np.abs(F)))
    history.append(res)
    if res <= tol:
        return Profile(grid, values, boundary, True, res, history)
    raise SolverError(
        f"steady solve did not reach tol={tol:.1e} in {max_iter} iterations "
        f"(final residual {res:.3e})",
        history,
    )
