"""Linearized generator, dissipativity, the semigroup and the current noise.

The fluctuation field lives on cells. Its noise is the divergence of a
white current noise on flux points with block covariance
``2 [K J]_sym / h`` per flux point, so the cell-space covariance is
``B = D C D^T`` and a square-root factor is ``F = D C^{1/2}``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import ModelError, PreconditionError
from .grid import divergence_op
from .models import ModelSpec
from .steady import Profile, flux_states, linearization_matrix

__all__ = [
    "LinearizedSystem",
    "SpectralReport",
    "assemble_generator",
    "check_dissipativity",
    "semigroup_apply",
    "assemble_noise",
    "linearize",
    "sym",
]


def sym(A: np.ndarray) -> np.ndarray:
    """Arithmetic mean of a matrix (or stack of matrices) and its transpose."""
    return 0.5 * (A + np.swapaxes(A, -1, -2))


@dataclass(frozen=True)
class SpectralReport:
    abscissa: float
    eigenvalues: np.ndarray
    dissipative: bool
    all_real: bool


@dataclass(frozen=True)
class LinearizedSystem:
    spec: ModelSpec
    profile: Profile
    L: np.ndarray
    C: np.ndarray  # ((M+1) n, (M+1) n) block diagonal
    B: np.ndarray
    F: np.ndarray  # (M n, (M+1) n)

    @property
    def grid(self):
        return self.profile.grid

    @property
    def size(self) -> int:
        return self.L.shape[0]


def _require_converged(profile: Profile):
    if not profile.converged:
        raise PreconditionError("profile is not marked converged; run solve_steady first")


def assemble_generator(spec: ModelSpec, profile: Profile) -> np.ndarray:
    """Discrete generator with homogeneous Dirichlet walls, shape (nM, nM)."""
    _require_converged(profile)
    return linearization_matrix(spec, profile.grid, profile.values, profile.boundary)


def check_dissipativity(L: np.ndarray) -> SpectralReport:
    eig = np.linalg.eigvals(L)
    abscissa = float(eig.real.max())
    return SpectralReport(
        abscissa=abscissa,
        eigenvalues=eig,
        dissipative=abscissa < 0,
        all_real=bool(np.all(np.abs(eig.imag) <= 1e-10 * np.abs(eig).max())),
    )


def semigroup_apply(L: np.ndarray, t: float, v) -> np.ndarray:
    """``exp(t L) v`` by scaling-and-squaring Pade (scipy)."""
    if t < 0:
        raise ValueError(f"semigroup is only defined for t >= 0, got t={t}")
    v = np.asarray(v, dtype=float)
    if t == 0:
        return v.copy()
    return scipy.linalg.expm(t * L) @ v


def _flux_kj(spec: ModelSpec, profile: Profile) -> np.ndarray:
    """Symmetrized ``K J`` at each flux point, shape (M+1, n, n)."""
    out = []
    for q in flux_states(profile.values, profile.boundary):
        out.append(sym(spec.mobility(q) @ spec.static_covariance(q)))
    return np.array(out)


def _psd_sqrt(block: np.ndarray, where: int, x: float) -> np.ndarray:
    w, V = np.linalg.eigh(block)
    scale = max(np.abs(w).max(), 1.0)
    if w.min() < -1e-12 * scale:
        raise ModelError(
            f"[K J]_sym is not positive semi-definite at flux point {where} "
            f"(x = {x:.6g}, min eigenvalue {w.min():.3e})",
            location=x,
        )
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def assemble_noise(spec: ModelSpec, profile: Profile):
    """Return ``(C, B, F)`` for the frozen-profile current noise."""
    _require_converged(profile)
    grid, n = profile.grid, spec.n
    kj = _flux_kj(spec, profile)
    blocks = 2.0 * kj / grid.h
    nf = (grid.M + 1) * n
    C = np.zeros((nf, nf))
    root = np.zeros((nf, nf))
    for f, blk in enumerate(blocks):
        sl = slice(f * n, (f + 1) * n)
        C[sl, sl] = blk
        root[sl, sl] = _psd_sqrt(blk, f, grid.flux_points[f])
    D = divergence_op(grid, n).matrix
    B = D @ C @ D.T
    B = sym(B)
    F = D @ root
    return C, B, F


def linearize(spec: ModelSpec, profile: Profile) -> LinearizedSystem:
    L = assemble_generator(spec, profile)
    C, B, F = assemble_noise(spec, profile)
    return LinearizedSystem(spec, profile, L, C, B, F)
