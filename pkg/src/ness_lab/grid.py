"""Staggered finite-difference calculus on (0, 1) with Dirichlet walls.

Cells sit at ``x_i = i h`` (i = 1..M) and fluxes at ``x_{i+1/2}`` (i = 0..M),
so both half-cells next to the walls carry a flux. For ``n`` components the
unknowns are ordered cell-major: index ``i * n + c``.

The divergence is defined as the negative transpose of the homogeneous
gradient, which makes ``-D G`` symmetric positive definite and ``D C D^T``
positive semi-definite for any PSD flux covariance ``C``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = [
    "Grid1D",
    "DiscreteOperator",
    "build_grid",
    "gradient_op",
    "divergence_op",
    "laplacian_op",
    "averaging_op",
    "delta_matrix",
]

CELLS = "cells"
FLUXES = "fluxes"


@dataclass(frozen=True)
class Grid1D:
    M: int
    h: float
    cell_points: np.ndarray
    flux_points: np.ndarray

    @property
    def n_flux(self) -> int:
        return self.M + 1


@dataclass(frozen=True)
class DiscreteOperator:
    """Matrix tagged with the spaces it maps between.

    ``offset`` holds the inhomogeneous (boundary) contribution of an affine
    operator; it is ignored by composition, which is only defined for the
    linear parts.
    """

    matrix: np.ndarray
    rows: str
    cols: str
    n: int = 1
    offset: Optional[np.ndarray] = None

    def __matmul__(self, other):
        if isinstance(other, DiscreteOperator):
            if self.cols != other.rows or self.n != other.n:
                raise ValueError(
                    f"cannot compose ({self.rows}<-{self.cols}, n={self.n}) with "
                    f"({other.rows}<-{other.cols}, n={other.n})"
                )
            return DiscreteOperator(self.matrix @ other.matrix, self.rows, other.cols, self.n)
        return self.apply(other)

    def apply(self, v) -> np.ndarray:
        out = self.matrix @ np.asarray(v, dtype=float).reshape(-1)
        if self.offset is not None:
            out = out + self.offset
        return out

    @property
    def T(self) -> "DiscreteOperator":
        return DiscreteOperator(self.matrix.T.copy(), self.cols, self.rows, self.n)

    @property
    def shape(self):
        return self.matrix.shape


def build_grid(M: int) -> Grid1D:
    if int(M) != M or M < 1:
        raise ValueError(f"grid needs M >= 1 interior cells, got {M!r}")
    M = int(M)
    h = 1.0 / (M + 1)
    return Grid1D(
        M=M,
        h=h,
        cell_points=np.arange(1, M + 1) * h,
        flux_points=(np.arange(M + 1) + 0.5) * h,
    )


def _scalar_gradient(M: int, h: float) -> np.ndarray:
    G = np.zeros((M + 1, M))
    idx = np.arange(M)
    G[idx + 1, idx] = -1.0 / h
    G[idx, idx] = 1.0 / h
    return G


def gradient_op(grid: Grid1D, boundary=None, n: int = 1) -> DiscreteOperator:
    """Cells -> fluxes difference quotient.

    Parameters
    ----------
    boundary : pair of n-vectors, optional
        Ghost values ``(q_0, q_{M+1})``. ``None`` gives the homogeneous
        operator used for fluctuations.
    """
    G = np.kron(_scalar_gradient(grid.M, grid.h), np.eye(n))
    offset = None
    if boundary is not None:
        left = np.atleast_1d(np.asarray(boundary[0], dtype=float))
        right = np.atleast_1d(np.asarray(boundary[1], dtype=float))
        if left.shape != (n,) or right.shape != (n,):
            raise ValueError(f"boundary values must be {n}-vectors")
        offset = np.zeros((grid.M + 1) * n)
        offset[:n] = -left / grid.h
        offset[-n:] = right / grid.h
    return DiscreteOperator(G, FLUXES, CELLS, n, offset)


def divergence_op(grid: Grid1D, n: int = 1) -> DiscreteOperator:
    """Fluxes -> cells, defined as ``-G^T`` of the homogeneous gradient."""
    G = gradient_op(grid, n=n).matrix
    return DiscreteOperator(-G.T, CELLS, FLUXES, n)


def laplacian_op(grid: Grid1D, n: int = 1) -> DiscreteOperator:
    """Dirichlet three-point Laplacian ``D G``."""
    return divergence_op(grid, n) @ gradient_op(grid, n=n)


def averaging_op(grid: Grid1D, n: int = 1) -> DiscreteOperator:
    """Cells -> fluxes arithmetic mean with zero ghosts."""
    M = grid.M
    S = np.zeros((M + 1, M))
    idx = np.arange(M)
    S[idx, idx] = 0.5
    S[idx + 1, idx] = 0.5
    return DiscreteOperator(np.kron(S, np.eye(n)), FLUXES, CELLS, n)


def delta_matrix(grid: Grid1D, n: int = 1) -> DiscreteOperator:
    """Discrete ``delta(x - x')``: identity on cells scaled by ``1/h``."""
    return DiscreteOperator(np.eye(grid.M * n) / grid.h, CELLS, CELLS, n)
