"""Sampling the linear fluctuation process ``d xi = L xi dt + F dw``.

Noise is drawn on flux points and pushed through the divergence (``F``),
never sampled directly on cells. All trajectories of an ensemble advance
together as the columns of one state matrix; each trajectory owns a PCG64
stream spawned from ``SeedSequence(seed)``, so results do not depend on how
the ensemble is chunked.

Schemes
-------
``crank-nicolson``
    ``(I - dt L/2) xi' = (I + dt L/2) xi + sqrt(dt) F w``. Its stationary
    covariance is exactly the Lyapunov solution for every ``dt``.
``semi-implicit``
    ``(I - dt L) xi' = xi + sqrt(dt) F w`` (backward Euler). Stationary
    covariance carries an ``O(dt |L|)`` bias on stiff modes.
``explicit``
    Euler-Maruyama, guarded by ``dt <= 0.5 h^2 / rho(K)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from .exceptions import PreconditionError
from .linearized import LinearizedSystem, check_dissipativity
from .steady import flux_states

__all__ = [
    "SimConfig",
    "TrajectoryStream",
    "EnsembleStats",
    "LagEstimate",
    "SCHEMES",
    "RNG_NAME",
    "simulate",
    "default_burn_in",
    "explicit_dt_bound",
    "estimate_covariance",
    "estimate_time_correlation",
]

SCHEMES = ("crank-nicolson", "semi-implicit", "explicit")
RNG_NAME = "numpy.random.PCG64/SeedSequence.spawn"
MIN_BATCHES = 20


@dataclass(frozen=True)
class SimConfig:
    dt: float
    n_steps: int
    burn_in: int
    n_trajectories: int = 1
    seed: int = 0
    scheme: str = "crank-nicolson"
    chunk: int = 512

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not 0 <= self.burn_in < self.n_steps:
            raise ValueError("need 0 <= burn_in < n_steps")
        if self.n_trajectories < 1:
            raise ValueError("need at least one trajectory")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")

    @property
    def recorded_steps(self) -> int:
        return self.n_steps - self.burn_in


def default_burn_in(system: LinearizedSystem, dt: float) -> int:
    """Ten relaxation times of the slowest mode, in steps."""
    abscissa = check_dissipativity(system.L).abscissa
    return int(math.ceil(10.0 / abs(abscissa) / dt))


def explicit_dt_bound(system: LinearizedSystem) -> float:
    qf = flux_states(system.profile.values, system.profile.boundary)
    rho = max(np.abs(np.linalg.eigvals(system.spec.mobility(q))).max() for q in qf)
    return 0.5 * system.grid.h**2 / rho


def _propagators(system: LinearizedSystem, cfg: SimConfig):
    L, F = system.L, system.F
    I = np.eye(L.shape[0])
    root_dt = math.sqrt(cfg.dt)
    if cfg.scheme == "explicit":
        bound = explicit_dt_bound(system)
        if cfg.dt > bound:
            raise ValueError(
                f"explicit scheme unstable: dt={cfg.dt:.3e} exceeds 0.5 h^2/rho(K) = {bound:.3e}"
            )
        return I + cfg.dt * L, root_dt * F
    if cfg.scheme == "semi-implicit":
        P = np.linalg.inv(I - cfg.dt * L)
        return P, root_dt * P @ F
    P = np.linalg.inv(I - 0.5 * cfg.dt * L)
    return P @ (I + 0.5 * cfg.dt * L), root_dt * P @ F


class TrajectoryStream:
    """Re-iterable stream of post-burn-in ensemble states.

    Iterating yields ``(k, X)`` with ``X`` of shape ``(nM, n_trajectories)``;
    ``k`` counts recorded steps from zero. Every iteration replays the same
    trajectories bit for bit.
    """

    def __init__(self, system: LinearizedSystem, cfg: SimConfig):
        if not check_dissipativity(system.L).dissipative:
            raise PreconditionError("cannot simulate a non-dissipative generator")
        self.system = system
        self.cfg = cfg
        self.A, self.N = _propagators(system, cfg)

    @property
    def size(self) -> int:
        return self.A.shape[0]

    def _rngs(self):
        seeds = np.random.SeedSequence(self.cfg.seed).spawn(self.cfg.n_trajectories)
        return [np.random.Generator(np.random.PCG64(s)) for s in seeds]

    def __iter__(self) -> Iterator:
        cfg = self.cfg
        rngs = self._rngs()
        n_noise = self.N.shape[1]
        X = np.zeros((self.size, cfg.n_trajectories))
        step = 0
        while step < cfg.n_steps:
            m = min(cfg.chunk, cfg.n_steps - step)
            # (m, n_noise, n_traj)
            noise = np.stack([r.standard_normal((m, n_noise)) for r in rngs], axis=-1)
            for j in range(m):
                X = self.A @ X + self.N @ noise[j]
                if step >= cfg.burn_in:
                    yield step - cfg.burn_in, X
                step += 1


def simulate(system: LinearizedSystem, cfg: SimConfig) -> TrajectoryStream:
    return TrajectoryStream(system, cfg)


@dataclass(frozen=True)
class LagEstimate:
    lag: float
    steps: int
    matrix: np.ndarray
    se: np.ndarray


@dataclass
class EnsembleStats:
    mean: np.ndarray
    mean_se: np.ndarray
    covariance: np.ndarray
    covariance_se: np.ndarray
    effective_samples: np.ndarray
    standardized_fourth_moment: np.ndarray
    n_samples: int
    n_batches: int
    low_confidence: bool
    lag_covariances: list = field(default_factory=list)


def _batch_layout(n_traj: int, n_rec: int, min_batches: int = MIN_BATCHES):
    """Time blocks per trajectory so that the batch count reaches the minimum."""
    blocks = max(1, math.ceil(min_batches / n_traj))
    blocks = min(blocks, n_rec)
    return blocks, math.ceil(n_rec / blocks)


def _se_from_batches(batch_means: np.ndarray) -> np.ndarray:
    nb = batch_means.shape[0]
    if nb < 2:
        return np.full(batch_means.shape[1:], np.inf)
    return batch_means.std(axis=0, ddof=1) / math.sqrt(nb)


def estimate_covariance(stream: TrajectoryStream, cfg: Optional[SimConfig] = None,
                        window: Optional[tuple] = None) -> EnsembleStats:
    """Ensemble-and-time average of ``xi xi^T`` with batch-means errors.

    A batch is one trajectory (split into contiguous time blocks when fewer
    than 20 trajectories are run). ``window=(start, stop)`` restricts the
    average to recorded steps in that half-open range.
    """
    cfg = cfg or stream.cfg
    start, stop = window or (0, cfg.recorded_steps)
    n_rec = stop - start
    nt, size = cfg.n_trajectories, stream.size
    blocks, block_len = _batch_layout(nt, n_rec)
    nb = nt * blocks
    s1 = np.zeros((blocks, size, nt))
    s2 = np.zeros((blocks, nt, size, size))
    counts = np.zeros(blocks)
    sq = np.zeros((size, size))
    for k, X in stream:
        if k < start:
            continue
        if k >= stop:
            break
        b = (k - start) // block_len
        s1[b] += X
        s2[b] += np.einsum("it,jt->tij", X, X)
        X2 = X * X
        sq += X2 @ X2.T
        counts[b] += 1
    used = counts > 0
    s1, s2, counts = s1[used], s2[used], counts[used]
    nb = s1.shape[0] * nt
    batch_mean = (s1 / counts[:, None, None]).transpose(0, 2, 1).reshape(nb, size)
    batch_cov = (s2 / counts[:, None, None, None]).reshape(nb, size, size)
    n_samples = int(counts.sum()) * nt
    mean = s1.sum(axis=(0, 2)) / n_samples
    cov = s2.sum(axis=(0, 1)) / n_samples
    cov = 0.5 * (cov + cov.T)
    cov_se = _se_from_batches(batch_cov)
    cov_se = 0.5 * (cov_se + cov_se.T)
    fourth = sq / n_samples
    with np.errstate(divide="ignore", invalid="ignore"):
        var_prod = np.clip(fourth - cov**2, 0.0, None)
        n_eff = np.where(cov_se > 0, var_prod / cov_se**2, np.inf)
        kurt = np.diag(fourth) / np.diag(cov) ** 2
    return EnsembleStats(
        mean=mean,
        mean_se=_se_from_batches(batch_mean),
        covariance=cov,
        covariance_se=cov_se,
        effective_samples=n_eff,
        standardized_fourth_moment=kurt,
        n_samples=n_samples,
        n_batches=nb,
        low_confidence=nb < MIN_BATCHES,
    )


def estimate_time_correlation(stream: TrajectoryStream, lags: Sequence[float],
                              cfg: Optional[SimConfig] = None):
    """Empirical ``E(xi_{t+tau} xi_t^T)`` for each lag ``tau`` (multiples of dt).

    Returns ``(estimates, notes)``; lags that do not fit in the recorded
    trajectory are skipped and reported in ``notes``.
    """
    cfg = cfg or stream.cfg
    notes = []
    plan = []
    for lag in lags:
        steps = int(round(lag / cfg.dt))
        if abs(steps * cfg.dt - lag) > 1e-9 * max(1.0, abs(lag)):
            raise ValueError(f"lag {lag} is not a multiple of dt={cfg.dt}")
        if steps >= cfg.recorded_steps:
            notes.append(f"lag {lag} ({steps} steps) exceeds recorded length; skipped")
            continue
        plan.append((lag, steps))
    if not plan:
        return [], notes
    nt, size = cfg.n_trajectories, stream.size
    n_rec = cfg.recorded_steps
    blocks, block_len = _batch_layout(nt, n_rec)
    max_lag = max(s for _, s in plan)
    ring = np.zeros((max_lag + 1, size, nt))
    acc = {s: np.zeros((blocks, nt, size, size)) for _, s in plan}
    cnt = {s: np.zeros(blocks) for _, s in plan}
    for k, X in stream:
        ring[k % (max_lag + 1)] = X
        b = k // block_len
        for _, s in plan:
            if k >= s:
                past = ring[(k - s) % (max_lag + 1)]
                acc[s][b] += np.einsum("it,jt->tij", X, past)
                cnt[s][b] += 1
    out = []
    for lag, s in plan:
        used = cnt[s] > 0
        a, c = acc[s][used], cnt[s][used]
        batches = (a / c[:, None, None, None]).reshape(-1, size, size)
        matrix = a.sum(axis=(0, 1)) / (c.sum() * nt)
        out.append(LagEstimate(lag, s, matrix, _se_from_batches(batches)))
    return out, notes
