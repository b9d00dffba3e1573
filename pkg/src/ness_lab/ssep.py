"""Boundary-driven symmetric simple exclusion process, sampled exactly.

Every bulk bond swaps its two sites at rate 1. The left reservoir fills
site 1 at rate ``rho_left`` and empties it at rate ``1 - rho_left``; the
right reservoir acts on site ``N`` likewise. The total rate is the constant
``N + 1``, so the continuous-time chain is simulated by drawing exponential
holding times and choosing one of ``N + 1`` channels uniformly; swaps of two
equal sites are null events.

Because the holding times are independent of the configuration, the default
``"uniformized"`` clock replaces each of them by its mean ``1/(N + 1)``.
Time averages keep their expectation and lose the holding-time noise;
``clock="exponential"`` draws the actual holding times.

One "sweep" is ``N + 1`` events, i.e. one unit of time on average.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
from numba import njit
from scipy.interpolate import RegularGridInterpolator

__all__ = [
    "LatticeConfig",
    "MicroStats",
    "MacroComparison",
    "run_ssep",
    "exact_stationary",
    "exact_moments",
    "compare_to_macro",
    "lattice_points",
]

MAX_ENUM_SITES = 12
CLOCKS = ("uniformized", "exponential")
RNG_NAME = "numpy.random.PCG64"


@dataclass(frozen=True)
class LatticeConfig:
    sites: int
    rho_left: float
    rho_right: float
    sweeps: int
    burn_in_sweeps: int
    seed: int = 0
    sample_interval: float = 10.0
    n_batches: int = 40
    modes: tuple = (1, 2, 3)
    clock: str = "uniformized"
    chunk: int = 1 << 20

    def __post_init__(self):
        if self.sites < 1:
            raise ValueError("need at least one site")
        for name in ("rho_left", "rho_right"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie strictly inside (0, 1), got {v}")
        if not 0 <= self.burn_in_sweeps < self.sweeps:
            raise ValueError("need 0 <= burn_in_sweeps < sweeps")
        if self.n_batches < 2:
            raise ValueError("need at least two batches")
        if not self.sample_interval > 0:
            raise ValueError("sample_interval must be positive")
        if self.clock not in CLOCKS:
            raise ValueError(f"clock must be one of {CLOCKS}, got {self.clock!r}")

    @property
    def events(self) -> int:
        return self.sweeps * (self.sites + 1)

    @property
    def burn_in_events(self) -> int:
        return self.burn_in_sweeps * (self.sites + 1)


def lattice_points(sites: int) -> np.ndarray:
    """Site ``i`` (1-based) sits at ``i / (N + 1)``."""
    return np.arange(1, sites + 1) / (sites + 1)


@njit(cache=True)
def _accumulate_modes(y, dt, y1b, y2b):
    K = y.shape[0]
    for a in range(K):
        y1b[a] += dt * y[a]
        for c in range(K):
            y2b[a, c] += dt * y[a] * y[c]


@njit(cache=True)
def _advance(eta, y, basis, rho_l, rho_r, u, holds, exp_clock, clock, ints,
             burn_events, rec_events, n_batches, sample_dt, track_states,
             occ_time, batch_time, y1, y2, s1, s2, n_samp, current, state_time,
             last_change, occ_list):
    """Consume one chunk of uniforms; chain state lives in the arrays.

    ``clock = [t, t_state, next_sample]``, ``ints = [ev, b, next_boundary, code]``.
    """
    N = eta.shape[0]
    K = y.shape[0]
    rate = N + 1.0
    t, t_state, next_sample = clock[0], clock[1], clock[2]
    ev, b, next_boundary, code = ints[0], ints[1], ints[2], ints[3]
    for n in range(u.shape[0]):
        if ev == next_boundary:
            if b >= 0:
                dt = t - t_state
                _accumulate_modes(y, dt, y1[b], y2[b])
                if track_states:
                    state_time[b, code] += dt
                for i in range(N):
                    occ_time[b, i] += eta[i] * (t - last_change[i])
            for i in range(N):
                last_change[i] = t
            if b < 0:
                next_sample = t
            t_state = t
            b += 1
            next_boundary = burn_events + (b + 1) * rec_events // n_batches
        recording = b >= 0
        hold = holds[n] / rate if exp_clock else 1.0 / rate
        if recording:
            t_end = t + hold
            while next_sample < t_end:
                k = 0
                for i in range(N):
                    if eta[i] == 1:
                        occ_list[k] = i
                        k += 1
                for a in range(k):
                    ia = occ_list[a]
                    s1[b, ia] += 1.0
                    for c in range(a, k):
                        s2[b, ia, occ_list[c]] += 1.0
                n_samp[b] += 1.0
                next_sample += sample_dt
            batch_time[b] += hold
        t += hold
        ev += 1

        r = u[n] * rate
        ch = int(r)
        if ch > N:
            ch = N
        frac = r - ch
        # ch == 0: left reservoir; ch == N: right reservoir; else bond (ch-1, ch)
        i = -1
        j = -1
        if ch == 0:
            if (1 if frac < rho_l else 0) != eta[0]:
                i = 0
        elif ch == N:
            if (1 if frac < rho_r else 0) != eta[N - 1]:
                j = N - 1
        elif eta[ch - 1] != eta[ch]:
            i = ch - 1
            j = ch
        if i < 0 and j < 0:
            continue
        if recording:
            _accumulate_modes(y, t - t_state, y1[b], y2[b])
            if track_states:
                state_time[b, code] += t - t_state
            t_state = t
            if i >= 0:
                occ_time[b, i] += eta[i] * (t - last_change[i])
                last_change[i] = t
            if j >= 0:
                occ_time[b, j] += eta[j] * (t - last_change[j])
                last_change[j] = t
            if i >= 0 and j >= 0:
                current[b, j] += 1.0 if eta[i] == 1 else -1.0
            elif i >= 0:
                current[b, 0] += 1.0 if eta[0] == 0 else -1.0
            else:
                current[b, N] += 1.0 if eta[N - 1] == 1 else -1.0
        # a swap of unequal sites flips both
        for site in (i, j):
            if site >= 0:
                d = 1 - 2 * eta[site]
                eta[site] += d
                if track_states:
                    code += d << site
                for a in range(K):
                    y[a] += d * basis[a, site]
    clock[0], clock[1], clock[2] = t, t_state, next_sample
    ints[0], ints[1], ints[2], ints[3] = ev, b, next_boundary, code


@njit(cache=True)
def _close(eta, y, clock, ints, track_states, occ_time, y1, y2, state_time, last_change):
    t, t_state = clock[0], clock[1]
    b, code = ints[1], ints[3]
    _accumulate_modes(y, t - t_state, y1[b], y2[b])
    if track_states:
        state_time[b, code] += t - t_state
    for i in range(eta.shape[0]):
        occ_time[b, i] += eta[i] * (t - last_change[i])


def _ssep_chain(cfg: LatticeConfig, basis: np.ndarray, track_states: bool):
    N = cfg.sites
    nb = cfg.n_batches
    K = basis.shape[0]
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    x = lattice_points(N)
    eta = (rng.random(N) < cfg.rho_left + (cfg.rho_right - cfg.rho_left) * x).astype(np.int64)
    y = basis @ eta.astype(float) if K else np.zeros(0)
    code = int(np.sum(eta << np.arange(N))) if track_states else 0
    out = dict(
        occ_time=np.zeros((nb, N)),
        batch_time=np.zeros(nb),
        y1=np.zeros((nb, K)),
        y2=np.zeros((nb, K, K)),
        s1=np.zeros((nb, N)),
        s2=np.zeros((nb, N, N)),
        n_samp=np.zeros(nb),
        current=np.zeros((nb, N + 1)),
        state_time=np.zeros((nb, (1 << N) if track_states else 1)),
    )
    last_change = np.zeros(N)
    occ_list = np.zeros(N, dtype=np.int64)
    clock = np.zeros(3)
    ints = np.array([0, -1, cfg.burn_in_events, code], dtype=np.int64)
    burn, rec = cfg.burn_in_events, cfg.events - cfg.burn_in_events
    exp_clock = cfg.clock == "exponential"
    empty = np.zeros(0)
    done = 0
    while done < cfg.events:
        m = min(cfg.chunk, cfg.events - done)
        u = rng.random(m)
        holds = rng.standard_exponential(m) if exp_clock else empty
        _advance(eta, y, basis, cfg.rho_left, cfg.rho_right, u, holds, exp_clock, clock, ints,
                 burn, rec, nb, cfg.sample_interval, track_states,
                 out["occ_time"], out["batch_time"], out["y1"], out["y2"], out["s1"], out["s2"],
                 out["n_samp"], out["current"], out["state_time"], last_change, occ_list)
        done += m
    _close(eta, y, clock, ints, track_states, out["occ_time"], out["y1"], out["y2"],
           out["state_time"], last_change)
    return out


@dataclass
class MicroStats:
    """Stationary lattice statistics with batch-means standard errors.

    ``profile`` and the mode statistics are exact time integrals; the
    pointwise ``covariance`` comes from snapshots every ``sample_interval``.
    ``weak_offdiag[a, b]`` is ``N^{-2} sum_{i != j} s_a(x_i) s_b(x_j) N C_ij``
    with ``s_k(x) = sin(k pi x)``, the off-diagonal scaled covariance tested
    against the low sine modes.
    """

    config: LatticeConfig
    x: np.ndarray
    profile: np.ndarray
    profile_se: np.ndarray
    covariance: np.ndarray  # connected <eta_i eta_j>_c
    covariance_se: np.ndarray
    scaled_covariance: np.ndarray  # N_s * covariance
    scaled_covariance_se: np.ndarray
    bond_current: np.ndarray  # net particles per unit time, left to right, per bond
    bond_current_se: np.ndarray
    weak_offdiag: np.ndarray
    weak_offdiag_se: np.ndarray
    variance_se: np.ndarray
    total_time: float
    n_samples: int
    state_distribution: Optional[np.ndarray] = None
    state_distribution_se: Optional[np.ndarray] = None

    @property
    def events(self) -> int:
        return self.config.events

    @property
    def variance(self) -> np.ndarray:
        """Site variances ``m (1 - m)`` from the time-integrated profile."""
        return self.profile * (1 - self.profile)


def _se(batches: np.ndarray) -> np.ndarray:
    return batches.std(axis=0, ddof=1) / math.sqrt(batches.shape[0])


def run_ssep(cfg: LatticeConfig) -> MicroStats:
    N = cfg.sites
    rec = cfg.events - cfg.burn_in_events
    if rec < cfg.n_batches:
        raise ValueError("fewer recorded events than batches")
    track = N <= MAX_ENUM_SITES
    x = lattice_points(N)
    basis = np.array([np.sin(k * np.pi * x) for k in cfg.modes]).reshape(-1, N)
    out = _ssep_chain(cfg, basis, track)
    occ, btime, s1, s2, ns = (out[k] for k in ("occ_time", "batch_time", "s1", "s2", "n_samp"))
    cur, stime, y1, y2 = (out[k] for k in ("current", "state_time", "y1", "y2"))
    T = btime.sum()
    prof_b = occ / btime[:, None]
    profile = occ.sum(axis=0) / T

    # snapshot second moments: mirror the upper triangle
    s2 = s2 + np.swapaxes(s2, 1, 2) * (1 - np.eye(N))
    if np.all(ns > 0):
        m_b = s1 / ns[:, None]
        cov_b = s2 / ns[:, None, None] - m_b[:, :, None] * m_b[:, None, :]
        cov_se = _se(cov_b)
    else:
        cov_se = np.full((N, N), np.inf)
    n_tot = max(ns.sum(), 1.0)
    m = s1.sum(axis=0) / n_tot
    cov = s2.sum(axis=0) / n_tot - np.outer(m, m)

    # sine-mode amplitudes Y = basis @ eta, integrated exactly in time
    def weak(ymean, yy, prof):
        cov_y = yy - np.outer(ymean, ymean)
        local = (basis * (prof * (1 - prof))) @ basis.T
        return (cov_y - local) / N

    weak_b = np.array([
        weak(y1[b] / btime[b], y2[b] / btime[b], prof_b[b]) for b in range(cfg.n_batches)
    ])
    weak_all = weak(y1.sum(axis=0) / T, y2.sum(axis=0) / T, profile)

    dist = dist_se = None
    if track:
        dist = stime.sum(axis=0) / T
        dist_se = _se(stime / btime[:, None])
    return MicroStats(
        config=cfg,
        x=x,
        profile=profile,
        profile_se=_se(prof_b),
        covariance=cov,
        covariance_se=cov_se,
        scaled_covariance=N * cov,
        scaled_covariance_se=N * cov_se,
        bond_current=cur.sum(axis=0) / T,
        bond_current_se=_se(cur / btime[:, None]),
        weak_offdiag=weak_all,
        weak_offdiag_se=_se(weak_b),
        variance_se=_se(prof_b * (1 - prof_b)),
        total_time=float(T),
        n_samples=int(ns.sum()),
        state_distribution=dist,
        state_distribution_se=dist_se,
    )


def _generator(N, rho_l, rho_r) -> np.ndarray:
    S = 1 << N
    Q = np.zeros((S, S))
    for c in range(S):
        eta = [(c >> i) & 1 for i in range(N)]
        moves = []
        moves.append((c | 1, rho_l))
        moves.append((c & ~1, 1 - rho_l))
        top = 1 << (N - 1)
        moves.append((c | top, rho_r))
        moves.append((c & ~top, 1 - rho_r))
        for i in range(N - 1):
            if eta[i] != eta[i + 1]:
                moves.append((c ^ (1 << i) ^ (1 << (i + 1)), 1.0))
        for d, r in moves:
            if d != c:
                Q[c, d] += r
    Q -= np.diag(Q.sum(axis=1))
    return Q


def exact_stationary(sites: int, rho_left: float, rho_right: float) -> np.ndarray:
    """Stationary law of the master equation by direct null-space solve.

    State ``c`` has site ``i`` occupied iff bit ``i`` of ``c`` is set.
    """
    if sites > MAX_ENUM_SITES:
        raise ValueError(f"exact enumeration limited to {MAX_ENUM_SITES} sites")
    Q = _generator(sites, rho_left, rho_right)
    ns = scipy.linalg.null_space(Q.T)
    if ns.shape[1] != 1:
        raise RuntimeError("stationary distribution is not unique")
    p = ns[:, 0]
    return p / p.sum()


def exact_moments(p: np.ndarray, sites: int):
    """Profile and connected covariance of a distribution over lattice states."""
    codes = np.arange(p.size)
    eta = ((codes[:, None] >> np.arange(sites)[None, :]) & 1).astype(float)
    mean = p @ eta
    second = eta.T @ (p[:, None] * eta)
    return mean, second - np.outer(mean, mean)


@dataclass
class MacroComparison:
    x: np.ndarray
    macro_R: np.ndarray
    macro_diag: np.ndarray
    offdiag_max_dev: float
    offdiag_mean_dev: float
    max_abs_R: float
    diag_z: np.ndarray
    modes: tuple
    weak_micro: np.ndarray
    weak_micro_se: np.ndarray
    weak_macro: np.ndarray
    tolerance: float

    @property
    def weak_max_dev(self) -> float:
        return float(np.abs(self.weak_micro - self.weak_macro).max())

    @property
    def weak_scale(self) -> float:
        return float(np.abs(self.weak_macro).max())

    @property
    def offdiag_ok(self) -> bool:
        return self.weak_max_dev <= self.tolerance * self.weak_scale

    @property
    def diag_ok(self) -> bool:
        return bool(np.all(np.abs(self.diag_z) <= 3.0))

    def table(self) -> list:
        rows = []
        for a, k in enumerate(self.modes):
            for c, l in enumerate(self.modes):
                rows.append({
                    "k": k, "l": l,
                    "micro": float(self.weak_micro[a, c]),
                    "micro_se": float(self.weak_micro_se[a, c]),
                    "macro": float(self.weak_macro[a, c]),
                })
        return rows

    def as_dict(self) -> dict:
        return {
            "offdiag_max_dev": self.offdiag_max_dev,
            "offdiag_mean_dev": self.offdiag_mean_dev,
            "max_abs_R": self.max_abs_R,
            "weak_max_dev": self.weak_max_dev,
            "weak_scale": self.weak_scale,
            "tolerance": self.tolerance,
            "offdiag_ok": self.offdiag_ok,
            "diag_max_abs_z": float(np.abs(self.diag_z).max()),
            "diag_ok": self.diag_ok,
            "weak_table": self.table(),
        }


def _offdiag_projection(C, basis, N):
    off = C * (1 - np.eye(N))
    return basis @ off @ basis.T / N**2


def compare_to_macro(micro: MicroStats, report, tolerance: float = 0.1):
    """Put the lattice statistics next to the macroscopic prediction.

    ``report`` is a :class:`~ness_lab.covariance.CorrelationReport` for the
    same reservoir densities. The off-diagonal comparison is made both
    pointwise (diagnostic) and against the low sine modes, where the
    scaled lattice covariance converges to the kernel ``R`` weakly. The
    diagonal is checked as ``m_i (1 - m_i)`` against ``q_i (1 - q_i)``.
    """
    cfg = micro.config
    ql, qr = float(report.spec.q_left[0]), float(report.spec.q_right[0])
    if report.spec.n != 1 or not (np.isclose(ql, cfg.rho_left) and np.isclose(qr, cfg.rho_right)):
        raise ValueError(
            f"boundary densities differ: micro ({cfg.rho_left}, {cfg.rho_right}) vs "
            f"macro ({report.spec.q_left}, {report.spec.q_right})"
        )
    N, x = cfg.sites, micro.x
    grid = report.grid
    xs = np.concatenate([[0.0], grid.cell_points, [1.0]])
    Rpad = np.pad(report.R, 1)
    interp = RegularGridInterpolator((xs, xs), Rpad)
    X, Y = np.meshgrid(x, x, indexing="ij")
    macro_R = interp(np.stack([X, Y], axis=-1))
    qpad = np.concatenate([[ql], report.profile.values[:, 0], [qr]])
    q = np.interp(x, xs, qpad)
    macro_diag = q * (1 - q)

    off = ~np.eye(N, dtype=bool)
    dev = np.abs(micro.scaled_covariance - macro_R)[off]
    basis = np.array([np.sin(k * np.pi * x) for k in cfg.modes])
    weak_macro = _offdiag_projection(macro_R, basis, N)
    return MacroComparison(
        x=x,
        macro_R=macro_R,
        macro_diag=macro_diag,
        offdiag_max_dev=float(dev.max()),
        offdiag_mean_dev=float(dev.mean()),
        max_abs_R=float(np.abs(macro_R).max()),
        diag_z=(micro.variance - macro_diag) / micro.variance_se,
        modes=tuple(cfg.modes),
        weak_micro=micro.weak_offdiag,
        weak_micro_se=micro.weak_offdiag_se,
        weak_macro=weak_macro,
        tolerance=tolerance,
    )
