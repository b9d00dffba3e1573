import dataclasses

import numpy as np
import pytest

from ness_lab import (
    PreconditionError,
    SimConfig,
    build_grid,
    estimate_covariance,
    estimate_time_correlation,
    linearize,
    make_model,
    simulate,
    solve_steady,
)
from ness_lab.covariance import time_correlation
from ness_lab.simulate import default_burn_in, explicit_dt_bound

from conftest import pipeline


def _run(system, **kw):
    cfg = SimConfig(**kw)
    return simulate(system, cfg), cfg


def test_zero_noise_stays_at_zero():
    _, _, system, _ = pipeline("ssep", 0.2, 0.8, 6)
    quiet = dataclasses.replace(system, F=np.zeros_like(system.F))
    stream, _ = _run(quiet, dt=1e-3, n_steps=200, burn_in=0, n_trajectories=3)
    for _, X in stream:
        assert not X.any()


def test_scalar_ou_variance():
    spec = make_model("ssep", 0.2, 0.8)
    system = linearize(spec, solve_steady(spec, build_grid(1)))
    target = system.B[0, 0] / (-2 * system.L[0, 0])
    stream, cfg = _run(system, dt=1e-2, n_steps=5_100, burn_in=100, n_trajectories=20, seed=3)
    stats = estimate_covariance(stream)
    assert stats.n_samples == 100_000
    assert abs(stats.covariance[0, 0] - target) <= 3 * stats.covariance_se[0, 0]


def test_same_seed_bit_identical():
    _, _, system, _ = pipeline("power_law", 0.2, 0.8, 6, alpha=2.0)
    a, _ = _run(system, dt=1e-3, n_steps=300, burn_in=10, n_trajectories=4, seed=9)
    b, _ = _run(system, dt=1e-3, n_steps=300, burn_in=10, n_trajectories=4, seed=9, chunk=7)
    xa = np.array([X.copy() for _, X in a])
    xb = np.array([X.copy() for _, X in b])
    np.testing.assert_array_equal(xa, xb)
    np.testing.assert_array_equal(xa, np.array([X.copy() for _, X in a]))
    c, _ = _run(system, dt=1e-3, n_steps=300, burn_in=10, n_trajectories=4, seed=10)
    assert not np.array_equal(xa, np.array([X.copy() for _, X in c]))


def test_equilibrium_diagonal():
    _, prof, system, _ = pipeline("ssep", 0.5, 0.5, 8)
    burn = default_burn_in(system, 2e-3)
    stream, _ = _run(system, dt=2e-3, n_steps=burn + 4000, burn_in=burn, n_trajectories=50, seed=1)
    stats = estimate_covariance(stream)
    z = (np.diag(stats.covariance) - 0.25 / prof.grid.h) / np.diag(stats.covariance_se)
    assert np.all(np.abs(z) <= 3)


@pytest.fixture(scope="module")
def ness8():
    _, _, system, rep = pipeline("ssep", 0.2, 0.8, 8)
    dt = 1e-3
    burn = default_burn_in(system, dt)
    stream, cfg = _run(system, dt=dt, n_steps=burn + 6000, burn_in=burn, n_trajectories=60, seed=2)
    return system, rep, stream, cfg


def test_ness_covariance_matches_lyapunov(ness8):
    system, rep, stream, _ = ness8
    stats = estimate_covariance(stream)
    z = np.abs(stats.covariance - rep.W) / stats.covariance_se
    assert np.mean(z <= 3) >= 0.99
    assert not stats.low_confidence and stats.n_batches == 60
    assert np.all(np.abs(stats.mean) <= 4 * stats.mean_se)


def test_gaussian_fourth_moment(ness8):
    stats = estimate_covariance(ness8[2])
    assert np.all(np.abs(stats.standardized_fourth_moment - 3) <= 0.3)


def test_stationary_halves(ness8):
    _, _, stream, cfg = ness8
    half = cfg.recorded_steps // 2
    a = estimate_covariance(stream, window=(0, half))
    b = estimate_covariance(stream, window=(half, cfg.recorded_steps))
    z = np.abs(a.covariance - b.covariance) / np.hypot(a.covariance_se, b.covariance_se)
    assert np.mean(z <= 3) >= 0.99


def test_lags(ness8):
    system, rep, stream, cfg = ness8
    slow = 5 / abs(np.linalg.eigvals(system.L).real.max())
    far = round(slow / cfg.dt) * cfg.dt
    lags, notes = estimate_time_correlation(stream, [0.0, 0.05, far, 100.0])
    assert len(lags) == 3 and "exceeds" in notes[0]
    stats = estimate_covariance(stream)
    np.testing.assert_allclose(lags[0].matrix, stats.covariance, rtol=1e-12, atol=1e-12)
    exact = time_correlation(system.L, rep.W, 0.05)
    assert np.mean(np.abs(lags[1].matrix - exact) <= 3 * lags[1].se) >= 0.99
    assert np.mean(np.abs(lags[2].matrix) <= 3 * lags[2].se) >= 0.99


def test_lag_must_be_multiple_of_dt(ness8):
    with pytest.raises(ValueError, match="multiple"):
        estimate_time_correlation(ness8[2], [0.0005])


def test_standard_error_scales_with_trajectories():
    _, _, system, _ = pipeline("ssep", 0.2, 0.8, 6)
    se = []
    for nt in (40, 80):
        stream, _ = _run(system, dt=2e-3, n_steps=2600, burn_in=600, n_trajectories=nt, seed=4)
        se.append(np.mean(estimate_covariance(stream).covariance_se))
    assert se[0] / se[1] == pytest.approx(np.sqrt(2), rel=0.2)


def test_explicit_and_semi_implicit_agree():
    _, _, system, rep = pipeline("ssep", 0.2, 0.8, 4)
    out = []
    for scheme in ("explicit", "semi-implicit"):
        stream, _ = _run(system, dt=1e-4, n_steps=21000, burn_in=1000, n_trajectories=40,
                         seed=5, scheme=scheme)
        out.append(estimate_covariance(stream))
    z = np.abs(out[0].covariance - out[1].covariance) / np.hypot(out[0].covariance_se,
                                                                 out[1].covariance_se)
    assert np.all(z <= 3)


def test_crank_nicolson_has_no_stationary_bias():
    # the discrete stationary covariance of the CN recursion equals W for any dt
    _, _, system, rep = pipeline("ssep", 0.2, 0.8, 8)
    stream, _ = _run(system, dt=0.05, n_steps=10, burn_in=0)
    A, N = stream.A, stream.N
    assert np.abs(A @ rep.W @ A.T + N @ N.T - rep.W).max() <= 1e-10 * np.abs(rep.W).max()


def test_explicit_step_guard():
    _, _, system, _ = pipeline("ssep", 0.2, 0.8, 16)
    bound = explicit_dt_bound(system)
    with pytest.raises(ValueError, match="unstable"):
        simulate(system, SimConfig(dt=2 * bound, n_steps=10, burn_in=0, scheme="explicit"))


def test_low_confidence_flag():
    _, _, system, _ = pipeline("ssep", 0.2, 0.8, 4)
    stream, _ = _run(system, dt=1e-3, n_steps=15, burn_in=5)
    stats = estimate_covariance(stream)
    assert stats.low_confidence and stats.n_batches == 10


def test_refuses_non_dissipative():
    _, _, system, _ = pipeline("ssep", 0.2, 0.8, 4)
    bad = dataclasses.replace(system, L=-system.L)
    with pytest.raises(PreconditionError):
        simulate(bad, SimConfig(dt=1e-3, n_steps=10, burn_in=0))


@pytest.mark.parametrize("kw", [dict(dt=0.0), dict(burn_in=10), dict(scheme="rk4"),
                                dict(n_trajectories=0)])
def test_config_validation(kw):
    base = dict(dt=1e-3, n_steps=10, burn_in=0)
    base.update(kw)
    with pytest.raises(ValueError):
        SimConfig(**base)
