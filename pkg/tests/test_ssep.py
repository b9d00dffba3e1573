import numpy as np
import pytest

from ness_lab import LatticeConfig, compare_to_macro, run_ssep
from ness_lab.ssep import exact_moments, exact_stationary, lattice_points

from conftest import pipeline


@pytest.fixture(scope="module", params=["uniformized", "exponential"])
def small_chain(request):
    cfg = LatticeConfig(4, 0.2, 0.8, sweeps=200_000, burn_in_sweeps=1000, seed=11,
                        clock=request.param)
    return cfg, run_ssep(cfg)


def test_enumeration_gate(small_chain):
    cfg, ms = small_chain
    p = exact_stationary(4, 0.2, 0.8)
    assert ms.state_distribution.shape == (16,)
    z = (ms.state_distribution - p) / ms.state_distribution_se
    assert np.all(np.abs(z) <= 3)


def test_small_chain_moments(small_chain):
    _, ms = small_chain
    mean, cov = exact_moments(exact_stationary(4, 0.2, 0.8), 4)
    assert np.all(np.abs(ms.profile - mean) <= 3 * ms.profile_se)
    off = ~np.eye(4, dtype=bool)
    assert np.all(np.abs(ms.covariance - cov)[off] <= 3 * ms.covariance_se[off])
    np.testing.assert_array_equal(ms.covariance, ms.covariance.T)


def test_exact_profile_is_linear_between_effective_boundaries():
    mean, cov = exact_moments(exact_stationary(4, 0.2, 0.8), 4)
    np.testing.assert_allclose(mean, 0.2 + 0.6 * lattice_points(4), atol=1e-12)
    off = ~np.eye(4, dtype=bool)
    assert np.all(cov[off] < 0)


def test_equal_reservoirs_give_product_measure():
    p = exact_stationary(4, 0.3, 0.3)
    codes = np.arange(16)
    k = np.array([bin(c).count("1") for c in codes])
    np.testing.assert_allclose(p, 0.3**k * 0.7 ** (4 - k), atol=1e-12)


def test_equal_reservoirs_simulated():
    cfg = LatticeConfig(10, 0.5, 0.5, sweeps=100_000, burn_in_sweeps=1000, seed=5)
    ms = run_ssep(cfg)
    assert np.all(np.abs(ms.profile - 0.5) <= 3 * ms.profile_se)
    off = ~np.eye(10, dtype=bool)
    z = np.abs(ms.covariance)[off] / ms.covariance_se[off]
    assert np.mean(z <= 3) >= 0.97
    assert np.all(np.abs(ms.bond_current) <= 3 * ms.bond_current_se)


@pytest.fixture(scope="module")
def chain50():
    cfg = LatticeConfig(50, 0.2, 0.8, sweeps=200_000, burn_in_sweeps=5000, seed=21)
    return cfg, run_ssep(cfg)


def test_profile_linear_n50(chain50):
    cfg, ms = chain50
    expected = 0.2 + 0.6 * lattice_points(50)
    assert np.all(np.abs(ms.profile - expected) <= 3 * ms.profile_se)
    assert np.all((ms.profile >= 0) & (ms.profile <= 1))


def test_current_balance(chain50):
    cfg, ms = chain50
    J = ms.bond_current
    assert np.all(np.abs(J - J.mean()) <= 3 * ms.bond_current_se)
    assert abs(J.mean() - (0.2 - 0.8) / 51) <= 3 * ms.bond_current_se.max()


def test_offdiagonal_not_significantly_positive(chain50):
    _, ms = chain50
    off = ~np.eye(50, dtype=bool)
    assert np.mean(ms.scaled_covariance[off] > 3 * ms.scaled_covariance_se[off]) <= 0.005
    assert np.all(np.diag(ms.weak_offdiag) < 0)


def test_same_seed_identical():
    cfg = LatticeConfig(8, 0.3, 0.6, sweeps=2000, burn_in_sweeps=100, seed=3)
    a, b = run_ssep(cfg), run_ssep(cfg)
    np.testing.assert_array_equal(a.profile, b.profile)
    np.testing.assert_array_equal(a.covariance, b.covariance)
    c = run_ssep(LatticeConfig(8, 0.3, 0.6, sweeps=2000, burn_in_sweeps=100, seed=4))
    assert not np.array_equal(a.profile, c.profile)


def test_chunking_does_not_change_the_chain():
    base = dict(sites=6, rho_left=0.3, rho_right=0.6, sweeps=3000, burn_in_sweeps=100, seed=8)
    a = run_ssep(LatticeConfig(**base))
    b = run_ssep(LatticeConfig(**base, chunk=997))
    np.testing.assert_array_equal(a.profile, b.profile)
    np.testing.assert_array_equal(a.weak_offdiag, b.weak_offdiag)


def test_compare_equilibrium_is_null():
    _, _, _, rep = pipeline("ssep", 0.5, 0.5, 32)
    ms = run_ssep(LatticeConfig(20, 0.5, 0.5, sweeps=50_000, burn_in_sweeps=500, seed=2))
    cmp = compare_to_macro(ms, rep)
    assert np.abs(cmp.macro_R).max() <= 1e-12
    assert np.all(np.abs(cmp.weak_micro) <= 3 * cmp.weak_micro_se + 1e-12)
    assert cmp.diag_ok
    d = cmp.as_dict()
    assert {"weak_max_dev", "diag_ok", "weak_table"} <= set(d)


def test_compare_interpolates_macro_kernel():
    _, _, _, rep = pipeline("ssep", 0.2, 0.8, 64)
    ms = run_ssep(LatticeConfig(30, 0.2, 0.8, sweeps=2000, burn_in_sweeps=100, seed=2))
    cmp = compare_to_macro(ms, rep)
    x = ms.x
    X, Y = np.meshgrid(x, x, indexing="ij")
    kernel = -0.36 * np.minimum(X, Y) * (1 - np.maximum(X, Y))
    off = ~np.eye(30, dtype=bool)
    assert np.abs(cmp.macro_R - kernel)[off].max() <= 2e-3
    np.testing.assert_allclose(cmp.macro_diag, (0.2 + 0.6 * x) * (0.8 - 0.6 * x), atol=1e-6)


def test_compare_refuses_mismatched_boundaries():
    _, _, _, rep = pipeline("ssep", 0.2, 0.8, 16)
    ms = run_ssep(LatticeConfig(5, 0.3, 0.8, sweeps=100, burn_in_sweeps=10))
    with pytest.raises(ValueError, match="boundary densities"):
        compare_to_macro(ms, rep)


@pytest.mark.parametrize("kw", [dict(rho_left=0.0), dict(rho_right=1.0), dict(burn_in_sweeps=200),
                                dict(sites=0), dict(clock="discrete")])
def test_lattice_config_validation(kw):
    base = dict(sites=4, rho_left=0.2, rho_right=0.8, sweeps=100, burn_in_sweeps=10)
    base.update(kw)
    with pytest.raises(ValueError):
        LatticeConfig(**base)


def test_enumeration_limit():
    with pytest.raises(ValueError):
        exact_stationary(13, 0.2, 0.8)
