import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from microcanon.errors import UsageError
from microcanon.microcanonical import (
    analytic_dos,
    convolve_omega,
    estimate_dos,
    fd_matrix,
    linear_functional_se,
    microcanonical_average,
    omega_shell,
    table_from_omega,
)
from microcanon.models import harmonic, quartic1d
from microcanon.sampling import SampleConfig, shell_ensemble


@pytest.fixture(scope="module")
def h1_table():
    return estimate_dos(harmonic(1, e_max=3.0), np.linspace(0, 3, 13), SampleConfig(400_000, seed=2))


def test_g_matches_disc_area(h1_table):
    exact = 2 * math.pi * h1_table.energies
    assert np.all(np.abs(h1_table.g - exact) <= 4 * h1_table.se_g + 1e-12)


def test_omega_constant_for_one_oscillator(h1_table):
    inner = slice(1, -1)
    dev = np.abs(h1_table.omega[inner] - 2 * math.pi)
    assert np.all(dev <= 4 * h1_table.se_omega[inner])


def test_kde_close_to_exact_in_interior(h1_table):
    assert np.allclose(h1_table.omega_kde[3:-3], 2 * math.pi, rtol=0.03)


def test_same_seed_same_table():
    m = harmonic(1)
    grid = np.linspace(0, 4, 9)
    a = estimate_dos(m, grid, SampleConfig(150_000, seed=9))
    b = estimate_dos(m, grid, SampleConfig(150_000, seed=9, workers=3))
    assert np.array_equal(a.g, b.g) and np.array_equal(a.omega_kde, b.omega_kde)


def test_fd_matrix_exact_on_quadratics():
    E = np.sort(np.random.default_rng(0).uniform(0, 2, 12))
    D = fd_matrix(E)
    assert np.allclose(D @ (E**2 + 3 * E), 2 * E + 3)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=6, max_size=6))
def test_linear_functional_se_matches_multinomial(coeffs):
    # g rows are cumulative sums of multinomial bin counts; brute-force the covariance
    t = estimate_dos(quartic1d(e_max=2.0), np.linspace(0.2, 2, 6), SampleConfig(20_000), kde=False,
                     flag_critical=False)
    c = np.asarray(coeffs)
    p = t.bin_counts / t.n_samples
    scale = t.box_volume * t.gibbs_prefactor
    L = np.tril(np.ones((6, 7)))
    cov = (np.diag(p) - np.outer(p, p)) / t.n_samples
    brute = scale * math.sqrt(max(c @ L @ cov @ L.T @ c, 0.0))
    assert math.isclose(linear_functional_se(t, c), brute, rel_tol=1e-6, abs_tol=1e-12)


def test_shell_omega_and_average():
    m = harmonic(1)
    est = omega_shell(m, 1.0, 0.02, SampleConfig(1_000_000, seed=4))
    assert abs(est.value - 2 * math.pi) < 4 * est.se
    ens = shell_ensemble(m, 1.0, 0.02, SampleConfig(1_000_000, seed=4))
    avg = microcanonical_average(ens, lambda x: x[:, 0] ** 2)
    # time average of q^2 on the circle of energy 1 is E / omega^2 = 1
    assert abs(avg.value - 1.0) < 4 * avg.se


def test_gibbs_prefactor_scales_omega_not_average():
    m = harmonic(1).replace(gibbs_prefactor=0.5)
    est = omega_shell(m, 1.0, 0.02, SampleConfig(200_000, seed=4))
    base = omega_shell(harmonic(1), 1.0, 0.02, SampleConfig(200_000, seed=4))
    assert math.isclose(est.value, 0.5 * base.value)


def test_convolution_of_analytic_tables():
    E = np.linspace(0, 4, 401)
    c = convolve_omega(analytic_dos(harmonic(1), E), analytic_dos(harmonic(1), E))
    assert np.allclose(c.omega, (2 * math.pi) ** 2 * E, rtol=1e-10, atol=1e-10)
    c3 = convolve_omega(analytic_dos(harmonic(2), E), analytic_dos(harmonic(1), E))
    assert np.allclose(c3.omega[10:], (2 * math.pi) ** 3 * E[10:] ** 2 / 2, rtol=1e-4)


def test_convolution_requires_common_uniform_grid():
    a = table_from_omega(np.linspace(0, 1, 5), np.ones(5))
    b = table_from_omega(np.linspace(0, 1, 9), np.ones(9))
    with pytest.raises(UsageError):
        convolve_omega(a, b)
    shifted = table_from_omega(np.linspace(0.5, 1.5, 5), np.ones(5))
    with pytest.raises(UsageError):
        convolve_omega(a, shifted)


def test_grid_validation():
    with pytest.raises(UsageError):
        estimate_dos(harmonic(1), [1.0, 0.5], SampleConfig(100))
