import math

import numpy as np
import pytest

from microcanon.canonical import check_multiplicativity, partition_direct, partition_laplace
from microcanon.errors import BoundaryMassWarning, RangeTooSmallError, UsageError
from microcanon.microcanonical import analytic_dos, table_from_omega
from microcanon.models import harmonic, quartic1d
from microcanon.sampling import SampleConfig


def test_laplace_harmonic_one_dof():
    z = partition_laplace(analytic_dos(harmonic(1), np.linspace(0, 30, 301)), 1.0)
    assert abs(z.value - 2 * math.pi) < 0.02 * 2 * math.pi
    assert abs(z.value - 2 * math.pi) <= z.quad_bound + z.tail_bound + 1e-12


def test_laplace_harmonic_two_dof():
    z = partition_laplace(analytic_dos(harmonic(2), np.linspace(0, 30, 301)), 2.0)
    assert abs(z.value - math.pi**2) < 0.03 * math.pi**2


def test_laplace_zero_table():
    assert partition_laplace(table_from_omega(np.linspace(0, 5, 11), np.zeros(11)), 1.0).value == 0.0


def test_laplace_tail_too_large():
    with pytest.raises(RangeTooSmallError, match="extend"):
        partition_laplace(analytic_dos(harmonic(1), np.linspace(0, 3, 31)), 1.0)


def test_laplace_decreasing_in_beta():
    t = analytic_dos(quartic1d(), np.linspace(0, 40, 801))
    zs = [partition_laplace(t, b).value for b in (0.5, 1.0, 2.0, 4.0)]
    assert all(a > b for a, b in zip(zs, zs[1:]))


def test_direct_harmonic():
    z = partition_direct(harmonic(1), 1.0, SampleConfig(1_000_000, seed=1))
    assert abs(z.value - 2 * math.pi) < 3 * z.se


def test_direct_large_beta_tends_to_zero():
    z = partition_direct(harmonic(1), 50.0, SampleConfig(1_000_000, seed=1))
    assert z.value < z.value + 3 * z.se and z.value < 2 * math.pi / 50 * 1.1


def test_direct_warns_on_boundary_mass():
    with pytest.warns(BoundaryMassWarning):
        partition_direct(harmonic(1, e_max=0.5), 0.5, SampleConfig(200_000))


def test_gibbs_prefactor_scales_both_routes():
    m = harmonic(1).replace(gibbs_prefactor=0.25)
    cfg = SampleConfig(200_000, seed=5)
    assert math.isclose(partition_direct(m, 1.0, cfg).value, 0.25 * partition_direct(harmonic(1), 1.0, cfg).value)
    E = np.linspace(0, 30, 301)
    ratio = partition_laplace(analytic_dos(m, E), 1.0).value / partition_laplace(analytic_dos(harmonic(1), E), 1.0).value
    assert math.isclose(ratio, 0.25)


def test_multiplicativity_report():
    rep = check_multiplicativity(harmonic(1), harmonic(1), 1.0, SampleConfig(500_000, seed=2))
    assert rep.passed
    d = rep.to_dict()
    assert d["check"] == "multiplicativity" and d["pass"] is True
    assert {e["name"] for e in d["estimates"]} >= {"Z_joint", "ratio"}


def test_beta_validation():
    with pytest.raises(UsageError):
        partition_direct(harmonic(1), -1.0, SampleConfig(10))
