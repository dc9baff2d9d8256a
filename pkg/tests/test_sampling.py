import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from microcanon.errors import CriticalValueWarning, EmptyShellError, ShellTruncationWarning, UsageError
from microcanon.models import doublewell1d, harmonic
from microcanon.sampling import CHUNK_SIZE, SampleConfig, chunk_rng, sample_box, shell_ensemble


def test_chunk_streams_are_distinct_and_reproducible():
    a = chunk_rng(5, 0, 0).random(4)
    assert np.array_equal(a, chunk_rng(5, 0, 0).random(4))
    assert not np.array_equal(a, chunk_rng(5, 0, 1).random(4))
    assert not np.array_equal(a, chunk_rng(5, 1, 0).random(4))
    assert not np.array_equal(a, chunk_rng(6, 0, 0).random(4))


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 3 * CHUNK_SIZE), st.integers(0, 2**32))
def test_box_samples_independent_of_workers(count, seed):
    m = harmonic(1)
    a = np.concatenate([x for x, _ in sample_box(m, SampleConfig(count, seed, 1))])
    b = np.concatenate([x for x, _ in sample_box(m, SampleConfig(count, seed, 3))])
    assert a.shape == (count, 2) and np.array_equal(a, b)
    assert np.all(m.box.contains(a))


def test_shell_acceptance_matches_annulus_area():
    m = harmonic(1, e_max=2.0)
    ens = shell_ensemble(m, 1.0, 0.01, SampleConfig(1_000_000, seed=3))
    # shell area 2 pi * 2 delta inside a box of area 16
    expected = 2 * math.pi * 0.02 / m.box.volume
    assert abs(ens.acceptance - expected) < 4 * math.sqrt(expected / ens.n_proposed)
    assert np.all(np.abs(ens.energies - 1.0) <= 0.01)


def test_shell_target_stops_at_chunk_boundary():
    m = harmonic(1)
    ens = shell_ensemble(m, 1.0, 0.01, SampleConfig(seed=1), target=500)
    assert ens.n_accepted >= 500
    assert ens.n_proposed % CHUNK_SIZE == 0
    par = shell_ensemble(m, 1.0, 0.01, SampleConfig(seed=1, workers=4), target=500)
    assert np.array_equal(ens.points, par.points)


def test_empty_shell_raises():
    with pytest.raises(EmptyShellError):
        shell_ensemble(harmonic(1), 100.0, 0.1, SampleConfig(100))


def test_critical_value_detection():
    m = doublewell1d()
    with pytest.warns(CriticalValueWarning):
        ens = shell_ensemble(m, 0.25, None, SampleConfig(200_000))
    assert ens.critical and ens.min_grad < 1e-3
    with warnings.catch_warnings():
        warnings.simplefilter("error", CriticalValueWarning)
        assert not shell_ensemble(m, 0.4, None, SampleConfig(200_000)).critical


def test_truncated_shell_warns():
    m = harmonic(1, e_max=1.0)
    with pytest.warns(ShellTruncationWarning):
        ens = shell_ensemble(m, 1.5, 0.05, SampleConfig(200_000))
    assert ens.truncated


def test_config_validation():
    with pytest.raises(UsageError):
        SampleConfig(count=0)
    with pytest.raises(UsageError):
        SampleConfig(workers=0)
    with pytest.raises(UsageError):
        shell_ensemble(harmonic(1), 1.0, -0.1)


def test_shell_csv_roundtrip(tmp_path):
    ens = shell_ensemble(harmonic(1), 1.0, 0.01, SampleConfig(100_000))
    path = tmp_path / "shell.csv"
    ens.to_csv(path)
    data = np.loadtxt(path, delimiter=",", skiprows=2)
    assert np.array_equal(data[:, :2], ens.points)
