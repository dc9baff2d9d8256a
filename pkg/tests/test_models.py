import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from microcanon.errors import NumericDomainError, UsageError
from microcanon.models import (
    BoundingBox,
    PhasePoint,
    compose,
    doublewell1d,
    evaluate,
    gradient,
    harmonic,
    henon_heiles,
    join_points,
    make_model,
    quartic1d,
)

finite = st.floats(-5, 5, allow_nan=False)


def test_evaluate_known_values():
    assert evaluate(harmonic(1), PhasePoint([1.0], [0.0])) == 0.5
    assert evaluate(doublewell1d(), PhasePoint([0.0], [0.0])) == 0.25
    assert math.isclose(evaluate(henon_heiles(), PhasePoint([0.0, 1.0], [0.0, 0.0])), 1 / 6)


def test_evaluate_rejects_dimension_mismatch():
    with pytest.raises(UsageError):
        evaluate(harmonic(2), PhasePoint([1.0], [0.0]))


def test_evaluate_non_finite_is_domain_error():
    m = quartic1d()
    with pytest.raises(NumericDomainError):
        evaluate(m, np.array([1e100, 0.0]))


def test_phase_point_validation():
    with pytest.raises(UsageError):
        PhasePoint([1.0, 2.0], [0.0])
    with pytest.raises(UsageError):
        PhasePoint([math.nan], [0.0])
    with pytest.raises(UsageError):
        PhasePoint([], [])


def test_bounding_box_validation():
    with pytest.raises(UsageError):
        BoundingBox((0.0, 1.0), (1.0, 1.0))
    box = BoundingBox((-1.0, -2.0), (1.0, 2.0))
    assert box.volume == 8.0
    assert box.contains(np.array([[0.0, 0.0], [2.0, 0.0]])).tolist() == [True, False]


@given(st.lists(finite, min_size=4, max_size=4))
def test_gradient_matches_finite_differences(x):
    m = henon_heiles()
    x = np.array(x)
    eps = 1e-6
    fd = np.array([(m.energy(x + eps * e) - m.energy(x - eps * e)) / (2 * eps) for e in np.eye(4)])
    assert np.allclose(gradient(m, x), fd, rtol=1e-5, atol=1e-5)


@given(st.lists(finite, min_size=2, max_size=2), st.lists(finite, min_size=4, max_size=4))
def test_compose_energy_is_additive(x1, x2):
    a, b = quartic1d(), harmonic(2, omega=(1.0, 2.0))
    joint = compose(a, b)
    p1, p2 = PhasePoint.from_array(x1), PhasePoint.from_array(x2)
    lhs = evaluate(joint, join_points(p1, p2))
    assert math.isclose(lhs, evaluate(a, p1) + evaluate(b, p2), rel_tol=1e-12, abs_tol=1e-12)


def test_compose_box_and_dimension():
    joint = compose(harmonic(1), henon_heiles())
    assert joint.n == 3
    assert math.isclose(joint.box.volume, harmonic(1).box.volume * henon_heiles().box.volume)


def test_harmonic_box_contains_sublevel_set():
    m = harmonic(2, omega=(1.0, 3.0), e_max=2.0)
    lo, hi = np.asarray(m.box.lower), np.asarray(m.box.upper)
    # turning points of each coordinate at E = e_max
    assert np.allclose(hi[:2], np.sqrt(2 * 2.0) / np.array([1.0, 3.0]))
    assert np.allclose(hi[2:], np.sqrt(2 * 2.0))
    assert np.allclose(lo, -hi)


def test_harmonic_oracle_consistency():
    m = harmonic(3)
    E = np.linspace(0.1, 3, 2000)
    dg = np.gradient(m.oracle.g(E), E, edge_order=2)
    assert np.allclose(dg, m.oracle.omega(E), rtol=1e-3)
    assert math.isclose(m.oracle.omega(1.0), (2 * math.pi) ** 3 / 2)


def test_quartic_oracle_laplace_transform():
    from scipy import integrate

    m = quartic1d()
    val, _ = integrate.quad(lambda E: m.oracle.omega(E) * math.exp(-E), 0, math.inf)
    assert math.isclose(val, m.oracle.z(1.0), rel_tol=1e-7)


def test_make_model_errors():
    with pytest.raises(UsageError, match="available"):
        make_model("nope")
    with pytest.raises(UsageError):
        make_model("henon_heiles", n=2)
    with pytest.raises(UsageError):
        make_model("harmonic", n=0)
    assert make_model("harmonic", n=2).n == 2


def test_gibbs_prefactor_validated():
    with pytest.raises(UsageError):
        harmonic(1).replace(gibbs_prefactor=0.0)
