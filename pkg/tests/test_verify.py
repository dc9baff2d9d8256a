
import numpy as np
import pytest

from microcanon.errors import UsageError
from microcanon.flow import FlowConfig
from microcanon.models import BoundingBox, ModelSpec, harmonic, henon_heiles
from microcanon.sampling import SampleConfig
from microcanon.verify import (
    check_coarea,
    check_convolutivity,
    check_flow_preservation,
    check_invariance,
    check_liouville,
    parse_event,
    parse_observable,
    sample_region,
)


def test_parse_observable():
    x = np.array([[2.0, 3.0, 5.0, 7.0]])
    assert parse_observable("q1^2", 2)(x)[0] == 4.0
    assert parse_observable("q2*p1", 2)(x)[0] == 15.0
    assert parse_observable("1", 2)(x)[0] == 1.0
    with pytest.raises(UsageError):
        parse_observable("q3", 2)
    with pytest.raises(UsageError):
        parse_observable("sin(q1)", 2)


def test_parse_event():
    x = np.array([[0.1, 0.3], [0.5, -0.3]])
    ev = parse_event("q1>0.2", 1)
    assert ev.is_event and ev(x).tolist() == [0.0, 1.0]
    assert parse_event("p1 <= 0", 1)(x).tolist() == [0.0, 1.0]
    with pytest.raises(UsageError):
        parse_event("q1", 1)


def test_liouville_zero_time():
    pts = sample_region(harmonic(1), 5, 0)
    rep = check_liouville(harmonic(1), pts, FlowConfig(1e-3, 0.0))
    assert rep.passed and rep.estimates[0]["value"] < 1e-9


def test_liouville_henon_heiles():
    m = henon_heiles()
    rep = check_liouville(m, sample_region(m, 10, 1, 1 / 12), FlowConfig(1e-3, 5.0))
    assert rep.passed


def test_liouville_blow_up_reported():
    box = BoundingBox((-1.0, -1.0), (1.0, 1.0))
    m = ModelSpec("inverted", 1, {}, box, lambda q, p: 0.5 * (p**2 - q**2).sum(-1), lambda q, p: -q,
                  lambda q, p: p)
    rep = check_liouville(m, np.array([[0.5, 0.0]]), FlowConfig(1e-2, 30.0, divergence_guard=50.0))
    assert not rep.passed
    assert rep.estimates[0]["name"] == "blow_up"


def test_coarea_degenerate_range():
    rep = check_coarea(harmonic(1), parse_observable("1", 1), (1.0, 1.0), SampleConfig(1000))
    assert rep.passed and rep.estimates[0]["value"] == 0.0


def test_invariance_zero_time_is_exact():
    rep = check_invariance(harmonic(1), 1.0, 0.0, cfg=SampleConfig(200_000, seed=1))
    assert rep.passed
    for e in rep.estimates:
        if "before" in e:
            assert e["before"] == e["after"]


def test_preservation_half_space():
    ev = [parse_event("q1>0", 1)]
    rep = check_flow_preservation(harmonic(1), 1.0, 3.7, ev, SampleConfig(500_000, seed=2),
                                  FlowConfig(2e-3))
    assert rep.passed
    est = [e for e in rep.estimates if e["name"] == "q1>0"][0]
    assert abs(est["before"] - 0.5) < 4 * est["before_se"]


def test_preservation_requires_events():
    with pytest.raises(UsageError):
        check_flow_preservation(harmonic(1), 1.0, 1.0, [parse_observable("q1^2", 1)], SampleConfig(1000))


def test_reports_reproducible():
    cfg = SampleConfig(200_000, seed=11)
    a = check_invariance(harmonic(1), 1.0, 1.0, cfg=cfg, flow=FlowConfig(1e-2)).to_json()
    b = check_invariance(harmonic(1), 1.0, 1.0, cfg=cfg.replace(workers=4), flow=FlowConfig(1e-2)).to_json()
    assert a == b


def test_convolutivity_small():
    rep = check_convolutivity(harmonic(1), harmonic(1), np.linspace(0, 8, 32), SampleConfig(1_000_000, seed=3))
    assert rep.passed


def test_convolutivity_empty_grid():
    with pytest.raises(UsageError):
        check_convolutivity(harmonic(1), harmonic(1), [], SampleConfig(1000))
