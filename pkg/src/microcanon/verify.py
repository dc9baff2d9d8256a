"""Statistical checks of volume preservation, coarea consistency and flow invariance.

Each check returns a :class:`~microcanon.report.CheckReport` holding every
raw estimate with its standard error, so a FAIL can be audited and a rerun
with the same seed reproduces the same numbers.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import FlowBlowUpError, UsageError
from .flow import FlowConfig, evolve, flow_jacobian_det
from .microcanonical import analytic_dos, convolve_omega, estimate_dos
from .models import ModelSpec, _as_points, compose
from .report import CheckReport
from .sampling import STREAM_BOX, STREAM_SHELL, SampleConfig, reduce_box, sample_points, shell_ensemble

LIOUVILLE_TOL = 1e-4
CONV_TOL = 0.05
SIGMAS = 3.0


@dataclass(frozen=True)
class Observable:
    """A named function of an ``(N, 2n)`` point array."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    is_event: bool = False

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(x), dtype=float)


_FACTOR = re.compile(r"^([qp])(\d+)(?:\^(\d+))?$")
_EVENT = re.compile(r"^(.+?)\s*(<=|>=|<|>)\s*([-+0-9.eE]+)$")


def parse_observable(text: str, n: int) -> Observable:
    """Parse a monomial such as ``q1^2``, ``p2^4`` or ``q1*p1`` (``1`` is the constant)."""
    src = text.replace(" ", "")
    if src == "1":
        return Observable("1", lambda x: np.ones(x.shape[0]))
    factors = []
    for part in src.split("*"):
        m = _FACTOR.match(part)
        if not m:
            raise UsageError(f"cannot parse observable {text!r}; use products of q<i>^k and p<i>^k")
        idx = int(m.group(2))
        if not 1 <= idx <= n:
            raise UsageError(f"observable {text!r} refers to coordinate {idx}, model has n={n}")
        col = idx - 1 if m.group(1) == "q" else n + idx - 1
        factors.append((col, int(m.group(3) or 1)))

    def fn(x, factors=tuple(factors)):
        out = np.ones(x.shape[0])
        for col, k in factors:
            out = out * x[:, col] ** k
        return out

    return Observable(src, fn)


def parse_event(text: str, n: int) -> Observable:
    """Parse a half-space style event such as ``q2>0.2`` or ``q1^2<1``."""
    m = _EVENT.match(text.strip())
    if not m:
        raise UsageError(f"cannot parse event {text!r}; expected <observable><op><number>")
    obs = parse_observable(m.group(1), n)
    op, thr = m.group(2), float(m.group(3))
    cmp = {"<": np.less, "<=": np.less_equal, ">": np.greater, ">=": np.greater_equal}[op]
    return Observable(f"{obs.name}{op}{m.group(3)}", lambda x: cmp(obs(x), thr), True)


def default_observables(n: int) -> list:
    names = ["q1^2", "p1^2", "q1^4"] + (["q2^2"] if n > 1 else [])
    return [parse_observable(s, n) for s in names]


def default_events(n: int) -> list:
    return [parse_event("q1>0", n), parse_event("p1>0", n)]


def _mean_se(v: np.ndarray):
    se = float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.nan
    return float(np.mean(v)), se


def _blow_up_report(report: CheckReport, err: FlowBlowUpError, model: ModelSpec, x0: np.ndarray):
    idx = err.index if err.index is not None else 0
    start = x0[idx] if x0.ndim == 2 else x0
    report.add("blow_up", time=err.time, index=idx, start=[float(v) for v in start],
               start_energy=float(model.energy(start)))
    report.notes.append(f"trajectory {idx} left the divergence guard at t={err.time:g}; "
                        f"the flow is not defined to time t from that start")
    report.passed = False
    return report


def check_liouville(model: ModelSpec, points, cfg: FlowConfig = FlowConfig(),
                    fd_step: float = 1e-5, tol: float = LIOUVILLE_TOL,
                    seed: Optional[int] = None) -> CheckReport:
    """``max |det D Phi_t - 1|`` over ``points`` must not exceed ``tol``."""
    x = np.atleast_2d(_as_points(model, points))
    report = CheckReport("liouville", model.name,
                         {"t": cfg.t_final, "step": cfg.step, "scheme": cfg.scheme,
                          "points": int(x.shape[0]), "fd_step": fd_step}, seed)
    try:
        det = np.atleast_1d(flow_jacobian_det(model, x, cfg, fd_step))
    except FlowBlowUpError as err:
        return _blow_up_report(report, err, model, x)
    dev = np.abs(det - 1.0)
    worst = int(np.argmax(dev))
    report.add("max_abs_det_minus_1", value=float(dev[worst]), tolerance=tol,
               worst_point=[float(v) for v in x[worst]])
    report.add("det", values=[float(v) for v in det])
    report.passed = bool(dev[worst] <= tol)
    return report


def check_coarea(model: ModelSpec, f: Observable, E_range: Sequence[float],
                 cfg: SampleConfig = SampleConfig(), nodes: int = 8,
                 delta_frac: float = 0.01, expected: Optional[float] = None) -> CheckReport:
    """Two estimators of ``int_{a <= H <= b} f dlambda``.

    * box: hit-or-miss Monte Carlo of ``f 1[a <= H <= b]``.
    * coarea: Gauss-Legendre quadrature over energy of the shell-ensemble
      mean of ``f`` times the shell Omega, one independent stream per node.

    Both are raw Lebesgue integrals (no Gibbs prefactor). With ``expected``
    the box estimate must also match it within 3 SE.
    """
    a, b = float(E_range[0]), float(E_range[1])
    if b < a:
        raise UsageError(f"energy range must satisfy a <= b, got [{a}, {b}]")
    report = CheckReport("coarea", model.name,
                         {"f": f.name, "E_range": [a, b], "count": cfg.count, "nodes": nodes}, cfg.seed)
    if a == b:
        report.add("box", value=0.0, se=0.0)
        report.add("coarea", value=0.0, se=0.0)
        report.passed = True
        return report

    def per_chunk(x, h):
        v = np.where((h >= a) & (h <= b), f(x), 0.0)
        return float(v.sum()), float((v * v).sum())

    parts = reduce_box(model, cfg, per_chunk, (STREAM_BOX, 7))
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    N = cfg.count
    mean = s1 / N
    V = model.box.volume
    box_val = V * mean
    box_se = V * math.sqrt(max(s2 / N - mean * mean, 0.0) / N)

    xs, ws = np.polynomial.legendre.leggauss(nodes)
    Es = 0.5 * (b - a) * xs + 0.5 * (a + b)
    ws = 0.5 * (b - a) * ws
    total, var = 0.0, 0.0
    for k, (E, w) in enumerate(zip(Es, ws)):
        delta = delta_frac * E if E > 0 else delta_frac
        ens = shell_ensemble(model, E, delta, cfg, stream=(STREAM_SHELL, 100 + k), warn=False)
        om = ens.volume / (2.0 * delta)
        om_se = ens.volume_se / (2.0 * delta)
        fm, fse = _mean_se(f(ens.points))
        if not math.isfinite(fse):
            fse = abs(fm)
        total += w * fm * om
        var += (w * om * fse) ** 2 + (w * fm * om_se) ** 2
        report.add(f"node_{k}", E=float(E), weight=float(w), omega=om, omega_se=om_se,
                   f_mean=fm, f_se=fse, critical=ens.critical)
    co_se = math.sqrt(var)
    report.add("box", value=box_val, se=box_se)
    report.add("coarea", value=total, se=co_se)
    diff = abs(box_val - total)
    tol = SIGMAS * math.hypot(box_se, co_se)
    report.add("difference", value=diff, tolerance=tol)
    ok = diff <= tol
    if expected is not None:
        abs_dev = abs(box_val - expected)
        report.add("absolute", expected=expected, deviation=abs_dev, tolerance=SIGMAS * box_se)
        ok = ok and abs_dev <= SIGMAS * box_se
    report.passed = bool(ok)
    return report


def _pushforward(model: ModelSpec, x0: np.ndarray, flow: FlowConfig, every: int = 10):
    """Evolve the ensemble, tracking the worst energy drift along the way."""
    h0 = model.energy(x0)
    worst = [0.0]

    def record(k, t, x):
        worst[0] = max(worst[0], float(np.max(np.abs(model.energy(x) - h0))))

    xt = evolve(model, x0, flow, on_step=record, callback_every=every)
    return xt, worst[0]


def _draw(model, E, cfg, target, delta, stream):
    return shell_ensemble(model, E, delta, cfg, target=target, stream=stream)


def _compare(report, name, before, after):
    b, bse = _mean_se(before)
    a, ase = _mean_se(after)
    d = after - before
    _, dse = _mean_se(d)
    tol = SIGMAS * math.hypot(bse, ase)
    ok = abs(a - b) <= tol
    report.add(name, before=b, before_se=bse, after=a, after_se=ase,
               difference=a - b, paired_se=dse, tolerance=tol, passed=bool(ok))
    return ok


def check_invariance(model: ModelSpec, E: float, t: float,
                     observables: Optional[Sequence[Observable]] = None,
                     events: Optional[Sequence[Observable]] = None,
                     cfg: SampleConfig = SampleConfig(), flow: FlowConfig = FlowConfig(),
                     target: Optional[int] = None, delta: Optional[float] = None,
                     drift_tol: Optional[float] = None, drift_every: int = 10) -> CheckReport:
    """Means of observables and event probabilities before and after ``Phi_t``.

    The ensemble is drawn on the thin shell at ``E``; each point is pushed
    forward by the integrator. Passes when every difference stays within 3
    combined SE and the energy drift is at most ``drift_tol`` (default
    ``1e-6 * max(|t|, 1)``).
    """
    observables = default_observables(model.n) if observables is None else list(observables)
    events = default_events(model.n) if events is None else list(events)
    drift_tol = 1e-6 * max(abs(t), 1.0) if drift_tol is None else drift_tol
    cfg_flow = flow.with_time(t)
    ens = _draw(model, E, cfg, target, delta, STREAM_SHELL)
    report = CheckReport("invariance", model.name,
                         {"E": float(E), "delta": ens.delta, "t": float(t), "step": flow.step,
                          "scheme": flow.scheme, "samples": ens.n_accepted,
                          "proposals": ens.n_proposed}, cfg.seed)
    report.add("shell", critical=ens.critical, min_grad=ens.min_grad, boundary_hits=ens.boundary_hits)
    if ens.critical:
        report.notes.append("E lies within delta of a critical value; invariance has no guarantee here")
    try:
        xt, drift = _pushforward(model, ens.points, cfg_flow, drift_every)
    except FlowBlowUpError as err:
        return _blow_up_report(report, err, model, ens.points)
    ok = True
    for obs in list(observables) + list(events):
        ok &= _compare(report, obs.name, obs(ens.points), obs(xt))
    report.add("energy_drift", value=drift, tolerance=drift_tol)
    report.passed = bool(ok and drift <= drift_tol)
    return report


def check_flow_preservation(model: ModelSpec, E: float, t: float,
                            events: Optional[Sequence[Observable]] = None,
                            cfg: SampleConfig = SampleConfig(), flow: FlowConfig = FlowConfig(),
                            target: Optional[int] = None, delta: Optional[float] = None,
                            drift_tol: Optional[float] = None, drift_every: int = 10) -> CheckReport:
    """``P(x in A)`` against ``P(Phi_t(x) in A)`` under the shell ensemble.

    The right-hand side is the probability of the preimage
    ``Phi_t^{-1}(A)``, so only forward integration is needed.
    """
    events = default_events(model.n) if events is None else list(events)
    if not all(ev.is_event for ev in events):
        raise UsageError("flow preservation compares events; got a non-event observable")
    drift_tol = 1e-6 * max(abs(t), 1.0) if drift_tol is None else drift_tol
    ens = _draw(model, E, cfg, target, delta, STREAM_SHELL)
    report = CheckReport("preservation", model.name,
                         {"E": float(E), "delta": ens.delta, "t": float(t), "step": flow.step,
                          "scheme": flow.scheme, "samples": ens.n_accepted,
                          "proposals": ens.n_proposed}, cfg.seed)
    report.add("shell", critical=ens.critical, min_grad=ens.min_grad, boundary_hits=ens.boundary_hits)
    try:
        xt, drift = _pushforward(model, ens.points, flow.with_time(t), drift_every)
    except FlowBlowUpError as err:
        return _blow_up_report(report, err, model, ens.points)
    ok = True
    for ev in events:
        ok &= _compare(report, ev.name, ev(ens.points), ev(xt))
    report.add("energy_drift", value=drift, tolerance=drift_tol)
    report.passed = bool(ok and drift <= drift_tol)
    return report


def check_convolutivity(m1: ModelSpec, m2: ModelSpec, grid, cfg: SampleConfig = SampleConfig(),
                        tol: float = CONV_TOL) -> CheckReport:
    """Direct Omega of the composite against the convolution of component tables.

    The mismatch is ``max |a - b| / max |b|`` over the interior two thirds
    of the grid, which must start at 0 with uniform spacing.
    """
    E = np.asarray(grid, dtype=float)
    if E.ndim != 1 or E.size < 3:
        raise UsageError("check_convolutivity needs a grid with at least 3 points")
    joint = compose(m1, m2)
    opts = {"kde": False, "flag_critical": False}
    direct = estimate_dos(joint, E, cfg, stream=(STREAM_BOX, 12), **opts)
    o1 = estimate_dos(m1, E, cfg, stream=(STREAM_BOX, 1), **opts)
    o2 = estimate_dos(m2, E, cfg, stream=(STREAM_BOX, 2), **opts)
    conv = convolve_omega(o1, o2)
    m = E.size
    sl = slice(m // 6, m - m // 6)
    ref = np.max(np.abs(conv.omega[sl]))
    mismatch = float(np.max(np.abs(direct.omega[sl] - conv.omega[sl])) / ref) if ref > 0 else math.inf
    report = CheckReport("convolution", joint.name,
                         {"grid": [float(E[0]), float(E[-1]), m], "count": cfg.count}, cfg.seed)
    report.add("interior", first=float(E[sl][0]), last=float(E[sl][-1]))
    report.add("mismatch", value=mismatch, tolerance=tol)
    report.add("omega_direct", values=direct.omega.tolist(), se=direct.se_omega.tolist())
    report.add("omega_convolved", values=conv.omega.tolist(), se=conv.se_omega.tolist())
    if m1.oracle.omega is not None and m2.oracle.omega is not None:
        exact = convolve_omega(analytic_dos(m1, E), analytic_dos(m2, E))
        report.add("omega_exact_convolved", values=exact.omega.tolist())
    report.passed = bool(mismatch <= tol)
    return report


def sample_region(model: ModelSpec, count: int, seed: int, max_energy: Optional[float] = None):
    """Uniform start points for Liouville checks, optionally below an energy."""
    return sample_points(model, count, seed, max_energy)
