"""Symplectic integration of Hamilton's equations.

Trajectories are advanced in batches: every function that takes a phase
point also accepts an array of shape ``(N, 2n)`` and evolves all rows with
the same step sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import FlowBlowUpError, IntegratorError, UsageError
from .models import ModelSpec, PhasePoint, _as_points

SCHEMES = ("leapfrog", "implicit_midpoint")


@dataclass(frozen=True)
class FlowConfig:
    step: float = 1e-3
    t_final: float = 1.0
    scheme: str = "leapfrog"
    divergence_guard: Optional[float] = None
    max_newton_iters: int = 50
    newton_tol: float = 1e-13
    guard_every: int = 16

    def __post_init__(self):
        if not (self.step > 0 and math.isfinite(self.step)):
            raise UsageError(f"flow step must be positive, got {self.step}")
        if not math.isfinite(self.t_final):
            raise UsageError(f"t_final must be finite, got {self.t_final}")
        if self.scheme not in SCHEMES:
            raise UsageError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.divergence_guard is not None and not self.divergence_guard > 0:
            raise UsageError(f"divergence_guard must be positive, got {self.divergence_guard}")
        if self.max_newton_iters < 1:
            raise UsageError("max_newton_iters must be >= 1")

    def with_time(self, t: float) -> "FlowConfig":
        return FlowConfig(self.step, t, self.scheme, self.divergence_guard,
                          self.max_newton_iters, self.newton_tol, self.guard_every)

    def guard_radius(self, model: ModelSpec) -> float:
        # default: 100 box diagonals
        if self.divergence_guard is not None:
            return self.divergence_guard
        return 100.0 * model.box.diagonal


def _step_schedule(cfg: FlowConfig) -> tuple[int, float]:
    """Number of steps and signed step length landing exactly on t_final."""
    t = cfg.t_final
    if t == 0.0:
        return 0, 0.0
    k = max(1, int(round(abs(t) / cfg.step)))
    return k, t / k


def _leapfrog_step(model: ModelSpec, q, p, h):
    p = p - 0.5 * h * model.grad_q_fn(q, p)
    q = q + h * model.grad_p_fn(q, p)
    p = p - 0.5 * h * model.grad_q_fn(q, p)
    return q, p


def _hessian_fd(model: ModelSpec, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    d = x.shape[-1]
    hess = np.empty(x.shape[:-1] + (d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = eps
        hess[..., :, j] = (model.gradient(x + e) - model.gradient(x - e)) / (2.0 * eps)
    return 0.5 * (hess + np.swapaxes(hess, -1, -2))


def _symplectic_apply(v: np.ndarray, n: int) -> np.ndarray:
    # J v with J = [[0, I], [-I, 0]]
    return np.concatenate([v[..., n:], -v[..., :n]], axis=-1)


def _midpoint_step(model: ModelSpec, x: np.ndarray, h, cfg: FlowConfig) -> np.ndarray:
    n = model.n
    d = 2 * n
    J = np.block([[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]])
    # explicit Euler predictor
    y = x + h * _symplectic_apply(model.gradient(x), n)
    for _ in range(cfg.max_newton_iters):
        mid = 0.5 * (x + y)
        resid = y - x - h * _symplectic_apply(model.gradient(mid), n)
        jac = np.eye(d) - 0.5 * h * (J @ _hessian_fd(model, mid))
        delta = np.linalg.solve(jac, resid[..., None])[..., 0]
        y = y - delta
        if np.all(np.abs(delta) <= cfg.newton_tol * (1.0 + np.abs(y))):
            return y
    raise IntegratorError(
        f"implicit midpoint: Newton did not converge in {cfg.max_newton_iters} iterations (h={h})"
    )


def _check_guard(x: np.ndarray, radius: float, t: float):
    norms = np.linalg.norm(x, axis=-1)
    bad = ~(norms <= radius)
    if np.any(bad):
        idx = int(np.argmax(bad))
        raise FlowBlowUpError(
            f"trajectory {idx} exceeded divergence guard {radius:g} by t={t:g}", time=t, index=idx
        )


def evolve(model: ModelSpec, x0: np.ndarray, cfg: FlowConfig, on_step=None,
           callback_every: int = 1) -> np.ndarray:
    """Advance an ``(N, 2n)`` array of states to ``cfg.t_final``.

    ``on_step(k, t, x)`` is called with ``k=0`` before the first step, after
    every ``callback_every``-th step, and after the last step.
    """
    x = np.array(x0, dtype=float, copy=True)
    if not np.all(np.isfinite(x)):
        raise UsageError("initial state has non-finite entries")
    if cfg.scheme == "leapfrog" and not model.separable:
        raise UsageError(f"leapfrog requires a separable Hamiltonian; {model.name!r} is not")
    k_steps, h = _step_schedule(cfg)
    radius = cfg.guard_radius(model)
    n = model.n
    if on_step is not None:
        on_step(0, 0.0, x)
    if k_steps == 0:
        return x
    q, p = x[..., :n].copy(), x[..., n:].copy()
    for k in range(1, k_steps + 1):
        last = k == k_steps
        notify = on_step is not None and (k % callback_every == 0 or last)
        guard = k % cfg.guard_every == 0 or last
        if cfg.scheme == "leapfrog":
            q, p = _leapfrog_step(model, q, p, h)
            if notify or guard:
                x = np.concatenate([q, p], axis=-1)
        else:
            x = _midpoint_step(model, np.concatenate([q, p], axis=-1), h, cfg)
            q, p = x[..., :n], x[..., n:]
        if guard:
            _check_guard(x, radius, k * h)
        if notify:
            on_step(k, k * h, x)
    return x


def integrate(model: ModelSpec, x0, cfg: FlowConfig):
    """Approximate ``Phi_t(x0)`` for ``t = cfg.t_final``.

    Returns a :class:`PhasePoint` when given one, otherwise an array of the
    input's shape.
    """
    arr = _as_points(model, x0)
    out = evolve(model, arr, cfg)
    if isinstance(x0, PhasePoint):
        return PhasePoint.from_array(out)
    return out


def flow_jacobian(model: ModelSpec, x0, cfg: FlowConfig, fd_step: float = 1e-5) -> np.ndarray:
    """Central finite-difference Jacobian of ``x0 -> Phi_t(x0)``.

    Accepts one point (returns ``(2n, 2n)``) or a batch (``(N, 2n, 2n)``).
    """
    if not fd_step > 0:
        raise UsageError(f"fd_step must be positive, got {fd_step}")
    arr = _as_points(model, x0)
    single = arr.ndim == 1
    pts = np.atleast_2d(arr)
    d = model.dim
    eye = np.eye(d) * fd_step
    # rows: point i, direction j, sign (+, -)
    shifted = pts[:, None, None, :] + np.stack([eye, -eye], axis=1)[None, :, :, :]
    out = evolve(model, shifted.reshape(-1, d), cfg).reshape(pts.shape[0], d, 2, d)
    jac = np.swapaxes((out[:, :, 0, :] - out[:, :, 1, :]) / (2.0 * fd_step), 1, 2)
    return jac[0] if single else jac


def flow_jacobian_det(model: ModelSpec, x0, cfg: FlowConfig, fd_step: float = 1e-5):
    det = np.linalg.det(flow_jacobian(model, x0, cfg, fd_step))
    return float(det) if np.ndim(det) == 0 else det


def energy_drift(model: ModelSpec, x0, cfg: FlowConfig, every: int = 1):
    """Max over recorded steps of ``|H(x_t) - H(x0)|``.

    For a batch the maximum is taken over all trajectories as well. States
    are recorded every ``every`` steps plus the final one.
    """
    arr = _as_points(model, x0)
    h0 = model.energy(arr)
    worst = [0.0]

    def record(k, t, x):
        worst[0] = max(worst[0], float(np.max(np.abs(model.energy(x) - h0))))

    evolve(model, arr, cfg, on_step=record, callback_every=every)
    return worst[0]
