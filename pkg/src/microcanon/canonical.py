"""Canonical partition function Z(beta) by two independent routes.

* :func:`partition_laplace` integrates a tabulated Omega against
  ``exp(-beta E)`` with the trapezoid rule.
* :func:`partition_direct` averages ``exp(-beta H)`` over uniform box samples.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import BoundaryMassWarning, NumericDomainError, RangeTooSmallError, UsageError
from .microcanonical import DosTable, fd_matrix, linear_functional_se
from .models import ModelSpec, compose
from .report import CheckReport
from .sampling import STREAM_DIRECT, SampleConfig, reduce_box

TAIL_TOL = 1e-4
BOUNDARY_LAYER = 0.01


@dataclass(frozen=True)
class LaplaceZ:
    value: float
    se: float
    quad_bound: float
    tail_bound: float


def _check_beta(beta) -> float:
    beta = float(beta)
    if not (beta > 0 and math.isfinite(beta)):
        raise UsageError(f"beta must be positive and finite, got {beta}")
    return beta


def _trapezoid_weights(E: np.ndarray) -> np.ndarray:
    d = np.diff(E)
    w = np.zeros(E.size)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def _tail(E: np.ndarray, f: np.ndarray) -> float:
    """Integral beyond E[-1] of an exponential fitted to the last decade of f."""
    k = max(3, E.size // 10)
    e, y = E[-k:], f[-k:]
    pos = y > 0
    if not np.any(pos):
        return 0.0
    if np.count_nonzero(pos) < 2:
        return math.inf
    slope, intercept = np.polyfit(e[pos], np.log(y[pos]), 1)
    if slope >= 0:
        return math.inf
    return float(math.exp(intercept + slope * E[-1]) / -slope)


def partition_laplace(dos: DosTable, beta, tail_tol: float = TAIL_TOL) -> LaplaceZ:
    """``Z(beta) = int_0^inf Omega(E) exp(-beta E) dE`` from a DoS table.

    The table's Omega already carries its Gibbs prefactor. The part of the
    integral below the first grid point is bracketed using ``g(E_0)``; the
    part above the last is estimated by exponential extrapolation and must
    stay below ``tail_tol`` relative to Z.
    """
    beta = _check_beta(beta)
    if dos.omega is None:
        raise UsageError("partition_laplace needs a table with omega filled (see omega_from_dos)")
    E, omega, g = dos.energies, dos.omega, dos.g
    if E.size < 2:
        raise UsageError("partition_laplace needs at least two grid points")
    bad = ~np.isfinite(omega)
    if np.any(bad[1:]):
        k = int(np.argmax(bad[1:])) + 1
        raise NumericDomainError(f"Omega is not finite at E={E[k]:g}; the grid touches a critical value")
    boltz = np.exp(-beta * E)
    # an integrable singularity at the lowest node: integrate the first
    # interval through g instead of the trapezoid rule
    head_start = 0
    if bad[0]:
        head_start = 1
        E, omega, boltz = E[1:], omega[1:], boltz[1:]
    omega = np.clip(omega, 0.0, None)
    f = omega * boltz
    w = _trapezoid_weights(E)
    body = float(w @ f)

    # coarse rule on every other point over the longest even-length prefix;
    # the full fine-coarse difference (three times the Richardson estimate)
    # is used so higher-order terms stay covered
    last = E.size - 1 if (E.size - 1) % 2 == 0 else E.size - 2
    quad = 0.0
    if last >= 2:
        fine = float(_trapezoid_weights(E[: last + 1]) @ f[: last + 1])
        coarse = float(_trapezoid_weights(E[: last + 1 : 2]) @ f[: last + 1 : 2])
        quad = abs(fine - coarse)
    # Stieltjes sum over g increments; it sees the finite-difference bias at
    # non-smooth band edges that Richardson misses
    gb = g[head_start:]
    stieltjes = float(np.diff(gb) @ (0.5 * (boltz[1:] + boltz[:-1])))
    quad = max(quad, abs(body - stieltjes))

    # below the first trapezoid node: g(E_0) of mass with boltz in [e^{-beta E_0}, 1]
    e_first = float(dos.energies[0])
    g0 = float(g[0])
    head = 0.5 * g0 * (1.0 + math.exp(-beta * e_first))
    quad += 0.5 * g0 * (1.0 - math.exp(-beta * e_first))
    if head_start:
        b0 = math.exp(-beta * e_first)
        dg = float(g[1] - g[0])
        head += 0.5 * dg * (b0 + boltz[0])
        quad += 0.5 * dg * (b0 - boltz[0])
    value = body + head
    if value == 0.0:
        return LaplaceZ(0.0, 0.0, 0.0, 0.0)

    tail = _tail(E, f)
    if not tail <= tail_tol * value:
        raise RangeTooSmallError(
            f"integrand tail beyond E_max={E[-1]:g} is {tail:.3g} (relative {tail / value:.2g} > "
            f"{tail_tol:g}) at beta={beta:g}; extend the energy grid"
        )

    se = 0.0
    if dos.has_counts and not head_start:
        D = dos.fd_matrix if dos.fd_matrix is not None else fd_matrix(E)
        coeffs = (w * boltz) @ D
        coeffs[0] += 0.5 * (1.0 + math.exp(-beta * E[0]))
        se = linear_functional_se(dos, coeffs)
    return LaplaceZ(float(value), float(se), float(quad), float(tail))


@dataclass(frozen=True)
class DirectZ:
    value: float
    se: float
    boundary_fraction: float


def partition_direct(model: ModelSpec, beta, cfg: SampleConfig = SampleConfig(),
                     tail_tol: float = TAIL_TOL, stream=STREAM_DIRECT) -> DirectZ:
    """``Z(beta) = int exp(-beta H) d lambda`` by uniform sampling of the box.

    Warns when more than ``tail_tol`` of the Boltzmann weight falls in the
    outer 1% layer of the box, since the truncated mass beyond it is then
    probably not negligible either.
    """
    beta = _check_beta(beta)
    lo, hi = np.asarray(model.box.lower), np.asarray(model.box.upper)
    layer = BOUNDARY_LAYER * model.box.widths
    e0 = model.min_energy

    def per_chunk(x, h):
        f = np.exp(-beta * (h - e0))
        near = np.any((x - lo < layer) | (hi - x < layer), axis=1)
        return float(f.sum()), float((f * f).sum()), float(f[near].sum())

    s1 = s2 = sb = 0.0
    for a, b, c in reduce_box(model, cfg, per_chunk, stream=stream):
        s1 += a
        s2 += b
        sb += c
    N = cfg.count
    scale = model.box.volume * model.gibbs_prefactor * math.exp(-beta * e0)
    mean = s1 / N
    var = max(s2 / N - mean * mean, 0.0) * N / max(N - 1, 1)
    frac = sb / s1 if s1 > 0 else 0.0
    if frac > tail_tol:
        warnings.warn(
            f"{model.name}: {frac:.2g} of exp(-beta H) mass at beta={beta:g} lies in the outer "
            "box layer; enlarge the box",
            BoundaryMassWarning,
            stacklevel=2,
        )
    return DirectZ(scale * mean, scale * math.sqrt(var / N), frac)


def check_multiplicativity(m1: ModelSpec, m2: ModelSpec, beta,
                           cfg: SampleConfig = SampleConfig()) -> CheckReport:
    """Compare ``Z_12`` of the composite system with ``Z_1 * Z_2``.

    The three estimates use independent substreams of the same seed.
    """
    joint = compose(m1, m2)
    z12 = partition_direct(joint, beta, cfg, stream=(STREAM_DIRECT, 12))
    z1 = partition_direct(m1, beta, cfg, stream=(STREAM_DIRECT, 1))
    z2 = partition_direct(m2, beta, cfg, stream=(STREAM_DIRECT, 2))
    ratio = z12.value / (z1.value * z2.value)
    sigma = math.sqrt(sum((z.se / z.value) ** 2 for z in (z12, z1, z2)))
    report = CheckReport("multiplicativity", joint.name, {"beta": float(beta), "count": cfg.count},
                         cfg.seed)
    report.add("Z_joint", value=z12.value, se=z12.se)
    report.add("Z_first", value=z1.value, se=z1.se)
    report.add("Z_second", value=z2.value, se=z2.se)
    report.add("ratio", value=ratio, sigma_rel=sigma, tolerance=3 * sigma)
    report.passed = abs(ratio - 1.0) <= 3.0 * sigma
    return report
