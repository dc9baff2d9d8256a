"""Entropy, grid Legendre transforms, free energies and Laplace approximations.

All extrema are taken over grid nodes and then refined with a parabola
through the winning node and its two neighbours.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import gammaln

from .errors import InvertibilityError, MicrocanonWarning, NumericDomainError, UsageError
from .microcanonical import DosTable

CONCAVITIES = ("concave", "convex", "unknown")


@dataclass
class TabulatedFunction:
    """Values of a one-variable function on a strictly increasing grid."""

    xs: np.ndarray
    ys: np.ndarray
    concavity: str = "unknown"
    tol: float = 1e-9

    def __post_init__(self):
        self.xs = np.asarray(self.xs, dtype=float)
        self.ys = np.asarray(self.ys, dtype=float)
        if self.xs.shape != self.ys.shape or self.xs.ndim != 1 or self.xs.size == 0:
            raise UsageError("xs and ys must be equal-length non-empty 1-d arrays")
        if np.any(np.diff(self.xs) <= 0):
            raise UsageError("xs must be strictly increasing")
        if not np.all(np.isfinite(self.ys)):
            raise UsageError("tabulated values must be finite")
        if self.concavity not in CONCAVITIES:
            raise UsageError(f"concavity must be one of {CONCAVITIES}, got {self.concavity!r}")
        if self.concavity != "unknown" and not self._shape_ok(self.concavity):
            raise UsageError(f"tabulated function is not {self.concavity} within tolerance {self.tol:g}")

    def slopes(self) -> np.ndarray:
        return np.diff(self.ys) / np.diff(self.xs)

    def _shape_ok(self, kind: str) -> bool:
        s = self.slopes()
        if s.size < 2:
            return True
        jump = np.diff(s)
        scale = self.tol * (1.0 + np.abs(s[1:]) + np.abs(s[:-1]))
        return bool(np.all(jump <= scale)) if kind == "concave" else bool(np.all(jump >= -scale))

    def detect_concavity(self) -> str:
        for kind in ("concave", "convex"):
            if self._shape_ok(kind):
                return kind
        return "unknown"

    def strictly_increasing(self) -> bool:
        return bool(np.all(np.diff(self.ys) > 0))

    def inverse(self) -> "TabulatedFunction":
        """Swap axes of a strictly increasing function.

        Concave increasing functions have convex inverses and vice versa.
        """
        if not self.strictly_increasing():
            raise InvertibilityError("function is not strictly increasing on its grid; no inverse")
        flipped = {"concave": "convex", "convex": "concave"}.get(self.concavity, "unknown")
        return TabulatedFunction(self.ys, self.xs, flipped, self.tol)

    def compose_scale(self, a: float) -> "TabulatedFunction":
        """The function ``x -> f(a x)`` tabulated on ``xs / a``."""
        if not a > 0:
            raise UsageError(f"scale factor must be positive, got {a}")
        return TabulatedFunction(self.xs / a, self.ys, self.concavity, self.tol)


@dataclass(frozen=True)
class LegendreValue:
    value: float
    argopt: float
    at_boundary: bool
    degenerate: bool

    def __float__(self):
        return self.value


def _refine(x: np.ndarray, y: np.ndarray, k: int, maximize: bool):
    """Parabolic vertex through nodes k-1, k, k+1; falls back to the node."""
    if k == 0 or k == x.size - 1:
        return float(y[k]), float(x[k])
    x0, x1, x2 = x[k - 1], x[k], x[k + 1]
    y0, y1, y2 = y[k - 1], y[k], y[k + 1]
    d01, d12 = (y1 - y0) / (x1 - x0), (y2 - y1) / (x2 - x1)
    curv = (d12 - d01) / (x2 - x0)
    if curv == 0 or (maximize and curv > 0) or (not maximize and curv < 0):
        return float(y1), float(x1)
    # y = y1 + b (x - x1) + curv (x - x1)^2 with b the slope at x1
    b = d01 + curv * (x1 - x0)
    shift = -b / (2.0 * curv)
    shift = min(max(shift, x0 - x1), x2 - x1)
    return float(y1 + b * shift + curv * shift * shift), float(x1 + shift)


def grid_extremum(x: np.ndarray, y: np.ndarray, maximize: bool = True):
    """Refined extremum of tabulated ``y``: (value, location, at_boundary)."""
    k = int(np.argmax(y) if maximize else np.argmin(y))
    val, loc = _refine(x, y, k, maximize)
    return val, loc, k in (0, x.size - 1)


def legendre(f: TabulatedFunction, p: float, degenerate_tol: float = 1e-12) -> LegendreValue:
    """``sup_x f(x) - p x`` for concave ``f``, ``inf`` for convex ``f``.

    ``at_boundary`` marks extrema attained at a grid end (``p`` is probably
    outside the dual domain); ``degenerate`` marks objectives that are flat
    over the whole grid.
    """
    if f.concavity == "unknown":
        raise UsageError("legendre needs a function declared concave or convex")
    obj = f.ys - p * f.xs
    maximize = f.concavity == "concave"
    val, loc, edge = grid_extremum(f.xs, obj, maximize)
    spread = float(obj.max() - obj.min())
    degenerate = spread <= degenerate_tol * (1.0 + abs(val))
    return LegendreValue(val, loc, edge and not degenerate, degenerate)


def entropy(dos: DosTable, kB: float = 1.0, tol: float = 1e-9) -> TabulatedFunction:
    """Boltzmann entropy ``S = kB ln Omega`` on the grid points with Omega > 0.

    The resulting function's concavity is detected, not assumed. A constant
    entropy cannot satisfy ``dS/dE = 1/T`` and is reported as non-invertible
    via :meth:`TabulatedFunction.strictly_increasing`.
    """
    if dos.omega is None:
        raise UsageError("entropy needs a table with omega filled")
    pos = dos.omega > 0
    if not np.any(pos):
        raise NumericDomainError("Omega vanishes on the whole grid; entropy undefined")
    if not np.all(pos):
        warnings.warn(f"dropping {np.count_nonzero(~pos)} grid points with Omega <= 0 from the entropy",
                      MicrocanonWarning, stacklevel=2)
    S = TabulatedFunction(dos.energies[pos], kB * np.log(dos.omega[pos]), "unknown", tol)
    S.concavity = S.detect_concavity()
    return S


def _beta(T: float, kB: float) -> float:
    if not (T > 0 and kB > 0):
        raise UsageError(f"temperature and kB must be positive, got T={T}, kB={kB}")
    return 1.0 / (kB * T)


@dataclass(frozen=True)
class FreeEnergy:
    value: float
    energy: float
    at_boundary: bool


def free_energy_exact(dos: DosTable, T: float, kB: float = 1.0) -> FreeEnergy:
    """``F = -kB T ln sup_E Omega(E) exp(-E / (kB T))`` (maximised in log space)."""
    beta = _beta(T, kB)
    if dos.omega is None:
        raise UsageError("free_energy_exact needs a table with omega filled")
    pos = dos.omega > 0
    if not np.any(pos):
        raise NumericDomainError("Omega vanishes on the whole grid")
    E = dos.energies[pos]
    log_obj = np.log(dos.omega[pos]) - beta * E
    val, loc, edge = grid_extremum(E, log_obj, maximize=True)
    return FreeEnergy(-kB * T * val, loc, edge)


def free_energy_legendre(dos: DosTable, T: float, kB: float = 1.0) -> FreeEnergy:
    """Free energy through the internal energy: ``F = inf_S U(S) - T S``.

    ``U`` is the grid inverse of ``S = kB ln Omega``; it must be strictly
    increasing for the inverse to exist.
    """
    _beta(T, kB)
    S = entropy(dos, kB)
    if not S.strictly_increasing():
        raise InvertibilityError("entropy is not strictly increasing on the grid; U(S) does not exist")
    U = S.inverse()
    if U.concavity == "unknown":
        U.concavity = "convex"
    res = legendre(U, T)
    # argopt is the entropy at the optimum; report the matching energy
    energy = float(np.interp(res.argopt, U.xs, U.ys))
    return FreeEnergy(res.value, energy, res.at_boundary)


@dataclass(frozen=True)
class LaplaceApprox:
    order: int
    E0: float
    value: float
    sup: float
    # stored as a positive number; the textbook I_n carries a leading minus
    convention: str = field(default="positive: I0 = sup, I1 = sup / beta")


def laplace_approx(dos: DosTable, beta: float, n: int = 1) -> LaplaceApprox:
    """Order-0 or order-1 Laplace approximation of ``int Omega exp(-beta E)``.

    With phase ``-E`` the first derivative is ``-1`` everywhere, so
    ``I1 = sup_E Omega(E) exp(-beta E) / beta``.
    """
    if n not in (0, 1):
        raise UsageError(f"only Laplace orders 0 and 1 are implemented, got {n}")
    if not beta > 0:
        raise UsageError(f"beta must be positive, got {beta}")
    free = free_energy_exact(dos, 1.0 / beta, 1.0)
    sup = math.exp(-beta * free.value)
    value = sup if n == 0 else sup / beta
    return LaplaceApprox(n, free.energy, value, sup)


def harmonic_log_sup(n: int, beta: float) -> float:
    """``ln sup_E Omega(E) exp(-beta E)`` for ``Omega = (2 pi)^n E^(n-1) / (n-1)!``."""
    if n == 1:
        return math.log(2.0 * math.pi)
    e0 = (n - 1) / beta
    return n * math.log(2.0 * math.pi) - gammaln(n) + (n - 1) * math.log(e0) - beta * e0


def stirling_factor(n: int) -> float:
    """Exact ``Z / I1`` for ``n`` unit oscillators: ``(n-1)! e^(n-1) / (n-1)^(n-1)``."""
    if n == 1:
        return 1.0
    k = n - 1
    return math.exp(gammaln(n) + k - k * math.log(k))


@dataclass
class ThermoLimitReport:
    ns: list
    T: float
    kB: float
    deltas: list
    eventually_decreasing: bool
    ratio_64_2: Optional[float]
    passed: bool

    def to_dict(self) -> dict:
        return {
            "ns": self.ns,
            "T": self.T,
            "kB": self.kB,
            "deltas": self.deltas,
            "eventually_decreasing": self.eventually_decreasing,
            "delta64_over_delta2": self.ratio_64_2,
            "pass": self.passed,
        }


def thermo_limit_report(n_list: Sequence[int], T: float, kB: float = 1.0) -> ThermoLimitReport:
    """Per-degree-of-freedom gap between the exact F and ``-kB T ln Z``.

    Uses the closed forms for ``n`` unit oscillators. "Eventually
    decreasing" means strictly decreasing over the last third of the sorted
    ``n_list`` (at least its final two entries).
    """
    ns = sorted(int(n) for n in n_list)
    if not ns or ns[0] < 1:
        raise UsageError("n_list must contain degrees of freedom >= 1")
    beta = _beta(T, kB)
    deltas = []
    for n in ns:
        f_exact = -kB * T * harmonic_log_sup(n, beta)
        f_canon = -kB * T * n * math.log(2.0 * math.pi / beta)
        deltas.append(float(abs(f_exact - f_canon) / n))
    tail = deltas[-max(2, len(deltas) // 3):]
    eventually = len(tail) >= 2 and all(b < a for a, b in zip(tail, tail[1:]))
    ratio = None
    if 2 in ns and 64 in ns:
        ratio = deltas[ns.index(64)] / deltas[ns.index(2)]
    passed = eventually and (ratio is None or ratio < 0.25)
    return ThermoLimitReport(ns, T, kB, deltas, eventually, ratio, passed)
