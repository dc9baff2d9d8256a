"""State density g(E), microcanonical partition function Omega(E), averages.

``g`` comes from one shared stream of uniform box samples: ``g(E_k)`` is
the box volume times the fraction of samples with ``H <= E_k``. Every
finite-difference quantity built from ``g`` is therefore a linear
functional of that empirical CDF, and its standard error is computed
exactly from the per-bin counts (:func:`linear_functional_se`).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import UndersamplingWarning, UsageError
from .models import ModelSpec
from .sampling import (
    STREAM_BOX,
    STREAM_SHELL,
    SampleConfig,
    ShellEnsemble,
    box_chunk,
    min_grad_on_shell,
    reduce_box,
    shell_ensemble,
    GRAD_FLOOR,
)

SQRT_2PI = math.sqrt(2.0 * math.pi)
CRITICAL_STARTS = 3


class Estimate(NamedTuple):
    value: float
    se: float


@dataclass
class DosTable:
    """Tabulated g and Omega on a strictly increasing energy grid.

    ``omega`` is the finite-difference estimate (filled by
    :func:`omega_from_dos`); ``omega_kde`` the kernel estimate when the table
    came from sampling. ``bin_counts[b]`` counts samples in
    ``(E_{b-1}, E_b]`` with ``b = 0`` meaning ``H <= E_0`` and ``b = m``
    meaning ``H > E_{m-1}``.
    """

    energies: np.ndarray
    g: np.ndarray
    se_g: np.ndarray
    omega: Optional[np.ndarray] = None
    se_omega: Optional[np.ndarray] = None
    omega_kde: Optional[np.ndarray] = None
    se_kde: Optional[np.ndarray] = None
    critical_flag: Optional[np.ndarray] = None
    source: str = "monte_carlo"
    bin_counts: Optional[np.ndarray] = None
    n_samples: int = 0
    box_volume: float = math.nan
    gibbs_prefactor: float = 1.0
    bandwidth: float = math.nan
    model_name: str = ""
    seed: Optional[int] = None
    fd_matrix: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.energies = np.asarray(self.energies, dtype=float)
        if self.energies.ndim != 1 or self.energies.size == 0:
            raise UsageError("energy grid must be a non-empty 1-d sequence")
        if np.any(np.diff(self.energies) <= 0):
            raise UsageError("energy grid must be strictly increasing")
        if self.critical_flag is None:
            self.critical_flag = np.zeros(self.energies.size, dtype=bool)

    @property
    def m(self) -> int:
        return self.energies.size

    @property
    def spacing(self) -> Optional[float]:
        """Common grid spacing, or None if the grid is not uniform."""
        if self.m < 2:
            return None
        d = np.diff(self.energies)
        return float(d.mean()) if np.allclose(d, d[0], rtol=1e-9, atol=1e-12) else None

    @property
    def has_counts(self) -> bool:
        return self.bin_counts is not None and self.n_samples > 0

    def csv_rows(self):
        kde = self.omega_kde if self.omega_kde is not None else np.full(self.m, math.nan)
        se_kde = self.se_kde if self.se_kde is not None else np.full(self.m, math.nan)
        omega = self.omega if self.omega is not None else np.full(self.m, math.nan)
        se_omega = self.se_omega if self.se_omega is not None else np.full(self.m, math.nan)
        for k in range(self.m):
            yield (self.energies[k], self.g[k], self.se_g[k], omega[k], kde[k], se_omega[k],
                   int(self.critical_flag[k]), se_kde[k])


CSV_COLUMNS = ("E", "g", "se_g", "omega_fd", "omega_kde", "se_omega", "critical_flag", "se_kde")


def energy_grid(e_min: float, e_max: float, count: int = 64) -> np.ndarray:
    if count < 1 or not e_max > e_min:
        raise UsageError(f"invalid energy grid: [{e_min}, {e_max}] with {count} points")
    return np.linspace(e_min, e_max, int(count))


def _silverman(h: np.ndarray, n_total: int) -> float:
    sigma = float(np.std(h, ddof=1))
    q75, q25 = np.percentile(h, [75, 25])
    spread = min(sigma, (q75 - q25) / 1.34) if q75 > q25 else sigma
    return 0.9 * spread * n_total ** (-0.2)


def _window_edges(E: np.ndarray) -> np.ndarray:
    if E.size == 1:
        return np.array([E[0] - 0.005, E[0] + 0.005])
    mid = 0.5 * (E[1:] + E[:-1])
    return np.concatenate([[E[0] - (mid[0] - E[0])], mid, [E[-1] + (E[-1] - mid[-1])]])


def _lowest_per_window(w: np.ndarray, grad: np.ndarray, x: np.ndarray, k: int):
    order = np.lexsort((grad, w))
    w, grad, x = w[order], grad[order], x[order]
    _, first = np.unique(w, return_index=True)
    starts = np.repeat(first, np.diff(np.append(first, w.size)))
    keep = np.arange(w.size) - starts < k
    return w[keep], grad[keep], x[keep]


def density_of_states(model: ModelSpec, grid, cfg: SampleConfig = SampleConfig(),
                      kde: bool = True, flag_critical: bool = True,
                      grad_floor: float = GRAD_FLOOR, stream=STREAM_BOX) -> DosTable:
    """Monte Carlo ``g(E_k) = lambda(H <= E_k)`` from a single box stream.

    Also accumulates the Gaussian kernel estimate of Omega (Silverman
    bandwidth from the first chunk) and, per grid point, the lowest-gradient
    samples used to flag energies near a critical value.
    """
    E = np.asarray(grid, dtype=float)
    if E.ndim != 1 or E.size == 0:
        raise UsageError("density_of_states needs a non-empty energy grid")
    if np.any(np.diff(E) <= 0):
        raise UsageError("energy grid must be strictly increasing")
    m = E.size
    N = cfg.count
    pilot = model.energy(box_chunk(model, cfg.seed, stream, 0, min(N, 1 << 16)))
    bw = _silverman(pilot, N) if (kde and pilot.size > 1) else math.nan
    if kde and not bw > 0:
        bw = max(1e-3 * (E[-1] - E[0]), 1e-12)
    edges = _window_edges(E)
    lo_kde, hi_kde = E[0] - 8 * bw, E[-1] + 8 * bw

    def per_chunk(x, h):
        counts = np.bincount(np.searchsorted(E, h, side="left"), minlength=m + 1)
        ks = ks2 = None
        if kde:
            hh = np.sort(h[(h >= lo_kde) & (h <= hi_kde)])
            left = np.searchsorted(hh, E - 8 * bw)
            right = np.searchsorted(hh, E + 8 * bw)
            ks, ks2 = np.zeros(m), np.zeros(m)
            for k in range(m):
                z = (E[k] - hh[left[k]:right[k]]) / bw
                phi = np.exp(-0.5 * z * z) / (SQRT_2PI * bw)
                ks[k], ks2[k] = phi.sum(), (phi * phi).sum()
        crit = None
        if flag_critical:
            w = np.searchsorted(edges, h, side="right") - 1
            inside = (w >= 0) & (w < m)
            xi = x[inside]
            gn = np.linalg.norm(model.gradient(xi), axis=1)
            crit = _lowest_per_window(w[inside], gn, xi, CRITICAL_STARTS)
        return counts, ks, ks2, crit

    parts = reduce_box(model, cfg, per_chunk, stream)
    counts = np.zeros(m + 1, dtype=np.int64)
    ksum = np.zeros(m)
    ksum2 = np.zeros(m)
    for c, ks, ks2, _ in parts:
        counts += c
        if kde:
            ksum += ks
            ksum2 += ks2
    scale = model.box.volume * model.gibbs_prefactor
    frac = np.cumsum(counts[:m]) / N
    g = scale * frac
    se_g = scale * np.sqrt(frac * (1.0 - frac) / N)

    omega_kde = se_kde = None
    if kde:
        mean_k = ksum / N
        var_k = np.maximum(ksum2 / N - mean_k**2, 0.0)
        omega_kde = scale * mean_k
        se_kde = scale * np.sqrt(var_k / N)

    flags = np.zeros(m, dtype=bool)
    if flag_critical:
        w = np.concatenate([p[3][0] for p in parts])
        gn = np.concatenate([p[3][1] for p in parts])
        xs = np.concatenate([p[3][2] for p in parts])
        if w.size:
            w, gn, xs = _lowest_per_window(w, gn, xs, CRITICAL_STARTS)
        for k in range(m):
            sel = w == k
            if not np.any(sel):
                continue
            half = 0.5 * (edges[k + 1] - edges[k])
            flags[k] = min_grad_on_shell(model, E[k], half, xs[sel]) < grad_floor

    return DosTable(
        energies=E,
        g=g,
        se_g=se_g,
        omega_kde=omega_kde,
        se_kde=se_kde,
        critical_flag=flags,
        source="monte_carlo",
        bin_counts=counts,
        n_samples=N,
        box_volume=model.box.volume,
        gibbs_prefactor=model.gibbs_prefactor,
        bandwidth=bw,
        model_name=model.name,
        seed=cfg.seed,
    )


def fd_matrix(energies: np.ndarray) -> np.ndarray:
    """Matrix ``D`` with ``D @ g`` = d g / d E (central, second-order ends)."""
    m = energies.size
    if m < 3:
        raise UsageError(f"finite differences need at least 3 grid points, got {m}")
    return np.gradient(np.eye(m), energies, axis=0, edge_order=2)


def linear_functional_se(table: DosTable, coeffs: np.ndarray) -> float:
    """Standard error of ``sum_k coeffs[k] * g_hat(E_k)`` for a sampled table."""
    if not table.has_counts:
        return 0.0
    coeffs = np.asarray(coeffs, dtype=float)
    # value of the per-sample kernel on each bin: sum of coefficients of all E_k >= H
    kernel = np.append(np.cumsum(coeffs[::-1])[::-1], 0.0)
    p = table.bin_counts / table.n_samples
    mean = float(p @ kernel)
    var = max(float(p @ kernel**2) - mean * mean, 0.0)
    scale = table.box_volume * table.gibbs_prefactor
    return scale * math.sqrt(var / table.n_samples)


def omega_from_dos(table: DosTable) -> DosTable:
    """Fill ``omega`` with ``dg/dE`` by finite differences on the grid."""
    E = table.energies
    D = fd_matrix(E)
    omega = D @ table.g
    if table.has_counts:
        se = np.array([linear_functional_se(table, D[k]) for k in range(table.m)])
    else:
        se = np.zeros(table.m)
    if table.source != "analytic":
        dg = np.diff(table.g)
        noise = 3.0 * np.hypot(table.se_g[1:], table.se_g[:-1])
        if np.any(dg < -noise - 1e-12 * np.abs(table.g[1:])):
            warnings.warn("g decreases by more than its noise; the table looks undersampled",
                          UndersamplingWarning, stacklevel=2)
    return replace(table, omega=omega, se_omega=se, fd_matrix=D)


def estimate_dos(model: ModelSpec, grid, cfg: SampleConfig = SampleConfig(), **kwargs) -> DosTable:
    """:func:`density_of_states` followed by :func:`omega_from_dos`."""
    return omega_from_dos(density_of_states(model, grid, cfg, **kwargs))


def analytic_dos(model: ModelSpec, grid) -> DosTable:
    """Exact table from the model's closed-form ``g`` and ``Omega``."""
    oracle = model.oracle
    if oracle.g is None or oracle.omega is None:
        raise UsageError(f"model {model.name!r} has no analytic density of states")
    E = np.asarray(grid, dtype=float)
    zeros = np.zeros(E.size)
    return DosTable(
        energies=E,
        g=model.gibbs_prefactor * np.asarray(oracle.g(E), dtype=float),
        se_g=zeros,
        omega=model.gibbs_prefactor * np.asarray(oracle.omega(E), dtype=float),
        se_omega=zeros.copy(),
        source="analytic",
        gibbs_prefactor=model.gibbs_prefactor,
        model_name=model.name,
    )


def table_from_omega(energies, omega, source: str = "tabulated") -> DosTable:
    """Wrap a user-supplied Omega column; g is its cumulative trapezoid from E_0."""
    E = np.asarray(energies, dtype=float)
    om = np.asarray(omega, dtype=float)
    if om.shape != E.shape:
        raise UsageError("energies and omega must have the same length")
    g = np.concatenate([[0.0], np.cumsum(0.5 * (om[1:] + om[:-1]) * np.diff(E))])
    zeros = np.zeros(E.size)
    return DosTable(energies=E, g=g, se_g=zeros, omega=om, se_omega=zeros.copy(), source=source)


@dataclass
class ShellOmega:
    value: float
    se: float
    critical: bool
    ensemble: ShellEnsemble = field(repr=False)


def omega_shell(model: ModelSpec, E: float, delta: Optional[float] = None,
                cfg: SampleConfig = SampleConfig(), stream=STREAM_SHELL, **kwargs) -> ShellOmega:
    """Omega(E) as shell volume over shell thickness, ``lambda(|H-E|<=delta) / (2 delta)``."""
    ens = shell_ensemble(model, E, delta, cfg, stream=stream, **kwargs)
    scale = model.gibbs_prefactor / (2.0 * ens.delta)
    return ShellOmega(scale * ens.volume, scale * ens.volume_se, ens.critical, ens)


def microcanonical_average(ens: ShellEnsemble, f: Callable[[np.ndarray], np.ndarray]) -> Estimate:
    """Mean of ``f`` under the normalised microcanonical measure at ``ens.E``."""
    if ens.n_accepted == 0:
        raise UsageError("empty shell ensemble")
    vals = np.broadcast_to(np.asarray(f(ens.points), dtype=float), (ens.n_accepted,))
    se = float(np.std(vals, ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else math.nan
    return Estimate(float(np.mean(vals)), se)


def convolve_omega(o1: DosTable, o2: DosTable) -> DosTable:
    """Trapezoidal ``(O1 * O2)(E) = int_0^E O1(e) O2(E - e) de`` on a shared grid.

    Both grids must be uniform with the same spacing and start at 0; the
    result lives on the shorter of the two grids.
    """
    if o1.omega is None or o2.omega is None:
        raise UsageError("convolve_omega needs tables with omega filled")
    h1, h2 = o1.spacing, o2.spacing
    if h1 is None or h2 is None or not math.isclose(h1, h2, rel_tol=1e-9):
        raise UsageError("convolve_omega needs uniform grids with a common spacing")
    if abs(o1.energies[0]) > 1e-12 * h1 or abs(o2.energies[0]) > 1e-12 * h2:
        raise UsageError("convolve_omega needs grids starting at E = 0")
    m = min(o1.m, o2.m)
    a, b = o1.omega[:m], o2.omega[:m]
    sa = o1.se_omega[:m] if o1.se_omega is not None else np.zeros(m)
    sb = o2.se_omega[:m] if o2.se_omega is not None else np.zeros(m)
    out = np.zeros(m)
    var = np.zeros(m)
    for k in range(1, m):
        w = np.full(k + 1, h1)
        w[0] = w[-1] = 0.5 * h1
        rb = b[k::-1]
        out[k] = float(np.sum(w * a[: k + 1] * rb))
        var[k] = float(np.sum((w * rb * sa[: k + 1]) ** 2) + np.sum((w * a[: k + 1] * sb[k::-1]) ** 2))
    E = o1.energies[:m]
    g = np.concatenate([[0.0], np.cumsum(0.5 * (out[1:] + out[:-1]) * np.diff(E))])
    source = "analytic" if o1.source == o2.source == "analytic" else "convolution"
    return DosTable(
        energies=E,
        g=g,
        se_g=np.zeros(m),
        omega=out,
        se_omega=np.sqrt(var),
        source=source,
        gibbs_prefactor=o1.gibbs_prefactor * o2.gibbs_prefactor,
        model_name=f"{o1.model_name}*{o2.model_name}",
    )
