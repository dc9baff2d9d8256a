"""Hamiltonians, phase points and the built-in model family.

Arrays of phase points are laid out as ``(..., 2n)`` with all coordinates
first and all momenta second: ``x = (q_1, ..., q_n, p_1, ..., p_n)``.
Every built-in has minimum energy 0.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy import special

from .errors import NumericDomainError, UsageError

ArrayFn = Callable[..., np.ndarray]


@dataclass(frozen=True)
class PhasePoint:
    q: tuple
    p: tuple

    def __post_init__(self):
        q = tuple(float(v) for v in np.atleast_1d(self.q))
        p = tuple(float(v) for v in np.atleast_1d(self.p))
        if len(q) != len(p) or len(q) < 1:
            raise UsageError(f"q and p must have equal length >= 1, got {len(q)} and {len(p)}")
        if not all(math.isfinite(v) for v in q + p):
            raise UsageError(f"phase point has non-finite entries: q={q}, p={p}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def n(self) -> int:
        return len(self.q)

    def as_array(self) -> np.ndarray:
        return np.array(self.q + self.p, dtype=float)

    @classmethod
    def from_array(cls, x) -> "PhasePoint":
        x = np.asarray(x, dtype=float).ravel()
        if x.size % 2:
            raise UsageError(f"phase-space vector must have even length, got {x.size}")
        n = x.size // 2
        return cls(tuple(x[:n]), tuple(x[n:]))


@dataclass(frozen=True)
class BoundingBox:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi) or len(lo) == 0 or len(lo) % 2:
            raise UsageError("box bounds must be equal-length sequences of even length")
        for i, (a, b) in enumerate(zip(lo, hi)):
            if not (math.isfinite(a) and math.isfinite(b) and a < b):
                raise UsageError(f"box side {i} is invalid: [{a}, {b}]")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def widths(self) -> np.ndarray:
        return np.subtract(self.upper, self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.widths))

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lower) & (x <= self.upper), axis=-1)

    def scale_unit(self, u: np.ndarray) -> np.ndarray:
        """Map points of the unit cube onto the box."""
        return np.asarray(self.lower) + u * self.widths

    @classmethod
    def symmetric(cls, q_half: Sequence[float], p_half: Sequence[float]) -> "BoundingBox":
        half = np.concatenate([np.asarray(q_half, float), np.asarray(p_half, float)])
        return cls(tuple(-half), tuple(half))


@dataclass(frozen=True)
class AnalyticOracle:
    """Closed-form reference data for a model (any field may be missing)."""

    g: Optional[Callable[[np.ndarray], np.ndarray]] = None
    omega: Optional[Callable[[np.ndarray], np.ndarray]] = None
    z: Optional[Callable[[float], float]] = None


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """An autonomous Hamiltonian together with its sampling box.

    ``grad_q_fn(q, p)`` and ``grad_p_fn(q, p)`` return the two halves of the
    gradient. For separable models the first ignores ``p`` and the second
    ignores ``q``, which is what the leapfrog scheme relies on.
    """

    name: str
    n: int
    params: Mapping[str, object]
    box: BoundingBox
    energy_fn: ArrayFn
    grad_q_fn: ArrayFn
    grad_p_fn: ArrayFn
    separable: bool = True
    kB: float = 1.0
    gibbs_prefactor: float = 1.0
    min_energy: float = 0.0
    e_valid: float = math.inf
    oracle: AnalyticOracle = field(default_factory=AnalyticOracle)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise UsageError(f"model {self.name!r} needs n >= 1 degrees of freedom, got {self.n}")
        if self.box.dim != 2 * self.n:
            raise UsageError(f"box has dimension {self.box.dim}, model {self.name!r} needs {2 * self.n}")
        if not (self.gibbs_prefactor > 0 and math.isfinite(self.gibbs_prefactor)):
            raise UsageError(f"gibbs_prefactor must be positive and finite, got {self.gibbs_prefactor}")
        if not (self.kB > 0 and math.isfinite(self.kB)):
            raise UsageError(f"kB must be positive and finite, got {self.kB}")

    @property
    def dim(self) -> int:
        return 2 * self.n

    def split(self, x: np.ndarray):
        return x[..., : self.n], x[..., self.n :]

    def energy(self, x: np.ndarray) -> np.ndarray:
        """Vectorised H over an array of shape ``(..., 2n)``; no validation."""
        q, p = self.split(x)
        return self.energy_fn(q, p)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        q, p = self.split(x)
        return np.concatenate([self.grad_q_fn(q, p), self.grad_p_fn(q, p)], axis=-1)

    def replace(self, **changes) -> "ModelSpec":
        return dataclasses.replace(self, **changes)

    def describe(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "params": {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.params.items()},
            "box_lower": list(self.box.lower),
            "box_upper": list(self.box.upper),
            "kB": self.kB,
            "gibbs_prefactor": self.gibbs_prefactor,
        }


def _as_points(model: ModelSpec, x) -> np.ndarray:
    if isinstance(x, PhasePoint):
        x = x.as_array()
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (model.dim,):
        raise UsageError(f"point has dimension {x.shape[-1:] or 0}, model {model.name!r} needs {model.dim}")
    return x


def evaluate(model: ModelSpec, x):
    """Energy ``H(x)`` for one point (returns a float) or a batch of points."""
    arr = _as_points(model, x)
    with np.errstate(over="ignore", invalid="ignore"):
        h = model.energy(arr)
    bad = ~np.isfinite(h)
    if np.any(bad):
        where = arr if arr.ndim == 1 else arr[np.argmax(bad)]
        raise NumericDomainError(f"{model.name}: non-finite energy at x={where.tolist()}")
    return float(h) if arr.ndim == 1 else h


def gradient(model: ModelSpec, x) -> np.ndarray:
    arr = _as_points(model, x)
    with np.errstate(over="ignore", invalid="ignore"):
        g = model.gradient(arr)
    if not np.all(np.isfinite(g)):
        raise NumericDomainError(f"{model.name}: non-finite gradient at x={arr.tolist()}")
    return g


def join_points(x1: PhasePoint, x2: PhasePoint) -> PhasePoint:
    """Phase point of the product system built by :func:`compose`."""
    return PhasePoint(x1.q + x2.q, x1.p + x2.p)


def _kinetic(p):
    return 0.5 * np.sum(p * p, axis=-1)


def _momentum_grad(q, p):
    return p


def harmonic(n: int = 1, omega=1.0, e_max: float = 8.0) -> ModelSpec:
    """Independent oscillators ``H = sum (p_i^2 + w_i^2 q_i^2) / 2``.

    The default box is the smallest one containing every state with
    ``H <= e_max``.
    """
    n = int(n)
    if n < 1:
        raise UsageError(f"harmonic needs n >= 1, got {n}")
    w = np.broadcast_to(np.asarray(omega, dtype=float), (n,)).copy()
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise UsageError(f"harmonic frequencies must be positive, got {w.tolist()}")
    w2 = w * w
    r = math.sqrt(2.0 * e_max)
    prod_w = float(np.prod(w))
    two_pi_n = (2.0 * math.pi) ** n

    def energy(q, p):
        return 0.5 * np.sum(p * p + w2 * q * q, axis=-1)

    def grad_q(q, p):
        return w2 * q

    def g(E):
        E = np.clip(np.asarray(E, dtype=float), 0.0, None)
        return two_pi_n * E**n / (math.factorial(n) * prod_w)

    def omega_fn(E):
        E = np.asarray(E, dtype=float)
        val = two_pi_n * np.clip(E, 0.0, None) ** (n - 1) / (math.factorial(n - 1) * prod_w)
        return np.where(E < 0, 0.0, val)

    def z(beta):
        return (2.0 * math.pi / beta) ** n / prod_w

    return ModelSpec(
        name="harmonic",
        n=n,
        params={"n": n, "omega": tuple(w.tolist()), "e_max": float(e_max)},
        box=BoundingBox.symmetric(r / w, np.full(n, r)),
        energy_fn=energy,
        grad_q_fn=grad_q,
        grad_p_fn=_momentum_grad,
        e_valid=float(e_max),
        oracle=AnalyticOracle(g=g, omega=omega_fn, z=z),
    )


def quartic1d(e_max: float = 8.0) -> ModelSpec:
    """``H = p^2/2 + q^4/4``; ``g(E)`` scales as ``E^(3/4)``."""
    # g(E) = 2 B(1/4, 3/2) E^(3/4) from the substitution q = (4E)^(1/4) u
    b = special.beta(0.25, 1.5)
    gamma_quarter = special.gamma(0.25)

    def energy(q, p):
        return 0.5 * p[..., 0] ** 2 + 0.25 * q[..., 0] ** 4

    def grad_q(q, p):
        return q**3

    def g(E):
        return 2.0 * b * np.clip(np.asarray(E, dtype=float), 0.0, None) ** 0.75

    def omega_fn(E):
        E = np.asarray(E, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(E > 0, 1.5 * b * np.abs(E) ** -0.25, np.where(E == 0, np.inf, 0.0))

    def z(beta):
        return math.sqrt(2.0 * math.pi / beta) * 0.5 * gamma_quarter * (4.0 / beta) ** 0.25

    return ModelSpec(
        name="quartic1d",
        n=1,
        params={"e_max": float(e_max)},
        box=BoundingBox.symmetric([(4.0 * e_max) ** 0.25], [math.sqrt(2.0 * e_max)]),
        energy_fn=energy,
        grad_q_fn=grad_q,
        grad_p_fn=_momentum_grad,
        e_valid=float(e_max),
        oracle=AnalyticOracle(g=g, omega=omega_fn, z=z),
    )


def doublewell1d(e_max: float = 2.0) -> ModelSpec:
    """``H = p^2/2 + (q^2 - 1)^2/4``; the separatrix sits at ``E = 1/4``."""

    def energy(q, p):
        x = q[..., 0]
        return 0.5 * p[..., 0] ** 2 + 0.25 * (x * x - 1.0) ** 2

    def grad_q(q, p):
        return q * (q * q - 1.0)

    q_half = math.sqrt(1.0 + 2.0 * math.sqrt(e_max))
    return ModelSpec(
        name="doublewell1d",
        n=1,
        params={"e_max": float(e_max)},
        box=BoundingBox.symmetric([q_half], [math.sqrt(2.0 * e_max)]),
        energy_fn=energy,
        grad_q_fn=grad_q,
        grad_p_fn=_momentum_grad,
        e_valid=float(e_max),
    )


HENON_HEILES_ESCAPE = 1.0 / 6.0


def henon_heiles() -> ModelSpec:
    """``H = (px^2 + py^2)/2 + (x^2 + y^2)/2 + x^2 y - y^3/3``.

    The box ``[-1, 1]^2 x [-1/2, 1/2]^2`` excludes the unbounded low-energy
    wedges beyond the saddles: outside the bounded triangle the potential
    inside the box never drops below 0.1516, so shells with ``E <= 0.14``
    only contain bound states.
    """

    def energy(q, p):
        x, y = q[..., 0], q[..., 1]
        return _kinetic(p) + 0.5 * (x * x + y * y) + x * x * y - y**3 / 3.0

    def grad_q(q, p):
        x, y = q[..., 0], q[..., 1]
        return np.stack([x + 2.0 * x * y, y + x * x - y * y], axis=-1)

    return ModelSpec(
        name="henon_heiles",
        n=2,
        params={},
        box=BoundingBox((-1.0, -1.0, -0.5, -0.5), (1.0, 1.0, 0.5, 0.5)),
        energy_fn=energy,
        grad_q_fn=grad_q,
        grad_p_fn=_momentum_grad,
        e_valid=0.14,
    )


def compose(m1: ModelSpec, m2: ModelSpec) -> ModelSpec:
    """Non-interacting product system ``H = H1 + H2``."""
    n1, n2 = m1.n, m2.n

    def parts(q, p):
        return (q[..., :n1], p[..., :n1]), (q[..., n1:], p[..., n1:])

    def energy(q, p):
        a, b = parts(q, p)
        return m1.energy_fn(*a) + m2.energy_fn(*b)

    def grad_q(q, p):
        a, b = parts(q, p)
        return np.concatenate([m1.grad_q_fn(*a), m2.grad_q_fn(*b)], axis=-1)

    def grad_p(q, p):
        a, b = parts(q, p)
        return np.concatenate([m1.grad_p_fn(*a), m2.grad_p_fn(*b)], axis=-1)

    lo1, hi1 = np.asarray(m1.box.lower), np.asarray(m1.box.upper)
    lo2, hi2 = np.asarray(m2.box.lower), np.asarray(m2.box.upper)
    lower = np.concatenate([lo1[:n1], lo2[:n2], lo1[n1:], lo2[n2:]])
    upper = np.concatenate([hi1[:n1], hi2[:n2], hi1[n1:], hi2[n2:]])
    return ModelSpec(
        name=f"compose({m1.name},{m2.name})",
        n=n1 + n2,
        params={"first": m1.describe(), "second": m2.describe()},
        box=BoundingBox(tuple(lower), tuple(upper)),
        energy_fn=energy,
        grad_q_fn=grad_q,
        grad_p_fn=grad_p,
        separable=m1.separable and m2.separable,
        kB=m1.kB,
        gibbs_prefactor=m1.gibbs_prefactor * m2.gibbs_prefactor,
        min_energy=m1.min_energy + m2.min_energy,
        e_valid=min(m1.e_valid, m2.e_valid),
    )


MODELS: dict[str, Callable[..., ModelSpec]] = {
    "harmonic": harmonic,
    "quartic1d": quartic1d,
    "doublewell1d": doublewell1d,
    "henon_heiles": henon_heiles,
}

MODEL_PARAMS: dict[str, tuple[str, ...]] = {
    "harmonic": ("n", "omega", "e_max"),
    "quartic1d": ("e_max",),
    "doublewell1d": ("e_max",),
    "henon_heiles": (),
}


def make_model(name: str, **params) -> ModelSpec:
    """Build a registered model by name, rejecting unknown parameters."""
    if name not in MODELS:
        raise UsageError(f"unknown model {name!r}; available: {', '.join(sorted(MODELS))}")
    extra = set(params) - set(MODEL_PARAMS[name])
    if extra:
        raise UsageError(f"model {name!r} does not accept parameter(s) {sorted(extra)}")
    return MODELS[name](**params)
