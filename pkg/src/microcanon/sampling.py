"""Seeded uniform phase-space sampling and thin energy-shell ensembles.

Proposals are generated in fixed-size chunks. Chunk ``i`` of stream ``s``
draws from a Philox generator keyed by ``(seed, s, i)``, so the sequence of
chunks does not depend on how many workers evaluate them, and reductions
always combine chunk results in index order.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence, Union

import numpy as np
from scipy import optimize

from .errors import CriticalValueWarning, EmptyShellError, ShellTruncationWarning, UsageError
from .models import ModelSpec

CHUNK_SIZE = 1 << 16
GRAD_FLOOR = 1e-3

# stream identifiers; the same seed never reuses a stream across estimators
STREAM_BOX = 0
STREAM_SHELL = 1
STREAM_DIRECT = 2
STREAM_POINTS = 3

Stream = Union[int, Sequence[int]]


@dataclass(frozen=True)
class SampleConfig:
    count: int = 1_000_000
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if int(self.count) != self.count or self.count < 1:
            raise UsageError(f"sample count must be an integer >= 1, got {self.count}")
        if int(self.workers) != self.workers or self.workers < 1:
            raise UsageError(f"workers must be an integer >= 1, got {self.workers}")
        if not (0 <= int(self.seed) < 2**64):
            raise UsageError(f"seed must fit in 64 unsigned bits, got {self.seed}")

    def replace(self, **changes) -> "SampleConfig":
        fields = {"count": self.count, "seed": self.seed, "workers": self.workers}
        fields.update(changes)
        return SampleConfig(**fields)


def _key(stream: Stream) -> tuple:
    return (int(stream),) if np.ndim(stream) == 0 else tuple(int(s) for s in stream)


def chunk_rng(seed: int, stream: Stream, index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=_key(stream) + (int(index),))
    return np.random.Generator(np.random.Philox(ss))


def chunk_map(fn: Callable, n_chunks: int, workers: int) -> Iterator:
    """Yield ``fn(i)`` for ``i = 0..n_chunks-1`` in order, ``workers`` at a time."""
    if workers == 1:
        for i in range(n_chunks):
            yield fn(i)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for start in range(0, n_chunks, workers):
            yield from pool.map(fn, range(start, min(start + workers, n_chunks)))


def _chunk_len(count: int, index: int) -> int:
    return min(CHUNK_SIZE, count - index * CHUNK_SIZE)


def n_chunks(count: int) -> int:
    return -(-count // CHUNK_SIZE)


def box_chunk(model: ModelSpec, seed: int, stream: Stream, index: int, size: int) -> np.ndarray:
    rng = chunk_rng(seed, stream, index)
    return model.box.scale_unit(rng.random((size, model.dim)))


def sample_box(model: ModelSpec, cfg: SampleConfig, stream: Stream = STREAM_BOX):
    """Iterate over ``(points, energies)`` chunks of i.i.d. uniform box samples."""

    def work(i):
        x = box_chunk(model, cfg.seed, stream, i, _chunk_len(cfg.count, i))
        return x, model.energy(x)

    yield from chunk_map(work, n_chunks(cfg.count), cfg.workers)


def reduce_box(model: ModelSpec, cfg: SampleConfig, fn: Callable, stream: Stream = STREAM_BOX):
    """Map ``fn(points, energies)`` over box chunks; return results in chunk order.

    ``fn`` runs inside the worker, so only its (small) result is kept.
    """

    def work(i):
        x = box_chunk(model, cfg.seed, stream, i, _chunk_len(cfg.count, i))
        return fn(x, model.energy(x))

    return list(chunk_map(work, n_chunks(cfg.count), cfg.workers))


def sample_points(model: ModelSpec, count: int, seed: int, max_energy: Optional[float] = None,
                  stream: Stream = STREAM_POINTS) -> np.ndarray:
    """``count`` uniform points from the box, optionally restricted to ``H <= max_energy``."""
    out, have, i = [], 0, 0
    while have < count:
        x = box_chunk(model, seed, stream, i, CHUNK_SIZE)
        if max_energy is not None:
            x = x[model.energy(x) <= max_energy]
        out.append(x)
        have += len(x)
        i += 1
        if i > 10_000 and have == 0:
            raise EmptyShellError(f"no box points with H <= {max_energy} for {model.name}")
    return np.concatenate(out)[:count]


def min_grad_on_shell(model: ModelSpec, E: float, delta: float, starts: np.ndarray) -> float:
    """Smallest ``|grad H|`` found on ``|H - E| <= delta`` by local descent.

    Each start is refined by SLSQP minimising ``|grad H|^2`` inside the shell
    and the box. A sampled cloud alone almost never lands close enough to an
    isolated critical point to see the gradient vanish.
    """
    lo, hi = np.asarray(model.box.lower), np.asarray(model.box.upper)
    best = math.inf
    cons = [
        {"type": "ineq", "fun": lambda x: delta - (model.energy(x) - E)},
        {"type": "ineq", "fun": lambda x: delta + (model.energy(x) - E)},
    ]
    for x0 in np.atleast_2d(starts):
        best = min(best, float(np.linalg.norm(model.gradient(x0))))
        with warnings.catch_warnings():
            # SLSQP clips its own out-of-bounds steps and says so
            warnings.filterwarnings("ignore", "Values in x were outside bounds", RuntimeWarning)
            res = optimize.minimize(
                lambda x: float(np.sum(model.gradient(x) ** 2)),
                x0,
                method="SLSQP",
                bounds=list(zip(lo, hi)),
                constraints=cons,
                options={"ftol": 1e-16, "maxiter": 200},
            )
        if abs(float(model.energy(res.x)) - E) <= delta * (1 + 1e-6):
            best = min(best, float(np.linalg.norm(model.gradient(res.x))))
    return best


@dataclass
class ShellEnsemble:
    """Uniform samples of the box restricted to ``|H - E| <= delta``."""

    E: float
    delta: float
    points: np.ndarray
    energies: np.ndarray
    grad_norms: np.ndarray
    n_proposed: int
    box_volume: float
    gibbs_prefactor: float = 1.0
    seed: int = 0
    critical: bool = False
    min_grad: float = math.inf
    boundary_hits: int = 0
    model_name: str = ""
    n: int = field(init=False)

    def __post_init__(self):
        self.n = self.points.shape[1] // 2

    @property
    def n_accepted(self) -> int:
        return int(self.points.shape[0])

    @property
    def acceptance(self) -> float:
        return self.n_accepted / self.n_proposed

    @property
    def volume(self) -> float:
        """Unbiased estimate of the shell volume inside the box."""
        return self.box_volume * self.acceptance

    @property
    def volume_se(self) -> float:
        a = self.acceptance
        return self.box_volume * math.sqrt(a * (1.0 - a) / self.n_proposed)

    @property
    def truncated(self) -> bool:
        return self.boundary_hits > 0

    def to_csv(self, path) -> None:
        names = [f"q_{i + 1}" for i in range(self.n)] + [f"p_{i + 1}" for i in range(self.n)]
        header = ",".join(names + ["H", "grad_norm"])
        data = np.column_stack([self.points, self.energies, self.grad_norms])
        with open(path, "w") as fh:
            fh.write(f"# shell ensemble model={self.model_name} E={self.E!r} delta={self.delta!r} "
                     f"seed={self.seed} proposed={self.n_proposed}\n")
            fh.write(header + "\n")
            for row in data:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


def default_delta(E: float) -> float:
    return 0.01 * abs(E) if E != 0 else 0.01


def shell_ensemble(model: ModelSpec, E: float, delta: Optional[float] = None,
                   cfg: SampleConfig = SampleConfig(), target: Optional[int] = None,
                   grad_floor: float = GRAD_FLOOR, stream: Stream = STREAM_SHELL,
                   max_proposals: int = 10**10, warn: bool = True) -> ShellEnsemble:
    """Rejection-sample the shell ``H^{-1}([E - delta, E + delta])``.

    Without ``target`` exactly ``cfg.count`` proposals are made. With
    ``target``, whole chunks are drawn until at least ``target`` points are
    accepted; the stopping chunk depends only on the seed.
    """
    delta = default_delta(E) if delta is None else float(delta)
    if not delta > 0:
        raise UsageError(f"shell half-width must be positive, got {delta}")
    total = cfg.count if target is None else max_proposals
    chunks_total = n_chunks(total)

    def work(i):
        x = box_chunk(model, cfg.seed, stream, i, _chunk_len(total, i))
        h = model.energy(x)
        keep = np.abs(h - E) <= delta
        return x[keep], h[keep], len(x)

    pts, hs, proposed, accepted = [], [], 0, 0
    for x, h, size in chunk_map(work, chunks_total, cfg.workers):
        pts.append(x)
        hs.append(h)
        proposed += size
        accepted += len(x)
        if target is not None and accepted >= target:
            break
    # chunks computed past the stopping one in a parallel batch are discarded
    if accepted == 0:
        raise EmptyShellError(
            f"{model.name}: no proposals in shell E={E:g}±{delta:g} after {proposed} draws"
        )
    points = np.concatenate(pts)
    energies = np.concatenate(hs)
    grad_norms = np.linalg.norm(model.gradient(points), axis=1)

    order = np.argsort(grad_norms, kind="stable")[:4]
    min_grad = min_grad_on_shell(model, E, delta, points[order])
    critical = min_grad < grad_floor

    lo, hi = np.asarray(model.box.lower), np.asarray(model.box.upper)
    face_dist = np.minimum(points - lo, hi - points).min(axis=1)
    margin = np.minimum(2.0 * delta / np.maximum(grad_norms, grad_floor), 0.05 * model.box.widths.min())
    boundary_hits = int(np.count_nonzero(face_dist < margin))

    if warn and critical:
        warnings.warn(
            f"{model.name}: E={E:g} is within delta={delta:g} of a critical value "
            f"(min |grad H| on shell ~ {min_grad:.3g} < {grad_floor:g})",
            CriticalValueWarning,
            stacklevel=2,
        )
    if warn and boundary_hits:
        warnings.warn(
            f"{model.name}: {boundary_hits} shell points at E={E:g} lie next to the box boundary; "
            "the level set is probably truncated",
            ShellTruncationWarning,
            stacklevel=2,
        )
    return ShellEnsemble(
        E=float(E),
        delta=delta,
        points=points,
        energies=energies,
        grad_norms=grad_norms,
        n_proposed=proposed,
        box_volume=model.box.volume,
        gibbs_prefactor=model.gibbs_prefactor,
        seed=cfg.seed,
        critical=critical,
        min_grad=min_grad,
        boundary_hits=boundary_hits,
        model_name=model.name,
    )
