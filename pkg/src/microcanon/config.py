"""Flat ``key = value`` run configuration with dotted section prefixes.

Example::

    # harmonic oscillator pair, 4 million samples
    model.name = harmonic
    model.n = 2
    grid.max = 6
    mc.count = 4000000
    mc.seed = 7

Lists are comma separated. Unknown keys are rejected before anything runs.
"""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, Optional

from .errors import UsageError
from .microcanonical import energy_grid
from .models import MODEL_PARAMS, BoundingBox, ModelSpec, make_model

ENV_OVERRIDES = {"MICROCANON_SEED": "mc.seed", "MICROCANON_WORKERS": "mc.workers"}
# keys that may change without changing any result
HASH_EXCLUDED = ("mc.workers", "output.dir")


def _int(text: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        pass
    v = float(text)
    if not v.is_integer():
        raise ValueError(f"{text!r} is not an integer")
    return int(v)


def _float(text: str) -> float:
    v = float(text)
    if not math.isfinite(v):
        raise ValueError(f"{text!r} is not finite")
    return v


def _floats(text: str) -> tuple:
    return tuple(_float(t) for t in text.split(",") if t.strip())


def _ints(text: str) -> tuple:
    return tuple(_int(t) for t in text.split(",") if t.strip())


def _strs(text: str) -> tuple:
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _str(text: str) -> str:
    return text.strip()


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{text!r} is not a boolean")


def _opt(parser: Callable) -> Callable:
    def parse(text: str):
        return None if text.strip().lower() in ("", "none") else parser(text)

    return parse


def _omega(text: str):
    vals = _floats(text)
    return vals[0] if len(vals) == 1 else vals


_MODEL_KEYS = {
    "name": (_str, "harmonic"),
    "n": (_opt(_int), None),
    "omega": (_opt(_omega), None),
    "e_max": (_opt(_float), None),
    "kB": (_float, 1.0),
    "gibbs_prefactor": (_float, 1.0),
    "box.lower": (_opt(_floats), None),
    "box.upper": (_opt(_floats), None),
}

SCHEMA: Dict[str, tuple] = {
    **{f"model.{k}": v for k, v in _MODEL_KEYS.items()},
    **{f"model2.{k}": v for k, v in _MODEL_KEYS.items()},
    "grid.min": (_float, 0.0),
    "grid.max": (_opt(_float), None),
    "grid.count": (_int, 64),
    "beta.values": (_floats, (1.5, 2.0, 3.0)),
    "mc.count": (_int, 1_000_000),
    "mc.seed": (_int, 0),
    "mc.workers": (_int, 1),
    "mc.delta": (_opt(_float), None),
    "mc.kde": (_bool, True),
    "omega.energies": (_opt(_floats), None),
    "flow.scheme": (_str, "leapfrog"),
    "flow.step": (_float, 1e-3),
    "flow.t": (_float, 1.0),
    "thermo.T": (_floats, (0.5, 1.0)),
    "thermo.source": (_str, "auto"),
    "thermo.n_list": (_opt(_ints), None),
    "verify.E": (_opt(_float), None),
    "verify.points": (_int, 20),
    "verify.f": (_str, "1"),
    "verify.E_range": (_floats, (0.5, 1.5)),
    "verify.expected": (_opt(_float), None),
    "verify.observables": (_opt(_strs), None),
    "verify.events": (_opt(_strs), None),
    "verify.target": (_opt(_int), None),
    "verify.drift_tol": (_opt(_float), None),
    "output.dir": (_str, "."),
}


@dataclass
class RunConfig:
    """Validated settings; ``values`` maps every schema key to its parsed value."""

    values: Dict[str, Any] = field(default_factory=dict)
    raw: Dict[str, str] = field(default_factory=dict)

    def __getitem__(self, key: str):
        return self.values[key]

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    def sha256(self) -> str:
        """Digest of every result-affecting setting, in sorted key order."""
        lines = [f"{k}={self.values[k]!r}" for k in sorted(self.values) if k not in HASH_EXCLUDED]
        return hashlib.sha256("\n".join(lines).encode()).hexdigest()

    def model(self, prefix: str = "model") -> ModelSpec:
        name = self.values[f"{prefix}.name"]
        params = {}
        for key in ("n", "omega", "e_max"):
            v = self.values[f"{prefix}.{key}"]
            if v is None:
                continue
            if name in MODEL_PARAMS and key not in MODEL_PARAMS[name]:
                raise UsageError(f"config key {prefix}.{key} does not apply to model {name!r}")
            params[key] = v
        spec = make_model(name, **params)
        changes = {"kB": self.values[f"{prefix}.kB"], "gibbs_prefactor": self.values[f"{prefix}.gibbs_prefactor"]}
        lo, hi = self.values[f"{prefix}.box.lower"], self.values[f"{prefix}.box.upper"]
        if (lo is None) != (hi is None):
            raise UsageError(f"{prefix}.box.lower and {prefix}.box.upper must be given together")
        if lo is not None:
            changes["box"] = BoundingBox(lo, hi)
        return spec.replace(**changes)

    def grid(self, model: ModelSpec):
        top = self.values["grid.max"]
        if top is None:
            if not math.isfinite(model.e_valid):
                raise UsageError(f"model {model.name!r} has no default energy range; set grid.max")
            top = model.e_valid
        return energy_grid(self.values["grid.min"], top, self.values["grid.count"])


def parse_lines(lines: Iterable[str], source: str = "<config>") -> Dict[str, str]:
    raw: Dict[str, str] = {}
    for lineno, line in enumerate(lines, 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise UsageError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, value = (s.strip() for s in text.split("=", 1))
        if not key:
            raise UsageError(f"{source}:{lineno}: empty key")
        raw[key] = value
    return raw


def build_config(raw: Dict[str, str]) -> RunConfig:
    unknown = sorted(set(raw) - set(SCHEMA))
    if unknown:
        raise UsageError(f"unknown config key(s): {', '.join(unknown)}")
    values = {}
    for key, (parser, default) in SCHEMA.items():
        if key in raw:
            try:
                values[key] = parser(raw[key])
            except ValueError as exc:
                raise UsageError(f"config key {key}: cannot parse {raw[key]!r} ({exc})") from None
        else:
            values[key] = default
    _validate(values)
    return RunConfig(values, dict(raw))


def _validate(v: Dict[str, Any]) -> None:
    def need(cond, key, what):
        if not cond:
            raise UsageError(f"config key {key}: {what}, got {v[key]!r}")

    need(v["grid.count"] >= 2, "grid.count", "must be >= 2")
    need(v["grid.max"] is None or v["grid.max"] > v["grid.min"], "grid.max", "must exceed grid.min")
    need(v["mc.count"] >= 1, "mc.count", "must be >= 1")
    need(v["mc.workers"] >= 1, "mc.workers", "must be >= 1")
    need(0 <= v["mc.seed"] < 2**64, "mc.seed", "must be a non-negative 64-bit integer")
    need(v["mc.delta"] is None or v["mc.delta"] > 0, "mc.delta", "must be positive")
    need(len(v["beta.values"]) > 0 and all(b > 0 for b in v["beta.values"]), "beta.values",
         "must be a non-empty list of positive numbers")
    need(len(v["thermo.T"]) > 0 and all(t > 0 for t in v["thermo.T"]), "thermo.T",
         "must be a non-empty list of positive temperatures")
    need(v["thermo.source"] in ("auto", "analytic", "monte_carlo"), "thermo.source",
         "must be auto, analytic or monte_carlo")
    need(v["flow.step"] > 0, "flow.step", "must be positive")
    need(v["verify.points"] >= 1, "verify.points", "must be >= 1")
    need(len(v["verify.E_range"]) == 2, "verify.E_range", "must hold two energies")
    for prefix in ("model", "model2"):
        need(v[f"{prefix}.kB"] > 0, f"{prefix}.kB", "must be positive")
        need(v[f"{prefix}.gibbs_prefactor"] > 0, f"{prefix}.gibbs_prefactor", "must be positive")


def load_config(path: Optional[str] = None, overrides: Iterable[str] = (),
                env: Optional[Dict[str, str]] = None) -> RunConfig:
    """Defaults, then the file, then environment overrides, then ``key=value`` overrides."""
    raw: Dict[str, str] = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise UsageError(f"config file not found: {path}")
        raw.update(parse_lines(p.read_text().splitlines(), str(p)))
    env = os.environ if env is None else env
    for var, key in ENV_OVERRIDES.items():
        if env.get(var, "").strip():
            raw[key] = env[var]
    raw.update(parse_lines(overrides, "--set"))
    return build_config(raw)
