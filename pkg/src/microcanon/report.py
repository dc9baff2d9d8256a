"""Machine-readable PASS/FAIL records emitted by every check."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field


def _clean(value):
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if hasattr(value, "item") and callable(value.item):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    return value


@dataclass
class CheckReport:
    check: str
    model: str
    params: dict
    seed: int | None
    estimates: list = field(default_factory=list)
    passed: bool = False
    notes: list = field(default_factory=list)

    def add(self, name: str, **values) -> dict:
        entry = {"name": name, **values}
        self.estimates.append(entry)
        return entry

    def to_dict(self) -> dict:
        return _clean({
            "check": self.check,
            "model": self.model,
            "params": self.params,
            "seed": self.seed,
            "estimates": self.estimates,
            "pass": bool(self.passed),
            "notes": self.notes,
        })

    def to_json(self, **extra) -> str:
        payload = {**_clean(extra), **self.to_dict()}
        return json.dumps(payload, indent=2, sort_keys=False)

    def summary(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.check} [{self.model}]"
