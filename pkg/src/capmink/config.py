"""Solver configuration shared by the potential, capacity and inverse solvers."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace

P_MIN, P_MAX = 1.05, 2.0


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    elements: int = 20000
    truncation_factor: float = 10.0
    grading: float = 0.5
    eps_final: float = 1e-8
    corner_cut_rel: float = 1e-3
    panels: int = 64
    newton_tol: float = 1e-10
    newton_max: int = 60

    def __post_init__(self):
        if self.elements < 500:
            raise ConfigError("elements must be at least 500")
        if self.truncation_factor <= 1.0:
            raise ConfigError("truncation_factor must exceed 1")
        if not 0.0 < self.grading <= 1.0:
            raise ConfigError("grading must lie in (0, 1]")
        if self.eps_final <= 0 or self.corner_cut_rel <= 0:
            raise ConfigError("eps_final and corner_cut_rel must be positive")
        if self.panels < 4 or self.newton_max < 1:
            raise ConfigError("panels >= 4 and newton_max >= 1 required")

    def with_(self, **kw) -> SolverConfig:
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> SolverConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown solver config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> SolverConfig:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def check_p(p: float) -> float:
    p = float(p)
    if not P_MIN <= p <= P_MAX:
        raise ConfigError(f"p must lie in [{P_MIN}, {P_MAX}], got {p}")
    return p


def tau(p: float) -> float:
    """``(2-p)/(p-1)`` for ``p < 2`` and ``2 pi`` for ``p = 2``."""
    import math

    return 2.0 * math.pi if p == 2.0 else (2.0 - p) / (p - 1.0)
