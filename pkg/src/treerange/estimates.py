from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np


@dataclass
class EstimateRecord:
    value: float
    stderr: float
    reps: int
    params: dict = field(default_factory=dict)
    seed: int | None = None
    elapsed_ms: float = 0.0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.stderr < 0 or math.isnan(self.stderr):
            raise ValueError("stderr must be nonnegative")

    @property
    def single_rep(self) -> bool:
        return self.reps <= 1

    def interval(self, z: float = 3.0) -> tuple[float, float]:
        return self.value - z * self.stderr, self.value + z * self.stderr

    def as_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_samples(cls, samples, params=None, seed=None, elapsed_ms=0.0, extra=None) -> "EstimateRecord":
        x = np.asarray(samples, dtype=float)
        n = x.size
        if n == 0:
            raise ValueError("no samples")
        stderr = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(float(x.mean()), stderr, n, dict(params or {}), seed, elapsed_ms, dict(extra or {}))


def combined_stderr(*records: EstimateRecord) -> float:
    return math.sqrt(sum(r.stderr ** 2 for r in records))


def agree(a: EstimateRecord, b: EstimateRecord, z: float = 3.0) -> bool:
    return abs(a.value - b.value) <= z * combined_stderr(a, b)
