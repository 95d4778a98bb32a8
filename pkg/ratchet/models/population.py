from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class PopState:
    """Sparse type counts of the forward population, seen from the best type"""

    best_type: int
    counts: Dict[int, int]
    time: float

    def __post_init__(self):
        if any(c < 0 for c in self.counts.values()):
            raise ValueError("negative class count")
        if self.counts.get(self.best_type, 0) < 1:
            raise ValueError("best class must be nonempty")
        if any(k < self.best_type and c > 0 for k, c in self.counts.items()):
            raise ValueError("positive count below the best type")

    @property
    def size(self) -> int:
        return sum(self.counts.values())

    def relative(self) -> np.ndarray:
        """Counts of types best_type + k, k = 0..max"""
        top = max(k for k, c in self.counts.items() if c > 0)
        vec = np.zeros(top - self.best_type + 1, dtype=np.int64)
        for k, c in self.counts.items():
            if c > 0:
                vec[k - self.best_type] = c
        return vec


class Click(NamedTuple):
    time: float
    new_best_type: int


class Snapshot(NamedTuple):
    time: float
    profile: np.ndarray  # X_k, k = 0.., sums to 1


class Y0AuditRecord(NamedTuple):
    time: float
    n_before: int
    n_after: int
    birth_state: float
    death_state: float
    birth_formula: float
    death_formula: float


@dataclass
class SimOutput:
    clicks: List[Click]
    profile_snapshots: List[Snapshot]
    final: PopState
    y0_path: Optional[List[Tuple[float, int]]] = None
    y0_audit: Optional[List[Y0AuditRecord]] = None
    n_events: int = 0

    @property
    def click_times(self) -> np.ndarray:
        return np.array([c.time for c in self.clicks], dtype=np.float64)


@dataclass(frozen=True)
class ClickStatistics:
    count: int
    mean_gap: Optional[float] = None
    cv: Optional[float] = None
    exponential_fit_pvalue: Optional[float] = None
    gaps: Optional[np.ndarray] = field(default=None, repr=False)


@dataclass(frozen=True)
class JointCounts:
    """Empirical joint law of n sampled relative types"""

    sample_size: int
    reps: int
    frequencies: Dict[Tuple[int, ...], float]

    def marginal(self, position: int = 0) -> Dict[int, float]:
        out: Dict[int, float] = {}
        for key, freq in self.frequencies.items():
            out[key[position]] = out.get(key[position], 0.0) + freq
        return dict(sorted(out.items()))
