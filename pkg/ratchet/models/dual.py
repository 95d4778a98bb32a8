from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class DualState:
    """Level counts z = (z_0, z_1, ...) of the hierarchy of logistic competitions"""

    z: Tuple[int, ...]
    N: int
    time: float = 0.0

    def __post_init__(self):
        if any(v < 0 for v in self.z):
            raise ValueError("negative level count")
        if sum(self.z) > self.N:
            raise ValueError(f"level counts sum to {sum(self.z)} > N={self.N}")

    @classmethod
    def full(cls, N: int) -> "DualState":
        """All N lines in level 0, the start of a backward run from the whole population."""
        return cls((N,), N)

    @property
    def total(self) -> int:
        return sum(self.z)

    @property
    def lowest_level(self) -> Optional[int]:
        for k, v in enumerate(self.z):
            if v > 0:
                return k
        return None


@dataclass
class HierarchyPath:
    level_extinction_times: List[Tuple[int, float]]
    z_at_times: List[Tuple[float, Tuple[int, ...]]]
    final: DualState
    n_events: int = 0

    def extinction_time(self, level: int) -> Optional[float]:
        for lvl, t in self.level_extinction_times:
            if lvl == level:
                return t
        return None


@dataclass(frozen=True)
class Z0ExtinctionSummary:
    """Monte Carlo summary of the extinction time H_0 of the load-0 level"""

    reps: int
    mean_H0: float
    std_err: float
    cv: float
    exponential_fit_pvalue: float
    z1_at_H0: np.ndarray = field(repr=False)
    samples: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class OdeState:
    t: float
    n: np.ndarray

    @property
    def total(self) -> float:
        return float(self.n.sum())


@dataclass
class OdeTrajectory:
    """Recorded states of the truncated level-mass system"""

    alpha: float
    mu: float
    times: np.ndarray
    states: np.ndarray

    def __len__(self) -> int:
        return len(self.times)

    def __getitem__(self, idx: int) -> OdeState:
        return OdeState(float(self.times[idx]), self.states[idx])

    @property
    def final(self) -> OdeState:
        return self[-1]

    @property
    def totals(self) -> np.ndarray:
        return self.states.sum(axis=1)
