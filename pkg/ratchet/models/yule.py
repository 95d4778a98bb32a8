from dataclasses import dataclass, field
from typing import Dict, NamedTuple, Optional

import numpy as np


@dataclass(frozen=True)
class ClassPopulation:
    """Number of particles per mark count k"""

    counts: Dict[int, int]
    time: float

    def __post_init__(self):
        if any(c < 0 for c in self.counts.values()):
            raise ValueError("negative class count")

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def min_load(self) -> Optional[int]:
        occupied = [k for k, c in self.counts.items() if c > 0]
        return min(occupied) if occupied else None

    @property
    def min_class_size(self) -> int:
        k = self.min_load
        return 0 if k is None else self.counts[k]


class YuleSample(NamedTuple):
    value: Optional[int]
    censored: bool


@dataclass(frozen=True)
class MinLoadSamples:
    method: str
    values: np.ndarray = field(repr=False)
    censored: int = 0

    @property
    def reps(self) -> int:
        return len(self.values) + self.censored

    def frequencies(self, kmax: int) -> np.ndarray:
        counts = np.bincount(self.values, minlength=kmax + 1)[: kmax + 1]
        return counts / max(len(self.values), 1)


@dataclass(frozen=True)
class GwEstimate:
    reps: int
    extinction_freq: float
    leaf_gf_estimate: float
    capped: int = 0


@dataclass(frozen=True)
class FixedPointCheck:
    ks_distance: float
    pvalue: float
    mean_M: float
    lhs: np.ndarray = field(repr=False)
    rhs: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class HeightProfile:
    population: ClassPopulation
    min_load: Optional[int]
    min_class_size: int
    lower_bound: float
    upper_bound: float

    @property
    def within_bounds(self) -> bool:
        return self.lower_bound <= self.min_class_size <= self.upper_bound
