from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class ProfileWeights:
    """Analytic weights p_0..p_kmax of the quasi-stationary type profile"""

    rho: float
    weights: np.ndarray
    partial_sums: np.ndarray

    @classmethod
    def from_weights(cls, rho: float, weights) -> "ProfileWeights":
        w = np.asarray(weights, dtype=np.float64)
        return cls(rho=rho, weights=w, partial_sums=np.cumsum(w))

    @property
    def kmax(self) -> int:
        return len(self.weights) - 1

    @property
    def q(self) -> float:
        return self.rho / (1.0 + self.rho)

    @property
    def tail_ratio(self) -> float:
        if self.kmax < 1:
            return float("nan")
        return float(self.weights[-1] / self.weights[-2])

    def __len__(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class EquilibriumMasses:
    """Attracting equilibrium of the level-mass ODE, n_bar_0..n_bar_kmax"""

    alpha: float
    mu: float
    masses: np.ndarray

    @property
    def total(self) -> float:
        return float(self.masses.sum())


class ShapeKind(str, Enum):
    strictly_decreasing = "StrictlyDecreasing"
    plateau_at_zero_one = "PlateauAtZeroOne"
    unimodal = "Unimodal"


@dataclass(frozen=True)
class ShapeClass:
    kind: ShapeKind
    k1: Optional[int] = None
    k2: Optional[int] = None

    def __post_init__(self):
        if self.kind == ShapeKind.unimodal:
            if self.k1 is None or self.k2 is None or not (self.k1 <= self.k2 <= self.k1 + 1):
                raise ValueError(f"Unimodal shape needs k1 <= k2 <= k1+1, got {self.k1}, {self.k2}")

    def __str__(self) -> str:
        if self.kind == ShapeKind.unimodal:
            return f"Unimodal({self.k1},{self.k2})"
        return self.kind.value
