import math
from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class FFamilyKind(str, Enum):
    log = "log"
    power = "power"


class FFamily(BaseModel):
    """Named scaling family for f(N): c*ln N or c*N**gamma with gamma < 1"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: FFamilyKind
    c: float = Field(default=1.0, gt=0)
    gamma: Optional[float] = Field(default=None, gt=0, lt=1)

    @model_validator(mode="after")
    def _check_gamma(self):
        if self.kind == FFamilyKind.power and self.gamma is None:
            raise ValueError("power family needs gamma in (0, 1)")
        return self

    def evaluate(self, N: int) -> float:
        if self.kind == FFamilyKind.log:
            return self.c * math.log(N)
        return self.c * N ** self.gamma


class Params(BaseModel):
    """
    Model parameters of the tournament-selection ratchet.

    The per-event rates are s_N = alpha/f(N) and m_N = mu/f(N). The type itself
    admits the boundary rates alpha = 0 or mu = 0 so the simulators can be driven
    at degenerate corners; `require_subcritical` enforces 0 < mu < alpha.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    N: int = Field(..., ge=1, description="Population size")
    alpha: float = Field(..., ge=0, description="Selection intensity")
    mu: float = Field(..., ge=0, description="Mutation intensity")
    f_of_N: float = Field(default=1.0, ge=1, description="Scaling value f(N)")

    @classmethod
    def from_family(cls, N: int, alpha: float, mu: float, family: FFamily) -> "Params":
        return cls(N=N, alpha=alpha, mu=mu, f_of_N=max(1.0, family.evaluate(N)))

    @property
    def s_N(self) -> float:
        return self.alpha / self.f_of_N

    @property
    def m_N(self) -> float:
        return self.mu / self.f_of_N

    @property
    def rho(self) -> float:
        return self.mu / self.alpha

    @property
    def q(self) -> float:
        return self.mu / (self.alpha + self.mu)

    @property
    def scale(self) -> float:
        """N/f(N), the carrying capacity of the load-0 class in units of f(N)"""
        return self.N / self.f_of_N

    @property
    def subcritical(self) -> bool:
        return 0 < self.mu < self.alpha

    def require_subcritical(self) -> "Params":
        if not self.subcritical:
            raise ValueError(
                f"Parameters outside the subcritical regime 0 < mu < alpha "
                f"(alpha={self.alpha}, mu={self.mu})"
            )
        return self
