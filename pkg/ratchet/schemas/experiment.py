from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ratchet.config import settings
from ratchet.schemas.params import FFamily, Params


class ExperimentKind(str, Enum):
    profile = "profile"
    ode = "ode"
    yule = "yule"
    brw = "brw"
    gw = "gw"
    fixedpoint = "fixedpoint"
    forward = "forward"
    dual = "dual"
    graphical = "graphical"
    compare = "compare"


class OutputFormat(str, Enum):
    csv = "csv"
    json = "json"


class ExperimentConfig(BaseModel):
    """Validated input of one experiment run"""

    model_config = ConfigDict(extra="forbid")

    experiment: ExperimentKind
    alpha: float = Field(default=1.0, gt=0, description="Selection intensity")
    mu: Optional[float] = Field(default=None, gt=0, description="Mutation intensity")
    rho: Optional[float] = Field(default=None, gt=0, lt=1, description="mu/alpha; alternative to mu")
    N: int = Field(default=2000, ge=1, description="Population size")
    f_value: Optional[float] = Field(default=None, ge=1, description="Explicit f(N)")
    f_family: Optional[FFamily] = None
    reps: int = Field(default=1000, ge=1)
    forward_reps: int = Field(default=1, ge=1, description="Forward simulations in a compare run")
    seed: int = Field(default_factory=lambda: settings.default_seed)
    kmax: int = Field(default=10, ge=0)
    t_max: Optional[float] = Field(default=None, gt=0)
    burn_in: Optional[float] = Field(default=None, ge=0)
    snapshot_step: Optional[float] = Field(default=None, gt=0)
    threshold: int = Field(default_factory=lambda: settings.yule_threshold, ge=50)
    cap: int = Field(default_factory=lambda: settings.yule_cap)
    u: float = Field(default=0.5, ge=0, le=1, description="Argument of the leaf generating function")
    window: float = Field(default=5.0, gt=0, description="Time window of a graphical realization")
    scales: Optional[List[float]] = Field(default=None, description="N/f(N) sweep of the dual experiment")
    inputs: Optional[List[str]] = Field(default=None, description="Route files for a standalone compare report")
    out_dir: str = Field(default_factory=lambda: settings.out_dir)
    format: OutputFormat = OutputFormat.csv

    @model_validator(mode="after")
    def _check_rates(self):
        if self.rho is not None:
            implied = self.rho * self.alpha
            if self.mu is not None and abs(self.mu - implied) > 1e-12 * self.alpha:
                raise ValueError(f"mu={self.mu} contradicts rho={self.rho} at alpha={self.alpha}")
            self.mu = implied
        if self.mu is None:
            self.mu = 0.5 * self.alpha
        if not self.mu < self.alpha:
            raise ValueError(f"need 0 < mu < alpha, got alpha={self.alpha}, mu={self.mu}")
        if self.f_value is not None and self.f_family is not None:
            raise ValueError("give either f_value or f_family, not both")
        if self.cap <= self.threshold:
            raise ValueError(f"cap {self.cap} must exceed threshold {self.threshold}")
        return self

    @property
    def rho_value(self) -> float:
        return self.mu / self.alpha

    def params(self, N: Optional[int] = None) -> Params:
        N = self.N if N is None else N
        if self.f_family is not None:
            return Params.from_family(N, self.alpha, self.mu, self.f_family).require_subcritical()
        f = self.f_value if self.f_value is not None else 50.0
        return Params(N=N, alpha=self.alpha, mu=self.mu, f_of_N=f).require_subcritical()


class ManifestFile(BaseModel):
    name: str
    sha256: str
    rows: int


class Manifest(BaseModel):
    """Record of one run, written next to its outputs as manifest.json"""

    experiment: ExperimentKind
    config: Dict[str, Any]
    seed: int
    version: str
    wall_time_s: float
    exit_code: int = 0
    files: List[ManifestFile] = []
    summary: Dict[str, Any] = {}


class ProfileResponse(BaseModel):
    """Analytic profile weights with diagnostics"""

    rho: float
    kmax: int
    weights: List[float]
    partial_sums: List[float]
    shape: Optional[str] = Field(None, description="Shape class; needs kmax >= 3")
    tail_ratio: Optional[float] = None
    tail_constant: float = Field(..., description="C with sum_{k>l} p_k ~ C q**l")
    point_mass_constant: float = Field(..., description="lim p_k / q**k")
    mean: float
    variance: float


class EquilibriumResponse(BaseModel):
    alpha: float
    mu: float
    kmax: int
    masses: List[float]
    total: float
