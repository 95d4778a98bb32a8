from fastapi import APIRouter, HTTPException, Query

from ratchet.config import settings
from ratchet.schemas.experiment import EquilibriumResponse, ProfileResponse
from ratchet.services import analytic_profile
from ratchet.services.analytic_profile import ProfileDomainError, ProfileNumericError, ProfileServiceError

router = APIRouter(prefix="/profile", tags=["profile"])


@router.get(
    "",
    response_model=ProfileResponse,
    description="Analytic weights p_0..p_kmax of the quasi-stationary type profile",
)
async def get_profile(
    rho: float = Query(..., gt=0, lt=1, description="mu/alpha, in (0, 1)"),
    kmax: int = Query(default=10, ge=0, le=10_000, description="Largest k returned"),
):
    """
    Returns the weights of the recursion together with their partial sums,
    the shape class (kmax >= 3), the tail and point-mass constants and the first two moments.
    """
    try:
        weights = analytic_profile.profile_recursion(rho, kmax)
        mean, variance = analytic_profile.profile_moments(rho)
        shape = str(analytic_profile.classify_shape(weights)) if kmax >= 3 else None
        return ProfileResponse(
            rho=rho,
            kmax=kmax,
            weights=weights.weights.tolist(),
            partial_sums=weights.partial_sums.tolist(),
            shape=shape,
            tail_ratio=weights.tail_ratio if kmax >= 1 else None,
            tail_constant=analytic_profile.tail_constant(rho, settings.kmax_default),
            point_mass_constant=analytic_profile.point_mass_constant(rho, settings.kmax_default),
            mean=mean,
            variance=variance,
        )
    except (ProfileDomainError, ProfileNumericError) as e:
        # weights underflow past a few hundred levels
        raise HTTPException(status_code=400, detail=str(e))
    except ProfileServiceError as e:
        raise HTTPException(status_code=500, detail=str(e))


@router.get(
    "/equilibrium",
    response_model=EquilibriumResponse,
    description="Attracting equilibrium of the level-mass ODE",
)
async def get_equilibrium(
    alpha: float = Query(..., gt=0, description="Selection intensity"),
    mu: float = Query(..., gt=0, description="Mutation intensity, below alpha"),
    kmax: int = Query(default=10, ge=0, le=10_000),
):
    try:
        masses = analytic_profile.equilibrium_masses(alpha, mu, kmax)
    except (ProfileDomainError, ProfileNumericError) as e:
        raise HTTPException(status_code=400, detail=str(e))
    except ProfileServiceError as e:
        raise HTTPException(status_code=500, detail=str(e))
    return EquilibriumResponse(
        alpha=alpha, mu=mu, kmax=kmax, masses=masses.masses.tolist(), total=masses.total
    )
