"""
Deterministic numerics for the quasi-stationary type profile.

Everything here is a pure function of its arguments and runs in float64.
The weights p_k solve

    p_0 = 1 - rho,   p_k**2 - p_k * b_k = rho * p_{k-1},   b_k = 1 - rho - 2 * sum_{k'<k} p_{k'}

and their tails are the iterates of the contraction G(u) = (1 + rho - sqrt((1+rho)**2 - 4 rho u)) / 2.
"""
import logging
import math
from typing import Tuple

import numpy as np
from scipy import integrate

from ratchet.exceptions import RatchetError
from ratchet.models.profile import EquilibriumMasses, ProfileWeights, ShapeClass, ShapeKind
from ratchet.schemas.params import Params

logger = logging.getLogger(__name__)

SHAPE_TOLERANCE = 1e-9


class ProfileServiceError(RatchetError):
    """Base exception for profile numerics"""


class ProfileDomainError(ProfileServiceError):
    """Raised when an argument is outside the domain of the formula"""


class ProfileNumericError(ProfileServiceError):
    """Raised when round-off produced a non-positive weight"""


class ShapeClassificationError(ProfileServiceError):
    """Raised when a weight sequence fits none of the three shapes"""


def _check_rho(rho: float) -> None:
    if not (0.0 < rho < 1.0):
        raise ProfileDomainError(f"rho must lie in (0, 1), got {rho}")


def _positive_root(b: float, c: float) -> float:
    """Positive root of x**2 - b*x - c = 0 for c > 0, free of cancellation."""
    root = math.sqrt(b * b + 4.0 * c)
    if b >= 0.0:
        return 0.5 * (b + root)
    return 2.0 * c / (root - b)


def profile_recursion(rho: float, kmax: int) -> ProfileWeights:
    """
    Weights p_0..p_kmax of the limiting profile.

    Each step keeps the positive root of the quadratic; for b < 0 the root is
    evaluated in its rationalised form 2*rho*p_{k-1} / (sqrt(b**2 + 4 rho p_{k-1}) - b),
    which keeps full relative precision deep in the geometric tail.
    """
    _check_rho(rho)
    if kmax < 0:
        raise ProfileDomainError(f"kmax must be >= 0, got {kmax}")

    weights = np.empty(kmax + 1, dtype=np.float64)
    weights[0] = 1.0 - rho
    partial = weights[0]
    for k in range(1, kmax + 1):
        b = 1.0 - rho - 2.0 * partial
        p_k = _positive_root(b, rho * weights[k - 1])
        if not p_k > 0.0:
            logger.warning(f"Non-positive weight at k={k} for rho={rho}")
            raise ProfileNumericError(f"p_{k} = {p_k} is not positive (rho={rho})")
        weights[k] = p_k
        partial += p_k

    return ProfileWeights.from_weights(rho, weights)


def g_map(rho: float, u):
    """G(u) = (1 + rho - sqrt((1+rho)**2 - 4 rho u)) / 2, accepts scalars or arrays."""
    _check_rho(rho)
    arr = np.asarray(u, dtype=np.float64)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ProfileDomainError(f"u must lie in [0, 1], got {u}")
    one_plus = 1.0 + rho
    out = 2.0 * rho * arr / (one_plus + np.sqrt(one_plus * one_plus - 4.0 * rho * arr))
    if out.ndim == 0:
        return float(out)
    return out


def tail_iterate(rho: float, ell: int) -> float:
    """ell-fold iterate of G applied to rho; equals sum_{k > ell} p_k."""
    _check_rho(rho)
    if ell < 0:
        raise ProfileDomainError(f"ell must be >= 0, got {ell}")
    a = rho
    for _ in range(ell):
        a = g_map(rho, a)
    return a


def tail_sequence(rho: float, length: int) -> np.ndarray:
    """The tails a_0..a_{length-1} in one pass."""
    _check_rho(rho)
    tails = np.empty(length, dtype=np.float64)
    a = rho
    for ell in range(length):
        tails[ell] = a
        a = g_map(rho, a)
    return tails


def classify_shape(weights: ProfileWeights) -> ShapeClass:
    p = weights.weights
    if weights.kmax < 3:
        raise ProfileDomainError("shape classification needs kmax >= 3")
    diffs = np.diff(p)

    if abs(diffs[0]) <= SHAPE_TOLERANCE and np.all(diffs[1:] < 0.0):
        return ShapeClass(ShapeKind.plateau_at_zero_one)
    if np.all(diffs < 0.0):
        return ShapeClass(ShapeKind.strictly_decreasing)

    k1 = 0
    while k1 < weights.kmax and diffs[k1] > SHAPE_TOLERANCE:
        k1 += 1
    if k1 == 0 or k1 == weights.kmax:
        raise ShapeClassificationError(f"no rising-then-falling pattern for rho={weights.rho}")
    k2 = k1 + 1 if abs(diffs[k1]) <= SHAPE_TOLERANCE else k1
    if not np.all(diffs[k2:] < 0.0):
        raise ShapeClassificationError(
            f"weights do not decrease strictly after k={k2} for rho={weights.rho}"
        )
    return ShapeClass(ShapeKind.unimodal, k1=k1, k2=k2)


def equilibrium_masses(alpha: float, mu: float, kmax: int) -> EquilibriumMasses:
    """
    Equilibrium n_bar of dn_k/dt = mu n_{k-1} + n_k (alpha - mu - n_k/2 - sum_{i<k} n_i).

    Solved directly (not through profile_recursion), so n_bar_k = 2 alpha p_k is
    a genuine cross-check.
    """
    if not (0.0 < mu < alpha):
        raise ProfileDomainError(f"need 0 < mu < alpha, got alpha={alpha}, mu={mu}")
    if kmax < 0:
        raise ProfileDomainError(f"kmax must be >= 0, got {kmax}")

    masses = np.empty(kmax + 1, dtype=np.float64)
    masses[0] = 2.0 * (alpha - mu)
    below = masses[0]
    for k in range(1, kmax + 1):
        # n**2 - 2c n - 2 mu n_{k-1} = 0
        c = alpha - mu - below
        n_k = _positive_root(2.0 * c, 2.0 * mu * masses[k - 1])
        if not n_k > 0.0:
            raise ProfileNumericError(f"n_bar_{k} = {n_k} is not positive")
        masses[k] = n_k
        below += n_k
    return EquilibriumMasses(alpha=alpha, mu=mu, masses=masses)


def click_exponent(params: Params) -> float:
    """2 (alpha - mu + mu ln(mu/alpha)) N/f(N), the log-scale of the mean click gap."""
    if params.mu >= params.alpha:
        raise ProfileDomainError(
            f"click exponent needs mu < alpha, got alpha={params.alpha}, mu={params.mu}"
        )
    return exponent_coefficient(params.alpha, params.mu) * params.scale


def exponent_coefficient(alpha: float, mu: float) -> float:
    entropy = mu * math.log(mu / alpha) if mu > 0 else 0.0
    return 2.0 * (alpha - mu + entropy)


def finite_exponent_coefficient(alpha: float, mu: float, f_value: float) -> float:
    """
    Limit of ln E[H_0] / (N/f) as N/f grows with f held fixed.

    With y = n f/N the level-0 birth/death ratio is alpha (1 - y/f) / (mu + y/2);
    its log integrates from 0 to the equilibrium y* = (alpha - mu) / (alpha/f + 1/2).
    Tends to exponent_coefficient(alpha, mu) as f grows.
    """
    if not (0.0 < mu < alpha):
        raise ProfileDomainError(f"need 0 < mu < alpha, got alpha={alpha}, mu={mu}")
    if f_value < 1.0:
        raise ProfileDomainError(f"f must be >= 1, got {f_value}")
    y_star = (alpha - mu) / (alpha / f_value + 0.5)
    value, _ = integrate.quad(
        lambda y: math.log(alpha * (1.0 - y / f_value) / (mu + 0.5 * y)), 0.0, y_star
    )
    return float(value)


def _upper_tails(weights: ProfileWeights) -> np.ndarray:
    """sum_{k' > k} p_{k'} for k = 0..kmax, closed with the exact G-tail."""
    p = weights.weights
    beyond = tail_iterate(weights.rho, weights.kmax)
    reversed_cumsum = np.cumsum(p[::-1])[::-1]
    return np.append(reversed_cumsum[1:], 0.0) + beyond


def systeq_residual(weights: ProfileWeights) -> float:
    """Max residual of the mutation-selection balance at alpha = 1, mu = rho."""
    p = weights.weights
    rho = weights.rho
    above = _upper_tails(weights)
    below = np.concatenate(([0.0], weights.partial_sums[:-1]))
    previous = np.concatenate(([0.0], p[:-1]))
    residual = np.abs(p * (above - below) - rho * (p - previous))
    return float(residual.max())


def fixed_point_residual(weights: ProfileWeights) -> float:
    """
    Max |p_k - sum_{i<=k} q**(k-i) (1-q) w_i| with w_i = p_i**2 + 2 p_i sum_{j>i} p_j,
    the weight form of L = M + min(L1, L2).
    """
    p = weights.weights
    q = weights.q
    w = p * p + 2.0 * p * _upper_tails(weights)
    residual = 0.0
    convolved = 0.0
    for k in range(len(p)):
        convolved = q * convolved + (1.0 - q) * w[k]
        residual = max(residual, abs(p[k] - convolved))
    return residual


def tail_constant(rho: float, kmax: int = 200) -> float:
    """
    Numerical C_rho with sum_{k>l} p_k ~ C_rho q**l.

    The point-mass constant of p_k ~ C q**k is C_rho (1-q)/q.
    """
    _check_rho(rho)
    log_q = math.log(rho / (1.0 + rho))
    a = rho
    ratio = rho
    for ell in range(1, kmax + 1):
        a = g_map(rho, a)
        if a <= 0.0:
            break
        updated = math.exp(math.log(a) - ell * log_q)
        if abs(updated - ratio) <= 1e-12 * updated:
            return updated
        ratio = updated
    return ratio


def point_mass_constant(rho: float, kmax: int = 200) -> float:
    """C with p_k ~ C q**k."""
    q = rho / (1.0 + rho)
    return tail_constant(rho, kmax) * (1.0 - q) / q


def profile_moments(rho: float, tolerance: float = 1e-18) -> Tuple[float, float]:
    """Mean and variance of (p_k) from the tails: E[L] = sum a_l, E[L^2] = sum (2l+1) a_l."""
    _check_rho(rho)
    first = 0.0
    second = 0.0
    a = rho
    ell = 0
    while a > tolerance:
        first += a
        second += (2 * ell + 1) * a
        a = g_map(rho, a)
        ell += 1
    return first, second - first * first


def z0_rates(params: Params, n: int) -> Tuple[float, float]:
    """Birth and death rates of the load-0 level of the dual hierarchy at size n."""
    N = params.N
    birth = n * params.s_N * (1.0 - n / N)
    death = n * (params.m_N + (n - 1) / (2.0 * N))
    return birth, death


def y0_rates(params: Params, n: int) -> Tuple[float, float]:
    """Birth and death rates of the count of the initially best class (forward)."""
    N = params.N
    birth = n * (0.5 + params.s_N) * (1.0 - n / N)
    death = n * (0.5 * (1.0 - n / N) + params.m_N)
    return birth, death
