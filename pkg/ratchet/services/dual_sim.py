"""
The hierarchy of logistic competitions Z = (Z_0, Z_1, ...).

Level k holds the potential ancestors at M-distance k. From z the chain jumps

  -e_k          at z_k (z_k - 1)/(2N) + z_k sum_{k'<k} z_k' / N
  +e_k          at s_N z_k (1 - sum z / N)
  +e_k - e_k'   at s_N z_k z_k' / N            (k < k')
  +e_{k+1} - e_k at m_N z_k

The mutation move is a single family of total rate m_N z_k per level. The
level-0 marginal is a logistic birth-death chain whose mean extinction time
is available in closed form.
"""
import logging
import math
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import special, stats

from ratchet.config import settings
from ratchet.exceptions import RatchetError
from ratchet.models.dual import DualState, HierarchyPath, OdeTrajectory, Z0ExtinctionSummary
from ratchet.schemas.params import Params
from ratchet.services.analytic_profile import tail_iterate, z0_rates
from ratchet.services.stats import standard_error
from ratchet.services.streams import make_rng, replica_seed

logger = logging.getLogger(__name__)

MIN_EXTINCTION_REPS = 10


class DualServiceError(RatchetError):
    """Base exception for the dual hierarchy"""


class IntegrationBlowUpError(DualServiceError):
    """Raised when the ODE mass leaves the physically possible range"""


def _lowest(z: np.ndarray) -> int:
    nonzero = np.flatnonzero(z)
    return int(nonzero[0]) if len(nonzero) else len(z)


def _pick(weights: np.ndarray, u: float) -> int:
    cumulative = np.cumsum(weights)
    idx = int(np.searchsorted(cumulative, u * cumulative[-1], side="right"))
    return min(idx, len(weights) - 1)


def simulate_hierarchy(
    params: Params,
    z_init: DualState,
    t_max: float,
    seed: int,
    snapshot_times: Iterable[float] = (),
    max_level: Optional[int] = None,
) -> HierarchyPath:
    """
    Exact jump chain of Z from z_init up to t_max.

    With `max_level` = K only levels 0..K are kept: lines above K count as
    free space and a mutation out of level K removes the unit. The law of
    (Z_0, ..., Z_K) is the same as in the untruncated chain.
    """
    if z_init.N != params.N:
        raise DualServiceError(f"state capacity {z_init.N} does not match N={params.N}")
    N = params.N
    s_N, m_N = params.s_N, params.m_N
    rng = make_rng(seed)

    z = np.array(z_init.z if z_init.z else (0,), dtype=np.int64)
    if max_level is not None:
        if max_level < 0:
            raise DualServiceError(f"max_level must be >= 0, got {max_level}")
        if len(z) > max_level + 1:
            z = z[: max_level + 1]
    t = z_init.time
    grid = sorted(x for x in snapshot_times if t <= x <= t_max)
    next_snap = 0
    records: List[Tuple[int, float]] = []
    snapshots: List[Tuple[float, Tuple[int, ...]]] = []
    lowest = _lowest(z)
    n_events = 0

    while True:
        zf = z.astype(np.float64)
        below = np.concatenate(([0.0], np.cumsum(zf)[:-1]))
        occupied = zf.sum()
        death_w = zf * (zf - 1.0) / (2.0 * N) + zf * below / N
        branch_w = s_N * zf * (1.0 - occupied / N)
        compete_w = s_N * zf * below / N
        mutate_w = m_N * zf
        totals = np.array([death_w.sum(), branch_w.sum(), compete_w.sum(), mutate_w.sum()])
        total = totals.sum()

        t_next = t + rng.exponential(1.0 / total) if total > 0.0 else math.inf
        while next_snap < len(grid) and grid[next_snap] < t_next:
            snapshots.append((grid[next_snap], tuple(int(v) for v in z)))
            next_snap += 1
        if t_next > t_max:
            t = t_max
            break

        channel = _pick(totals, rng.random())
        if channel == 0:
            z[_pick(death_w, rng.random())] -= 1
        elif channel == 1:
            z[_pick(branch_w, rng.random())] += 1
        elif channel == 2:
            loser = _pick(compete_w, rng.random())
            winner = _pick(zf[:loser], rng.random())
            z[winner] += 1
            z[loser] -= 1
        else:
            k = _pick(mutate_w, rng.random())
            z[k] -= 1
            if max_level is None or k < max_level:
                if k + 1 == len(z):
                    z = np.append(z, 0)
                z[k + 1] += 1
        t = t_next
        n_events += 1

        new_lowest = _lowest(z)
        if new_lowest == len(z):
            new_lowest = lowest + 1 if lowest < len(z) else lowest
        for level in range(lowest, new_lowest):
            records.append((level, t))
            logger.debug(f"level {level} extinct at t={t:.4f}")
        lowest = max(lowest, new_lowest)

        if len(z) > 1 and z[-1] == 0:
            z = np.trim_zeros(z, "b")
            if len(z) == 0:
                z = np.zeros(1, dtype=np.int64)

    return HierarchyPath(
        level_extinction_times=records,
        z_at_times=snapshots,
        final=DualState(tuple(int(v) for v in z), N, t),
        n_events=n_events,
    )


def backward_click_times(params: Params, t_max: float, seed: int) -> List[float]:
    """Times at which the lowest level of the hierarchy started from the whole population dies out."""
    path = simulate_hierarchy(params, DualState.full(params.N), t_max, seed)
    return [t for _, t in path.level_extinction_times]


def _check_start(params: Params, start: int) -> None:
    if not 1 <= start <= params.N:
        raise DualServiceError(f"start must lie in 1..N={params.N}, got {start}")
    if params.m_N <= 0.0:
        raise DualServiceError("level 0 cannot go extinct from a single line without mutation")


def log_z0_extinction_exact(params: Params, start: int) -> float:
    """
    ln E_start[H_0] for the level-0 birth-death chain.

    With D_k the mean time to step from k to k-1,
    D_N = 1/d_N and D_k = 1/d_k + (b_k/d_k) D_{k+1}; then E_n[H_0] = sum_{k<=n} D_k.
    Everything is carried as logarithms.
    """
    _check_start(params, start)
    N = params.N
    log_D = np.empty(N + 1)
    log_D[0] = -math.inf
    for k in range(N, 0, -1):
        birth, death = z0_rates(params, k)
        log_death = math.log(death)
        if k == N or birth <= 0.0:
            log_D[k] = -log_death
        else:
            log_D[k] = np.logaddexp(-log_death, math.log(birth) - log_death + log_D[k + 1])
    return float(special.logsumexp(log_D[1 : start + 1]))


def z0_extinction_exact(params: Params, start: int) -> float:
    """Exact mean extinction time of level 0 started from `start` lines."""
    return math.exp(log_z0_extinction_exact(params, start))


def _z0_z1_extinction(params: Params, start: int, rng: np.random.Generator) -> Tuple[float, int]:
    """One run of the (Z_0, Z_1) chain until Z_0 hits 0; returns (H_0, Z_1(H_0))."""
    N = float(params.N)
    s, m = params.s_N, params.m_N
    n0, n1 = start, 0
    t = 0.0
    while n0 > 0:
        free = (N - n0 - n1) / N
        rates = (
            s * n0 * free,                                # n0 + 1
            s * n0 * n1 / N,                              # n0 + 1, n1 - 1
            n0 * (n0 - 1) / (2.0 * N),                    # n0 - 1
            m * n0,                                       # n0 - 1, n1 + 1
            s * n1 * free,                                # n1 + 1
            n1 * (n1 - 1) / (2.0 * N) + n1 * n0 / N + m * n1,  # n1 - 1
        )
        total = sum(rates)
        t += rng.exponential(1.0 / total)
        u = rng.random() * total
        if u < rates[0]:
            n0 += 1
        elif u < rates[0] + rates[1]:
            n0 += 1
            n1 -= 1
        elif u < rates[0] + rates[1] + rates[2]:
            n0 -= 1
        elif u < total - rates[5] - rates[4]:
            n0 -= 1
            n1 += 1
        elif u < total - rates[5]:
            n1 += 1
        else:
            n1 -= 1
    return t, n1


def z0_extinction_mc(params: Params, start: int, reps: int, seed: int) -> Z0ExtinctionSummary:
    """Monte Carlo of the (Z_0, Z_1) chain: H_0 statistics and the level-1 size left at H_0."""
    _check_start(params, start)
    if reps < MIN_EXTINCTION_REPS:
        raise DualServiceError(f"need at least {MIN_EXTINCTION_REPS} replicas, got {reps}")
    samples = np.empty(reps)
    z1 = np.empty(reps, dtype=np.int64)
    for r in range(reps):
        samples[r], z1[r] = _z0_z1_extinction(params, start, make_rng(replica_seed(seed, r)))
    mean = float(samples.mean())
    sd = float(samples.std(ddof=1))
    pvalue = float(stats.kstest(samples, "expon", args=(0.0, mean)).pvalue)
    logger.info(f"H_0 from {start}: mean {mean:.4g} over {reps} replicas, cv {sd / mean:.3f}")
    return Z0ExtinctionSummary(
        reps=reps,
        mean_H0=mean,
        std_err=standard_error(samples),
        cv=sd / mean,
        exponential_fit_pvalue=pvalue,
        z1_at_H0=z1,
        samples=samples,
    )


def quasi_stationary_start(params: Params) -> int:
    """Deterministic centre floor(2 (alpha - mu) N/f) of the level-0 size, at least 1."""
    return max(1, min(params.N, int(math.floor(2.0 * (params.alpha - params.mu) * params.scale))))


def truncation_level(alpha: float, mu: float, tolerance: float = 1e-8) -> int:
    """Smallest K >= 1 whose neglected equilibrium mass 2 alpha sum_{k>K} p_k is below tolerance."""
    rho = mu / alpha
    K = 1
    while 2.0 * alpha * tail_iterate(rho, K) >= tolerance:
        K += 1
    return K


def _level_mass_rhs(alpha: float, mu: float, n: np.ndarray) -> np.ndarray:
    below = np.concatenate(([0.0], np.cumsum(n)[:-1]))
    feed = np.concatenate(([0.0], n[:-1]))
    return mu * feed + n * (alpha - mu - 0.5 * n - below)


def ode_integrate(
    alpha: float,
    mu: float,
    K: int,
    n_init: Sequence[float],
    t_max: float,
    dt: Optional[float] = None,
    record_every: int = 100,
) -> OdeTrajectory:
    """
    Fixed-step RK4 for dn_k/dt = mu n_{k-1} + n_k (alpha - mu - n_k/2 - sum_{i<k} n_i),
    k = 0..K, with n_{-1} = 0.
    """
    dt = settings.ode_dt if dt is None else dt
    if dt <= 0:
        raise DualServiceError(f"dt must be positive, got {dt}")
    if K < 1:
        raise DualServiceError(f"truncation level must be >= 1, got {K}")
    n = np.zeros(K + 1)
    init = np.asarray(n_init, dtype=np.float64)
    if len(init) > K + 1:
        raise DualServiceError(f"{len(init)} initial masses for {K + 1} levels")
    if np.any(init < 0):
        raise DualServiceError("initial masses must be nonnegative")
    n[: len(init)] = init

    steps = int(round(t_max / dt))
    record_every = max(1, record_every)
    times = [0.0]
    states = [n.copy()]
    for step in range(1, steps + 1):
        k1 = _level_mass_rhs(alpha, mu, n)
        k2 = _level_mass_rhs(alpha, mu, n + 0.5 * dt * k1)
        k3 = _level_mass_rhs(alpha, mu, n + 0.5 * dt * k2)
        k4 = _level_mass_rhs(alpha, mu, n + dt * k3)
        n = n + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        mass = n.sum()
        if not np.isfinite(mass) or mass > 4.0 * alpha:
            logger.warning(f"ODE mass {mass} at t={step * dt:.4f} exceeds 4 alpha")
            raise IntegrationBlowUpError(f"total mass {mass} left [0, {4.0 * alpha}] at t={step * dt}")
        if step % record_every == 0 or step == steps:
            times.append(step * dt)
            states.append(n.copy())

    return OdeTrajectory(alpha=alpha, mu=mu, times=np.array(times), states=np.array(states))


def logistic_total(alpha: float, n0: float, t):
    """Solution of dn/dt = n (alpha - n/2) from n(0) = n0."""
    t = np.asarray(t, dtype=np.float64)
    if n0 == 0.0:
        return np.zeros_like(t)
    return 2.0 * alpha * n0 / (n0 + (2.0 * alpha - n0) * np.exp(-alpha * t))
