"""
Monte Carlo routes to the limiting profile through the Poisson-decorated Yule tree.

A particle carrying k marks splits into two at rate alpha and gains a mark at
rate mu. L, the smallest mark count along an infinite lineage, has the law
(p_k) of the quasi-stationary profile, and so do the minimum of the matching
branching random walk and the right-hand side of L = M + min(L1, L2).
"""
import logging
import math
from collections import Counter
from typing import Optional, Tuple

import numpy as np

from ratchet.config import settings
from ratchet.exceptions import RatchetError
from ratchet.models.yule import (
    ClassPopulation,
    FixedPointCheck,
    GwEstimate,
    HeightProfile,
    MinLoadSamples,
    YuleSample,
)
from ratchet.services.stats import ks_two_sample
from ratchet.services.streams import make_rng, replica_seed

logger = logging.getLogger(__name__)

MIN_THRESHOLD = 50
WALK_BATCH = 1024


class YuleServiceError(RatchetError):
    """Base exception for the Yule-tree Monte Carlo"""


class CensoringError(YuleServiceError):
    """Raised when too many samples hit the population cap"""


def _check_rates(alpha: float, mu: float) -> float:
    if alpha <= 0 or mu < 0 or mu >= alpha:
        raise YuleServiceError(f"need 0 <= mu < alpha, got alpha={alpha}, mu={mu}")
    return mu / (alpha + mu)


def _class_walk(
    rng: np.random.Generator, founders: int, q: float, threshold: int, budget: int
) -> Tuple[Optional[bool], int, int]:
    """
    Embedded jump chain of one mark class started from `founders` particles:
    +1 (split) with probability 1-q, -1 (mark, the particle leaves for the
    next class) with probability q.

    Returns (reached threshold, departures, splits); the first entry is None
    when the split budget ran out first.
    """
    size = founders
    departures = 0
    splits = 0
    while size < threshold:
        up = rng.random(WALK_BATCH) >= q
        path = size + np.cumsum(np.where(up, 1, -1))
        hit = np.flatnonzero((path <= 0) | (path >= threshold))
        stop = int(hit[0]) + 1 if len(hit) else WALK_BATCH
        n_up = int(up[:stop].sum())
        splits += n_up
        departures += stop - n_up
        size = int(path[stop - 1])
        if splits > budget:
            return None, departures, splits
        if size <= 0:
            return False, departures, splits
    return True, departures, splits


def yule_min_load(
    alpha: float,
    mu: float,
    threshold: Optional[int] = None,
    cap: Optional[int] = None,
    seed: int = 0,
    rng: Optional[np.random.Generator] = None,
) -> YuleSample:
    """
    Minimal mark load of the decorated Yule tree.

    Classes are run from the lowest up. A class receives particles only from
    the class below, so once that class has died out all of its departures are
    the founders of the next one. The first class whose size reaches
    `threshold` is declared the minimum. The sample is censored when the
    total number of particles created exceeds `cap`.
    """
    threshold = settings.yule_threshold if threshold is None else threshold
    cap = settings.yule_cap if cap is None else cap
    if threshold < MIN_THRESHOLD:
        raise YuleServiceError(f"threshold must be >= {MIN_THRESHOLD}, got {threshold}")
    if cap <= threshold:
        raise YuleServiceError(f"cap {cap} must exceed threshold {threshold}")
    q = _check_rates(alpha, mu)
    rng = make_rng(seed) if rng is None else rng

    k = 0
    founders = 1
    created = 1
    while True:
        reached, departures, splits = _class_walk(rng, founders, q, threshold, cap - created)
        created += splits
        if reached is None:
            return YuleSample(None, True)
        if reached:
            return YuleSample(k, False)
        k += 1
        founders = departures


def sample_min_loads(
    alpha: float,
    mu: float,
    reps: int,
    seed: int,
    threshold: Optional[int] = None,
    cap: Optional[int] = None,
) -> MinLoadSamples:
    """Independent yule_min_load replicas; censored ones are dropped and counted."""
    values = []
    censored = 0
    for r in range(reps):
        sample = yule_min_load(alpha, mu, threshold, cap, replica_seed(seed, r))
        if sample.censored:
            censored += 1
        else:
            values.append(sample.value)
    rate = censored / reps if reps else 0.0
    logger.info(f"yule min load: {reps} replicas, {censored} censored ({rate:.2%})")
    if rate > settings.censoring_limit:
        logger.warning(f"censoring rate {rate:.2%} above limit {settings.censoring_limit:.2%}")
        raise CensoringError(f"{censored}/{reps} samples censored at cap {cap or settings.yule_cap}")
    return MinLoadSamples("yule_mc", np.array(values, dtype=np.int64), censored)


def brw_min(
    alpha: float,
    mu: float,
    stop_population: Optional[int] = None,
    seed: int = 0,
    rng: Optional[np.random.Generator] = None,
    threshold: Optional[int] = None,
) -> YuleSample:
    """
    Minimal position of the branching random walk on the nonnegative integers.

    Every particle steps +1 a geometric number of times (P(M >= l) = q**l)
    and then splits in two. Positions are settled from the lowest up: the
    particles at position x that take no step form a Galton-Watson process
    with two children w.p. 1-q, the others land as pairs at x + l with
    P(l) = (1-q) q**(l-1). The first position whose process reaches
    `threshold` particles is the minimum. The sample is censored once more
    than stop_population particles have been created.
    """
    threshold = settings.yule_threshold if threshold is None else threshold
    stop_population = settings.yule_cap if stop_population is None else stop_population
    if threshold < MIN_THRESHOLD:
        raise YuleServiceError(f"threshold must be >= {MIN_THRESHOLD}, got {threshold}")
    if stop_population <= threshold:
        raise YuleServiceError(f"stop_population {stop_population} must exceed threshold {threshold}")
    q = _check_rates(alpha, mu)
    rng = make_rng(seed) if rng is None else rng

    arrivals: Counter = Counter({0: 1})
    created = 1
    while True:
        x = min(arrivals)
        size = arrivals.pop(x)
        while 0 < size < threshold:
            created += 2 * size
            if created > stop_population:
                return YuleSample(None, True)
            stay = int(rng.binomial(size, 1.0 - q))
            leave = size - stay
            if leave:
                for step, count in Counter(rng.geometric(1.0 - q, size=leave).tolist()).items():
                    arrivals[x + step] += 2 * count
            size = 2 * stay
        if size >= threshold:
            return YuleSample(x, False)


def sample_brw_min(
    alpha: float,
    mu: float,
    reps: int,
    seed: int,
    stop_population: Optional[int] = None,
    threshold: Optional[int] = None,
) -> MinLoadSamples:
    """Independent brw_min replicas; censored ones are dropped and counted."""
    values = []
    censored = 0
    for r in range(reps):
        sample = brw_min(alpha, mu, stop_population, replica_seed(seed, r), threshold=threshold)
        if sample.censored:
            censored += 1
        else:
            values.append(sample.value)
    rate = censored / reps if reps else 0.0
    logger.info(f"brw min: {reps} replicas, {censored} censored ({rate:.2%})")
    if rate > settings.censoring_limit:
        logger.warning(f"censoring rate {rate:.2%} above limit {settings.censoring_limit:.2%}")
        raise CensoringError(f"{censored}/{reps} samples censored at {stop_population or settings.yule_cap} particles")
    return MinLoadSamples("brw_mc", np.array(values, dtype=np.int64), censored)


def gw_checks(
    alpha: float, mu: float, u: float, reps: int, seed: int, cap: Optional[int] = None
) -> GwEstimate:
    """
    Galton-Watson tree with no child w.p. q and two children w.p. 1-q, run
    generation by generation for all replicas at once. A generation larger
    than `cap` counts as survival.
    """
    if not 0.0 <= u <= 1.0:
        raise YuleServiceError(f"u must lie in [0, 1], got {u}")
    q = _check_rates(alpha, mu)
    cap = settings.gw_depth_cap if cap is None else cap
    rng = make_rng(seed)

    sizes = np.ones(reps, dtype=np.int64)
    leaves = np.zeros(reps, dtype=np.int64)
    alive = sizes > 0
    while alive.any():
        childless = rng.binomial(sizes[alive], q)
        leaves[alive] += childless
        sizes[alive] = 2 * (sizes[alive] - childless)
        alive = (sizes > 0) & (sizes <= cap)

    extinct = sizes == 0
    capped = int((sizes > cap).sum())
    gf = np.where(extinct, np.power(u, leaves, dtype=np.float64), 0.0)
    logger.debug(f"GW: {int(extinct.sum())}/{reps} extinct, {capped} capped")
    return GwEstimate(
        reps=reps,
        extinction_freq=float(extinct.mean()),
        leaf_gf_estimate=float(gf.mean()),
        capped=capped,
    )


def geometric_inversion(rng: np.random.Generator, q: float, size: int) -> np.ndarray:
    """M with P(M >= l) = q**l, as floor(ln(1-U) / ln q)."""
    if q <= 0.0:
        return np.zeros(size, dtype=np.int64)
    u = rng.random(size)
    return np.floor(np.log1p(-u) / math.log(q)).astype(np.int64)


def fixed_point_check(rho: float, reps: int, seed: int, threshold: Optional[int] = None) -> FixedPointCheck:
    """Two-sample KS distance between L and M + min(L1, L2) at alpha = 1, mu = rho."""
    if not 0.0 <= rho < 1.0:
        raise YuleServiceError(f"rho must lie in [0, 1), got {rho}")
    if rho == 0.0:
        zeros = np.zeros(reps, dtype=np.int64)
        return FixedPointCheck(ks_distance=0.0, pvalue=1.0, mean_M=0.0, lhs=zeros, rhs=zeros)

    lhs = sample_min_loads(1.0, rho, reps, seed, threshold).values
    first = sample_min_loads(1.0, rho, reps, seed + reps, threshold).values
    second = sample_min_loads(1.0, rho, reps, seed + 2 * reps, threshold).values
    size = min(len(first), len(second))
    M = geometric_inversion(make_rng(seed + 3 * reps), rho / (1.0 + rho), size)
    rhs = M + np.minimum(first[:size], second[:size])
    distance, pvalue = ks_two_sample(lhs, rhs)
    return FixedPointCheck(
        ks_distance=distance,
        pvalue=pvalue,
        mean_M=float(M.mean()),
        lhs=lhs,
        rhs=rhs,
    )


def simulate_classes(alpha: float, mu: float, t_max: float, seed: int) -> ClassPopulation:
    """Continuous-time class counts of the decorated Yule tree from one unmarked particle."""
    _check_rates(alpha, mu)
    rng = make_rng(seed)
    counts = np.ones(1, dtype=np.int64)
    t = 0.0
    split_prob = alpha / (alpha + mu)
    while True:
        total = counts.sum()
        t += rng.exponential(1.0 / ((alpha + mu) * total))
        if t > t_max:
            break
        cumulative = np.cumsum(counts)
        k = int(np.searchsorted(cumulative, rng.random() * total, side="right"))
        if rng.random() < split_prob:
            counts[k] += 1
        else:
            if k + 1 == len(counts):
                counts = np.append(counts, 0)
            counts[k] -= 1
            counts[k + 1] += 1
    return ClassPopulation({k: int(c) for k, c in enumerate(counts) if c > 0}, t_max)


def yule_population(alpha: float, mu: float, t: float, seed: int) -> int:
    """Total size at time t; the marks never remove particles."""
    return simulate_classes(alpha, mu, t, seed).total


def yule_height_profile(alpha: float, mu: float, height: float, seed: int) -> HeightProfile:
    """Class counts at height h with the bounds e^{(a-m)h/2} <= #min class <= e^{2(a-m)h}."""
    population = simulate_classes(alpha, mu, height, seed)
    growth = (alpha - mu) * height
    return HeightProfile(
        population=population,
        min_load=population.min_load,
        min_class_size=population.min_class_size,
        lower_bound=math.exp(0.5 * growth),
        upper_bound=math.exp(2.0 * growth),
    )
