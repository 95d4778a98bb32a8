"""
Exact aggregated-rate Gillespie simulation of the type-frequency process.

Types are kept relative to the current best type: `counts[k]` is the number of
individuals of type best + k. Per event three aggregated channels compete:

  mutation     m_N * N                       class k -> k+1
  resampling   (N**2 - sum c_k**2) / (2N)    ordered pair of distinct classes
  selection    s_N * sum_{k<k'} c_k c_k' / N  lower class replaces higher

and the class (pair) is drawn in a second stage proportional to its weight.
"""
import logging
import math
from collections import Counter
from typing import Iterable, List, Optional, Sequence

import numpy as np
from scipy import stats

from ratchet.config import settings
from ratchet.exceptions import RatchetError
from ratchet.models.population import (
    Click,
    ClickStatistics,
    JointCounts,
    PopState,
    SimOutput,
    Snapshot,
    Y0AuditRecord,
)
from ratchet.schemas.params import Params
from ratchet.services.analytic_profile import y0_rates
from ratchet.services.streams import make_rng, replica_seed

logger = logging.getLogger(__name__)


class MoranServiceError(RatchetError):
    """Base exception for the forward simulator"""


class InsufficientDataError(MoranServiceError):
    """Raised when there are too few snapshots or clicks for a statistic"""


def default_burn_in(params: Params) -> float:
    return settings.burn_in_factor * params.f_of_N * math.log(max(params.N, 2))


def _pick(weights: np.ndarray, u: float) -> int:
    cumulative = np.cumsum(weights)
    idx = int(np.searchsorted(cumulative, u * cumulative[-1], side="right"))
    return min(idx, len(weights) - 1)


class MoranSimulator:
    """One exact realization of the forward population process"""

    def __init__(self, params: Params, seed: int, init_counts: Optional[Sequence[int]] = None):
        self.params = params
        self.rng = make_rng(seed)
        if init_counts is None:
            init_counts = [params.N]
        counts = np.array(init_counts, dtype=np.int64)
        if counts.sum() != params.N or counts[0] < 1 or np.any(counts < 0):
            raise MoranServiceError(f"initial counts {list(init_counts)} do not describe N={params.N} with a nonempty best class")
        self.counts = counts
        self.best = 0
        self.time = 0.0

    def state(self) -> PopState:
        return PopState(
            best_type=self.best,
            counts={self.best + k: int(c) for k, c in enumerate(self.counts) if c > 0},
            time=self.time,
        )

    def run(
        self,
        t_max: float,
        snapshot_times: Iterable[float] = (),
        track_y0: bool = False,
        audit_y0: bool = False,
    ) -> SimOutput:
        params = self.params
        N = params.N
        s_N, m_N = params.s_N, params.m_N
        rng = self.rng

        grid = sorted(t for t in snapshot_times if self.time <= t <= t_max)
        next_snap = 0
        clicks: List[Click] = []
        snapshots: List[Snapshot] = []
        initial_best = self.best
        y0_path = [(self.time, int(self.counts[0]))] if track_y0 else None
        audit: Optional[List[Y0AuditRecord]] = [] if audit_y0 else None
        n_events = 0
        total_mut = m_N * N

        while True:
            c = self.counts.astype(np.float64)
            resample_w = c * (N - c)
            above = N - np.cumsum(c)
            select_w = c * above
            total_res = resample_w.sum() / (2.0 * N)
            total_sel = s_N * select_w.sum() / N
            total = total_mut + total_res + total_sel

            t_next = self.time + rng.exponential(1.0 / total) if total > 0.0 else math.inf
            while next_snap < len(grid) and grid[next_snap] < t_next:
                snapshots.append(Snapshot(grid[next_snap], self.counts / N))
                next_snap += 1
            if t_next > t_max:
                self.time = t_max
                break

            tracking_y0 = self.best == initial_best
            n_before = int(self.counts[0]) if tracking_y0 else 0

            u = rng.random() * total
            if u < total_mut:
                k = _pick(c, rng.random())
                if k + 1 == len(self.counts):
                    self.counts = np.append(self.counts, 0)
                self.counts[k] -= 1
                self.counts[k + 1] += 1
            elif u < total_mut + total_res:
                parent = _pick(resample_w, rng.random())
                victims = c.copy()
                victims[parent] = 0.0
                victim = _pick(victims, rng.random())
                self.counts[parent] += 1
                self.counts[victim] -= 1
            else:
                parent = _pick(select_w, rng.random())
                victim = parent + 1 + _pick(c[parent + 1:], rng.random())
                self.counts[parent] += 1
                self.counts[victim] -= 1
            self.time = t_next
            n_events += 1

            if audit is not None and tracking_y0:
                birth, death = y0_rates(params, n_before)
                audit.append(
                    Y0AuditRecord(
                        time=self.time,
                        n_before=n_before,
                        n_after=int(self.counts[0]),
                        birth_state=resample_w[0] / (2.0 * N) + s_N * select_w[0] / N,
                        death_state=resample_w[0] / (2.0 * N) + m_N * c[0],
                        birth_formula=birth,
                        death_formula=death,
                    )
                )

            while self.counts[0] == 0:
                self.counts = self.counts[1:]
                self.best += 1
                clicks.append(Click(self.time, self.best))
                logger.debug(f"click to best type {self.best} at t={self.time:.4f}")

            if y0_path is not None and tracking_y0:
                y0_path.append((self.time, int(self.counts[0]) if self.best == initial_best else 0))

            if len(self.counts) > 1 and self.counts[-1] == 0:
                self.counts = np.trim_zeros(self.counts, "b")

        return SimOutput(
            clicks=clicks,
            profile_snapshots=snapshots,
            final=self.state(),
            y0_path=y0_path,
            y0_audit=audit,
            n_events=n_events,
        )


def simulate(
    params: Params,
    t_max: float,
    snapshot_times: Iterable[float],
    seed: int,
    track_y0: bool = False,
) -> SimOutput:
    """Exact jump chain from the all-type-0 population up to t_max."""
    if t_max <= 0:
        raise MoranServiceError(f"t_max must be positive, got {t_max}")
    output = MoranSimulator(params, seed).run(t_max, snapshot_times, track_y0=track_y0)
    logger.debug(f"seed {seed}: {output.n_events} events, {len(output.clicks)} clicks")
    return output


def empirical_profile(output: SimOutput, burn_in: float) -> np.ndarray:
    """Time average of X_k over the snapshots taken at or after burn_in."""
    kept = [s.profile for s in output.profile_snapshots if s.time >= burn_in]
    if not kept:
        raise InsufficientDataError(f"no profile snapshots after burn-in {burn_in}")
    width = max(len(p) for p in kept)
    stacked = np.zeros((len(kept), width))
    for row, profile in enumerate(kept):
        stacked[row, : len(profile)] = profile
    return stacked.mean(axis=0)


def click_statistics(output: SimOutput) -> ClickStatistics:
    """
    Inter-click gap statistics with a KS test against the fitted exponential.

    Without any click the gap fields stay empty; a single click is
    insufficient data.
    """
    times = output.click_times
    count = len(times)
    if count == 0:
        return ClickStatistics(count=0)
    if count < 2:
        raise InsufficientDataError(f"need at least 2 clicks for gap statistics, got {count}")
    gaps = np.diff(times)
    positive = gaps[gaps > 0]
    mean_gap = float(gaps.mean())
    cv = float(gaps.std(ddof=1) / mean_gap) if len(gaps) > 1 and mean_gap > 0 else float("nan")
    pvalue = float(stats.kstest(positive, "expon", args=(0.0, mean_gap)).pvalue) if len(positive) and mean_gap > 0 else float("nan")
    return ClickStatistics(count=count, mean_gap=mean_gap, cv=cv, exponential_fit_pvalue=pvalue, gaps=gaps)


def joint_type_counts(
    params: Params, t_obs: float, sample_size: int, reps: int, seed: int, draws_per_rep: int = 1
) -> JointCounts:
    """
    Joint law of (eta - K*) for sample_size distinct uniformly drawn individuals.

    Each replica is observed once at t_obs; draws_per_rep independent samples
    are taken from that one population.
    """
    if draws_per_rep < 1:
        raise MoranServiceError(f"draws_per_rep must be >= 1, got {draws_per_rep}")
    if sample_size < 1 or sample_size > params.N:
        raise MoranServiceError(f"sample size must lie in 1..N, got {sample_size}")
    tally: Counter = Counter()
    for r in range(reps):
        simulator = MoranSimulator(params, replica_seed(seed, r))
        simulator.run(t_obs)
        boundaries = np.cumsum(simulator.counts)
        for _ in range(draws_per_rep):
            drawn = simulator.rng.choice(params.N, size=sample_size, replace=False)
            relative = tuple(int(k) for k in np.searchsorted(boundaries, drawn, side="right"))
            tally[relative] += 1
    total = reps * draws_per_rep
    frequencies = {key: count / total for key, count in sorted(tally.items())}
    return JointCounts(sample_size=sample_size, reps=reps, frequencies=frequencies)


def y0_audit(params: Params, t_max: float, seed: int) -> List[Y0AuditRecord]:
    """Per-event audit of the initially-best class count until it dies out."""
    output = MoranSimulator(params, seed).run(t_max, audit_y0=True)
    return output.y0_audit
