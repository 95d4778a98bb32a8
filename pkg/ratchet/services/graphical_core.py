"""
Exact small-N realization of the graphical representation.

A realization holds the neutral arrows, the selective arrows and the mutation
marks on a time window. Types are transported forward through it, M-distances
are propagated forward by dynamic programming, and the load classes of the
ancestral selection graph are transported backward through the very same
realization, so forward/backward identities can be asserted exactly.
"""
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Tuple

import numpy as np

from ratchet.exceptions import RatchetError
from ratchet.models.graphical import (
    NEVER_MERGED,
    UNREACHABLE,
    AsgSnapshot,
    AsgTrace,
    ClickRecord,
    DistanceTrace,
    EventKind,
    ForwardResult,
    GraphicalElements,
    TypeConfig,
)
from ratchet.schemas.params import Params
from ratchet.services.streams import make_rng, replica_seed

logger = logging.getLogger(__name__)


class GraphicalServiceError(RatchetError):
    """Base exception for the graphical representation"""


class EventLogError(GraphicalServiceError):
    """Raised when an event log cannot be parsed"""


def _poisson_times(rng: np.random.Generator, rate: float, t0: float, t1: float) -> np.ndarray:
    """Arrival times of a homogeneous Poisson process, from exponential gaps."""
    if rate <= 0.0:
        return np.empty(0, dtype=np.float64)
    expected = rate * (t1 - t0)
    batch = int(expected + 5.0 * np.sqrt(expected) + 16)
    chunks = []
    current = t0
    while True:
        arrivals = current + np.cumsum(rng.exponential(1.0 / rate, size=batch))
        inside = arrivals[arrivals <= t1]
        chunks.append(inside)
        if len(inside) < batch:
            break
        current = arrivals[-1]
    return np.concatenate(chunks)


def _ordered_pairs(rng: np.random.Generator, N: int, size: int) -> np.ndarray:
    first = rng.integers(0, N, size=size)
    second = (first + rng.integers(1, N, size=size)) % N
    return np.stack((first, second), axis=1).astype(np.int64)


def sample_elements(params: Params, t0: float, t1: float, seed: int) -> GraphicalElements:
    """
    Sample the three Poisson processes on [t0, t1].

    Per ordered pair the neutral intensity is 1/(2N) and the selective one
    s_N/N; per line the mark intensity is m_N. Each process is sampled as one
    aggregated channel with the pair (or line) drawn uniformly.
    """
    if not t0 < t1:
        raise GraphicalServiceError(f"empty window [{t0}, {t1}]")
    N = params.N
    rng = make_rng(seed)
    n_pairs = N * (N - 1)

    while True:
        neutral_times = _poisson_times(rng, n_pairs / (2.0 * N), t0, t1)
        selective_times = _poisson_times(rng, n_pairs * params.s_N / N, t0, t1)
        mark_times = _poisson_times(rng, N * params.m_N, t0, t1)
        merged = np.concatenate((neutral_times, selective_times, mark_times))
        if len(np.unique(merged)) == len(merged):
            break
        logger.debug(f"Timestamp collision for seed {seed}; resampling")

    elements = GraphicalElements(
        N=N,
        t0=float(t0),
        t1=float(t1),
        neutral_pairs=_ordered_pairs(rng, N, len(neutral_times)) if N > 1 else np.empty((0, 2), dtype=np.int64),
        neutral_times=neutral_times,
        selective_pairs=_ordered_pairs(rng, N, len(selective_times)) if N > 1 else np.empty((0, 2), dtype=np.int64),
        selective_times=selective_times,
        mark_lines=rng.integers(0, N, size=len(mark_times)).astype(np.int64),
        mark_times=mark_times,
    )
    return elements


def forward_transport(
    elements: GraphicalElements, init: TypeConfig, record_history: bool = False
) -> ForwardResult:
    """Transport a type configuration forward and record every click of min eta."""
    if init.time != elements.t0:
        raise GraphicalServiceError(f"initial configuration at {init.time}, window starts at {elements.t0}")
    eta = np.array(init.values, dtype=np.int64)
    if len(eta) != elements.N:
        raise GraphicalServiceError(f"configuration has {len(eta)} lines, expected {elements.N}")

    best = int(eta.min())
    clicks: List[ClickRecord] = []
    events = elements.events()
    history = np.empty((len(events) + 1, elements.N), dtype=np.int64) if record_history else None
    times = np.empty(len(events) + 1) if record_history else None
    if record_history:
        history[0] = eta
        times[0] = elements.t0

    for idx, event in enumerate(events, start=1):
        if event.kind == EventKind.neutral:
            eta[event.j] = eta[event.i]
        elif event.kind == EventKind.selective:
            if eta[event.i] < eta[event.j]:
                eta[event.j] = eta[event.i]
        else:
            eta[event.i] += 1

        new_best = int(eta.min())
        while best < new_best:
            best += 1
            clicks.append(ClickRecord(event.t, best))
        if record_history:
            history[idx] = eta
            times[idx] = event.t

    return ForwardResult(
        clicks=clicks,
        final=TypeConfig(eta, elements.t1),
        times=times,
        history=history,
    )


def m_distance(elements: GraphicalElements, source: Iterable[int]) -> DistanceTrace:
    """Forward dynamic programming of d_M(source x {t0}, (j, t)) for every line j."""
    source = list(source)
    if not source:
        raise GraphicalServiceError("source set must be nonempty")

    dist = np.full(elements.N, UNREACHABLE)
    dist[source] = 0.0
    events = elements.events()
    distances = np.empty((len(events) + 1, elements.N))
    times = np.empty(len(events) + 1)
    distances[0] = dist
    times[0] = elements.t0

    for idx, event in enumerate(events, start=1):
        if event.kind == EventKind.neutral:
            dist[event.j] = dist[event.i]
        elif event.kind == EventKind.selective:
            dist[event.j] = min(dist[event.j], dist[event.i])
        else:
            dist[event.i] += 1.0
        distances[idx] = dist
        times[idx] = event.t

    return DistanceTrace(times=times, distances=distances)


def _load_classes(loads: np.ndarray) -> Dict[int, FrozenSet[int]]:
    classes: Dict[int, set] = {}
    for line in np.flatnonzero(np.isfinite(loads)):
        classes.setdefault(int(loads[line]), set()).add(int(line))
    return {k: frozenset(lines) for k, lines in sorted(classes.items())}


def _snapshot(time: float, loads: np.ndarray) -> AsgSnapshot:
    classes = _load_classes(loads)
    min_load = min(classes) if classes else UNREACHABLE
    return AsgSnapshot(time=time, load_classes=classes, min_load=min_load)


def asg_backward(elements: GraphicalElements, targets: Iterable[int]) -> AsgTrace:
    """
    Transport the load classes of the potential ancestors of targets x {t1}
    backward in time.

    In reverse time order:
      neutral (i, j), j in the graph: i takes min(load_i, load_j), j leaves;
      selective (i, j), j in the graph: i takes min(load_i, load_j), j stays;
      mark on i, i in the graph: load_i += 1.
    A backward click T_l is recorded the first time (going back) min_load
    reaches l.
    """
    targets = list(targets)
    if not targets:
        raise GraphicalServiceError("target set must be nonempty")

    loads = np.full(elements.N, UNREACHABLE)
    loads[targets] = 0.0
    snapshots = [_snapshot(elements.t1, loads)]
    backward_clicks: List[Tuple[int, float]] = [(0, elements.t1)]
    level = 0

    for event in elements.events(reverse=True):
        if event.kind == EventKind.neutral:
            if np.isfinite(loads[event.j]):
                loads[event.i] = min(loads[event.i], loads[event.j])
                loads[event.j] = UNREACHABLE
        elif event.kind == EventKind.selective:
            if np.isfinite(loads[event.j]):
                loads[event.i] = min(loads[event.i], loads[event.j])
        elif np.isfinite(loads[event.i]):
            loads[event.i] += 1.0

        snapshot = _snapshot(event.t, loads)
        snapshots.append(snapshot)
        while snapshot.load_classes and level < snapshot.min_load:
            level += 1
            backward_clicks.append((level, event.t))

    return AsgTrace(snapshots=snapshots, backward_clicks=backward_clicks, loads=loads.copy())


def min_load_asg(trace: AsgTrace) -> List[Tuple[float, FrozenSet[int]]]:
    """The minimum-load potential ancestors after every backward step."""
    return [
        (s.time, s.load_classes[int(s.min_load)] if s.load_classes else frozenset())
        for s in trace.snapshots
    ]


def is_dual_move(delta: np.ndarray) -> bool:
    """
    True if a change of the level counts is one of the hierarchy moves:
    0, -e_k, +e_k, e_k - e_k' (k < k'), e_{k+1} - e_k.
    """
    nonzero = np.flatnonzero(delta)
    if len(nonzero) == 0:
        return True
    if len(nonzero) == 1:
        return abs(int(delta[nonzero[0]])) == 1
    if len(nonzero) == 2:
        low, high = nonzero
        if delta[low] == 1 and delta[high] == -1:
            return True
        if delta[low] == -1 and delta[high] == 1 and high == low + 1:
            return True
    return False


def audit_transitions(trace: AsgTrace) -> int:
    """Number of backward steps whose count change is not a hierarchy move."""
    counts = trace.counts_matrix()
    violations = 0
    for before, after in zip(counts[:-1], counts[1:]):
        if not is_dual_move(after - before):
            violations += 1
    return violations


def merging_time(
    elements: GraphicalElements, targets1: Iterable[int], targets2: Iterable[int], k: int
) -> float:
    """sup{t <= t1 : the load-k classes of both backward runs coincide}; NEVER_MERGED if none."""
    first = asg_backward(elements, targets1)
    second = asg_backward(elements, targets2)
    empty: FrozenSet[int] = frozenset()
    for snap1, snap2 in zip(first.snapshots, second.snapshots):
        if snap1.load_classes.get(k, empty) == snap2.load_classes.get(k, empty):
            return snap1.time
    return NEVER_MERGED


def merging_probability(params: Params, window: float, reps: int, seed: int, k: int = 0) -> float:
    """Fraction of realizations on [0, window] in which two disjoint halves of the population merge at load k."""
    half = params.N // 2
    first, second = range(half), range(half, params.N)
    merged = 0
    for r in range(reps):
        elements = sample_elements(params, 0.0, window, replica_seed(seed, r))
        if merging_time(elements, first, second, k) != NEVER_MERGED:
            merged += 1
    logger.info(f"merging at load {k}: {merged}/{reps} realizations within window {window}")
    return merged / reps


@dataclass
class CouplingDiagnostic:
    equal_count_rate: float
    mean_abs_gap: float
    realizations: int


def click_coupling_diagnostic(params: Params, window: float, reps: int, seed: int) -> CouplingDiagnostic:
    """
    Compare forward click times with backward click times on the middle half of
    the window of each realization. Reported as a rate; the two agree only
    asymptotically.
    """
    lo, hi = 0.25 * window, 0.75 * window
    equal = 0
    gaps: List[float] = []
    for r in range(reps):
        elements = sample_elements(params, 0.0, window, replica_seed(seed, r))
        forward = forward_transport(elements, TypeConfig.zeros(params.N))
        backward = asg_backward(elements, range(params.N))
        fwd = sorted(c.time for c in forward.clicks if lo <= c.time <= hi)
        bwd = sorted(t for level, t in backward.backward_clicks if level > 0 and lo <= t <= hi)
        if len(fwd) == len(bwd):
            equal += 1
            gaps.extend(abs(a - b) for a, b in zip(fwd, bwd))
    return CouplingDiagnostic(
        equal_count_rate=equal / reps,
        mean_abs_gap=float(np.mean(gaps)) if gaps else float("nan"),
        realizations=reps,
    )


def dump_events(elements: GraphicalElements, path: Path) -> None:
    """One JSON object per line; the first line carries N and the window."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"kind": "header", "N": elements.N, "window": [elements.t0, elements.t1]}) + "\n")
        for event in elements.events():
            record = {"kind": event.kind.name, "i": event.i, "t": event.t}
            if event.kind != EventKind.mark:
                record["j"] = event.j
            fh.write(json.dumps(record) + "\n")


def load_events(path: Path) -> GraphicalElements:
    neutral, selective, marks = [], [], []
    header = None
    with open(path, "r", encoding="utf-8") as fh:
        for line_num, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                kind = record["kind"]
                if kind == "header":
                    header = record
                elif kind == "neutral":
                    neutral.append((record["i"], record["j"], record["t"]))
                elif kind == "selective":
                    selective.append((record["i"], record["j"], record["t"]))
                elif kind == "mark":
                    marks.append((record["i"], record["t"]))
                else:
                    raise EventLogError(f"Line {line_num}: unknown kind {kind!r}")
            except (KeyError, ValueError) as e:
                raise EventLogError(f"Line {line_num}: {e}")
    if header is None:
        raise EventLogError(f"{path}: missing header line")
    return GraphicalElements.build(header["N"], tuple(header["window"]), neutral, selective, marks)
