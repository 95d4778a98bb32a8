import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Dict, FrozenSet, List, NamedTuple, Optional, Tuple

import numpy as np

# Distances and loads are float64 so that "no path" is an explicit infinity.
UNREACHABLE = math.inf
NEVER_MERGED = -math.inf


class EventKind(IntEnum):
    neutral = 0
    selective = 1
    mark = 2


class Event(NamedTuple):
    kind: EventKind
    i: int
    j: int  # -1 for mutation marks
    t: float


@dataclass(frozen=True)
class GraphicalElements:
    """
    One realization of the three Poisson processes on [t0, t1].

    Lines are 0-based indices 0..N-1. Arrow arrays have shape (n, 2) holding
    (i, j) with i != j; times are sorted and pairwise distinct across all three
    processes.
    """

    N: int
    t0: float
    t1: float
    neutral_pairs: np.ndarray
    neutral_times: np.ndarray
    selective_pairs: np.ndarray
    selective_times: np.ndarray
    mark_lines: np.ndarray
    mark_times: np.ndarray

    @classmethod
    def build(
        cls,
        N: int,
        window: Tuple[float, float],
        neutral: List[Tuple[int, int, float]] = (),
        selective: List[Tuple[int, int, float]] = (),
        marks: List[Tuple[int, float]] = (),
    ) -> "GraphicalElements":
        """Hand-built realization, e.g. for fixtures; validates every invariant."""

        def arrows(items):
            items = sorted(items, key=lambda e: e[2])
            pairs = np.array([(i, j) for i, j, _ in items], dtype=np.int64).reshape(-1, 2)
            times = np.array([t for _, _, t in items], dtype=np.float64)
            return pairs, times

        n_pairs, n_times = arrows(neutral)
        s_pairs, s_times = arrows(selective)
        marks = sorted(marks, key=lambda e: e[1])
        m_lines = np.array([i for i, _ in marks], dtype=np.int64)
        m_times = np.array([t for _, t in marks], dtype=np.float64)
        elements = cls(N, float(window[0]), float(window[1]), n_pairs, n_times, s_pairs, s_times, m_lines, m_times)
        elements.validate()
        return elements

    def validate(self) -> None:
        for pairs in (self.neutral_pairs, self.selective_pairs):
            if len(pairs) and np.any(pairs[:, 0] == pairs[:, 1]):
                raise ValueError("arrow with i == j")
            if len(pairs) and (pairs.min() < 0 or pairs.max() >= self.N):
                raise ValueError("arrow line outside 0..N-1")
        if len(self.mark_lines) and (self.mark_lines.min() < 0 or self.mark_lines.max() >= self.N):
            raise ValueError("mark line outside 0..N-1")
        times = self.all_times()
        if len(times) and (times.min() < self.t0 or times.max() > self.t1):
            raise ValueError("event time outside the window")
        if len(np.unique(times)) != len(times):
            raise ValueError("event times are not pairwise distinct")

    def all_times(self) -> np.ndarray:
        return np.concatenate((self.neutral_times, self.selective_times, self.mark_times))

    @property
    def n_events(self) -> int:
        return len(self.neutral_times) + len(self.selective_times) + len(self.mark_times)

    def events(self, reverse: bool = False) -> List[Event]:
        """All events merged in time order (or reverse time order)."""
        merged = (
            [Event(EventKind.neutral, int(i), int(j), float(t)) for (i, j), t in zip(self.neutral_pairs, self.neutral_times)]
            + [Event(EventKind.selective, int(i), int(j), float(t)) for (i, j), t in zip(self.selective_pairs, self.selective_times)]
            + [Event(EventKind.mark, int(i), -1, float(t)) for i, t in zip(self.mark_lines, self.mark_times)]
        )
        merged.sort(key=lambda e: e.t, reverse=reverse)
        return merged

    def restrict(self, t_start: float, t_end: float) -> "GraphicalElements":
        """The same realization seen on the sub-window [t_start, t_end]."""

        def keep(times):
            return (times >= t_start) & (times <= t_end)

        n_mask, s_mask, m_mask = keep(self.neutral_times), keep(self.selective_times), keep(self.mark_times)
        return GraphicalElements(
            self.N, t_start, t_end,
            self.neutral_pairs[n_mask], self.neutral_times[n_mask],
            self.selective_pairs[s_mask], self.selective_times[s_mask],
            self.mark_lines[m_mask], self.mark_times[m_mask],
        )

    def with_extra_mark(self, line: int, t: float) -> "GraphicalElements":
        lines = np.append(self.mark_lines, line)
        times = np.append(self.mark_times, t)
        order = np.argsort(times, kind="stable")
        extended = GraphicalElements(
            self.N, self.t0, self.t1,
            self.neutral_pairs, self.neutral_times,
            self.selective_pairs, self.selective_times,
            lines[order], times[order],
        )
        extended.validate()
        return extended


@dataclass(frozen=True)
class TypeConfig:
    """Type eta(i, t) of every line at one time"""

    values: np.ndarray
    time: float

    @classmethod
    def zeros(cls, N: int, time: float = 0.0) -> "TypeConfig":
        return cls(np.zeros(N, dtype=np.int64), time)

    def __post_init__(self):
        if np.any(np.asarray(self.values) < 0):
            raise ValueError("types must be nonnegative")


class ClickRecord(NamedTuple):
    time: float
    best_type: int


@dataclass
class ForwardResult:
    clicks: List[ClickRecord]
    final: TypeConfig
    times: Optional[np.ndarray] = None
    history: Optional[np.ndarray] = None


@dataclass
class DistanceTrace:
    """d_M(source x {t0}, (j, t)) for all lines j, right after every event"""

    times: np.ndarray
    distances: np.ndarray

    def at(self, t: float) -> np.ndarray:
        """Distances in force at time t (right-continuous)."""
        idx = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.distances[max(idx, 0)]

    @property
    def final(self) -> np.ndarray:
        return self.distances[-1]


@dataclass(frozen=True)
class AsgSnapshot:
    time: float
    load_classes: Dict[int, FrozenSet[int]]
    min_load: float

    @property
    def counts(self) -> Dict[int, int]:
        return {k: len(lines) for k, lines in self.load_classes.items()}

    def count_vector(self, length: int) -> np.ndarray:
        vec = np.zeros(length, dtype=np.int64)
        for k, lines in self.load_classes.items():
            if k < length:
                vec[k] = len(lines)
        return vec


@dataclass
class AsgTrace:
    snapshots: List[AsgSnapshot]
    backward_clicks: List[Tuple[int, float]]
    loads: np.ndarray

    @property
    def final(self) -> AsgSnapshot:
        return self.snapshots[-1]

    def counts_matrix(self) -> np.ndarray:
        finite = [max(s.load_classes) for s in self.snapshots if s.load_classes]
        width = (max(finite) + 2) if finite else 1
        return np.array([s.count_vector(width) for s in self.snapshots])
