"""Test statistics shared by the experiments and the acceptance checks."""
import logging
from collections import Counter
from typing import Hashable, Iterable, Sequence, Tuple

import numpy as np
from scipy import stats

logger = logging.getLogger(__name__)

MIN_EXPECTED = 5.0


def _pooled_table(first: Iterable[Hashable], second: Iterable[Hashable], min_expected: float) -> np.ndarray:
    a, b = Counter(first), Counter(second)
    n_a, n_b = sum(a.values()), sum(b.values())
    categories = sorted(set(a) | set(b), key=lambda c: (a[c] + b[c]), reverse=True)
    columns = []
    pooled = [0, 0]
    for category in categories:
        column = [a[category], b[category]]
        smallest_expected = min(n_a, n_b) * sum(column) / (n_a + n_b)
        if smallest_expected >= min_expected:
            columns.append(column)
        else:
            pooled[0] += column[0]
            pooled[1] += column[1]
    if sum(pooled):
        columns.append(pooled)
    return np.array(columns, dtype=np.int64).T


def two_sample_chi2(
    first: Iterable[Hashable], second: Iterable[Hashable], min_expected: float = MIN_EXPECTED
) -> Tuple[float, float]:
    """
    Chi-square homogeneity test of two categorical samples.

    Categories with small expected counts are pooled into one column. Returns
    (statistic, p-value); a single remaining column gives (0, 1).
    """
    table = _pooled_table(first, second, min_expected)
    if table.shape[1] < 2:
        return 0.0, 1.0
    result = stats.chi2_contingency(table, correction=False)
    return float(result[0]), float(result[1])


def goodness_of_fit(samples: Sequence[int], weights: Sequence[float], min_expected: float = MIN_EXPECTED) -> float:
    """Chi-square p-value of integer samples against the weights p_0.., with the tail pooled."""
    samples = np.asarray(samples, dtype=np.int64)
    n = len(samples)
    weights = np.asarray(weights, dtype=np.float64)
    cutoff = 0
    while cutoff < len(weights) and n * weights[cutoff] >= min_expected:
        cutoff += 1
    cutoff = max(cutoff, 1)
    observed = np.bincount(np.minimum(samples, cutoff), minlength=cutoff + 1)[: cutoff + 1].astype(float)
    expected = n * np.append(weights[:cutoff], max(0.0, 1.0 - weights[:cutoff].sum()))
    if expected[-1] < min_expected:
        observed[-2] += observed[-1]
        expected[-2] += expected[-1]
        observed, expected = observed[:-1], expected[:-1]
    if len(observed) < 2:
        return 1.0
    expected *= observed.sum() / expected.sum()
    return float(stats.chisquare(observed, expected).pvalue)


def ks_two_sample(first: Sequence[float], second: Sequence[float]) -> Tuple[float, float]:
    result = stats.ks_2samp(first, second)
    return float(result.statistic), float(result.pvalue)


def exponent_slope(scales: Sequence[float], mean_gaps: Sequence[float], f_values: Sequence[float]) -> float:
    """Least-squares slope of ln(mean_gap / f(N)) against N/f(N)."""
    y = np.log(np.asarray(mean_gaps, dtype=np.float64) / np.asarray(f_values, dtype=np.float64))
    slope, _ = np.polyfit(np.asarray(scales, dtype=np.float64), y, 1)
    return float(slope)


def standard_error(values: Sequence[float]) -> float:
    values = np.asarray(values, dtype=np.float64)
    if len(values) < 2:
        return float("nan")
    return float(values.std(ddof=1) / np.sqrt(len(values)))
