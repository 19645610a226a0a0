"""Descriptive statistics and the Wilcoxon rank-sum (Mann-Whitney U) test.

Two-sided p-values come either from the exact permutation distribution of U
(small, tie-free samples) or from the normal approximation with continuity
correction and tie-corrected variance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import EmptySample

EXACT_MAX_TOTAL = 20
SIGNIFICANCE = 0.05


@dataclass(frozen=True)
class SampleSummary:
    n: int
    mean: float
    std: float


@dataclass(frozen=True)
class RankSumResult:
    u_statistic: float
    rank_sum: float
    z_value: float
    p_two_sided: float
    method: str
    tie_groups: Tuple[int, ...]

    @property
    def significant(self) -> bool:
        return self.p_two_sided < SIGNIFICANCE


@dataclass(frozen=True)
class GroupComparison:
    cutin: SampleSummary
    other: SampleSummary
    test: RankSumResult
    cell: Optional[tuple] = None

    @property
    def p_value(self) -> float:
        return self.test.p_two_sided

    @property
    def mean_difference(self) -> float:
        return self.cutin.mean - self.other.mean


def _as_sample(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise EmptySample()
    return arr


def summarize(sample: Sequence[float]) -> SampleSummary:
    """Mean and n-1 standard deviation."""
    x = _as_sample(sample)
    n = int(x.size)
    if np.all(x == x[0]):
        return SampleSummary(n, float(x[0]), 0.0)
    mean = math.fsum(x) / n
    std = math.sqrt(math.fsum((x - mean) ** 2) / (n - 1))
    return SampleSummary(n, mean, std)


def midranks(values: np.ndarray) -> Tuple[np.ndarray, Tuple[int, ...]]:
    """Ascending ranks starting at 1, ties sharing their average rank.

    Also returns the sizes of tie groups with more than one member.
    """
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    boundaries = np.flatnonzero(np.r_[True, sorted_vals[1:] != sorted_vals[:-1], True])
    ranks = np.empty(n, dtype=np.float64)
    ties = []
    for lo, hi in zip(boundaries[:-1], boundaries[1:]):
        ranks[order[lo:hi]] = 0.5 * (lo + 1 + hi)
        if hi - lo > 1:
            ties.append(int(hi - lo))
    return ranks, tuple(ties)


def rank_sum_u(a: Sequence[float], b: Sequence[float]) -> Tuple[float, float, Tuple[int, ...]]:
    """(U_a, rank sum of a, tie group sizes) for the pooled ranking."""
    a, b = _as_sample(a), _as_sample(b)
    ranks, ties = midranks(np.concatenate([a, b]))
    r_a = float(math.fsum(ranks[: len(a)]))
    n_a = len(a)
    return r_a - n_a * (n_a + 1) / 2.0, r_a, ties


@lru_cache(maxsize=None)
def u_null_counts(n_a: int, n_b: int) -> Tuple[int, ...]:
    """Number of rank assignments giving each U = 0..n_a*n_b under the null.

    Uses f(m, n, u) = f(m - 1, n, u - n) + f(m, n - 1, u): the largest pooled
    value either belongs to the first sample (beating all n of the second) or
    not.
    """
    if n_a == 0 or n_b == 0:
        return (1,)
    with_top = u_null_counts(n_a - 1, n_b)  # shifted by n_b
    without = u_null_counts(n_a, n_b - 1)
    out = [0] * (n_a * n_b + 1)
    for u, c in enumerate(without):
        out[u] += c
    for u, c in enumerate(with_top):
        out[u + n_b] += c
    return tuple(out)


def exact_p_fraction(u_obs: int, n_a: int, n_b: int) -> Fraction:
    counts = u_null_counts(n_a, n_b)
    total = sum(counts)
    lower = sum(counts[: u_obs + 1])
    upper = sum(counts[u_obs:])
    return min(Fraction(1), 2 * Fraction(min(lower, upper), total))


def _normal_z(u: float, n_a: int, n_b: int, ties: Tuple[int, ...]) -> Optional[float]:
    n = n_a + n_b
    tie_term = sum(t ** 3 - t for t in ties)
    var = n_a * n_b * (n ** 3 - n - tie_term) / (12.0 * n * (n - 1))
    if var <= 0:
        return None
    diff = u - n_a * n_b / 2.0
    corrected = math.copysign(max(abs(diff) - 0.5, 0.0), diff)
    return corrected / math.sqrt(var)


def p_value(a: Sequence[float], b: Sequence[float], mode: str = "auto") -> RankSumResult:
    """Two-sided rank-sum test of ``a`` against ``b``.

    ``mode`` is ``exact``, ``normal`` or ``auto`` (exact for tie-free samples
    with at most 20 values in total).
    """
    if mode not in ("auto", "exact", "normal"):
        raise ValueError(f"unknown mode {mode!r}")
    a, b = _as_sample(a), _as_sample(b)
    n_a, n_b = len(a), len(b)
    u, r_a, ties = rank_sum_u(a, b)
    if mode == "auto":
        mode = "exact" if (n_a + n_b <= EXACT_MAX_TOTAL and not ties) else "normal"
    z = _normal_z(u, n_a, n_b, ties)
    if mode == "exact":
        if ties:
            raise ValueError("exact p-value requires samples without ties")
        p = float(exact_p_fraction(int(round(u)), n_a, n_b))
    elif z is None:
        p = 1.0  # every pooled value equal
    else:
        p = min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))
    method = "exact" if mode == "exact" else "normal_approx"
    return RankSumResult(u, r_a, 0.0 if z is None else z, p, method, ties)


def compare_groups(cutin: Sequence[float], other: Sequence[float], cell: Optional[tuple] = None) -> GroupComparison:
    if len(cutin) == 0 or len(other) == 0:
        which = "cut-in" if len(cutin) == 0 else "other"
        raise EmptySample(f"empty {which} group", cell=cell)
    return GroupComparison(summarize(cutin), summarize(other), p_value(cutin, other, "auto"), cell)
