"""Bootstrap confidence intervals, Wilcoxon signed-rank test, tied ranking."""

from __future__ import annotations

import logging
import math
import zlib
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy.stats import norm, rankdata

log = logging.getLogger(__name__)

EXACT_MAX_N = 25
MIN_PAIRS = 5


class UnderpoweredTest(ValueError):
    """Too few non-zero paired differences for the signed-rank test."""


def group_rng(seed: int, key: str) -> np.random.Generator:
    """Independent generator per group so scheduling order cannot change results."""
    return np.random.default_rng([seed, zlib.crc32(key.encode("utf-8"))])


def bootstrap_ci(n: int, statistic: Callable[[np.ndarray], float], n_resamples: int = 1000,
                 rng: Optional[np.random.Generator] = None, confidence: float = 0.95
                 ) -> tuple[float, float, float]:
    """Percentile bootstrap over record indices.

    ``statistic`` receives an index array (with repeats) and returns the
    metric on that resample. Returns ``(point, low, high)``.
    """
    if n < 1:
        raise ValueError("bootstrap of an empty sample")
    rng = rng if rng is not None else np.random.default_rng(0)
    point = float(statistic(np.arange(n)))
    stats = [statistic(idx) for idx in bootstrap_indices(n, n_resamples, rng)]
    return (point, *percentile_interval(stats, confidence))


def _signed_rank_stat(a, b):
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    if d.ndim != 1:
        raise ValueError("paired samples must be 1-D")
    d = d[d != 0]
    if d.size < MIN_PAIRS:
        raise UnderpoweredTest(f"{d.size} non-zero differences, need at least {MIN_PAIRS}")
    ranks = rankdata(np.abs(d))
    return float(ranks[d > 0].sum()), ranks


def exact_null_counts(ranks: np.ndarray) -> dict[int, int]:
    """Counts of each doubled positive-rank sum over all 2^n sign assignments.

    Ranks may be half-integers (ties), so they are doubled to stay integral.
    """
    doubled = np.rint(2 * np.asarray(ranks)).astype(int)
    total = int(doubled.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for r in doubled:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:total + 1 - r]
        counts = counts + shifted
    return {s: int(c) for s, c in enumerate(counts) if c}


def bootstrap_indices(n: int, n_resamples: int, rng: np.random.Generator) -> np.ndarray:
    """``(n_resamples, n)`` record indices drawn with replacement."""
    return rng.integers(0, n, size=(n_resamples, n))


def percentile_interval(samples, confidence: float = 0.95) -> tuple[float, float]:
    alpha = (1.0 - confidence) / 2.0
    low, high = np.quantile(np.asarray(samples, dtype=float), [alpha, 1.0 - alpha])
    return float(low), float(high)


def wilcoxon_signed_rank(a: Sequence[float], b: Sequence[float],
                         method: str = "auto") -> float:
    """Two-sided Wilcoxon signed-rank p-value for paired samples.

    Zero differences are dropped and tied magnitudes get average ranks. With
    ``method="auto"`` the exact null distribution is used up to 25 pairs and
    a tie- and continuity-corrected normal approximation above that.
    """
    if len(a) != len(b):
        raise ValueError("paired samples must have equal length")
    w_plus, ranks = _signed_rank_stat(a, b)
    n = ranks.size
    if method == "auto":
        method = "exact" if n <= EXACT_MAX_N else "approx"

    if method == "exact":
        counts = exact_null_counts(ranks)
        w2 = int(round(2 * w_plus))
        total = 2 ** n
        lower = sum(c for s, c in counts.items() if s <= w2)
        upper = sum(c for s, c in counts.items() if s >= w2)
        return min(1.0, 2 * min(lower, upper) / total)

    if method == "approx":
        mean = n * (n + 1) / 4.0
        _, tie_sizes = np.unique(ranks, return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_sizes ** 3 - tie_sizes) / 48.0
        if var <= 0:
            return 1.0
        dev = abs(w_plus - mean)
        z = max(dev - 0.5, 0.0) / math.sqrt(var)
        return min(1.0, 2.0 * float(norm.sf(z)))

    raise ValueError(f"unknown method {method!r}")


@dataclass
class RankTable:
    ranks: dict[str, dict[str, float]]  # task -> model -> rank
    average: dict[str, float]  # model -> mean rank over ranked tasks
    skipped: list[str]

    def to_dict(self) -> dict:
        return {"ranks": self.ranks, "average_rank": self.average, "skipped_tasks": self.skipped}


def rank_models(values: Mapping[str, Mapping[str, float]], method: str = "competition") -> RankTable:
    """Rank models within each task (higher value = rank 1) and average.

    ``method`` is ``"competition"`` (1, 2, 2, 4) or ``"dense"`` (1, 2, 2, 3).
    Tasks missing a value for some model are skipped, never imputed.
    """
    if method == "competition":
        scipy_method = "min"
    elif method == "dense":
        scipy_method = "dense"
    else:
        raise ValueError(f"unknown ranking method {method!r}")

    models = sorted({m for per_task in values.values() for m in per_task})
    ranks: dict[str, dict[str, float]] = {}
    skipped = []
    for task in sorted(values):
        per_task = values[task]
        if set(per_task) != set(models):
            log.warning("task %s lacks values for %s; skipped for ranking",
                        task, sorted(set(models) - set(per_task)))
            skipped.append(task)
            continue
        scores = np.array([per_task[m] for m in models], dtype=float)
        r = rankdata(-scores, method=scipy_method)
        ranks[task] = {m: int(v) for m, v in zip(models, r)}

    average = {}
    for m in models:
        got = [ranks[t][m] for t in ranks]
        if got:
            average[m] = float(np.mean(got))
    return RankTable(ranks, average, skipped)
