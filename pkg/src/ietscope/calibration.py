"""Threshold derivation from labelled batches.

Every array contributes one value per statistic. A threshold is the cut that
minimises the empirical type I + type II error sum; a statistic is admitted
for detection only while that sum stays below :data:`ADMISSION_LIMIT`.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import (
    ADMISSION_LIMIT,
    FILTRATION_LEVELS,
    JUMP_THRESHOLD,
    NestedBand,
    StatisticKind,
    ThresholdEntry,
    ThresholdTable,
    TraceBatch,
    check_bands,
)
from .errors import EmptySampleError, NoAdmissibleStatisticError, NonMonotoneBandsError
from .stats import MIN_SEGMENT_LENGTH, array_statistics, level_profile, variation_interval

FALLBACK_LEVEL = 0.1


class ErrorSide(enum.Enum):
    """Which labelled condition a sample comes from, hence which side is wrong."""

    ABOVE_MEANS_HV = "above_means_hv"  # no-hypervisor sample: values >= cut are errors
    BELOW_MEANS_NO_HV = "below_means_no_hv"  # hypervisor sample: values < cut are errors


def estimate_error_rate(values, threshold: float, side: ErrorSide) -> float:
    """Empirical error probability r/g, with hypervisor declared iff value >= threshold."""
    vals = np.asarray(list(values), dtype=np.float64)
    if vals.size == 0:
        raise EmptySampleError("cannot estimate an error rate from an empty sample")
    if side is ErrorSide.ABOVE_MEANS_HV:
        r = int(np.count_nonzero(vals >= threshold))
    else:
        r = int(np.count_nonzero(vals < threshold))
    return r / vals.size


@dataclass(frozen=True)
class ThresholdDecision:
    """Cut point (hypervisor iff value >= cut) with its presentation bounds."""

    cut: float
    no_hv_upper: float
    hv_lower: float
    type1: float
    type2: float
    type1_count: int
    type2_count: int
    n_no_hv: int
    n_hv: int

    @property
    def error_sum(self) -> float:
        return self.type1 + self.type2

    @property
    def exact_error_sum(self) -> Fraction:
        return Fraction(self.type1_count, self.n_no_hv) + Fraction(self.type2_count, self.n_hv)


def derive_threshold(no_hv_values, hv_values) -> ThresholdDecision:
    """Scan every distinct cut and keep the one with the least type I + type II error.

    Candidates are midpoints between adjacent pooled values plus +-inf; ties go
    to the smallest cut. Bounds are the nearest pooled values either side.
    """
    a = np.sort(np.asarray(list(no_hv_values), dtype=np.float64))
    b = np.sort(np.asarray(list(hv_values), dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise EmptySampleError("both samples must be nonempty")
    pooled = np.unique(np.concatenate([a, b]))
    cuts = np.concatenate(([-math.inf], (pooled[:-1] + pooled[1:]) / 2, [math.inf]))
    # errors in integer units of 1/(n0*n1) keep ties exact
    r1 = a.size - np.searchsorted(a, cuts, side="left")
    r2 = np.searchsorted(b, cuts, side="left")
    score = r1 * b.size + r2 * a.size
    best = int(np.argmin(score))
    cut = float(cuts[best])
    below = pooled[pooled < cut]
    above = pooled[pooled > cut]
    return ThresholdDecision(
        cut=cut,
        no_hv_upper=float(below[-1]) if below.size else -math.inf,
        hv_lower=float(above[0]) if above.size else math.inf,
        type1=int(r1[best]) / a.size,
        type2=int(r2[best]) / b.size,
        type1_count=int(r1[best]),
        type2_count=int(r2[best]),
        n_no_hv=int(a.size),
        n_hv=int(b.size),
    )


def select_level_from_profile(profile, levels: Sequence[float] = FILTRATION_LEVELS,
                              tolerance: float = 1.0, fallback: float = FALLBACK_LEVEL) -> float:
    """Lowest level from which both layer counts change by at most ``tolerance`` per step.

    ``profile`` is one ``(averaged, vectorized)`` pair per level. At least one
    step must follow the chosen level; otherwise ``fallback`` is returned.
    """
    profile = [tuple(p) for p in profile]
    if len(profile) != len(levels):
        raise ValueError("profile and levels differ in length")
    steps_ok = [
        all(abs(x1 - x0) <= tolerance for x0, x1 in zip(p0, p1))
        for p0, p1 in zip(profile, profile[1:])
    ]
    for i in range(len(steps_ok)):
        if all(steps_ok[i:]):
            return levels[i]
    return fallback


def select_filtration_level(batch: TraceBatch, levels: Sequence[float] = FILTRATION_LEVELS,
                            tolerance: float = 1.0, fallback: float = FALLBACK_LEVEL, **kwargs) -> float:
    """Stabilisation level of the batch's median layer-count profile."""
    if len(batch) == 0:
        raise EmptySampleError("empty batch")
    levels = tuple(levels)
    profiles = np.array([[(avg, vec) for _, avg, vec in level_profile(a, levels, **kwargs)]
                         for a in batch])
    median = np.nanmedian(profiles, axis=0)
    return select_level_from_profile(median, levels, tolerance, fallback)


def batch_statistics(batch: TraceBatch, kinds=tuple(StatisticKind), levels=FILTRATION_LEVELS,
                     jump_threshold: int = JUMP_THRESHOLD,
                     min_segment_length: int = MIN_SEGMENT_LENGTH) -> dict:
    """``{(kind, level): np.ndarray of one value per array}``."""
    kinds, levels = tuple(kinds), tuple(levels)
    per_array = [array_statistics(a, kinds, levels, jump_threshold, min_segment_length) for a in batch]
    return {key: np.array([s[key] for s in per_array]) for key in per_array[0]} if per_array else {}


@dataclass(frozen=True)
class StatisticScore:
    statistic: StatisticKind
    level: float
    decision: ThresholdDecision
    no_hv_values: np.ndarray
    hv_values: np.ndarray


def score_statistics(no_hv_stats: dict, hv_stats: dict, kinds, levels) -> dict:
    """Best-level :class:`StatisticScore` per non-mean kind."""
    best = {}
    for kind in kinds:
        if kind is StatisticKind.MEAN:
            continue
        for level in levels:
            x = no_hv_stats[(kind, level)]
            y = hv_stats[(kind, level)]
            x, y = x[~np.isnan(x)], y[~np.isnan(y)]
            if x.size == 0 or y.size == 0:
                continue
            d = derive_threshold(x, y)
            current = best.get(kind)
            if current is None or d.exact_error_sum < current.decision.exact_error_sum:
                best[kind] = StatisticScore(kind, level, d, x, y)
    return best


def build_threshold_table(
    no_hv: TraceBatch,
    hv: TraceBatch,
    nested: Sequence[TraceBatch] = (),
    levels: Iterable[float] = FILTRATION_LEVELS,
    kinds: Iterable[StatisticKind] = tuple(StatisticKind),
    admission_limit: float = ADMISSION_LIMIT,
    jump_threshold: int = JUMP_THRESHOLD,
    min_segment_length: int = MIN_SEGMENT_LENGTH,
) -> ThresholdTable:
    """Calibrate every statistic on a no-hypervisor and a hypervisor batch.

    ``nested``, if given, continues the condition ladder (2, 3, ... hypervisors)
    and yields count bands on the averaged layer statistic.
    """
    if len(no_hv) == 0 or len(hv) == 0:
        raise EmptySampleError("both batches must be nonempty")
    if no_hv.arrays[0].shape != hv.arrays[0].shape:
        raise ValueError("batches must share the array shape")
    levels, kinds = tuple(levels), tuple(kinds)
    opts = dict(jump_threshold=jump_threshold, min_segment_length=min_segment_length)
    s0 = batch_statistics(no_hv, kinds, levels, **opts)
    s1 = batch_statistics(hv, kinds, levels, **opts)

    entries = []
    if StatisticKind.MEAN in kinds:
        means0 = s0[(StatisticKind.MEAN, levels[0])]
        iv = variation_interval(means0[~np.isnan(means0)])
        entries.append(ThresholdEntry(StatisticKind.MEAN, levels[0], iv.s_max, None, None, None, iv))
    admitted = 0
    for kind, sc in score_statistics(s0, s1, kinds, levels).items():
        if not sc.decision.exact_error_sum < Fraction(admission_limit).limit_denominator(10**6):
            continue
        d = sc.decision
        entries.append(ThresholdEntry(
            kind, sc.level, d.no_hv_upper, d.hv_lower, d.type1, d.type2,
            variation_interval(sc.no_hv_values), variation_interval(sc.hv_values),
        ))
        admitted += 1
    if admitted == 0:
        raise NoAdmissibleStatisticError(
            f"no statistic reaches type I + type II < {admission_limit}"
        )
    chosen = select_filtration_level(no_hv, levels, **opts)
    bands = None
    if nested:
        bands = calibrate_nested([no_hv, hv, *nested], level=chosen, **opts)
    return ThresholdTable(tuple(entries), bands, chosen, StatisticKind.LAYERS_AVG)


def calibrate_nested(
    batches: Sequence[TraceBatch],
    level: Optional[float] = None,
    statistic: StatisticKind = StatisticKind.LAYERS_AVG,
    admission_limit: float = ADMISSION_LIMIT,
    jump_threshold: int = JUMP_THRESHOLD,
    min_segment_length: int = MIN_SEGMENT_LENGTH,
) -> tuple:
    """Count bands from batches ordered by hypervisor count 0..K.

    Each adjacent pair gets its own threshold; band ``k`` runs from the lower
    bound of pair ``(k-1, k)`` to the upper bound of pair ``(k, k+1)``. A pair
    whose error sum exceeds ``admission_limit`` aborts the calibration.
    """
    if len(batches) < 2:
        raise ValueError("need batches for at least two hypervisor counts")
    opts = dict(jump_threshold=jump_threshold, min_segment_length=min_segment_length)
    if level is None:
        level = select_filtration_level(batches[0], **opts)
    samples = []
    for batch in batches:
        vals = batch_statistics(batch, (statistic,), (level,), **opts)[(statistic, level)]
        samples.append(vals[~np.isnan(vals)])
    return bands_from_samples(samples, admission_limit)


def bands_from_samples(samples: Sequence, admission_limit: float = ADMISSION_LIMIT) -> tuple:
    """Count bands from one value sample per hypervisor count 0..K."""
    if len(samples) < 2:
        raise ValueError("need samples for at least two hypervisor counts")
    decisions = [derive_threshold(x, y) for x, y in zip(samples, samples[1:])]
    limit = Fraction(admission_limit).limit_denominator(10**6)
    for k, d in enumerate(decisions):
        if d.exact_error_sum > limit:
            raise NoAdmissibleStatisticError(
                f"counts {k} and {k + 1} are not separable: error sum {d.error_sum:.3f}"
            )
    bands = []
    for k in range(len(samples)):
        lower = decisions[k - 1].hv_lower if k > 0 else None
        upper = decisions[k].no_hv_upper if k < len(decisions) else None
        bands.append(NestedBand(
            lower=lower,
            upper=upper,
            count=k,
            type1=decisions[k].type1 if k < len(decisions) else 0.0,
            type2=decisions[k - 1].type2 if k > 0 else 0.0,
        ))
    try:
        check_bands(bands)
    except ValueError as exc:
        raise NonMonotoneBandsError(str(exc)) from exc
    return tuple(bands)
