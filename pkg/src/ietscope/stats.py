"""Layer, moment and segmentation statistics over IET series and arrays.

Pipeline for one series: cut at jumps, low-frequency filter each segment on
its own class frequencies, evaluate the measure per segment, then combine the
segments weighted by length. Isolated outliers end up as length-1 segments
and drop out of the weighted average.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .core import (
    FILTRATION_LEVELS,
    JUMP_THRESHOLD,
    IetArray,
    SegmentedSeries,
    StatisticKind,
    VariationInterval,
    vectorize,
)
from .errors import (
    AllFilteredError,
    EmptySampleError,
    EmptySeriesError,
    NoQualifyingSegmentError,
    SeriesTooShortError,
)

MIN_SEGMENT_LENGTH = 2


def _series(series) -> np.ndarray:
    arr = np.asarray(series)
    if arr.ndim != 1:
        arr = arr.ravel()
    if arr.size == 0:
        raise EmptySeriesError("series is empty")
    return arr


def frequency_classes(series) -> dict:
    """Relative frequency of every exact value in ``series``."""
    arr = _series(series)
    values, counts = np.unique(arr, return_counts=True)
    n = arr.size
    return {v.item(): int(c) / n for v, c in zip(values, counts)}


def _keep_mask(arr: np.ndarray, level: float) -> np.ndarray:
    _, inverse, counts = np.unique(arr, return_inverse=True, return_counts=True)
    return (counts / arr.size >= level)[inverse.ravel()]


def low_frequency_filter(series, level: float) -> np.ndarray:
    """Drop every element whose class frequency in ``series`` is below ``level``.

    Frequencies are taken once, on the input. Survivor order is preserved.
    """
    arr = _series(series)
    if not 0 <= level < 1:
        raise ValueError(f"level must be in [0, 1), got {level}")
    if level == 0:
        return arr.copy()
    out = arr[_keep_mask(arr, level)]
    if out.size == 0:
        raise AllFilteredError(f"no class reaches relative frequency {level}")
    return out


def count_layers(series, level: float = 0.0) -> int:
    """Number of distinct values left after filtering (0 if nothing is left)."""
    try:
        kept = low_frequency_filter(series, level)
    except AllFilteredError:
        return 0
    return int(np.unique(kept).size)


def detect_jumps(series, jump_threshold: int = JUMP_THRESHOLD) -> SegmentedSeries:
    """Cut before every index whose absolute first difference exceeds the threshold."""
    arr = _series(series)
    diffs = np.abs(np.diff(arr.astype(np.int64)))
    cuts = np.flatnonzero(diffs > jump_threshold) + 1
    starts = np.concatenate(([0], cuts))
    pieces = np.split(arr, cuts)
    segments = tuple((int(s), p) for s, p in zip(starts, pieces))
    return SegmentedSeries(segments=segments, jump_positions=tuple(int(c) for c in cuts))


def length_averaged_stat(
    segmented: SegmentedSeries,
    stat: Callable[[np.ndarray], Optional[float]],
    min_segment_length: int = MIN_SEGMENT_LENGTH,
) -> float:
    """Length-weighted mean of ``stat`` over segments of at least ``min_segment_length``.

    ``stat`` may return ``None`` to leave a segment out of both sums.
    """
    num = 0.0
    den = 0
    for _, values in segmented.segments:
        n = len(values)
        if n < min_segment_length:
            continue
        s = stat(values)
        if s is None:
            continue
        num += n * s
        den += n
    if den == 0:
        raise NoQualifyingSegmentError(
            f"no segment of length >= {min_segment_length} produced a value"
        )
    return num / den


def central_moment(series, order: int) -> float:
    """Population central moment, ``(1/N) * sum((x - mean)**order)``."""
    if order not in (2, 4):
        raise ValueError(f"order must be 2 or 4, got {order}")
    arr = np.asarray(series).ravel()
    if arr.size < 2:
        raise SeriesTooShortError(f"need at least 2 values, got {arr.size}")
    # integer offsets from the minimum are exact, so a constant shift of the
    # input cannot change a single bit of the result
    arr = (arr - arr.min()).astype(np.float64)
    dev = arr - arr.mean()
    return float(np.mean(dev**order))


def _segment_measures(values: np.ndarray, levels: Sequence[float]) -> dict:
    """Per-level ``{measure: value or None}`` for one segment.

    Works on the class table (distinct values and counts) so every level
    reuses a single sort.
    """
    uniq, counts = np.unique(values, return_counts=True)
    n = values.size
    freq = counts / n
    origin = uniq[0]
    fv = (uniq - origin).astype(np.float64)
    out = {}
    for level in levels:
        keep = freq >= level if level > 0 else np.ones(uniq.size, dtype=bool)
        c = counts[keep]
        total = int(c.sum())
        if total == 0:
            out[level] = {"layers": 0, "mean": None, "m2": None, "m4": None}
            continue
        v = fv[keep]
        mean = float(np.dot(c, v) / total)
        dev = v - mean
        dev2 = dev * dev
        out[level] = {
            "layers": int(keep.sum()),
            "mean": mean + float(origin),
            "m2": float(np.dot(c, dev2) / total) if total >= 2 else None,
            "m4": float(np.dot(c, dev2 * dev2) / total) if total >= 2 else None,
        }
    return out


def series_statistics(
    series,
    levels: Iterable[float] = FILTRATION_LEVELS,
    jump_threshold: int = JUMP_THRESHOLD,
    min_segment_length: int = MIN_SEGMENT_LENGTH,
) -> dict:
    """``{(measure, level): value}`` for one series via segment, filter, length-average.

    Missing keys mean no segment qualified for that measure and level.
    """
    levels = tuple(levels)
    segmented = detect_jumps(series, jump_threshold)
    num: dict = {}
    den: dict = {}
    for _, seg in segmented.segments:
        n = seg.size
        if n < min_segment_length:
            continue
        for level, measures in _segment_measures(seg, levels).items():
            for measure, value in measures.items():
                if value is None:
                    continue
                key = (measure, level)
                num[key] = num.get(key, 0.0) + n * value
                den[key] = den.get(key, 0) + n
    return {key: num[key] / den[key] for key in num}


def _segment_stat_fn(measure: str, level: float):
    def fn(values):
        return _segment_measures(values, (level,))[level][measure]

    return fn


def series_statistic(series, measure: str, level: float = 0.0, jump_threshold: int = JUMP_THRESHOLD,
                     min_segment_length: int = MIN_SEGMENT_LENGTH) -> float:
    """One length-averaged measure (``mean``, ``layers``, ``m2``, ``m4``) of a series."""
    return length_averaged_stat(
        detect_jumps(series, jump_threshold), _segment_stat_fn(measure, level), min_segment_length
    )


def column_statistic(
    array: IetArray,
    kind: StatisticKind,
    level: float = 0.0,
    jump_threshold: int = JUMP_THRESHOLD,
    min_segment_length: int = MIN_SEGMENT_LENGTH,
) -> tuple[np.ndarray, float]:
    """Per-column values of an averaged-columns statistic and their mean."""
    if kind.vectorized:
        raise ValueError(f"{kind.name} is a vectorized statistic")
    per_column = np.empty(array.cols)
    for j in range(array.cols):
        try:
            per_column[j] = series_statistic(
                array.column(j), kind.measure, level, jump_threshold, min_segment_length
            )
        except NoQualifyingSegmentError as exc:
            raise NoQualifyingSegmentError(f"column {j}: {exc}", column=j) from exc
    return per_column, float(per_column.mean())


def vectorized_statistic(
    array: IetArray,
    kind: StatisticKind,
    level: float = 0.0,
    jump_threshold: int = JUMP_THRESHOLD,
    min_segment_length: int = MIN_SEGMENT_LENGTH,
) -> float:
    if not kind.vectorized:
        raise ValueError(f"{kind.name} is not a vectorized statistic")
    return series_statistic(vectorize(array), kind.measure, level, jump_threshold, min_segment_length)


def statistic(array: IetArray, kind: StatisticKind, level: float = 0.0, **kwargs) -> float:
    """Scalar value of ``kind`` for an array, whichever path it uses."""
    if kind.vectorized:
        return vectorized_statistic(array, kind, level, **kwargs)
    return column_statistic(array, kind, level, **kwargs)[1]


def array_statistics(
    array: IetArray,
    kinds: Iterable[StatisticKind] = tuple(StatisticKind),
    levels: Iterable[float] = FILTRATION_LEVELS,
    jump_threshold: int = JUMP_THRESHOLD,
    min_segment_length: int = MIN_SEGMENT_LENGTH,
) -> dict:
    """``{(kind, level): value}`` for every requested combination, sharing the segmentation.

    Values are ``nan`` where no segment qualified.
    """
    kinds = tuple(kinds)
    levels = tuple(levels)
    out = {}
    if any(not k.vectorized for k in kinds):
        cols = [
            series_statistics(array.column(j), levels, jump_threshold, min_segment_length)
            for j in range(array.cols)
        ]
        for kind in kinds:
            if kind.vectorized:
                continue
            for level in levels:
                vals = [c.get((kind.measure, level), math.nan) for c in cols]
                out[(kind, level)] = float(np.mean(vals))
    if any(k.vectorized for k in kinds):
        vec = series_statistics(vectorize(array), levels, jump_threshold, min_segment_length)
        for kind in kinds:
            if kind.vectorized:
                for level in levels:
                    out[(kind, level)] = vec.get((kind.measure, level), math.nan)
    return out


def round_half_up(x: float) -> int:
    """Display rounding for layer counts (2.5 -> 3)."""
    return int(math.floor(x + 0.5))


def variation_interval(values) -> VariationInterval:
    vals = np.asarray(list(values), dtype=np.float64)
    if vals.size == 0:
        raise EmptySampleError("variation interval of an empty sample")
    return VariationInterval(float(vals.min()), float(vals.max()), int(vals.size))


@dataclass(frozen=True)
class LayerValueSet:
    """Sorted distinct retained layer values and their successive differences."""

    values: tuple
    deltas: tuple

    def shifted(self, offset: int) -> "LayerValueSet":
        return LayerValueSet(tuple(v + offset for v in self.values), self.deltas)


def layer_value_set(series, level: float = 0.0) -> LayerValueSet:
    kept = low_frequency_filter(series, level)
    values = np.unique(kept)
    return LayerValueSet(
        values=tuple(int(v) for v in values),
        deltas=tuple(int(d) for d in np.diff(values)),
    )


def level_profile(array: IetArray, levels: Iterable[float] = FILTRATION_LEVELS, **kwargs) -> list:
    """``[(level, averaged layers, vectorized layers), ...]`` for one array."""
    levels = tuple(levels)
    stats = array_statistics(array, (StatisticKind.LAYERS_AVG, StatisticKind.LAYERS_VEC), levels, **kwargs)
    return [
        (lv, stats[(StatisticKind.LAYERS_AVG, lv)], stats[(StatisticKind.LAYERS_VEC, lv)])
        for lv in levels
    ]
