"""Operational detection against a calibrated :class:`ThresholdTable`."""
from __future__ import annotations

from collections.abc import Iterable, Iterator
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .core import (
    DetectionVerdict,
    Evidence,
    IetArray,
    NestedBand,
    Side,
    ThresholdTable,
    VerdictKind,
)
from .errors import (
    ArrayTooShortError,
    EmptyTableError,
    NoQualifyingSegmentError,
    ProviderExhaustedError,
)
from .stats import LayerValueSet, array_statistics, series_statistic

AGGREGATIONS = ("any", "all", "majority")


def classify(value: float, entry, use_interval_overlap: bool = True) -> Side:
    if np.isnan(value):
        return Side.OVERLAP
    if entry.is_gross:
        return Side.NO_HV_SIDE if value <= entry.no_hv_upper else Side.HV_SIDE
    if use_interval_overlap and entry.hv_interval is not None:
        both = entry.no_hv_interval.intersection(entry.hv_interval)
        if both is not None and both[0] <= value <= both[1]:
            return Side.OVERLAP
    if value <= entry.no_hv_upper:
        return Side.NO_HV_SIDE
    if value >= entry.hv_lower:
        return Side.HV_SIDE
    return Side.OVERLAP


def evaluate_array(array: IetArray, table: ThresholdTable, use_interval_overlap: bool = True,
                   **stat_kwargs) -> list[Evidence]:
    """Compute and classify every table entry's statistic on one array.

    A value counts as OVERLAP when it falls strictly between the two bounds,
    or inside the intersection of the calibration variation intervals.
    """
    if not table.admitted:
        raise EmptyTableError("threshold table has no admitted statistic")
    needed = {}
    for e in table.entries:
        needed.setdefault(e.filtration_level, set()).add(e.statistic)
    values = {}
    for level, kinds in needed.items():
        values.update(array_statistics(array, kinds, (level,), **stat_kwargs))
    evidence = []
    for e in table.entries:
        value = values[(e.statistic, e.filtration_level)]
        side = classify(value, e, use_interval_overlap)
        bound = e.hv_lower if side is Side.HV_SIDE and not e.is_gross else e.no_hv_upper
        evidence.append(Evidence(e.statistic, float(value), bound, side))
    return evidence


def count_nested(layer_value: float, nested_bands: Sequence[NestedBand]) -> Optional[int]:
    """Hypervisor count of the band holding ``layer_value``; ``None`` inside a gap."""
    if not nested_bands:
        raise ValueError("no bands")
    for band in nested_bands:
        if band.contains(layer_value):
            return band.count
    return None


@dataclass(frozen=True)
class BlueChickenReport:
    flagged: bool
    columns: tuple  # of (prefix_layers, suffix_layers, column_flagged)

    @property
    def flagged_fraction(self) -> float:
        return sum(c[2] for c in self.columns) / len(self.columns)


def _layers(values: np.ndarray) -> float:
    try:
        return series_statistic(values, "layers", 0.0)
    except NoQualifyingSegmentError:
        return 0.0


def detect_blue_chicken(array: IetArray, prefix_len: int = 100, layer_ratio: float = 3,
                        max_suffix_layers: float = 2, column_fraction: float = 0.6) -> BlueChickenReport:
    """Flag a hypervisor that uninstalls itself early in every column.

    A column is flagged when its first ``prefix_len`` rows hold many more
    layers than the rest and the rest is nearly flat.
    """
    if array.rows <= prefix_len:
        raise ArrayTooShortError(f"need more than {prefix_len} rows, got {array.rows}")
    columns = []
    for j in range(array.cols):
        col = array.column(j)
        pre, post = _layers(col[:prefix_len]), _layers(col[prefix_len:])
        hit = pre >= layer_ratio * post and post <= max_suffix_layers
        columns.append((pre, post, bool(hit)))
    flagged = sum(c[2] for c in columns) >= column_fraction * len(columns)
    return BlueChickenReport(bool(flagged), tuple(columns))


def _vote(evidence, aggregation: str) -> Optional[bool]:
    """True = hypervisor, False = none, None = overlap (remeasure)."""
    sides = [ev.side for ev, gross in evidence if not gross]
    n = len(sides)
    hv = sides.count(Side.HV_SIDE)
    no = sides.count(Side.NO_HV_SIDE)
    ov = n - hv - no
    if aggregation == "any":
        if hv:
            return True
        return None if ov else False
    if aggregation == "all":
        if hv == n:
            return True
        return None if ov else False
    if hv * 2 > n:
        return True
    if no * 2 > n:
        return False
    return None


Provider = Union[Iterable, Iterator, Callable[[], IetArray]]


def _next_array(source) -> IetArray:
    try:
        return source() if callable(source) and not isinstance(source, Iterator) else next(source)
    except StopIteration:
        raise ProviderExhaustedError("array provider ran out before a verdict was reached") from None


def detect(source: Provider, table: ThresholdTable, max_retries: int = 3, aggregation: str = "any",
           use_interval_overlap: bool = True, blue_chicken: Optional[dict] = None) -> DetectionVerdict:
    """Decide on fresh arrays from ``source``, remeasuring while the vote is inconclusive.

    ``source`` is an iterable of arrays or a zero-argument callable. At most
    ``1 + max_retries`` arrays are drawn. ``blue_chicken`` holds keyword
    arguments for :func:`detect_blue_chicken`, or ``{"enabled": False}``.
    """
    if aggregation not in AGGREGATIONS:
        raise ValueError(f"aggregation must be one of {AGGREGATIONS}")
    if not table.admitted:
        raise EmptyTableError("threshold table has no admitted statistic")
    bc_opts = dict(blue_chicken or {})
    bc_enabled = bc_opts.pop("enabled", True)
    if not callable(source) or isinstance(source, Iterator):
        source = iter(source)

    suspect = False
    evidence = []
    for attempt in range(1 + max_retries):
        array = _next_array(source)
        evidence = evaluate_array(array, table, use_interval_overlap)
        if bc_enabled and array.rows > bc_opts.get("prefix_len", 100):
            suspect = suspect or detect_blue_chicken(array, **bc_opts).flagged
        decision = _vote([(ev, ev.statistic.measure == "mean") for ev in evidence], aggregation)
        used = attempt + 1
        if decision is True:
            return DetectionVerdict(VerdictKind.HYPERVISORS_PRESENT, evidence,
                                    _count(array, table), used, suspect)
        if decision is False:
            kind = VerdictKind.BLUE_CHICKEN_SUSPECT if suspect else VerdictKind.NO_HYPERVISOR
            return DetectionVerdict(kind, evidence, 0 if not suspect else None, used, suspect)
    kind = VerdictKind.BLUE_CHICKEN_SUSPECT if suspect else VerdictKind.INDETERMINATE_REMEASURE
    return DetectionVerdict(kind, evidence, None, 1 + max_retries, suspect)


def _count(array: IetArray, table: ThresholdTable) -> Optional[int]:
    if not table.nested_bands:
        return None
    kind, level = table.nested_statistic, table.chosen_filtration_level
    value = array_statistics(array, (kind,), (level,))[(kind, level)]
    count = count_nested(value, table.nested_bands)
    return count if count else None


@dataclass(frozen=True)
class LayerComparison:
    match: bool
    offset: Optional[int] = None
    first_difference: Optional[tuple] = None  # (index, reference delta, observed delta)


def compare_layer_values(reference: LayerValueSet, observed: LayerValueSet) -> LayerComparison:
    """Match layer value sets up to one common additive offset.

    A constant time offset moves every layer value equally, so only the
    spacing between layers is compared.
    """
    if not reference.values or not observed.values:
        raise ValueError("layer value sets must be nonempty")
    same_deltas = sorted(reference.deltas) == sorted(observed.deltas)
    offset = observed.values[0] - reference.values[0]
    shifted = len(reference.values) == len(observed.values) and all(
        o - r == offset for r, o in zip(reference.values, observed.values)
    )
    if same_deltas and shifted:
        return LayerComparison(True, offset)
    rd, od = reference.deltas, observed.deltas
    for i in range(max(len(rd), len(od))):
        a = rd[i] if i < len(rd) else None
        b = od[i] if i < len(od) else None
        if a != b:
            return LayerComparison(False, None, (i, a, b))
    return LayerComparison(False, None, None)
