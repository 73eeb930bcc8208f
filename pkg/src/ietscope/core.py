"""Domain types shared across the package.

Raw measurements are kept as exact integer ticks. Statistics are computed in
double precision elsewhere; nothing here ever stores raw data as float.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidArrayError

#: Filtration levels swept during calibration.
FILTRATION_LEVELS = (0.0, 0.02, 0.05, 0.1, 0.15, 0.2)

#: First-difference magnitude (ticks) above which a jump is cut.
JUMP_THRESHOLD = 300

#: Error-sum bound a statistic must stay under to be used for detection.
ADMISSION_LIMIT = 0.2


class StatisticKind(enum.Enum):
    """The statistics vocabulary: what is computed and along which path."""

    MEAN = "mean"
    LAYERS_AVG = "layers_avg"
    LAYERS_VEC = "layers_vec"
    M2_AVG = "m2_avg"
    M2_VEC = "m2_vec"
    M4_AVG = "m4_avg"
    M4_VEC = "m4_vec"

    @property
    def measure(self) -> str:
        """One of ``mean``, ``layers``, ``m2``, ``m4``."""
        return self.value.split("_")[0]

    @property
    def vectorized(self) -> bool:
        return self.value.endswith("_vec")

    @property
    def symbol(self) -> str:
        return _SYMBOLS[self]


_SYMBOLS = {
    StatisticKind.MEAN: "T̄",
    StatisticKind.LAYERS_AVG: "L̄",
    StatisticKind.LAYERS_VEC: "l",
    StatisticKind.M2_AVG: "D̄",
    StatisticKind.M2_VEC: "d",
    StatisticKind.M4_AVG: "M̄",
    StatisticKind.M4_VEC: "μ",
}


def _as_tick_matrix(values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise InvalidArrayError(f"expected a 2-D matrix, got {arr.ndim}-D")
    if arr.dtype.kind == "f":
        if not np.all(np.isfinite(arr)) or not np.all(arr == np.round(arr)):
            raise InvalidArrayError("tick values must be integers")
    elif arr.dtype.kind not in "iu":
        raise InvalidArrayError(f"tick values must be integers, got dtype {arr.dtype}")
    out = np.array(arr, dtype=np.int64, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class IetArray:
    """A rows x cols matrix of measured durations in CPU ticks.

    Column ``j`` holds one contiguous inner loop of measurements.
    """

    values: np.ndarray
    label: Optional[str] = None
    day_index: Optional[int] = None
    repeat_index: Optional[int] = None

    def __post_init__(self):
        vals = _as_tick_matrix(self.values)
        if vals.shape[0] < 2 or vals.shape[1] < 1:
            raise InvalidArrayError(f"need rows >= 2 and cols >= 1, got shape {vals.shape}")
        if np.any(vals <= 0):
            r, c = np.argwhere(vals <= 0)[0]
            raise InvalidArrayError(f"non-positive tick value at row {r}, column {c}")
        object.__setattr__(self, "values", vals)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def column(self, j: int) -> np.ndarray:
        return self.values[:, j]

    def shifted(self, offset: int) -> "IetArray":
        """Copy with ``offset`` ticks added to every measurement."""
        return IetArray(self.values + int(offset), self.label, self.day_index, self.repeat_index)

    def __eq__(self, other):
        if not isinstance(other, IetArray):
            return NotImplemented
        return (
            self.shape == other.shape
            and bool(np.array_equal(self.values, other.values))
            and (self.label, self.day_index, self.repeat_index)
            == (other.label, other.day_index, other.repeat_index)
        )

    __hash__ = None


def vectorize(array: IetArray) -> np.ndarray:
    """Flatten column-major: column 1 first, in-column order preserved."""
    return array.values.flatten(order="F")


def unvectorize(series, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vectorize` on the raw value matrix."""
    return np.asarray(series).reshape((rows, cols), order="F")


@dataclass(frozen=True)
class Protocol:
    repeats_per_day: int = 5
    days: int = 10
    delay_seconds: float = 2.0


@dataclass(frozen=True)
class TraceBatch:
    """Arrays acquired under a single condition (e.g. ``no_hv``)."""

    arrays: tuple
    condition_label: str = ""
    protocol: Protocol = field(default_factory=Protocol)

    def __post_init__(self):
        arrays = tuple(self.arrays)
        shapes = {a.shape for a in arrays}
        if len(shapes) > 1:
            raise InvalidArrayError(f"arrays in a batch must share a shape, got {sorted(shapes)}")
        object.__setattr__(self, "arrays", arrays)

    def __len__(self):
        return len(self.arrays)

    def __iter__(self):
        return iter(self.arrays)

    def __getitem__(self, i):
        return self.arrays[i]


@dataclass(frozen=True)
class SegmentedSeries:
    """A series cut before every above-threshold first difference."""

    segments: tuple  # of (start_index, np.ndarray)
    jump_positions: tuple

    @property
    def lengths(self) -> list[int]:
        return [len(v) for _, v in self.segments]

    def concatenate(self) -> np.ndarray:
        if not self.segments:
            return np.empty(0, dtype=np.int64)
        return np.concatenate([v for _, v in self.segments])


@dataclass(frozen=True)
class VariationInterval:
    """``[s_min, s_max]`` of a sample, used as a confidence interval."""

    s_min: float
    s_max: float
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.s_min > self.s_max:
            raise ValueError(f"s_min {self.s_min} > s_max {self.s_max}")

    @property
    def confidence(self) -> float:
        return 1.0 - 0.5 ** (self.n - 1)

    def contains(self, value: float) -> bool:
        return self.s_min <= value <= self.s_max

    def intersection(self, other: "VariationInterval") -> Optional[tuple[float, float]]:
        lo, hi = max(self.s_min, other.s_min), min(self.s_max, other.s_max)
        return (lo, hi) if lo <= hi else None


@dataclass(frozen=True)
class ThresholdEntry:
    """Decision bounds for one statistic at one filtration level.

    ``hv_lower``, ``type1``, ``type2`` and ``hv_interval`` are ``None`` for the
    gross ``MEAN`` detector, which only carries a no-hypervisor upper bound.
    """

    statistic: StatisticKind
    filtration_level: float
    no_hv_upper: float
    hv_lower: Optional[float]
    type1: Optional[float]
    type2: Optional[float]
    no_hv_interval: VariationInterval
    hv_interval: Optional[VariationInterval] = None

    def __post_init__(self):
        if self.hv_lower is not None and not self.no_hv_upper < self.hv_lower:
            raise ValueError(f"no_hv_upper {self.no_hv_upper} must be < hv_lower {self.hv_lower}")

    @property
    def error_sum(self) -> float:
        if self.type1 is None or self.type2 is None:
            return math.nan
        return self.type1 + self.type2

    @property
    def is_gross(self) -> bool:
        return self.statistic is StatisticKind.MEAN


@dataclass(frozen=True)
class NestedBand:
    """A closed range of layer values mapped to a hypervisor count.

    ``None`` bounds are unbounded. Values between adjacent bands are gaps.
    """

    lower: Optional[float]
    upper: Optional[float]
    count: int
    type1: float = 0.0
    type2: float = 0.0

    def contains(self, value: float) -> bool:
        return (self.lower is None or value >= self.lower) and (self.upper is None or value <= self.upper)


def check_bands(bands: Sequence[NestedBand]) -> None:
    """Raise ``ValueError`` unless bands are ordered and non-overlapping."""
    for b in bands:
        if b.lower is not None and b.upper is not None and b.lower > b.upper:
            raise ValueError(f"band for count {b.count} has lower {b.lower} > upper {b.upper}")
    for prev, nxt in zip(bands, bands[1:]):
        if prev.upper is None or nxt.lower is None or not prev.upper < nxt.lower:
            raise ValueError(
                f"bands for counts {prev.count} and {nxt.count} overlap or are out of order"
            )


def band_gaps(bands: Sequence[NestedBand]) -> list[tuple[float, float]]:
    """Open intervals between adjacent bands."""
    return [(a.upper, b.lower) for a, b in zip(bands, bands[1:])]


@dataclass(frozen=True)
class ThresholdTable:
    entries: tuple
    nested_bands: Optional[tuple] = None
    chosen_filtration_level: float = 0.1
    nested_statistic: StatisticKind = StatisticKind.LAYERS_AVG

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        if self.nested_bands is not None:
            bands = tuple(self.nested_bands)
            check_bands(bands)
            object.__setattr__(self, "nested_bands", bands)

    @property
    def admitted(self) -> list[ThresholdEntry]:
        """Entries that take part in stealthy-hypervisor votes."""
        return [e for e in self.entries if not e.is_gross]

    def entry(self, kind: StatisticKind) -> Optional[ThresholdEntry]:
        for e in self.entries:
            if e.statistic is kind:
                return e
        return None


class Side(enum.Enum):
    NO_HV_SIDE = "no_hv_side"
    HV_SIDE = "hv_side"
    OVERLAP = "overlap"


@dataclass(frozen=True)
class Evidence:
    statistic: StatisticKind
    value: float
    bound: Optional[float]
    side: Side


class VerdictKind(enum.Enum):
    NO_HYPERVISOR = "no_hypervisor"
    HYPERVISORS_PRESENT = "hypervisors_present"
    INDETERMINATE_REMEASURE = "indeterminate_remeasure"
    BLUE_CHICKEN_SUSPECT = "blue_chicken_suspect"


@dataclass(frozen=True)
class DetectionVerdict:
    kind: VerdictKind
    evidence: tuple = ()
    count: Optional[int] = None
    arrays_used: int = 1
    blue_chicken: bool = False

    def __post_init__(self):
        object.__setattr__(self, "evidence", tuple(self.evidence))
        if self.kind is VerdictKind.HYPERVISORS_PRESENT and not any(
            ev.side is Side.HV_SIDE for ev in self.evidence
        ):
            raise ValueError("HYPERVISORS_PRESENT needs at least one HV_SIDE evidence item")
