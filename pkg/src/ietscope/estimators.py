"""scikit-learn compatible wrappers.

``X`` is a collection of IET arrays: a :class:`TraceBatch`, a list of
:class:`IetArray` or 2-D integer matrices, or a 3-D ``(n_arrays, rows, cols)``
integer ndarray. ``y`` is the number of hypervisors present for each array.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .calibration import build_threshold_table
from .core import (
    ADMISSION_LIMIT,
    FILTRATION_LEVELS,
    JUMP_THRESHOLD,
    IetArray,
    StatisticKind,
    TraceBatch,
    VerdictKind,
)
from .detector import detect
from .stats import MIN_SEGMENT_LENGTH, array_statistics

#: ``predict`` label for arrays the table cannot decide on.
INDETERMINATE = -1


def check_iet_arrays(X) -> list:
    """Coerce ``X`` into a list of :class:`IetArray` sharing one shape."""
    if isinstance(X, IetArray):
        arrays = [X]
    elif isinstance(X, TraceBatch):
        arrays = list(X.arrays)
    elif isinstance(X, np.ndarray) and X.ndim == 3:
        arrays = [IetArray(a) for a in X]
    else:
        arrays = [a if isinstance(a, IetArray) else IetArray(np.asarray(a)) for a in X]
    if not arrays:
        raise ValueError("X holds no arrays")
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1:
        raise ValueError(f"all arrays must share a shape, got {sorted(shapes)}")
    return arrays


def _kinds(kinds):
    if kinds is None:
        return tuple(StatisticKind)
    return tuple(k if isinstance(k, StatisticKind) else StatisticKind(k) for k in kinds)


class IetStatistics(TransformerMixin, BaseEstimator):
    """Map each IET array to a row of statistics (one column per kind)."""

    def __init__(self, kinds=None, level=0.0, jump_threshold=JUMP_THRESHOLD,
                 min_segment_length=MIN_SEGMENT_LENGTH):
        self.kinds = kinds
        self.level = level
        self.jump_threshold = jump_threshold
        self.min_segment_length = min_segment_length

    def fit(self, X, y=None):
        arrays = check_iet_arrays(X)
        self.kinds_ = _kinds(self.kinds)
        self.array_shape_ = arrays[0].shape
        self.n_features_out_ = len(self.kinds_)
        return self

    def transform(self, X):
        check_is_fitted(self, "kinds_")
        arrays = check_iet_arrays(X)
        out = np.empty((len(arrays), len(self.kinds_)))
        for i, a in enumerate(arrays):
            stats = array_statistics(a, self.kinds_, (self.level,), self.jump_threshold,
                                     self.min_segment_length)
            out[i] = [stats[(k, self.level)] for k in self.kinds_]
        return out

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "kinds_")
        return np.array([k.value for k in self.kinds_], dtype=object)


class StealthHypervisorDetector(ClassifierMixin, BaseEstimator):
    """Calibrate thresholds on labelled arrays, then classify fresh ones.

    ``fit`` needs arrays with 0 and 1 hypervisors; arrays labelled 2, 3, ...
    add count bands. ``predict`` returns the hypervisor count (1 when the
    count is unknown or the array looks like a self-uninstalling hypervisor)
    or :data:`INDETERMINATE`.
    """

    def __init__(self, levels=FILTRATION_LEVELS, kinds=None, admission_limit=ADMISSION_LIMIT,
                 aggregation="any", max_retries=3, use_interval_overlap=True, blue_chicken=True):
        self.levels = levels
        self.kinds = kinds
        self.admission_limit = admission_limit
        self.aggregation = aggregation
        self.max_retries = max_retries
        self.use_interval_overlap = use_interval_overlap
        self.blue_chicken = blue_chicken

    def fit(self, X, y):
        arrays = check_iet_arrays(X)
        y = np.asarray(y, dtype=int)
        if y.shape != (len(arrays),):
            raise ValueError(f"y must have one label per array, got shape {y.shape}")
        if y.min() < 0:
            raise ValueError("labels are hypervisor counts and must be >= 0")
        counts = np.unique(y)
        if not {0, 1} <= set(counts.tolist()):
            raise ValueError("fit needs arrays with 0 and with 1 hypervisor")
        if not np.array_equal(counts, np.arange(counts.max() + 1)):
            raise ValueError(f"hypervisor counts must be contiguous from 0, got {counts.tolist()}")
        batches = [TraceBatch(tuple(a for a, c in zip(arrays, y) if c == k), f"hv{k}") for k in counts]
        self.table_ = build_threshold_table(
            batches[0], batches[1], nested=batches[2:], levels=tuple(self.levels),
            kinds=_kinds(self.kinds), admission_limit=self.admission_limit,
        )
        self.classes_ = counts
        self.array_shape_ = arrays[0].shape
        return self

    def _detect_opts(self):
        return dict(aggregation=self.aggregation, use_interval_overlap=self.use_interval_overlap,
                    blue_chicken=None if self.blue_chicken else {"enabled": False})

    def predict_verdict(self, X) -> list:
        """One :class:`DetectionVerdict` per array, without remeasuring."""
        check_is_fitted(self, "table_")
        return [detect([a], self.table_, max_retries=0, **self._detect_opts())
                for a in check_iet_arrays(X)]

    def predict(self, X):
        out = []
        for v in self.predict_verdict(X):
            if v.kind is VerdictKind.HYPERVISORS_PRESENT:
                out.append(v.count if v.count is not None else 1)
            elif v.kind is VerdictKind.BLUE_CHICKEN_SUSPECT:
                out.append(1)
            elif v.kind is VerdictKind.INDETERMINATE_REMEASURE:
                out.append(INDETERMINATE)
            else:
                out.append(0)
        return np.array(out)

    def detect(self, source):
        """Full loop on a provider of fresh arrays, remeasuring on overlap."""
        check_is_fitted(self, "table_")
        return detect(source, self.table_, max_retries=self.max_retries, **self._detect_opts())
