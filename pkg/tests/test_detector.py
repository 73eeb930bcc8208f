import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ietscope.core import (
    IetArray,
    NestedBand,
    Side,
    StatisticKind,
    ThresholdEntry,
    ThresholdTable,
    VariationInterval,
    VerdictKind,
)
from ietscope.detector import (
    classify,
    compare_layer_values,
    count_nested,
    detect,
    detect_blue_chicken,
    evaluate_array,
)
from ietscope.errors import ArrayTooShortError, EmptyTableError, ProviderExhaustedError
from ietscope.simulator import SimulatorProvider, simulate_array
from ietscope.stats import LayerValueSet

COUNT_BANDS = (NestedBand(None, 31, 0, 0.14, 0), NestedBand(32, 67, 1, 0, 0.06), NestedBand(86, None, 2))


def layer_entry(no_hv=(4, 7), hv=(8, 21), level=0.0, kind=StatisticKind.LAYERS_AVG):
    return ThresholdEntry(kind, level, 7, 8, 0.04, 0.0,
                          VariationInterval(*no_hv, 50), VariationInterval(*hv, 50))


def value_set(first, deltas):
    values = [first]
    for d in deltas:
        values.append(values[-1] + d)
    return LayerValueSet(tuple(values), tuple(deltas))


def layered_array(layers, rows=200, cols=10):
    # up-and-down sweep: exactly ``layers`` values and no step large enough to cut
    sweep = np.concatenate([np.arange(layers), np.arange(layers - 2, 0, -1)])
    col = 2888 + 8 * np.resize(sweep, rows)
    return IetArray(np.tile(col, (cols, 1)).T)


# -- classification ------------------------------------------------------------

def test_classify_layer_bounds():
    entry = layer_entry()
    assert classify(5, entry) is Side.NO_HV_SIDE
    assert classify(8, entry) is Side.HV_SIDE
    assert classify(7.5, entry) is Side.OVERLAP


def test_classify_inside_interval_intersection():
    entry = layer_entry(no_hv=(4, 14))  # overlapping calibration intervals
    assert classify(8, entry) is Side.OVERLAP
    assert classify(8, entry, use_interval_overlap=False) is Side.HV_SIDE
    assert classify(15, entry) is Side.HV_SIDE


def test_classify_nan_is_overlap():
    assert classify(float("nan"), layer_entry()) is Side.OVERLAP


def test_evaluate_array_values():
    table = ThresholdTable((layer_entry(),))
    (ev,) = evaluate_array(layered_array(5), table)
    assert (ev.statistic, ev.value, ev.side, ev.bound) == (StatisticKind.LAYERS_AVG, 5, Side.NO_HV_SIDE, 7)
    (ev,) = evaluate_array(layered_array(12), table)
    assert (ev.side, ev.bound) == (Side.HV_SIDE, 8)


def test_evaluate_rejects_empty_table():
    mean_only = ThresholdEntry(StatisticKind.MEAN, 0.0, 2900, None, None, None, VariationInterval(2880, 2900, 5))
    with pytest.raises(EmptyTableError):
        evaluate_array(layered_array(3), ThresholdTable((mean_only,)))


# -- detect ---------------------------------------------------------------------

def test_detect_seeded_hv(calibrated_table, hv_spec):
    verdict = detect(SimulatorProvider(hv_spec, seed=11), calibrated_table)
    assert verdict.kind is VerdictKind.HYPERVISORS_PRESENT
    assert any(ev.side is Side.HV_SIDE for ev in verdict.evidence)


def test_detect_seeded_no_hv(calibrated_table, no_hv_spec):
    verdict = detect(SimulatorProvider(no_hv_spec, seed=12), calibrated_table)
    assert verdict.kind is VerdictKind.NO_HYPERVISOR
    assert verdict.count == 0


def gap_table():
    return ThresholdTable((ThresholdEntry(StatisticKind.LAYERS_AVG, 0.0, 1, 100, 0.0, 0.0,
                                          VariationInterval(1, 1, 50), VariationInterval(100, 120, 50)),))


def test_detect_forced_gap():
    calls = []

    def provider():
        calls.append(1)
        return layered_array(3)

    verdict = detect(provider, gap_table(), max_retries=3)
    assert verdict.kind is VerdictKind.INDETERMINATE_REMEASURE
    assert verdict.arrays_used == 4 and len(calls) == 4
    assert verdict.count is None


def test_detect_provider_exhausted():
    with pytest.raises(ProviderExhaustedError):
        detect([layered_array(3), layered_array(3)], gap_table(), max_retries=3)


def test_detect_retry_resolves():
    arrays = [layered_array(3), layered_array(3), layered_array(1)]
    verdict = detect(arrays, gap_table(), max_retries=3)
    assert verdict.kind is VerdictKind.NO_HYPERVISOR and verdict.arrays_used == 3


def test_detect_aggregations():
    entries = (layer_entry(), layer_entry(kind=StatisticKind.LAYERS_VEC))
    table = ThresholdTable(entries)
    array = layered_array(12)
    for how in ("any", "all", "majority"):
        assert detect([array], table, max_retries=0, aggregation=how).kind is VerdictKind.HYPERVISORS_PRESENT
    with pytest.raises(ValueError):
        detect([array], table, aggregation="most")


def test_detect_counts_nested_hypervisors():
    table = ThresholdTable((layer_entry(),), COUNT_BANDS, chosen_filtration_level=0.0)
    assert detect([layered_array(50)], table).count == 1
    assert detect([layered_array(90)], table).count == 2
    assert detect([layered_array(75)], table).count is None


def test_detect_blue_chicken_upgrade(calibrated_table, hv_spec):
    spec = hv_spec.replace(blue_chicken=(50, 100))
    verdict = detect(SimulatorProvider(spec, seed=21), calibrated_table)
    assert verdict.blue_chicken
    assert verdict.kind in (VerdictKind.BLUE_CHICKEN_SUSPECT, VerdictKind.HYPERVISORS_PRESENT)
    off = detect(SimulatorProvider(spec, seed=21), calibrated_table, blue_chicken={"enabled": False})
    assert not off.blue_chicken


def test_detect_is_deterministic(calibrated_table, hv_spec):
    a = detect(SimulatorProvider(hv_spec, seed=5), calibrated_table)
    b = detect(SimulatorProvider(hv_spec, seed=5), calibrated_table)
    assert a == b


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 1000), st.integers(-2000, 10**6), st.booleans())
def test_detect_offset_invariance(calibrated_table, no_hv_spec, hv_spec, seed, offset, hv):
    spec = hv_spec if hv else no_hv_spec
    arrays = [simulate_array(spec, seed + i) for i in range(4)]
    shifted = [IetArray(a.values + offset + 3000) for a in arrays]
    v1 = detect(arrays, calibrated_table)
    v2 = detect(shifted, calibrated_table)
    assert v1.kind == v2.kind and v1.arrays_used == v2.arrays_used and v1.count == v2.count
    stealthy = lambda v: [(e.statistic, e.value, e.side) for e in v.evidence if not e.statistic is StatisticKind.MEAN]
    assert stealthy(v1) == stealthy(v2)


# -- nested count -------------------------------------------------------------------

def test_count_nested_bands():
    assert count_nested(20, COUNT_BANDS) == 0
    assert count_nested(50, COUNT_BANDS) == 1
    assert count_nested(90, COUNT_BANDS) == 2
    assert count_nested(75, COUNT_BANDS) is None
    assert count_nested(31.5, COUNT_BANDS) is None


@given(st.floats(-1e6, 1e6, allow_nan=False))
def test_count_nested_total(x):
    hits = [b.count for b in COUNT_BANDS if b.contains(x)]
    in_gap = 31 < x < 32 or 67 < x < 86
    assert len(hits) + in_gap == 1
    assert count_nested(x, COUNT_BANDS) == (hits[0] if hits else None)


# -- blue chicken ---------------------------------------------------------------------

def test_blue_chicken_seeded(hv_spec):
    assert detect_blue_chicken(simulate_array(hv_spec.replace(blue_chicken=(50, 100)), 21)).flagged
    assert not detect_blue_chicken(simulate_array(hv_spec, 22)).flagged


def test_blue_chicken_constant_array():
    report = detect_blue_chicken(IetArray(np.full((200, 10), 2888)))
    assert not report.flagged
    assert all(c == (1, 1, False) for c in report.columns)


def test_blue_chicken_too_short():
    with pytest.raises(ArrayTooShortError):
        detect_blue_chicken(layered_array(3, rows=100))


# -- layer value comparison -------------------------------------------------------------

def test_compare_differently_spaced_sets():
    ref = value_set(2876, (8, 24, 32, 40, 318, 320, 720, 728, 744, 760, 776))
    obs = value_set(2876, (8, 16, 24, 32, 40, 48))
    result = compare_layer_values(ref, obs)
    assert not result.match
    assert result.first_difference == (1, 24, 16)


def test_compare_shifted_set_matches():
    ref = value_set(2876, (8, 24, 32, 40))
    result = compare_layer_values(ref, ref.shifted(100))
    assert result.match and result.offset == 100


def test_compare_removed_value():
    ref = value_set(2876, (8, 24, 32, 40))
    obs = LayerValueSet(ref.values[:-1], ref.deltas[:-1])
    assert not compare_layer_values(ref, obs).match
