import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from ietscope.core import vectorize
from ietscope.simulator import (
    POC_DISPATCHER,
    SECOND_DISPATCHER,
    ScenarioSpec,
    SimulatorProvider,
    day_drift,
    derive_seed,
    expected_mean,
    quantize,
    simulate_array,
    simulate_array_events,
    simulate_batch,
    simulate_measurement,
    simulate_measurements,
)
from ietscope.stats import count_layers

QUIET = dict(smi_rate=0.0, outlier_prob=0.0, jump_prob=0.0)


def test_noise_free_measurement_is_base():
    spec = ScenarioSpec(**QUIET)
    rng = np.random.default_rng(0)
    assert simulate_measurement(spec, rng) == 2888
    assert set(simulate_measurements(spec, rng, 1000).tolist()) == {2888}


def test_cheat_matches_target_within_one_tick():
    spec = ScenarioSpec(dispatchers=(POC_DISPATCHER,), cheat=2888)
    draws = simulate_measurements(spec, np.random.default_rng(42), 10_000)
    assert abs(draws.mean() - 2888) <= 1


def test_compound_poisson_mean():
    spec = ScenarioSpec(smi_rate=2, smi_cost=(160, 0), outlier_prob=0, jump_prob=0)
    n = 100_000
    draws = simulate_measurements(spec, np.random.default_rng(3), n)
    lam = 2 * 2888 / 10_000
    # compound Poisson with a fixed cost c: mean c*lam, variance c^2*lam
    mean = 2888 + 160 * lam
    sigma = math.sqrt(160**2 * lam / n)
    assert abs(draws.mean() - mean) < 3 * sigma
    assert draws.var() == pytest.approx(160**2 * lam, rel=0.03)


def test_quantize_grid_and_clamp():
    spec = ScenarioSpec()
    assert quantize(np.array([2888, 2891.9, 2892.1, 2899]), spec).tolist() == [2888, 2888, 2896, 2896]
    assert quantize(np.array([-50.0, 1.0]), spec).tolist() == [8, 8]


def test_array_determinism():
    spec = ScenarioSpec(dispatchers=(POC_DISPATCHER,))
    a = simulate_array(spec, 5)
    assert np.array_equal(a.values, simulate_array(spec, 5).values)
    assert not np.array_equal(a.values, simulate_array(spec, 6).values)
    assert a.shape == (1000, 10)


def test_jumps_exceed_threshold():
    spec = ScenarioSpec(jump_prob=0.002, outlier_prob=0.0)
    array, events = simulate_array_events(spec, 7)
    n_jumps = 0
    for j, ev in enumerate(events):
        col = array.column(j)
        cuts, _ = oracles.jump_scan(col)
        for pos in ev.jump_starts + ev.jump_ends:
            if pos == 0:
                continue
            assert abs(int(col[pos]) - int(col[pos - 1])) > 300
            assert pos in cuts
            n_jumps += 1
    assert n_jumps > 0


def test_blue_chicken_suffix_matches_dispatcher_free():
    bare = ScenarioSpec()
    hv = bare.with_dispatchers(POC_DISPATCHER).cheating_against(bare).replace(blue_chicken=(50, 100))
    suffix, prefix = [], []
    for seed in range(20):
        array, events = simulate_array_events(hv, seed)
        for j, ev in enumerate(events):
            assert 50 <= ev.uninstall_row <= 100
            suffix.append(array.column(j)[ev.uninstall_row:])
            prefix.append(array.column(j)[:ev.uninstall_row])
    suffix = np.concatenate(suffix)
    ref = np.concatenate([vectorize(simulate_array(bare, 1000 + s)) for s in range(20)])

    def clean(x):  # compare the body of the distribution, away from jumps and outliers
        return x[x < 2888 + 300]

    s, r = clean(suffix), clean(ref)
    assert set(np.unique(s)) == set(np.unique(r))
    for v in np.unique(r):
        assert abs((s == v).mean() - (r == v).mean()) < 0.01
    assert count_layers(np.concatenate(prefix)) > 10 * count_layers(s)


def test_uninstall_rows_are_fresh_per_column():
    spec = ScenarioSpec(dispatchers=(POC_DISPATCHER,), blue_chicken=(50, 100))
    _, events = simulate_array_events(spec, 1)
    assert len({ev.uninstall_row for ev in events}) > 1


def test_batch_single_array_equals_simulate_array():
    spec = ScenarioSpec()
    batch = simulate_batch(spec, days=1, repeats=1, base_seed=9)
    assert len(batch) == 1
    assert np.array_equal(batch.arrays[0].values, simulate_array(spec, derive_seed(9, 0, 0)).values)


def test_batch_layout_and_determinism():
    spec = ScenarioSpec(rows=50, cols=3)
    a = simulate_batch(spec, days=3, repeats=2, base_seed=4, label="x")
    b = simulate_batch(spec, days=3, repeats=2, base_seed=4, label="x")
    assert [(x.day_index, x.repeat_index) for x in a.arrays] == [(d, r) for d in range(3) for r in range(2)]
    assert all(np.array_equal(x.values, y.values) for x, y in zip(a.arrays, b.arrays))
    seeds = {derive_seed(4, d, r) for d in range(3) for r in range(2)}
    assert len(seeds) == 6
    assert a.protocol.repeats_per_day == 2 and a.protocol.days == 3


def test_day_drift_range():
    spec = ScenarioSpec()
    assert day_drift(spec, 0, 0) == 0
    drifts = {day_drift(spec, s, d) for s in range(10) for d in range(1, 10)}
    assert drifts == {-8, 0, 8}


def test_provider_yields_fresh_arrays():
    p = SimulatorProvider(ScenarioSpec(rows=20, cols=2), seed=1)
    a, b = next(p), next(p)
    assert not np.array_equal(a.values, b.values)
    assert np.array_equal(a.values, next(SimulatorProvider(ScenarioSpec(rows=20, cols=2), seed=1)).values)


def test_spec_validation():
    with pytest.raises(ValueError):
        ScenarioSpec(jump_magnitude=(200, 400))
    with pytest.raises(ValueError):
        ScenarioSpec(blue_chicken=(100, 50))
    with pytest.raises(ValueError):
        ScenarioSpec(rows=1)


def _draws(spec, seed=0, n=10_000):
    return simulate_measurements(spec, np.random.default_rng(seed), n)


def test_mean_increases_with_dispatchers():
    specs = [ScenarioSpec(), ScenarioSpec(dispatchers=(POC_DISPATCHER,)),
             ScenarioSpec(dispatchers=(POC_DISPATCHER, SECOND_DISPATCHER))]
    samples = [_draws(s, i) for i, s in enumerate(specs)]
    for a, b in zip(samples, samples[1:]):
        se = math.sqrt(a.var() / a.size + b.var() / b.size)
        assert b.mean() - a.mean() > 3 * se


@pytest.mark.parametrize("cheat", [False, True])
def test_variance_increases_with_dispatchers(cheat):
    bare = ScenarioSpec()
    specs = [bare, bare.with_dispatchers(POC_DISPATCHER),
             bare.with_dispatchers(POC_DISPATCHER, SECOND_DISPATCHER)]
    if cheat:
        specs = [specs[0]] + [s.cheating_against(bare) for s in specs[1:]]
    var = [_draws(s, 10 + i).var() for i, s in enumerate(specs)]
    assert var[0] < var[1] < var[2]


def test_cheat_keeps_variance():
    bare = ScenarioSpec()
    hv = bare.with_dispatchers(POC_DISPATCHER)
    off, on = _draws(hv, 5), _draws(hv.cheating_against(bare), 5)
    assert abs(on.mean() - round(expected_mean(bare))) <= 1
    assert abs(on.var() - off.var()) / off.var() < 0.01


def test_layer_count_grows_with_dispatchers():
    bare = ScenarioSpec()
    specs = [bare, bare.with_dispatchers(POC_DISPATCHER).cheating_against(bare),
             bare.with_dispatchers(POC_DISPATCHER, SECOND_DISPATCHER).cheating_against(bare)]
    med = [np.median([count_layers(vectorize(simulate_array(s, seed))) for seed in range(20)])
           for s in specs]
    assert med[0] <= med[1] <= med[2]


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 3000))
def test_measurements_positive_and_on_grid(seed, base):
    spec = ScenarioSpec(base_ticks=base, dispatchers=(POC_DISPATCHER,), cheat=max(1, base // 2))
    x = simulate_measurements(spec, np.random.default_rng(seed), 200)
    q = spec.tick_quantum
    assert (x >= q).all()
    assert ((x == q) | ((x - base) % q == 0)).all()
