"""Stochastic IET generator standing in for real hardware.

Each measurement is the time of ten intercepted instructions:

* a fixed base cost,
* for every active hypervisor dispatcher, ten per-instruction overheads drawn
  uniformly on ``mean +- spread`` (each instruction walks the whole chain),
* a Poisson number of SMIs whose rate scales with the nominal duration, each
  adding a cost drawn on ``mean +- spread``.

Arrays add persistent baseline jumps and isolated outliers, then quantize.
Time cheating subtracts a constant from every hypervisor-affected measurement;
Blue Chicken removes the dispatchers part way through each column.

All randomness comes from explicit seeds. Independent sources (dispatcher
noise, SMIs, jumps, outliers, uninstall points) use separate child streams,
so adding a dispatcher does not move jumps or outliers for the same seed.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import IetArray, Protocol, TraceBatch

INSTRUCTIONS = 10
SMI_RATE_UNIT = 10_000.0

#: Minimal time-cheating dispatcher (the calibration reference hypervisor).
POC_DISPATCHER = (1150.0, 10.0)
#: A heavier, independent second hypervisor for nesting experiments.
SECOND_DISPATCHER = (2400.0, 20.0)


@dataclass(frozen=True)
class ScenarioSpec:
    """Generative-model parameters.

    ``cheat`` is ``None`` for no cheating, otherwise the target mean (ticks)
    the hypervisor aims its constant subtraction at. ``blue_chicken`` is an
    inclusive ``(lo, hi)`` range of the per-column uninstall row, or ``None``.
    ``jump_run_length`` is the mean length (rows) of a geometric jump run.
    """

    base_ticks: int = 2888
    tick_quantum: int = 8
    smi_rate: float = 0.05
    smi_cost: tuple = (160.0, 0.0)
    dispatchers: tuple = ()
    cheat: Optional[int] = None
    blue_chicken: Optional[tuple] = None
    outlier_prob: float = 0.001
    outlier_magnitude: tuple = (400, 4000)
    jump_prob: float = 0.0002
    jump_magnitude: tuple = (500, 1500)
    jump_run_length: float = 100.0
    rows: int = 1000
    cols: int = 10

    def __post_init__(self):
        object.__setattr__(self, "smi_cost", tuple(float(x) for x in self.smi_cost))
        object.__setattr__(
            self, "dispatchers", tuple(tuple(float(x) for x in d) for d in self.dispatchers)
        )
        object.__setattr__(self, "outlier_magnitude", tuple(int(x) for x in self.outlier_magnitude))
        object.__setattr__(self, "jump_magnitude", tuple(int(x) for x in self.jump_magnitude))
        if self.blue_chicken is not None:
            object.__setattr__(self, "blue_chicken", tuple(int(x) for x in self.blue_chicken))
        self._validate()

    def _validate(self):
        if self.base_ticks <= 0 or self.tick_quantum <= 0:
            raise ValueError("base_ticks and tick_quantum must be positive")
        if self.smi_rate < 0:
            raise ValueError("smi_rate must be non-negative")
        if len(self.smi_cost) != 2 or self.smi_cost[0] <= 0 or self.smi_cost[1] < 0:
            raise ValueError("smi_cost must be (positive mean, non-negative spread)")
        for d in self.dispatchers:
            if len(d) != 2 or d[0] <= 0 or d[1] < 0:
                raise ValueError(f"dispatcher {d} must be (positive mean, non-negative spread)")
        if self.cheat is not None and int(self.cheat) <= 0:
            raise ValueError("cheat target must be a positive integer")
        if self.blue_chicken is not None:
            lo, hi = self.blue_chicken
            if not 0 <= lo <= hi:
                raise ValueError(f"bad blue_chicken range {self.blue_chicken}")
        for name in ("outlier_prob", "jump_prob"):
            p = getattr(self, name)
            if not 0 <= p < 1:
                raise ValueError(f"{name} must be in [0, 1)")
        for name in ("outlier_magnitude", "jump_magnitude"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValueError(f"bad {name} range {(lo, hi)}")
        if self.jump_magnitude[0] <= 300:
            raise ValueError("jump_magnitude lower bound must exceed 300 ticks")
        if self.jump_run_length < 1:
            raise ValueError("jump_run_length must be >= 1")
        if self.rows < 2 or self.cols < 1:
            raise ValueError("need rows >= 2 and cols >= 1")

    def replace(self, **changes) -> "ScenarioSpec":
        return dataclasses.replace(self, **changes)

    def with_dispatchers(self, *dispatchers) -> "ScenarioSpec":
        return self.replace(dispatchers=tuple(dispatchers))

    def cheating_against(self, reference: "ScenarioSpec") -> "ScenarioSpec":
        """This scenario with its mean aimed at ``reference``'s mean (rounded)."""
        return self.replace(cheat=int(round(expected_mean(reference))))


def nominal_ticks(spec: ScenarioSpec, active: bool = True) -> float:
    """Noise-free duration: base plus the mean dispatcher overhead."""
    if not active:
        return float(spec.base_ticks)
    return spec.base_ticks + INSTRUCTIONS * sum(m for m, _ in spec.dispatchers)


def smi_lambda(spec: ScenarioSpec, active: bool = True) -> float:
    return spec.smi_rate * nominal_ticks(spec, active) / SMI_RATE_UNIT


def expected_mean(spec: ScenarioSpec, cheated: bool = True) -> float:
    """Mean of a single measurement before quantization."""
    mean = nominal_ticks(spec) + spec.smi_cost[0] * smi_lambda(spec)
    if cheated and spec.cheat is not None and spec.dispatchers:
        mean -= cheat_amount(spec)
    return mean


def cheat_amount(spec: ScenarioSpec) -> float:
    """Constant the hypervisor subtracts from each affected measurement."""
    if spec.cheat is None or not spec.dispatchers:
        return 0.0
    return expected_mean(spec, cheated=False) - spec.cheat


def quantize(values: np.ndarray, spec: ScenarioSpec) -> np.ndarray:
    """Round to the tick grid anchored at ``base_ticks`` and clamp to >= one quantum."""
    q = spec.tick_quantum
    off = spec.base_ticks % q
    out = off + q * np.floor((np.asarray(values, dtype=np.float64) - off) / q + 0.5)
    return np.maximum(out, q).astype(np.int64)


def _raw_measurements(spec, noise_rng, smi_rng, active, base_offset=0, cheat=0.0):
    """Unquantized measurements, one per entry of the boolean ``active`` mask."""
    active = np.asarray(active, dtype=bool)
    n = active.size
    values = np.full(n, float(spec.base_ticks + base_offset))
    for mean, spread in spec.dispatchers:
        draws = noise_rng.uniform(mean - spread, mean + spread, size=(n, INSTRUCTIONS))
        values += np.where(active, draws.sum(axis=1), 0.0)
    lam = np.where(active, smi_lambda(spec, True), smi_lambda(spec, False))
    n_smi = smi_rng.poisson(lam)
    cost_mean, cost_spread = spec.smi_cost
    values += n_smi * cost_mean
    if cost_spread > 0 and n_smi.max(initial=0) > 0:
        width = int(n_smi.max())
        jitter = smi_rng.uniform(-cost_spread, cost_spread, size=(n, width))
        jitter[np.arange(width)[None, :] >= n_smi[:, None]] = 0.0
        values += jitter.sum(axis=1)
    if spec.dispatchers:
        values -= np.where(active, cheat, 0.0)
    return values


def simulate_measurements(spec: ScenarioSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    """``size`` independent quantized measurements (no jumps, outliers or uninstalling)."""
    active = np.ones(size, dtype=bool)
    raw = _raw_measurements(spec, rng, rng, active, cheat=cheat_amount(spec))
    return quantize(raw, spec)


def simulate_measurement(spec: ScenarioSpec, rng: np.random.Generator) -> int:
    return int(simulate_measurements(spec, rng, 1)[0])


@dataclass
class ColumnEvents:
    uninstall_row: Optional[int] = None
    jump_starts: list = field(default_factory=list)
    jump_ends: list = field(default_factory=list)
    outlier_rows: list = field(default_factory=list)


def _child_rngs(seed: int):
    ss = np.random.SeedSequence(int(seed))
    return [np.random.default_rng(s) for s in ss.spawn(5)]


def simulate_array_events(spec: ScenarioSpec, seed: int, base_offset: int = 0, label=None,
                          day_index=None, repeat_index=None):
    """Like :func:`simulate_array` but also return what was injected, per column."""
    noise_rng, smi_rng, jump_rng, outlier_rng, bc_rng = _child_rngs(seed)
    rows, cols = spec.rows, spec.cols
    cheat = cheat_amount(spec)
    out = np.empty((rows, cols), dtype=np.int64)
    events = []
    for j in range(cols):
        ev = ColumnEvents()
        active = np.full(rows, bool(spec.dispatchers))
        if spec.blue_chicken is not None and spec.dispatchers:
            lo, hi = spec.blue_chicken
            ev.uninstall_row = int(bc_rng.integers(lo, hi + 1))
            active[ev.uninstall_row:] = False
        values = _raw_measurements(spec, noise_rng, smi_rng, active, base_offset, cheat)

        shift = np.zeros(rows)
        starts = jump_rng.random(rows)
        i = 0
        while i < rows:
            if spec.jump_prob > 0 and starts[i] < spec.jump_prob:
                lo, hi = spec.jump_magnitude
                magnitude = int(jump_rng.integers(lo, hi + 1))
                length = int(jump_rng.geometric(1.0 / spec.jump_run_length))
                end = min(rows, i + length)
                shift[i:end] = magnitude
                ev.jump_starts.append(i)
                if end < rows:
                    ev.jump_ends.append(end)
                i = end
            else:
                i += 1
        values += shift

        hits = outlier_rng.random(rows) < spec.outlier_prob
        lo, hi = spec.outlier_magnitude
        mags = outlier_rng.integers(lo, hi + 1, size=rows)
        values += np.where(hits, mags, 0)
        ev.outlier_rows = [int(r) for r in np.flatnonzero(hits)]

        out[:, j] = quantize(values, spec)
        events.append(ev)
    array = IetArray(out, label=label, day_index=day_index, repeat_index=repeat_index)
    return array, events


def simulate_array(spec: ScenarioSpec, seed: int, base_offset: int = 0, label=None,
                   day_index=None, repeat_index=None) -> IetArray:
    """A ``rows x cols`` array, deterministic in ``(spec, seed)``."""
    return simulate_array_events(spec, seed, base_offset, label, day_index, repeat_index)[0]


def derive_seed(base_seed: int, day: int, repeat: int) -> int:
    state = np.random.SeedSequence([int(base_seed), int(day), int(repeat)]).generate_state(2)
    return int(state[0]) << 32 | int(state[1])


def day_drift(spec: ScenarioSpec, base_seed: int, day: int) -> int:
    """Per-day shift of the base cost: 0 on day 0, then one of -q, 0, +q."""
    if day == 0:
        return 0
    rng = np.random.default_rng([int(base_seed), int(day), 0xD81F7])
    return int(rng.integers(-1, 2)) * spec.tick_quantum


def simulate_batch(spec: ScenarioSpec, days: int = 10, repeats: int = 5, base_seed: int = 0,
                   label: str = "", delay_seconds: float = 2.0) -> TraceBatch:
    """``days * repeats`` arrays; the delay is recorded, never slept."""
    if days < 1 or repeats < 1:
        raise ValueError("days and repeats must be >= 1")
    arrays = []
    for day in range(days):
        drift = day_drift(spec, base_seed, day)
        for rep in range(repeats):
            arrays.append(
                simulate_array(spec, derive_seed(base_seed, day, rep), base_offset=drift,
                               label=label or None, day_index=day, repeat_index=rep)
            )
    return TraceBatch(tuple(arrays), label, Protocol(repeats, days, delay_seconds))


class SimulatorProvider:
    """Endless source of fresh simulated arrays, for the detector."""

    def __init__(self, spec: ScenarioSpec, seed: int = 0):
        self.spec = spec
        self.seed = seed
        self._i = 0

    def __iter__(self):
        return self

    def __next__(self) -> IetArray:
        array = simulate_array(self.spec, derive_seed(self.seed, 0xFFFF, self._i))
        self._i += 1
        return array
