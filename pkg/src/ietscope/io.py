"""File formats: array CSV, scenario and threshold-table JSON, reports, plot data."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Optional

import numpy as np

from .core import (
    DetectionVerdict,
    IetArray,
    NestedBand,
    StatisticKind,
    ThresholdEntry,
    ThresholdTable,
    TraceBatch,
    VariationInterval,
    band_gaps,
    vectorize,
)
from .errors import (
    InvalidTableError,
    MalformedCSVError,
    MissingFieldError,
    UnknownFieldError,
)
from .simulator import ScenarioSpec
from .stats import frequency_classes, low_frequency_filter

TABLE_FORMAT = "ietscope.threshold_table"
_META_KEYS = {"label": str, "day": int, "repeat": int}


# -- arrays -----------------------------------------------------------------

def format_array(array: IetArray) -> str:
    lines = []
    if array.label is not None:
        lines.append(f"# label={array.label}")
    if array.day_index is not None:
        lines.append(f"# day={array.day_index}")
    if array.repeat_index is not None:
        lines.append(f"# repeat={array.repeat_index}")
    lines.append(",".join(f"col_{j + 1}" for j in range(array.cols)))
    lines.extend(",".join(str(int(v)) for v in row) for row in array.values)
    return "\n".join(lines) + "\n"


def write_array(path, array: IetArray) -> None:
    Path(path).write_text(format_array(array), encoding="utf-8", newline="\n")


def parse_array(text: str) -> IetArray:
    meta = {}
    rows = []
    ncols = None
    header_seen = False
    lineno = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].strip().partition("=")
            if sep and key.strip() in _META_KEYS:
                try:
                    meta[key.strip()] = _META_KEYS[key.strip()](value.strip())
                except ValueError:
                    raise MalformedCSVError(f"bad metadata value {value!r}", lineno) from None
            continue
        cells = [c.strip() for c in line.split(",")]
        if not header_seen and not rows and cells[0].startswith("col_"):
            expected = [f"col_{j + 1}" for j in range(len(cells))]
            if cells != expected:
                raise MalformedCSVError("header must be col_1,...,col_M", lineno)
            ncols = len(cells)
            header_seen = True
            continue
        if ncols is None:
            ncols = len(cells)
        if len(cells) != ncols:
            raise MalformedCSVError(f"expected {ncols} values, got {len(cells)}", lineno)
        row = []
        for c in cells:
            try:
                v = int(c)
            except ValueError:
                raise MalformedCSVError(f"non-integer value {c!r}", lineno) from None
            if v <= 0:
                raise MalformedCSVError(f"value {v} is not positive", lineno)
            row.append(v)
        rows.append(row)
    if len(rows) < 2:
        raise MalformedCSVError(f"need at least 2 data rows, got {len(rows)}", lineno)
    return IetArray(np.array(rows, dtype=np.int64), label=meta.get("label"),
                    day_index=meta.get("day"), repeat_index=meta.get("repeat"))


def read_array(path) -> IetArray:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_array(fh.read())


def read_batch_dir(path, label: str = "") -> TraceBatch:
    """All ``*.csv`` arrays in a directory, in file-name order."""
    files = sorted(Path(path).glob("*.csv"))
    if not files:
        raise FileNotFoundError(f"no .csv arrays in {path}")
    return TraceBatch(tuple(read_array(f) for f in files), label or Path(path).name)


# -- scenarios --------------------------------------------------------------

_SCENARIO_FIELDS = (
    "base_ticks", "tick_quantum", "smi_rate", "smi_cost", "dispatchers", "cheat",
    "blue_chicken", "outlier_prob", "outlier_magnitude", "jump_prob", "jump_magnitude",
    "jump_run_length", "rows", "cols",
)


def scenario_to_dict(spec: ScenarioSpec) -> dict:
    return {
        "base_ticks": spec.base_ticks,
        "tick_quantum": spec.tick_quantum,
        "smi_rate": spec.smi_rate,
        "smi_cost": {"mean": spec.smi_cost[0], "spread": spec.smi_cost[1]},
        "dispatchers": [{"overhead_mean": m, "overhead_spread": s} for m, s in spec.dispatchers],
        "cheat": {"mode": "off"} if spec.cheat is None
        else {"mode": "match_mean", "target_mean": int(spec.cheat)},
        "blue_chicken": None if spec.blue_chicken is None
        else {"uninstall_after": list(spec.blue_chicken)},
        "outlier_prob": spec.outlier_prob,
        "outlier_magnitude": list(spec.outlier_magnitude),
        "jump_prob": spec.jump_prob,
        "jump_magnitude": list(spec.jump_magnitude),
        "jump_run_length": spec.jump_run_length,
        "rows": spec.rows,
        "cols": spec.cols,
    }


def _require(d: dict, keys, where=""):
    if not isinstance(d, dict):
        raise ValueError(f"{where or 'document'} must be an object")
    for k in d:
        if k not in keys:
            raise UnknownFieldError(f"{where}.{k}" if where else k)
    for k in keys:
        if k not in d:
            raise MissingFieldError(f"{where}.{k}" if where else k)


def scenario_from_dict(d: dict) -> ScenarioSpec:
    _require(d, _SCENARIO_FIELDS)
    _require(d["smi_cost"], ("mean", "spread"), "smi_cost")
    for i, disp in enumerate(d["dispatchers"]):
        _require(disp, ("overhead_mean", "overhead_spread"), f"dispatchers[{i}]")
    cheat = d["cheat"]
    if not isinstance(cheat, dict) or cheat.get("mode") not in ("off", "match_mean"):
        raise ValueError("cheat.mode must be 'off' or 'match_mean'")
    _require(cheat, ("mode",) if cheat["mode"] == "off" else ("mode", "target_mean"), "cheat")
    bc = d["blue_chicken"]
    if bc is not None:
        _require(bc, ("uninstall_after",), "blue_chicken")
    return ScenarioSpec(
        base_ticks=int(d["base_ticks"]),
        tick_quantum=int(d["tick_quantum"]),
        smi_rate=float(d["smi_rate"]),
        smi_cost=(d["smi_cost"]["mean"], d["smi_cost"]["spread"]),
        dispatchers=tuple((x["overhead_mean"], x["overhead_spread"]) for x in d["dispatchers"]),
        cheat=None if cheat["mode"] == "off" else int(cheat["target_mean"]),
        blue_chicken=None if bc is None else tuple(bc["uninstall_after"]),
        outlier_prob=float(d["outlier_prob"]),
        outlier_magnitude=tuple(d["outlier_magnitude"]),
        jump_prob=float(d["jump_prob"]),
        jump_magnitude=tuple(d["jump_magnitude"]),
        jump_run_length=float(d["jump_run_length"]),
        rows=int(d["rows"]),
        cols=int(d["cols"]),
    )


def write_scenario(path, spec: ScenarioSpec) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(spec), indent=2) + "\n", encoding="utf-8")


def read_scenario(path) -> ScenarioSpec:
    return scenario_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def scenario_hash(spec: ScenarioSpec) -> str:
    blob = json.dumps(scenario_to_dict(spec), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# -- threshold tables -------------------------------------------------------

def _interval_to_dict(iv: Optional[VariationInterval]):
    if iv is None:
        return None
    return {"s_min": iv.s_min, "s_max": iv.s_max, "n": iv.n, "confidence": iv.confidence}


def _interval_from_dict(d) -> Optional[VariationInterval]:
    if d is None:
        return None
    return VariationInterval(float(d["s_min"]), float(d["s_max"]), int(d["n"]))


def _num(x):
    return None if x is None else float(x)


def table_to_dict(table: ThresholdTable) -> dict:
    doc = {
        "format": TABLE_FORMAT,
        "version": 1,
        "chosen_filtration_level": table.chosen_filtration_level,
        "nested_statistic": table.nested_statistic.value,
        "entries": [
            {
                "statistic": e.statistic.value,
                "symbol": e.statistic.symbol,
                "filtration_level": e.filtration_level,
                "no_hv_upper": e.no_hv_upper,
                "hv_lower": e.hv_lower,
                "type1": e.type1,
                "type2": e.type2,
                "no_hv_interval": _interval_to_dict(e.no_hv_interval),
                "hv_interval": _interval_to_dict(e.hv_interval),
            }
            for e in table.entries
        ],
        "nested": None,
    }
    if table.nested_bands is not None:
        records = []
        bands = table.nested_bands
        gaps = band_gaps(bands)
        for i, b in enumerate(bands):
            records.append({"kind": "band", "lower": b.lower, "upper": b.upper,
                            "count": b.count, "type1": b.type1, "type2": b.type2})
            if i < len(gaps):
                records.append({"kind": "gap", "lower": gaps[i][0], "upper": gaps[i][1],
                                "verdict": "indeterminate"})
        doc["nested"] = records
    return doc


def table_from_dict(doc: dict) -> ThresholdTable:
    try:
        if doc.get("format") != TABLE_FORMAT:
            raise InvalidTableError(f"not a threshold table (format={doc.get('format')!r})")
        entries = tuple(
            ThresholdEntry(
                statistic=StatisticKind(e["statistic"]),
                filtration_level=float(e["filtration_level"]),
                no_hv_upper=float(e["no_hv_upper"]),
                hv_lower=_num(e["hv_lower"]),
                type1=_num(e["type1"]),
                type2=_num(e["type2"]),
                no_hv_interval=_interval_from_dict(e["no_hv_interval"]),
                hv_interval=_interval_from_dict(e["hv_interval"]),
            )
            for e in doc["entries"]
        )
        bands = None
        if doc.get("nested") is not None:
            bands = tuple(
                NestedBand(_num(r["lower"]), _num(r["upper"]), int(r["count"]),
                           float(r["type1"]), float(r["type2"]))
                for r in doc["nested"] if r["kind"] == "band"
            )
        return ThresholdTable(entries, bands, float(doc["chosen_filtration_level"]),
                              StatisticKind(doc.get("nested_statistic", "layers_avg")))
    except InvalidTableError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidTableError(str(exc)) from exc


def write_threshold_table(path, table: ThresholdTable) -> None:
    Path(path).write_text(json.dumps(table_to_dict(table), indent=2) + "\n", encoding="utf-8")


def read_threshold_table(path) -> ThresholdTable:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidTableError(str(exc)) from exc
    return table_from_dict(doc)


def format_table(table: ThresholdTable) -> str:
    """Plain-text summary laid out like a final threshold table."""
    def fmt(x):
        if x is None:
            return "-"
        if isinstance(x, float) and x.is_integer():
            return f"{int(x):,}"
        return f"{x:,.4g}" if isinstance(x, float) else str(x)

    lines = [f"{'stat':<6}{'level':>7}  {'no hv':>14}  {'hv present':>14}  {'type I':>7}  {'type II':>7}"]
    for e in table.entries:
        lines.append(
            f"{e.statistic.symbol:<6}{e.filtration_level:>7g}  {'<= ' + fmt(e.no_hv_upper):>14}  "
            f"{('>= ' + fmt(e.hv_lower)) if e.hv_lower is not None else '-':>14}  "
            f"{fmt(e.type1):>7}  {fmt(e.type2):>7}"
        )
    if table.nested_bands:
        lines.append(f"nested bands ({table.nested_statistic.symbol}, level {table.chosen_filtration_level:g}):")
        for b in table.nested_bands:
            lo = "-inf" if b.lower is None else fmt(b.lower)
            hi = "inf" if b.upper is None else fmt(b.upper)
            lines.append(f"  [{lo}, {hi}] -> {b.count} hypervisor(s)  type I {b.type1:g}  type II {b.type2:g}")
    return "\n".join(lines)


# -- reports ----------------------------------------------------------------

EXIT_CODES = {
    "no_hypervisor": 0,
    "hypervisors_present": 2,
    "indeterminate_remeasure": 3,
    "blue_chicken_suspect": 4,
}


def verdict_to_dict(verdict: DetectionVerdict) -> dict:
    return {
        "verdict": verdict.kind.value,
        "count": verdict.count,
        "arrays_used": verdict.arrays_used,
        "blue_chicken": verdict.blue_chicken,
        "evidence": [
            {"statistic": ev.statistic.value, "symbol": ev.statistic.symbol,
             "value": ev.value, "bound": ev.bound, "side": ev.side.value}
            for ev in verdict.evidence
        ],
    }


def format_verdict(verdict: DetectionVerdict) -> str:
    head = verdict.kind.value.replace("_", " ")
    if verdict.count is not None and verdict.kind.value == "hypervisors_present":
        head += f" (count {verdict.count})"
    lines = [f"verdict: {head}", f"arrays measured: {verdict.arrays_used}"]
    for ev in verdict.evidence:
        lines.append(f"  {ev.statistic.symbol:<3} {ev.value:>16.6g}  {ev.side.value}")
    return "\n".join(lines)


# -- plot data --------------------------------------------------------------

def emit_plot_data(array: IetArray, level: float, prefix) -> tuple[Path, Path]:
    """Write ``<prefix>_scatter.txt`` (index,value) and ``<prefix>_polygon.txt`` (value,frequency)."""
    series = vectorize(array)
    kept = low_frequency_filter(series, level)
    if level > 0:
        _, inv, counts = np.unique(series, return_inverse=True, return_counts=True)
        index = np.flatnonzero(counts[inv.ravel()] / series.size >= level)
    else:
        index = np.arange(series.size)
    prefix = str(prefix)
    scatter = Path(prefix + "_scatter.txt")
    polygon = Path(prefix + "_polygon.txt")
    scatter.write_text("".join(f"{i},{v}\n" for i, v in zip(index, kept)), encoding="utf-8")
    freqs = frequency_classes(kept)
    polygon.write_text("".join(f"{v},{freqs[v]!r}\n" for v in sorted(freqs)), encoding="utf-8")
    return scatter, polygon


def read_polygon(path) -> dict:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        v, f = line.split(",")
        out[int(v)] = float(f)
    return out
