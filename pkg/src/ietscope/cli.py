"""Command line: simulate -> calibrate -> detect, plus probe and plot data."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import io
from .calibration import build_threshold_table
from .detector import detect
from .errors import IetError
from .simulator import SimulatorProvider, day_drift, derive_seed, simulate_array

log = logging.getLogger("ietscope")


def cmd_simulate(args):
    spec = io.read_scenario(args.scenario)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    label = args.label or Path(args.scenario).stem
    records = []
    for day in range(args.days):
        drift = day_drift(spec, args.seed, day)
        for rep in range(args.repeats):
            seed = derive_seed(args.seed, day, rep)
            array = simulate_array(spec, seed, base_offset=drift, label=label,
                                   day_index=day, repeat_index=rep)
            name = f"day{day:02d}_rep{rep:02d}.csv"
            io.write_array(out / name, array)
            records.append({"file": name, "day": day, "repeat": rep, "seed": seed, "base_drift": drift})
    manifest = {
        "label": label,
        "scenario_sha256": io.scenario_hash(spec),
        "scenario": io.scenario_to_dict(spec),
        "base_seed": args.seed,
        "days": args.days,
        "repeats": args.repeats,
        "delay_seconds": 2.0,
        "arrays": records,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {len(records)} arrays to {out}")
    return 0


def cmd_calibrate(args):
    no_hv = io.read_batch_dir(args.no_hv, "no_hv")
    hv = io.read_batch_dir(args.hv, "hv")
    nested = [io.read_batch_dir(d) for d in args.nested or ()]
    table = build_threshold_table(no_hv, hv, nested=nested)
    io.write_threshold_table(args.out, table)
    print(io.format_table(table))
    return 0


def cmd_detect(args):
    table = io.read_threshold_table(args.table)
    if args.from_dir:
        source = iter(io.read_array(f) for f in sorted(Path(args.from_dir).glob("*.csv")))
    elif args.scenario:
        source = SimulatorProvider(io.read_scenario(args.scenario), args.seed)
    else:
        from .probe import ProbeProvider

        source = ProbeProvider(args.rows, args.cols, args.cpu, args.delay_ms)
    verdict = detect(source, table, max_retries=args.max_retries, aggregation=args.aggregation)
    doc = io.verdict_to_dict(verdict)
    if args.report:
        Path(args.report).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(doc, indent=2) if args.json else io.format_verdict(verdict))
    return io.EXIT_CODES[verdict.kind.value]


def cmd_probe(args):
    from .probe import probe_array

    array = probe_array(args.rows, args.cols, args.cpu, args.delay_ms)
    io.write_array(args.out, array)
    print(f"wrote {array.rows}x{array.cols} array to {args.out}")
    return 0


def cmd_plotdata(args):
    array = io.read_array(getattr(args, "in"))
    scatter, polygon = io.emit_plot_data(array, args.level, args.out_prefix)
    print(f"wrote {scatter} and {polygon}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ietscope", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="write simulated IET arrays")
    s.add_argument("--scenario", required=True)
    s.add_argument("--days", type=int, default=10)
    s.add_argument("--repeats", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--label", default=None)
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("calibrate", help="derive a threshold table")
    c.add_argument("--no-hv", required=True)
    c.add_argument("--hv", required=True)
    c.add_argument("--nested", action="append", help="directory for the next hypervisor count (repeatable)")
    c.add_argument("--out", required=True)
    c.add_argument("--seed", type=int, default=0, help="accepted for uniformity; calibration is deterministic")
    c.set_defaults(func=cmd_calibrate)

    d = sub.add_parser("detect", help="check fresh arrays against a threshold table")
    d.add_argument("--table", required=True)
    src = d.add_mutually_exclusive_group(required=True)
    src.add_argument("--from-dir")
    src.add_argument("--scenario")
    src.add_argument("--probe", action="store_true")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--max-retries", type=int, default=3)
    d.add_argument("--aggregation", choices=("any", "all", "majority"), default="any")
    d.add_argument("--rows", type=int, default=1000)
    d.add_argument("--cols", type=int, default=10)
    d.add_argument("--cpu", type=int, default=0)
    d.add_argument("--delay-ms", type=int, default=2000)
    d.add_argument("--report", help="also write the JSON report here")
    d.add_argument("--json", action="store_true", help="print the JSON report instead of text")
    d.set_defaults(func=cmd_detect)

    pr = sub.add_parser("probe", help="measure an array on this machine")
    pr.add_argument("--rows", type=int, default=1000)
    pr.add_argument("--cols", type=int, default=10)
    pr.add_argument("--cpu", type=int, default=0)
    pr.add_argument("--delay-ms", type=int, default=2000)
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=cmd_probe)

    pd = sub.add_parser("plotdata", help="scatter and frequency-polygon text files")
    pd.add_argument("--in", required=True)
    pd.add_argument("--level", type=float, default=0.0)
    pd.add_argument("--out-prefix", required=True)
    pd.set_defaults(func=cmd_plotdata)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (IetError, OSError, ValueError) as exc:
        print(f"error: {getattr(exc, 'code', type(exc).__name__)}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
