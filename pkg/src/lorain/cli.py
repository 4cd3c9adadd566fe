"""Command-line entry point: ``lorain ci-sweep | net | report``.

Exit codes: 0 ok, 2 usage, 3 config, 4 data.  Output goes to ``--out`` /
``--out-dir`` when given, else under ``$LORAIN_OUT_DIR`` (default
``./out``).
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from collections import defaultdict
from dataclasses import replace
from pathlib import Path
from statistics import fmean, pstdev

from .config import default_config_path, load_config, parse_config
from .errors import ConfigError, DataError, TraceIntegrityError
from .metrics import METRICS_CSV_COLUMNS, compute_metrics, metrics_csv
from .phy import RadioConfig
from .sim import run, trace_to_jsonl, write_atomic
from .waveform import SWEEP_CSV_COLUMNS, measure_delta_max

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_DATA = 0, 2, 3, 4
OUT_DIR_ENV = "LORAIN_OUT_DIR"
REPORT_METRICS = {
    "prr_vs_nodes": "prr",
    "pdr_vs_nodes": "pdr",
    "attempts_vs_nodes": "mean_attempts",
    "energy_vs_nodes": "energy_mj",
    "bitrate_vs_nodes": "bitrate_bps",
}
REPORT_COLUMNS = ["protocol", "booster_frac", "nodes", "runs", "mean", "stddev"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_int_list(text: str) -> list[int]:
    """``"7..12"`` or ``"7,9,11"`` or ``"10"`` to a list of ints."""
    out = []
    try:
        for part in text.split(","):
            if ".." in part:
                lo, hi = part.split("..")
                lo, hi = int(lo), int(hi)
                if hi < lo:
                    raise ValueError
                out.extend(range(lo, hi + 1))
            else:
                out.append(int(part))
    except ValueError:
        raise UsageError(f"bad integer list {text!r}") from None
    return out


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_DIR_ENV, "out"))


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lorain", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("ci-sweep", help="measure the constructive-interference window per (bw, sf)")
    s.add_argument("--bw", required=True, help="bandwidths in Hz, e.g. 125000 or 125000,500000")
    s.add_argument("--sf", required=True, help="spreading factors, e.g. 10 or 7..12")
    s.add_argument("--snr-db", type=float, default=10.0)
    s.add_argument("--step-ns", type=float, default=10.0)
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--interferer", action="store_true", help="add a random third transmitter")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", type=Path, help="CSV path (default $LORAIN_OUT_DIR/ci_sweep.csv)")

    n = sub.add_parser("net", help="run network scenarios and write traces plus metrics")
    n.add_argument("--config", type=Path, help="scenario INI (default: packaged calibrated config)")
    n.add_argument("--protocol", choices=("lorawan", "lorain"))
    n.add_argument("--nodes", type=int)
    n.add_argument("--boosters", type=float, help="booster fraction in [0, 1]")
    n.add_argument("--packets", type=int, help="override packets per node")
    n.add_argument("--seed", default="0", help="seed or seed list, e.g. 1..20")
    n.add_argument("--sweep", help="parameter sweep, e.g. nodes=2..20")
    n.add_argument("--no-trace", action="store_true", help="skip writing JSONL traces")
    n.add_argument("--out-dir", type=Path)

    r = sub.add_parser("report", help="aggregate metrics CSVs across seeds")
    r.add_argument("inputs", nargs="+", type=Path, help="metrics CSV files or directories holding them")
    r.add_argument("--out-dir", type=Path)
    return p


# ci-sweep --------------------------------------------------------------------


def cmd_ci_sweep(args) -> int:
    bws = parse_int_list(args.bw)
    sfs = parse_int_list(args.sf)
    if args.trials < 1 or args.step_ns <= 0 or args.workers < 1:
        raise UsageError("--trials and --workers must be >= 1 and --step-ns > 0")
    results = []
    try:
        cfgs = [RadioConfig(sf=sf, bw=bw) for bw in bws for sf in sfs]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(f"{'bw_hz':>7} {'sf':>3} {'interferer':>10} {'delta_max_us':>12} {'1/bw_us':>8}")
    for cfg in cfgs:
        res = measure_delta_max(cfg, snr_db=args.snr_db, step_ns=args.step_ns, trials=args.trials,
                                with_interferer=args.interferer, seed=args.seed, workers=args.workers)
        results.append(res)
        print(f"{cfg.bw:>7} {cfg.sf:>3} {'yes' if args.interferer else 'no':>10} "
              f"{res.delta_max_ns / 1e3:>12.3f} {1e6 / cfg.bw:>8.3f}", flush=True)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for res in results:
        w.writerows(res.csv_rows())
    out = args.out or default_out_dir() / "ci_sweep.csv"
    write_atomic(out, buf.getvalue())
    print(f"wrote {out}")
    return EXIT_OK


# net -----------------------------------------------------------------------


def _parse_sweep(text: str | None) -> tuple[str, list[int]] | None:
    if text is None:
        return None
    key, _, values = text.partition("=")
    if key != "nodes" or not values:
        raise UsageError("only --sweep nodes=A..B is supported")
    return key, parse_int_list(values)


def cmd_net(args) -> int:
    path = args.config or default_config_path()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    cfg = parse_config(text)
    seeds = parse_int_list(args.seed)
    sweep = _parse_sweep(args.sweep)

    if args.protocol is not None:
        cfg = cfg.with_protocol(args.protocol, args.boosters)
    elif args.boosters is not None:
        cfg = cfg.with_protocol(cfg.protocol, args.boosters)
    if args.packets is not None:
        if args.packets < 1:
            raise UsageError("--packets must be >= 1")
        cfg = replace(cfg, traffic=replace(cfg.traffic, packets_per_node=args.packets))
    node_counts = sweep[1] if sweep else [args.nodes if args.nodes is not None else cfg.nodes]

    out_dir = args.out_dir or default_out_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    write_atomic(out_dir / "config.ini", text)
    write_atomic(out_dir / "command.txt", " ".join(["lorain", "net", *sys.argv[2:]]) + "\n")

    rows = []
    for nodes in node_counts:
        scen = replace(cfg, nodes=nodes)
        for seed in seeds:
            trace = run(scen, seed)
            m = compute_metrics(trace, scen)
            tag = f"{scen.protocol}_n{nodes}_b{scen.booster_fraction:g}_s{seed}"
            if not args.no_trace:
                write_atomic(out_dir / f"trace_{tag}.jsonl", trace_to_jsonl(trace))
            rows.append(m.csv_row(scen.name, seed, scen.protocol, nodes, scen.booster_fraction))
            print(f"{tag}: prr={m.prr:.3f} pdr={m.pdr:.3f} attempts={m.mean_attempts:.2f} "
                  f"energy={m.energy_per_packet_j * 1e3:.1f} mJ", flush=True)
    write_atomic(out_dir / "metrics.csv", metrics_csv(rows))
    print(f"wrote {out_dir / 'metrics.csv'}")
    return EXIT_OK


# report ----------------------------------------------------------------------


def _metric_files(inputs) -> list[Path]:
    files = []
    for p in inputs:
        if p.is_dir():
            files.extend(sorted(p.rglob("metrics*.csv")))
        elif p.exists():
            files.append(p)
        else:
            raise DataError(f"{p}: no such file")
    return files


def read_metric_rows(inputs) -> list[dict]:
    rows = []
    for f in _metric_files(inputs):
        with open(f, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != METRICS_CSV_COLUMNS:
                raise DataError(f"{f}: unexpected header {reader.fieldnames}")
            rows.extend(reader)
    if not rows:
        raise DataError("no metrics rows found")
    return rows


def aggregate(rows: list[dict], column: str) -> list[dict]:
    groups = defaultdict(list)
    for r in rows:
        groups[(r["protocol"], float(r["booster_frac"]), int(r["nodes"]))].append(float(r[column]))
    out = []
    for (proto, frac, nodes), vals in sorted(groups.items()):
        out.append({
            "protocol": proto,
            "booster_frac": f"{frac:g}",
            "nodes": nodes,
            "runs": len(vals),
            "mean": f"{fmean(vals):.6g}",
            "stddev": f"{pstdev(vals):.6g}",
        })
    return out


def cmd_report(args) -> int:
    rows = read_metric_rows(args.inputs)
    out_dir = args.out_dir or default_out_dir()
    for name, column in REPORT_METRICS.items():
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(aggregate(rows, column))
        write_atomic(out_dir / f"{name}.csv", buf.getvalue())
    print(f"wrote {len(REPORT_METRICS)} aggregate files to {out_dir}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required (ci-sweep, net, report)")
        handler = {"ci-sweep": cmd_ci_sweep, "net": cmd_net, "report": cmd_report}[args.command]
        return handler(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"lorain: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"lorain: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, TraceIntegrityError) as exc:
        print(f"lorain: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
