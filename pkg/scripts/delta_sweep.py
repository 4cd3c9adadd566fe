#!/usr/bin/env python3
"""Measure the constructive-interference window for every (bw, sf) pair.

Writes one CSV per bandwidth and interferer setting under OUT_DIR and
prints a summary table with the per-bandwidth average over sf 7..12.

    python3 scripts/delta_sweep.py --trials 20 --step-ns 20 --out-dir out/delta
"""

import argparse
from pathlib import Path
from statistics import fmean

from lorain.phy import VALID_BW, RadioConfig
from lorain.waveform import measure_delta_max, write_sweep_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--step-ns", type=float, default=20.0)
    ap.add_argument("--snr-db", type=float, default=10.0)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out-dir", type=Path, default=Path("out/delta"))
    args = ap.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)

    print(f"{'bw_khz':>6} {'interferer':>10} " + " ".join(f"sf{sf:<5}" for sf in range(7, 13)) + "  avg_us")
    for bw in VALID_BW:
        for intf in (False, True):
            results = [measure_delta_max(RadioConfig(sf=sf, bw=bw), snr_db=args.snr_db,
                                         step_ns=args.step_ns, trials=args.trials,
                                         with_interferer=intf, seed=args.seed, workers=args.workers)
                       for sf in range(7, 13)]
            us = [r.delta_max_ns / 1e3 for r in results]
            tag = "int" if intf else "clean"
            write_sweep_csv(results, args.out_dir / f"delta_{bw // 1000}k_{tag}.csv")
            print(f"{bw // 1000:>6} {'yes' if intf else 'no':>10} " + " ".join(f"{u:<7.2f}" for u in us)
                  + f"  {fmean(us):.2f}", flush=True)


if __name__ == "__main__":
    main()
