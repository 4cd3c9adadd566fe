#!/usr/bin/env python3
"""Search the gateway offset that puts baseline LoRaWAN near a target PRR.

For each candidate distance it runs the packaged config with plain
LoRaWAN and with boosters on the same seeds and prints PRR, attempts and
energy for both plus the energy ratio.  The shipped default.ini uses the
row that best matched a 62% baseline.

    python3 scripts/calibrate.py --distances 600,630,660 --seeds 20
"""

import argparse
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from statistics import fmean

from lorain.config import default_config, load_config
from lorain.metrics import compute_metrics
from lorain.sim import run


def one(job):
    cfg, seed = job
    m = compute_metrics(run(cfg, seed), cfg)
    return m.prr, m.mean_attempts, m.energy_per_packet_j


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--distances", default="600,630,660")
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--boosters", type=float, default=0.15)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    base = load_config(args.config) if args.config else default_config()
    print(f"{'d_m':>6} | {'prr':>6} {'att':>5} {'mJ':>6} | {'prr':>6} {'att':>5} {'mJ':>6} | ratio")
    with ProcessPoolExecutor(args.workers) as pool:
        for d in (float(x) for x in args.distances.split(",")):
            cfg = replace(base, topology=replace(base.topology, gateway_distance_m=d))
            row = []
            for proto, frac in (("lorawan", 0.0), ("lorain", args.boosters)):
                c = cfg.with_protocol(proto, frac)
                res = list(pool.map(one, [(c, s) for s in range(args.seeds)]))
                row.append([fmean(r[i] for r in res) for i in range(3)])
            (bp, ba, be), (lp, la, le) = row
            print(f"{d:>6.0f} | {bp:>6.3f} {ba:>5.2f} {be * 1e3:>6.1f} | {lp:>6.3f} {la:>5.2f} "
                  f"{le * 1e3:>6.1f} | {be / le:.2f}", flush=True)


if __name__ == "__main__":
    main()
