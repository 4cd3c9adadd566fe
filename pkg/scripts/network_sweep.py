#!/usr/bin/env python3
"""Node-count sweep for both protocols, then the aggregate CSVs.

Runs ``lorain net --sweep nodes=A..B`` for plain LoRaWAN and for LoRaIN
with a booster fraction, then ``lorain report`` over both.

    python3 scripts/network_sweep.py --nodes 2..20 --seeds 1..5 --packets 20
"""

import argparse
import sys
from pathlib import Path

from lorain.cli import main as lorain


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path)
    ap.add_argument("--nodes", default="2..20")
    ap.add_argument("--seeds", default="1..5")
    ap.add_argument("--boosters", type=float, default=0.15)
    ap.add_argument("--packets", type=int)
    ap.add_argument("--out-dir", type=Path, default=Path("out/network"))
    args = ap.parse_args()

    common = ["--sweep", f"nodes={args.nodes}", "--seed", args.seeds, "--no-trace"]
    if args.config:
        common += ["--config", str(args.config)]
    if args.packets:
        common += ["--packets", str(args.packets)]
    runs = {"lorawan": ["--boosters", "0"], "lorain": ["--boosters", str(args.boosters)]}
    for proto, extra in runs.items():
        code = lorain(["net", "--protocol", proto, *extra, *common, "--out-dir", str(args.out_dir / proto)])
        if code:
            return code
    return lorain(["report", str(args.out_dir / "lorawan"), str(args.out_dir / "lorain"),
                   "--out-dir", str(args.out_dir / "report")])


if __name__ == "__main__":
    sys.exit(main())
