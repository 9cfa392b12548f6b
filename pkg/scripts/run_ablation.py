#!/usr/bin/env python3
"""Ablation grid (AKT x TCL) on the synthetic corpus, several seeds each.

    python scripts/run_ablation.py --seeds 0 1 2 3 4 --configs full tcl_off akt_off
"""

import argparse
import csv
import json
import logging
import statistics
import sys
import time

from fckt.experiments import ABLATIONS, ablation_config, run_synthetic


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--configs", nargs="+", default=list(ABLATIONS), choices=list(ABLATIONS))
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("--csv", default=None)
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    overrides = dict(kv.split("=", 1) for kv in args.set)

    rows = []
    for name in args.configs:
        for seed in args.seeds:
            t0 = time.time()
            out = run_synthetic(ablation_config(name, seed, **overrides))
            r = out["report"]
            rows.append({"config": name, "seed": seed, "f1": r.f1, "ae_f1": r.ae_f1,
                         "sp_accuracy": r.sp_accuracy, "best_epoch": out["best_epoch"],
                         "seconds": round(time.time() - t0, 1)})
            print(json.dumps(rows[-1]), flush=True)
    print()
    for name in args.configs:
        f1s = [r["f1"] for r in rows if r["config"] == name]
        print(f"{name:10s} mean F1 {statistics.fmean(f1s):.4f}  median {statistics.median(f1s):.4f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
