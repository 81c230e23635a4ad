"""Run every built-in scenario and write its report under OUT/<scenario>/."""

import argparse
import time

from wzlab.config import BUILTIN
from wzlab.harness import run_scenario
from wzlab.report import write_report


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="wz-out")
    ap.add_argument("--replicates", type=int, default=None)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    for name, cfg in BUILTIN.items():
        changes = {"workers": args.workers, "seed": args.seed}
        if args.replicates:
            changes["replicates"] = args.replicates
        cfg = cfg.replace(**changes)
        start = time.perf_counter()
        rep = run_scenario(cfg)
        path = write_report(rep, f"{args.out}/{name}")
        rate = f"{rep.rate:.3f}" if rep.rate is not None else "n/a"
        print(f"{name:<24} {rep.status:<5} rate {rate:<6} {time.perf_counter() - start:6.1f}s  {path}")
        for flag in rep.flags:
            print(f"    flag: {flag}")


if __name__ == "__main__":
    main()
