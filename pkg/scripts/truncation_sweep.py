"""Sensitivity of the hilbert-interpolation errors to the truncation dimension d.

Uses the eigenvalues 2^-j, j < d, so trace(Q) approaches 2 as d grows.
"""

import argparse

from wzlab.config import default_config
from wzlab.harness import run_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dims", default="1,2,4,8")
    ap.add_argument("--replicates", type=int, default=2000)
    ap.add_argument("--field", default="linear")
    args = ap.parse_args()
    base = default_config("hilbert-interpolation")
    print(f"{'d':>3} " + " ".join(f"n={n:<7}" for n in base.n_grid) + " rate")
    for d in (int(v) for v in args.dims.split(",")):
        cfg = base.replace(dim=d, eigenvalues=tuple(2.0 ** -j for j in range(d)),
                           replicates=args.replicates, field=args.field)
        rep = run_scenario(cfg)
        print(f"{d:>3} " + " ".join(f"{e:<9.4f}" for e in rep.errors) + f" {rep.rate:.3f}")


if __name__ == "__main__":
    main()
