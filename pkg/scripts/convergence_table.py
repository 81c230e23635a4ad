"""Print a per-level table (errors, terminal means, tensor limits) for one scenario."""

import argparse

import numpy as np

from wzlab.config import default_config, load_config
from wzlab.harness import run_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    src = ap.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario")
    src.add_argument("--config")
    ap.add_argument("--replicates", type=int)
    args = ap.parse_args()
    cfg = load_config(args.config) if args.config else default_config(args.scenario)
    if args.replicates:
        cfg = cfg.replace(replicates=args.replicates)
    rep = run_scenario(cfg)

    print(f"{cfg.scenario}: status {rep.status}, rate {rep.rate}")
    print(f"{'n':>5} {'sup-err':>9} {'se':>8} {'rate':>6} {'E X_n(T)':>9} {'E X(T)':>9} "
          f"{'KS p':>6} {'|H-Hlim|':>9} {'|K-Klim|':>9}")
    for lv in rep.levels:
        dh = np.abs(lv.tensors["H"]["mean"] - rep.expected["H"]).max()
        dk = np.abs(lv.tensors["K"]["mean"] - rep.expected["K"]).max()
        print(f"{lv.n:>5} {lv.mean_sup_error:9.4f} {lv.stderr:8.4f} {lv.rate_cum:6.3f} "
              f"{lv.terminal_mean:9.4f} {lv.limit_terminal_mean:9.4f} {lv.ks_pvalue:6.3f} "
              f"{dh:9.2e} {dk:9.2e}")
    print("\nmedians:  n   T(H_n)   [Y_n,Y_n]   T(U_n)")
    for row in rep.ut:
        print(f"{row['n']:>10} {row['TV_H']['q50']:8.3f} {row['bracket_Y']['q50']:11.3f} "
              f"{row['TV_U']['q50']:8.3f}")


if __name__ == "__main__":
    main()
