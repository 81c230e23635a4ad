"""Command line entry point ``wz``.

Exit codes: 0 success, 1 config error, 2 scenario failure, 3 internal error.
"""

from __future__ import annotations

import argparse
import sys
import time
import traceback

from .config import BUILTIN, ConfigError, default_config, dump_config, load_config

OK, CONFIG_ERROR, SCENARIO_FAILURE, INTERNAL_ERROR = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wz", description="Wong-Zakai convergence lab")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario and write report.json, errors.csv, tensors.json")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="flat key = value config file")
    src.add_argument("--scenario", help="built-in scenario name (see `wz list`)")
    run.add_argument("--seed", type=int)
    run.add_argument("--out", help="output directory (default: config value or ./wz-out)")
    run.add_argument("--replicates", type=int)
    run.add_argument("--workers", type=int)
    ls = sub.add_parser("list", help="list built-in scenarios")
    ls.add_argument("--show", action="store_true", help="print each default config")
    ver = sub.add_parser("verify", help="exact partition identities on random inputs")
    ver.add_argument("--seeds", type=int, default=100)
    return p


def _run(args) -> int:
    from .harness import run_scenario
    from .report import write_report

    overrides = {"seed": args.seed, "replicates": args.replicates, "workers": args.workers,
                 "out": args.out}
    if args.config:
        cfg = load_config(args.config, **overrides)
    else:
        cfg = default_config(args.scenario).replace(
            **{k: v for k, v in overrides.items() if v is not None})
    start = time.perf_counter()
    rep = run_scenario(cfg)
    out = write_report(rep, cfg.out or "wz-out")
    print(f"{cfg.scenario}: {rep.status} in {time.perf_counter() - start:.1f}s -> {out}")
    print(f"{'n':>6} {'mean_sup_error':>15} {'stderr':>10} {'aborted':>8}")
    for lv in rep.levels:
        print(f"{lv.n:>6} {lv.mean_sup_error:>15.6g} {lv.stderr:>10.3g} {lv.aborted:>8}")
    if rep.rate is not None:
        print(f"empirical rate: {rep.rate:.3f}")
    for flag in rep.flags:
        print(f"flag: {flag}")
    return OK if rep.status == "pass" else SCENARIO_FAILURE


def _verify(args) -> int:
    from .verify import TOL, run_verify

    start = time.perf_counter()
    results = run_verify(args.seeds)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name:<24} worst relative residual "
              f"{r.worst:.2e} over {r.seeds} seeds (tol {TOL:g})")
    print(f"{time.perf_counter() - start:.2f}s")
    return OK if all(r.passed for r in results) else SCENARIO_FAILURE


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "list":
            for name, cfg in BUILTIN.items():
                print(name)
                if args.show:
                    print("  " + dump_config(cfg).replace("\n", "\n  ").rstrip())
            return OK
        if args.command == "verify":
            return _verify(args)
        return _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    except Exception:
        traceback.print_exc()
        return INTERNAL_ERROR


if __name__ == "__main__":
    sys.exit(main())
