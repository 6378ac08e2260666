from __future__ import annotations
import argparse, json, sys
from pathlib import Path
from typing import List, Optional

from poolsearch.config import LOG_LEVEL, PORT
from poolsearch.errors import ConfigError, MissingMetrics
from poolsearch.logging_setup import configure


def cmd_run(args) -> int:
    from poolsearch.harness import load_experiment, run_experiment

    cfg = load_experiment(args.config)
    seeds = [args.seed] if args.seed is not None else None
    print(f"[run] {cfg.name}: methods={[m.label or m.method.value for m in cfg.methods]} N={args.n or cfg.n_values}")
    out = run_experiment(cfg, Path(args.out) if args.out else None,
                         methods=args.method, n_values=args.n, seeds=seeds)
    print(out.aggregates.to_string(index=False))
    for name, path in out.paths.items():
        print(f"[run] wrote {name}: {path}")
    return 0


def cmd_curves(args) -> int:
    from poolsearch.harness import emit_curves

    path = emit_curves(Path(args.out))
    print(f"[curves] wrote {path}")
    return 0


def cmd_validate(args) -> int:
    from poolsearch.harness import load_experiment

    cfg = load_experiment(args.config)
    cells = sum(len(m.expand()) for m in cfg.methods) * len(cfg.n_values) * len(cfg.seeds)
    print(f"[validate] OK: {cfg.name} ({cells} cells per problem)")
    return 0


def cmd_oracle(args) -> int:
    from poolsearch.oracle import run_oracle_suite

    results = run_oracle_suite(quick=args.quick)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<20} {r.seconds:7.2f}s  {r.detail}")
    return 0 if all(r.passed for r in results) else 1


def cmd_directional(args) -> int:
    from poolsearch.harness import directional_holds, directional_suite

    df = directional_suite(problems=args.problems, master_seeds=list(range(args.seeds)),
                           n=args.n, horizon=args.horizon)
    print(df.to_string(index=False))
    ok, problems = directional_holds(df)
    for p in problems:
        print(f"  {p}")
    print(f"[directional] {'PASS' if ok else 'FAIL'}")
    if args.save:
        df.to_csv(args.save, index=False)
        print(f"[directional] wrote {args.save}")
    return 0 if ok else 1


def cmd_blocker(args) -> int:
    from poolsearch.harness import blocker_sweep

    res = blocker_sweep(instances=args.instances, seeds=args.seeds, rounds=args.rounds)
    print(json.dumps({**res.model_dump(), "sps_recovery_rate": res.sps_recovery_rate}, indent=2))
    ok = res.greedy_violations == 0 and res.sps_recovery_rate >= 0.8
    print(f"[blocker] {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("poolsearch.main:app", host=args.host, port=args.port, log_level=LOG_LEVEL.lower())
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="poolsearch", description="Persistent-pool search experiments")
    ap.add_argument("--log-level", default=LOG_LEVEL)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="run an experiment sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="output directory (overrides config)")
    p.add_argument("--seed", type=int, default=None, help="run a single seed")
    p.add_argument("--method", action="append", default=None, help="method name or label; repeatable")
    p.add_argument("--n", type=int, action="append", default=None, help="child budget N; repeatable")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("curves", help="recompute curves.csv from records")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_curves)

    p = sub.add_parser("validate-config", help="validate an experiment config")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("oracle-check", help="run the oracle property suite")
    p.add_argument("--quick", action="store_true", help="smaller samples, no convergence ladder")
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("directional", help="accuracy-per-compute suite on trap problems")
    p.add_argument("--problems", type=int, default=200)
    p.add_argument("--seeds", type=int, default=5, help="number of master seeds")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--horizon", type=int, default=10)
    p.add_argument("--save", default=None, help="CSV path for the per-seed table")
    p.set_defaults(fn=cmd_directional)

    p = sub.add_parser("blocker", help="greedy vs subpool selection on blocker envs")
    p.add_argument("--instances", type=int, default=50)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--rounds", type=int, default=5)
    p.set_defaults(fn=cmd_blocker)

    p = sub.add_parser("serve-mock", help="serve the mock generator/scorer")
    p.add_argument("--host", default="0.0.0.0")
    p.add_argument("--port", type=int, default=PORT)
    p.set_defaults(fn=cmd_serve)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure(args.log_level)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"[config] {e}", file=sys.stderr)
        return 2
    except MissingMetrics as e:
        print(f"[curves] {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
