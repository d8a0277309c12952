"""Command line entry point: ``specrl run|sweep|oracle|eval|report``.

Exit codes: 0 success, 1 failed oracle check, 2 usage or config error,
3 run halted on a non-finite loss or gradient.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .config import ConfigError, load_config, parse_overrides
from .runner import EXIT_NONFINITE, EXIT_OK, EXIT_USAGE, run_experiment

EXIT_CHECK_FAILED = 1


class UsageError(Exception):
    pass


def parse_seed_range(text: str) -> list:
    """``"a..b"`` (inclusive) or a comma list ``"1,4,7"``."""
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            a, b = int(a), int(b)
            if b < a:
                raise ValueError
            return list(range(a, b + 1))
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"bad seed range {text!r}; use a..b or a,b,c") from None


def _load(args, seed=None):
    overrides = parse_overrides(args.override or [])
    if seed is not None:
        overrides["seed"] = seed
    return load_config(args.config, overrides)


def _print_row(row):
    losses = " ".join(f"{k}={v:.4g}" for k, v in row.losses.items())
    print(f"frame {row.frame:>8d}  return {row.return_mean:9.2f} +- {row.return_std:7.2f}  {losses}", flush=True)


def cmd_run(args) -> int:
    cfg = _load(args, args.seed)
    out = args.out or os.path.join("runs", f"{cfg.env}_{cfg.kind}_s{cfg.seed}")
    res = run_experiment(cfg, out, progress=None if args.quiet else _print_row)
    if res.exit_code == EXIT_NONFINITE:
        print(f"run halted on a non-finite value; diagnostics at {res.paths.get('halt')}", file=sys.stderr)
    else:
        print(f"wrote {res.paths['csv']}")
    return res.exit_code


def _sweep_worker(job):
    cfg, out = job
    res = run_experiment(cfg, out)
    last = res.rows[-1].return_mean if res.rows else None
    return cfg.seed, res.exit_code, last


def cmd_sweep(args) -> int:
    seeds = parse_seed_range(args.seeds)
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    base = args.out or "runs"
    jobs = []
    for s in seeds:
        cfg = _load(args, s)
        jobs.append((cfg, os.path.join(base, f"{cfg.env}_{cfg.kind}_s{s}")))
    if args.jobs == 1:
        results = [_sweep_worker(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_worker, jobs))
    code = EXIT_OK
    for seed, ec, last in results:
        shown = "n/a" if last is None else f"{last:.2f}"
        print(f"seed {seed}: exit {ec}, last return {shown}")
        code = max(code, ec)
    return code


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return x


def cmd_oracle(args) -> int:
    from ..checks import ORACLE_CHECKS

    names = list(ORACLE_CHECKS) if args.name == "all" else [args.name]
    for n in names:
        if n not in ORACLE_CHECKS:
            raise UsageError(f"unknown oracle check {n!r}; choose from {sorted(ORACLE_CHECKS)} or all")
    code = EXIT_OK
    for n in names:
        res = _jsonable(ORACLE_CHECKS[n]())
        status = "PASS" if res["passed"] else "FAIL"
        print(f"{status} {n} ({res['seconds']:.1f}s)")
        if args.verbose:
            print(json.dumps(res, indent=2, sort_keys=True))
        if not res["passed"]:
            code = EXIT_CHECK_FAILED
    return code


def cmd_eval(args) -> int:
    from ..agent.checkpoint import load_agent
    from ..envs import ActionRepeat, make_env
    from ..pomdp import WindowedEnv
    from .runner import evaluate

    if args.episodes < 1:
        raise UsageError("--episodes must be >= 1")
    agent, header = load_agent(args.checkpoint)
    meta = header.get("meta", {})
    env = make_env(meta.get("env", "pendulum"), args.seed, init=meta.get("pendulum_init", "random"))
    env = ActionRepeat(env, int(meta.get("action_repeat", 2)))
    if meta.get("window_adapter"):
        env = WindowedEnv(env, int(meta.get("window", 1)))
    if env.obs_dim != agent.obs_dim:
        raise UsageError(f"checkpoint expects observation width {agent.obs_dim}, env gives {env.obs_dim}")
    mean, std, returns = evaluate(agent, env, args.episodes)
    print(json.dumps({"return_mean": mean, "return_std": std, "returns": returns.tolist()}))
    return EXIT_OK


def cmd_report(args) -> int:
    from .report import collect_runs, render_report

    runs = collect_runs(args.runs)
    if not runs:
        raise UsageError(f"no metrics.csv found under {args.runs}")
    paths = render_report(runs, args.out, smoothing_window=args.window, threshold=args.threshold)
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="specrl", description="Spectral representation RL experiments")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="train one configuration")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--override", action="append", metavar="KEY=VAL")
    r.add_argument("--out")
    r.add_argument("--quiet", action="store_true")
    r.set_defaults(fn=cmd_run)

    s = sub.add_parser("sweep", help="train one configuration over several seeds")
    s.add_argument("--config", required=True)
    s.add_argument("--seeds", required=True, help="a..b inclusive, or a,b,c")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--override", action="append", metavar="KEY=VAL")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_sweep)

    o = sub.add_parser("oracle", help="run a named oracle check, or all")
    o.add_argument("name")
    o.add_argument("--verbose", action="store_true")
    o.set_defaults(fn=cmd_oracle)

    e = sub.add_parser("eval", help="evaluate a saved agent")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--episodes", type=int, default=10)
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(fn=cmd_eval)

    rp = sub.add_parser("report", help="render learning curves from run directories")
    rp.add_argument("runs", nargs="+", help="run directories or parents of run directories")
    rp.add_argument("--out", default="report")
    rp.add_argument("--window", type=int, default=5)
    rp.add_argument("--threshold", type=float)
    rp.set_defaults(fn=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    try:
        return args.fn(args)
    except (ConfigError, UsageError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
