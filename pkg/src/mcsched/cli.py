"""Command-line interface.

Subcommands: ``run`` (one cell), ``sweep`` (grid), ``bound`` (rate-function
upper bound table), ``verify`` (property suites), ``report`` (CSV to summary).
Exit codes: 0 success, 1 usage error, 2 verification failure, 3 instability
abort.
"""
from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace

from . import analysis, harness
from .model import ConfigError, IidBernoulli0L, TwoStateMarkov

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFY_FAILED = 2
EXIT_UNSTABLE = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit2(message)


class SystemExit2(Exception):
    def __init__(self, message):
        super().__init__(message)


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v != "")
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {exc}")


def build_parser() -> _Parser:
    p = _Parser(prog="mcsched", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment file")
    common.add_argument("--policy", help="policy name (dssg|dqsg|dmws|qssg|gfbs|dwm|dwmn|hybrid)")
    common.add_argument("--n", type=int, help="system size override")
    common.add_argument("--slots", type=int, help="horizon override")
    common.add_argument("--warmup", type=int, help="warmup override")
    common.add_argument("--seed", type=int, help="seed override")
    common.add_argument("--b", type=_int_list, help="comma-separated thresholds")
    common.add_argument("--out", help="output path")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--jobs", type=int, help="worker processes")
    common.add_argument("--paper-scale", action="store_true",
                        help="use the 1e7-slot horizon instead of the desk-scale 1e6")

    runp = sub.add_parser("run", parents=[common], help="simulate one (policy, n, seed) cell")
    runp.set_defaults(func=cmd_run)

    sweepp = sub.add_parser("sweep", parents=[common], help="simulate a policy/n/seed grid")
    sweepp.add_argument("--resume", action="store_true",
                        help="skip cells already present in --out")
    sweepp.set_defaults(func=cmd_sweep)

    boundp = sub.add_parser("bound", help="rate-function upper bound table")
    boundp.add_argument("--q", type=float, required=True)
    boundp.add_argument("--b", type=int, required=True)
    boundp.add_argument("--alpha", type=float, help="i.i.d. 0-L arrival probability")
    boundp.add_argument("--L", type=int, help="i.i.d. 0-L burst size")
    boundp.add_argument("--burst", type=int, help="Markov burst size")
    boundp.add_argument("--transition", type=str,
                        help="Markov rows 'p11,p12;p21,p22'")
    boundp.add_argument("--t-max", type=int, default=200)
    boundp.add_argument("--format", choices=("text", "csv"), default="text")
    boundp.set_defaults(func=cmd_bound)

    verifyp = sub.add_parser("verify", help="run property-verification suites")
    verifyp.add_argument("--suite", default="all",
                         choices=tuple(harness.VERIFY_SUITES) + ("all",))
    verifyp.add_argument("--seed", type=int, default=0)
    verifyp.set_defaults(func=cmd_verify)

    reportp = sub.add_parser("report", help="summarize a sweep CSV")
    reportp.add_argument("--in", dest="inp", required=True, help="sweep CSV path")
    reportp.add_argument("--plot-data", help="write per-(policy,b,n) plot CSV here")
    reportp.set_defaults(func=cmd_report)
    return p


def _config_from_args(args) -> harness.ExperimentConfig:
    cfg = harness.load_config(args.config) if args.config else harness.ExperimentConfig()
    overrides = {}
    if args.policy:
        overrides["policies"] = (args.policy,)
    if args.n is not None:
        overrides["n_grid"] = (args.n,)
    if args.slots is not None:
        overrides["horizon"] = args.slots
    if getattr(args, "paper_scale", False):
        overrides["horizon"] = 10_000_000
    if args.warmup is not None:
        overrides["warmup"] = args.warmup
    if args.seed is not None:
        overrides["seeds"] = (args.seed,)
    if args.b is not None:
        overrides["b_set"] = args.b
    if args.out is not None:
        overrides["out"] = args.out
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    return replace(cfg, **overrides)


def cmd_run(args) -> int:
    cfg = _config_from_args(args)
    if len(cfg.policies) != 1 or len(cfg.n_grid) != 1 or len(cfg.seeds) != 1:
        raise SystemExit2("run wants exactly one --policy, --n and --seed")
    rows = harness.run_sweep(replace(cfg, jobs=1))
    for r in rows:
        print(f"{r.policy} n={r.n} b={r.b} seed={r.seed} "
              f"P(W>b)={r.prob:.3e} ({r.violation_count}/{r.slot_samples}) "
              f"meanQ={r.mean_total_queue_length:.2f} status={r.status}")
    if args.out and args.format == "json":
        harness.emit_report(rows, "json", args.out)
    return EXIT_UNSTABLE if any(r.status == "unstable" for r in rows) else EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config_from_args(args)
    if cfg.out is None:
        raise SystemExit2("sweep requires --out (or sweep.out in the config)")
    done = {"cells": 0}

    def progress(cell_rows):
        done["cells"] += 1
        r = cell_rows[0]
        print(f"  cell {done['cells']}: {r.policy} n={r.n} seed={r.seed} "
              f"({r.wall_time_ms:.0f} ms)", flush=True)

    rows = harness.run_sweep(cfg, resume=args.resume, progress=progress)
    print(f"{len(rows)} rows -> {cfg.out}")
    if args.format == "json":
        harness.emit_report(rows, "json", cfg.out + ".json")
    return EXIT_UNSTABLE if any(r.status == "unstable" for r in rows) else EXIT_OK


def cmd_bound(args) -> int:
    if args.alpha is not None and args.L is not None:
        arrival = IidBernoulli0L(alpha=args.alpha, L=args.L)
    elif args.burst is not None and args.transition:
        rows = tuple(tuple(float(v) for v in row.split(","))
                     for row in args.transition.split(";"))
        arrival = TwoStateMarkov(rows, burst=args.burst)
    else:
        raise SystemExit2("bound needs --alpha/--L or --burst/--transition")
    inputs = analysis.BoundInputs(q=args.q, b=args.b, arrival=arrival, t_max=args.t_max)
    res = analysis.i_u(inputs)
    ix = analysis.i_x(args.q)
    lines = [("I_X", "", f"{ix:.6f}", "")]
    for br in res.branches:
        mark = "*" if br is res.argmin else ""
        lines.append((br.kind, "" if br.c is None else str(br.c),
                      "inf" if math.isinf(br.value) else f"{br.value:.6f}", mark))
    lines.append(("I_U", str(args.b),
                  "inf" if math.isinf(res.value) else f"{res.value:.6f}", ""))
    if args.format == "csv":
        print("term,c,value,argmin")
        for t, c, v, m in lines:
            print(f"{t},{c},{v},{m}")
    else:
        for t, c, v, m in lines:
            print(f"{t:>16} {c:>3} {v:>12} {m}")
    return EXIT_OK


def cmd_verify(args) -> int:
    suites = tuple(harness.VERIFY_SUITES) if args.suite == "all" else (args.suite,)
    ok = True
    for s in suites:
        rep = harness.run_verify(s, seed=args.seed)
        print(rep.summary())
        for f in rep.failures[:5]:
            print(f"    failure: {f}")
        ok = ok and rep.passed
    return EXIT_OK if ok else EXIT_VERIFY_FAILED


def cmd_report(args) -> int:
    rows = harness.parse_report(args.inp)
    print(f"{'policy':>8} {'b':>3} {'slope':>10} {'stderr':>10} {'pts':>4} {'drop':>4}")
    for s in harness.summarize(rows):
        slope = "n/a" if s["slope"] is None else f"{s['slope']:.5f}"
        err = "n/a" if s["stderr"] is None else \
            ("inf" if math.isinf(s["stderr"]) else f"{s['stderr']:.5f}")
        print(f"{s['policy']:>8} {s['b']:>3} {slope:>10} {err:>10} "
              f"{s['points']:>4} {s['dropped']:>4}")
    if args.plot_data:
        import csv as _csv
        agg: dict = {}
        for r in rows:
            key = (r.policy, r.b, r.n)
            cnt, tot = agg.get(key, (0, 0))
            agg[key] = (cnt + r.violation_count, tot + r.slot_samples)
        with open(args.plot_data, "w", encoding="utf-8", newline="") as fh:
            w = _csv.writer(fh)
            w.writerow(["policy", "b", "n", "prob"])
            for (policy, b, n), (cnt, tot) in sorted(agg.items()):
                w.writerow([policy, b, n, repr(cnt / tot if tot else float("nan"))])
        print(f"plot data -> {args.plot_data}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit2 as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
