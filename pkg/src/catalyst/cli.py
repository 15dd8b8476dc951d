"""Command-line frontend: ``catalyst {sequence,analyze,simulate,run}``.

Exit status: 0 when at least one trial succeeded, 2 when every trial failed,
1 on usage or configuration errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import executor, profile, sim, stats, ttl
from .sim import KINDS, StrategySpec

EXIT_OK, EXIT_USAGE, EXIT_ALL_FAILED = 0, 1, 2
CENSOR_WARN_FRACTION = 0.2

log = logging.getLogger("catalyst")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _strategy(args) -> StrategySpec:
    kind = args.strategy
    workers = 1 if kind == "single" else (args.workers or executor.default_workers())
    capacity = args.capacity
    if kind == "counter-cache" and capacity is None:
        capacity = os.cpu_count() or 1
    try:
        return StrategySpec(kind, workers=workers, delta=args.ttl, slot_policy=args.slot_policy, capacity=capacity)
    except sim.StrategyError as exc:
        raise UsageError(str(exc)) from None


def cmd_sequence(strategy: str, n: int, ttl_value: int | None = None, seed: int = 0) -> str:
    """``n`` TTLs of ``strategy``, one per line."""
    if n < 1:
        raise UsageError("-n must be >= 1")
    if strategy in ("counter", "counter-cache"):
        values = ttl.luby_prefix(n).tolist()
    elif strategy == "fixed":
        if ttl_value is None:
            raise UsageError("fixed needs --ttl")
        values = [ttl.fixed_next(ttl_value)] * n
    elif strategy == "zeta2":
        values = ttl.sample_zeta2_many(ttl.RngStream(seed), n).tolist()
    elif strategy == "bin":
        values = ttl.sample_bin_many(ttl.RngStream(seed), n).tolist()
    elif strategy in KINDS:
        raise UsageError(f"{strategy} has no TTL sequence")
    else:
        raise UsageError(f"unknown strategy {strategy!r}")
    return "".join(f"{v}\n" for v in values)


def analysis_rows(dist: profile.RuntimeDistribution) -> list[tuple[int, float, float]]:
    return [(t, profile.expected_ttl_runtime(dist, t), profile.proxy_runtime(dist, t)) for t in dist.ticks]


def cmd_analyze(samples_path, out_dir=None) -> str:
    try:
        samples = profile.read_samples(samples_path)
    except OSError as exc:
        raise UsageError(f"cannot read {samples_path}: {exc}") from None
    except profile.DistributionError as exc:
        raise UsageError(str(exc)) from None
    try:
        dist = profile.empirical_distribution(samples)
    except profile.DistributionError as exc:
        raise UsageError(str(exc)) from None
    prof = profile.compute_profile(dist)
    lines = [
        f"samples: {samples.n} ({len(samples.successes)} successes, {samples.n_censored} censored)",
        f"profile: inv_p={prof.inv_p:.6g} t_star={prof.t_star}",
        f"work: {prof.work:.6g}",
        f"optimal threshold: {prof.opt_threshold}",
        f"expected runtime at optimum: {prof.opt_expected:.6g}",
    ]
    if samples.censored_fraction > CENSOR_WARN_FRACTION:
        lines.append(
            f"warning: {samples.censored_fraction:.0%} of runs are censored; they are treated as "
            "never terminating, which overstates the tail"
        )
    table = ["t,f_t,R_t"] + [f"{t},{f:.6f},{r:.6f}" for t, f, r in analysis_rows(dist)]
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "analysis.csv").write_text("\n".join(table) + "\n", encoding="utf-8")
    return "\n".join(lines + [""] + table) + "\n"


def cmd_simulate(dist_path, spec: StrategySpec, trials: int, seed: int, cap: int, out_dir=None):
    """Returns ``(report_csv_text, report)``."""
    try:
        dist = profile.RuntimeDistribution.load(dist_path)
    except OSError as exc:
        raise UsageError(f"cannot read {dist_path}: {exc}") from None
    except profile.DistributionError as exc:
        raise UsageError(f"invalid distribution: {exc}") from None
    if trials < 1 or cap < 1:
        raise UsageError("--trials and --cap must be >= 1")
    batch = sim.simulate_batch(dist, spec, cap=cap, trials=trials, seed=seed)
    report = stats.summarize_batch(spec.label, batch)
    text = stats.reports_csv([report])
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(text, encoding="utf-8")
        with open(out / "trials.jsonl", "w", encoding="utf-8") as fh:
            for o in batch.outcomes():
                fh.write(json.dumps({
                    "strategy": spec.label,
                    "seed": o.seed,
                    "outcome": ({"kind": "success", "time_to_success": o.time_to_success} if o.success
                                else {"kind": "failure", "cap": cap}),
                    "total_work": o.total_work,
                    "attempts": o.attempts,
                }) + "\n")
    return text, report


def cmd_run(command, spec: StrategySpec, trials: int, cap: int, seed: int, tick: float = 1.0,
            out_dir=None, success_mode=executor.SENTINEL, keep_failed=False, concurrent_trials=1):
    """Returns ``(report_csv_text, report, records)``."""
    if not command:
        raise UsageError("no command given (put it after --)")
    if trials < 1 or cap < 1 or tick <= 0:
        raise UsageError("--trials, --cap and --tick must be positive")
    out = Path(out_dir) if out_dir is not None else None
    log_path = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        log_path = out / "trials.jsonl"
        log_path.write_text("", encoding="utf-8")
    try:
        records = executor.run_experiment(
            command, spec, workers=spec.workers, cap_ticks=cap, trials=trials, seed=seed, tick=tick,
            workdir_root=(out / "work") if out is not None and keep_failed else None,
            keep_failed=keep_failed, success_mode=success_mode, concurrent_trials=concurrent_trials,
            log_path=log_path,
        )
    except executor.ExecutorError as exc:
        raise UsageError(str(exc)) from None
    report = stats.summarize(spec.label, records)
    text = stats.reports_csv([report])
    if out is not None:
        (out / "report.csv").write_text(text, encoding="utf-8")
    return text, report, records


def _add_strategy_flags(p, default="counter"):
    p.add_argument("--strategy", default=default, choices=KINDS)
    p.add_argument("--ttl", type=int, default=None, help="threshold for the fixed strategy")
    p.add_argument("--workers", type=int, default=None, help="default: 3/4 of hardware threads")
    p.add_argument("--capacity", type=int, default=None, help="counter-cache size (default: hardware threads)")
    p.add_argument("--slot-policy", default="doubling", choices=sim.SLOT_POLICIES)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cap", type=int, default=sim.DEFAULT_CAP, help="per-trial cap in ticks")
    p.add_argument("--out", default=None, help="directory for report.csv and trials.jsonl")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="catalyst", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = sub.add_parser("sequence", help="print TTLs of a strategy")
    p.add_argument("--strategy", required=True)
    p.add_argument("-n", type=int, default=16)
    p.add_argument("--ttl", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("analyze", help="profile and optimal threshold from runtime samples")
    p.add_argument("samples", help="CSV with header runtime_ticks,censored")
    p.add_argument("--out", default=None)

    p = sub.add_parser("simulate", help="simulate a strategy on a runtime law")
    p.add_argument("dist", help="law file: '<tick> <probability>' lines, optional 'inf <p>'")
    _add_strategy_flags(p)

    p = sub.add_parser("run", help="supervise a real command")
    _add_strategy_flags(p)
    p.add_argument("--tick", type=float, default=1.0, help="seconds per tick")
    p.add_argument("--success-mode", default=executor.SENTINEL, choices=(executor.SENTINEL, executor.EXIT_CODE))
    p.add_argument("--keep-failed", action="store_true", help="keep work dirs of failed trials under --out")
    p.add_argument("--concurrent-trials", type=int, default=1)
    p.add_argument("command", nargs=argparse.REMAINDER)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.subcommand == "sequence":
            sys.stdout.write(cmd_sequence(args.strategy, args.n, args.ttl, args.seed))
            return EXIT_OK
        if args.subcommand == "analyze":
            sys.stdout.write(cmd_analyze(args.samples, args.out))
            return EXIT_OK
        spec = _strategy(args)
        if args.subcommand == "simulate":
            text, report = cmd_simulate(args.dist, spec, args.trials, args.seed, args.cap, args.out)
        else:
            command = args.command[1:] if args.command[:1] == ["--"] else args.command
            text, report, _ = cmd_run(command, spec, args.trials, args.cap, args.seed, args.tick, args.out,
                                      args.success_mode, args.keep_failed, args.concurrent_trials)
        sys.stdout.write(text)
        return EXIT_OK if report.successes > 0 else EXIT_ALL_FAILED
    except UsageError as exc:
        print(f"catalyst: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
