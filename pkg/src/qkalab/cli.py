"""
``qka-sim``: run, attack, sweep and analyze from the command line.

Every verb builds a :class:`~qkalab.analysis.ScenarioConfig`, first from an
optional ``--config`` JSON file and then from flags, which win. The seed comes
from ``--seed``, then the config file, then ``$QKA_SIM_SEED``, then 0.

Exit status: 0 on success, 2 when a single run aborts, 64 on bad usage.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import warnings
from pathlib import Path

from .analysis import (
    ConfigError,
    LeakageWarning,
    ScenarioConfig,
    analytic_table,
    run_monte_carlo,
    run_sweep,
    stats_to_csv,
    trial_stream,
)
from .fair import fair_run
from .huang import Variant, huang_run
from .keys import bits_to_hex
from .phases import Completed, Party, outcome_to_dict

EXIT_OK = 0
EXIT_ABORT = 2
EXIT_USAGE = 64

SEED_ENV = "QKA_SIM_SEED"
INT_PARAMS = {"n", "m", "l"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_scenario_flags(p: argparse.ArgumentParser, adversary: bool = True) -> None:
    p.add_argument("--config", type=Path, help="JSON file mirroring ScenarioConfig")
    p.add_argument("--protocol", help="fair, huang or huang-star3")
    p.add_argument("--n", type=int, help="key length in bits")
    p.add_argument("--m", type=int, help="hash length in bits (fair protocol)")
    p.add_argument("--l", type=int, help="decoys per sequence (default n)")
    p.add_argument("--threshold", type=float, help="tolerated decoy error rate")
    p.add_argument("--ratio", type=float, help="privacy amplification ratio r/n")
    p.add_argument("--hash", dest="hash_name", choices=["sha256", "toy"])
    p.add_argument("--seed", type=int, help=f"master seed (fallback ${SEED_ENV}, then 0)")
    p.add_argument("--out", choices=["json", "csv", "pretty"], default="pretty")
    if adversary:
        p.add_argument("--adversary", help="adversary kind, or a JSON AdversaryConfig object")
        p.add_argument("--trials", type=int)
        p.add_argument("--workers", type=int, default=1, help="worker processes for trials")
        p.add_argument("--name", help="scenario label in the output")
        p.add_argument("--timing", action="store_true",
                       help="fill duration_ms (otherwise blank so output is reproducible)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qka-sim", description="Quantum key agreement simulator")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="one honest protocol execution")
    _add_scenario_flags(run, adversary=False)
    run.add_argument("--transcript", type=Path,
                     help="where to write the line-JSON transcript")

    attack = sub.add_parser("attack", help="Monte-Carlo statistics for an adversary")
    _add_scenario_flags(attack)

    sweep = sub.add_parser("sweep", help="attack statistics across one parameter")
    _add_scenario_flags(sweep)
    sweep.add_argument("--param", default="l", choices=["l", "n", "m", "threshold", "ratio"])
    sweep.add_argument("--values", required=True,
                       help="comma list, integer ranges allowed, e.g. 1-16 or 1,2,4,8")

    analyze = sub.add_parser("analyze", help="closed-form detection and leakage figures")
    analyze.add_argument("--l-values", default="1,2,4,8,10,16")
    analyze.add_argument("--ratios", default="0.8,0.9,1.0")
    analyze.add_argument("--out", choices=["json", "csv", "pretty"], default="pretty")
    return parser


def parse_values(text: str, integer: bool) -> list:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if integer and "-" in part[1:]:
                lo, hi = part.split("-", 1)
                lo, hi = int(lo), int(hi)
                if hi < lo:
                    raise UsageError(f"empty range {part!r}")
                out.extend(range(lo, hi + 1))
            else:
                out.append(int(part) if integer else float(part))
        except ValueError:
            raise UsageError(f"bad value {part!r}") from None
    if not out:
        raise UsageError("no values given")
    return out


def _seed(args, file_seed) -> int:
    if args.seed is not None:
        return args.seed
    if file_seed is not None:
        return file_seed
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"${SEED_ENV} is not an integer: {env!r}") from None
    return 0


def load_config(args) -> ScenarioConfig:
    data: dict = {}
    if args.config is not None:
        try:
            data = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise UsageError("config file must hold a JSON object")
    file_seed = data.pop("master_seed", None)
    for key in ("protocol", "n", "m", "l", "threshold", "ratio", "hash_name",
                "trials", "name"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    adversary = getattr(args, "adversary", None)
    if adversary is not None:
        text = adversary.strip()
        data["adversary"] = json.loads(text) if text.startswith("{") else text
    data["master_seed"] = _seed(args, file_seed)
    config = ScenarioConfig.from_dict(data)
    return config


def _emit_rows(rows: list[dict], out) -> None:
    writer = csv.DictWriter(out, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)


# --- verbs ---------------------------------------------------------------------------


def cmd_run(args, out) -> int:
    config = load_config(args)
    if config.adversary is not None:
        raise UsageError("run executes the honest protocol; use 'attack' for adversaries")
    config.validate()
    rng = trial_stream(config.master_seed, 0)
    if config.protocol == "fair":
        result = fair_run(config.n, config.m, config.decoys, config.threshold, config.ratio,
                          rng, hash_name=config.hash_name)
    else:
        variant = Variant.STAR3 if config.protocol == "huang-star3" else Variant.ORIGINAL
        result = huang_run(config.n, variant, rng=rng, l=config.decoys,
                           threshold=config.threshold)
    path = args.transcript or Path(f"qka-{config.protocol}-seed{config.master_seed}.jsonl")
    result.transcript.write(path)

    outcome = result.outcome
    done = isinstance(outcome, Completed)
    keys = {p.value: bits_to_hex(outcome.keys[p]) for p in (Party.ALICE, Party.BOB)} if done else {}
    summary = outcome_to_dict(outcome)
    summary.pop("keys", None)
    if done:
        summary["keys"] = keys
        summary["key_bits"] = len(outcome.keys[Party.ALICE])
        summary["agreed"] = outcome.agreed
    summary.update(protocol=config.protocol, seed=config.master_seed, transcript=str(path))

    if args.out == "json":
        print(json.dumps(summary, indent=2, sort_keys=True), file=out)
    elif args.out == "csv":
        rows = [{"party": p, "key_hex": k, "status": summary["status"]} for p, k in keys.items()]
        _emit_rows(rows or [{"party": "", "key_hex": "", "status": summary["status"]}], out)
    else:
        print(f"protocol   {config.protocol}  (seed {config.master_seed})", file=out)
        print(f"status     {summary['status']}", file=out)
        if done:
            print(f"alice key  {keys['alice']}", file=out)
            print(f"bob key    {keys['bob']}", file=out)
            print(f"key bits   {summary['key_bits']}  agreed={summary['agreed']}", file=out)
        else:
            print(f"aborted    {summary['phase']} / {summary['reason']}"
                  f"  reported_by={summary['reported_by']} accused={summary['accused']}", file=out)
        print(f"transcript {path}", file=out)
    return EXIT_OK if done else EXIT_ABORT


def _print_stats_pretty(stats, out) -> None:
    for key, value in stats.to_dict(timing=True).items():
        if value is None:
            continue
        if isinstance(value, float):
            value = f"{value:.6g}"
        print(f"{key:26s} {value}", file=out)


def cmd_attack(args, out) -> int:
    config = load_config(args)
    if config.adversary is None:
        raise UsageError("attack needs --adversary or an adversary in the config file")
    stats = run_monte_carlo(config, args.workers)
    if args.out == "json":
        print(stats.to_json(args.timing), file=out)
    elif args.out == "csv":
        out.write(stats.to_csv(args.timing))
    else:
        _print_stats_pretty(stats, out)
    return EXIT_OK


def cmd_sweep(args, out) -> int:
    config = load_config(args)
    values = parse_values(args.values, args.param in INT_PARAMS)
    results = run_sweep(config, args.param, values, args.workers)
    if args.out == "json":
        print(json.dumps([s.to_dict(args.timing) for s in results], indent=2, sort_keys=True),
              file=out)
    elif args.out == "csv":
        out.write(stats_to_csv(results, args.timing))
    else:
        print(f"{args.param:>10s} {'pass_rate':>10s} {'stderr':>9s} {'analytic':>9s}", file=out)
        for v, s in zip(values, results):
            analytic = "" if s.analytic_pass is None else f"{s.analytic_pass:.4f}"
            print(f"{v:>10} {s.pass_rate:>10.4f} {s.stderr:>9.4f} {analytic:>9s}", file=out)
    return EXIT_OK


def cmd_analyze(args, out) -> int:
    table = analytic_table(parse_values(args.l_values, True), parse_values(args.ratios, False))
    if args.out == "json":
        print(json.dumps(table, indent=2), file=out)
    elif args.out == "csv":
        rows = [{"quantity": "pass_probability", "param": row["l"], "value": f"{row['pass']:.4f}",
                 "status": ""} for row in table["pass_probability"]]
        rows.append({"quantity": "information_per_qubit", "param": "",
                     "value": f"{table['information_per_qubit']:.4f}", "status": ""})
        rows += [{"quantity": "leakage_margin", "param": row["ratio"],
                  "value": f"{row['discarded']:.4f}", "status": row["status"]}
                 for row in table["leakage_margin"]]
        _emit_rows(rows, out)
    else:
        print("decoy check pass probability under intercept-resend, (3/4)^l", file=out)
        print(f"{'l':>4s}  {'pass':>8s}", file=out)
        for row in table["pass_probability"]:
            print(f"{row['l']:>4d}  {row['pass']:>8.4f}", file=out)
        print(file=out)
        print(f"eavesdropper information per qubit  {table['information_per_qubit']:.4f} bit"
              f"  (1 - H(3/4), H(3/4) = {table['binary_entropy_3_4']:.4f})", file=out)
        print(file=out)
        print(f"{'ratio':>6s}  {'discarded':>9s}  status", file=out)
        for row in table["leakage_margin"]:
            print(f"{row['ratio']:>6.2f}  {row['discarded']:>9.4f}  {row['status']}", file=out)
    return EXIT_OK


VERBS = {"run": cmd_run, "attack": cmd_attack, "sweep": cmd_sweep, "analyze": cmd_analyze}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always", LeakageWarning)
            return VERBS[args.verb](args, out)
    except (UsageError, ConfigError, json.JSONDecodeError) as exc:
        print(f"qka-sim {args.verb}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def run_cli(argv=None) -> tuple[int, str]:
    """Capture stdout of :func:`main`; returns ``(status, text)``."""
    buf = io.StringIO()
    status = main(argv, buf)
    return status, buf.getvalue()


if __name__ == "__main__":
    sys.exit(main())
