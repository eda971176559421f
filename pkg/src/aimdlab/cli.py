"""``aimdlab`` command line: synchronous-model runs, dumbbell experiments, validation.

Exit codes: 0 success, 1 configuration error, 2 runtime or simulation error.
Data goes to files or stdout; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import os
import sys
from fractions import Fraction

from aimdlab import __version__
from aimdlab.config import FIELD_HELP, FIELD_NAMES, ScenarioConfig, format_value, load_config, parse_value
from aimdlab.congestion_policy import PolicyKind
from aimdlab.errors import AimdLabError, ConfigError
from aimdlab.experiments import (
    EXP1_TRANSFER_BYTES,
    emit_report,
    load_manifest,
    run_experiment,
    sync_validation_suite,
)
from aimdlab.sync_model import Arithmetic, SyncConfig, analyze, cycles_to_csv, run_sync

OUT_ENV = "AIMDLAB_OUT_DIR"

DEFAULT_FLOWS = {"exp1": "1,2,3,4,5", "exp2": "2,3,4,5", "exp3": "2,3,4,5"}
DEFAULT_POLICIES = {"exp1": "aimd,new-aimd", "exp2": "new-aimd", "exp3": "new-aimd"}


def _diag(message: str) -> None:
    print(f"aimdlab: {message}", file=sys.stderr)


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors (exit 1), not argparse's exit 2."""

    def error(self, message):
        raise ConfigError("", message)


def _keys_epilog() -> str:
    defaults = ScenarioConfig()
    width = max(len(k) for k in FIELD_NAMES)
    lines = ["scenario keys (config file, --set key=value, or --key value):"]
    for k in FIELD_NAMES:
        lines.append(f"  {k:<{width}}  default {format_value(getattr(defaults, k)):<12} {FIELD_HELP[k]}")
    lines.append(f"exp1 sets transfer_size = {EXP1_TRANSFER_BYTES} unless given.")
    lines.append(f"--out defaults to ${OUT_ENV}, else ./results.")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    epilog = _keys_epilog()
    parser = _Parser(
        prog="aimdlab",
        description="AIMD and New-AIMD congestion control experiments.",
        epilog=epilog,
        formatter_class=argparse.RawDescriptionHelpFormatter,
        allow_abbrev=False,
    )
    parser.add_argument("--version", action="version", version=f"aimdlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sync", help="run the synchronous binary-feedback model", allow_abbrev=False)
    p.add_argument("--W", required=True, help="capacity threshold (integer or fraction)")
    p.add_argument("--x", required=True, help="comma-separated initial windows")
    p.add_argument("--policy", default="new-aimd", help="aimd or new-aimd (default new-aimd)")
    p.add_argument("--arithmetic", default="integer", choices=[a.value for a in Arithmetic])
    p.add_argument("--cycles", type=int, default=10, help="number of cycles (default 10)")
    p.add_argument("--alpha", default="1", help="additive step per round (default 1)")

    for name, help_text in (
        ("exp1", "transfer-time sweep"),
        ("exp2", "queue length and queuing delay sweep"),
        ("exp3", "bottleneck utilization sweep"),
    ):
        p = sub.add_parser(
            name, help=help_text, epilog=epilog, formatter_class=argparse.RawDescriptionHelpFormatter, allow_abbrev=False
        )
        p.add_argument("--config", help="key = value scenario file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a scenario key")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="RNG seed")
        p.add_argument("--flows", help=f"comma-separated flow counts (default {DEFAULT_FLOWS[name]})")
        p.add_argument(
            "--policies", "--policy", dest="policies",
            help=f"comma-separated policies (default {DEFAULT_POLICIES[name]})",
        )
        p.add_argument("--manifest", help="repeat the run recorded in a manifest.txt")

    p = sub.add_parser("validate", help="randomized closed-form checks of the synchronous model", allow_abbrev=False)
    p.add_argument("--cases", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _field_overrides(extra: list[str]) -> dict:
    """Turn leftover ``--key value`` / ``--key=value`` arguments into overrides."""
    out = {}
    i = 0
    while i < len(extra):
        arg = extra[i]
        if not arg.startswith("--"):
            raise ConfigError("", f"unexpected argument: {arg}")
        name, eq, value = arg[2:].partition("=")
        key = name.replace("-", "_")
        if key not in FIELD_NAMES:
            raise ConfigError(key, f"unknown key: {name}")
        if not eq:
            if i + 1 >= len(extra):
                raise ConfigError(key, f"{key}: missing value")
            i += 1
            value = extra[i]
        out[key] = parse_value(key, value)
        i += 1
    return out


def _set_overrides(pairs: list[str]) -> dict:
    out = {}
    for pair in pairs:
        key, eq, value = pair.partition("=")
        key = key.strip()
        if not eq:
            raise ConfigError(key, f"--set expects key=value, got {pair!r}")
        out[key] = parse_value(key, value)
    return out


def _csv_list(text: str) -> list[str]:
    return [s.strip() for s in text.split(",") if s.strip()]


def _flows(text: str) -> list[int]:
    try:
        return [int(s) for s in _csv_list(text)]
    except ValueError:
        raise ConfigError("flows", f"flows: expected comma-separated integers, got {text!r}") from None


def _run_sync(args) -> int:
    try:
        W = Fraction(args.W)
        x = [Fraction(s) for s in _csv_list(args.x)]
        alpha = Fraction(args.alpha)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError("W", f"cannot parse number: {exc}") from None
    config = SyncConfig(W, tuple(x), PolicyKind.parse(args.policy), Arithmetic(args.arithmetic), args.cycles, alpha)
    records = run_sync(config)
    sys.stdout.write(cycles_to_csv(records, analyze(config, records)))
    return 0


def _run_experiment(args, extra: list[str]) -> int:
    if args.manifest:
        experiment, base, flows, policies = load_manifest(args.manifest)
        if experiment != args.command:
            raise ConfigError("experiment", f"manifest is for {experiment}, not {args.command}")
    else:
        values = _set_overrides(args.set)
        values.update(_field_overrides(extra))
        if args.seed is not None:
            values["seed"] = args.seed
        base = load_config(args.config, values) if args.config else ScenarioConfig(**values)
        if args.command == "exp1" and base.transfer_size is None:
            base = base.replace(transfer_size=EXP1_TRANSFER_BYTES)
        flows = _flows(args.flows or DEFAULT_FLOWS[args.command])
        policies = _csv_list(args.policies or DEFAULT_POLICIES[args.command])
    out_dir = args.out or os.environ.get(OUT_ENV) or "results"

    result = run_experiment(args.command, flows, policies, base)
    written = emit_report(result, out_dir)
    for row in result.rows:
        print(
            f"{row.policy.value}\tn={row.n_flows}\tcompletion_s={format_value(row.completion_time)}"
            f"\tavg_rho={format_value(row.avg_utilization)}"
        )
    for path in written:
        _diag(f"wrote {path}")
    return 0


def _run_validate(args) -> int:
    report = sync_validation_suite(args.cases, args.seed)
    print("\n".join(report.lines()))
    if not report.ok:
        _diag(f"validation failed: {report.first_counterexample}")
        return 2
    return 0


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
        if args.command not in DEFAULT_FLOWS and extra:
            raise ConfigError("", f"unknown key: {extra[0].lstrip('-').partition('=')[0]}")
        if args.command == "sync":
            return _run_sync(args)
        if args.command == "validate":
            return _run_validate(args)
        return _run_experiment(args, extra)
    except ConfigError as exc:
        _diag(str(exc))
        return 1
    except (AimdLabError, OSError) as exc:
        _diag(str(exc))
        return 2


def main() -> None:
    sys.exit(run())
