"""Command line: ``dscot run|report|verify|keygen``.

Exit status: 0 success, 1 usage/IO/parse error, 2 a verify check failed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .crypto import KeyPair
from .gas import DEFAULT_SCHEDULE, GasSchedule
from .report import build_report, load_trace, verify_trace
from .scenario import ScenarioError, load_fixture, parse, run

EXIT_OK, EXIT_USAGE, EXIT_CHECK = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits 2 by default; 2 is reserved for check failures
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_script(path: str) -> str:
    if path.startswith("fixture:"):
        return load_fixture(path.split(":", 1)[1])
    return Path(path).read_text(encoding="utf-8")


def cmd_run(args: argparse.Namespace) -> int:
    script = parse(_read_script(args.script))
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.validators is not None:
        overrides["validators"] = args.validators
    if overrides:
        script = dataclasses.replace(script, **overrides)
    schedule = GasSchedule.load(args.schedule) if args.schedule else DEFAULT_SCHEDULE
    trace = run(script, schedule)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "trace.json").write_text(trace.dumps(), encoding="utf-8")
    (out / "trace.csv").write_text(trace.to_csv(), encoding="utf-8")
    (out / "chain.jsonl").write_text(trace.chain, encoding="utf-8")

    if args.format == "json":
        print(json.dumps({"digest": trace.digest, "out": str(out), "steps": len(trace.steps)}, sort_keys=True))
    elif args.format == "csv":
        sys.stdout.write(trace.to_csv())
    else:
        for s in trace.steps:
            status = "ok" if s.ok else f"FAILED ({s.reason})"
            gas = f" gas={s.gas_used}" if s.tx_hash else (f" cost={s.execution_cost} fee=0" if s.operation else "")
            print(f"[{s.index:>3}] {s.text:<40} {status}{gas}")
        print(f"digest {trace.digest}")
        print(f"wrote {out / 'trace.json'}, {out / 'trace.csv'}, {out / 'chain.jsonl'}")
    return EXIT_OK


def _load_trace_arg(path: str | None):
    if path is None:
        return None
    return load_trace(Path(path).read_text(encoding="utf-8"))


def cmd_report(args: argparse.Namespace) -> int:
    report = build_report(_load_trace_arg(args.trace))
    if args.format == "json":
        print(json.dumps(report.to_json(), indent=1, sort_keys=True, ensure_ascii=False))
    elif args.format == "csv":
        sys.stdout.write(report.render_csv())
    else:
        sys.stdout.write(report.render_text())
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    checks = verify_trace(_load_trace_arg(args.trace))
    if args.format == "json":
        print(json.dumps([dataclasses.asdict(c) for c in checks], indent=1, ensure_ascii=False))
    else:
        for c in checks:
            print(c.line())
    return EXIT_CHECK if any(c.verdict == "fail" for c in checks) else EXIT_OK


def cmd_keygen(args: argparse.Namespace) -> int:
    key = KeyPair.from_seed(args.seed, args.name)
    if args.format == "json":
        print(json.dumps({"address": str(key.address), "name": args.name, "public_key": "0x" + key.public_key.hex()}))
    else:
        print(f"address    {key.address}")
        print(f"public_key 0x{key.public_key.hex()}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dscot", description="DSCoT registry and private-ledger simulator")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def fmt(p: argparse.ArgumentParser) -> None:
        p.add_argument("--format", choices=("text", "csv", "json"), default="text")

    p = sub.add_parser("run", help="run a scenario script and write trace files")
    p.add_argument("script", help="script path, or fixture:NAME for a shipped scenario")
    p.add_argument("--schedule", help="gas schedule file (key = value lines)")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--validators", type=int)
    fmt(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="gas comparison table")
    p.add_argument("trace", nargs="?", help="trace.json from 'run'; fixtures only when omitted")
    fmt(p)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("verify", help="acceptance checks over a trace")
    p.add_argument("trace")
    fmt(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("keygen", help="deterministic key for (seed, name)")
    p.add_argument("name")
    p.add_argument("--seed", type=int, default=0)
    fmt(p)
    p.set_defaults(func=cmd_keygen)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ScenarioError, ValueError) as exc:
        print(f"dscot {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
