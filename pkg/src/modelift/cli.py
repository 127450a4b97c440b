"""``modelift`` command line: transform, diff, attack, inspect.

Machine-readable results go to stdout as one JSON document per invocation;
progress and summaries go to stderr.  Exit codes: 0 success, 2 input error,
3 semantic failure (unresolved issues after transform).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

from .attacks import AttackConfig, fooling_rate
from .dataset import load_dataset
from .equivalence import compare_models
from .errors import ModeliftError
from .graph import load_mgf, save_mgf
from .issues import validate
from .passes import MatchConfig, transform
from .rules import load_rules

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_UNRESOLVED = 3

log = logging.getLogger("modelift")


@dataclass
class CliReport:
    command: str
    exit_code: int
    payload: Any = None
    error: str | None = None

    def to_json(self) -> dict:
        doc = {"command": self.command, "exit_code": self.exit_code, "payload": self.payload}
        if self.error is not None:
            doc["error"] = self.error
        return doc


def _dump(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2)


def cmd_transform(args) -> CliReport:
    graph = load_mgf(args.input)
    rules = load_rules(args.rules)
    cfg = MatchConfig(alpha=args.alpha, probe_count=args.probes, seed=args.seed)
    out_graph, report = transform(graph, cfg, rules)
    save_mgf(out_graph, args.output)
    payload = report.to_json()
    if args.report:
        Path(args.report).write_text(_dump(payload) + "\n", encoding="utf-8")
    resolved = len(report.issues) - len(report.unresolved)
    log.info("transform: %d issue(s), %d resolved, %d substitution(s); wrote %s",
             len(report.issues), resolved, len(report.substitutions), args.output)
    return CliReport("transform", EXIT_OK if report.success else EXIT_UNRESOLVED, payload)


def cmd_diff(args) -> CliReport:
    report = compare_models(load_mgf(args.a), load_mgf(args.b), n=args.probes, seed=args.seed)
    log.info("diff: mean %.6g, max %.6g over %d probes", report.mean_scaled, report.max_scaled, args.probes)
    return CliReport("diff", EXIT_OK, report.to_json())


def cmd_attack(args) -> CliReport:
    graph = load_mgf(args.model)
    data = load_dataset(args.data)
    cfg = AttackConfig(args.method, args.l2, args.steps, args.step_size, seed=args.seed)
    report = fooling_rate(graph, data, cfg, targeted=args.targeted)
    log.info("attack: %s l2=%g p = %d/%d = %.4f", cfg.method.value, cfg.l2_budget,
             report.n, report.m, report.fooling_rate)
    return CliReport("attack", EXIT_OK, report.to_json())


def cmd_inspect(args) -> CliReport:
    records = validate(load_mgf(args.model), load_rules(args.rules))
    log.info("inspect: %d issue(s)", len(records))
    return CliReport("inspect", EXIT_OK, [r.to_json() for r in records])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="modelift", description=__doc__.splitlines()[0])
    parser.add_argument("-q", "--quiet", action="store_true", help="no summary on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transform", help="convert an on-device graph into a debuggable one")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--alpha", type=float, default=0.1, help="auto-match l2 threshold")
    p.add_argument("--probes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rules", help="rule table file or directory (default: $MODELIFT_RULES or built-in)")
    p.add_argument("--report", help="also write the transform report JSON here")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("diff", help="scaled output differences between two graphs")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--probes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("attack", help="white-box l2 attack and fooling rate")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("--method", choices=["bim", "pgd"], default="pgd")
    p.add_argument("--l2", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=400)
    p.add_argument("--step-size", type=float, default=None)
    p.add_argument("--targeted", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("inspect", help="list the issues blocking gradient access")
    p.add_argument("model")
    p.add_argument("--rules")
    p.set_defaults(func=cmd_inspect)
    return parser


def run(argv: Sequence[str] | None = None) -> CliReport:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(name)s: %(message)s", stream=sys.stderr, force=True)
    try:
        return args.func(args)
    except (ModeliftError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return CliReport(args.command, EXIT_INPUT, None, str(exc))


def main(argv: Sequence[str] | None = None) -> int:
    report = run(argv)
    sys.stdout.write(_dump(report.to_json()) + "\n")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
