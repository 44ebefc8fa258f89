"""Command-line front end.

    protocheck --protocol nspk --engine search
    protocheck --protocol nsl --engine all --idealization nspk-sym --format json

Bare protocol names resolve to the bundled fixtures (nspk, nsl); anything
containing a path separator or an existing file is read as a path. The same
goes for --idealization (bundled: nspk-sym).

Exit codes: 0 no violation found, 10 attack found or guarantee refuted or a
belief goal rests on an unjustified assumption, 2 input error, 3 state
budget exceeded.
"""

from __future__ import annotations

import argparse
import os
import sys
from importlib.resources import files

from . import __version__, ban, report as rpt
from .checker import (
    AttackReport,
    Bounds,
    BoundsError,
    BudgetExceededError,
    honest_trace,
    search,
)
from .dsl import DslParseError, ProtocolError, parse_file
from .strands import GuaranteeFails, lift, responder_guarantee
from .terms import TermError

_ENGINES = ("search", "ban", "strand", "all")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="protocheck",
        description="Check authentication protocols: attack search, belief derivation, "
        "and causal-bundle guarantees.",
        epilog="The environment variable PROTOCHECK_SEED is reserved for future "
        "randomized search strategies; the current search is deterministic and ignores it.",
    )
    parser.add_argument("--protocol", required=True,
                        help="protocol file, or a bundled name (nspk, nsl)")
    parser.add_argument("--engine", choices=_ENGINES, default="search",
                        help="which analysis to run (default: search)")
    parser.add_argument("--sessions", default=None, metavar="ROLE=N,...",
                        help="session counts per role, overriding the protocol's #System")
    parser.add_argument("--max-depth", type=int, default=12, metavar="N",
                        help="longest trace considered (default: 12)")
    parser.add_argument("--state-budget", type=int, default=1_000_000, metavar="N",
                        help="abort after exploring this many states (default: 1000000)")
    parser.add_argument("--format", choices=("text", "json"), default="text",
                        help="report format (default: text)")
    parser.add_argument("--idealization", default=None, metavar="FILE",
                        help="idealized belief-formula file, or a bundled name (nspk-sym); "
                        "required by the ban engine")
    parser.add_argument("--figures", default=None, metavar="DIR",
                        help="also render matplotlib figures into this directory")
    parser.add_argument("--workers", type=int, default=1, metavar="N",
                        help="worker threads for frontier expansion (default: 1)")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return parser


def _resolve(name: str, suffix: str) -> str:
    if os.path.sep in name or os.path.exists(name):
        return name
    bundled = files("protocheck") / "fixtures" / f"{name}{suffix}"
    if bundled.is_file():
        return str(bundled)
    raise FileNotFoundError(f"no such file and no bundled fixture named {name!r}")


def _parse_sessions(text: str) -> dict:
    counts: dict = {}
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        role, sep, num = chunk.partition("=")
        if not sep or not num.strip().isdigit():
            raise ValueError(f"--sessions entries look like ROLE=N, got {chunk!r}")
        counts[role.strip()] = int(num.strip())
    if not counts:
        raise ValueError("--sessions given but empty")
    return counts


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    def fail(message: str) -> int:
        print(f"protocheck: error: {message}", file=sys.stderr)
        return 2

    engines = ["search", "strand", "ban"] if args.engine == "all" else [args.engine]
    if args.workers < 1:
        return fail("--workers must be at least 1")

    try:
        protocol_path = _resolve(args.protocol, ".proto.casper")
        spec = parse_file(protocol_path)
    except (OSError, TermError, ProtocolError, DslParseError) as exc:
        return fail(str(exc))

    belief_spec = None
    if "ban" in engines:
        if not args.idealization:
            return fail("the ban engine requires --idealization")
        try:
            ideal_path = _resolve(args.idealization, ".ban")
            belief_spec = ban.parse_belief_path(ideal_path)
        except (OSError, ban.BanError) as exc:
            return fail(str(exc))

    try:
        sessions = _parse_sessions(args.sessions) if args.sessions else None
    except ValueError as exc:
        return fail(str(exc))
    bounds = Bounds(sessions=sessions, max_depth=args.max_depth, state_budget=args.state_budget)

    results: dict = {}
    exit_code = 0
    attack_trace = None
    search_stats = None
    goal_report = None

    if "search" in engines or "strand" in engines:
        try:
            outcome = search(spec, bounds, workers=args.workers)
        except BoundsError as exc:
            return fail(str(exc))
        except BudgetExceededError as exc:
            if "search" in engines:
                results["search"] = rpt.search_payload(exc)
            payload = rpt.build_report(args.protocol, results, 3)
            _emit(payload, args)
            return 3
        if isinstance(outcome, AttackReport):
            attack_trace = outcome.trace
            exit_code = 10
        search_stats = outcome.stats
        if "search" in engines:
            results["search"] = rpt.search_payload(outcome)

    if "strand" in engines:
        try:
            if attack_trace is not None:
                trace, origin, lift_bounds = attack_trace, "attack", bounds
            else:
                trace, origin = honest_trace(spec), "honest"
                lift_bounds = Bounds(
                    sessions={r: 1 for r in spec.roles},
                    max_depth=bounds.max_depth,
                    state_budget=bounds.state_budget,
                )
            bundle = lift(spec, trace, lift_bounds)
            verdict = responder_guarantee(bundle, spec)
        except (ValueError, ProtocolError) as exc:
            return fail(f"strand engine: {exc}")
        if isinstance(verdict, GuaranteeFails):
            exit_code = 10
        results["strand"] = rpt.strand_payload(bundle, verdict, origin)

    if "ban" in engines:
        saturation = ban.saturate_spec(belief_spec)
        goal_report = ban.audit_goals(belief_spec, saturation)
        if goal_report.any_flagged or not goal_report.all_derivable:
            exit_code = 10
        results["ban"] = rpt.ban_payload(goal_report)

    payload = rpt.build_report(args.protocol, results, exit_code)
    _emit(payload, args)

    if args.figures:
        written = []
        try:
            from .figures import render_figures

            written = render_figures(
                args.figures,
                trace=attack_trace,
                stats=search_stats,
                goal_report=goal_report,
                title=args.protocol,
            )
        except OSError as exc:
            print(f"protocheck: figures: {exc}", file=sys.stderr)
        for path in written:
            print(f"protocheck: wrote {path}", file=sys.stderr)

    return exit_code


def _emit(payload: dict, args) -> None:
    text = rpt.to_json(payload) if args.format == "json" else rpt.to_text(payload)
    sys.stdout.write(text)


if __name__ == "__main__":
    sys.exit(main())
