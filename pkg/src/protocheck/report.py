"""Run reports: one payload, two renderings.

Everything a run produced is collected into a plain dict (`build_report`),
then rendered either as JSON or as text. Both renderings draw on the same
dict, so they can never disagree on facts. Wall-clock durations are kept out
of the payload on purpose: reports for the same inputs are byte-identical
across runs and worker counts, which makes them diffable and cacheable.

Trace lines use attack notation: `2.1) I(A) -> B : {na_0, A}{PK(B)}` reads
"in session 2's step 1, the intruder I, posing as A, delivered this message
to B". Honest transmissions show the bare sender. The label left of the
parenthesis is session.step.
"""

from __future__ import annotations

import json
import re
from typing import Optional, Sequence

from .ban import GoalReport, render_formula
from .checker import AttackReport, BudgetExceededError, Event, Exhausted, SearchStats
from .strands import (
    Bundle,
    GuaranteeFails,
    GuaranteeHolds,
    HypothesesNotMet,
    export_bundle,
)
from .terms import format_term

SCHEMA_FILENAME = "report-schema.json"


def render_event_line(e: Event) -> str:
    if e.kind == "deliver" and e.apparent != e.actor:
        shown = f"{e.actor}({e.apparent})"
    else:
        shown = e.actor
    return f"{e.label}) {shown} -> {e.receiver} : {format_term(e.message)}"


def render_trace(trace: Sequence[Event]) -> str:
    return "\n".join(render_event_line(e) for e in trace)


_TRACE_LINE = re.compile(
    r"^\s*(?P<label>\d+\.\d+)\)\s+(?P<actor>\w+)(?:\((?P<apparent>\w+)\))?"
    r"\s*->\s*(?P<receiver>\w+)\s*:\s*(?P<message>.+?)\s*$"
)


def parse_trace_text(text: str) -> list:
    """Inverse of render_trace, up to the send/deliver distinction."""
    out = []
    for raw in text.splitlines():
        if not raw.strip():
            continue
        m = _TRACE_LINE.match(raw)
        if not m:
            raise ValueError(f"unparseable trace line: {raw!r}")
        out.append({
            "label": m.group("label"),
            "actor": m.group("actor"),
            "as": m.group("apparent") or m.group("actor"),
            "to": m.group("receiver"),
            "message": m.group("message"),
        })
    return out


def describe_event(e: Event) -> dict:
    return {
        "label": e.label,
        "kind": e.kind,
        "session": e.sid + 1,
        "step": e.step_index,
        "actor": e.actor,
        "as": e.apparent,
        "to": e.receiver,
        "message": format_term(e.message),
    }


def _stats_payload(stats: SearchStats) -> dict:
    return {
        "states_explored": stats.states_explored,
        "depth_reached": stats.depth_reached,
        "peak_frontier": stats.peak_frontier,
        "levels": [
            {"depth": lv.depth, "new_states": lv.new_states, "frontier": lv.frontier}
            for lv in stats.levels
        ],
    }


def search_payload(outcome) -> dict:
    if isinstance(outcome, AttackReport):
        return {
            "verdict": "attack",
            "goal": str(outcome.goal),
            "violated_goals": [str(g) for g in outcome.violated_goals],
            "trace": [describe_event(e) for e in outcome.trace],
            "bindings": [
                {
                    "session": sid + 1,
                    "role": role,
                    "agent": agent,
                    "values": {k: v for k, v in bindings},
                }
                for sid, role, agent, bindings in outcome.session_bindings
            ],
            "stats": _stats_payload(outcome.stats),
        }
    if isinstance(outcome, Exhausted):
        return {
            "verdict": "no_attack_within_bounds",
            "goal": None,
            "violated_goals": [],
            "trace": [],
            "bindings": [],
            "stats": _stats_payload(outcome.stats),
        }
    if isinstance(outcome, BudgetExceededError):
        return {
            "verdict": "budget_exceeded",
            "goal": None,
            "violated_goals": [],
            "trace": [],
            "bindings": [],
            "stats": {
                "states_explored": outcome.states_explored,
                "depth_reached": 0,
                "peak_frontier": 0,
                "levels": [],
            },
        }
    raise TypeError(f"not a search outcome: {outcome!r}")


def strand_payload(bundle: Bundle, verdict, trace_origin: str) -> dict:
    regular = sum(1 for s in bundle.strands if s.is_regular)
    if isinstance(verdict, GuaranteeHolds):
        kind = "holds"
        witnesses = [bundle.strands[verdict.initiator - 1].label()]
        detail = f"initiator strand {verdict.initiator} agrees on every shared value"
    elif isinstance(verdict, GuaranteeFails):
        kind = "fails"
        witnesses = [bundle.strands[i - 1].label() for i in verdict.witnesses]
        detail = "no initiator strand agrees with the responder on all values"
    elif isinstance(verdict, HypothesesNotMet):
        kind = "hypotheses_not_met"
        witnesses = []
        detail = "; ".join(verdict.reasons)
    else:
        raise TypeError(f"not a guarantee verdict: {verdict!r}")
    return {
        "verdict": kind,
        "detail": detail,
        "witnesses": witnesses,
        "trace_origin": trace_origin,
        "regular_strands": regular,
        "penetrator_strands": len(bundle.strands) - regular,
        "edges": len(bundle.comm_edges),
        "bundle": export_bundle(bundle),
    }


def ban_payload(report: GoalReport) -> dict:
    return {
        "unjustified": list(report.unjustified),
        "all_derivable": report.all_derivable,
        "any_flagged": report.any_flagged,
        "goals": [
            {
                "formula": render_formula(s.goal),
                "derivable": s.derivable,
                "verdict": s.verdict(),
                "assumptions": list(s.assumptions),
                "flagged": s.flagged,
                "citing": list(s.citing),
                "derivation": s.derivation.render() if s.derivation else None,
            }
            for s in report.statuses
        ],
    }


def build_report(protocol: str, results: dict, exit_code: int) -> dict:
    return {
        "protocol": protocol,
        "engines": sorted(results),
        "results": results,
        "exit_code": exit_code,
    }


def to_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def to_text(report: dict) -> str:
    lines = [f"protocol: {report['protocol']}"]
    results = report["results"]

    if "search" in results:
        r = results["search"]
        lines.append("")
        lines.append(f"search: {r['verdict'].replace('_', ' ')}")
        if r["verdict"] == "attack":
            lines.append(f"  violated: {', '.join(r['violated_goals'])}")
            lines.append("  trace:")
            for step in r["trace"]:
                shown = step["actor"] if step["as"] == step["actor"] else f"{step['actor']}({step['as']})"
                lines.append(f"    {step['label']}) {shown} -> {step['to']} : {step['message']}")
            lines.append("  sessions:")
            for b in r["bindings"]:
                values = ", ".join(f"{k}={v}" for k, v in sorted(b["values"].items()))
                lines.append(f"    {b['session']}: {b['role']} run by {b['agent']} with {values}")
        stats = r["stats"]
        lines.append(
            f"  states explored: {stats['states_explored']}, depth reached: "
            f"{stats['depth_reached']}, peak frontier: {stats['peak_frontier']}"
        )

    if "strand" in results:
        r = results["strand"]
        lines.append("")
        lines.append(f"strand: responder guarantee {r['verdict'].replace('_', ' ')}")
        lines.append(f"  {r['detail']}")
        for w in r["witnesses"]:
            lines.append(f"  witness: {w}")
        lines.append(
            f"  bundle from {r['trace_origin']} trace: {r['regular_strands']} regular + "
            f"{r['penetrator_strands']} penetrator strands, {r['edges']} edges"
        )
        for line in r["bundle"].rstrip("\n").splitlines():
            lines.append(f"  | {line}")

    if "ban" in results:
        r = results["ban"]
        lines.append("")
        unjustified = ", ".join(str(u) for u in r["unjustified"]) or "none"
        lines.append(f"belief analysis (unjustified assumptions: {unjustified})")
        for g in r["goals"]:
            lines.append(f"  goal {g['formula']}: {g['verdict']}")
            if g["derivable"]:
                used = ", ".join(str(a) for a in g["assumptions"])
                lines.append(f"    assumptions used: {used}")
            if g["derivation"]:
                for line in g["derivation"].splitlines():
                    lines.append(f"    | {line}")

    lines.append("")
    lines.append(f"exit code: {report['exit_code']}")
    return "\n".join(lines) + "\n"
