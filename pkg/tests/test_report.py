"""Report payloads: one source of facts, two byte-stable renderings."""

import json

import jsonschema
import pytest

from protocheck.ban import audit_goals, parse_belief_path
from protocheck.checker import (
    Bounds,
    BudgetExceededError,
    Event,
    honest_trace,
    search,
)
from protocheck.report import (
    SCHEMA_FILENAME,
    ban_payload,
    build_report,
    describe_event,
    parse_trace_text,
    render_event_line,
    render_trace,
    search_payload,
    strand_payload,
    to_json,
    to_text,
)
from protocheck.strands import lift, responder_guarantee
from protocheck.terms import parse_term

from conftest import FIXTURES

BOUNDS = Bounds(sessions={"A": 1, "B": 1}, max_depth=12)


@pytest.fixture(scope="module")
def schema():
    with open(FIXTURES / SCHEMA_FILENAME) as fh:
        return json.load(fh)


@pytest.fixture(scope="module")
def attack(nspk_spec):
    return search(nspk_spec, BOUNDS)


@pytest.fixture(scope="module")
def full_report(nspk_spec, attack):
    bundle = lift(nspk_spec, attack.trace, BOUNDS)
    verdict = responder_guarantee(bundle, nspk_spec)
    belief_spec = parse_belief_path(FIXTURES / "nspk-sym.ban")
    results = {
        "search": search_payload(attack),
        "strand": strand_payload(bundle, verdict, "attack"),
        "ban": ban_payload(audit_goals(belief_spec)),
    }
    return build_report("nspk", results, exit_code=10)


def _walk(obj):
    yield obj
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield k
            yield from _walk(v)
    elif isinstance(obj, list):
        for v in obj:
            yield from _walk(v)


# ---------------------------------------------------------------------------
# Trace rendering and parsing
# ---------------------------------------------------------------------------


class TestTraceText:
    def test_honest_send_shows_bare_actor(self):
        e = Event("send", 0, 1, "A", "A", "B", parse_term("na_0"), 0)
        assert render_event_line(e) == "1.1) A -> B : na_0"

    def test_impersonating_delivery_shows_both(self):
        msg = parse_term("{na_0, A}{PK(B)}")
        e = Event("deliver", 1, 1, "I", "A", "B", msg, 1)
        assert render_event_line(e) == "2.1) I(A) -> B : {na_0, A}{PK(B)}"

    def test_undisguised_delivery_shows_bare_actor(self):
        e = Event("deliver", 0, 2, "I", "I", "A", parse_term("na_0"), 3)
        assert render_event_line(e) == "1.2) I -> A : na_0"

    def test_attack_trace_rendering(self, attack):
        assert render_trace(attack.trace) == (
            "1.1) A -> I : {na_0, A}{PK(I)}\n"
            "2.1) I(A) -> B : {na_0, A}{PK(B)}\n"
            "2.2) B -> A : {na_0, nb_1}{PK(A)}\n"
            "1.2) I -> A : {na_0, nb_1}{PK(A)}\n"
            "1.3) A -> I : {nb_1}{PK(I)}\n"
            "2.3) I(A) -> B : {nb_1}{PK(B)}"
        )

    def test_parse_inverts_render(self, attack):
        rows = parse_trace_text(render_trace(attack.trace))
        assert rows == [
            {
                "label": e.label,
                "actor": e.actor,
                "as": e.apparent,
                "to": e.receiver,
                "message": describe_event(e)["message"],
            }
            for e in attack.trace
        ]

    def test_parse_skips_blank_lines(self):
        assert parse_trace_text("\n  \n1.1) A -> B : na_0\n\n") == [
            {"label": "1.1", "actor": "A", "as": "A", "to": "B", "message": "na_0"}
        ]

    def test_parse_rejects_garbage(self):
        with pytest.raises(ValueError, match="unparseable trace line"):
            parse_trace_text("once upon a time")

    def test_describe_event(self, attack):
        assert describe_event(attack.trace[1]) == {
            "label": "2.1",
            "kind": "deliver",
            "session": 2,
            "step": 1,
            "actor": "I",
            "as": "A",
            "to": "B",
            "message": "{na_0, A}{PK(B)}",
        }


# ---------------------------------------------------------------------------
# Engine payloads
# ---------------------------------------------------------------------------


class TestSearchPayload:
    def test_attack(self, attack):
        p = search_payload(attack)
        assert p["verdict"] == "attack"
        assert p["goal"] == "Secret(B, nb, [A])"
        assert p["violated_goals"] == [
            "Secret(B, nb, [A])", "Agreement(A, B, [na, nb])",
        ]
        assert [t["label"] for t in p["trace"]] == [
            "1.1", "2.1", "2.2", "1.2", "1.3", "2.3",
        ]
        assert p["bindings"] == [
            {
                "session": 1, "role": "A", "agent": "A",
                "values": {"A": "A", "B": "I", "na": "na_0", "nb": "nb_1"},
            },
            {
                "session": 2, "role": "B", "agent": "B",
                "values": {"A": "A", "B": "B", "na": "na_0", "nb": "nb_1"},
            },
        ]
        assert p["stats"]["states_explored"] == 32

    def test_exhausted(self, nsl_spec):
        p = search_payload(search(nsl_spec, BOUNDS))
        assert p["verdict"] == "no_attack_within_bounds"
        assert p["goal"] is None
        assert p["trace"] == [] and p["bindings"] == []
        assert p["stats"]["states_explored"] == 29

    def test_budget_exceeded(self):
        p = search_payload(BudgetExceededError(451, 450))
        assert p["verdict"] == "budget_exceeded"
        assert p["stats"]["states_explored"] == 451
        assert p["stats"]["levels"] == []

    def test_rejects_unknown_outcome(self):
        with pytest.raises(TypeError, match="not a search outcome"):
            search_payload("mystery")

    def test_no_wall_clock_leaks(self, attack):
        leaf_keys = [x for x in _walk(search_payload(attack)) if isinstance(x, str)]
        assert "duration" not in " ".join(leaf_keys)
        assert "duration_s" not in leaf_keys


class TestStrandPayload:
    def test_holds(self, nspk_spec):
        bundle = lift(nspk_spec, honest_trace(nspk_spec))
        p = strand_payload(bundle, responder_guarantee(bundle, nspk_spec), "honest")
        assert p["verdict"] == "holds"
        assert p["witnesses"] == ["Init[A, B, na_0, nb_1]"]
        assert p["detail"] == "initiator strand 1 agrees on every shared value"
        assert (p["regular_strands"], p["penetrator_strands"], p["edges"]) == (2, 0, 3)
        assert p["bundle"].startswith("bundle: 2 regular strands")

    def test_fails(self, nspk_spec, attack):
        bundle = lift(nspk_spec, attack.trace, BOUNDS)
        p = strand_payload(bundle, responder_guarantee(bundle, nspk_spec), "attack")
        assert p["verdict"] == "fails"
        assert p["witnesses"] == ["Init[A, I, na_0, nb_1]"]
        assert p["detail"] == (
            "no initiator strand agrees with the responder on all values"
        )
        assert (p["regular_strands"], p["penetrator_strands"], p["edges"]) == (2, 8, 11)

    def test_hypotheses_not_met(self, nspk_spec):
        bundle = lift(nspk_spec, honest_trace(nspk_spec)[:2])
        p = strand_payload(bundle, responder_guarantee(bundle, nspk_spec), "honest")
        assert p["verdict"] == "hypotheses_not_met"
        assert p["witnesses"] == []
        assert "incomplete" in p["detail"]

    def test_rejects_unknown_verdict(self, nspk_spec):
        bundle = lift(nspk_spec, honest_trace(nspk_spec))
        with pytest.raises(TypeError, match="not a guarantee verdict"):
            strand_payload(bundle, "fine, probably", "honest")


class TestBanPayload:
    def test_shape(self):
        spec = parse_belief_path(FIXTURES / "nspk-sym.ban")
        p = ban_payload(audit_goals(spec))
        assert p["unjustified"] == [8]
        assert p["all_derivable"] is True
        assert p["any_flagged"] is True
        assert [g["formula"] for g in p["goals"]] == [
            "A |= A <-Kab-> B",
            "A |= #(A <-Kab-> B)",
            "B |= A <-Kab-> B",
            "A |= B |= A <-Kab-> B",
            "B |= A |= A <-Kab-> B",
        ]
        third = p["goals"][2]
        assert third["assumptions"] == [1, 4, 8]
        assert third["flagged"] is True
        assert third["citing"] == [8]
        assert third["derivation"].startswith("B |= A <-Kab-> B  [jurisdiction]")


# ---------------------------------------------------------------------------
# Whole-report rendering
# ---------------------------------------------------------------------------


class TestRenderings:
    def test_json_is_stable_and_sorted(self, full_report):
        text = to_json(full_report)
        assert text.endswith("\n")
        parsed = json.loads(text)
        assert parsed == full_report
        assert text == to_json(json.loads(text))
        assert list(parsed) == sorted(parsed)

    def test_engines_listed_sorted(self, full_report):
        assert full_report["engines"] == ["ban", "search", "strand"]

    def test_text_sections(self, full_report):
        text = to_text(full_report)
        assert text.startswith("protocol: nspk\n")
        assert "\nsearch: attack\n" in text
        assert "\nstrand: responder guarantee fails\n" in text
        assert "\nbelief analysis (unjustified assumptions: 8)\n" in text
        assert text.endswith("\nexit code: 10\n")

    def test_text_and_json_agree_on_facts(self, full_report):
        text = to_text(full_report)
        r = full_report["results"]
        for goal in r["search"]["violated_goals"]:
            assert goal in text
        for step in r["search"]["trace"]:
            assert f"{step['label']})" in text
            assert step["message"] in text
        assert f"states explored: {r['search']['stats']['states_explored']}" in text
        for witness in r["strand"]["witnesses"]:
            assert f"witness: {witness}" in text
        for line in r["strand"]["bundle"].rstrip().splitlines():
            assert f"  | {line}" in text
        for goal in r["ban"]["goals"]:
            assert f"goal {goal['formula']}: {goal['verdict']}" in text
            if goal["derivation"]:
                for line in goal["derivation"].splitlines():
                    assert f"    | {line}" in text

    def test_reports_are_byte_identical_across_runs(self, nspk_spec, full_report):
        attack2 = search(nspk_spec, BOUNDS, workers=2)
        bundle2 = lift(nspk_spec, attack2.trace, BOUNDS)
        belief_spec = parse_belief_path(FIXTURES / "nspk-sym.ban")
        rebuilt = build_report(
            "nspk",
            {
                "search": search_payload(attack2),
                "strand": strand_payload(
                    bundle2, responder_guarantee(bundle2, nspk_spec), "attack"
                ),
                "ban": ban_payload(audit_goals(belief_spec)),
            },
            exit_code=10,
        )
        assert to_json(rebuilt) == to_json(full_report)
        assert to_text(rebuilt) == to_text(full_report)

    def test_exhausted_text_has_no_trace_section(self, nsl_spec):
        report = build_report(
            "nsl", {"search": search_payload(search(nsl_spec, BOUNDS))}, exit_code=0
        )
        text = to_text(report)
        assert "search: no attack within bounds" in text
        assert "trace:" not in text
        assert text.endswith("\nexit code: 0\n")


# ---------------------------------------------------------------------------
# Schema
# ---------------------------------------------------------------------------


class TestSchema:
    def test_full_report_validates(self, schema, full_report):
        jsonschema.validate(json.loads(to_json(full_report)), schema)

    def test_single_engine_reports_validate(self, schema, nsl_spec):
        report = build_report(
            "nsl", {"search": search_payload(search(nsl_spec, BOUNDS))}, exit_code=0
        )
        jsonschema.validate(report, schema)

    def test_budget_report_validates(self, schema):
        report = build_report(
            "nspk",
            {"search": search_payload(BudgetExceededError(7, 5))},
            exit_code=3,
        )
        jsonschema.validate(report, schema)

    def test_schema_rejects_unknown_verdict(self, schema, full_report):
        mangled = json.loads(to_json(full_report))
        mangled["results"]["search"]["verdict"] = "maybe"
        with pytest.raises(jsonschema.ValidationError):
            jsonschema.validate(mangled, schema)

    def test_schema_rejects_extra_fields(self, schema, full_report):
        mangled = json.loads(to_json(full_report))
        mangled["results"]["search"]["stats"]["duration_s"] = 0.1
        with pytest.raises(jsonschema.ValidationError):
            jsonschema.validate(mangled, schema)

    def test_schema_rejects_bad_exit_code(self, schema, full_report):
        mangled = json.loads(to_json(full_report))
        mangled["exit_code"] = 1
        with pytest.raises(jsonschema.ValidationError):
            jsonschema.validate(mangled, schema)
