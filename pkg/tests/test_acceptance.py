"""End-to-end acceptance gate.

Every criterion C1..C6 from the run-summary table (see conftest) is driven
here through the public surface: the engines for substance, the CLI for the
exit-code and report contracts. Each test body runs under the `criterion`
guard so the terminal summary prints one PASS/FAIL line per criterion.

Tolerances, pinned once:
  - search runtime       < 60 s   (observed well under 1 s)
  - search state count   < 100_000 states (observed 32)
  - deduction oracle sweep < 60 s wall time for all three tiers
"""

import dataclasses
import itertools
import json
import time
from contextlib import contextmanager

from hypothesis import given, settings, strategies as st

from protocheck.ban import (
    audit_goals,
    parse_belief_path,
    render_formula,
    saturate,
    saturate_spec,
)
from protocheck.checker import (
    AttackReport,
    Bounds,
    Exhausted,
    honest_trace,
    search,
    validate_report,
)
from protocheck.cli import main
from protocheck.dsl import parse
from protocheck.intruder import analz_close, can_synthesize, knowledge
from protocheck.report import render_trace
from protocheck.strands import (
    GuaranteeFails,
    GuaranteeHolds,
    check_wellformed,
    lift,
    minimal_nodes,
    responder_guarantee,
)
from protocheck.terms import (
    AgentName,
    AsymEnc,
    Nonce,
    Pair,
    PrivKey,
    PubKey,
    SymEnc,
    SymKey,
    parse_term,
    subterm,
)

from conftest import FIXTURES, record
from oracles import (
    all_subsets,
    closure_oracle,
    enumerate_terms,
    synthesis_oracle,
)

BOUNDS = Bounds(sessions={"A": 1, "B": 1}, max_depth=12, state_budget=100_000)

ATTACK_LABELS = ["1.1", "2.1", "2.2", "1.2", "1.3", "2.3"]

ATTACK_TRACE_TEXT = (
    "1.1) A -> I : {na_0, A}{PK(I)}\n"
    "2.1) I(A) -> B : {na_0, A}{PK(B)}\n"
    "2.2) B -> A : {na_0, nb_1}{PK(A)}\n"
    "1.2) I -> A : {na_0, nb_1}{PK(A)}\n"
    "1.3) A -> I : {nb_1}{PK(I)}\n"
    "2.3) I(A) -> B : {nb_1}{PK(B)}"
)


@contextmanager
def criterion(cid):
    try:
        yield
    except BaseException:
        record(cid, False)
        raise
    record(cid)


# ---------------------------------------------------------------------------
# C1 — the classic man-in-the-middle is found, exactly, within bounds
# ---------------------------------------------------------------------------


class TestC1AttackReproduction:
    def test_attack_found_with_exact_shape(self, nspk_spec):
        with criterion("C1"):
            started = time.perf_counter()
            outcome = search(nspk_spec, BOUNDS)
            elapsed = time.perf_counter() - started

            assert isinstance(outcome, AttackReport)
            assert len(outcome.trace) == 6
            assert [e.label for e in outcome.trace] == ATTACK_LABELS
            assert render_trace(outcome.trace) == ATTACK_TRACE_TEXT
            assert [str(g) for g in outcome.violated_goals] == [
                "Secret(B, nb, [A])",
                "Agreement(A, B, [na, nb])",
            ]
            # B finished a run apparently with A; A only ever talked to I
            initiator_bindings = dict(outcome.session_bindings[0][3])
            responder_bindings = dict(outcome.session_bindings[1][3])
            assert responder_bindings["A"] == "A"
            assert initiator_bindings["B"] == "I"

            assert outcome.stats.states_explored < 100_000
            assert elapsed < 60.0

    def test_attack_surfaces_through_the_cli(self, capsys):
        with criterion("C1"):
            code = main(
                ["--protocol", "nspk", "--engine", "search", "--format", "json"]
            )
            payload = json.loads(capsys.readouterr().out)
            assert code == 10
            assert payload["results"]["search"]["verdict"] == "attack"
            assert [s["label"] for s in payload["results"]["search"]["trace"]] == (
                ATTACK_LABELS
            )


# ---------------------------------------------------------------------------
# C2 — the repaired protocol is clean; un-repairing it brings the attack back
# ---------------------------------------------------------------------------


class TestC2FixCertification:
    def test_repaired_protocol_searches_clean(self, nsl_spec, capsys):
        with criterion("C2"):
            outcome = search(nsl_spec, BOUNDS)
            assert isinstance(outcome, Exhausted)
            assert outcome.stats.levels[-1].frontier == 0  # truly exhausted

            code = main(["--protocol", "nsl", "--engine", "search"])
            out = capsys.readouterr().out
            assert code == 0
            assert "no attack within bounds" in out

    def test_reverting_the_fix_restores_the_attack(self):
        with criterion("C2"):
            text = (FIXTURES / "nsl.proto.casper").read_text()
            fixed = "{na, nb, B}{PK(A)}"
            assert fixed in text  # the repair: responder names itself in msg 2
            mutated = parse(text.replace(fixed, "{na, nb}{PK(A)}"))

            outcome = search(mutated, BOUNDS)
            assert isinstance(outcome, AttackReport)
            assert [e.label for e in outcome.trace] == ATTACK_LABELS
            assert render_trace(outcome.trace) == ATTACK_TRACE_TEXT


# ---------------------------------------------------------------------------
# C3 — belief engine derives the expected guarantees, and the audit pins the
#      responder's guarantee on the one assumption the protocol never earns
# ---------------------------------------------------------------------------


class TestC3BeliefGoldens:
    def test_guarantees_derived_with_golden_trees(self):
        with criterion("C3"):
            spec = parse_belief_path(FIXTURES / "nspk-sym.ban")
            result = saturate_spec(spec)
            derived = {render_formula(f) for f in result.derivations}

            # both parties' key beliefs, the initiator's freshness belief,
            # and both second-order beliefs
            for text in (
                "A |= A <-Kab-> B",
                "A |= #(A <-Kab-> B)",
                "B |= A <-Kab-> B",
                "A |= B |= A <-Kab-> B",
                "B |= A |= A <-Kab-> B",
            ):
                assert text in derived, text

            report = audit_goals(spec, result)
            assert report.statuses[0].derivation.render() == (
                "A |= A <-Kab-> B  [jurisdiction]\n"
                "  A |= (S => A <-Kab-> B)  [assumption 3]\n"
                "  A |= S |= A <-Kab-> B  [conjunction elimination]\n"
                "    A |= S |= (Na, A <-Kab-> B, #(A <-Kab-> B), {A <-Kab-> B}Kbs)"
                "  [nonce verification]\n"
                "      A |= S |~ (Na, A <-Kab-> B, #(A <-Kab-> B), {A <-Kab-> B}Kbs)"
                "  [message meaning]\n"
                "        A <| {Na, A <-Kab-> B, #(A <-Kab-> B), {A <-Kab-> B}Kbs}Kas"
                "  [receive 2]\n"
                "        A |= A <-Kas-> S  [assumption 1]\n"
                "      A |= #(Na)  [assumption 6]"
            )
            assert report.statuses[2].derivation.render() == (
                "B |= A <-Kab-> B  [jurisdiction]\n"
                "  B |= (S => A <-Kab-> B)  [assumption 4]\n"
                "  B |= S |= A <-Kab-> B  [nonce verification]\n"
                "    B |= S |~ A <-Kab-> B  [message meaning]\n"
                "      B <| {A <-Kab-> B}Kbs  [receive 3]\n"
                "      B |= B <-Kbs-> S  [assumption 1]\n"
                "    B |= #(A <-Kab-> B)  [assumption 8]"
            )

    def test_dropping_the_freshness_assumption_strips_only_b(self):
        with criterion("C3"):
            spec = parse_belief_path(FIXTURES / "nspk-sym.ban")
            full = saturate_spec(spec)
            without = saturate(
                [g for g in spec.assumptions if g.index != 8],
                spec.steps,
                spec.goals,
            )
            lost = sorted(
                render_formula(f)
                for f in set(full.derivations) - set(without.derivations)
            )
            assert lost == [
                "B <| (Nb, A <-Kab-> B)",
                "B <| Nb",
                "B |= #(A <-Kab-> B)",
                "B |= A <-Kab-> B",
                "B |= A |= (Nb, A <-Kab-> B)",
                "B |= A |= A <-Kab-> B",
                "B |= A |= Nb",
                "B |= A |~ (Nb, A <-Kab-> B)",
                "B |= S |= A <-Kab-> B",
            ]
            assert all(line.startswith("B ") for line in lost)

    def test_audit_flags_the_unearned_assumption(self):
        with criterion("C3"):
            spec = parse_belief_path(FIXTURES / "nspk-sym.ban")
            report = audit_goals(spec)
            assert report.unjustified == (8,)

            rows = [
                (render_formula(s.goal), s.derivable, s.flagged, s.citing)
                for s in report.statuses
            ]
            assert rows == [
                ("A |= A <-Kab-> B", True, False, ()),
                ("A |= #(A <-Kab-> B)", True, False, ()),
                ("B |= A <-Kab-> B", True, True, (8,)),
                ("A |= B |= A <-Kab-> B", True, False, ()),
                ("B |= A |= A <-Kab-> B", True, True, (8,)),
            ]
            assert report.statuses[2].verdict() == (
                "derivable, but only via unjustified assumption 8"
            )

            # minimal assumption sets are real minima: sufficient, and
            # strictly needed (re-proved by re-running saturation)
            for status in report.statuses:
                kept = tuple(
                    g for g in spec.assumptions if g.index in status.assumptions
                )
                assert status.goal in saturate(kept, spec.steps, spec.goals)
                for drop in status.assumptions:
                    fewer = tuple(g for g in kept if g.index != drop)
                    assert status.goal not in saturate(
                        fewer, spec.steps, spec.goals
                    )


# ---------------------------------------------------------------------------
# C4 — the causal-bundle engine separates the honest run from the attack
# ---------------------------------------------------------------------------


class TestC4StrandVerdicts:
    def test_guarantee_holds_on_the_honest_bundle(self, nspk_spec):
        with criterion("C4"):
            bundle = lift(nspk_spec, honest_trace(nspk_spec))
            verdict = responder_guarantee(bundle, nspk_spec)
            assert isinstance(verdict, GuaranteeHolds)
            assert bundle.strands[verdict.initiator - 1].label() == (
                "Init[A, B, na_0, nb_1]"
            )

    def test_guarantee_fails_on_the_attack_bundle(self, nspk_spec):
        with criterion("C4"):
            report = search(nspk_spec, BOUNDS)
            bundle = lift(nspk_spec, report.trace)
            verdict = responder_guarantee(bundle, nspk_spec)
            assert isinstance(verdict, GuaranteeFails)
            assert verdict.witnesses == (1,)
            # the only initiator run was with I, not with B's apparent peer
            assert bundle.strands[0].label() == "Init[A, I, na_0, nb_1]"

    def test_minimal_nodes_are_positive_and_regular(self, nspk_spec):
        with criterion("C4"):
            nb = Nonce("nb_1")
            shielded = parse_term(
                "{na_0, nb_1}{PK(A)}",
                sorts={"A": "Agent", "na_0": "Nonce", "nb_1": "Nonce"},
            )

            for trace_of in (
                lambda s: honest_trace(s),
                lambda s: search(s, BOUNDS).trace,
            ):
                bundle = lift(nspk_spec, trace_of(nspk_spec))
                minima = minimal_nodes(
                    bundle,
                    lambda n: subterm(nb, bundle.term_at(n))
                    and not subterm(shielded, bundle.term_at(n)),
                )
                assert minima == [(1, 3)]
                for node in minima:
                    assert bundle.sign_at(node) == 1
                    assert bundle.strands[node[0] - 1].is_regular


# ---------------------------------------------------------------------------
# C5 — the deduction engine agrees with independent brute-force oracles
# ---------------------------------------------------------------------------


ATOMS = [
    AgentName("A"),
    Nonce("na"),
    Nonce("nb"),
    SymKey("k"),
    PubKey("B"),
    PrivKey("B"),
]

# a depth<=3 pool exercising every constructor: nested and mixed encryptions,
# keys as payloads, signature duals, pairs of ciphertexts
POOL_TEXTS = [
    "A", "na", "nb", "k1", "k2", "PK(A)", "SK(A)", "PK(B)", "SK(B)",
    "{na}k1", "{k1}k2", "{na}{PK(A)}", "{nb}{SK(A)}", "{k2}{PK(B)}",
    "na, nb", "k1, A", "{na, nb}k1", "{na, A}{PK(B)}",
    "{{na}k1}k2", "{{na}{PK(A)}}{PK(B)}", "{na, {nb}k2}k1",
    "{SK(A)}k1", "({na}k1), ({nb}k2)", "{(na, nb), A}{SK(B)}",
]

POOL_TARGET_TEXTS = [
    "na", "k1", "SK(A)", "{na}k1", "{na, nb}k1",
    "{{na}k1}k2", "{na, A}{PK(B)}", "(na, nb), k1",
]


def random_term(depth):
    """Uniform-ish random terms over ATOMS up to the given constructor depth."""
    base = st.sampled_from(ATOMS)
    if depth == 0:
        return base
    sub = random_term(depth - 1)
    return st.one_of(
        base,
        st.builds(Pair, sub, sub),
        st.builds(SymEnc, st.just(SymKey("k")), sub),
        st.builds(AsymEnc, st.sampled_from([PubKey("B"), PrivKey("B")]), sub),
    )


class TestC5OracleEquivalence:
    def test_three_tier_sweep(self):
        with criterion("C5"):
            started = time.perf_counter()

            # tier 1: exhaustive — every canonical term of depth <= 1 over a
            # 6-atom alphabet (60 terms), every knowledge set of <= 3 of them,
            # closure and synthesis of every universe term
            universe = enumerate_terms(ATOMS, 1)
            assert len(universe) == 60
            checked = 0
            for subset in all_subsets(universe, 3):
                k = analz_close(knowledge(subset))
                assert k.terms == closure_oracle(subset)
                for target in universe:
                    assert can_synthesize(k, target) == synthesis_oracle(
                        k.terms, target
                    ), (subset, target)
                checked += 1
            assert checked == 36051

            # tier 2: exhaustive over a curated 24-term depth <= 3 pool,
            # every knowledge set of <= 5 of them
            pool = [parse_term(t) for t in POOL_TEXTS]
            targets = [parse_term(t) for t in POOL_TARGET_TEXTS]
            checked = 0
            for subset in all_subsets(pool, 5):
                k = analz_close(knowledge(subset))
                assert k.terms == closure_oracle(subset)
                for target in targets:
                    assert can_synthesize(k, target) == synthesis_oracle(
                        k.terms, target
                    ), (subset, target)
                checked += 1
            assert checked == 55455

            assert time.perf_counter() - started < 60.0

    @settings(max_examples=200, deadline=None)
    @given(st.data())
    def test_randomized_depth3_sets(self, data):
        # tier 3: random <= 5-term sets from the full depth <= 3 space,
        # generated directly (the space itself has millions of terms)
        chosen = data.draw(
            st.lists(random_term(3), min_size=1, max_size=5)
        )
        target = data.draw(random_term(3))
        k = analz_close(knowledge(chosen))
        assert k.terms == closure_oracle(chosen)
        assert can_synthesize(k, target) == synthesis_oracle(k.terms, target)
        record("C5")


# ---------------------------------------------------------------------------
# C6 — determinism, replay soundness, structural invariants
# ---------------------------------------------------------------------------


def every_attack_report(nspk_spec):
    """All attack reports this suite knows how to produce."""
    yield nspk_spec, BOUNDS, search(nspk_spec, BOUNDS)

    two_init = Bounds(sessions={"A": 2, "B": 1}, max_depth=12, state_budget=100_000)
    yield nspk_spec, two_init, search(nspk_spec, two_init)

    text = (FIXTURES / "nsl.proto.casper").read_text()
    reverted = parse(text.replace("{na, nb, B}{PK(A)}", "{na, nb}{PK(A)}"))
    yield reverted, BOUNDS, search(reverted, BOUNDS)


class TestC6Properties:
    def test_subterm_partial_order_laws(self):
        pool = enumerate_terms(
            [AgentName("A"), Nonce("na"), SymKey("k"), PubKey("B"), PrivKey("B")], 2
        )

        @settings(max_examples=300, deadline=None)
        @given(
            st.sampled_from(pool), st.sampled_from(pool), st.sampled_from(pool)
        )
        def laws(a, b, c):
            assert subterm(a, a)
            if subterm(a, b) and subterm(b, a):
                assert a == b
            if subterm(a, b) and subterm(b, c):
                assert subterm(a, c)

        with criterion("C6"):
            laws()

    def test_closure_idempotent_and_monotone(self):
        pool = enumerate_terms(ATOMS, 2)

        @settings(max_examples=200, deadline=None)
        @given(st.data())
        def laws(data):
            small = data.draw(st.lists(st.sampled_from(pool), max_size=5))
            extra = data.draw(st.lists(st.sampled_from(pool), max_size=3))
            k = analz_close(knowledge(small))
            assert analz_close(k).terms == k.terms
            k2 = analz_close(knowledge(small + extra))
            assert k.terms <= k2.terms

        with criterion("C6"):
            laws()

    def test_every_attack_report_replays(self, nspk_spec):
        with criterion("C6"):
            for spec, bounds, report in every_attack_report(nspk_spec):
                assert isinstance(report, AttackReport)
                validate_report(spec, bounds, report)  # raises on any drift

    def test_every_lifted_bundle_is_wellformed(self, nspk_spec, nsl_spec):
        with criterion("C6"):
            traces = [
                (nspk_spec, honest_trace(nspk_spec), None),
                (nsl_spec, honest_trace(nsl_spec), None),
            ]
            traces += [
                (spec, report.trace, bounds)
                for spec, bounds, report in every_attack_report(nspk_spec)
            ]
            for spec, trace, bounds in traces:
                assert check_wellformed(lift(spec, trace, bounds)) == []

    def test_reports_are_byte_identical_across_runs_and_workers(self, capsys):
        with criterion("C6"):
            outputs = set()
            for argv in (
                ["--protocol", "nspk", "--engine", "all",
                 "--idealization", "nspk-sym", "--format", "json"],
                ["--protocol", "nspk", "--engine", "all",
                 "--idealization", "nspk-sym", "--format", "json"],
                ["--protocol", "nspk", "--engine", "all",
                 "--idealization", "nspk-sym", "--format", "json",
                 "--workers", "2"],
                ["--protocol", "nspk", "--engine", "all",
                 "--idealization", "nspk-sym", "--format", "json",
                 "--workers", "4"],
            ):
                main(argv)
                outputs.add(capsys.readouterr().out)
            assert len(outputs) == 1
