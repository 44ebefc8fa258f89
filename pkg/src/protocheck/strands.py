"""Causal bundles over signed message terms.

A strand is a finite sequence of signed terms: + for transmission, - for
reception. Regular strands come from protocol sessions; attacker behaviour is
expressed by a fixed repertoire of penetrator strands:

    Text      <+t>            t from initial attacker knowledge
    KeyEmit   <+K0>           K0 a key from initial attacker knowledge
    Flush     <-g>            absorb a message
    Tee       <-g, +g, +g>    duplicate a message
    Concat    <-g, -h, +(g,h)>
    Separate  <-(g,h), +g, +h>
    Decrypt   <-K', -{h}K, +h>   K' the dual of K
    Encrypt   <-K, -h, +{h}K>

A bundle ties strand nodes together with communication edges (one incoming
edge per negative node, term-equal, from a positive node) and implicit
same-strand succession edges; the union must be acyclic.

Node ids are (strand, position) pairs, both 1-based, matching the usual
<s, i> notation.
"""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from . import intruder as intr
from .checker import (
    Bounds,
    CompiledProtocol,
    Event,
    compile_protocol,
    replay_trace,
    _instantiate,
)
from .dsl import ProtocolSpec
from .terms import (
    SORT_AGENT,
    SORT_NONCE,
    AsymEnc,
    Nonce,
    Pair,
    PrivKey,
    SymEnc,
    SymKey,
    Term,
    dual,
    format_term,
    full_subterms,
    is_key,
    subterm,
    term_sort_key,
)

PENETRATOR_KINDS = ("text", "key", "flush", "tee", "concat", "separate", "decrypt", "encrypt")
_KIND_TITLES = {
    "text": "Text",
    "key": "KeyEmit",
    "flush": "Flush",
    "tee": "Tee",
    "concat": "Concat",
    "separate": "Separate",
    "decrypt": "Decrypt",
    "encrypt": "Encrypt",
}


class LiftError(RuntimeError):
    """A delivered message admits no penetrator derivation."""


@dataclass(frozen=True, slots=True)
class SignedTerm:
    sign: int  # +1 or -1
    term: Term

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")

    def render(self) -> str:
        return ("+ " if self.sign > 0 else "- ") + format_term(self.term)


@dataclass(frozen=True)
class Strand:
    kind: str  # "init" | "resp" | "regular" | a penetrator kind
    trace: tuple
    sid: Optional[int] = None
    role: Optional[str] = None
    bindings: tuple = ()
    param_names: tuple = ()

    @property
    def is_regular(self) -> bool:
        return self.kind not in PENETRATOR_KINDS

    def params(self) -> tuple:
        sigma = dict(self.bindings)
        return tuple(sigma.get(v, "?") for v in self.param_names)

    def label(self) -> str:
        if self.is_regular:
            title = {"init": "Init", "resp": "Resp"}.get(self.kind, self.kind)
            return f"{title}[{', '.join(self.params())}]"
        return _KIND_TITLES[self.kind]


@dataclass
class Bundle:
    strands: tuple
    comm_edges: tuple  # ((s, i), (t, j)) with 1-based positions
    penetrator_knowledge: frozenset = frozenset()

    def nodes(self) -> list:
        out = []
        for si, strand in enumerate(self.strands, start=1):
            for pi in range(1, len(strand.trace) + 1):
                out.append((si, pi))
        return out

    def signed_term(self, node) -> SignedTerm:
        si, pi = node
        return self.strands[si - 1].trace[pi - 1]

    def term_at(self, node) -> Term:
        return self.signed_term(node).term

    def sign_at(self, node) -> int:
        return self.signed_term(node).sign

    def succession_edges(self) -> list:
        out = []
        for si, strand in enumerate(self.strands, start=1):
            for pi in range(1, len(strand.trace)):
                out.append(((si, pi), (si, pi + 1)))
        return out


def check_wellformed(bundle: Bundle) -> list:
    """All violations of the bundle conditions, as human-readable strings."""
    problems = []
    valid = set(bundle.nodes())
    incoming = defaultdict(list)
    for src, dst in bundle.comm_edges:
        if src not in valid:
            problems.append(f"edge source {src} is not a node")
            continue
        if dst not in valid:
            problems.append(f"edge target {dst} is not a node")
            continue
        if bundle.sign_at(src) != 1:
            problems.append(f"edge {src} -> {dst} leaves a non-positive node")
        if bundle.sign_at(dst) != -1:
            problems.append(f"edge {src} -> {dst} enters a non-negative node")
        if bundle.term_at(src) != bundle.term_at(dst):
            problems.append(
                f"edge {src} -> {dst} connects different terms "
                f"({format_term(bundle.term_at(src))} vs {format_term(bundle.term_at(dst))})"
            )
        incoming[dst].append(src)
    for node in bundle.nodes():
        if bundle.sign_at(node) == -1:
            n = len(incoming.get(node, ()))
            if n == 0:
                problems.append(f"negative node {node} has no incoming edge")
            elif n > 1:
                problems.append(f"negative node {node} has {n} incoming edges")
    if _has_cycle(bundle):
        problems.append("communication and succession edges form a cycle")
    return problems


def _adjacency(bundle: Bundle) -> dict:
    adj = defaultdict(list)
    for src, dst in bundle.comm_edges:
        adj[src].append(dst)
    for src, dst in bundle.succession_edges():
        adj[src].append(dst)
    return adj


def _has_cycle(bundle: Bundle) -> bool:
    adj = _adjacency(bundle)
    state: dict = {}

    def visit(n) -> bool:
        mark = state.get(n)
        if mark == 1:
            return True
        if mark == 2:
            return False
        state[n] = 1
        for m in adj.get(n, ()):
            if visit(m):
                return True
        state[n] = 2
        return False

    return any(visit(n) for n in bundle.nodes())


def precedes(bundle: Bundle) -> dict:
    """Strict causal order: node -> set of nodes strictly after it."""
    adj = _adjacency(bundle)
    order: dict = {}

    def reach(n) -> set:
        if n in order:
            return order[n]
        out: set = set()
        order[n] = out  # cycle guard; bundles are checked acyclic elsewhere
        for m in adj.get(n, ()):
            out.add(m)
            out |= reach(m)
        return out

    for n in bundle.nodes():
        reach(n)
    return order


def minimal_nodes(bundle: Bundle, predicate: Callable) -> list:
    """Minimal elements, under the causal order, of the predicate's node set."""
    sat = [n for n in bundle.nodes() if predicate(n)]
    after = precedes(bundle)
    sat_set = set(sat)
    return [n for n in sat if not any(n in after[m] for m in sat_set if m != n)]


def originates(bundle: Bundle, t: Term, node) -> bool:
    """Positive node whose term contains t with no earlier same-strand occurrence."""
    if bundle.sign_at(node) != 1 or not subterm(t, bundle.term_at(node)):
        return False
    si, pi = node
    strand = bundle.strands[si - 1]
    return not any(subterm(t, strand.trace[j].term) for j in range(pi - 1))


def origination_nodes(bundle: Bundle, t: Term) -> list:
    return [n for n in bundle.nodes() if originates(bundle, t, n)]


def uniquely_originates(bundle: Bundle, t: Term) -> bool:
    return len(origination_nodes(bundle, t)) == 1


# --- lifting traces ---------------------------------------------------------


def _plan_costs(universe, sources, emittable):
    """Cheapest derivation cost for every term in the universe.

    Cost counts penetrator strands: reuse of an available message is free,
    emitting from initial knowledge costs one strand, every operation one
    more. Fixpoint iteration; the universe is tiny.
    """
    dist: dict = {}
    for m in sources:
        dist[m] = 0
    for m in emittable:
        if dist.get(m, 99) > 1:
            dist[m] = 1
    ordered = sorted(universe, key=term_sort_key)
    changed = True
    while changed:
        changed = False

        def relax(t, cost):
            nonlocal changed
            if cost < dist.get(t, 1 << 30):
                dist[t] = cost
                changed = True

        for u in ordered:
            du = dist.get(u)
            if du is not None:
                if isinstance(u, Pair):
                    relax(u.left, du + 1)
                    relax(u.right, du + 1)
                elif isinstance(u, (SymEnc, AsymEnc)):
                    dk = dist.get(dual(u.key))
                    if dk is not None:
                        relax(u.payload, du + dk + 1)
            if isinstance(u, Pair):
                dl, dr = dist.get(u.left), dist.get(u.right)
                if dl is not None and dr is not None:
                    relax(u, dl + dr + 1)
            elif isinstance(u, (SymEnc, AsymEnc)):
                dk, dp = dist.get(u.key), dist.get(u.payload)
                if dk is not None and dp is not None:
                    relax(u, dk + dp + 1)
    return dist


def _plan_op(t, dist, sources, emittable, universe):
    """Which operation attains dist[t]; deterministic preference order."""
    cost = dist[t]
    if cost == 0 and t in sources:
        return ("use",)
    if cost == 1 and t in emittable:
        return ("emit",)
    for u in sorted(universe, key=term_sort_key):
        du = dist.get(u)
        if du is None:
            continue
        if isinstance(u, Pair) and (u.left == t or u.right == t) and du + 1 == cost:
            return ("sep", u)
        if isinstance(u, (SymEnc, AsymEnc)) and u.payload == t:
            dk = dist.get(dual(u.key))
            if dk is not None and du + dk + 1 == cost:
                return ("dec", u)
    if isinstance(t, Pair):
        dl, dr = dist.get(t.left), dist.get(t.right)
        if dl is not None and dr is not None and dl + dr + 1 == cost:
            return ("cat",)
    if isinstance(t, (SymEnc, AsymEnc)):
        dk, dp = dist.get(t.key), dist.get(t.payload)
        if dk is not None and dp is not None and dk + dp + 1 == cost:
            return ("enc",)
    raise LiftError(f"no operation reconstructs {format_term(t)}")


def _count_uses(t, dist, sources, emittable, universe, counter):
    """Count honest-source leaf uses of the derivation tree for t."""
    op = _plan_op(t, dist, sources, emittable, universe)
    if op[0] == "use":
        counter[t] += 1
    elif op[0] == "emit":
        pass
    elif op[0] == "sep":
        _count_uses(op[1], dist, sources, emittable, universe, counter)
    elif op[0] == "dec":
        ct = op[1]
        _count_uses(ct, dist, sources, emittable, universe, counter)
        _count_uses(dual(ct.key), dist, sources, emittable, universe, counter)
    elif op[0] == "cat":
        _count_uses(t.left, dist, sources, emittable, universe, counter)
        _count_uses(t.right, dist, sources, emittable, universe, counter)
    else:  # enc
        _count_uses(t.key, dist, sources, emittable, universe, counter)
        _count_uses(t.payload, dist, sources, emittable, universe, counter)


class _Lifter:
    def __init__(self, compiled: CompiledProtocol, trace: Sequence[Event], knowledge: frozenset):
        self.compiled = compiled
        self.trace = trace
        self.knowledge = knowledge
        self.emittable = frozenset(knowledge)
        self.strands: list = []
        self.edges: list = []
        self.open: dict = defaultdict(deque)
        self.remaining_uses: dict = defaultdict(int)

    # -- regular strands

    def build_regular(self, final_sessions) -> dict:
        by_sid: dict = {}
        for event in self.trace:
            by_sid.setdefault(event.sid, []).append(event)
        session_info = {s.sid: s for s in final_sessions}
        roles = self.compiled.roles
        nonagent_vars = [
            v for v in self.compiled.var_sorts
            if self.compiled.var_sorts[v] != SORT_AGENT
        ]
        param_names = tuple(list(roles) + nonagent_vars)
        strand_of_sid: dict = {}
        for sid in sorted(by_sid):
            events = by_sid[sid]
            session = session_info[sid]
            signed = tuple(
                SignedTerm(1 if e.kind == "send" else -1, e.message) for e in events
            )
            if len(roles) == 2:
                first = self.compiled.programs[session.role][0]
                kind = "init" if first.sender == session.role else "resp"
            else:
                kind = "regular"
            self.strands.append(Strand(
                kind=kind, trace=signed, sid=sid, role=session.role,
                bindings=session.bindings, param_names=param_names,
            ))
            strand_of_sid[sid] = len(self.strands)
        return strand_of_sid

    # -- penetrator machinery

    def new_strand(self, kind: str, signed: list) -> int:
        self.strands.append(Strand(kind=kind, trace=tuple(signed)))
        return len(self.strands)

    def provide(self, node, term):
        self.open[term].append(node)

    def take(self, term, ctx) -> tuple:
        if self.open[term]:
            node = self.open[term].popleft()
        else:
            node = self.build(term, ctx)
        self.remaining_uses[term] -= 1
        if self.remaining_uses[term] > 0 and not self.open[term]:
            si = self.new_strand("tee", [SignedTerm(-1, term), SignedTerm(1, term), SignedTerm(1, term)])
            self.edges.append((node, (si, 1)))
            self.provide((si, 2), term)
            self.provide((si, 3), term)
            node = self.open[term].popleft()
        return node

    def build(self, term, ctx) -> tuple:
        dist, sources, universe = ctx
        op = _plan_op(term, dist, sources, self.emittable, universe)
        if op[0] == "use":
            raise LiftError(
                f"derivation expected {format_term(term)} on the wire, but it was consumed"
            )
        if op[0] == "emit":
            kind = "key" if is_key(term) else "text"
            si = self.new_strand(kind, [SignedTerm(1, term)])
            return (si, 1)
        if op[0] == "sep":
            parent = op[1]
            src = self.take(parent, ctx)
            si = self.new_strand("separate", [
                SignedTerm(-1, parent), SignedTerm(1, parent.left), SignedTerm(1, parent.right),
            ])
            self.edges.append((src, (si, 1)))
            left_node, right_node = (si, 2), (si, 3)
            if parent.left == term:
                self.provide(right_node, parent.right)
                return left_node
            self.provide(left_node, parent.left)
            return right_node
        if op[0] == "dec":
            ct = op[1]
            key_node = self.take(dual(ct.key), ctx)
            ct_node = self.take(ct, ctx)
            si = self.new_strand("decrypt", [
                SignedTerm(-1, dual(ct.key)), SignedTerm(-1, ct), SignedTerm(1, ct.payload),
            ])
            self.edges.append((key_node, (si, 1)))
            self.edges.append((ct_node, (si, 2)))
            return (si, 3)
        if op[0] == "cat":
            left_node = self.take(term.left, ctx)
            right_node = self.take(term.right, ctx)
            si = self.new_strand("concat", [
                SignedTerm(-1, term.left), SignedTerm(-1, term.right), SignedTerm(1, term),
            ])
            self.edges.append((left_node, (si, 1)))
            self.edges.append((right_node, (si, 2)))
            return (si, 3)
        # enc
        key_node = self.take(term.key, ctx)
        payload_node = self.take(term.payload, ctx)
        si = self.new_strand("encrypt", [
            SignedTerm(-1, term.key), SignedTerm(-1, term.payload), SignedTerm(1, term),
        ])
        self.edges.append((key_node, (si, 1)))
        self.edges.append((payload_node, (si, 2)))
        return (si, 3)


def _derivation_ctx(target, honest_before, emittable):
    universe: set = set()
    for m in honest_before:
        universe |= full_subterms(m)
    for m in emittable:
        universe |= full_subterms(m)
    universe |= full_subterms(target)
    for u in list(universe):
        if isinstance(u, (SymEnc, AsymEnc)):
            universe.add(dual(u.key))
        elif is_key(u):
            universe.add(dual(u))
    sources = frozenset(honest_before)
    dist = _plan_costs(universe, sources, emittable)
    return dist, sources, universe


def lift(spec: ProtocolSpec, trace: Sequence[Event], bounds: Optional[Bounds] = None) -> Bundle:
    """Turn a validated event trace into a causal bundle.

    Regular strands mirror the sessions (truncated to the events that
    happened). Every delivery is realized by the cheapest penetrator
    derivation from messages already on the wire plus initial attacker
    knowledge, with deterministic tie-breaks, so the same trace always lifts
    to the same bundle. Verbatim forwards become single edges.
    """
    bounds = bounds or Bounds()
    compiled = spec if isinstance(spec, CompiledProtocol) else compile_protocol(spec, bounds)
    final = replay_trace(compiled, bounds, trace)
    knowledge0 = _instantiate(compiled).knowledge.terms

    lifter = _Lifter(compiled, trace, knowledge0)
    strand_of_sid = lifter.build_regular(final.sessions)

    # plan first so honest reuse is known before any strand is materialized
    honest_sent: list = []
    positions: dict = defaultdict(int)
    plans: dict = {}
    use_counter: dict = defaultdict(int)
    for event in trace:
        if event.kind == "send":
            honest_sent.append(event.message)
        else:
            ctx = _derivation_ctx(event.message, honest_sent, lifter.emittable)
            dist, sources, universe = ctx
            if event.message not in dist:
                raise LiftError(
                    f"delivery {event.label} ({format_term(event.message)}) is not derivable"
                )
            plans[event.time] = ctx
            _count_uses(event.message, dist, sources, lifter.emittable, universe, use_counter)
    lifter.remaining_uses.update(use_counter)

    node_pos: dict = defaultdict(int)
    for event in trace:
        si = strand_of_sid[event.sid]
        node_pos[event.sid] += 1
        node = (si, node_pos[event.sid])
        if event.kind == "send":
            if lifter.remaining_uses[event.message] > 0:
                lifter.provide(node, event.message)
        else:
            source = lifter.take(event.message, plans[event.time])
            lifter.edges.append((source, node))

    bundle = Bundle(
        strands=tuple(lifter.strands),
        comm_edges=tuple(sorted(lifter.edges)),
        penetrator_knowledge=frozenset(knowledge0),
    )
    problems = check_wellformed(bundle)
    if problems:
        raise LiftError("lifted bundle is malformed: " + "; ".join(problems))
    return bundle


# --- responder guarantee ----------------------------------------------------


@dataclass(frozen=True)
class GuaranteeHolds:
    initiator: int  # strand index

    def __str__(self):
        return f"Holds (initiator strand {self.initiator})"


@dataclass(frozen=True)
class GuaranteeFails:
    witnesses: tuple  # strand indices

    def __str__(self):
        return f"Fails (witness strands {', '.join(map(str, self.witnesses))})"


@dataclass(frozen=True)
class HypothesesNotMet:
    reasons: tuple

    def __str__(self):
        return "hypotheses not met: " + "; ".join(self.reasons)


def responder_guarantee(bundle: Bundle, spec: ProtocolSpec, responder: Optional[int] = None):
    """The agreement a completed responder strand is entitled to.

    Checks the hypotheses first: the responder ran to completion, the claimed
    initiator's private key is outside attacker knowledge, the responder's
    fresh nonce originates uniquely, and the two nonces differ. If they hold,
    looks for an initiator strand agreeing with the responder on every shared
    variable; otherwise reports the near-miss initiator strands as witnesses.
    """
    roles = spec.roles
    if len(roles) != 2:
        raise ValueError("the responder guarantee is defined for two-role protocols")
    init_role = spec.steps[0].sender
    resp_role = spec.steps[0].receiver

    if responder is None:
        resp_candidates = [
            i for i, s in enumerate(bundle.strands, start=1)
            if s.is_regular and s.role == resp_role
        ]
        if not resp_candidates:
            raise ValueError("the bundle has no responder strand")
        program_len = len(spec.role_program(resp_role))
        complete = [i for i in resp_candidates if len(bundle.strands[i - 1].trace) >= program_len]
        responder = (complete or resp_candidates)[0]
    resp = bundle.strands[responder - 1]
    if not resp.is_regular or resp.role != resp_role:
        raise ValueError(f"strand {responder} is not a responder strand")
    sigma_r = dict(resp.bindings)

    nonce_vars = [
        v for v, sort in spec.free_variables.items() if sort != SORT_AGENT
    ]
    own_fresh = [
        v for v in nonce_vars
        if spec.fresh_owner.get(v, (None,))[0] == resp_role and v in sigma_r
    ]

    reasons = []
    program_len = len(spec.role_program(resp_role))
    if len(resp.trace) < program_len:
        reasons.append(f"responder strand {responder} is incomplete")
    claimed_init = sigma_r.get(init_role)
    if claimed_init is None:
        reasons.append("responder never learned an initiator identity")
    else:
        attacker_closure = intr.analz_close(intr.knowledge(bundle.penetrator_knowledge)).terms
        if PrivKey(claimed_init) in attacker_closure:
            reasons.append(f"attacker holds SK({claimed_init})")
    if not own_fresh:
        reasons.append("responder has no fresh value of its own")
    for v in own_fresh:
        value = Nonce(sigma_r[v]) if spec.free_variables[v] == SORT_NONCE else SymKey(sigma_r[v])
        if not uniquely_originates(bundle, value):
            reasons.append(f"{sigma_r[v]} does not originate uniquely")
    values = [sigma_r.get(v) for v in nonce_vars if sigma_r.get(v) is not None]
    if len(set(values)) != len(values):
        reasons.append("nonce values coincide")
    if reasons:
        return HypothesesNotMet(tuple(reasons))

    shared_vars = [v for v in spec.free_variables if v in sigma_r]
    full_matches = []
    near_misses = []
    for idx, s in enumerate(bundle.strands, start=1):
        if not s.is_regular or s.role != init_role or len(s.trace) < 2:
            continue
        sigma_i = dict(s.bindings)
        if all(sigma_i.get(v) == sigma_r[v] for v in shared_vars if v in sigma_i):
            full_matches.append(idx)
        elif (
            sigma_i.get(init_role) == sigma_r.get(init_role)
            and all(sigma_i.get(v) == sigma_r[v] for v in nonce_vars if v in sigma_i and v in sigma_r)
        ):
            near_misses.append(idx)
    if full_matches:
        return GuaranteeHolds(full_matches[0])
    return GuaranteeFails(tuple(near_misses))


# --- export -----------------------------------------------------------------


def export_bundle(bundle: Bundle) -> str:
    """Line-based text rendering, stable across runs for the same bundle."""
    regular = sum(1 for s in bundle.strands if s.is_regular)
    lines = [
        f"bundle: {regular} regular strands, {len(bundle.strands) - regular} penetrator strands, "
        f"{len(bundle.comm_edges)} edges"
    ]
    for si, strand in enumerate(bundle.strands, start=1):
        lines.append(f"strand {si}: {strand.label()}")
        for pi, st in enumerate(strand.trace, start=1):
            lines.append(f"  {pi} {st.render()}")
    lines.append("edges:")
    for src, dst in sorted(bundle.comm_edges):
        lines.append(f"({src[0]},{src[1]}) -> ({dst[0]},{dst[1]})")
    return "\n".join(lines) + "\n"
