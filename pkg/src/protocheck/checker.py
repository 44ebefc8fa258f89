"""Bounded state-space exploration against an active network attacker.

Every message an honest session sends is captured by the attacker; every
message a session receives was constructed by the attacker from its closed
knowledge. Exploration is breadth-first over trace length with duplicate-state
pruning, so the first violation found is a shortest one; within a level the
lexicographically least violating trace wins, which keeps reports identical
across runs and across worker counts.

Fresh values are named deterministically: the nonce a session `sid` allocates
for variable `na` is the atom `na_<sid>`. That makes traces canonical and
replayable with no hidden counters.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Union

from . import intruder as intr
from .dsl import (
    AgreementGoal,
    MessageStep,
    ProtocolSpec,
    SecretGoal,
    SORT_AGENT,
    SORT_NONCE,
    SORT_SYMMETRIC_KEY,
)
from .terms import (
    AgentName,
    Nonce,
    PrivKey,
    PubKey,
    SymKey,
    Term,
    format_term,
    full_subterms,
    match,
    normalize,
    substitute,
)

MAX_TOTAL_SESSIONS = 16
MAX_DEPTH = 200


class BoundsError(ValueError):
    """Configured bounds are unusable (non-positive or over hard limits)."""


class BudgetExceededError(RuntimeError):
    def __init__(self, states_explored: int, budget: int):
        super().__init__(f"state budget {budget} exceeded after {states_explored} states")
        self.states_explored = states_explored
        self.budget = budget


class ReplayError(RuntimeError):
    """A trace event does not correspond to any legal transition."""


@dataclass(frozen=True)
class Bounds:
    sessions: Optional[Mapping[str, int]] = None
    max_depth: int = 12
    state_budget: int = 1_000_000


@dataclass(frozen=True, slots=True)
class SessionInstance:
    sid: int
    role: str
    self_agent: str
    pc: int
    bindings: tuple  # sorted (variable, value-identifier) pairs
    _hash: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self, "_hash", hash((self.sid, self.role, self.self_agent, self.pc, self.bindings))
        )

    def __hash__(self):
        return self._hash

    def binding_map(self) -> dict:
        return dict(self.bindings)

    def sym_key(self) -> tuple:
        # session-id-free shape used for symmetry-reduced deduplication
        return (self.role, self.self_agent, self.pc, self.bindings)


@dataclass(frozen=True, slots=True)
class Event:
    kind: str  # "send" | "deliver"
    sid: int
    step_index: int
    actor: str
    apparent: str
    receiver: str
    message: Term
    time: int

    @property
    def label(self) -> str:
        return f"{self.sid + 1}.{self.step_index}"

    def sort_key(self) -> tuple:
        return (
            self.sid,
            0 if self.kind == "send" else 1,
            self.step_index,
            self.actor,
            self.apparent,
            self.receiver,
            format_term(self.message),
        )


@dataclass(frozen=True, slots=True)
class GlobalState:
    sessions: tuple
    knowledge: intr.KnowledgeSet
    trace: tuple

    def dedup_key(self) -> tuple:
        return (tuple(sorted(s.sym_key() for s in self.sessions)), self.knowledge.terms)


def trace_key(trace: Sequence[Event]) -> tuple:
    return tuple(e.sort_key() for e in trace)


@dataclass
class LevelStats:
    depth: int
    new_states: int
    frontier: int


@dataclass
class SearchStats:
    states_explored: int
    depth_reached: int
    peak_frontier: int
    duration_s: float
    levels: tuple = ()


@dataclass
class AttackReport:
    goal: object
    violated_goals: tuple
    trace: tuple
    session_bindings: tuple  # (sid, role, agent, bindings) per session, final state
    stats: SearchStats


@dataclass
class Exhausted:
    stats: SearchStats


SearchOutcome = Union[AttackReport, Exhausted]


class CompiledProtocol:
    """Per-search immutable lookup tables derived from a ProtocolSpec."""

    def __init__(self, spec: ProtocolSpec, bounds: Bounds):
        if not spec.intruder_id:
            raise BoundsError("search needs an Intruder declared in the protocol")
        if bounds.max_depth < 0 or bounds.max_depth > MAX_DEPTH:
            raise BoundsError(f"max_depth must be in 0..{MAX_DEPTH}")
        if bounds.state_budget is not None and bounds.state_budget <= 0:
            raise BoundsError("state_budget must be positive")
        self.spec = spec
        self.intruder = spec.intruder_id
        self.agents = tuple(spec.agents)
        self.var_sorts = dict(spec.free_variables)
        self.roles = spec.roles
        self.programs = {role: spec.role_program(role) for role in self.roles}
        self.env_choice = {role: frozenset(spec.env_peers(role)) for role in self.roles}
        self.fresh_owner = dict(spec.fresh_owner)
        self.goals = spec.goals

        counts: dict = {}
        overrides = dict(bounds.sessions) if bounds.sessions else {}
        for role in self.roles:
            counts[role] = overrides.pop(role, spec.session_counts.get(role, 0))
            if counts[role] < 0:
                raise BoundsError(f"negative session count for role {role!r}")
        if overrides:
            raise BoundsError(f"session counts for unknown roles: {sorted(overrides)}")
        total = sum(counts.values())
        if total == 0:
            raise BoundsError("no sessions to run")
        if total > MAX_TOTAL_SESSIONS:
            raise BoundsError(f"{total} sessions exceed the hard limit of {MAX_TOTAL_SESSIONS}")
        self.session_counts = counts

        self.step_vars: dict = {}
        for role in self.roles:
            for step in self.programs[role]:
                if step.index not in self.step_vars:
                    self.step_vars[step.index] = self._vars_of(step)

    def _vars_of(self, step: MessageStep) -> tuple:
        from .terms import atoms_of

        names = []
        for atom in atoms_of(step.pattern):
            name = atom.name if hasattr(atom, "name") else atom.agent
            if name in self.var_sorts and name not in names:
                names.append(name)
        for extra in (step.sender, step.receiver):
            if extra not in names:
                names.append(extra)
        return tuple(names)

    def owner_agent(self, role: str) -> str:
        if role not in self.agents:
            raise BoundsError(
                f"role {role!r} has no same-named agent in #System to run its sessions"
            )
        return role


def compile_protocol(spec: ProtocolSpec, bounds: Bounds) -> CompiledProtocol:
    return CompiledProtocol(spec, bounds)


def instantiate(spec: ProtocolSpec, bounds: Bounds) -> GlobalState:
    """Initial state: declared sessions unstarted, attacker knowing the public world."""
    compiled = spec if isinstance(spec, CompiledProtocol) else compile_protocol(spec, bounds)
    return _instantiate(compiled)


def _instantiate(compiled: CompiledProtocol) -> GlobalState:
    sessions = []
    sid = 0
    for role in compiled.roles:
        owner = compiled.owner_agent(role)
        for _ in range(compiled.session_counts[role]):
            sessions.append(
                SessionInstance(sid, role, owner, 0, ((role, owner),))
            )
            sid += 1
    base = set(compiled.spec.intruder_knowledge)
    for agent in compiled.agents:
        base.add(AgentName(agent))
        base.add(PubKey(agent))
    base.add(PubKey(compiled.intruder))
    base.add(PrivKey(compiled.intruder))
    know = intr.analz_close(intr.knowledge(base))
    return GlobalState(tuple(sessions), know, ())


def _fresh_atom(var: str, sort: str, sid: int) -> Term:
    name = f"{var}_{sid}"
    return Nonce(name) if sort == SORT_NONCE else SymKey(name)


def _candidate_atoms(knowledge: intr.KnowledgeSet) -> dict:
    nonces: set = set()
    symkeys: set = set()
    for t in knowledge.terms:
        for sub in full_subterms(t):
            if isinstance(sub, Nonce):
                nonces.add(sub.name)
            elif isinstance(sub, SymKey):
                symkeys.add(sub.name)
    return {
        SORT_NONCE: sorted(nonces),
        SORT_SYMMETRIC_KEY: sorted(symkeys),
    }


def successors(state: GlobalState, compiled: CompiledProtocol) -> list:
    """All one-event extensions of `state`, in deterministic order."""
    out = []
    candidates = None
    for pos, session in enumerate(state.sessions):
        program = compiled.programs[session.role]
        if session.pc >= len(program):
            continue
        step = program[session.pc]
        if step.sender == session.role:
            out.extend(_send_successors(state, pos, session, step, compiled))
        else:
            if candidates is None:
                candidates = _candidate_atoms(state.knowledge)
            out.extend(_deliver_successors(state, pos, session, step, compiled, candidates))
    return out


def _binding_choices(session, step, compiled, unbound):
    """Candidate value lists per unbound variable of a send, or None if stuck."""
    choices = []
    for var in unbound:
        sort = compiled.var_sorts[var]
        if sort == SORT_AGENT:
            if var in compiled.env_choice[session.role]:
                choices.append([a for a in sorted(compiled.agents) if a != session.self_agent])
            else:
                return None
        else:
            owner = compiled.fresh_owner.get(var)
            if owner and owner[0] == session.role:
                choices.append([_fresh_atom(var, sort, session.sid).name])
            else:
                return None
    return choices


def _send_successors(state, pos, session, step, compiled):
    sigma = session.binding_map()
    step_vars = compiled.step_vars[step.index]
    unbound = [v for v in sorted(step_vars) if v not in sigma]
    choices = _binding_choices(session, step, compiled, unbound)
    if choices is None:
        return []
    out = []
    for combo in itertools.product(*choices):
        sigma2 = dict(sigma)
        sigma2.update(zip(unbound, combo))
        message = normalize(substitute(step.pattern, sigma2))
        event = Event(
            kind="send",
            sid=session.sid,
            step_index=step.index,
            actor=session.self_agent,
            apparent=session.self_agent,
            receiver=sigma2[step.receiver],
            message=message,
            time=len(state.trace),
        )
        new_session = SessionInstance(
            session.sid, session.role, session.self_agent, session.pc + 1,
            tuple(sorted(sigma2.items())),
        )
        sessions = state.sessions[:pos] + (new_session,) + state.sessions[pos + 1:]
        out.append(GlobalState(sessions, intr.observe(state.knowledge, message), state.trace + (event,)))
    return out


def _deliver_successors(state, pos, session, step, compiled, candidates):
    sigma = session.binding_map()
    step_vars = compiled.step_vars[step.index]
    unbound = [v for v in sorted(step_vars) if v not in sigma]
    choices = []
    for var in unbound:
        sort = compiled.var_sorts[var]
        if sort == SORT_AGENT:
            choices.append([a for a in sorted(compiled.agents) if a != session.self_agent])
        else:
            pool = candidates.get(sort, [])
            if not pool:
                return []
            choices.append(pool)
    out = []
    synth_memo: dict = {}
    for combo in itertools.product(*choices):
        sigma2 = dict(sigma)
        sigma2.update(zip(unbound, combo))
        message = normalize(substitute(step.pattern, sigma2))
        if not intr.can_synthesize(state.knowledge, message, _memo=synth_memo):
            continue
        event = Event(
            kind="deliver",
            sid=session.sid,
            step_index=step.index,
            actor=compiled.intruder,
            apparent=sigma2[step.sender],
            receiver=session.self_agent,
            message=message,
            time=len(state.trace),
        )
        new_session = SessionInstance(
            session.sid, session.role, session.self_agent, session.pc + 1,
            tuple(sorted(sigma2.items())),
        )
        sessions = state.sessions[:pos] + (new_session,) + state.sessions[pos + 1:]
        out.append(GlobalState(sessions, state.knowledge, state.trace + (event,)))
    return out


def _completed(session: SessionInstance, compiled: CompiledProtocol) -> bool:
    return session.pc >= len(compiled.programs[session.role])


def _atom_for_sort(name: str, sort: str) -> Term:
    if sort == SORT_AGENT:
        return AgentName(name)
    if sort == SORT_NONCE:
        return Nonce(name)
    return SymKey(name)


def _secret_violation(state, goal: SecretGoal, compiled) -> Optional[dict]:
    for session in state.sessions:
        if session.role != goal.owner or not _completed(session, compiled):
            continue
        sigma = session.binding_map()
        if any(sigma.get(p) in (None, compiled.intruder) for p in goal.trusted):
            continue
        value_name = sigma.get(goal.value)
        if value_name is None:
            continue
        value = _atom_for_sort(value_name, compiled.var_sorts[goal.value])
        if value in state.knowledge.terms:
            return {"session": session.sid, "value": value_name}
    return None


def _agreement_violation(state, goal: AgreementGoal, compiled) -> Optional[dict]:
    for s2 in state.sessions:
        if s2.role != goal.assured or not _completed(s2, compiled):
            continue
        sigma2 = s2.binding_map()
        peer = sigma2.get(goal.authenticated)
        if peer is None or peer == compiled.intruder:
            continue
        data = tuple(sigma2.get(v) for v in goal.data)
        if any(d is None for d in data):
            continue
        matched = False
        for s1 in state.sessions:
            if s1.role != goal.authenticated or s1.self_agent != peer:
                continue
            sigma1 = s1.binding_map()
            if sigma1.get(goal.assured) != s2.self_agent:
                continue
            if all(sigma1.get(v) == d for v, d in zip(goal.data, data)):
                matched = True
                break
        if not matched:
            return {"session": s2.sid, "peer": peer, "data": data}
    return None


def goal_witness(state: GlobalState, goal, compiled: CompiledProtocol) -> Optional[dict]:
    if isinstance(goal, SecretGoal):
        return _secret_violation(state, goal, compiled)
    if isinstance(goal, AgreementGoal):
        return _agreement_violation(state, goal, compiled)
    raise TypeError(f"unknown goal type: {goal!r}")


def check_goal(state: GlobalState, goal, compiled: CompiledProtocol) -> bool:
    """True when the goal is violated in this state."""
    return goal_witness(state, goal, compiled) is not None


def _violated_goals(state, goals, compiled) -> tuple:
    return tuple(g for g in goals if goal_witness(state, g, compiled) is not None)


def _bindings_snapshot(state: GlobalState) -> tuple:
    return tuple(
        (s.sid, s.role, s.self_agent, s.bindings) for s in state.sessions
    )


def search(
    spec: ProtocolSpec,
    bounds: Bounds,
    goals: Optional[Iterable] = None,
    workers: int = 1,
) -> SearchOutcome:
    """Breadth-first over trace length; shortest violating trace or Exhausted.

    With workers > 1 the frontier is expanded by a thread pool whose results
    are merged in frontier order; the visited set is only touched by the
    coordinating thread, so the outcome is identical for every worker count.
    """
    import time as _time

    t0 = _time.perf_counter()
    compiled = compile_protocol(spec, bounds)
    goal_list = tuple(goals) if goals is not None else compiled.goals
    initial = _instantiate(compiled)

    visited = {initial.dedup_key()}
    states_explored = 1
    peak_frontier = 1
    levels = []
    budget = bounds.state_budget

    def finish_attack(state, violated):
        stats = SearchStats(
            states_explored, len(state.trace), peak_frontier,
            _time.perf_counter() - t0, tuple(levels),
        )
        report = AttackReport(
            goal=violated[0],
            violated_goals=violated,
            trace=state.trace,
            session_bindings=_bindings_snapshot(state),
            stats=stats,
        )
        validate_report(spec, bounds, report)
        return report

    init_violated = _violated_goals(initial, goal_list, compiled)
    if init_violated:
        return finish_attack(initial, init_violated)

    frontier = [initial]
    depth_reached = 0
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for depth in range(1, bounds.max_depth + 1):
            if not frontier:
                break
            if pool is not None:
                expansions = list(pool.map(lambda s: successors(s, compiled), frontier))
            else:
                expansions = [successors(s, compiled) for s in frontier]
            next_frontier = []
            hits = []
            for succ_list in expansions:
                for succ in succ_list:
                    key = succ.dedup_key()
                    if key in visited:
                        continue
                    visited.add(key)
                    states_explored += 1
                    if budget is not None and states_explored > budget:
                        raise BudgetExceededError(states_explored, budget)
                    violated = _violated_goals(succ, goal_list, compiled)
                    if violated:
                        hits.append((succ, violated))
                    else:
                        next_frontier.append(succ)
            depth_reached = depth
            levels.append(LevelStats(depth, len(next_frontier) + len(hits), len(next_frontier)))
            peak_frontier = max(peak_frontier, len(next_frontier))
            if hits:
                state, violated = min(hits, key=lambda h: trace_key(h[0].trace))
                return finish_attack(state, violated)
            frontier = next_frontier
    finally:
        if pool is not None:
            pool.shutdown(wait=False)

    stats = SearchStats(
        states_explored, depth_reached, peak_frontier,
        _time.perf_counter() - t0, tuple(levels),
    )
    return Exhausted(stats)


# --- trace replay -----------------------------------------------------------


def replay_trace(spec: ProtocolSpec, bounds: Bounds, trace: Sequence[Event]) -> GlobalState:
    """Re-drive a trace through the transition rules, verifying each event.

    Raises ReplayError if any event is not a legal transition from the state
    before it: wrong step order, an unsynthesizable delivery, or a message
    that does not match the session's expected pattern.
    """
    compiled = spec if isinstance(spec, CompiledProtocol) else compile_protocol(spec, bounds)
    state = _instantiate(compiled)
    for event in trace:
        state = _apply_event(state, event, compiled)
    return state


def _apply_event(state: GlobalState, event: Event, compiled: CompiledProtocol) -> GlobalState:
    pos = next((i for i, s in enumerate(state.sessions) if s.sid == event.sid), None)
    if pos is None:
        raise ReplayError(f"event names unknown session {event.sid}")
    session = state.sessions[pos]
    program = compiled.programs[session.role]
    if session.pc >= len(program):
        raise ReplayError(f"session {session.sid} already finished at event {event.label}")
    step = program[session.pc]
    if step.index != event.step_index:
        raise ReplayError(
            f"session {session.sid} expects step {step.index}, event says {event.step_index}"
        )
    sigma = session.binding_map()
    free = frozenset(v for v in compiled.step_vars[step.index] if v not in sigma)
    grounded = substitute(step.pattern, sigma)
    extra = match(grounded, event.message, free)
    if extra is None:
        raise ReplayError(
            f"message {format_term(event.message)} does not match step {step.index} pattern"
        )
    sigma.update(extra)

    if event.kind == "send":
        if step.sender != session.role:
            raise ReplayError(f"event {event.label} sends on a receive step")
        if event.actor != session.self_agent or event.apparent != session.self_agent:
            raise ReplayError(f"send event {event.label} misattributes the actor")
        sigma.setdefault(step.receiver, event.receiver)
        if sigma[step.receiver] != event.receiver:
            raise ReplayError(f"send event {event.label} receiver disagrees with bindings")
        knowledge = intr.observe(state.knowledge, event.message)
    elif event.kind == "deliver":
        if step.receiver != session.role:
            raise ReplayError(f"event {event.label} delivers on a send step")
        if not intr.can_synthesize(state.knowledge, event.message):
            raise ReplayError(
                f"attacker cannot construct {format_term(event.message)} at event {event.label}"
            )
        sigma.setdefault(step.sender, event.apparent)
        if sigma[step.sender] != event.apparent:
            raise ReplayError(f"deliver event {event.label} apparent-sender disagrees")
        knowledge = state.knowledge
    else:
        raise ReplayError(f"unknown event kind {event.kind!r}")

    missing = [v for v in compiled.step_vars[step.index] if v not in sigma]
    if missing:
        raise ReplayError(f"event {event.label} leaves variables {missing} unbound")
    new_session = SessionInstance(
        session.sid, session.role, session.self_agent, session.pc + 1,
        tuple(sorted(sigma.items())),
    )
    sessions = state.sessions[:pos] + (new_session,) + state.sessions[pos + 1:]
    return GlobalState(sessions, knowledge, state.trace + (event,))


def validate_report(spec: ProtocolSpec, bounds: Bounds, report: AttackReport):
    """Replay the reported trace and re-check every claimed violation."""
    compiled = compile_protocol(spec, bounds)
    final = replay_trace(compiled, bounds, report.trace)
    for goal in report.violated_goals:
        if goal_witness(final, goal, compiled) is None:
            raise ReplayError(f"replayed trace does not violate {goal}")


# --- honest execution -------------------------------------------------------


def honest_trace(spec: ProtocolSpec) -> tuple:
    """One faithful run: each role owned by its same-named agent, messages
    relayed verbatim. Returns the send/deliver event sequence."""
    bounds = Bounds(sessions={r: 1 for r in spec.roles}, max_depth=0)
    compiled = compile_protocol(spec, bounds)
    sessions = {}
    sigmas = {}
    for idx, role in enumerate(compiled.roles):
        sessions[role] = idx
        sigmas[role] = {r: compiled.owner_agent(r) for r in compiled.roles}
    events = []
    for step in spec.steps:
        sender_sid = sessions[step.sender]
        sigma_s = sigmas[step.sender]
        for var in compiled.step_vars[step.index]:
            if var not in sigma_s:
                owner = compiled.fresh_owner.get(var)
                if owner and owner[0] == step.sender:
                    sigma_s[var] = _fresh_atom(var, compiled.var_sorts[var], sender_sid).name
        message = normalize(substitute(step.pattern, sigma_s))
        events.append(Event(
            "send", sender_sid, step.index,
            actor=compiled.owner_agent(step.sender),
            apparent=compiled.owner_agent(step.sender),
            receiver=sigma_s[step.receiver],
            message=message, time=len(events),
        ))
        sigma_r = sigmas[step.receiver]
        free = frozenset(v for v in compiled.step_vars[step.index] if v not in sigma_r)
        extra = match(substitute(step.pattern, sigma_r), message, free)
        if extra is None:
            raise ReplayError(f"honest run cannot accept its own step {step.index}")
        sigma_r.update(extra)
        events.append(Event(
            "deliver", sessions[step.receiver], step.index,
            actor=compiled.intruder,
            apparent=sigma_r[step.sender],
            receiver=compiled.owner_agent(step.receiver),
            message=message, time=len(events),
        ))
    return tuple(events)
