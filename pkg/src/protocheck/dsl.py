"""Protocol descriptions in a small Casper-flavoured file format.

A protocol file has five sections, introduced by header lines:

    #Free variables         A, B : Agent / na, nb : Nonce / ...
    #Protocol description   numbered steps, `1. A -> B : {na, A}{PK(B)}`
    #Specification          Secret(...) and Agreement(...) goals
    #Intruder Information   Intruder = I / IntruderKnowledge = { ... }
    #System                 Agents = A, B, I and per-role session counts

Step 0 (`0. -> A : B`) is the environment telling a role which peers to use;
it never crosses the network and only marks those variables as chosen by the
environment (the search later branches over them). Lines starting with `--`
are comments. Parse errors carry the 1-based line and column.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import intruder as intr
from .terms import (
    AgentName,
    Nonce,
    PrivKey,
    PubKey,
    SymKey,
    SORT_AGENT,
    SORT_NONCE,
    SORT_PUBLIC_KEY,
    SORT_SYMMETRIC_KEY,
    Term,
    TermSyntaxError,
    format_term,
    normalize,
    parse_term,
)

SORTS = (SORT_AGENT, SORT_NONCE, SORT_PUBLIC_KEY, SORT_SYMMETRIC_KEY)

_SECTION_FREE = "#Free variables"
_SECTION_PROTOCOL = "#Protocol description"
_SECTION_SPEC = "#Specification"
_SECTION_INTRUDER = "#Intruder Information"
_SECTION_SYSTEM = "#System"
_SECTIONS = (_SECTION_FREE, _SECTION_PROTOCOL, _SECTION_SPEC, _SECTION_INTRUDER, _SECTION_SYSTEM)


class ProtocolError(ValueError):
    """Semantic protocol problem (well-formedness or executability)."""


class DslParseError(ProtocolError):
    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class EnvStep:
    """Step 0: the environment hands `receiver` the values of `variables`."""

    receiver: str
    variables: tuple


@dataclass(frozen=True)
class MessageStep:
    index: int
    sender: str
    receiver: str
    pattern: Term


@dataclass(frozen=True)
class SecretGoal:
    owner: str
    value: str
    trusted: tuple

    def __str__(self):
        return f"Secret({self.owner}, {self.value}, [{', '.join(self.trusted)}])"


@dataclass(frozen=True)
class AgreementGoal:
    authenticated: str  # the party whose participation is being claimed
    assured: str        # the party relying on that claim
    data: tuple

    def __str__(self):
        return f"Agreement({self.authenticated}, {self.assured}, [{', '.join(self.data)}])"


Goal = object  # SecretGoal | AgreementGoal


@dataclass(frozen=True)
class ProtocolSpec:
    free_variables: dict
    env_steps: tuple
    steps: tuple
    goals: tuple
    intruder_id: str
    intruder_knowledge: tuple
    agents: tuple
    session_counts: dict
    fresh_owner: dict = field(default_factory=dict)

    @property
    def roles(self) -> tuple:
        seen = []
        for step in self.steps:
            for r in (step.sender, step.receiver):
                if r not in seen:
                    seen.append(r)
        return tuple(seen)

    def env_peers(self, role: str) -> tuple:
        out = []
        for env in self.env_steps:
            if env.receiver == role:
                out.extend(env.variables)
        return tuple(out)

    def role_program(self, role: str) -> tuple:
        return tuple(s for s in self.steps if role in (s.sender, s.receiver))


def _logical_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("--"):
            continue
        yield lineno, raw, stripped


def parse(text: str) -> ProtocolSpec:
    sections: dict = {}
    current: Optional[str] = None
    for lineno, raw, stripped in _logical_lines(text):
        if stripped.startswith("#"):
            if stripped not in _SECTIONS:
                raise DslParseError(f"unknown section header {stripped!r}", lineno)
            if stripped in sections:
                raise DslParseError(f"duplicate section {stripped!r}", lineno)
            current = stripped
            sections[current] = []
            continue
        if current is None:
            raise DslParseError(f"content before any section header: {stripped!r}", lineno)
        sections[current].append((lineno, raw, stripped))

    if _SECTION_PROTOCOL not in sections:
        raise DslParseError("no #Protocol description section", max(1, text.count("\n") + 1))

    free = _parse_free_variables(sections.get(_SECTION_FREE, ()))
    sorts = dict(free)
    env_steps, steps = _parse_protocol(sections[_SECTION_PROTOCOL], sorts)
    goals = _parse_specification(sections.get(_SECTION_SPEC, ()), sorts)
    agents, session_counts = _parse_system(sections.get(_SECTION_SYSTEM, ()), steps)
    intruder_id, intruder_knowledge = _parse_intruder(sections.get(_SECTION_INTRUDER, ()), agents)

    spec = ProtocolSpec(
        free_variables=free,
        env_steps=env_steps,
        steps=steps,
        goals=goals,
        intruder_id=intruder_id,
        intruder_knowledge=intruder_knowledge,
        agents=agents,
        session_counts=session_counts,
        fresh_owner=_fresh_ownership(steps, free),
    )
    _validate(spec)
    return spec


def parse_file(path) -> ProtocolSpec:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


def _column_of(raw: str, needle: str) -> int:
    at = raw.find(needle)
    return at + 1 if at >= 0 else 1


def _parse_free_variables(lines) -> dict:
    free: dict = {}
    for lineno, raw, stripped in lines:
        if ":" not in stripped:
            raise DslParseError("expected '<names> : <Sort>'", lineno, _column_of(raw, stripped))
        names_part, _, sort_part = stripped.partition(":")
        sort = sort_part.strip()
        if sort not in SORTS:
            raise DslParseError(
                f"unknown sort {sort!r} (expected one of {', '.join(SORTS)})",
                lineno,
                _column_of(raw, sort),
            )
        for name in (n.strip() for n in names_part.split(",")):
            if not name.isidentifier():
                raise DslParseError(f"bad variable name {name!r}", lineno, _column_of(raw, name or ":"))
            if name in free:
                raise DslParseError(f"variable {name!r} declared twice", lineno, _column_of(raw, name))
            free[name] = sort
    return free


def _parse_step_pattern(raw: str, stripped: str, lineno: int, sorts: dict, body: str) -> Term:
    col0 = raw.find(body) if body and body in raw else len(raw.rstrip())
    try:
        return normalize(parse_term(body, sorts=sorts))
    except TermSyntaxError as e:
        raise DslParseError(str(e), lineno, col0 + 1 + e.column) from e


def _parse_protocol(lines, sorts) -> tuple:
    env_steps = []
    steps = []
    seen_indices = set()
    for lineno, raw, stripped in lines:
        num_part, dot, rest = stripped.partition(".")
        if not dot or not num_part.strip().isdigit():
            raise DslParseError("step must start with '<number>.'", lineno, _column_of(raw, stripped))
        index = int(num_part.strip())
        rest = rest.strip()
        head, sep, body = rest.partition(":")
        if not sep:
            raise DslParseError("step needs '<sender> -> <receiver> : <message>'", lineno)
        head = head.strip()
        body = body.strip()
        if "->" not in head:
            raise DslParseError("step header needs '->'", lineno, _column_of(raw, head))
        sender_part, _, receiver_part = head.partition("->")
        sender = sender_part.strip()
        receiver = receiver_part.strip()

        if index == 0:
            if sender:
                raise DslParseError("step 0 has no sender (environment message)", lineno)
            if not receiver.isidentifier():
                raise DslParseError(f"bad step-0 receiver {receiver!r}", lineno)
            _require_declared(receiver, sorts, lineno, raw)
            variables = tuple(v.strip() for v in body.split(","))
            for v in variables:
                _require_declared(v, sorts, lineno, raw)
                if sorts[v] != SORT_AGENT:
                    raise DslParseError(f"step 0 can only choose Agent variables, {v!r} is {sorts[v]}", lineno)
            env_steps.append(EnvStep(receiver, variables))
            continue

        if index in seen_indices:
            raise DslParseError(f"duplicate step number {index}", lineno, _column_of(raw, num_part.strip()))
        seen_indices.add(index)
        if not sender.isidentifier() or not receiver.isidentifier():
            raise DslParseError("sender and receiver must be identifiers", lineno, _column_of(raw, head))
        _require_declared(sender, sorts, lineno, raw)
        _require_declared(receiver, sorts, lineno, raw)
        if sender == receiver:
            raise DslParseError(f"step {index}: sender and receiver are both {sender!r}", lineno)
        pattern = _parse_step_pattern(raw, stripped, lineno, sorts, body)
        steps.append(MessageStep(index, sender, receiver, pattern))

    steps.sort(key=lambda s: s.index)
    for want, step in enumerate(steps, start=1):
        if step.index != want:
            raise DslParseError(
                f"step numbers must run consecutively from 1; expected {want}, found {step.index}",
                lineno,
            )
    return tuple(env_steps), tuple(steps)


def _require_declared(name: str, sorts: dict, lineno: int, raw: str):
    if name not in sorts:
        raise DslParseError(f"undeclared variable {name!r}", lineno, _column_of(raw, name))


def _parse_goal_args(stripped: str, lineno: int) -> tuple:
    inner = stripped[stripped.index("(") + 1 : stripped.rindex(")")]
    lb = inner.index("[")
    rb = inner.rindex("]")
    head = [a.strip() for a in inner[:lb].split(",") if a.strip()]
    tail = [a.strip() for a in inner[lb + 1 : rb].split(",") if a.strip()]
    return head, tail


def _parse_specification(lines, sorts) -> tuple:
    goals = []
    for lineno, raw, stripped in lines:
        if "(" not in stripped or not stripped.endswith(")") or "[" not in stripped:
            raise DslParseError("goal must look like Secret(R, v, [..]) or Agreement(R1, R2, [..])", lineno)
        kind = stripped[: stripped.index("(")].strip()
        head, tail = _parse_goal_args(stripped, lineno)
        for name in head + tail:
            _require_declared(name, sorts, lineno, raw)
        if kind == "Secret":
            if len(head) != 2:
                raise DslParseError("Secret takes (owner, value, [trusted...])", lineno)
            owner, value = head
            if sorts[owner] != SORT_AGENT:
                raise DslParseError(f"Secret owner {owner!r} must be an Agent variable", lineno)
            goals.append(SecretGoal(owner, value, tuple(tail)))
        elif kind == "Agreement":
            if len(head) != 2:
                raise DslParseError("Agreement takes (authenticated, assured, [data...])", lineno)
            r1, r2 = head
            for r in (r1, r2):
                if sorts[r] != SORT_AGENT:
                    raise DslParseError(f"Agreement role {r!r} must be an Agent variable", lineno)
            goals.append(AgreementGoal(r1, r2, tuple(tail)))
        else:
            raise DslParseError(f"unknown goal kind {kind!r}", lineno, _column_of(raw, kind))
    return tuple(goals)


def _parse_system(lines, steps) -> tuple:
    agents: tuple = ()
    counts: dict = {}
    for lineno, raw, stripped in lines:
        if stripped.startswith("Agents"):
            _, _, rest = stripped.partition("=")
            names = [n.strip() for n in rest.split(",") if n.strip()]
            for n in names:
                if not n.isidentifier():
                    raise DslParseError(f"bad agent name {n!r}", lineno, _column_of(raw, n))
            if len(set(names)) != len(names):
                raise DslParseError("duplicate agent name in Agents", lineno)
            agents = tuple(names)
        elif ":" in stripped:
            role_part, _, count_part = stripped.partition(":")
            role = role_part.strip()
            count = count_part.strip()
            if not count.isdigit():
                raise DslParseError(f"session count must be a number, got {count!r}", lineno, _column_of(raw, count))
            if role in counts:
                raise DslParseError(f"duplicate session count for role {role!r}", lineno)
            counts[role] = int(count)
        else:
            raise DslParseError("expected 'Agents = ...' or '<role> : <count>'", lineno)
    return agents, counts


def _parse_intruder(lines, agents) -> tuple:
    intruder_id = ""
    know: tuple = ()
    agent_sorts = {a: SORT_AGENT for a in agents}
    for lineno, raw, stripped in lines:
        key, sep, value = stripped.partition("=")
        if not sep:
            raise DslParseError("expected 'Intruder = ...' or 'IntruderKnowledge = {...}'", lineno)
        key = key.strip()
        value = value.strip()
        if key == "Intruder":
            if not value.isidentifier():
                raise DslParseError(f"bad intruder name {value!r}", lineno, _column_of(raw, value))
            intruder_id = value
        elif key == "IntruderKnowledge":
            if not (value.startswith("{") and value.endswith("}")):
                raise DslParseError("IntruderKnowledge must be a {...} set", lineno, _column_of(raw, value))
            inner = value[1:-1].strip()
            terms = []
            if inner:
                depth = 0
                item = []
                pieces = []
                for ch in inner:
                    if ch in "{(":
                        depth += 1
                    elif ch in "})":
                        depth -= 1
                    if ch == "," and depth == 0:
                        pieces.append("".join(item))
                        item = []
                    else:
                        item.append(ch)
                pieces.append("".join(item))
                for piece in pieces:
                    piece = piece.strip()
                    try:
                        terms.append(normalize(parse_term(piece, sorts=agent_sorts)))
                    except TermSyntaxError as e:
                        raise DslParseError(
                            f"in IntruderKnowledge, {e}", lineno, _column_of(raw, piece)
                        ) from e
            know = tuple(terms)
        else:
            raise DslParseError(f"unknown intruder field {key!r}", lineno, _column_of(raw, key))
    return intruder_id, know


def _fresh_ownership(steps, free) -> dict:
    """Owner of each fresh value: sender of the first step mentioning it.

    Pinned at parse time so later pattern mutations cannot silently reassign
    who generates a nonce.
    """
    owner: dict = {}
    for step in steps:
        for atom_name in _pattern_names(step.pattern):
            sort = free.get(atom_name)
            if sort in (SORT_NONCE, SORT_SYMMETRIC_KEY) and atom_name not in owner:
                owner[atom_name] = (step.sender, step.index)
    return owner


def _pattern_names(t: Term):
    from .terms import atoms_of

    for atom in atoms_of(t):
        if isinstance(atom, (AgentName, Nonce, SymKey)):
            yield atom.name
        else:
            yield atom.agent


def _validate(spec: ProtocolSpec):
    roles = spec.roles
    for role in spec.session_counts:
        if role not in roles:
            raise ProtocolError(f"session count for {role!r}, which is not a role in any step")
    for role in roles:
        if spec.free_variables.get(role) != SORT_AGENT:
            raise ProtocolError(f"role {role!r} must be declared with sort Agent")
    if spec.intruder_id and spec.agents and spec.intruder_id not in spec.agents:
        raise ProtocolError(f"intruder {spec.intruder_id!r} is not listed in Agents")
    for env in spec.env_steps:
        if env.receiver not in roles:
            raise ProtocolError(f"step 0 addresses {env.receiver!r}, which is not a role")


def print_spec(spec: ProtocolSpec) -> str:
    """Render a spec back to file syntax; parse(print_spec(s)) == s."""
    out = []
    if spec.free_variables:
        out.append(_SECTION_FREE)
        by_sort: dict = {}
        order: list = []
        for name, sort in spec.free_variables.items():
            if sort not in by_sort:
                by_sort[sort] = []
                order.append(sort)
            by_sort[sort].append(name)
        for sort in order:
            out.append(f"{', '.join(by_sort[sort])} : {sort}")
    out.append(_SECTION_PROTOCOL)
    for env in spec.env_steps:
        out.append(f"0. -> {env.receiver} : {', '.join(env.variables)}")
    for step in spec.steps:
        out.append(f"{step.index}. {step.sender} -> {step.receiver} : {format_term(step.pattern)}")
    if spec.goals:
        out.append(_SECTION_SPEC)
        for goal in spec.goals:
            out.append(str(goal))
    if spec.intruder_id or spec.intruder_knowledge:
        out.append(_SECTION_INTRUDER)
        if spec.intruder_id:
            out.append(f"Intruder = {spec.intruder_id}")
        if spec.intruder_knowledge:
            rendered = ", ".join(format_term(t) for t in spec.intruder_knowledge)
            out.append("IntruderKnowledge = {" + rendered + "}")
    if spec.agents or spec.session_counts:
        out.append(_SECTION_SYSTEM)
        if spec.agents:
            out.append(f"Agents = {', '.join(spec.agents)}")
        for role, count in spec.session_counts.items():
            out.append(f"{role} : {count}")
    return "\n".join(out) + "\n"


# --- executability ----------------------------------------------------------


class InexecutabilityError(ProtocolError):
    def __init__(self, role: str, step_index: int, reason: str):
        super().__init__(f"role {role!r} cannot execute step {step_index}: {reason}")
        self.role = role
        self.step_index = step_index


def _with_public_keys(k: intr.KnowledgeSet) -> intr.KnowledgeSet:
    # knowing an agent is enough to fetch its public key from the directory
    extra = {PubKey(t.name) for t in k.terms if isinstance(t, AgentName)}
    if extra <= k.terms:
        return k
    return intr.analz_close(intr.KnowledgeSet(k.terms | extra))


def check_executability(spec: ProtocolSpec) -> ProtocolSpec:
    """Replay each role; every sent message must be constructible.

    A role starts with its own name, its private key, the agent variables the
    environment hands it, and the fresh values it owns. Receiving a message
    adds that message (and whatever analysis opens) to the role's knowledge;
    public keys of known agents are always available. Sending requires the
    receiver's identity to be known and the full pattern to be synthesizable.
    """
    for role in spec.roles:
        base = {AgentName(role), PrivKey(role)}
        for peer in spec.env_peers(role):
            base.add(AgentName(peer))
        for var, (owner, _step) in spec.fresh_owner.items():
            if owner == role:
                sort = spec.free_variables[var]
                base.add(Nonce(var) if sort == SORT_NONCE else SymKey(var))
        know = intr.analz_close(intr.knowledge(base))
        for step in spec.steps:
            if step.sender == role:
                avail = _with_public_keys(know)
                if AgentName(step.receiver) not in avail.terms:
                    raise InexecutabilityError(
                        role, step.index, f"receiver {step.receiver!r} is not known at this point"
                    )
                if not intr.can_synthesize(avail, step.pattern):
                    raise InexecutabilityError(
                        role, step.index, f"cannot construct {format_term(step.pattern)}"
                    )
            elif step.receiver == role:
                know = intr.observe(know, step.pattern)
    return spec
