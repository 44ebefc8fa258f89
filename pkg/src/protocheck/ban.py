"""Belief-logic derivation engine.

Works on an already-idealized protocol: each message is a belief formula
(typically an encrypted conjunction), and the analysis asks what each
principal is entitled to believe after receiving it, starting from an
explicit assumption list. Idealization itself is left to the person writing
the input file; it is a judgment call no algorithm should hide.

Surface syntax (one construct per line, `--` comments):

    P |= X        P believes X
    P |~ X        P once said X
    P <| X        P sees X
    P => X        P has jurisdiction over X (written parenthesized as a body)
    #(X)          X is fresh
    {X, Y}K       X, Y encrypted under key K
    A <-K-> B     K is a good key for A and B

Input files have four sections: #Assumptions (numbered groups, formulas
separated by `;`), #Protocol (numbered `P -> Q : formula` steps), #Goals,
and #Unjustified (assumption group numbers the modeller cannot defend).

The engine saturates: every received message seeds a Sees fact, then the
rules (message meaning, nonce verification, jurisdiction, plus conjunction
handling inside beliefs) run to a fixed point. Derivations are recorded as
trees whose leaves are assumptions and receipts, so every conclusion can be
replayed rule by rule.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Sequence, Union


class BanError(ValueError):
    pass


class BanParseError(BanError):
    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class RuleError(BanError):
    """A rule was applied to premises it does not match."""


# --- formulas ----------------------------------------------------------------


@dataclass(frozen=True)
class Sym:
    name: str


@dataclass(frozen=True)
class GoodKey:
    key: str
    p: str
    q: str

    def __post_init__(self):
        if self.q < self.p:  # endpoints are unordered
            p, q = self.q, self.p
            object.__setattr__(self, "p", p)
            object.__setattr__(self, "q", q)

    def other(self, principal: str) -> Optional[str]:
        if principal == self.p:
            return self.q
        if principal == self.q:
            return self.p
        return None


@dataclass(frozen=True)
class Fresh:
    body: "Formula"


@dataclass(frozen=True)
class EncryptedWith:
    body: "Formula"
    key: str


@dataclass(frozen=True)
class Conjunction:
    items: tuple

    def __post_init__(self):
        if len(self.items) < 2:
            raise BanError("a conjunction needs at least two items")


@dataclass(frozen=True)
class Believes:
    p: str
    body: "Formula"


@dataclass(frozen=True)
class OnceSaid:
    p: str
    body: "Formula"


@dataclass(frozen=True)
class Sees:
    p: str
    body: "Formula"


@dataclass(frozen=True)
class Jurisdiction:
    p: str
    body: "Formula"


Formula = Union[
    Sym, GoodKey, Fresh, EncryptedWith, Conjunction,
    Believes, OnceSaid, Sees, Jurisdiction,
]

_MODAL = {Believes: "|=", OnceSaid: "|~", Sees: "<|", Jurisdiction: "=>"}


def conj(items: Sequence[Formula]) -> Formula:
    flat: list = []
    for item in items:
        if isinstance(item, Conjunction):
            flat.extend(item.items)
        else:
            flat.append(item)
    if not flat:
        raise BanError("empty conjunction")
    return flat[0] if len(flat) == 1 else Conjunction(tuple(flat))


def conj_items(f: Formula) -> tuple:
    return f.items if isinstance(f, Conjunction) else (f,)


def render_formula(f: Formula) -> str:
    if isinstance(f, Sym):
        return f.name
    if isinstance(f, GoodKey):
        return f"{f.p} <-{f.key}-> {f.q}"
    if isinstance(f, Fresh):
        return f"#({_render_bare(f.body)})"
    if isinstance(f, EncryptedWith):
        return f"{{{_render_bare(f.body)}}}{f.key}"
    if isinstance(f, Conjunction):
        return f"({_render_bare(f)})"
    op = _MODAL[type(f)]
    return f"{f.p} {op} {_render_body(f.body)}"


def _render_bare(f: Formula) -> str:
    # comma list without surrounding parens, for brace/hash interiors
    if isinstance(f, Conjunction):
        return ", ".join(_render_body(i) for i in f.items)
    return _render_body(f)


def _render_body(f: Formula) -> str:
    if isinstance(f, (Jurisdiction, Conjunction)):
        return f"({render_formula(f) if not isinstance(f, Conjunction) else _render_bare(f)})"
    return render_formula(f)


def subformulas(f: Formula):
    yield f
    if isinstance(f, (Fresh, EncryptedWith, Believes, OnceSaid, Sees, Jurisdiction)):
        yield from subformulas(f.body)
    elif isinstance(f, Conjunction):
        for item in f.items:
            yield from subformulas(item)


def principals_of(f: Formula):
    if isinstance(f, GoodKey):
        yield f.p
        yield f.q
    elif isinstance(f, (Believes, OnceSaid, Sees, Jurisdiction)):
        yield f.p
        yield from principals_of(f.body)
    elif isinstance(f, (Fresh, EncryptedWith)):
        yield from principals_of(f.body)
    elif isinstance(f, Conjunction):
        for item in f.items:
            yield from principals_of(item)


# --- parsing -----------------------------------------------------------------

_TOKEN = re.compile(r"\s*(\|=|\|~|<\||=>|<-|->|[#{}(),;:.]|[A-Za-z_][A-Za-z0-9_]*)")


def _tokenize(text: str, line: int) -> list:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            if text[pos:].strip():
                raise BanParseError(f"unexpected character {text[pos:].strip()[0]!r}", line)
            break
        tokens.append(m.group(1))
        pos = m.end()
    return tokens


class _FormulaParser:
    def __init__(self, tokens: list, line: int):
        self.tokens = tokens
        self.i = 0
        self.line = line

    def peek(self) -> Optional[str]:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def next(self) -> str:
        tok = self.peek()
        if tok is None:
            raise BanParseError("unexpected end of formula", self.line)
        self.i += 1
        return tok

    def expect(self, tok: str):
        got = self.next()
        if got != tok:
            raise BanParseError(f"expected {tok!r}, found {got!r}", self.line)

    def at_end(self) -> bool:
        return self.i >= len(self.tokens)

    def formula(self) -> Formula:
        if self._is_ident(self.peek()) and self.i + 1 < len(self.tokens):
            nxt = self.tokens[self.i + 1]
            if nxt in ("|=", "|~", "<|", "=>"):
                principal = self.next()
                op = self.next()
                body = self.formula()
                cls = {"|=": Believes, "|~": OnceSaid, "<|": Sees, "=>": Jurisdiction}[op]
                return cls(principal, body)
        return self.unit()

    def unit(self) -> Formula:
        tok = self.peek()
        if tok == "(":
            self.next()
            inner = self.conjunction()
            self.expect(")")
            return inner
        if tok == "#":
            self.next()
            self.expect("(")
            inner = self.conjunction()
            self.expect(")")
            return Fresh(inner)
        if tok == "{":
            self.next()
            inner = self.conjunction()
            self.expect("}")
            key = self.next()
            if not self._is_ident(key):
                raise BanParseError(f"expected a key name after '}}', found {key!r}", self.line)
            return EncryptedWith(inner, key)
        if self._is_ident(tok):
            name = self.next()
            if self.peek() == "<-":
                self.next()
                key = self.next()
                if not self._is_ident(key):
                    raise BanParseError(f"expected a key name in <-K->, found {key!r}", self.line)
                self.expect("->")
                other = self.next()
                if not self._is_ident(other):
                    raise BanParseError(f"expected a principal after ->, found {other!r}", self.line)
                return GoodKey(key, name, other)
            return Sym(name)
        raise BanParseError(f"cannot start a formula with {tok!r}", self.line)

    def conjunction(self) -> Formula:
        items = [self.formula()]
        while self.peek() == ",":
            self.next()
            items.append(self.formula())
        return conj(items)

    @staticmethod
    def _is_ident(tok: Optional[str]) -> bool:
        return tok is not None and re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", tok) is not None


def parse_formula(text: str, line: int = 0) -> Formula:
    parser = _FormulaParser(_tokenize(text, line), line)
    f = parser.formula()
    if not parser.at_end():
        raise BanParseError(f"trailing input after formula: {parser.peek()!r}", line)
    return f


@dataclass(frozen=True)
class AssumptionGroup:
    index: int
    formulas: tuple


@dataclass(frozen=True)
class IdealizedStep:
    index: int
    sender: str
    receiver: str
    content: Formula


@dataclass(frozen=True)
class BeliefSpec:
    assumptions: tuple
    steps: tuple
    goals: tuple
    unjustified: tuple
    principals: frozenset


_SECTIONS = ("#Assumptions", "#Protocol", "#Goals", "#Unjustified")


def parse_belief_file(text: str) -> BeliefSpec:
    sections: dict = {name: [] for name in _SECTIONS}
    seen: set = set()
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("--", 1)[0].strip()
        if not line:
            continue
        if line.startswith("#"):
            if line not in sections:
                raise BanParseError(f"unknown section header {line!r}", lineno)
            if line in seen:
                raise BanParseError(f"duplicate section {line!r}", lineno)
            seen.add(line)
            current = line
            continue
        if current is None:
            raise BanParseError("content before the first section header", lineno)
        sections[current].append((lineno, line))
    for required in ("#Assumptions", "#Protocol"):
        if required not in seen:
            raise BanParseError(f"no {required} section")

    assumptions = []
    for lineno, line in sections["#Assumptions"]:
        m = re.match(r"(\d+)\.\s*(.*)$", line)
        if not m:
            raise BanParseError("assumption lines look like 'N. formula; formula'", lineno)
        index = int(m.group(1))
        if any(g.index == index for g in assumptions):
            raise BanParseError(f"duplicate assumption number {index}", lineno)
        formulas = tuple(
            parse_formula(part.strip(), lineno)
            for part in m.group(2).split(";") if part.strip()
        )
        if not formulas:
            raise BanParseError(f"assumption {index} has no formulas", lineno)
        assumptions.append(AssumptionGroup(index, formulas))

    steps = []
    for lineno, line in sections["#Protocol"]:
        m = re.match(r"(\d+)\.\s*([A-Za-z_][A-Za-z0-9_]*)\s*->\s*([A-Za-z_][A-Za-z0-9_]*)\s*:\s*(.*)$", line)
        if not m:
            raise BanParseError("protocol lines look like 'N. P -> Q : formula'", lineno)
        steps.append(IdealizedStep(
            int(m.group(1)), m.group(2), m.group(3), parse_formula(m.group(4), lineno),
        ))

    goals = tuple(parse_formula(line, lineno) for lineno, line in sections["#Goals"])

    unjustified = []
    for lineno, line in sections["#Unjustified"]:
        for part in re.split(r"[,\s]+", line):
            if not part:
                continue
            if not part.isdigit():
                raise BanParseError(f"unjustified entries are assumption numbers, found {part!r}", lineno)
            n = int(part)
            if not any(g.index == n for g in assumptions):
                raise BanParseError(f"unjustified references unknown assumption {n}", lineno)
            unjustified.append(n)

    principals: set = set()
    for group in assumptions:
        for f in group.formulas:
            principals.update(principals_of(f))
    for step in steps:
        principals.add(step.sender)
        principals.add(step.receiver)
        principals.update(principals_of(step.content))

    return BeliefSpec(
        assumptions=tuple(assumptions),
        steps=tuple(steps),
        goals=goals,
        unjustified=tuple(sorted(set(unjustified))),
        principals=frozenset(principals),
    )


def parse_belief_path(path) -> BeliefSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_belief_file(fh.read())


# --- rules -------------------------------------------------------------------


@dataclass(frozen=True)
class Derivation:
    conclusion: Formula
    rule: str
    premises: tuple = ()
    ref: Optional[int] = None  # assumption group / protocol step number

    def leaf_assumptions(self) -> frozenset:
        if self.rule == "assumption":
            return frozenset({self.ref})
        out: frozenset = frozenset()
        for p in self.premises:
            out |= p.leaf_assumptions()
        return out

    def render(self, indent: int = 0) -> str:
        tag = self.rule if self.ref is None else f"{self.rule} {self.ref}"
        lines = ["  " * indent + f"{render_formula(self.conclusion)}  [{tag}]"]
        for p in self.premises:
            lines.append(p.render(indent + 1))
        return "\n".join(lines)


def receive(step: IdealizedStep) -> Derivation:
    return Derivation(Sees(step.receiver, step.content), "receive", (), step.index)


def message_meaning(sees: Derivation, key_belief: Derivation) -> Derivation:
    s, kb = sees.conclusion, key_belief.conclusion
    if not (isinstance(s, Sees) and isinstance(s.body, EncryptedWith)):
        raise RuleError("message meaning needs a seen encryption")
    if not (isinstance(kb, Believes) and isinstance(kb.body, GoodKey)):
        raise RuleError("message meaning needs a good-key belief")
    if kb.p != s.p:
        raise RuleError("the key belief must belong to the principal that saw the message")
    if kb.body.key != s.body.key:
        raise RuleError(
            f"key mismatch: saw {{...}}{s.body.key} but believes in {kb.body.key}"
        )
    other = kb.body.other(s.p)
    if other is None:
        raise RuleError(f"{s.p} is not an endpoint of {render_formula(kb.body)}")
    return Derivation(
        Believes(s.p, OnceSaid(other, s.body.body)), "message meaning", (sees, key_belief),
    )


def nonce_verification(said: Derivation, fresh: Derivation) -> Derivation:
    sd, fr = said.conclusion, fresh.conclusion
    if not (isinstance(sd, Believes) and isinstance(sd.body, OnceSaid)):
        raise RuleError("nonce verification needs a once-said belief")
    if not (isinstance(fr, Believes) and isinstance(fr.body, Fresh)):
        raise RuleError("nonce verification needs a freshness belief")
    if fr.p != sd.p:
        raise RuleError("both premises must belong to the same principal")
    content = sd.body.body
    component = fr.body.body
    if component != content and component not in conj_items(content):
        raise RuleError("the freshness belief covers no component of the said content")
    return Derivation(
        Believes(sd.p, Believes(sd.body.p, content)), "nonce verification", (said, fresh),
    )


def jurisdiction(juris: Derivation, belief: Derivation) -> Derivation:
    ju, be = juris.conclusion, belief.conclusion
    if not (isinstance(ju, Believes) and isinstance(ju.body, Jurisdiction)):
        raise RuleError("jurisdiction needs a believed jurisdiction statement")
    if not (isinstance(be, Believes) and isinstance(be.body, Believes)):
        raise RuleError("jurisdiction needs a nested belief")
    if ju.p != be.p or ju.body.p != be.body.p or ju.body.body != be.body.body:
        raise RuleError("jurisdiction premises do not line up")
    return Derivation(Believes(ju.p, ju.body.body), "jurisdiction", (juris, belief))


_RULES_WITH_TWO_PREMISES = {
    "message meaning": message_meaning,
    "nonce verification": nonce_verification,
    "jurisdiction": jurisdiction,
}


def check_derivation(d: Derivation) -> bool:
    """Replay one node: do the premises really yield the conclusion?"""
    for p in d.premises:
        if not check_derivation(p):
            return False
    if d.rule in ("assumption", "receive"):
        return not d.premises
    if d.rule in _RULES_WITH_TWO_PREMISES:
        if len(d.premises) != 2:
            return False
        try:
            redone = _RULES_WITH_TWO_PREMISES[d.rule](*d.premises)
        except RuleError:
            return False
        return redone.conclusion == d.conclusion
    if d.rule == "sees conjunction":
        (p,) = d.premises
        src = p.conclusion
        return (
            isinstance(src, Sees) and isinstance(src.body, Conjunction)
            and isinstance(d.conclusion, Sees) and d.conclusion.p == src.p
            and d.conclusion.body in src.body.items
        )
    if d.rule == "sees decryption":
        src, kb = (p.conclusion for p in d.premises)
        return (
            isinstance(src, Sees) and isinstance(src.body, EncryptedWith)
            and isinstance(kb, Believes) and isinstance(kb.body, GoodKey)
            and kb.p == src.p and kb.body.key == src.body.key
            and kb.body.other(src.p) is not None
            and d.conclusion == Sees(src.p, src.body.body)
        )
    if d.rule == "conjunction elimination":
        (p,) = d.premises
        return d.conclusion in _elim_conclusions(p.conclusion)
    if d.rule == "conjunction introduction":
        if not (isinstance(d.conclusion, Believes) and isinstance(d.conclusion.body, Conjunction)):
            return False
        got = tuple(p.conclusion for p in d.premises)
        want = tuple(Believes(d.conclusion.p, i) for i in d.conclusion.body.items)
        return got == want
    return False


def _elim_conclusions(f: Formula) -> list:
    """Belief-wrapped conjunction components: P |= ... |= (X, Y) gives both."""
    chain = []
    cur = f
    while isinstance(cur, Believes):
        chain.append(cur.p)
        cur = cur.body
    out = []
    if chain and isinstance(cur, Conjunction):
        for item in cur.items:
            g = item
            for p in reversed(chain):
                g = Believes(p, g)
            out.append(g)
    return out


# --- saturation --------------------------------------------------------------


@dataclass
class SaturationResult:
    derivations: dict  # Formula -> Derivation, insertion-ordered
    principals: frozenset
    closure_size: int
    bound: int

    def derived(self) -> frozenset:
        return frozenset(self.derivations)

    def __contains__(self, f: Formula) -> bool:
        return f in self.derivations


def saturate(
    assumptions: Sequence[AssumptionGroup],
    steps: Sequence[IdealizedStep],
    goals: Sequence[Formula] = (),
) -> SaturationResult:
    """Fixed-point closure with a fixed rule order, one receipt at a time.

    The first derivation found for a formula is kept, so with the fixed
    agenda order the returned trees are reproducible; the derived set itself
    does not depend on any ordering.
    """
    principals: set = set()
    closure: set = set()
    for group in assumptions:
        for f in group.formulas:
            principals.update(principals_of(f))
            closure.update(subformulas(f))
    for step in steps:
        principals.add(step.sender)
        principals.add(step.receiver)
        principals.update(principals_of(step.content))
        closure.update(subformulas(step.content))
    for g in goals:
        principals.update(principals_of(g))
        closure.update(subformulas(g))
    closure |= {Fresh(f) for f in list(closure)}
    conjunctions = [f for f in closure if isinstance(f, Conjunction)]
    conjunctions.sort(key=render_formula)
    bound = len(closure) * max(1, len(principals)) ** 2

    derivations: dict = {}
    agenda: list = []

    def add(d: Derivation):
        if d.conclusion in derivations:
            return
        derivations[d.conclusion] = d
        agenda.append(d)
        assert len(derivations) <= bound, "saturation escaped the structural bound"

    def others(predicate):
        return [d for d in list(derivations.values()) if predicate(d.conclusion)]

    def process(d: Derivation):
        f = d.conclusion
        # seeing a conjunction / through believed-good encryption
        if isinstance(f, Sees):
            if isinstance(f.body, Conjunction):
                for item in f.body.items:
                    add(Derivation(Sees(f.p, item), "sees conjunction", (d,)))
            if isinstance(f.body, EncryptedWith):
                for kb in others(lambda c: isinstance(c, Believes) and isinstance(c.body, GoodKey)
                                 and c.p == f.p and c.body.key == f.body.key
                                 and c.body.other(f.p) is not None):
                    add(Derivation(Sees(f.p, f.body.body), "sees decryption", (d, kb)))
                    add(message_meaning(d, kb))
        if isinstance(f, Believes) and isinstance(f.body, GoodKey):
            for sd in others(lambda c: isinstance(c, Sees) and isinstance(c.body, EncryptedWith)
                             and c.p == f.p and c.body.key == f.body.key):
                if f.body.other(f.p) is None:
                    continue
                add(Derivation(Sees(f.p, sd.body.body), "sees decryption", (sd, d)))
                add(message_meaning(sd, d))
        # nonce verification, from either side
        if isinstance(f, Believes) and isinstance(f.body, OnceSaid):
            content = f.body.body
            pieces = {content, *conj_items(content)}
            for fr in others(lambda c: isinstance(c, Believes) and isinstance(c.body, Fresh)
                             and c.p == f.p and c.body.body in pieces):
                add(nonce_verification(d, fr))
        if isinstance(f, Believes) and isinstance(f.body, Fresh):
            component = f.body.body
            for sd in others(lambda c: isinstance(c, Believes) and isinstance(c.body, OnceSaid)
                             and c.p == f.p
                             and (c.body.body == component or component in conj_items(c.body.body))):
                add(nonce_verification(sd, d))
        # jurisdiction, from either side
        if isinstance(f, Believes) and isinstance(f.body, Jurisdiction):
            for be in others(lambda c: isinstance(c, Believes) and isinstance(c.body, Believes)
                             and c.p == f.p and c.body.p == f.body.p
                             and c.body.body == f.body.body):
                add(jurisdiction(d, be))
        if isinstance(f, Believes) and isinstance(f.body, Believes):
            for ju in others(lambda c: isinstance(c, Believes) and isinstance(c.body, Jurisdiction)
                             and c.p == f.p and c.body.p == f.body.p
                             and c.body.body == f.body.body):
                add(jurisdiction(ju, d))
        # conjunctions inside beliefs
        for g in _elim_conclusions(f):
            add(Derivation(g, "conjunction elimination", (d,)))
        if isinstance(f, Believes):
            for c in conjunctions:
                if f.body in c.items:
                    needed = [Believes(f.p, i) for i in c.items]
                    if all(n in derivations for n in needed):
                        add(Derivation(
                            Believes(f.p, c), "conjunction introduction",
                            tuple(derivations[n] for n in needed),
                        ))

    def run_agenda():
        while agenda:
            process(agenda.pop(0))

    for group in assumptions:
        for f in group.formulas:
            add(Derivation(f, "assumption", (), group.index))
    run_agenda()
    for step in sorted(steps, key=lambda s: s.index):
        add(receive(step))
        run_agenda()

    return SaturationResult(derivations, frozenset(principals), len(closure), bound)


def saturate_spec(spec: BeliefSpec) -> SaturationResult:
    return saturate(spec.assumptions, spec.steps, spec.goals)


# --- goal audit --------------------------------------------------------------


@dataclass(frozen=True)
class GoalStatus:
    goal: Formula
    derivable: bool
    assumptions: tuple  # minimal assumption-group indices, () if underivable
    flagged: bool
    citing: tuple  # unjustified groups this goal cannot do without
    derivation: Optional[Derivation]

    def verdict(self) -> str:
        if not self.derivable:
            return "not derivable"
        if self.flagged:
            cited = ", ".join(str(c) for c in self.citing)
            return f"derivable, but only via unjustified assumption {cited}"
        return "derivable"


@dataclass(frozen=True)
class GoalReport:
    statuses: tuple
    unjustified: tuple

    @property
    def any_flagged(self) -> bool:
        return any(s.flagged for s in self.statuses)

    @property
    def all_derivable(self) -> bool:
        return all(s.derivable for s in self.statuses)


def _derivable_with(spec: BeliefSpec, groups: frozenset, goal: Formula) -> bool:
    kept = tuple(g for g in spec.assumptions if g.index in groups)
    return goal in saturate(kept, spec.steps, spec.goals)


def minimal_assumptions(spec: BeliefSpec, goal: Formula, start: frozenset) -> tuple:
    """Shrink an assumption set to an irredundant one that still derives the goal.

    Each candidate removal is validated by re-running saturation, so the
    result is correct by construction, not by trusting any single tree.
    """
    current = set(start)
    for g in sorted(start):
        trial = frozenset(current - {g})
        if g in current and _derivable_with(spec, trial, goal):
            current -= {g}
    return tuple(sorted(current))


def audit_goals(spec: BeliefSpec, result: Optional[SaturationResult] = None) -> GoalReport:
    """Per-goal derivability, minimal assumption sets, and unjustified flags.

    A goal is flagged when it derives from the full assumption list but not
    after the #Unjustified groups are removed: the guarantee exists on paper
    only. `citing` names each unjustified group whose removal alone breaks
    the goal.
    """
    result = result or saturate_spec(spec)
    all_groups = frozenset(g.index for g in spec.assumptions)
    unjustified = frozenset(spec.unjustified)
    statuses = []
    for goal in spec.goals:
        d = result.derivations.get(goal)
        if d is None:
            statuses.append(GoalStatus(goal, False, (), False, (), None))
            continue
        minimal = minimal_assumptions(spec, goal, frozenset(d.leaf_assumptions()))
        flagged = unjustified and not _derivable_with(spec, all_groups - unjustified, goal)
        citing = tuple(
            sorted(
                g for g in unjustified
                if not _derivable_with(spec, all_groups - {g}, goal)
            )
        ) if flagged else ()
        statuses.append(GoalStatus(goal, True, minimal, bool(flagged), citing, d))
    return GoalReport(tuple(statuses), tuple(sorted(unjustified)))
