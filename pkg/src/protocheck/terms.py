"""Message terms and the operations the rest of the tool leans on.

Terms are immutable and hash-cached so that knowledge sets and search states
can live in frozensets without re-hashing. Atoms carry a plain string
identifier; compound terms are pairs and encryptions. Pairs normalize to
right-associated spines, so ``(a, b, c)`` always means ``Pair(a, Pair(b, c))``.

The containment relation deliberately does not look inside the key position
of an encryption: ``m`` is contained in ``{m}K``, but ``K`` is only contained
in ``{m}K`` when ``K`` occurs inside ``m`` itself. ``full_subterms`` is the
plain structural walk (keys included) for callers that need every atom.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Optional, Union


class TermError(ValueError):
    """Raised for structurally invalid term constructions or key misuse."""


class TermSyntaxError(TermError):
    """Raised by the term parser; carries a 0-based column offset."""

    def __init__(self, message: str, column: int):
        super().__init__(f"{message} (column {column + 1})")
        self.column = column


@dataclass(frozen=True, slots=True)
class AgentName:
    name: str
    _hash: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash(("agent", self.name)))

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"AgentName({self.name!r})"


@dataclass(frozen=True, slots=True)
class Nonce:
    name: str
    _hash: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash(("nonce", self.name)))

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"Nonce({self.name!r})"


@dataclass(frozen=True, slots=True)
class SymKey:
    name: str
    _hash: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash(("symkey", self.name)))

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"SymKey({self.name!r})"


@dataclass(frozen=True, slots=True)
class PubKey:
    agent: str
    _hash: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash(("pubkey", self.agent)))

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"PubKey({self.agent!r})"


@dataclass(frozen=True, slots=True)
class PrivKey:
    agent: str
    _hash: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash(("privkey", self.agent)))

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"PrivKey({self.agent!r})"


@dataclass(frozen=True, slots=True)
class Pair:
    left: "Term"
    right: "Term"
    _hash: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash(("pair", self.left, self.right)))

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"Pair({self.left!r}, {self.right!r})"


@dataclass(frozen=True, slots=True)
class AsymEnc:
    """Encryption under a public or private key. Decryption needs the dual."""

    key: "Term"
    payload: "Term"
    _hash: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not isinstance(self.key, (PubKey, PrivKey)):
            raise TermError(f"asymmetric encryption key must be PK/SK, got {self.key!r}")
        object.__setattr__(self, "_hash", hash(("aenc", self.key, self.payload)))

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"AsymEnc({self.key!r}, {self.payload!r})"


@dataclass(frozen=True, slots=True)
class SymEnc:
    """Encryption under a shared key; the same key decrypts."""

    key: "Term"
    payload: "Term"
    _hash: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not isinstance(self.key, SymKey):
            raise TermError(f"symmetric encryption key must be a SymKey, got {self.key!r}")
        object.__setattr__(self, "_hash", hash(("senc", self.key, self.payload)))

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"SymEnc({self.key!r}, {self.payload!r})"


Term = Union[AgentName, Nonce, SymKey, PubKey, PrivKey, Pair, AsymEnc, SymEnc]
Atom = (AgentName, Nonce, SymKey, PubKey, PrivKey)
KeyTerm = (SymKey, PubKey, PrivKey)


def is_atom(t: Term) -> bool:
    return isinstance(t, Atom)


def is_key(t: Term) -> bool:
    return isinstance(t, KeyTerm)


def dual(k: Term) -> Term:
    """Decryption key for an encryption key. Symmetric keys are self-dual."""
    if isinstance(k, PubKey):
        return PrivKey(k.agent)
    if isinstance(k, PrivKey):
        return PubKey(k.agent)
    if isinstance(k, SymKey):
        return k
    raise TermError(f"dual() is only defined on keys, got {k!r}")


def pair(*items: Term) -> Term:
    """Right-fold a sequence into a canonical pair spine."""
    if not items:
        raise TermError("pair() needs at least one component")
    out = items[-1]
    for item in reversed(items[:-1]):
        out = Pair(item, out)
    return out


def pair_items(t: Term) -> tuple:
    """Components along the right spine of a pair (the inverse of pair())."""
    items = []
    while isinstance(t, Pair):
        items.append(t.left)
        t = t.right
    items.append(t)
    return tuple(items)


def normalize(t: Term) -> Term:
    """Right-associate every pair spine; idempotent, atom multiset preserved."""
    if is_atom(t):
        return t
    if isinstance(t, Pair):
        left = normalize(t.left)
        right = normalize(t.right)
        if isinstance(left, Pair):
            # rotate ((a, b), c) into (a, (b, c)) until the left is flat
            return normalize(Pair(left.left, Pair(left.right, right)))
        return Pair(left, right)
    if isinstance(t, AsymEnc):
        return AsymEnc(t.key, normalize(t.payload))
    if isinstance(t, SymEnc):
        return SymEnc(t.key, normalize(t.payload))
    raise TermError(f"not a term: {t!r}")


def subterm(m: Term, t: Term) -> bool:
    """Containment that stops at encryption keys.

    m is contained in t when m == t, or t is a pair with m contained in either
    component, or t is an encryption with m contained in the payload. The key
    of an encryption is not searched, so a key is contained in a ciphertext
    only when the payload re-exposes it.
    """
    if m == t:
        return True
    if isinstance(t, Pair):
        return subterm(m, t.left) or subterm(m, t.right)
    if isinstance(t, (AsymEnc, SymEnc)):
        return subterm(m, t.payload)
    return False


def parts(t: Term) -> frozenset:
    """All terms contained in t, per the same key-stopping convention."""
    out = set()
    stack = [t]
    while stack:
        cur = stack.pop()
        if cur in out:
            continue
        out.add(cur)
        if isinstance(cur, Pair):
            stack.append(cur.left)
            stack.append(cur.right)
        elif isinstance(cur, (AsymEnc, SymEnc)):
            stack.append(cur.payload)
    return frozenset(out)


def full_subterms(t: Term) -> frozenset:
    """Structural subterms including encryption keys."""
    out = set()
    stack = [t]
    while stack:
        cur = stack.pop()
        if cur in out:
            continue
        out.add(cur)
        if isinstance(cur, Pair):
            stack.append(cur.left)
            stack.append(cur.right)
        elif isinstance(cur, (AsymEnc, SymEnc)):
            stack.append(cur.key)
            stack.append(cur.payload)
    return frozenset(out)


def atoms_of(t: Term) -> Iterator[Term]:
    """Every atom occurrence in t, keys included, left to right."""
    if is_atom(t):
        yield t
    elif isinstance(t, Pair):
        yield from atoms_of(t.left)
        yield from atoms_of(t.right)
    else:
        yield from atoms_of(t.key)
        yield from atoms_of(t.payload)


def substitute(t: Term, mapping: Mapping[str, str]) -> Term:
    """Rename atom identifiers. Used to instantiate pattern variables."""
    if isinstance(t, AgentName):
        return AgentName(mapping.get(t.name, t.name))
    if isinstance(t, Nonce):
        return Nonce(mapping.get(t.name, t.name))
    if isinstance(t, SymKey):
        return SymKey(mapping.get(t.name, t.name))
    if isinstance(t, PubKey):
        return PubKey(mapping.get(t.agent, t.agent))
    if isinstance(t, PrivKey):
        return PrivKey(mapping.get(t.agent, t.agent))
    if isinstance(t, Pair):
        return Pair(substitute(t.left, mapping), substitute(t.right, mapping))
    if isinstance(t, AsymEnc):
        return AsymEnc(substitute(t.key, mapping), substitute(t.payload, mapping))
    return SymEnc(substitute(t.key, mapping), substitute(t.payload, mapping))


def match(pattern: Term, t: Term, free: frozenset, binding: Optional[dict] = None) -> Optional[dict]:
    """Match a concrete term against a pattern.

    Atom identifiers of the pattern that appear in `free` are variables and
    bind to same-sorted atoms of t; everything else must agree structurally.
    Returns the extended binding dict, or None on mismatch.
    """
    out = dict(binding) if binding else {}

    def walk(p: Term, c: Term) -> bool:
        if type(p) is not type(c):
            return False
        if isinstance(p, (AgentName, Nonce, SymKey)):
            name = p.name
            other = c.name
        elif isinstance(p, (PubKey, PrivKey)):
            name = p.agent
            other = c.agent
        elif isinstance(p, Pair):
            return walk(p.left, c.left) and walk(p.right, c.right)
        else:
            return walk(p.key, c.key) and walk(p.payload, c.payload)
        if name in free:
            if name in out:
                return out[name] == other
            out[name] = other
            return True
        return name == other

    return out if walk(pattern, t) else None


# --- textual syntax ---------------------------------------------------------
#
# Encryptions print as {payload}{PK(B)} / {payload}{SK(B)} and symmetric ones
# as {payload}k; the parser also accepts the unbraced key form {payload}PK(B).
# Pair spines print as comma lists. A bare identifier takes its sort from the
# caller-provided mapping when given, otherwise by convention: a leading
# uppercase letter means an agent, a leading 'k' a symmetric key, anything
# else a nonce.

_TOKEN_RE = re.compile(r"\s*([A-Za-z_][A-Za-z0-9_]*|[{}(),])")

SORT_AGENT = "Agent"
SORT_NONCE = "Nonce"
SORT_PUBLIC_KEY = "PublicKey"
SORT_SYMMETRIC_KEY = "SymmetricKey"


def _tokenize(s: str) -> list[tuple[str, int]]:
    tokens = []
    pos = 0
    while pos < len(s):
        m = _TOKEN_RE.match(s, pos)
        if not m:
            stripped = s[pos:].lstrip()
            if not stripped:
                break
            col = len(s) - len(stripped)
            raise TermSyntaxError(f"unexpected character {stripped[0]!r}", col)
        tokens.append((m.group(1), m.start(1)))
        pos = m.end()
    return tokens


def _atom_for(name: str, sorts: Optional[Mapping[str, str]], column: int) -> Term:
    if sorts is not None and name in sorts:
        sort = sorts[name]
        if sort == SORT_AGENT:
            return AgentName(name)
        if sort == SORT_NONCE:
            return Nonce(name)
        if sort == SORT_SYMMETRIC_KEY:
            return SymKey(name)
        if sort == SORT_PUBLIC_KEY:
            raise TermSyntaxError(
                f"variable {name!r} has sort PublicKey; write PK(<agent>) instead", column
            )
        raise TermSyntaxError(f"variable {name!r} has unknown sort {sort!r}", column)
    if sorts is not None:
        raise TermSyntaxError(f"undeclared identifier {name!r}", column)
    if name[0].isupper():
        return AgentName(name)
    if name.startswith("k"):
        return SymKey(name)
    return Nonce(name)


class _Parser:
    def __init__(self, tokens: list[tuple[str, int]], sorts: Optional[Mapping[str, str]], length: int):
        self.tokens = tokens
        self.sorts = sorts
        self.i = 0
        self.length = length

    def peek(self) -> Optional[str]:
        return self.tokens[self.i][0] if self.i < len(self.tokens) else None

    def col(self) -> int:
        return self.tokens[self.i][1] if self.i < len(self.tokens) else self.length

    def take(self) -> tuple[str, int]:
        if self.i >= len(self.tokens):
            raise TermSyntaxError("unexpected end of input", self.length)
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, want: str):
        tok, col = self.take()
        if tok != want:
            raise TermSyntaxError(f"expected {want!r}, got {tok!r}", col)

    def parse_seq(self) -> Term:
        items = [self.parse_item()]
        while self.peek() == ",":
            self.take()
            items.append(self.parse_item())
        return pair(*items)

    def parse_item(self) -> Term:
        tok = self.peek()
        if tok == "{":
            return self.parse_enc()
        if tok == "(":
            self.take()
            inner = self.parse_seq()
            self.expect(")")
            return inner
        return self.parse_atom()

    def parse_enc(self) -> Term:
        self.expect("{")
        payload = self.parse_seq()
        self.expect("}")
        braced = self.peek() == "{"
        if braced:
            self.take()
        key = self.parse_key_atom()
        if braced:
            self.expect("}")
        if isinstance(key, (PubKey, PrivKey)):
            return AsymEnc(key, payload)
        return SymEnc(key, payload)

    def parse_key_atom(self) -> Term:
        tok, col = self.take()
        if tok in ("PK", "SK") and self.peek() == "(":
            return self._finish_key_pair(tok)
        if not tok.isidentifier():
            raise TermSyntaxError(f"expected a key, got {tok!r}", col)
        atom = _atom_for(tok, self.sorts, col)
        if not isinstance(atom, SymKey):
            raise TermSyntaxError(f"{tok!r} is not usable as an encryption key", col)
        return atom

    def parse_atom(self) -> Term:
        tok, col = self.take()
        if tok in ("PK", "SK") and self.peek() == "(":
            return self._finish_key_pair(tok)
        if not tok.isidentifier():
            raise TermSyntaxError(f"expected a term, got {tok!r}", col)
        return _atom_for(tok, self.sorts, col)

    def _finish_key_pair(self, which: str) -> Term:
        self.expect("(")
        name, ncol = self.take()
        if not name.isidentifier():
            raise TermSyntaxError(f"expected an agent identifier, got {name!r}", ncol)
        if self.sorts is not None:
            if name not in self.sorts:
                raise TermSyntaxError(f"undeclared identifier {name!r}", ncol)
            if self.sorts[name] != SORT_AGENT:
                raise TermSyntaxError(f"key owner {name!r} must be an agent", ncol)
        elif not name[0].isupper():
            raise TermSyntaxError(
                f"key owner {name!r} must be an agent name (leading uppercase)", ncol
            )
        self.expect(")")
        return PubKey(name) if which == "PK" else PrivKey(name)


def parse_term(s: str, sorts: Optional[Mapping[str, str]] = None) -> Term:
    """Parse the textual term syntax.

    When `sorts` is given (identifier -> sort name), bare identifiers must be
    declared there; otherwise the naming convention documented above applies.
    """
    tokens = _tokenize(s)
    if not tokens:
        raise TermSyntaxError("empty term", 0)
    p = _Parser(tokens, sorts, len(s))
    t = p.parse_seq()
    if p.i != len(tokens):
        raise TermSyntaxError(f"trailing input {p.peek()!r}", p.col())
    return t


def format_term(t: Term) -> str:
    """Render a term; parse_term(format_term(t)) == t for normalized terms."""
    if isinstance(t, (AgentName, Nonce, SymKey)):
        return t.name
    if isinstance(t, PubKey):
        return f"PK({t.agent})"
    if isinstance(t, PrivKey):
        return f"SK({t.agent})"
    if isinstance(t, Pair):
        return ", ".join(_format_component(i) for i in pair_items(t))
    if isinstance(t, AsymEnc):
        return "{" + format_term(t.payload) + "}{" + format_term(t.key) + "}"
    if isinstance(t, SymEnc):
        return "{" + format_term(t.payload) + "}" + t.key.name
    raise TermError(f"not a term: {t!r}")


def _format_component(t: Term) -> str:
    # a pair in component position (unnormalized input) needs parentheses
    if isinstance(t, Pair):
        return "(" + format_term(t) + ")"
    return format_term(t)


class KeyTable:
    """Key directory for a set of agents.

    Maps each registered agent to its key pair. Registration is injective by
    construction (keys are derived from the agent identifier); re-registering
    an agent is an error so typos surface early.
    """

    def __init__(self):
        self._agents: dict[str, tuple[PubKey, PrivKey]] = {}

    def register(self, agent: str) -> tuple[PubKey, PrivKey]:
        if agent in self._agents:
            raise TermError(f"agent {agent!r} already has keys")
        entry = (PubKey(agent), PrivKey(agent))
        self._agents[agent] = entry
        return entry

    def public(self, agent: str) -> PubKey:
        return self._lookup(agent)[0]

    def private(self, agent: str) -> PrivKey:
        return self._lookup(agent)[1]

    def _lookup(self, agent: str) -> tuple[PubKey, PrivKey]:
        if agent not in self._agents:
            raise TermError(f"no keys registered for agent {agent!r}")
        return self._agents[agent]

    def agents(self) -> list[str]:
        return sorted(self._agents)

    def __contains__(self, agent: str) -> bool:
        return agent in self._agents


def term_sort_key(t: Term) -> tuple:
    """Stable ordering key for deterministic iteration over terms."""
    return (_TERM_RANK[type(t)], format_term(t))


_TERM_RANK = {
    AgentName: 0,
    Nonce: 1,
    SymKey: 2,
    PubKey: 3,
    PrivKey: 4,
    Pair: 5,
    SymEnc: 6,
    AsymEnc: 7,
}
