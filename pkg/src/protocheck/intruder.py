"""Network attacker knowledge: what it can take apart and what it can build.

The attacker records every message that crosses the network. Analysis closes
that record downward: pairs split, and an encryption opens exactly when the
closure already holds the decryption key (the dual for asymmetric keys, the
key itself for symmetric ones). Synthesis is checked top-down against a
closed set: a term is constructible when it is held verbatim, or when its
components and the encryption key are all constructible.
"""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .terms import AsymEnc, Pair, SymEnc, Term, dual, normalize


@dataclass(frozen=True, slots=True)
class KnowledgeSet:
    """An immutable set of terms plus a flag that the set is analysis-closed."""

    terms: frozenset
    analyzed: bool = False
    _hash: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash(self.terms))

    def __hash__(self):
        return self._hash

    def __contains__(self, t: Term) -> bool:
        return t in self.terms

    def __len__(self) -> int:
        return len(self.terms)


def knowledge(terms: Iterable[Term]) -> KnowledgeSet:
    """Build an unanalyzed knowledge set from normalized copies of terms."""
    return KnowledgeSet(frozenset(normalize(t) for t in terms), analyzed=False)


def analz_close(k: KnowledgeSet) -> KnowledgeSet:
    """Least fixed point of the decomposition rules.

    Worklist with a blocked-ciphertext index: an encryption whose decryption
    key is not yet known parks its payload under that key, and the payload is
    released the moment the key turns up. Single pass over every term plus
    released payloads, so closure is linear in the closure size.
    """
    if k.analyzed:
        return k
    known: set = set()
    blocked: dict = defaultdict(list)
    queue: deque = deque()

    def add(t: Term):
        if t not in known:
            known.add(t)
            queue.append(t)

    for t in k.terms:
        add(t)
    while queue:
        t = queue.popleft()
        if isinstance(t, Pair):
            add(t.left)
            add(t.right)
        elif isinstance(t, SymEnc):
            if t.key in known:
                add(t.payload)
            else:
                blocked[t.key].append(t.payload)
        elif isinstance(t, AsymEnc):
            need = dual(t.key)
            if need in known:
                add(t.payload)
            else:
                blocked[need].append(t.payload)
        if t in blocked:
            for payload in blocked.pop(t):
                add(payload)
    return KnowledgeSet(frozenset(known), analyzed=True)


def can_synthesize(k: KnowledgeSet, t: Term, _memo: Optional[dict] = None) -> bool:
    """Whether a closed knowledge set can construct t.

    Membership short-circuits, so an undecryptable ciphertext held verbatim is
    constructible even though its payload is not.
    """
    if not k.analyzed:
        raise ValueError("can_synthesize needs an analysis-closed knowledge set")
    memo = _memo if _memo is not None else {}

    def can(u: Term) -> bool:
        hit = memo.get(u)
        if hit is not None:
            return hit
        if u in k.terms:
            memo[u] = True
            return True
        if isinstance(u, Pair):
            out = can(u.left) and can(u.right)
        elif isinstance(u, (SymEnc, AsymEnc)):
            out = can(u.key) and can(u.payload)
        else:
            out = False
        memo[u] = out
        return out

    return can(normalize(t))


def observe(k: KnowledgeSet, t: Term) -> KnowledgeSet:
    """Record a message seen on the wire and re-close."""
    t = normalize(t)
    if k.analyzed and t in k.terms:
        return k
    return analz_close(KnowledgeSet(k.terms | {t}, analyzed=False))
