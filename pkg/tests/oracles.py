"""Independent reference implementations used to cross-check the engines.

Deliberately written in a different style from the package code: naive
whole-set rescans instead of worklists and indexes, bottom-up fixpoints
instead of memoized recursion. Slow is fine; these exist to disagree with
the real code whenever the real code is wrong.
"""

from __future__ import annotations

import itertools

from protocheck.terms import (
    AgentName,
    AsymEnc,
    Nonce,
    Pair,
    PrivKey,
    PubKey,
    SymEnc,
    SymKey,
    dual,
    full_subterms,
    is_key,
    normalize,
)


def closure_oracle(terms) -> frozenset:
    """Decomposition closure by repeated full rescans."""
    known = {normalize(t) for t in terms}
    changed = True
    while changed:
        changed = False
        for t in list(known):
            found = []
            if isinstance(t, Pair):
                found = [t.left, t.right]
            elif isinstance(t, SymEnc) and t.key in known:
                found = [t.payload]
            elif isinstance(t, AsymEnc) and dual(t.key) in known:
                found = [t.payload]
            for f in found:
                if f not in known:
                    known.add(f)
                    changed = True
    return frozenset(known)


def synthesis_oracle(closed, target) -> bool:
    """Bottom-up: grow the set of buildable terms inside the combined
    subterm universe until the target appears or nothing changes."""
    closed = {normalize(t) for t in closed}
    target = normalize(target)
    universe = set()
    for t in closed | {target}:
        universe |= full_subterms(t)
    buildable = set(u for u in universe if u in closed)
    changed = True
    while changed:
        changed = False
        for u in universe:
            if u in buildable:
                continue
            ok = False
            if isinstance(u, Pair):
                ok = u.left in buildable and u.right in buildable
            elif isinstance(u, (SymEnc, AsymEnc)):
                ok = u.key in buildable and u.payload in buildable
            if ok:
                buildable.add(u)
                changed = True
    return target in buildable


def term_depth(t) -> int:
    if isinstance(t, Pair):
        return 1 + max(term_depth(t.left), term_depth(t.right))
    if isinstance(t, (SymEnc, AsymEnc)):
        return 1 + max(term_depth(t.key), term_depth(t.payload))
    return 0


def enumerate_terms(atoms, max_depth) -> list:
    """Every canonical term over the given atoms up to the given depth.

    Canonical means pairs are right-associated (no pair in a left slot),
    exactly the shape `normalize` produces, so the count is of distinct
    normal forms.
    """
    by_depth = {0: list(atoms)}
    all_terms = list(atoms)
    for depth in range(1, max_depth + 1):
        fresh = []
        shallower = [t for d in range(depth) for t in by_depth[d]]
        exact = by_depth[depth - 1]
        # pairs: left is a non-pair; at least one side of exact depth-1
        lefts = [t for t in shallower if not isinstance(t, Pair)]
        for left in lefts:
            for right in shallower:
                if max(term_depth(left), term_depth(right)) == depth - 1:
                    fresh.append(Pair(left, right))
        # encryptions: any key at all, payload from shallower terms
        sym_keys = [t for t in shallower if isinstance(t, SymKey)]
        asym_keys = [t for t in shallower if isinstance(t, (PubKey, PrivKey))]
        for payload in shallower:
            for k in sym_keys:
                if max(term_depth(payload), term_depth(k)) == depth - 1:
                    fresh.append(SymEnc(k, payload))
            for k in asym_keys:
                if max(term_depth(payload), term_depth(k)) == depth - 1:
                    fresh.append(AsymEnc(k, payload))
        by_depth[depth] = fresh
        all_terms.extend(fresh)
    assert len(set(all_terms)) == len(all_terms)
    return all_terms


def all_subsets(items, max_size):
    for size in range(max_size + 1):
        yield from itertools.combinations(items, size)


def naive_subterm(t, m) -> bool:
    """Key-stopping containment, written as bare recursion."""
    if t == m:
        return True
    if isinstance(m, Pair):
        return naive_subterm(t, m.left) or naive_subterm(t, m.right)
    if isinstance(m, (SymEnc, AsymEnc)):
        return naive_subterm(t, m.payload)
    return False
