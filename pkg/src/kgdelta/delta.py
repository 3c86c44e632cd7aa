"""Deletion/addition sets between consecutive revision graphs, and their replay.

Blank nodes in these graphs only encode unknown ("some") values and each
occurs in exactly one triple, so two triples are treated as equal whenever
their non-blank components agree.  No blank-node matching is attempted.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

from kgdelta.errors import ReplayUnderflow, SortViolation
from kgdelta.model import EntityPage, RevisionMeta
from kgdelta.rdf import BlankNode, Triple, render_term, render_triple, sort_triples

BLANK_PLACEHOLDER = "_:"


def diff_key(t: Triple) -> str:
    """Canonical rendering with every blank node collapsed to one placeholder."""
    s = BLANK_PLACEHOLDER if isinstance(t.subject, BlankNode) else render_term(t.subject)
    o = BLANK_PLACEHOLDER if isinstance(t.object, BlankNode) else render_term(t.object)
    return f"{s} {render_term(t.predicate)} {o} ."


@dataclass(frozen=True)
class IncrementalRevision:
    entity: EntityPage
    meta: RevisionMeta
    deletions: tuple[Triple, ...]
    additions: tuple[Triple, ...]

    @property
    def revision_id(self) -> int:
        return self.meta.revision_id


def _bucket(triples: Iterable[Triple]) -> dict[str, list[Triple]]:
    groups: dict[str, list[Triple]] = defaultdict(list)
    for t in triples:
        groups[diff_key(t)].append(t)
    return groups


def graph_diff(
    previous: Iterable[Triple], current: Iterable[Triple]
) -> tuple[list[Triple], list[Triple]]:
    """Multiset difference over diff keys, in both directions.

    Deletion representatives come from ``previous``, addition representatives
    from ``current``.  Both lists are canonically sorted.
    """
    # identical triples always pair up; only the remainder needs keys
    if isinstance(previous, (set, frozenset)) and isinstance(current, (set, frozenset)):
        prev, curr = _bucket(previous - current), _bucket(current - previous)
    else:
        before, after = Counter(previous), Counter(current)
        common = before & after
        prev, curr = _bucket((before - common).elements()), _bucket((after - common).elements())
    deletions: list[Triple] = []
    additions: list[Triple] = []
    for key, olds in prev.items():
        surplus = len(olds) - len(curr.get(key, ()))
        if surplus > 0:
            deletions.extend(sort_triples(olds)[:surplus])
    for key, news in curr.items():
        surplus = len(news) - len(prev.get(key, ()))
        if surplus > 0:
            additions.extend(sort_triples(news)[:surplus])
    return sort_triples(deletions), sort_triples(additions)


def make_incremental(
    entity: EntityPage,
    meta: RevisionMeta,
    previous: Iterable[Triple],
    current: Iterable[Triple],
) -> IncrementalRevision:
    deletions, additions = graph_diff(previous, current)
    return IncrementalRevision(entity, meta, tuple(deletions), tuple(additions))


class GraphState:
    """A graph under replay, indexed by diff key.

    Within a key group the blank-node labels held here may differ from the
    ones in the original graph; only the group sizes are authoritative.
    """

    def __init__(self) -> None:
        self._groups: dict[str, list[Triple]] = defaultdict(list)
        self._relabeled = 0
        self.last_revision_id: int | None = None

    def apply(self, delta: IncrementalRevision) -> None:
        if self.last_revision_id is not None and delta.revision_id <= self.last_revision_id:
            raise SortViolation(str(delta.entity.entity_id), delta.revision_id)
        self.last_revision_id = delta.revision_id
        for t in delta.deletions:
            key = diff_key(t)
            group = self._groups.get(key)
            if not group:
                raise ReplayUnderflow(delta.revision_id, render_triple(t))
            if t in group:
                group.remove(t)
            else:
                group.pop()
            if not group:
                del self._groups[key]
        for t in delta.additions:
            group = self._groups[diff_key(t)]
            if t in group:
                # a stale representative carries this label; give it a fresh one
                group[group.index(t)] = self._relabel(t)
            group.append(t)

    def _relabel(self, t: Triple) -> Triple:
        self._relabeled += 1
        suffix = f"r{self._relabeled}"
        s = BlankNode(t.subject.label + suffix) if isinstance(t.subject, BlankNode) else t.subject
        o = BlankNode(t.object.label + suffix) if isinstance(t.object, BlankNode) else t.object
        return Triple(s, t.predicate, o)

    def triples(self) -> set[Triple]:
        return {t for group in self._groups.values() for t in group}

    def __len__(self) -> int:
        return sum(len(g) for g in self._groups.values())


def replay(deltas: Sequence[IncrementalRevision] | Iterable[IncrementalRevision]) -> set[Triple]:
    """Fold the deltas of one entity, starting from the empty graph."""
    state = GraphState()
    for delta in deltas:
        state.apply(delta)
    return state.triples()
