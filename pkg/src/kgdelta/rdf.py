"""RDF terms, canonical N-Triples rendering, and the revision-to-graph mapping."""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional, Union
from urllib.parse import quote

from kgdelta.model import (
    RDF_LANGSTRING,
    XSD_DATETIME,
    XSD_STRING,
    EntityId,
    EntityValue,
    ForeignEntityValue,
    FullContent,
    LiteralValue,
    NoValue,
    Rank,
    RedirectContent,
    RevisionContent,
    Snak,
    SnakValue,
    SomeValue,
    Statement,
)

PREFIXES: dict[str, str] = {
    "wd": "http://www.wikidata.org/entity/",
    "wdt": "http://www.wikidata.org/prop/direct/",
    "p": "http://www.wikidata.org/prop/",
    "ps": "http://www.wikidata.org/prop/statement/",
    "pq": "http://www.wikidata.org/prop/qualifier/",
    "pr": "http://www.wikidata.org/prop/reference/",
    "s": "http://www.wikidata.org/entity/statement/",
    "ref": "http://www.wikidata.org/reference/",
    "wdno": "http://www.wikidata.org/prop/novalue/",
    "wikibase": "http://wikiba.se/ontology#",
    "schema": "http://schema.org/",
    "rdf": "http://www.w3.org/1999/02/22-rdf-syntax-ns#",
    "rdfs": "http://www.w3.org/2000/01/rdf-schema#",
    "skos": "http://www.w3.org/2004/02/skos/core#",
    "prov": "http://www.w3.org/ns/prov#",
    "owl": "http://www.w3.org/2002/07/owl#",
    "xsd": "http://www.w3.org/2001/XMLSchema#",
}


# -- terms -------------------------------------------------------------------

_BNODE_LABEL_RE = re.compile(r"^[A-Za-z0-9]+$")


@dataclass(frozen=True, slots=True)
class Iri:
    value: str


@dataclass(frozen=True, slots=True)
class BlankNode:
    label: str

    def __post_init__(self) -> None:
        if not _BNODE_LABEL_RE.match(self.label):
            raise ValueError(f"invalid blank node label {self.label!r}")


@dataclass(frozen=True, slots=True)
class Literal:
    lexical: str
    datatype: str = XSD_STRING
    language: Optional[str] = None

    def __post_init__(self) -> None:
        if (self.language is not None) != (self.datatype == RDF_LANGSTRING):
            raise ValueError("language-tagged literals must use rdf:langString")


Term = Union[Iri, BlankNode, Literal]


class Triple(NamedTuple):
    subject: Union[Iri, BlankNode]
    predicate: Iri
    object: Term


def iri(prefix: str, local: str) -> Iri:
    return Iri(PREFIXES[prefix] + local)


# -- N-Triples ---------------------------------------------------------------

_LITERAL_ESCAPES = {'"': '\\"', "\\": "\\\\", "\n": "\\n", "\r": "\\r", "\t": "\\t", "\b": "\\b", "\f": "\\f"}
_LITERAL_NEEDS_ESCAPE = re.compile(r'["\\\x00-\x1f\x7f]')
_IRI_NEEDS_ESCAPE = re.compile(r'[\x00-\x20<>"{}|^`\\\x7f]')


def _escape_literal_char(m: re.Match) -> str:
    c = m.group(0)
    return _LITERAL_ESCAPES.get(c) or f"\\u{ord(c):04X}"


def _escape_iri_char(m: re.Match) -> str:
    return f"\\u{ord(m.group(0)):04X}"


def render_term(term: Term) -> str:
    """Canonical N-Triples form of a single term."""
    if isinstance(term, Iri):
        return "<" + _IRI_NEEDS_ESCAPE.sub(_escape_iri_char, term.value) + ">"
    if isinstance(term, BlankNode):
        return "_:" + term.label
    text = '"' + _LITERAL_NEEDS_ESCAPE.sub(_escape_literal_char, term.lexical) + '"'
    if term.language is not None:
        return text + "@" + term.language
    if term.datatype != XSD_STRING:
        return text + "^^<" + _IRI_NEEDS_ESCAPE.sub(_escape_iri_char, term.datatype) + ">"
    return text


def render_triple(t: Triple) -> str:
    """One canonical N-Triples line, without the trailing newline."""
    return f"{render_term(t.subject)} {render_term(t.predicate)} {render_term(t.object)} ."


def sort_triples(triples: Iterable[Triple]) -> list[Triple]:
    """Sort by the UTF-8 byte order of the canonical rendering."""
    return sorted(triples, key=lambda t: render_triple(t).encode("utf-8"))


def render_graph(triples: Iterable[Triple]) -> str:
    return "".join(render_triple(t) + "\n" for t in sort_triples(triples))


_TOKEN_RE = re.compile(
    r"""\s*(?:
        <(?P<iri>[^>]*)>
      | _:(?P<bnode>[A-Za-z0-9_][A-Za-z0-9_\-.]*)
      | "(?P<lex>(?:[^"\\]|\\.)*)"(?:@(?P<lang>[A-Za-z]+(?:-[A-Za-z0-9]+)*)|\^\^<(?P<dt>[^>]*)>)?
    )""",
    re.VERBOSE,
)
_UNESCAPE_RE = re.compile(r"\\(?:u([0-9A-Fa-f]{4})|U([0-9A-Fa-f]{8})|(.))")
_ECHARS = {"t": "\t", "b": "\b", "n": "\n", "r": "\r", "f": "\f", '"': '"', "'": "'", "\\": "\\"}


def _unescape(text: str) -> str:
    def sub(m: re.Match) -> str:
        if m.group(1) or m.group(2):
            return chr(int(m.group(1) or m.group(2), 16))
        c = m.group(3)
        if c not in _ECHARS:
            raise ValueError(f"invalid escape \\{c}")
        return _ECHARS[c]

    return _UNESCAPE_RE.sub(sub, text)


def parse_triple(line: str) -> Triple:
    """Parse a single N-Triples line (as produced by :func:`render_triple`)."""
    terms: list[Term] = []
    pos = 0
    for _ in range(3):
        m = _TOKEN_RE.match(line, pos)
        if m is None:
            raise ValueError(f"cannot parse N-Triples term at column {pos}: {line!r}")
        pos = m.end()
        if m.group("iri") is not None:
            terms.append(Iri(_unescape(m.group("iri"))))
        elif m.group("bnode") is not None:
            terms.append(BlankNode(m.group("bnode")))
        else:
            lex = _unescape(m.group("lex"))
            if m.group("lang"):
                terms.append(Literal(lex, RDF_LANGSTRING, m.group("lang")))
            else:
                dt = m.group("dt")
                terms.append(Literal(lex, _unescape(dt) if dt is not None else XSD_STRING))
    if line[pos:].strip() != ".":
        raise ValueError(f"missing terminating '.': {line!r}")
    s, p, o = terms
    if isinstance(s, Literal) or not isinstance(p, Iri):
        raise ValueError(f"term kinds violate subject/predicate positions: {line!r}")
    return Triple(s, p, o)


def check_triple_set(triples: Iterable[Triple]) -> None:
    """Raise ``ValueError`` unless positional kinds hold and each blank node occurs once."""
    seen: Counter[str] = Counter()
    for t in triples:
        if isinstance(t.subject, Literal) or not isinstance(t.predicate, Iri):
            raise ValueError(f"bad term kinds in {t}")
        for term in (t.subject, t.object):
            if isinstance(term, BlankNode):
                seen[term.label] += 1
    repeated = [label for label, n in seen.items() if n > 1]
    if repeated:
        raise ValueError(f"blank nodes occurring in more than one triple: {repeated}")


# -- revision serialization --------------------------------------------------

_RDF_TYPE = iri("rdf", "type")
_SAME_AS = iri("owl", "sameAs")
_LABEL = iri("rdfs", "label")
_DESCRIPTION = iri("schema", "description")
_ALT_LABEL = iri("skos", "altLabel")
_ARTICLE = iri("schema", "Article")
_ABOUT = iri("schema", "about")
_BADGE = iri("wikibase", "badge")
_STATEMENT = iri("wikibase", "Statement")
_REFERENCE = iri("wikibase", "Reference")
_BEST_RANK = iri("wikibase", "BestRank")
_RANK = iri("wikibase", "rank")
_DERIVED_FROM = iri("prov", "wasDerivedFrom")
_RANK_IRIS = {
    Rank.DEPRECATED: iri("wikibase", "DeprecatedRank"),
    Rank.NORMAL: iri("wikibase", "NormalRank"),
    Rank.PREFERRED: iri("wikibase", "PreferredRank"),
}

_SITE_FAMILIES = (
    ("wiktionary", "wiktionary.org"),
    ("wikiquote", "wikiquote.org"),
    ("wikisource", "wikisource.org"),
    ("wikibooks", "wikibooks.org"),
    ("wikinews", "wikinews.org"),
    ("wikiversity", "wikiversity.org"),
    ("wikivoyage", "wikivoyage.org"),
    ("wiki", "wikipedia.org"),
)
_SPECIAL_SITES = {
    "commonswiki": "commons.wikimedia.org",
    "specieswiki": "species.wikimedia.org",
    "metawiki": "meta.wikimedia.org",
    "incubatorwiki": "incubator.wikimedia.org",
    "outreachwiki": "outreach.wikimedia.org",
    "wikimaniawiki": "wikimania.wikimedia.org",
    "mediawikiwiki": "www.mediawiki.org",
    "wikidatawiki": "www.wikidata.org",
    "sourceswiki": "wikisource.org",
    "wikifunctionswiki": "www.wikifunctions.org",
}


def sitelink_iri(site: str, title: str) -> Iri:
    """Article IRI for a sitelink, e.g. ``enwiki`` + ``Douglas Adams``."""
    host = _SPECIAL_SITES.get(site)
    if host is None:
        for suffix, domain in _SITE_FAMILIES:
            lang = site[: -len(suffix)]
            if site.endswith(suffix) and lang:
                host = f"{lang.replace('_', '-')}.{domain}"
                break
        else:
            host = f"{site}.invalid"
    path = quote(title.replace(" ", "_"), safe=":/(),'!*;@$~&=+")
    return Iri(f"https://{host}/wiki/{path}")


def entity_iri(entity: EntityId | str) -> Iri:
    return Iri(PREFIXES["wd"] + str(entity))


def statement_iri(guid: str) -> Iri:
    return Iri(PREFIXES["s"] + guid.replace("$", "-"))


def _blank(anchor: str, role: str) -> BlankNode:
    digest = hashlib.sha1(f"{anchor}\x00{role}".encode("utf-8")).hexdigest()
    return BlankNode("genid" + digest)


def _value_term(value: SnakValue, anchor: str, role: str) -> Optional[Term]:
    """Object term for a snak value; None for NoValue."""
    if isinstance(value, EntityValue):
        return entity_iri(value.entity)
    if isinstance(value, ForeignEntityValue):
        return entity_iri(value.id)
    if isinstance(value, LiteralValue):
        lexical = value.lexical
        if value.datatype == XSD_DATETIME and lexical.startswith("+"):
            lexical = lexical[1:]
        return Literal(lexical, value.datatype, value.language)
    if isinstance(value, SomeValue):
        return _blank(anchor, role)
    if isinstance(value, NoValue):
        return None
    raise TypeError(f"unknown snak value {value!r}")


def _canonical_value(value: SnakValue) -> str:
    if isinstance(value, SomeValue):
        return "somevalue"
    if isinstance(value, NoValue):
        return "novalue"
    term = _value_term(value, "", "")
    assert term is not None
    return render_term(term)


def reference_hash(snaks: Iterable[Snak]) -> str:
    """Lowercase hex SHA-1 over the reference's snaks in canonical order."""
    parts = sorted((s.property.number, _canonical_value(s.value)) for s in snaks)
    payload = "\x1f".join(f"P{n}\x1f{v}" for n, v in parts)
    return hashlib.sha1(payload.encode("utf-8")).hexdigest()


def simple_statement_filter(statements: Iterable[Statement]) -> list[Statement]:
    """Statements that get a direct ``wdt:`` triple: the best-ranked per property."""
    statements = list(statements)
    preferred = {s.property for s in statements if s.rank is Rank.PREFERRED}
    return [
        s
        for s in statements
        if s.rank is Rank.PREFERRED or (s.rank is Rank.NORMAL and s.property not in preferred)
    ]


def _emit_snak(out: set, node: Iri, prefix: str, snak: Snak, anchor: str, role: str) -> None:
    pid = str(snak.property)
    obj = _value_term(snak.value, anchor, role)
    if obj is None:
        out.add(Triple(node, _RDF_TYPE, iri("wdno", pid)))
    else:
        out.add(Triple(node, iri(prefix, pid), obj))


def _emit_statement(out: set, subject: Iri, st: Statement, best: bool) -> None:
    pid = str(st.property)
    node = statement_iri(st.guid)
    out.add(Triple(subject, iri("p", pid), node))
    out.add(Triple(node, _RDF_TYPE, _STATEMENT))
    out.add(Triple(node, _RANK, _RANK_IRIS[st.rank]))
    if best:
        out.add(Triple(node, _RDF_TYPE, _BEST_RANK))
        simple = _value_term(st.value, st.guid, "wdt")
        if simple is not None:
            out.add(Triple(subject, iri("wdt", pid), simple))
    _emit_snak(out, node, "ps", Snak(st.property, st.value), st.guid, "ps")
    for i, q in enumerate(st.qualifiers):
        _emit_snak(out, node, "pq", q, st.guid, f"pq{i}")
    for ref in st.references:
        digest = reference_hash(ref.snaks)
        ref_node = iri("ref", digest)
        out.add(Triple(node, _DERIVED_FROM, ref_node))
        out.add(Triple(ref_node, _RDF_TYPE, _REFERENCE))
        ordered = sorted(ref.snaks, key=lambda s: (s.property.number, _canonical_value(s.value)))
        for i, snak in enumerate(ordered):
            _emit_snak(out, ref_node, "pr", snak, digest, f"pr{i}")


def serialize_revision(entity_id: EntityId, content: RevisionContent) -> frozenset[Triple]:
    """RDF graph of one revision.

    Only triples rooted in the entity itself (directly, or through its
    statement, reference and sitelink nodes) are produced.
    """
    subject = entity_iri(entity_id)
    if isinstance(content, RedirectContent):
        return frozenset({Triple(subject, _SAME_AS, entity_iri(content.target))})
    if not isinstance(content, FullContent):
        raise TypeError(f"unknown revision content {content!r}")

    out: set[Triple] = set()
    kind = "Property" if entity_id.is_property else "Item"
    out.add(Triple(subject, _RDF_TYPE, iri("wikibase", kind)))

    fp = content.fingerprint
    for lang, text in fp.labels.items():
        out.add(Triple(subject, _LABEL, Literal(text, RDF_LANGSTRING, lang)))
    for lang, text in fp.descriptions.items():
        out.add(Triple(subject, _DESCRIPTION, Literal(text, RDF_LANGSTRING, lang)))
    for lang, aliases in fp.aliases.items():
        for text in aliases:
            out.add(Triple(subject, _ALT_LABEL, Literal(text, RDF_LANGSTRING, lang)))

    for link in content.sitelinks.values():
        article = sitelink_iri(link.site, link.title)
        out.add(Triple(article, _RDF_TYPE, _ARTICLE))
        out.add(Triple(article, _ABOUT, subject))
        for badge in link.badges:
            out.add(Triple(article, _BADGE, entity_iri(badge)))

    best = {id(s) for s in simple_statement_filter(content.statements)}
    for st in content.statements:
        _emit_statement(out, subject, st, id(st) in best)
    return frozenset(out)

