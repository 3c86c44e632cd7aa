"""Typed Wikibase data model and a parser for the per-revision JSON blobs of a dump.

The parser accepts both the current entity JSON layout and the legacy
(pre-2015) layout, normalizing them into the same model.  The mapping is
documented in the README ("JSON normalization table").
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from decimal import Decimal
from typing import Any, Mapping, Optional, Union

from kgdelta.errors import MalformedEntityId, MalformedRevisionJson

XSD = "http://www.w3.org/2001/XMLSchema#"
XSD_STRING = XSD + "string"
XSD_DATETIME = XSD + "dateTime"
XSD_DECIMAL = XSD + "decimal"
RDF_LANGSTRING = "http://www.w3.org/1999/02/22-rdf-syntax-ns#langString"
GEO_WKT = "http://www.opengis.net/ont/geosparql#wktLiteral"
WIKIBASE_NS = "http://wikiba.se/ontology#"
EARTH = "http://www.wikidata.org/entity/Q2"

ITEM_NAMESPACE = 0
PROPERTY_NAMESPACE = 120

_ENTITY_ID_RE = re.compile(r"^([QP])([1-9][0-9]*)$")


class EntityKind(enum.Enum):
    ITEM = "Q"
    PROPERTY = "P"


@dataclass(frozen=True, slots=True)
class EntityId:
    kind: EntityKind
    number: int

    def __post_init__(self) -> None:
        if self.number < 1:
            raise MalformedEntityId(f"{self.kind.value}{self.number}")

    def __str__(self) -> str:
        return f"{self.kind.value}{self.number}"

    @property
    def is_property(self) -> bool:
        return self.kind is EntityKind.PROPERTY

    def sort_key(self) -> tuple[int, int]:
        """Properties first, then items; ascending number within a kind."""
        return (0 if self.is_property else 1, self.number)


def parse_entity_id(text: str) -> EntityId:
    if not isinstance(text, str):
        raise MalformedEntityId(text)
    m = _ENTITY_ID_RE.match(text)
    if m is None:
        raise MalformedEntityId(text)
    return EntityId(EntityKind(m.group(1)), int(m.group(2)))


# -- revision metadata -------------------------------------------------------


@dataclass(frozen=True, slots=True)
class User:
    name: str
    id: Optional[int]


@dataclass(frozen=True, slots=True)
class Anonymous:
    ip: str


Contributor = Union[User, Anonymous]


@dataclass(frozen=True, slots=True)
class RevisionMeta:
    revision_id: int
    parent_revision_id: Optional[int]
    timestamp: datetime
    # None when the dump marks the contributor as deleted
    contributor: Optional[Contributor]
    comment: str = ""
    is_minor: bool = False
    sha1: Optional[str] = None

    def __post_init__(self) -> None:
        if self.revision_id < 1:
            raise ValueError(f"revision id must be positive, got {self.revision_id}")
        if self.parent_revision_id is not None and not (
            0 < self.parent_revision_id < self.revision_id
        ):
            raise ValueError(
                f"parent revision {self.parent_revision_id} not below {self.revision_id}"
            )
        if self.timestamp.tzinfo is None or self.timestamp.microsecond:
            raise ValueError("timestamp must be timezone-aware with second precision")


def parse_timestamp(text: str) -> datetime:
    """Parse a dump timestamp such as ``2012-10-30T12:00:00Z`` into UTC."""
    ts = datetime.strptime(text.strip(), "%Y-%m-%dT%H:%M:%SZ")
    return ts.replace(tzinfo=timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True, slots=True)
class EntityPage:
    entity_id: EntityId
    page_id: int
    namespace: int
    title: str


# -- revision content --------------------------------------------------------


@dataclass(frozen=True, slots=True)
class EntityValue:
    entity: EntityId


@dataclass(frozen=True, slots=True)
class ForeignEntityValue:
    """Reference to an entity type outside this model (lexeme, form, sense, media info)."""

    id: str


@dataclass(frozen=True, slots=True)
class LiteralValue:
    lexical: str
    datatype: str
    language: Optional[str] = None

    def __post_init__(self) -> None:
        if (self.language is not None) != (self.datatype == RDF_LANGSTRING):
            raise ValueError("language tag present iff datatype is rdf:langString")


@dataclass(frozen=True, slots=True)
class SomeValue:
    pass


@dataclass(frozen=True, slots=True)
class NoValue:
    pass


SnakValue = Union[EntityValue, ForeignEntityValue, LiteralValue, SomeValue, NoValue]


@dataclass(frozen=True, slots=True)
class Snak:
    property: EntityId
    value: SnakValue


@dataclass(frozen=True, slots=True)
class Reference:
    snaks: tuple[Snak, ...]

    def __post_init__(self) -> None:
        if not self.snaks:
            raise ValueError("a reference needs at least one snak")


class Rank(enum.Enum):
    DEPRECATED = "deprecated"
    NORMAL = "normal"
    PREFERRED = "preferred"


@dataclass(frozen=True, slots=True)
class Statement:
    guid: str
    property: EntityId
    value: SnakValue
    qualifiers: tuple[Snak, ...] = ()
    references: tuple[Reference, ...] = ()
    rank: Rank = Rank.NORMAL

    def __post_init__(self) -> None:
        if not self.property.is_property:
            raise ValueError(f"statement property {self.property} is not a property")


@dataclass(frozen=True, slots=True)
class SiteLink:
    site: str
    title: str
    badges: tuple[EntityId, ...] = ()


@dataclass(frozen=True)
class Fingerprint:
    labels: Mapping[str, str] = field(default_factory=dict)
    descriptions: Mapping[str, str] = field(default_factory=dict)
    aliases: Mapping[str, tuple[str, ...]] = field(default_factory=dict)


@dataclass(frozen=True)
class FullContent:
    fingerprint: Fingerprint = field(default_factory=Fingerprint)
    # keyed by site id, so at most one link per site
    sitelinks: Mapping[str, SiteLink] = field(default_factory=dict)
    statements: tuple[Statement, ...] = ()


@dataclass(frozen=True, slots=True)
class RedirectContent:
    target: EntityId


RevisionContent = Union[FullContent, RedirectContent]


def validate_content(content: RevisionContent) -> None:
    """Check every model invariant not already enforced by the constructors."""
    if isinstance(content, RedirectContent):
        return
    for lang, aliases in content.fingerprint.aliases.items():
        if len(set(aliases)) != len(aliases):
            raise ValueError(f"duplicate aliases for language {lang}")
    for site, link in content.sitelinks.items():
        if link.site != site:
            raise ValueError(f"sitelink keyed {site} names site {link.site}")
    guids = [s.guid for s in content.statements]
    if len(set(guids)) != len(guids):
        raise ValueError("statement guids are not unique")
    for s in content.statements:
        if not s.property.is_property:
            raise ValueError(f"statement property {s.property} is not a property")
        for ref in s.references:
            if not ref.snaks:
                raise ValueError("empty reference")


# -- JSON parsing ------------------------------------------------------------


class _Bad(Exception):
    pass


_LEGACY_RANKS = {0: Rank.DEPRECATED, 1: Rank.NORMAL, 2: Rank.PREFERRED}


def parse_revision_json(blob: bytes | str, revision_id: Optional[int] = None) -> RevisionContent:
    """Parse one revision payload into a :class:`RevisionContent`.

    Unknown fields are ignored.  Any structural problem raises
    :class:`MalformedRevisionJson` carrying ``revision_id``.
    """
    try:
        doc = json.loads(blob, parse_float=Decimal)
    except (ValueError, UnicodeDecodeError) as e:
        raise MalformedRevisionJson(revision_id, str(e)) from None
    try:
        if not isinstance(doc, dict):
            raise _Bad("top-level value is not an object")
        return _parse_document(doc)
    except (_Bad, MalformedEntityId, ValueError, TypeError, KeyError, AttributeError) as e:
        raise MalformedRevisionJson(revision_id, f"{type(e).__name__}: {e}") from None


def _parse_document(doc: dict) -> RevisionContent:
    if "redirect" in doc:
        return RedirectContent(_legacy_entity_id(doc["redirect"]))

    labels = _term_map(_first(doc, "labels", "label"))
    descriptions = _term_map(_first(doc, "descriptions", "description"))
    aliases = _alias_map(_first(doc, "aliases"))
    fingerprint = Fingerprint(labels, descriptions, aliases)

    sitelinks: dict[str, SiteLink] = {}
    for site, link in _as_dict(_first(doc, "sitelinks", "links")).items():
        if isinstance(link, str):
            sl = SiteLink(site, link)
        else:
            title = link.get("title", link.get("name"))
            if not isinstance(title, str):
                raise _Bad(f"sitelink {site} has no title")
            badges = tuple(_legacy_entity_id(b) for b in link.get("badges") or ())
            sl = SiteLink(link.get("site", site), title, badges)
        sitelinks[sl.site] = sl

    claims = _first(doc, "claims", "statements")
    if isinstance(claims, list) and claims and "m" in claims[0]:
        statements = [_legacy_statement(c) for c in claims]
    else:
        statements = [
            _statement(s) for group in _as_dict(claims).values() for s in group
        ]
    guids = [s.guid for s in statements]
    if len(set(guids)) != len(guids):
        raise _Bad("duplicate statement guid")
    return FullContent(fingerprint, dict(sorted(sitelinks.items())), tuple(statements))


def _first(doc: dict, *keys: str) -> Any:
    for k in keys:
        if k in doc:
            return doc[k]
    return None


def _as_dict(value: Any) -> dict:
    # PHP serializes empty maps as []
    if value is None or value == []:
        return {}
    if not isinstance(value, dict):
        raise _Bad(f"expected object, got {type(value).__name__}")
    return value


def _term_map(raw: Any) -> dict[str, str]:
    out = {}
    for lang, term in _as_dict(raw).items():
        text = term if isinstance(term, str) else term["value"]
        if not isinstance(text, str):
            raise _Bad(f"term for {lang} is not a string")
        out[lang] = text
    return dict(sorted(out.items()))


def _alias_map(raw: Any) -> dict[str, tuple[str, ...]]:
    out = {}
    for lang, terms in _as_dict(raw).items():
        if isinstance(terms, dict):  # legacy numeric-keyed object
            terms = list(terms.values())
        seen: dict[str, None] = {}
        for term in terms:
            text = term if isinstance(term, str) else term["value"]
            if not isinstance(text, str):
                raise _Bad(f"alias for {lang} is not a string")
            seen.setdefault(text)
        if seen:
            out[lang] = tuple(seen)
    return dict(sorted(out.items()))


def _legacy_entity_id(raw: Any) -> EntityId:
    """Accept ``"Q42"``, legacy ``"q42"`` and legacy ``["item", 42]``."""
    if isinstance(raw, list) and len(raw) == 2:
        prefix = {"item": "Q", "property": "P"}.get(raw[0])
        if prefix is None:
            raise MalformedEntityId(raw)
        return parse_entity_id(f"{prefix}{raw[1]}")
    if isinstance(raw, str) and raw[:1] in ("q", "p"):
        raw = raw.upper()
    return parse_entity_id(raw)


def _property_id(raw: Any) -> EntityId:
    if isinstance(raw, int):
        return parse_entity_id(f"P{raw}")
    pid = _legacy_entity_id(raw)
    if not pid.is_property:
        raise _Bad(f"{pid} is not a property")
    return pid


def _statement(raw: dict) -> Statement:
    main = raw["mainsnak"]
    pid = _property_id(main["property"])
    qualifiers = _snak_groups(raw.get("qualifiers"), raw.get("qualifiers-order"))
    references = tuple(
        Reference(_snak_groups(ref.get("snaks"), ref.get("snaks-order")))
        for ref in raw.get("references") or ()
    )
    guid = raw.get("id")
    if not isinstance(guid, str) or not guid:
        raise _Bad("statement without id")
    return Statement(
        guid=guid,
        property=pid,
        value=_snak_value(main),
        qualifiers=qualifiers,
        references=references,
        rank=Rank(raw.get("rank", "normal")),
    )


def _snak_groups(groups: Any, order: Any) -> tuple[Snak, ...]:
    groups = _as_dict(groups)
    keys = list(order) if order else []
    keys += [k for k in groups if k not in keys]
    snaks = []
    for key in keys:
        for snak in groups.get(key, ()):
            snaks.append(Snak(_property_id(snak["property"]), _snak_value(snak)))
    return tuple(snaks)


def _snak_value(snak: dict) -> SnakValue:
    kind = snak["snaktype"]
    if kind == "somevalue":
        return SomeValue()
    if kind == "novalue":
        return NoValue()
    if kind != "value":
        raise _Bad(f"unknown snak type {kind!r}")
    dv = snak["datavalue"]
    return _datavalue(dv["type"], dv["value"], snak.get("datatype"))


def _datavalue(dtype: str, value: Any, declared: Optional[str]) -> SnakValue:
    if dtype == "string":
        if not isinstance(value, str):
            raise _Bad("string datavalue is not a string")
        return LiteralValue(value, XSD_STRING)
    if dtype == "monolingualtext":
        return LiteralValue(value["text"], RDF_LANGSTRING, value["language"])
    if dtype == "time":
        return LiteralValue(value["time"], XSD_DATETIME)
    if dtype == "quantity":
        return LiteralValue(str(value["amount"]), XSD_DECIMAL)
    if dtype == "globecoordinate":
        point = f"Point({value['longitude']} {value['latitude']})"
        globe = value.get("globe") or EARTH
        if globe != EARTH:
            point = f"<{globe}> {point}"
        return LiteralValue(point, GEO_WKT)
    if dtype == "wikibase-entityid":
        raw_id = value.get("id")
        if raw_id is None:
            prefix = {"item": "Q", "property": "P"}.get(value.get("entity-type"))
            if prefix is None:
                raise _Bad(f"cannot resolve entity reference {value!r}")
            raw_id = f"{prefix}{value['numeric-id']}"
        if _ENTITY_ID_RE.match(raw_id):
            return EntityValue(parse_entity_id(raw_id))
        return ForeignEntityValue(raw_id)
    # unrecognized datatypes pass through verbatim
    lexical = value if isinstance(value, str) else _canonical_json(value)
    return LiteralValue(lexical, WIKIBASE_NS + (declared or dtype))


def _canonical_json(value: Any) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False, default=str)


def _legacy_snak(raw: list) -> tuple[EntityId, SnakValue]:
    kind, pid = raw[0], _property_id(raw[1])
    if kind == "somevalue":
        return pid, SomeValue()
    if kind == "novalue":
        return pid, NoValue()
    if kind != "value":
        raise _Bad(f"unknown legacy snak type {kind!r}")
    return pid, _datavalue(raw[2], raw[3], None)


def _legacy_statement(raw: dict) -> Statement:
    pid, value = _legacy_snak(raw["m"])
    qualifiers = tuple(Snak(*_legacy_snak(q)) for q in raw.get("q") or ())
    references = tuple(
        Reference(tuple(Snak(*_legacy_snak(s)) for s in ref)) for ref in raw.get("refs") or ()
    )
    rank = raw.get("rank", 1)
    guid = raw.get("g")
    if not isinstance(guid, str) or not guid:
        raise _Bad("statement without guid")
    return Statement(
        guid=guid,
        property=pid,
        value=value,
        qualifiers=qualifiers,
        references=references,
        rank=_LEGACY_RANKS[rank] if isinstance(rank, int) else Rank(rank),
    )
