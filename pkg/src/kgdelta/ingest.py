"""Streaming reader for MediaWiki ``pages-meta-history`` XML exports.

Pages come out in file order and, within a page, revisions in file order.
Only the page/revision framing is validated; the reader holds at most one
revision element in memory at a time.
"""

from __future__ import annotations

import bz2
import gzip
import io
import logging
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterator, Optional, Union

from kgdelta.errors import DumpFormatError, MalformedEntityId
from kgdelta.model import (
    ITEM_NAMESPACE,
    PROPERTY_NAMESPACE,
    Anonymous,
    EntityPage,
    RevisionMeta,
    User,
    parse_entity_id,
    parse_timestamp,
)

logger = logging.getLogger(__name__)

ENTITY_NAMESPACES = frozenset({ITEM_NAMESPACE, PROPERTY_NAMESPACE})
ENTITY_CONTENT_MODELS = frozenset({"wikibase-item", "wikibase-property"})


@dataclass(frozen=True, slots=True)
class RawRevision:
    meta: RevisionMeta
    content_model: str
    # the <text> element content, encoded as UTF-8; empty for deleted or missing text
    payload: bytes


@dataclass(frozen=True, slots=True)
class SkipRecord:
    revision_id: Optional[int]
    entity_id: Optional[str]
    stage: str
    cause: str

    def to_json(self) -> dict:
        return {
            "revisionId": self.revision_id,
            "entityId": self.entity_id,
            "stage": self.stage,
            "cause": self.cause,
        }


@dataclass
class SkipReport:
    records: list[SkipRecord] = field(default_factory=list)
    skipped_pages: int = 0

    def add(self, record: SkipRecord) -> None:
        logger.log(
            logging.ERROR if record.stage == "parse" else logging.INFO,
            "skip %s revision=%s entity=%s: %s",
            record.stage,
            record.revision_id,
            record.entity_id,
            record.cause,
        )
        self.records.append(record)


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _decompress(source: BinaryIO, compression: Optional[str]) -> BinaryIO:
    if compression == "auto":
        head = source.peek(3)[:3] if hasattr(source, "peek") else b""
        if not head and source.seekable():
            pos = source.tell()
            head = source.read(3)
            source.seek(pos)
        if head[:2] == b"\x1f\x8b":
            compression = "gzip"
        elif head == b"BZh":
            compression = "bz2"
        else:
            compression = None
    if compression in (None, "none"):
        return source
    if compression == "gzip":
        return gzip.GzipFile(fileobj=source, mode="rb")
    if compression in ("bz2", "bzip2"):
        return bz2.BZ2File(source, mode="rb")
    raise ValueError(f"unknown compression {compression!r}")


class DumpReader:
    """Iterator over ``(EntityPage, revision iterator)`` pairs of one export stream.

    Pages outside the entity namespaces, pages whose title is not an entity
    id, and pages whose first revision is not an entity content model are
    skipped and recorded in :attr:`skips`.
    """

    def __init__(
        self,
        source: BinaryIO,
        compression: Optional[str] = "auto",
        name: str = "<stream>",
        skips: Optional[SkipReport] = None,
    ) -> None:
        self.name = name
        self.skips = skips if skips is not None else SkipReport()
        self._stream = _decompress(source, compression)
        self._events = ET.iterparse(self._stream, events=("start", "end"))
        self._root: Optional[ET.Element] = None
        self._page: Optional[ET.Element] = None
        self._active: Optional[Iterator[RawRevision]] = None
        self._done = False

    def _next(self) -> Optional[tuple[str, ET.Element]]:
        try:
            event, elem = next(self._events)
        except StopIteration:
            return None
        except ET.ParseError as e:
            raise DumpFormatError(f"{self.name}:{e.position}", str(e)) from None
        if self._root is None:
            self._root = elem
        return event, elem

    def __iter__(self) -> Iterator[tuple[EntityPage, Iterator[RawRevision]]]:
        while (entry := self.next_entity()) is not None:
            yield entry

    def next_entity(self) -> Optional[tuple[EntityPage, Iterator[RawRevision]]]:
        if self._active is not None:
            for _ in self._active:
                pass
            self._active = None
        while not self._done:
            header = self._read_page_header()
            if header is None:
                self._done = True
                return None
            fields, has_revision = header
            page = self._entity_page(fields)
            if page is None:
                if has_revision:
                    self._skip_rest_of_page()
                else:
                    self._finish_page()
                continue
            if not has_revision:
                self._finish_page()
                continue
            first = self._read_revision(page)
            if first.content_model not in ENTITY_CONTENT_MODELS:
                self.skips.skipped_pages += 1
                self.skips.add(
                    SkipRecord(None, str(page.entity_id), "ingest",
                               f"page content model {first.content_model!r}")
                )
                self._skip_rest_of_page()
                continue
            self._active = self._revisions(page, first)
            return page, self._active
        return None

    # -- page framing --

    def _read_page_header(self) -> Optional[tuple[dict[str, str], bool]]:
        while True:
            ev = self._next()
            if ev is None:
                return None
            event, elem = ev
            if event == "start" and _local(elem.tag) == "page":
                self._page = elem
                break
        fields: dict[str, str] = {}
        while True:
            ev = self._next()
            if ev is None:
                raise DumpFormatError(self.name, "unexpected end of stream inside <page>")
            event, elem = ev
            tag = _local(elem.tag)
            if event == "start" and tag == "revision":
                return fields, True
            if event == "end" and tag == "page":
                return fields, False
            if event == "end" and tag in ("title", "ns", "id"):
                fields.setdefault(tag, (elem.text or "").strip())

    def _entity_page(self, fields: dict[str, str]) -> Optional[EntityPage]:
        title = fields.get("title")
        try:
            namespace = int(fields["ns"])
            page_id = int(fields["id"])
        except (KeyError, ValueError):
            raise DumpFormatError(f"{self.name}:page {title!r}", "page without numeric ns/id") from None
        if title is None:
            raise DumpFormatError(f"{self.name}:page {page_id}", "page without title")
        if namespace not in ENTITY_NAMESPACES:
            self.skips.skipped_pages += 1
            self.skips.add(SkipRecord(None, None, "ingest", f"namespace {namespace} page {title!r}"))
            return None
        try:
            entity_id = parse_entity_id(title.rsplit(":", 1)[-1])
        except MalformedEntityId:
            self.skips.skipped_pages += 1
            self.skips.add(SkipRecord(None, None, "ingest", f"non-entity title {title!r}"))
            return None
        return EntityPage(entity_id, page_id, namespace, title)

    def _skip_rest_of_page(self) -> None:
        # consume events up to and including </page>
        while True:
            ev = self._next()
            if ev is None:
                raise DumpFormatError(self.name, "unexpected end of stream inside <page>")
            event, elem = ev
            if event == "end" and _local(elem.tag) == "page":
                break
        self._finish_page()

    def _finish_page(self) -> None:
        if self._root is not None:
            self._root.clear()
        self._page = None

    # -- revisions --

    def _read_revision(self, page: EntityPage) -> RawRevision:
        """Read from just after ``<revision>`` through ``</revision>``."""
        depth = 0
        while True:
            ev = self._next()
            if ev is None:
                raise DumpFormatError(self.name, f"unexpected end of stream in {page.title}")
            event, elem = ev
            if event == "start":
                depth += 1
            elif depth:
                depth -= 1
            else:
                if _local(elem.tag) != "revision":
                    raise DumpFormatError(self.name, f"unbalanced revision in {page.title}")
                raw = self._build_revision(page, elem)
                elem.clear()
                if self._page is not None:
                    self._page.remove(elem)
                return raw

    def _build_revision(self, page: EntityPage, elem: ET.Element) -> RawRevision:
        children = {_local(c.tag): c for c in elem}
        where = f"{self.name}:{page.title}"

        def text(name: str) -> Optional[str]:
            child = children.get(name)
            return None if child is None else (child.text or "")

        try:
            revision_id = int(text("id") or "")
        except ValueError:
            raise DumpFormatError(where, "revision without numeric id") from None
        parent = text("parentid")
        stamp = text("timestamp")
        if stamp is None:
            raise DumpFormatError(f"{where}@{revision_id}", "revision without timestamp")
        contributor = None
        c = children.get("contributor")
        if c is not None and c.get("deleted") is None:
            cfields = {_local(x.tag): (x.text or "") for x in c}
            if "ip" in cfields:
                contributor = Anonymous(cfields["ip"])
            elif "username" in cfields:
                uid = cfields.get("id")
                contributor = User(cfields["username"], int(uid) if uid else None)
        try:
            meta = RevisionMeta(
                revision_id=revision_id,
                parent_revision_id=int(parent) if parent else None,
                timestamp=parse_timestamp(stamp),
                contributor=contributor,
                comment=text("comment") or "",
                is_minor="minor" in children,
                sha1=text("sha1") or None,
            )
        except ValueError as e:
            raise DumpFormatError(f"{where}@{revision_id}", str(e)) from None
        t = children.get("text")
        payload = b"" if t is None or t.get("deleted") is not None else (t.text or "").encode("utf-8")
        return RawRevision(meta, text("model") or "", payload)

    def _revisions(self, page: EntityPage, first: RawRevision) -> Iterator[RawRevision]:
        last = first.meta.revision_id
        yield first
        while True:
            ev = self._next()
            if ev is None:
                raise DumpFormatError(self.name, f"unexpected end of stream in {page.title}")
            event, elem = ev
            tag = _local(elem.tag)
            if event == "end" and tag == "page":
                self._finish_page()
                return
            if event != "start" or tag != "revision":
                continue
            raw = self._read_revision(page)
            rid = raw.meta.revision_id
            if rid <= last:
                raise DumpFormatError(
                    f"{self.name}:{page.title}", f"revision {rid} does not follow {last}"
                )
            last = rid
            if raw.content_model not in ENTITY_CONTENT_MODELS:
                self.skips.add(
                    SkipRecord(rid, str(page.entity_id), "ingest",
                               f"content model {raw.content_model!r}")
                )
                continue
            yield raw


def open_dump(
    source: Union[BinaryIO, bytes, str, Path],
    compression: Optional[str] = "auto",
    skips: Optional[SkipReport] = None,
) -> DumpReader:
    """Open an export stream; ``compression`` is ``None``, ``"gzip"``, ``"bz2"`` or ``"auto"``."""
    if isinstance(source, bytes):
        return DumpReader(io.BytesIO(source), compression, "<bytes>", skips)
    if isinstance(source, (str, Path)):
        return DumpReader(open(source, "rb"), compression, str(source), skips)
    return DumpReader(source, compression, getattr(source, "name", "<stream>"), skips)


def iter_entities(
    paths: list[Union[str, Path]], skips: Optional[SkipReport] = None
) -> Iterator[tuple[EntityPage, Iterator[RawRevision]]]:
    """Chain the entity pages of several part files, in the given order."""
    for path in paths:
        with open(path, "rb") as fh:
            yield from DumpReader(fh, "auto", str(path), skips)
