"""On-disk form of both dataset variants.

* entity streams: one gzip-compressed JSON Lines file per entity, packaged
  in an uncompressed tar archive;
* global stream: a single gzip-compressed JSON Lines file with every
  incremental revision in ascending revision-id order, produced by a
  hierarchical k-way merge of the entity streams.

All writers are byte-deterministic: fixed gzip level, zero mtime and no file
name in gzip headers, normalized tar metadata, fixed JSON field order.
"""

from __future__ import annotations

import gzip
import heapq
import io
import json
import os
import re
import tarfile
import tempfile
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator, Optional, Sequence, Union

from kgdelta.delta import IncrementalRevision
from kgdelta.errors import (
    ArchiveError,
    CorruptStreamError,
    DuplicateRevisionId,
    SchemaError,
    SortViolation,
    UnknownEntity,
)
from kgdelta.model import (
    Anonymous,
    EntityId,
    EntityPage,
    RevisionMeta,
    User,
    format_timestamp,
    parse_entity_id,
    parse_timestamp,
)
from kgdelta.rdf import parse_triple, render_triple

GZIP_LEVEL = 6
RUN_GZIP_LEVEL = 1
DEFAULT_FAN_IN = 64
BUCKET_SIZE = 100_000

ENTITY_ARCHIVE_NAME = "entity-streams.tar"
GLOBAL_STREAM_NAME = "global-stream.jsonl.gz"

PathLike = Union[str, os.PathLike]


# -- record encoding ---------------------------------------------------------


def revision_to_json(rev: IncrementalRevision) -> dict:
    meta = rev.meta
    c = meta.contributor
    if isinstance(c, User):
        contributor: Optional[dict] = {"name": c.name, "id": c.id}
    elif isinstance(c, Anonymous):
        contributor = {"ip": c.ip}
    else:
        contributor = None
    return {
        "entity": {
            "id": str(rev.entity.entity_id),
            "pageId": rev.entity.page_id,
            "namespace": rev.entity.namespace,
            "title": rev.entity.title,
        },
        "revision": {
            "id": meta.revision_id,
            "parentId": meta.parent_revision_id,
            "timestamp": format_timestamp(meta.timestamp),
            "contributor": contributor,
            "comment": meta.comment,
            "minor": meta.is_minor,
            "sha1": meta.sha1,
        },
        "deletions": [render_triple(t) for t in rev.deletions],
        "additions": [render_triple(t) for t in rev.additions],
    }


def encode_line(rev: IncrementalRevision) -> bytes:
    text = json.dumps(revision_to_json(rev), ensure_ascii=False, separators=(",", ":"))
    return text.encode("utf-8") + b"\n"


def revision_from_json(obj: dict) -> IncrementalRevision:
    e = obj["entity"]
    r = obj["revision"]
    c = r["contributor"]
    if c is None:
        contributor = None
    elif "ip" in c:
        contributor = Anonymous(c["ip"])
    else:
        contributor = User(c["name"], c["id"])
    page = EntityPage(parse_entity_id(e["id"]), int(e["pageId"]), int(e["namespace"]), e["title"])
    meta = RevisionMeta(
        revision_id=int(r["id"]),
        parent_revision_id=r["parentId"],
        timestamp=parse_timestamp(r["timestamp"]),
        contributor=contributor,
        comment=r["comment"],
        is_minor=bool(r["minor"]),
        sha1=r["sha1"],
    )
    deletions = tuple(parse_triple(s) for s in obj["deletions"])
    additions = tuple(parse_triple(s) for s in obj["additions"])
    return IncrementalRevision(page, meta, deletions, additions)


def decode_line(line: bytes | str, line_number: int) -> IncrementalRevision:
    try:
        obj = json.loads(line)
        if not isinstance(obj, dict):
            raise ValueError("line is not a JSON object")
        return revision_from_json(obj)
    except (ValueError, KeyError, TypeError) as e:
        raise SchemaError(line_number, f"{type(e).__name__}: {e}") from None


_REVISION_ID_RE = re.compile(rb'"revision":\{"id":(\d+)')


def line_revision_id(line: bytes) -> int:
    """Revision id of an encoded line, without decoding the whole record."""
    m = _REVISION_ID_RE.search(line)
    if m is None:
        raise ValueError("line carries no revision id")
    return int(m.group(1))


# -- gzip helpers -------------------------------------------------------------


def gzip_writer(sink: BinaryIO, level: int = GZIP_LEVEL) -> gzip.GzipFile:
    return gzip.GzipFile(filename="", mode="wb", fileobj=sink, compresslevel=level, mtime=0)


def _iter_gzip_lines(fh: BinaryIO, source: object) -> Iterator[bytes]:
    try:
        with gzip.GzipFile(fileobj=fh, mode="rb") as gz:
            for line in gz:
                yield line
    except (EOFError, zlib.error, gzip.BadGzipFile, OSError) as e:
        try:
            offset = fh.tell()
        except (OSError, ValueError):
            offset = -1
        raise CorruptStreamError(source, offset, f"{type(e).__name__}: {e}") from None


def _open_source(source: Union[PathLike, BinaryIO, bytes]) -> tuple[BinaryIO, object, bool]:
    if isinstance(source, bytes):
        return io.BytesIO(source), "<bytes>", True
    if isinstance(source, (str, os.PathLike)):
        return open(source, "rb"), os.fspath(source), True
    return source, getattr(source, "name", "<stream>"), False


# -- entity streams ----------------------------------------------------------


def member_name(entity_id: EntityId) -> str:
    kind_dir = "properties" if entity_id.is_property else "items"
    return f"{kind_dir}/{entity_id.number // BUCKET_SIZE:05d}/{entity_id}.jsonl.gz"


@dataclass
class EntityStream:
    entity_id: EntityId
    revisions: Sequence[IncrementalRevision] = field(default_factory=list)

    @property
    def path(self) -> str:
        return member_name(self.entity_id)


class EntityStreamWriter:
    """Append incremental revisions of one entity to a gzip JSON Lines sink."""

    def __init__(self, entity_id: EntityId, sink: BinaryIO) -> None:
        self.entity_id = entity_id
        self.count = 0
        self._sink = sink
        self._start = sink.tell() if sink.seekable() else 0
        self._gz = gzip_writer(sink)
        self._last: Optional[int] = None

    def write(self, rev: IncrementalRevision) -> None:
        if rev.entity.entity_id != self.entity_id:
            raise ValueError(f"revision of {rev.entity.entity_id} written to {self.entity_id}")
        if self._last is not None and rev.revision_id <= self._last:
            raise SortViolation(str(self.entity_id), rev.revision_id)
        self._last = rev.revision_id
        self._gz.write(encode_line(rev))
        self.count += 1

    def close(self) -> int:
        """Finish the gzip member; returns compressed bytes written."""
        self._gz.close()
        return self._sink.tell() - self._start if self._sink.seekable() else -1


def write_entity_stream(stream: EntityStream, sink: BinaryIO) -> int:
    writer = EntityStreamWriter(stream.entity_id, sink)
    try:
        for rev in stream.revisions:
            writer.write(rev)
    except OSError as e:
        raise OSError(f"writing stream of {stream.entity_id}: {e}") from e
    return writer.close()


def _iter_revisions(
    lines: Iterable[bytes], source: object, entity: Optional[EntityId]
) -> Iterator[IncrementalRevision]:
    last: Optional[int] = None
    for n, line in enumerate(lines, start=1):
        rev = decode_line(line, n)
        if entity is not None and rev.entity.entity_id != entity:
            raise SchemaError(n, f"revision of {rev.entity.entity_id} in stream of {entity}")
        if last is not None and rev.revision_id <= last:
            if rev.revision_id == last and entity is None:
                raise DuplicateRevisionId(last)
            raise SortViolation(source, rev.revision_id)
        last = rev.revision_id
        yield rev


def read_entity(
    source: Union[PathLike, BinaryIO, bytes], entity: Optional[EntityId] = None
) -> Iterator[IncrementalRevision]:
    """Stream the revisions of one entity-stream file, checking their order."""
    fh, name, owned = _open_source(source)
    try:
        yield from _iter_revisions(_iter_gzip_lines(fh, name), name, entity)
    finally:
        if owned:
            fh.close()


def read_global(source: Union[PathLike, BinaryIO, bytes]) -> Iterator[IncrementalRevision]:
    """Stream the global stream, checking strict global revision-id order."""
    fh, name, owned = _open_source(source)
    try:
        yield from _iter_revisions(_iter_gzip_lines(fh, name), name, None)
    finally:
        if owned:
            fh.close()


# -- tar packaging -----------------------------------------------------------


def _tarinfo(name: str, size: int) -> tarfile.TarInfo:
    info = tarfile.TarInfo(name)
    info.size = size
    info.mtime = 0
    info.mode = 0o644
    info.uid = info.gid = 0
    info.uname = info.gname = ""
    info.type = tarfile.REGTYPE
    return info


def package_archive(
    members: Iterable[tuple[EntityId, Union[PathLike, bytes]]], sink: BinaryIO
) -> list[str]:
    """Write a tar of entity-stream files; returns member names in archive order.

    Members are ordered properties first, then items, by ascending number.
    """
    entries = sorted(members, key=lambda m: m[0].sort_key())
    names: list[str] = []
    for (a, _), (b, _) in zip(entries, entries[1:]):
        if a == b:
            raise ArchiveError(f"duplicate archive member {member_name(a)}")
    with tarfile.open(fileobj=sink, mode="w", format=tarfile.USTAR_FORMAT) as tar:
        for entity_id, content in entries:
            name = member_name(entity_id)
            if isinstance(content, bytes):
                tar.addfile(_tarinfo(name, len(content)), io.BytesIO(content))
            else:
                with open(content, "rb") as fh:
                    size = os.fstat(fh.fileno()).st_size
                    tar.addfile(_tarinfo(name, size), fh)
            names.append(name)
    return names


def _member_entity(name: str) -> Optional[EntityId]:
    base = name.rsplit("/", 1)[-1]
    if not base.endswith(".jsonl.gz"):
        return None
    return parse_entity_id(base[: -len(".jsonl.gz")])


class EntityArchive:
    """Read access to a packaged entity-streams archive."""

    def __init__(self, path: PathLike) -> None:
        self.path = os.fspath(path)
        self._tar = tarfile.open(self.path, mode="r:")
        self._members = {}
        for m in self._tar.getmembers():
            eid = _member_entity(m.name) if m.isfile() else None
            if eid is not None:
                self._members[eid] = m

    def close(self) -> None:
        self._tar.close()

    def __enter__(self) -> "EntityArchive":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    def entities(self) -> list[EntityId]:
        return list(self._members)

    def __contains__(self, entity: EntityId) -> bool:
        return entity in self._members

    def member_bytes(self, entity: EntityId) -> bytes:
        member = self._members.get(entity)
        if member is None:
            raise UnknownEntity(str(entity))
        fh = self._tar.extractfile(member)
        assert fh is not None
        return fh.read()

    def read_entity(self, entity: EntityId) -> Iterator[IncrementalRevision]:
        member = self._members.get(entity)
        if member is None:
            raise UnknownEntity(str(entity))
        fh = self._tar.extractfile(member)
        assert fh is not None
        source = f"{self.path}:{member.name}"
        yield from _iter_revisions(_iter_gzip_lines(fh, source), source, entity)

    def __iter__(self) -> Iterator[tuple[EntityId, Iterator[IncrementalRevision]]]:
        for entity in self._members:
            yield entity, self.read_entity(entity)

    def iter_revisions(self) -> Iterator[IncrementalRevision]:
        """All revisions, entity by entity in archive order."""
        for _, revs in self:
            yield from revs


# -- hierarchical merge ------------------------------------------------------


@dataclass
class MergeResult:
    lines: int
    levels: int
    runs_created: int


def _keyed_lines(path: PathLike) -> Iterator[tuple[int, bytes]]:
    last: Optional[int] = None
    with open(path, "rb") as fh:
        for line in _iter_gzip_lines(fh, os.fspath(path)):
            rid = line_revision_id(line)
            if last is not None and rid <= last:
                raise SortViolation(os.fspath(path), rid)
            last = rid
            yield rid, line


def _merge_into(inputs: Sequence[PathLike], sink: BinaryIO, level: int) -> int:
    count = 0
    last: Optional[int] = None
    with gzip_writer(sink, level) as gz:
        for rid, line in heapq.merge(*(_keyed_lines(p) for p in inputs), key=lambda x: x[0]):
            if last is not None and rid <= last:
                raise DuplicateRevisionId(rid)
            last = rid
            gz.write(line)
            count += 1
    return count


def merge_global(
    inputs: Sequence[PathLike],
    sink: BinaryIO,
    fan_in: int = DEFAULT_FAN_IN,
    scratch_dir: Optional[PathLike] = None,
) -> MergeResult:
    """Merge sorted entity-stream files into one globally sorted stream.

    At most ``fan_in`` files are open at once; intermediate runs are written
    to ``scratch_dir`` and deleted once consumed.
    """
    if fan_in < 2:
        raise ValueError("fan_in must be at least 2")
    current: list[PathLike] = list(inputs)
    intermediate: set[str] = set()
    levels = 0
    runs = 0
    if scratch_dir is not None:
        os.makedirs(scratch_dir, exist_ok=True)
    with tempfile.TemporaryDirectory(prefix="merge-", dir=scratch_dir) as tmp:
        while len(current) > fan_in:
            levels += 1
            nxt: list[PathLike] = []
            for i in range(0, len(current), fan_in):
                group = current[i : i + fan_in]
                run = Path(tmp) / f"run-{levels:02d}-{i // fan_in:06d}.jsonl.gz"
                with open(run, "wb") as fh:
                    _merge_into(group, fh, RUN_GZIP_LEVEL)
                runs += 1
                for p in group:
                    if os.fspath(p) in intermediate:
                        os.remove(p)
                        intermediate.discard(os.fspath(p))
                intermediate.add(os.fspath(run))
                nxt.append(run)
            current = nxt
        levels += 1
        lines = _merge_into(current, sink, GZIP_LEVEL)
    return MergeResult(lines=lines, levels=levels, runs_created=runs)
