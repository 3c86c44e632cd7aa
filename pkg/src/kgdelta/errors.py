"""Exception hierarchy shared by all pipeline stages."""

from __future__ import annotations


class KgDeltaError(Exception):
    """Base class for every error raised by this package."""


class MalformedEntityId(KgDeltaError, ValueError):
    def __init__(self, text: object) -> None:
        super().__init__(f"malformed entity id: {text!r}")
        self.text = text


class MalformedRevisionJson(KgDeltaError, ValueError):
    def __init__(self, revision_id: int | None, cause: str) -> None:
        super().__init__(f"revision {revision_id}: malformed JSON payload: {cause}")
        self.revision_id = revision_id
        self.cause = cause


class DumpFormatError(KgDeltaError):
    """Structural problem in the XML export framing."""

    def __init__(self, position: object, cause: str) -> None:
        super().__init__(f"dump format error at {position}: {cause}")
        self.position = position
        self.cause = cause


class ReplayUnderflow(KgDeltaError):
    """A delta deletes a triple that is not present in the replayed graph."""

    def __init__(self, revision_id: int, triple: str) -> None:
        super().__init__(f"revision {revision_id}: deletion of absent triple {triple}")
        self.revision_id = revision_id
        self.triple = triple


class SortViolation(KgDeltaError):
    def __init__(self, file: object, revision_id: int) -> None:
        super().__init__(f"{file}: revision {revision_id} is out of order")
        self.file = file
        self.revision_id = revision_id


class DuplicateRevisionId(KgDeltaError):
    def __init__(self, revision_id: int) -> None:
        super().__init__(f"revision id {revision_id} occurs more than once")
        self.revision_id = revision_id


class SchemaError(KgDeltaError):
    """A stream line does not conform to the incremental-revision schema."""

    def __init__(self, line_number: int, cause: str) -> None:
        super().__init__(f"line {line_number}: {cause}")
        self.line_number = line_number
        self.cause = cause


class CorruptStreamError(KgDeltaError):
    """The compressed container itself is damaged (e.g. a truncated gzip member)."""

    def __init__(self, source: object, offset: int, cause: str) -> None:
        super().__init__(f"{source}: corrupt stream at compressed byte offset {offset}: {cause}")
        self.source = source
        self.offset = offset
        self.cause = cause


class ArchiveError(KgDeltaError):
    pass


class UnknownEntity(KgDeltaError, LookupError):
    pass


class UnknownRevision(KgDeltaError, LookupError):
    pass
