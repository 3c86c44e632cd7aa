"""Consumer-facing access to a built dataset directory, and its validation."""

from __future__ import annotations

import hashlib
import json
import os
import tarfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

from kgdelta.delta import GraphState, IncrementalRevision, diff_key
from kgdelta.errors import KgDeltaError, ReplayUnderflow, UnknownEntity, UnknownRevision
from kgdelta.model import EntityId, parse_entity_id
from kgdelta.rdf import Triple
from kgdelta.pipeline import MANIFEST_NAME, SKIP_REPORT_NAME
from kgdelta.streams import (
    ENTITY_ARCHIVE_NAME,
    GLOBAL_STREAM_NAME,
    EntityArchive,
    encode_line,
    read_global,
)

_MOD = 1 << 256


class Dataset:
    """A dataset directory holding one or both variants.

    >>> ds = Dataset("out")                                # doctest: +SKIP
    >>> for rev in ds.iter_global(): ...                   # doctest: +SKIP
    >>> graph = ds.replay("Q42")                           # doctest: +SKIP
    """

    def __init__(self, path: os.PathLike | str) -> None:
        self.path = Path(path)
        if not self.path.is_dir():
            raise FileNotFoundError(f"dataset directory {self.path} does not exist")
        self.archive_path = self.path / ENTITY_ARCHIVE_NAME
        self.global_path = self.path / GLOBAL_STREAM_NAME

    @property
    def has_entity_streams(self) -> bool:
        return self.archive_path.exists()

    @property
    def has_global_stream(self) -> bool:
        return self.global_path.exists()

    def iter_global(self) -> Iterator[IncrementalRevision]:
        return read_global(self.global_path)

    def iter_entity_streams(self) -> Iterator[IncrementalRevision]:
        with EntityArchive(self.archive_path) as archive:
            yield from archive.iter_revisions()

    def iter_revisions(self, variant: str = "global") -> Iterator[IncrementalRevision]:
        if variant == "global":
            return self.iter_global()
        if variant == "entity":
            return self.iter_entity_streams()
        raise ValueError(f"unknown variant {variant!r}")

    def entity_revisions(self, entity: EntityId | str) -> Iterator[IncrementalRevision]:
        eid = parse_entity_id(entity) if isinstance(entity, str) else entity
        if self.has_entity_streams:
            with EntityArchive(self.archive_path) as archive:
                if eid not in archive:
                    raise UnknownEntity(str(eid))
                yield from archive.read_entity(eid)
            return
        found = False
        for rev in self.iter_global():
            if rev.entity.entity_id == eid:
                found = True
                yield rev
        if not found:
            raise UnknownEntity(str(eid))

    def replay(self, entity: EntityId | str, at_revision: Optional[int] = None) -> set[Triple]:
        """Graph of ``entity`` after ``at_revision`` (default: its latest revision)."""
        state = GraphState()
        for rev in self.entity_revisions(entity):
            if at_revision is not None and rev.revision_id > at_revision:
                break
            state.apply(rev)
        if at_revision is not None and state.last_revision_id != at_revision:
            raise UnknownRevision(f"{entity} has no revision {at_revision}")
        return state.triples()


# -- validation ----------------------------------------------------------------


@dataclass
class Violation:
    check: str
    error: str
    message: str

    def __str__(self) -> str:
        return f"[{self.check}] {self.error}: {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)
    global_records: int = 0
    entity_records: int = 0
    entities: int = 0
    replayed_entities: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, check: str, exc: BaseException | str) -> None:
        if isinstance(exc, BaseException):
            self.violations.append(Violation(check, type(exc).__name__, str(exc)))
        else:
            self.violations.append(Violation(check, "Violation", exc))


def _record_digest(rev: IncrementalRevision) -> int:
    return int.from_bytes(hashlib.sha256(encode_line(rev)).digest(), "big")


def _check_disjoint(rev: IncrementalRevision, report: ValidationReport, check: str) -> None:
    dels = {diff_key(t) for t in rev.deletions}
    if any(diff_key(t) in dels for t in rev.additions):
        report.add(check, f"revision {rev.revision_id} deletes and adds the same triple")


def _sampled(entities: list[EntityId], sample: int) -> set[EntityId]:
    if sample <= 0 or sample >= len(entities):
        return set(entities)
    ranked = sorted(entities, key=lambda e: hashlib.sha1(str(e).encode()).digest())
    return set(ranked[:sample])


def _check_build_records(ds: Dataset, report: ValidationReport) -> None:
    """Surface hard errors from the manifest and unparseable revisions from the skip report."""
    manifest = ds.path / MANIFEST_NAME
    if manifest.exists():
        try:
            errors = json.loads(manifest.read_text(encoding="utf-8")).get("hardErrors", [])
        except (ValueError, AttributeError) as e:
            report.add("manifest", f"unreadable manifest: {e}")
        else:
            for err in errors:
                report.violations.append(
                    Violation(f"build {err.get('stage')}", err.get("error", "?"), err.get("message", ""))
                )
    skip_report = ds.path / SKIP_REPORT_NAME
    if skip_report.exists():
        with open(skip_report, encoding="utf-8") as fh:
            for number, line in enumerate(fh, 1):
                try:
                    rec = json.loads(line)
                except ValueError as e:
                    report.add("skip-report", f"line {number}: {e}")
                    continue
                # deleted revision text is legitimate; unparseable JSON is data loss
                if rec.get("stage") == "parse":
                    report.violations.append(Violation(
                        "skip-report",
                        "MalformedRevisionJson",
                        f"revision {rec.get('revisionId')} of {rec.get('entityId')}: {rec.get('cause')}",
                    ))


def validate_dataset(path: os.PathLike | str, sample: int = 0) -> ValidationReport:
    """Check sortedness, schema, variant equivalence and replay consistency.

    ``sample`` limits replay to that many entities (chosen by a stable hash);
    0 replays every entity.  Hard errors recorded in the manifest and
    unparseable revisions listed in the skip report count as violations.
    """
    report = ValidationReport()
    ds = Dataset(path)
    if not ds.has_global_stream and not ds.has_entity_streams:
        report.add("layout", "no dataset variant found")
        return report
    _check_build_records(ds, report)

    entities: list[EntityId] = []
    archive: Optional[EntityArchive] = None
    entity_complete = ds.has_entity_streams
    if ds.has_entity_streams:
        try:
            archive = EntityArchive(ds.archive_path)
            entities = archive.entities()
        except (OSError, ValueError, tarfile.TarError, KgDeltaError) as e:
            report.add("entity-streams", e)
            entity_complete = False
            archive = None
    replayed = _sampled(entities, sample) if archive is not None else None

    global_sum = entity_sum = 0
    global_complete = ds.has_global_stream
    if ds.has_global_stream:
        states: dict[EntityId, GraphState] = {}
        broken: set[EntityId] = set()
        try:
            for rev in ds.iter_global():
                report.global_records += 1
                global_sum = (global_sum + _record_digest(rev)) % _MOD
                _check_disjoint(rev, report, "global")
                eid = rev.entity.entity_id
                if eid in broken:
                    continue
                state = states.get(eid)
                if state is None:
                    # without an archive the first ``sample`` entities seen are replayed
                    wanted = eid in replayed if replayed is not None else (
                        sample <= 0 or len(states) < sample
                    )
                    if not wanted:
                        continue
                    state = states[eid] = GraphState()
                try:
                    state.apply(rev)
                except ReplayUnderflow as e:
                    report.add(f"global {eid}", e)
                    broken.add(eid)
        except KgDeltaError as e:
            report.add("global", e)
            global_complete = False

    if archive is not None:
        with archive:
            report.entities = len(entities)
            for eid in entities:
                state = GraphState() if eid in replayed else None
                try:
                    for rev in archive.read_entity(eid):
                        report.entity_records += 1
                        entity_sum = (entity_sum + _record_digest(rev)) % _MOD
                        _check_disjoint(rev, report, f"entity {eid}")
                        if state is not None:
                            state.apply(rev)
                except KgDeltaError as e:
                    report.add(f"entity {eid}", e)
                    entity_complete = False
                if state is not None:
                    report.replayed_entities += 1
    elif ds.has_global_stream:
        report.replayed_entities = len(states)

    if global_complete and entity_complete:
        if report.global_records != report.entity_records or global_sum != entity_sum:
            report.add(
                "variant-equivalence",
                f"global stream ({report.global_records} records) and entity streams "
                f"({report.entity_records} records) differ",
            )
    return report
