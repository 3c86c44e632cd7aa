"""End-to-end dataset construction: dump -> graphs -> deltas -> both variants."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import shutil
from collections import deque
from concurrent.futures import Future, ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional

from kgdelta.delta import make_incremental
from kgdelta.errors import ArchiveError, KgDeltaError, MalformedRevisionJson
from kgdelta.ingest import RawRevision, SkipRecord, SkipReport, iter_entities
from kgdelta.model import EntityId, EntityPage, parse_revision_json
from kgdelta.rdf import Triple, serialize_revision
from kgdelta.streams import (
    DEFAULT_FAN_IN,
    ENTITY_ARCHIVE_NAME,
    GLOBAL_STREAM_NAME,
    EntityStreamWriter,
    member_name,
    merge_global,
    package_archive,
)

logger = logging.getLogger(__name__)

SCRATCH_ENV = "KGDELTA_SCRATCH"
VARIANTS = ("entity-streams", "global-stream")
MANIFEST_NAME = "manifest.json"
SKIP_REPORT_NAME = "skip-report.jsonl"


@dataclass
class PipelineConfig:
    input_paths: list[Path]
    output_dir: Path
    scratch_dir: Optional[Path] = None
    fan_in: int = DEFAULT_FAN_IN
    workers: int = 1
    skip_report_path: Optional[Path] = None
    variants: tuple[str, ...] = VARIANTS

    def __post_init__(self) -> None:
        self.input_paths = [Path(p) for p in self.input_paths]
        self.output_dir = Path(self.output_dir)
        if self.scratch_dir is None:
            env = os.environ.get(SCRATCH_ENV)
            self.scratch_dir = Path(env) if env else self.output_dir.with_name(
                self.output_dir.name + ".scratch"
            )
        self.scratch_dir = Path(self.scratch_dir)
        if self.skip_report_path is None:
            self.skip_report_path = self.output_dir / SKIP_REPORT_NAME
        if self.fan_in < 2:
            raise ValueError("fan_in must be at least 2")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.output_dir.resolve() == self.scratch_dir.resolve():
            raise ValueError("output and scratch directories must differ")
        unknown = set(self.variants) - set(VARIANTS)
        if unknown or not self.variants:
            raise ValueError(f"variants must be a non-empty subset of {VARIANTS}")


@dataclass
class EntityResult:
    entity_id: EntityId
    path: str
    revisions: int = 0
    additions: int = 0
    deletions: int = 0
    skips: list[SkipRecord] = field(default_factory=list)


def entity_deltas(
    page: EntityPage, revisions: Iterable[RawRevision], skips: list[SkipRecord]
) -> Iterator:
    """Incremental revisions of one entity, in dump order.

    A revision whose payload is empty or cannot be parsed is recorded in
    ``skips`` and treated as a change-free revision.
    """
    prev: frozenset[Triple] = frozenset()
    eid = str(page.entity_id)
    for raw in revisions:
        rid = raw.meta.revision_id
        graph = prev
        if not raw.payload.strip():
            skips.append(SkipRecord(rid, eid, "ingest", "empty revision text"))
        else:
            try:
                content = parse_revision_json(raw.payload, rid)
            except MalformedRevisionJson as e:
                logger.error("revision %s of %s: %s", rid, eid, e.cause)
                skips.append(SkipRecord(rid, eid, "parse", e.cause))
            else:
                graph = serialize_revision(page.entity_id, content)
        yield make_incremental(page, raw.meta, prev, graph)
        prev = graph


def process_entity(
    page: EntityPage, revisions: Iterable[RawRevision], path: str
) -> EntityResult:
    result = EntityResult(page.entity_id, path)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "wb") as fh:
        writer = EntityStreamWriter(page.entity_id, fh)
        for rev in entity_deltas(page, revisions, result.skips):
            writer.write(rev)
            result.revisions += 1
            result.additions += len(rev.additions)
            result.deletions += len(rev.deletions)
        writer.close()
    return result


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class BuildResult:
    manifest: dict
    manifest_path: Path

    @property
    def ok(self) -> bool:
        return not self.manifest["hardErrors"]


def _build_entity_files(config: PipelineConfig, skips: SkipReport) -> list[EntityResult]:
    entity_dir = Path(config.scratch_dir) / "entities"
    results: list[EntityResult] = []
    seen: set[EntityId] = set()

    def target(page: EntityPage) -> str:
        # part files are assumed entity-disjoint; a repeat would clobber a stream
        if page.entity_id in seen:
            raise ArchiveError(f"entity {page.entity_id} occurs in more than one page")
        seen.add(page.entity_id)
        return os.fspath(entity_dir / member_name(page.entity_id))

    entities = iter_entities(config.input_paths, skips)
    if config.workers == 1:
        for page, revisions in entities:
            results.append(process_entity(page, revisions, target(page)))
        return results

    # whole entities fan out; a bounded in-flight queue caps memory
    pending: deque[Future] = deque()
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        for page, revisions in entities:
            pending.append(pool.submit(process_entity, page, list(revisions), target(page)))
            while len(pending) >= 2 * config.workers:
                results.append(pending.popleft().result())
        while pending:
            results.append(pending.popleft().result())
    return results


def build(config: PipelineConfig) -> BuildResult:
    """Run the whole construction and write a manifest, even on failure."""
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    scratch = Path(config.scratch_dir)
    if scratch.exists():
        shutil.rmtree(scratch)
    scratch.mkdir(parents=True)

    skips = SkipReport()
    errors: list[dict] = []
    results: list[EntityResult] = []
    outputs: dict[str, Path] = {}
    merge_levels = 0
    stage = "ingest"
    try:
        results = _build_entity_files(config, skips)
        results.sort(key=lambda r: r.entity_id.sort_key())
        members = [(r.entity_id, r.path) for r in results]
        if "entity-streams" in config.variants:
            stage = "package"
            target = out / ENTITY_ARCHIVE_NAME
            with open(target, "wb") as fh:
                package_archive(members, fh)
            outputs[ENTITY_ARCHIVE_NAME] = target
        if "global-stream" in config.variants:
            stage = "merge"
            target = out / GLOBAL_STREAM_NAME
            with open(target, "wb") as fh:
                merged = merge_global([p for _, p in members], fh, config.fan_in, scratch)
            merge_levels = merged.levels
            outputs[GLOBAL_STREAM_NAME] = target
    except (KgDeltaError, OSError, ValueError) as e:
        logger.error("stage %s failed: %s", stage, e)
        errors.append({"stage": stage, "error": type(e).__name__, "message": str(e)})

    all_skips = skips.records + [s for r in results for s in r.skips]
    all_skips.sort(key=lambda s: (s.revision_id or 0, s.entity_id or "", s.stage, s.cause))
    skip_path = Path(config.skip_report_path)
    skip_path.parent.mkdir(parents=True, exist_ok=True)
    with open(skip_path, "w", encoding="utf-8", newline="\n") as fh:
        for s in all_skips:
            fh.write(json.dumps(s.to_json(), ensure_ascii=False, separators=(",", ":")) + "\n")
    if skip_path.parent.resolve() == out.resolve():
        outputs[skip_path.name] = skip_path

    manifest = {
        "inputs": [
            {"name": p.name, "bytes": p.stat().st_size, "sha256": sha256_file(p)}
            for p in config.input_paths
            if p.exists()
        ],
        "variants": [v for v in VARIANTS if v in config.variants],
        "fanIn": config.fan_in,
        "mergeLevels": merge_levels,
        "counts": {
            "entities": len(results),
            "revisions": sum(r.revisions for r in results),
            "tripleAdditions": sum(r.additions for r in results),
            "tripleDeletions": sum(r.deletions for r in results),
            "skippedRevisions": sum(1 for s in all_skips if s.revision_id is not None),
            "skippedPages": skips.skipped_pages,
        },
        "outputs": {
            name: {"bytes": path.stat().st_size, "sha256": sha256_file(path)}
            for name, path in sorted(outputs.items())
        },
        "hardErrors": errors,
        "partial": bool(errors),
    }
    manifest_path = out / MANIFEST_NAME
    with open(manifest_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=False)
        fh.write("\n")
    if not errors:
        shutil.rmtree(scratch, ignore_errors=True)
    return BuildResult(manifest, manifest_path)
