"""Dataset characteristics computed in one pass over a stream of incremental revisions.

Accepts either the global stream or the concatenation of entity streams;
both produce identical reports because every accumulator is keyed by entity
and all sums are exact integer arithmetic.
"""

from __future__ import annotations

import csv
import json
import os
import sqlite3
from bisect import bisect_left, bisect_right
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Optional

from kgdelta.delta import IncrementalRevision, diff_key
from kgdelta.errors import SortViolation
from kgdelta.rdf import PREFIXES

DAY = 86_400
YEAR = 365 * DAY

REVISIONS_PER_ENTITY_BUCKETS = ("1", "2-9", "10-99", ">=100")
INTER_REVISION_BUCKETS = (
    "0-1s", "1s-1min", "1min-1h", "1h-1d", "1d-7d", "7d-30d", "30d-1yr", ">=1yr",
)
COUNT_BUCKETS = ("0", "1", "2-9", ">=10")
LATENCY_BUCKETS = ("[0,1]", "(1,30]", "(30,180]", "(180,365]", "(365,inf)")

_INTER_REVISION_BOUNDS = (1, 60, 3600, DAY, 7 * DAY, 30 * DAY, YEAR)
_LATENCY_BOUNDS = (DAY, 30 * DAY, 180 * DAY, 365 * DAY)
_SAME_AS = PREFIXES["owl"] + "sameAs"


def revisions_bucket(n: int) -> int:
    return 0 if n <= 1 else 1 if n < 10 else 2 if n < 100 else 3


def count_bucket(n: int) -> int:
    return 0 if n <= 0 else 1 if n == 1 else 2 if n < 10 else 3


def inter_revision_bucket(seconds: int) -> int:
    """Half-open buckets ``[0,1s), [1s,1min), ...``; negative gaps count as 0."""
    return bisect_right(_INTER_REVISION_BOUNDS, max(seconds, 0))


def latency_bucket(seconds: int) -> int:
    """Day buckets closed on the right: ``[0,1], (1,30], ...``."""
    return bisect_left(_LATENCY_BOUNDS, seconds)


@dataclass
class Histogram:
    labels: tuple[str, ...]
    counts: list[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.counts:
            self.counts = [0] * len(self.labels)

    def add(self, index: int, n: int = 1) -> None:
        self.counts[index] += n

    @property
    def population(self) -> int:
        return sum(self.counts)

    def relative(self) -> list[float]:
        total = self.population
        return [c / total if total else 0.0 for c in self.counts]

    def merge(self, other: "Histogram") -> None:
        self.counts = [a + b for a, b in zip(self.counts, other.counts)]


@dataclass
class Distribution:
    """Exact mean, population standard deviation and median of integer samples."""

    values: Counter = field(default_factory=Counter)
    count: int = 0
    total: int = 0
    total_sq: int = 0

    def add(self, x: int) -> None:
        self.values[x] += 1
        self.count += 1
        self.total += x
        self.total_sq += x * x

    def merge(self, other: "Distribution") -> None:
        self.values.update(other.values)
        self.count += other.count
        self.total += other.total
        self.total_sq += other.total_sq

    @property
    def mean(self) -> float:
        return self.total / self.count if self.count else 0.0

    @property
    def stddev(self) -> float:
        if not self.count:
            return 0.0
        var_num = self.count * self.total_sq - self.total * self.total
        return (var_num / (self.count * self.count)) ** 0.5

    @property
    def median(self) -> float:
        if not self.count:
            return 0.0
        lo_rank, hi_rank = (self.count - 1) // 2, self.count // 2
        lo = hi = None
        seen = 0
        for v in sorted(self.values):
            seen += self.values[v]
            if lo is None and seen > lo_rank:
                lo = v
            if seen > hi_rank:
                hi = v
                break
        return (lo + hi) / 2

    def moments(self, scale: float = 1) -> dict:
        return {
            "count": self.count,
            "mean": self.mean / scale,
            "stddev": self.stddev / scale,
            "median": self.median / scale,
        }


@dataclass
class PairedHistogram:
    """Two histograms over the same buckets (additions/deletions, first add/first delete)."""

    first: Histogram
    second: Histogram
    first_dist: Distribution = field(default_factory=Distribution)
    second_dist: Distribution = field(default_factory=Distribution)


@dataclass
class StatsReport:
    cumulative_by_year: list[tuple[int, int, int]]
    revisions_per_entity: Histogram
    revisions_per_entity_dist: Distribution
    inter_revision_time: Histogram
    inter_revision_dist: Distribution
    deltas_per_revision: PairedHistogram
    triple_latency: PairedHistogram
    deletions_per_triple: Histogram
    deletions_per_triple_dist: Distribution
    entities: int = 0
    revisions: int = 0
    redirect_revisions: int = 0
    distinct_triples: int = 0
    deleted_triples: int = 0
    readded_triples: int = 0

    def summary(self) -> dict:
        return {
            "entities": self.entities,
            "revisions": self.revisions,
            "redirectRevisions": self.redirect_revisions,
            "distinctTriples": self.distinct_triples,
            "deletedTriples": self.deleted_triples,
            "readdedTriples": self.readded_triples,
            "revisionsPerEntity": self.revisions_per_entity_dist.moments(),
            "interRevisionTimeDays": self.inter_revision_dist.moments(DAY),
            "additionsPerRevision": self.deltas_per_revision.first_dist.moments(),
            "deletionsPerRevision": self.deltas_per_revision.second_dist.moments(),
            "firstAdditionDays": self.triple_latency.first_dist.moments(DAY),
            "firstDeletionDays": self.triple_latency.second_dist.moments(DAY),
            "deletionsPerTriple": self.deletions_per_triple_dist.moments(),
        }


def same_as_balance(rev: IncrementalRevision) -> int:
    """Net change in the number of ``owl:sameAs`` triples made by ``rev``."""
    added = sum(t.predicate.value == _SAME_AS for t in rev.additions)
    return added - sum(t.predicate.value == _SAME_AS for t in rev.deletions)


def classify_revision(rev: IncrementalRevision, prior_same_as: int = 0) -> str:
    """``"redirect"`` if the entity is a redirect after ``rev``, else ``"content"``.

    ``prior_same_as`` is the number of sameAs triples in the graph before
    ``rev``.  Both kinds are counted identically in every statistic.
    """
    return "redirect" if prior_same_as + same_as_balance(rev) > 0 else "content"


class SqliteTripleStore:
    """Per-triple state spilled to an on-disk SQLite table."""

    def __init__(self, path: os.PathLike | str) -> None:
        self._db = sqlite3.connect(os.fspath(path))
        self._db.execute(
            "CREATE TABLE IF NOT EXISTS t (k TEXT PRIMARY KEY, a INTEGER, d INTEGER, r INTEGER)"
        )

    def get(self, key: str) -> Optional[list]:
        row = self._db.execute("SELECT a, d, r FROM t WHERE k = ?", (key,)).fetchone()
        return list(row) if row else None

    def __setitem__(self, key: str, value: list) -> None:
        self._db.execute("INSERT OR REPLACE INTO t VALUES (?, ?, ?, ?)", (key, *value))

    def values(self) -> Iterable[list]:
        return (list(r) for r in self._db.execute("SELECT a, d, r FROM t"))

    def close(self) -> None:
        self._db.close()


def _epoch(ts: datetime) -> int:
    return int(ts.astimezone(timezone.utc).timestamp())


def compute_stats(
    stream: Iterable[IncrementalRevision], scratch_dir: Optional[os.PathLike | str] = None
) -> StatsReport:
    """Single pass over incremental revisions.

    Per-triple state is keyed by (entity, diff key), i.e. a triple is anchored
    to the entity whose revisions add or delete it.  With ``scratch_dir`` that
    state lives in SQLite instead of memory.
    """
    # entity -> [creation epoch, last epoch, last revision id, revision count, sameAs triples]
    entities: dict[str, list[int]] = {}
    store = SqliteTripleStore(Path(scratch_dir) / "triples.sqlite") if scratch_dir else None
    triples = store if store is not None else {}
    new_entities_by_year: Counter = Counter()
    revisions_by_year: Counter = Counter()

    inter = Histogram(INTER_REVISION_BUCKETS)
    inter_dist = Distribution()
    deltas = PairedHistogram(Histogram(COUNT_BUCKETS), Histogram(COUNT_BUCKETS))
    latency = PairedHistogram(Histogram(LATENCY_BUCKETS), Histogram(LATENCY_BUCKETS))
    revisions = redirects = readded = 0

    for rev in stream:
        eid = str(rev.entity.entity_id)
        now = _epoch(rev.meta.timestamp)
        state = entities.get(eid)
        if state is None:
            state = entities[eid] = [now, now, rev.revision_id, 0, 0]
            new_entities_by_year[rev.meta.timestamp.year] += 1
        else:
            if rev.revision_id <= state[2]:
                raise SortViolation(eid, rev.revision_id)
            gap = max(now - state[1], 0)
            inter.add(inter_revision_bucket(gap))
            inter_dist.add(gap)
            state[1], state[2] = now, rev.revision_id
        state[3] += 1
        revisions += 1
        revisions_by_year[rev.meta.timestamp.year] += 1
        if classify_revision(rev, state[4]) == "redirect":
            redirects += 1
        state[4] += same_as_balance(rev)

        deltas.first.add(count_bucket(len(rev.additions)))
        deltas.first_dist.add(len(rev.additions))
        deltas.second.add(count_bucket(len(rev.deletions)))
        deltas.second_dist.add(len(rev.deletions))

        for t in rev.deletions:
            key = eid + " " + diff_key(t)
            ts = triples.get(key)
            if ts is None:
                raise SortViolation(eid, rev.revision_id)
            if ts[1] == 0:
                age = now - ts[0]
                latency.second.add(latency_bucket(age))
                latency.second_dist.add(age)
            ts[1] += 1
            triples[key] = ts
        for t in rev.additions:
            key = eid + " " + diff_key(t)
            ts = triples.get(key)
            if ts is None:
                age = now - state[0]
                latency.first.add(latency_bucket(age))
                latency.first_dist.add(age)
                triples[key] = [now, 0, 0]
            elif ts[1] > 0 and not ts[2]:
                ts[2] = 1
                readded += 1
                triples[key] = ts

    per_entity = Histogram(REVISIONS_PER_ENTITY_BUCKETS)
    per_entity_dist = Distribution()
    for _, _, _, n, _ in entities.values():
        per_entity.add(revisions_bucket(n))
        per_entity_dist.add(n)

    per_triple = Histogram(COUNT_BUCKETS)
    per_triple_dist = Distribution()
    deleted = 0
    for _, dels, _ in triples.values():
        per_triple.add(count_bucket(dels))
        per_triple_dist.add(dels)
        deleted += dels > 0
    distinct = per_triple.population
    if store is not None:
        store.close()

    cumulative = []
    if revisions_by_year:
        ent = rev_total = 0
        for year in range(min(revisions_by_year), max(revisions_by_year) + 1):
            ent += new_entities_by_year[year]
            rev_total += revisions_by_year[year]
            cumulative.append((year, ent, rev_total))

    return StatsReport(
        cumulative_by_year=cumulative,
        revisions_per_entity=per_entity,
        revisions_per_entity_dist=per_entity_dist,
        inter_revision_time=inter,
        inter_revision_dist=inter_dist,
        deltas_per_revision=deltas,
        triple_latency=latency,
        deletions_per_triple=per_triple,
        deletions_per_triple_dist=per_triple_dist,
        entities=len(entities),
        revisions=revisions,
        redirect_revisions=redirects,
        distinct_triples=distinct,
        deleted_triples=deleted,
        readded_triples=readded,
    )


CSV_FILES = (
    "cumulative_by_year.csv",
    "revisions_per_entity.csv",
    "inter_revision_time.csv",
    "deltas_per_revision.csv",
    "triple_latency.csv",
    "deletions_per_triple.csv",
)


def _freq(x: float) -> str:
    return f"{x:.12g}"


def _write_csv(path: Path, header: list[str], rows: Iterable[list]) -> Path:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _single(path: Path, h: Histogram) -> Path:
    rows = ([label, c, _freq(f)] for label, c, f in zip(h.labels, h.counts, h.relative()))
    return _write_csv(path, ["bucket", "count", "relative_frequency"], rows)


def _paired(path: Path, first: str, second: str, p: PairedHistogram) -> Path:
    rows = (
        [label, a, _freq(fa), b, _freq(fb)]
        for label, a, fa, b, fb in zip(
            p.first.labels, p.first.counts, p.first.relative(), p.second.counts, p.second.relative()
        )
    )
    header = ["bucket", first, f"{first}_relative_frequency", second, f"{second}_relative_frequency"]
    return _write_csv(path, header, rows)


def emit_csv(report: StatsReport, out_dir: os.PathLike | str, summary: bool = True) -> list[Path]:
    """Write one CSV per figure panel (plus ``summary.json``); returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = iter(CSV_FILES)
    paths = [
        _write_csv(out / next(names), ["year", "entities", "revisions"],
                   ([y, e, r] for y, e, r in report.cumulative_by_year)),
        _single(out / next(names), report.revisions_per_entity),
        _single(out / next(names), report.inter_revision_time),
        _paired(out / next(names), "additions", "deletions", report.deltas_per_revision),
        _paired(out / next(names), "first_addition", "first_deletion", report.triple_latency),
        _single(out / next(names), report.deletions_per_triple),
    ]
    if summary:
        path = out / "summary.json"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(report.summary(), fh, indent=2)
            fh.write("\n")
        paths.append(path)
    return paths
