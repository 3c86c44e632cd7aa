import statistics
from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given
from hypothesis import strategies as st

from kgdelta.delta import IncrementalRevision
from kgdelta.errors import SortViolation
from kgdelta.model import EntityPage, RevisionMeta, parse_entity_id
from kgdelta.rdf import Iri, Literal, Triple, iri
from kgdelta.stats import (
    CSV_FILES,
    DAY,
    YEAR,
    Distribution,
    classify_revision,
    compute_stats,
    count_bucket,
    emit_csv,
    inter_revision_bucket,
    latency_bucket,
    revisions_bucket,
)
from kgdelta.streams import GLOBAL_STREAM_NAME, read_global

T0 = datetime(2013, 6, 1, tzinfo=timezone.utc)


def _rev(eid, rid, seconds, adds=(), dels=()):
    e = parse_entity_id(eid)
    meta = RevisionMeta(rid, None, T0 + timedelta(seconds=seconds), None)
    return IncrementalRevision(EntityPage(e, e.number, 0, eid), meta, tuple(dels), tuple(adds))


def _t(i):
    return Triple(Iri("http://e.org/s"), Iri("http://e.org/p"), Literal(str(i)))


@pytest.mark.parametrize("seconds, bucket", [
    (-5, 0), (0, 0), (1, 1), (59, 1), (60, 2), (3599, 2), (3600, 3), (DAY - 1, 3), (DAY, 4),
    (7 * DAY, 5), (30 * DAY - 1, 5), (30 * DAY, 6), (YEAR - 1, 6), (YEAR, 7),
])
def test_inter_revision_bucket_edges(seconds, bucket):
    assert inter_revision_bucket(seconds) == bucket


@pytest.mark.parametrize("seconds, bucket", [
    (0, 0), (DAY, 0), (DAY + 1, 1), (30 * DAY, 1), (30 * DAY + 1, 2), (180 * DAY, 2),
    (180 * DAY + 1, 3), (365 * DAY, 3), (365 * DAY + 1, 4),
])
def test_latency_bucket_edges(seconds, bucket):
    assert latency_bucket(seconds) == bucket


@pytest.mark.parametrize("n, revs, count", [
    (0, 0, 0), (1, 0, 1), (2, 1, 2), (9, 1, 2), (10, 2, 3), (99, 2, 3), (100, 3, 3),
])
def test_count_bucket_edges(n, revs, count):
    assert count_bucket(n) == count
    if n:
        assert revisions_bucket(n) == revs


@given(st.lists(st.integers(0, 10**9), min_size=1), st.lists(st.integers(0, 10**9)))
def test_distribution_matches_statistics(xs, ys):
    d = Distribution()
    for x in xs:
        d.add(x)
    assert d.mean == pytest.approx(statistics.fmean(xs), rel=1e-12)
    assert d.stddev == pytest.approx(statistics.pstdev(xs), rel=1e-9, abs=1e-6)
    assert d.median == statistics.median(xs)
    other = Distribution()
    for y in ys:
        other.add(y)
    d.merge(other)
    assert d.median == statistics.median(xs + ys)


def test_empty_stream(tmp_path):
    report = compute_stats([])
    assert report.summary()["revisions"] == 0
    assert report.summary()["revisionsPerEntity"] == {"count": 0, "mean": 0.0, "stddev": 0.0, "median": 0.0}
    paths = emit_csv(report, tmp_path)
    assert [p.name for p in paths] == list(CSV_FILES) + ["summary.json"]
    assert (tmp_path / "cumulative_by_year.csv").read_text() == "year,entities,revisions\n"
    assert (tmp_path / "revisions_per_entity.csv").read_text() == (
        "bucket,count,relative_frequency\n1,0,0\n2-9,0,0\n10-99,0,0\n>=100,0,0\n"
    )


def test_csv_golden(tmp_path):
    stream = [
        _rev("Q1", 1, 0, adds=[_t(1), _t(2), _t(3)]),
        _rev("Q1", 2, 2 * DAY, dels=[_t(1), _t(2)]),
        _rev("Q1", 3, YEAR + 2 * DAY, adds=[_t(1)]),
    ]
    emit_csv(compute_stats(stream), tmp_path, summary=False)
    assert (tmp_path / "deltas_per_revision.csv").read_text() == (
        "bucket,additions,additions_relative_frequency,deletions,deletions_relative_frequency\n"
        "0,1,0.333333333333,2,0.666666666667\n"
        "1,1,0.333333333333,0,0\n"
        "2-9,1,0.333333333333,1,0.333333333333\n"
        ">=10,0,0,0,0\n"
    )
    assert (tmp_path / "cumulative_by_year.csv").read_text() == "year,entities,revisions\n2013,1,2\n2014,1,3\n"
    assert (tmp_path / "deletions_per_triple.csv").read_text() == (
        "bucket,count,relative_frequency\n0,1,0.333333333333\n1,2,0.666666666667\n2-9,0,0\n>=10,0,0\n"
    )
    assert (tmp_path / "triple_latency.csv").read_text().splitlines()[1:3] == [
        '"[0,1]",3,1,0,0', '"(1,30]",0,0,2,1',
    ]
    assert not (tmp_path / "summary.json").exists()


def test_readded_counted_once():
    stream = [
        _rev("Q1", 1, 0, adds=[_t(1)]),
        _rev("Q1", 2, 1, dels=[_t(1)]),
        _rev("Q1", 3, 2, adds=[_t(1)]),
        _rev("Q1", 4, 3, dels=[_t(1)]),
        _rev("Q1", 5, 4, adds=[_t(1)]),
    ]
    s = compute_stats(stream).summary()
    assert (s["distinctTriples"], s["deletedTriples"], s["readdedTriples"]) == (1, 1, 1)
    assert s["deletionsPerTriple"]["mean"] == 2


def test_same_triple_in_two_entities_is_two_triples():
    s = compute_stats([_rev("Q1", 1, 0, adds=[_t(1)]), _rev("Q2", 2, 0, adds=[_t(1)])]).summary()
    assert s["distinctTriples"] == 2


def test_out_of_order_and_unknown_deletion():
    with pytest.raises(SortViolation):
        compute_stats([_rev("Q1", 2, 0), _rev("Q1", 1, 1)])
    with pytest.raises(SortViolation):
        compute_stats([_rev("Q1", 1, 0, dels=[_t(1)])])


def test_redirect_classification():
    same_as = iri("owl", "sameAs")
    to_q2 = Triple(iri("wd", "Q1"), same_as, iri("wd", "Q2"))
    to_q3 = Triple(iri("wd", "Q1"), same_as, iri("wd", "Q3"))
    redirect = _rev("Q1", 2, 0, adds=[to_q2], dels=[_t(1)])
    retarget = _rev("Q1", 3, 0, adds=[to_q3], dels=[to_q2])
    restore = _rev("Q1", 4, 0, adds=[_t(1)], dels=[to_q3])
    assert classify_revision(redirect, 0) == "redirect"
    assert classify_revision(retarget, 1) == "redirect"
    assert classify_revision(restore, 1) == "content"
    assert classify_revision(_rev("Q1", 5, 0), 1) == "redirect"
    stream = [_rev("Q1", 1, 0, adds=[_t(1)]), redirect, retarget, restore]
    assert compute_stats(stream).redirect_revisions == 2


def test_sqlite_spill_matches_memory(built_corpus, tmp_path):
    path = built_corpus / GLOBAL_STREAM_NAME
    in_memory = compute_stats(read_global(path))
    spilled = compute_stats(read_global(path), scratch_dir=tmp_path)
    assert spilled == in_memory
