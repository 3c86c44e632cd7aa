import bz2
import gzip

import pytest

from kgdelta.errors import DumpFormatError
from kgdelta.ingest import SkipReport, iter_entities, open_dump
from kgdelta.model import Anonymous, User, parse_entity_id

from oracles import count_dump
from synth import CorpusSpec, dump_bytes, generate_corpus, page_from_docs


@pytest.fixture(scope="module")
def small_corpus(seed):
    return generate_corpus(CorpusSpec(seed=seed, entities=30, max_revisions=10))


def _read_all(reader):
    return [(page, list(revs)) for page, revs in reader]


def test_counts_match_whole_document_parse(small_corpus):
    data = dump_bytes(small_corpus)
    expected = count_dump(data)
    skips = SkipReport()
    pages = _read_all(open_dump(data, skips=skips))
    entity_revisions = expected["per_namespace"].get(0, 0) + expected["per_namespace"].get(120, 0)
    assert sum(len(revs) for _, revs in pages) == entity_revisions
    assert len(pages) + skips.skipped_pages == expected["pages"]
    assert [str(p.entity_id) for p, _ in pages] == [p.entity_id for p in small_corpus if p.entity_id]


def test_revision_fields_survive(small_corpus):
    synth = {p.entity_id: p for p in small_corpus if p.entity_id}
    for page, revs in open_dump(dump_bytes(small_corpus)):
        source = synth[str(page.entity_id)]
        assert page.page_id == source.page_id and page.title == source.title
        for raw, rev in zip(revs, source.revisions):
            assert raw.meta.revision_id == rev.revision_id
            assert raw.meta.parent_revision_id == rev.parent_id
            assert raw.meta.timestamp == rev.timestamp
            assert raw.meta.comment == rev.comment
            assert raw.meta.is_minor == rev.minor
            assert raw.payload == (rev.text or "").encode("utf-8")


@pytest.mark.parametrize("wrap", [lambda b: b, gzip.compress, bz2.compress])
def test_compression_is_detected(small_corpus, wrap):
    data = dump_bytes(small_corpus[:5])
    plain = [(p, [r.meta for r in revs]) for p, revs in open_dump(data)]
    assert [(p, [r.meta for r in revs]) for p, revs in open_dump(wrap(data))] == plain


def test_iter_entities_chains_parts(tmp_path, small_corpus):
    paths = []
    for i, chunk in enumerate((small_corpus[:10], small_corpus[10:])):
        path = tmp_path / f"part{i}.xml.gz"
        path.write_bytes(gzip.compress(dump_bytes(chunk)))
        paths.append(path)
    ids = [str(p.entity_id) for p, _ in iter_entities(paths)]
    assert ids == [p.entity_id for p in small_corpus if p.entity_id]


def test_unread_revisions_are_skipped(small_corpus):
    # abandoning a page's revision iterator must not derail the next page
    reader = open_dump(dump_bytes(small_corpus))
    ids = [str(page.entity_id) for page, _ in reader]
    assert len(ids) == sum(1 for p in small_corpus if p.entity_id)


def test_skips_non_entity_pages_and_models():
    page = page_from_docs("Q5", 5, [(1, "2015-01-01T00:00:00Z", {}), (2, "2015-01-02T00:00:00Z", {})])
    page.revisions[1].model = "wikitext"
    talk = page_from_docs("Q6", 6, [(3, "2015-01-01T00:00:00Z", {})])
    talk.title, talk.namespace = "Talk:Q6", 1
    odd = page_from_docs("Q7", 7, [(4, "2015-01-01T00:00:00Z", {})])
    odd.title = "Sandbox"
    css = page_from_docs("Q8", 8, [(5, "2015-01-01T00:00:00Z", "x")])
    css.revisions[0].model = "css"
    skips = SkipReport()
    pages = _read_all(open_dump(dump_bytes([page, talk, odd, css]), skips=skips))
    assert [(p.entity_id, [r.meta.revision_id for r in revs]) for p, revs in pages] == \
        [(parse_entity_id("Q5"), [1])]
    assert skips.skipped_pages == 3
    assert [r.revision_id for r in skips.records] == [2, None, None, None]
    assert all(r.stage == "ingest" for r in skips.records)


def test_deleted_text_and_contributor():
    page = page_from_docs("P9", 9, [(1, "2015-01-01T00:00:00Z", None), (2, "2015-01-02T00:00:00Z", {})])
    page.revisions[0].contributor = None
    page.revisions[1].contributor = ("ip", "192.0.2.1")
    ((entity, revs),) = _read_all(open_dump(dump_bytes([page])))
    assert entity.entity_id == parse_entity_id("P9") and entity.namespace == 120
    assert revs[0].payload == b"" and revs[0].meta.contributor is None
    assert revs[1].meta.contributor == Anonymous("192.0.2.1")


def test_registered_contributor():
    page = page_from_docs("Q1", 1, [(1, "2015-01-01T00:00:00Z", {})])
    ((_, (rev,)),) = _read_all(open_dump(dump_bytes([page])))
    assert rev.meta.contributor == User("Fixture", 1)


def test_non_increasing_revision_ids_rejected():
    page = page_from_docs("Q1", 1, [(5, "2015-01-01T00:00:00Z", {}), (5, "2015-01-02T00:00:00Z", {})])
    with pytest.raises(DumpFormatError):
        _read_all(open_dump(dump_bytes([page])))


@pytest.mark.parametrize("cut", [0.3, 0.6, 0.95])
def test_truncated_xml(small_corpus, cut):
    data = dump_bytes(small_corpus[:5])
    with pytest.raises(DumpFormatError):
        _read_all(open_dump(data[: int(len(data) * cut)]))


@pytest.mark.parametrize("mutate", [
    lambda b: b.replace(b"<timestamp>", b"<when>", 1).replace(b"</timestamp>", b"</when>", 1),
    lambda b: b.replace(b"<id>1</id>", b"<id>x</id>", 1),
    lambda b: b.replace(b"</revision>", b"</revisionx>", 1),
    lambda b: b.replace(b"<ns>0</ns>", b"", 1),
])
def test_malformed_xml(mutate):
    page = page_from_docs("Q1", 1, [(1, "2015-01-01T00:00:00Z", {})])
    with pytest.raises(DumpFormatError):
        _read_all(open_dump(mutate(dump_bytes([page]))))
