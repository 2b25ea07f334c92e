"""Catalog hierarchy, search, crosswalk and incremental harvesting."""

import pytest

from lrarchive import Catalog, LogicalClock, MetadataRecord, TermMap
from lrarchive.catalog import CORPUS, SESSION
from lrarchive.errors import (
    BadToken,
    CycleDetected,
    EmptyQuery,
    MissingLanguage,
    ParentNotFound,
    UridNotFound,
)


@pytest.fixture
def catalog():
    return Catalog("mpi", clock=LogicalClock(), urid_exists=lambda u: u.startswith("urid:"))


def session(title="A session", languages=("nld",), **kwargs):
    return MetadataRecord(title=title, languages=list(languages), **kwargs)


def test_create_corpus_and_session(catalog):
    root = catalog.create_node(None, CORPUS, MetadataRecord(title="Corpus"))
    child = catalog.create_node(root.node_id, SESSION, session())
    assert child.parent == root.node_id
    assert child.kind == SESSION


def test_session_requires_language(catalog):
    with pytest.raises(MissingLanguage):
        catalog.create_node(None, SESSION, MetadataRecord(title="No language"))


def test_language_codes_validated():
    with pytest.raises(ValueError):
        MetadataRecord(title="x", languages=["DUTCH"])


def test_parent_not_found(catalog):
    with pytest.raises(ParentNotFound):
        catalog.create_node("mpi-nffffff", SESSION, session())


def test_reparent_cycle_detected(catalog):
    a = catalog.create_node(None, CORPUS, MetadataRecord(title="a"))
    b = catalog.create_node(a.node_id, CORPUS, MetadataRecord(title="b"))
    c = catalog.create_node(b.node_id, CORPUS, MetadataRecord(title="c"))
    with pytest.raises(CycleDetected):
        catalog.reparent(a.node_id, c.node_id)
    # Reparenting to a sibling-free spot is fine.
    catalog.reparent(c.node_id, a.node_id)
    assert catalog.get(c.node_id).parent == a.node_id


def test_link_object_idempotent(catalog):
    node = catalog.create_node(None, SESSION, session())
    catalog.link_object(node.node_id, "urid:mpi/0000000000000001")
    stamp = catalog.get(node.node_id).datestamp
    catalog.link_object(node.node_id, "urid:mpi/0000000000000001")
    assert catalog.get(node.node_id).linked_objects == ["urid:mpi/0000000000000001"]
    assert catalog.get(node.node_id).datestamp == stamp  # no second touch


def test_link_unknown_urid(catalog):
    node = catalog.create_node(None, SESSION, session())
    with pytest.raises(UridNotFound):
        catalog.link_object(node.node_id, "not-a-urid")


def test_search_by_language(catalog):
    catalog.create_node(None, SESSION, session("one", ["nld"]))
    catalog.create_node(None, SESSION, session("two", ["deu"]))
    three = catalog.create_node(None, SESSION, session("three", ["nld", "eng"]))
    hits = catalog.search({"language": "nld"})
    assert len(hits) == 2
    assert three.node_id in hits
    assert hits == sorted(hits)


def test_search_with_term_expansion(catalog):
    catalog.term_map = TermMap([("story", "narrative")])
    a = catalog.create_node(None, SESSION, session("a", genre="story"))
    b = catalog.create_node(None, SESSION, session("b", genre="narrative"))
    catalog.create_node(None, SESSION, session("c", genre="interview"))
    plain = catalog.search({"genre": "story"})
    expanded = catalog.search({"genre": "story"}, expand=True)
    assert plain == [a.node_id]
    assert set(expanded) == {a.node_id, b.node_id}
    assert set(plain) <= set(expanded)  # expand only ever widens


def test_search_empty_query(catalog):
    with pytest.raises(EmptyQuery):
        catalog.search({})


def test_search_excludes_deprecated(catalog):
    node = catalog.create_node(None, SESSION, session("gone", ["nld"]))
    assert catalog.search({"language": "nld"}) == [node.node_id]
    catalog.deprecate(node.node_id)
    assert catalog.search({"language": "nld"}) == []


def test_plain_search_always_subset_of_expanded(catalog):
    import random

    rng = random.Random(44)
    vocabulary = [f"genre{i}" for i in range(8)]
    pairs = [tuple(rng.sample(vocabulary, 2)) for _ in range(6)]
    catalog.term_map = TermMap(pairs)
    for index in range(30):
        catalog.create_node(
            None, SESSION, session(f"s{index}", genre=rng.choice(vocabulary))
        )
    for term in vocabulary:
        plain = set(catalog.search({"genre": term}))
        expanded = set(catalog.search({"genre": term}, expand=True))
        assert plain <= expanded


def test_expand_terms_reflexive_symmetric(catalog):
    catalog.term_map = TermMap([("story", "narrative"), ("story", "tale")])
    assert catalog.expand_terms("story") == {"story", "narrative", "tale"}
    assert catalog.expand_terms("unmapped") == {"unmapped"}
    for a in ("story", "narrative", "tale", "unmapped"):
        for b in catalog.expand_terms(a):
            assert a in catalog.expand_terms(b)


def test_crosswalk_maps_and_reports_loss(catalog):
    node = catalog.create_node(
        None,
        SESSION,
        MetadataRecord(
            title="Frog story",
            languages=["nld", "eng"],
            date="2004-05-17",
            recording_conditions="quiet room",
        ),
    )
    record, loss = catalog.crosswalk_dc(node.node_id)
    elements = record.to_dict()
    assert elements["title"] == "Frog story"
    assert elements["language"] == "nld;eng"
    assert elements["date"] == "2004-05-17"
    assert "recordingConditions" in loss
    assert len(elements) <= 15


def test_crosswalk_loss_exact(catalog):
    node = catalog.create_node(
        None,
        SESSION,
        MetadataRecord(
            title="t",
            languages=["nld"],
            genre="story",
            participants=["sp1", "sp2"],
            location="Nijmegen",
        ),
    )
    record, loss = catalog.crosswalk_dc(node.node_id)
    assert record.to_dict()["coverage"] == "Nijmegen"
    assert loss == ["genre", "participants"]


def test_harvest_pages_of_100(catalog):
    for index in range(250):
        catalog.create_node(None, SESSION, session(f"s{index:03d}"))
    page1, token1 = catalog.harvest("1970-01-01T00:00:00Z")
    assert len(page1) == 100 and token1 == "offset:100"
    page2, token2 = catalog.harvest("1970-01-01T00:00:00Z", token=token1)
    assert len(page2) == 100 and token2 == "offset:200"
    page3, token3 = catalog.harvest("1970-01-01T00:00:00Z", token=token2)
    assert len(page3) == 50 and token3 is None
    ids = [r["nodeId"] for r in page1 + page2 + page3]
    assert len(set(ids)) == 250


def test_harvest_bad_token(catalog):
    catalog.create_node(None, SESSION, session())
    with pytest.raises(BadToken):
        catalog.harvest("1970-01-01T00:00:00Z", token="garbage")


def test_harvest_since_single_mutation(catalog):
    for index in range(10):
        catalog.create_node(None, SESSION, session(f"s{index}"))
    # The next clock reading is when the single mutation will happen.
    cutoff = catalog.clock.peek()
    target = catalog.create_node(None, SESSION, session("the one"))
    from lrarchive.util import format_utc

    records, token = catalog.harvest(format_utc(cutoff))
    assert token is None
    assert [r["nodeId"] for r in records] == [target.node_id]
    # Oracle: diff of full dumps filtered by the same cutoff.
    full = [r for r in catalog.full_dump() if r["datestamp"] >= format_utc(cutoff)]
    assert [r["nodeId"] for r in full] == [target.node_id]


def test_harvest_set_restricts_to_subtree(catalog):
    root = catalog.create_node(None, CORPUS, MetadataRecord(title="corpus"))
    inside = catalog.create_node(root.node_id, SESSION, session("inside"))
    catalog.create_node(None, SESSION, session("outside"))
    records, _ = catalog.harvest("1970-01-01T00:00:00Z", set_id=root.node_id)
    ids = {r["nodeId"] for r in records}
    assert ids == {root.node_id, inside.node_id}


def test_harvest_excludes_deprecated(catalog):
    keep = catalog.create_node(None, SESSION, session("keep"))
    drop = catalog.create_node(None, SESSION, session("drop"))
    catalog.deprecate(drop.node_id)
    records, _ = catalog.harvest("1970-01-01T00:00:00Z")
    ids = {r["nodeId"] for r in records}
    assert keep.node_id in ids and drop.node_id not in ids


def test_datestamp_monotonic_per_node(catalog):
    node = catalog.create_node(None, SESSION, session())
    stamps = [node.datestamp]
    catalog.link_object(node.node_id, "urid:mpi/0000000000000001")
    stamps.append(catalog.get(node.node_id).datestamp)
    catalog.reparent(node.node_id, None)
    stamps.append(catalog.get(node.node_id).datestamp)
    assert stamps == sorted(stamps)


def test_catalog_never_contains_physical_paths(node):
    obj = node.ingest(b"abc", "text/plain", "dep1", "mpi")
    cat_node = node.create_node(None, SESSION, session())
    node.link_object(cat_node.node_id, obj.urid)
    node.catalog.assert_no_physical_paths()
