import hashlib
import urllib.request
from importlib.resources import files

import numpy as np
import pytest

from kgbench.errors import FetchError, IntegrityError, LoadError
from kgbench.triple_store import (
    CATEGORIES,
    NODE_TYPES,
    NodeType,
    ViewTag,
    build_graph,
    candidate_set,
    fetch_dataset,
    load_triples,
    load_views,
    stats,
    view_filter,
)

FIXTURE = files("kgbench") / "data" / "fixture_whole.tsv"


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_enumerations():
    assert len(NODE_TYPES) == 16
    assert len(CATEGORIES) == 11
    assert NodeType.PATHWAY_KEGG.category == "Pathway"


def test_duplicate_rows_dropped(tmp_path):
    p = write(tmp_path, "t.tsv", "Gene:1\tencodes\tProtein:1\nGene:1\tencodes\tProtein:1\nGene:2\tencodes\tProtein:1\n")
    kg = load_triples(p)
    assert len(kg) == 2
    assert kg.num_entities == 3


def test_go_prefix_types_entities(tmp_path):
    p = write(tmp_path, "go.tsv", "GO:0008150\tisa\tGO:0003674\n")
    kg = load_triples(p)
    assert [kg.node_type(i) for i in range(2)] == [NodeType.BIOLOGICAL_PROCESS] * 2


def test_sidecar_map_overrides_prefix(tmp_path):
    p = write(tmp_path, "go.tsv", "GO:0008150\tisa\tGO:0003674\n")
    m = write(tmp_path, "types.tsv", "GO:0003674\tMolecularFunction\n")
    kg = load_triples(p, m)
    assert kg.node_type(kg.entities.index_of("GO:0003674")) == NodeType.MOLECULAR_FUNCTION
    assert kg.node_type(kg.entities.index_of("GO:0008150")) == NodeType.BIOLOGICAL_PROCESS


def test_comma_delimited_and_header(tmp_path):
    p = write(tmp_path, "t.csv", "head,relation,tail\nGene:1,encodes,Protein:1\n")
    kg = load_triples(p, header=True)
    assert kg.label_triples() == [("Gene:1", "encodes", "Protein:1")]


def test_malformed_row_reports_line(tmp_path):
    p = write(tmp_path, "bad.tsv", "Gene:1\tencodes\tProtein:1\nGene:2\tencodes\n")
    with pytest.raises(LoadError, match=":2:"):
        load_triples(p)


def test_unresolvable_type_and_empty_file(tmp_path):
    with pytest.raises(LoadError, match="node type"):
        load_triples(write(tmp_path, "u.tsv", "Foo:1\tr\tGene:1\n"))
    empty = write(tmp_path, "e.tsv", "")
    with pytest.raises(LoadError, match="no triples"):
        load_triples(empty)
    assert len(load_triples(empty, allow_empty=True)) == 0


def test_missing_file_names_path(tmp_path):
    with pytest.raises(LoadError, match="missing.tsv"):
        load_triples(tmp_path / "missing.tsv")


def test_vocabulary_round_trip():
    kg = load_triples(FIXTURE)
    for vocab in (kg.entities, kg.relations):
        for i in range(len(vocab)):
            assert vocab.index_of(vocab.label_of(i)) == i


def test_indexes_consistent():
    kg = load_triples(FIXTURE)
    for h, r, t in kg.triples.tolist():
        assert t in kg.tails(h, r)
        assert h in kg.heads(r, t)
        assert kg.contains(h, r, t)
    assert sum(len(v) for v in kg.tails_index.values()) == len(kg)


def _tagged_kg():
    rows, views = [], []
    for tag, n in ((ViewTag.ONTOLOGY, 5), (ViewTag.INSTANCE, 10), (ViewTag.BRIDGE, 3)):
        for i in range(n):
            rows.append((f"Gene:{tag.name}{i}", f"r{tag.name}", f"Protein:{tag.name}{i}"))
            views.append(int(tag))
    return build_graph(rows, views)


def test_view_filter_counts_and_partition():
    kg = _tagged_kg()
    assert len(view_filter(kg, ViewTag.WHOLE)) == 18
    onto = view_filter(kg, "ontology")
    assert len(onto) == 5
    assert onto.num_entities == 10 and onto.num_relations == 1
    parts = [len(view_filter(kg, v)) for v in ("ontology", "instance", "bridge")]
    assert sum(parts) == len(kg)


def test_view_filter_fixture_and_files(tmp_path):
    kg = load_triples(FIXTURE)
    assert [len(view_filter(kg, v)) for v in ("ontology", "instance", "bridge")] == [6, 23, 4]
    o = write(tmp_path, "o.tsv", "GO:1\tisa\tGO:2\n")
    i = write(tmp_path, "i.tsv", "Gene:1\tencodes\tProtein:1\n")
    both = load_views({"ontology": o, "instance": i})
    assert len(view_filter(both, "instance")) == 1


def test_candidate_set():
    kg = load_triples(FIXTURE)
    enc = kg.relations.index_of("encodes")
    tails = candidate_set(kg, enc, "tail")
    proteins = [i for i in range(kg.num_entities) if kg.node_type(i) == NodeType.PROTEIN]
    assert tails.tolist() == sorted(proteins)
    # "isa" links three type pairs in the fixture: BP->BP, Disease->DiseaseTree, Anatomy->Anatomy
    isa = kg.relations.index_of("isa")
    heads = candidate_set(kg, isa, "head")
    head_types = {NodeType.BIOLOGICAL_PROCESS, NodeType.DISEASE, NodeType.ANATOMY}
    assert heads.tolist() == [i for i in range(kg.num_entities) if kg.node_type(i) in head_types]
    for h, r, t in kg.triples.tolist():
        if r == isa:
            assert h in heads
    with pytest.raises(KeyError):
        candidate_set(kg, 999, "head")


def test_stats_smallest_case(tmp_path):
    kg = load_triples(write(tmp_path, "one.tsv", "Gene:1\tr\tGene:2\n"))
    rep = stats(kg)
    assert rep.category("Gene").average_degree == 0.5


# hand count of the bundled fixture (see src/kgbench/data/fixture_whole.tsv):
# 23 entities, 34 rows of which one duplicates row 7, so 33 triples.
# Incident edges count once per distinct endpoint category:
#   Protein 4 encodes + 4 interacts + 3 targets + 3 in_pathway + 1 has_function + 3 participates_in = 18
#   Gene 4 encodes + 2 associated_with + 1 expressed_in = 7
#   Compound 3 targets + 2 treats + 2 in_class = 7
#   Disease 2 isa + 2 treats + 2 associated_with + 1 localizes_to = 7
#   Biological Process 3 isa + 3 participates_in + 1 involves = 7
#   Pathway 3 in_pathway + 1 involves = 4; Anatomy 1 isa + 1 localizes_to + 1 expressed_in = 3
#   Drug Class 2; Molecular Function 1
FIXTURE_COUNTS = {
    "Anatomy": (2, 3),
    "Biological Process": (3, 7),
    "Compound": (3, 7),
    "Disease": (3, 7),
    "Drug Class": (1, 2),
    "Gene": (4, 7),
    "Molecular Function": (1, 1),
    "Pathway": (2, 4),
    "Protein": (4, 18),
}


def test_stats_fixture_hand_count():
    rep = stats(load_triples(FIXTURE))
    assert rep.total_nodes == 23 and rep.total_edges == 33
    assert {c.name: (c.nodes, c.edges) for c in rep.categories} == FIXTURE_COUNTS
    assert sum(c.nodes for c in rep.categories) == rep.total_nodes
    assert sum(c.nodes for c in rep.node_types) == rep.total_nodes
    assert sum(rep.relations.values()) == rep.total_edges
    assert rep.views == {"ontology": 6, "instance": 23, "bridge": 4}
    assert rep.category("Protein").average_degree == 4.5
    assert "Protein" in rep.to_table()


def test_stats_empty():
    kg = build_graph([])
    rep = stats(kg)
    assert rep.total_nodes == 0 and rep.total_edges == 0 and rep.categories == []


def test_fetch_cache_hit_skips_network(tmp_path, monkeypatch):
    data = b"Gene:1\tr\tGene:2\n"
    cached = tmp_path / "x.tsv"
    cached.write_bytes(data)
    monkeypatch.setattr(urllib.request, "urlopen", lambda *a, **k: pytest.fail("network used"))
    path = fetch_dataset("https://example.org/x.tsv", tmp_path, hashlib.sha256(data).hexdigest())
    assert path == cached


def test_fetch_digest_mismatch_quarantines(tmp_path):
    cached = tmp_path / "x.tsv"
    cached.write_bytes(b"tampered")
    with pytest.raises(IntegrityError):
        fetch_dataset("https://example.org/x.tsv", tmp_path, "0" * 64)
    assert not cached.exists()
    assert (tmp_path / "x.tsv.quarantined").exists()


def test_fetch_downloads_file_url_and_warns_without_digest(tmp_path, caplog):
    src = tmp_path / "src.tsv"
    src.write_bytes(b"Gene:1\tr\tGene:2\n")
    cache = tmp_path / "cache"
    with caplog.at_level("WARNING"):
        path = fetch_dataset(src.as_uri(), cache)
    assert path.read_bytes() == src.read_bytes()
    assert "digest" in caplog.text
    with pytest.raises(FetchError):
        fetch_dataset((tmp_path / "nope.tsv").as_uri(), cache)


def test_kg_is_immutable():
    kg = load_triples(FIXTURE)
    with pytest.raises(ValueError):
        kg.triples[0, 0] = 5
    assert isinstance(kg.triples, np.ndarray)
