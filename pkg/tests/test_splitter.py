import json

import numpy as np
import pytest

from kgbench.splitter import connected_components, spanning_tree, split, write_split
from kgbench.triple_store import build_graph
from oracles import components_bfs, is_connected


def graph(edges, rels=None):
    rels = rels or ["r"] * len(edges)
    return build_graph([(f"Gene:{a}", rel, f"Gene:{b}") for (a, b), rel in zip(edges, rels)])


def test_components_examples():
    tri = graph([(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)])
    comps = connected_components(tri)
    assert [len(c) for c in comps] == [3, 3]
    assert connected_components(build_graph([])) == []
    path = graph([(i, i + 1) for i in range(11)])
    assert [len(c) for c in connected_components(path)] == [12]


def test_spanning_tree_examples():
    tri = graph([(0, 1), (1, 2), (2, 0)])
    tree = spanning_tree(tri, range(3))
    assert len(tree) == 2
    assert np.array_equal(tree, spanning_tree(tri, range(3), seed=99))

    tree_graph = graph([(i, (i - 1) // 2) for i in range(1, 12)])
    assert sorted(spanning_tree(tree_graph, range(12)).tolist()) == list(range(11))

    par = graph([(0, 1)] * 3, ["a", "b", "c"])
    assert spanning_tree(par, range(2)).tolist() == [0]

    with pytest.raises(ValueError):
        spanning_tree(graph([(0, 1), (2, 3)]), range(4))


def twelve_plus_ten():
    tree = [(i, (i - 1) // 2) for i in range(1, 12)]
    extra = [(i, (i + 3) % 12) for i in range(10)]
    return graph(tree + extra, ["t"] * 11 + ["x"] * 10)


def test_split_twelve_nodes_ten_extra():
    kg = twelve_plus_ten()
    ds = split(kg, 0.2, 10, seed=0)
    assert ds.sizes() == {"train": 19, "valid": 1, "test": 1, "excluded": 0}
    assert ds.components[0].tree_edges == 11 and ds.components[0].held_out == 2


def test_small_component_excluded():
    kg = graph([(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)])
    ds = split(kg, 0.2, 10, seed=0)
    assert ds.sizes() == {"train": 0, "valid": 0, "test": 0, "excluded": 5}
    # strict comparison: exactly 11 nodes is retained, 10 is not
    assert split(graph([(i, i + 1) for i in range(10)]), 0.2, 10).sizes()["train"] == 10
    assert split(graph([(i, i + 1) for i in range(9)]), 0.2, 10).sizes()["excluded"] == 9


def test_fraction_zero_holds_nothing_out():
    kg = twelve_plus_ten()
    ds = split(kg, 0.0, 10, seed=0)
    assert len(ds.valid) == len(ds.test) == 0 and len(ds.train) == len(kg)
    with pytest.raises(ValueError):
        split(kg, 1.5)


def random_multigraph(rng, n_nodes):
    n_edges = int(rng.integers(n_nodes // 2, 3 * n_nodes + 1))
    a = rng.integers(0, n_nodes, n_edges)
    # bias towards local edges so that several components appear
    b = np.clip(a + rng.integers(-6, 7, n_edges), 0, n_nodes - 1)
    rel = rng.integers(0, 3, n_edges)
    rows = {(f"Gene:{x}", f"r{k}", f"Gene:{y}") for x, y, k in zip(a.tolist(), b.tolist(), rel.tolist())}
    return build_graph(sorted(rows))


def check_split_contract(kg, ds, min_size=10):
    key = lambda arr: {tuple(x) for x in np.asarray(arr).tolist()}
    parts = [key(ds.train), key(ds.valid), key(ds.test), key(ds.excluded)]
    assert sum(len(p) for p in parts) == len(kg)
    assert set().union(*parts) == key(kg.triples)
    assert abs(len(ds.valid) - len(ds.test)) <= 1
    assert len(ds.valid) >= len(ds.test)
    comps = components_bfs(kg.num_entities, [(h, t) for h, _, t in kg.triples.tolist()])
    train_edges = [(h, t) for h, _, t in ds.train.tolist()]
    for comp in comps:
        comp_edges = {tri for tri in key(kg.triples) if tri[0] in comp}
        if len(comp) <= min_size:
            assert comp_edges <= parts[3]
        else:
            assert not comp_edges & parts[3]
            assert is_connected(comp, train_edges)


def test_split_contract_random_graphs():
    rng = np.random.default_rng(0)
    for trial in range(15):
        kg = random_multigraph(rng, int(rng.integers(5, 300)))
        ds = split(kg, float(rng.uniform(0, 0.5)), 10, seed=trial)
        check_split_contract(kg, ds)


def test_split_files_byte_identical(tmp_path):
    kg = random_multigraph(np.random.default_rng(3), 200)
    m1 = write_split(split(kg, 0.2, 10, seed=4), kg, tmp_path / "a")
    write_split(split(kg, 0.2, 10, seed=4), kg, tmp_path / "b")
    for name in ("train.txt", "valid.txt", "test.txt", "excluded.txt", "split_manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    write_split(split(kg, 0.2, 10, seed=5), kg, tmp_path / "c")
    assert (tmp_path / "c" / "valid.txt").read_bytes() != (tmp_path / "a" / "valid.txt").read_bytes()
    manifest = json.loads(m1.read_text())
    assert manifest["seed"] == 4 and manifest["holdout_fraction"] == 0.2
    assert manifest["dataset_digest"] == kg.digest()
