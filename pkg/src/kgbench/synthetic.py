"""Small generated graphs for tests, demos and sanity benchmarks."""

from __future__ import annotations

import numpy as np

from .triple_store import NODE_TYPES, KnowledgeGraph, ViewTag, build_graph


def hierarchy_kg(num_nodes: int = 64, branching: int = 2, *, compositional: bool = True, node_type: str = "BiologicalProcess") -> KnowledgeGraph:
    """Complete ``branching``-ary tree in heap order with an ``is_a`` child->parent relation.

    With ``compositional=True`` a second relation ``is_a_2`` links every node
    to its grandparent, i.e. it is ``is_a`` composed with itself.
    """
    label = lambda i: f"{node_type}:{i:04d}"
    rows = []
    for child in range(1, num_nodes):
        parent = (child - 1) // branching
        rows.append((label(child), "is_a", label(parent)))
        if compositional and parent > 0:
            rows.append((label(child), "is_a_2", label((parent - 1) // branching)))
    return build_graph(rows, [int(ViewTag.ONTOLOGY)] * len(rows), name="hierarchy")


def tree_kg(depth: int = 5, branching: int = 2, node_type: str = "BiologicalProcess") -> KnowledgeGraph:
    """Complete tree of the given depth (root at depth 0) with child->parent ``is_a`` edges plus grandparent edges."""
    n = sum(branching**k for k in range(depth + 1))
    return hierarchy_kg(n, branching, compositional=True, node_type=node_type)


def random_typed_kg(
    num_entities: int = 40,
    num_relations: int = 6,
    num_triples: int = 150,
    num_types: int = 4,
    seed: int = 0,
) -> KnowledgeGraph:
    """Random multigraph; each relation links a fixed random (head type, tail type) pair or two."""
    rng = np.random.default_rng(seed)
    types = [NODE_TYPES[i] for i in rng.choice(len(NODE_TYPES), size=num_types, replace=False)]
    ent_type = rng.integers(0, num_types, size=num_entities)
    ent_type[:num_types] = np.arange(num_types)
    by_type = [np.flatnonzero(ent_type == k) for k in range(num_types)]
    rel_pairs = [
        [tuple(rng.integers(0, num_types, size=2)) for _ in range(1 + int(rng.integers(0, 2)))]
        for _ in range(num_relations)
    ]
    labels = [f"{types[ent_type[i]].value}:{i:03d}" for i in range(num_entities)]
    rows, seen = [], set()
    attempts = 0
    while len(rows) < num_triples and attempts < 50 * num_triples:
        attempts += 1
        r = int(rng.integers(num_relations))
        a, b = rel_pairs[r][int(rng.integers(len(rel_pairs[r])))]
        h = int(rng.choice(by_type[a]))
        t = int(rng.choice(by_type[b]))
        if (h, r, t) in seen:
            continue
        seen.add((h, r, t))
        rows.append((labels[h], f"rel{r}", labels[t]))
    return build_graph(rows, name="random")


def compositional_split(kg: KnowledgeGraph, relation: str = "is_a_2", fraction: float = 0.4, seed: int = 0):
    """Hold out a fraction of one relation's triples (valid/test alternate); everything else trains.

    Used with :func:`hierarchy_kg`, where every held-out grandparent edge is
    implied by two training ``is_a`` edges.
    """
    from .splitter import SplitDataset

    rel = kg.relations.index_of(relation)
    idx = np.flatnonzero(kg.triples[:, 1] == rel)
    rng = np.random.default_rng(seed)
    held = rng.permutation(idx)[: int(np.floor(fraction * idx.size + 1e-9))]
    state = np.zeros(len(kg), dtype=np.int8)
    state[held[0::2]] = 1
    state[held[1::2]] = 2
    pick = lambda s: kg.triples[state == s].copy()
    return SplitDataset(pick(0), pick(1), pick(2), np.zeros((0, 3), dtype=np.int64), seed, fraction, 0)
