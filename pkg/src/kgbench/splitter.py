"""Connectivity-preserving train/valid/test splits.

Each connected component with more than ``min_component_size`` nodes keeps a
spanning tree in the training set; a fraction of its remaining edges is held
out and dealt alternately to validation and test. Smaller components are
excluded entirely.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order
from scipy.sparse.csgraph import connected_components as _cc

from .triple_store import KnowledgeGraph


@dataclass
class ComponentRecord:
    root: int
    nodes: int
    edges: int
    tree_edges: int = 0
    held_out: int = 0
    excluded: bool = False


@dataclass
class SplitDataset:
    """Partition of a graph's triples. Arrays are ``(n, 3)`` id triples in original order."""

    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    excluded: np.ndarray
    seed: int
    holdout_fraction: float
    min_component_size: int
    components: list[ComponentRecord] = field(default_factory=list)
    tree_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def sizes(self) -> dict[str, int]:
        return {k: len(getattr(self, k)) for k in ("train", "valid", "test", "excluded")}


def _undirected_adjacency(kg: KnowledgeGraph) -> sp.csr_matrix:
    n = kg.num_entities
    h, t = kg.triples[:, 0], kg.triples[:, 2]
    rows = np.concatenate([h, t])
    cols = np.concatenate([t, h])
    A = sp.csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n, n))
    A.sum_duplicates()
    A.sort_indices()
    return A


def connected_components(kg: KnowledgeGraph) -> list[np.ndarray]:
    """Components of the undirected projection, each a sorted id array, ordered by smallest id."""
    n = kg.num_entities
    if n == 0:
        return []
    _, labels = _cc(_undirected_adjacency(kg), directed=False)
    order = np.argsort(labels, kind="stable")
    bounds = np.flatnonzero(np.diff(labels[order])) + 1
    comps = np.split(order, bounds)
    comps.sort(key=lambda c: int(c[0]))
    return comps


def _pair_keys(a, b, n):
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    return lo * n + hi


def spanning_tree(kg: KnowledgeGraph, component, seed: int | None = None, *, _adjacency=None) -> np.ndarray:
    """Indices (into ``kg.triples``) of a BFS spanning tree of ``component``.

    Breadth-first from the lowest node id with neighbours in ascending id
    order; among parallel edges between a tree pair the lowest triple index
    is chosen. The tree does not depend on ``seed``; it is accepted so callers
    can pass the split seed uniformly (only holdout selection is seeded).
    """
    comp = np.asarray(sorted(int(x) for x in component), dtype=np.int64)
    if comp.size <= 1:
        return np.zeros(0, dtype=np.int64)
    A = _adjacency if _adjacency is not None else _undirected_adjacency(kg)
    order, pred = breadth_first_order(A, int(comp[0]), directed=True, return_predecessors=True)
    if len(order) != comp.size or not np.array_equal(np.sort(order), comp):
        raise ValueError("component is not connected")
    child = order[1:]
    parent = pred[child]
    n = kg.num_entities
    h, t = kg.triples[:, 0], kg.triples[:, 2]
    in_comp = np.zeros(n, dtype=bool)
    in_comp[comp] = True
    idx = np.flatnonzero(in_comp[h] & (h != t))
    keys = _pair_keys(h[idx], t[idx], n)
    # first (lowest) triple index per unordered node pair
    uniq, first = np.unique(keys, return_index=True)
    want = _pair_keys(parent.astype(np.int64), child.astype(np.int64), n)
    pos = np.searchsorted(uniq, want)
    return np.sort(idx[first[pos]])


def _holdout_count(fraction: float, n: int) -> int:
    return int(math.floor(fraction * n + 1e-9))


def split(
    kg: KnowledgeGraph,
    holdout_fraction: float = 0.20,
    min_component_size: int = 10,
    seed: int = 0,
) -> SplitDataset:
    if not 0.0 <= holdout_fraction <= 1.0:
        raise ValueError("holdout_fraction must be in [0, 1]")
    rng = np.random.default_rng(seed)
    n_tri = len(kg)
    comps = connected_components(kg)
    label = np.full(kg.num_entities, -1, dtype=np.int64)
    for i, c in enumerate(comps):
        label[c] = i
    tri_comp = label[kg.triples[:, 0]] if n_tri else np.zeros(0, dtype=np.int64)
    by_comp = np.argsort(tri_comp, kind="stable")
    bounds = np.searchsorted(tri_comp[by_comp], np.arange(len(comps) + 1))
    A = _undirected_adjacency(kg) if n_tri else None

    state = np.zeros(n_tri, dtype=np.int8)  # 0 train, 1 valid, 2 test, 3 excluded
    held_all: list[np.ndarray] = []
    tree_all: list[np.ndarray] = []
    records = []
    for i, comp in enumerate(comps):
        edges = np.sort(by_comp[bounds[i] : bounds[i + 1]])
        rec = ComponentRecord(root=int(comp[0]), nodes=int(comp.size), edges=int(edges.size))
        if comp.size <= min_component_size:
            rec.excluded = True
            state[edges] = 3
            if edges.size:
                records.append(rec)
            continue
        tree = spanning_tree(kg, comp, _adjacency=A)
        rest = np.setdiff1d(edges, tree, assume_unique=True)
        k = _holdout_count(holdout_fraction, rest.size)
        held = rng.permutation(rest)[:k]
        rec.tree_edges, rec.held_out = int(tree.size), int(k)
        records.append(rec)
        held_all.append(held)
        tree_all.append(tree)
    if held_all:
        held = np.concatenate(held_all)
        state[held[0::2]] = 1
        state[held[1::2]] = 2
    pick = lambda s: kg.triples[np.flatnonzero(state == s)].copy()
    return SplitDataset(
        train=pick(0), valid=pick(1), test=pick(2), excluded=pick(3),
        seed=seed, holdout_fraction=holdout_fraction, min_component_size=min_component_size,
        components=records,
        tree_indices=np.concatenate(tree_all) if tree_all else np.zeros(0, dtype=np.int64),
    )


def _format_triples(kg: KnowledgeGraph, triples: np.ndarray) -> bytes:
    return "".join(f"{h}\t{r}\t{t}\n" for h, r, t in kg.label_triples(triples)).encode("utf-8")


def write_split(ds: SplitDataset, kg: KnowledgeGraph, out_dir: str | os.PathLike, extra: dict | None = None) -> Path:
    """Write ``train/valid/test/excluded.txt`` plus ``split_manifest.json``; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    digests = {}
    for part in ("train", "valid", "test", "excluded"):
        data = _format_triples(kg, getattr(ds, part))
        (out / f"{part}.txt").write_bytes(data)
        digests[f"{part}.txt"] = hashlib.sha256(data).hexdigest()
    manifest = {
        "seed": ds.seed,
        "holdout_fraction": ds.holdout_fraction,
        "min_component_size": ds.min_component_size,
        "sizes": ds.sizes(),
        "components": [asdict(c) for c in ds.components],
        "digests": digests,
        "dataset_digest": kg.digest(),
    }
    if extra:
        manifest.update(extra)
    path = out / "split_manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
