"""Triple loading, vocabularies, node types, views and graph statistics."""

from __future__ import annotations

import csv
import enum
import hashlib
import logging
import os
import shutil
import tempfile
import urllib.error
import urllib.request
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import FetchError, IntegrityError, LoadError

log = logging.getLogger(__name__)


class NodeType(str, enum.Enum):
    ANATOMY = "Anatomy"
    ANATOMY_TREE = "AnatomyTree"
    BIOLOGICAL_PROCESS = "BiologicalProcess"
    CELLULAR_COMPONENT = "CellularComponent"
    COMPOUND = "Compound"
    COMPOUND_MESH = "CompoundMeSH"
    DISEASE = "Disease"
    DISEASE_TREE = "DiseaseTree"
    DRUG_CLASS = "DrugClass"
    GENE = "Gene"
    MOLECULAR_FUNCTION = "MolecularFunction"
    PATHWAY_REACTOME = "PathwayReactome"
    PATHWAY_KEGG = "PathwayKEGG"
    PATHWAY_SMPDB = "PathwaySMPDB"
    PROTEIN = "Protein"
    REACTION = "Reaction"

    @property
    def category(self) -> str:
        return _CATEGORY[self]


_CATEGORY = {
    NodeType.ANATOMY: "Anatomy",
    NodeType.ANATOMY_TREE: "Anatomy",
    NodeType.BIOLOGICAL_PROCESS: "Biological Process",
    NodeType.CELLULAR_COMPONENT: "Cellular Component",
    NodeType.COMPOUND: "Compound",
    NodeType.COMPOUND_MESH: "Compound",
    NodeType.DISEASE: "Disease",
    NodeType.DISEASE_TREE: "Disease",
    NodeType.DRUG_CLASS: "Drug Class",
    NodeType.GENE: "Gene",
    NodeType.MOLECULAR_FUNCTION: "Molecular Function",
    NodeType.PATHWAY_REACTOME: "Pathway",
    NodeType.PATHWAY_KEGG: "Pathway",
    NodeType.PATHWAY_SMPDB: "Pathway",
    NodeType.PROTEIN: "Protein",
    NodeType.REACTION: "Reaction",
}

NODE_TYPES: tuple[NodeType, ...] = tuple(NodeType)
CATEGORIES: tuple[str, ...] = tuple(dict.fromkeys(_CATEGORY.values()))

# Label prefix (text before the first ":") -> node type. Every NodeType value
# is accepted as its own prefix; the rest are source-database aliases. GO
# identifiers do not encode their namespace, so a bare "GO" prefix defaults to
# biological process; use GO_CC / GO_MF or a sidecar map for the others.
DEFAULT_PREFIXES: dict[str, NodeType] = {nt.value: nt for nt in NodeType}
DEFAULT_PREFIXES.update(
    {
        "MeSH_Anatomy": NodeType.ANATOMY,
        "MeSH_Tree_Anatomy": NodeType.ANATOMY_TREE,
        "GO": NodeType.BIOLOGICAL_PROCESS,
        "GO_BP": NodeType.BIOLOGICAL_PROCESS,
        "GO_CC": NodeType.CELLULAR_COMPONENT,
        "GO_MF": NodeType.MOLECULAR_FUNCTION,
        "DrugBank": NodeType.COMPOUND,
        "MeSH_Compound": NodeType.COMPOUND_MESH,
        "MeSH_Disease": NodeType.DISEASE,
        "MeSH_Tree_Disease": NodeType.DISEASE_TREE,
        "ATC": NodeType.DRUG_CLASS,
        "Entrez": NodeType.GENE,
        "Reactome_Pathway": NodeType.PATHWAY_REACTOME,
        "KEGG_Pathway": NodeType.PATHWAY_KEGG,
        "SMPDB_Pathway": NodeType.PATHWAY_SMPDB,
        "UniProt": NodeType.PROTEIN,
        "Reactome_Reaction": NodeType.REACTION,
    }
)


class ViewTag(enum.IntEnum):
    ONTOLOGY = 0
    INSTANCE = 1
    BRIDGE = 2
    WHOLE = 3

    @classmethod
    def parse(cls, text: str) -> "ViewTag":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown view {text!r}; expected ontology, instance, bridge or whole") from None


UNTAGGED = -1


class Vocabulary:
    """Bijection between string labels and contiguous ids ``0..n-1``."""

    def __init__(self, labels: Iterable[str]):
        self._labels = tuple(labels)
        self._index = {lab: i for i, lab in enumerate(self._labels)}
        if len(self._index) != len(self._labels):
            raise ValueError("duplicate labels in vocabulary")

    def __len__(self):
        return len(self._labels)

    def __iter__(self):
        return iter(self._labels)

    def __contains__(self, label):
        return label in self._index

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self._labels == other._labels

    __hash__ = None

    @property
    def labels(self) -> tuple[str, ...]:
        return self._labels

    def index_of(self, label: str) -> int:
        return self._index[label]

    def label_of(self, i: int) -> str:
        return self._labels[i]

    def digest(self) -> str:
        h = hashlib.sha256()
        for lab in self._labels:
            h.update(lab.encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()


@dataclass(frozen=True, eq=False)
class KnowledgeGraph:
    """Immutable, deduplicated triple collection.

    ``triples`` is an ``(n, 3)`` integer array of (head, relation, tail) ids,
    ``views`` an ``(n,)`` array of :class:`ViewTag` values (``-1`` when the
    source carried no tag) and ``entity_types`` maps each entity id to an
    index into :data:`NODE_TYPES`.
    """

    triples: np.ndarray
    views: np.ndarray
    entities: Vocabulary
    relations: Vocabulary
    entity_types: np.ndarray
    name: str = ""

    def __post_init__(self):
        for arr in (self.triples, self.views, self.entity_types):
            arr.setflags(write=False)

    def __len__(self):
        return len(self.triples)

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    def node_type(self, entity: int) -> NodeType:
        return NODE_TYPES[int(self.entity_types[entity])]

    @cached_property
    def _keys(self) -> np.ndarray:
        return triple_keys(self.triples, self.num_entities, self.num_relations)

    @cached_property
    def _key_set(self) -> frozenset:
        return frozenset(self._keys.tolist())

    def contains(self, h: int, r: int, t: int) -> bool:
        return (int(h) * self.num_relations + int(r)) * self.num_entities + int(t) in self._key_set

    @cached_property
    def tails_index(self) -> dict[tuple[int, int], np.ndarray]:
        return _group(self.triples[:, 0], self.triples[:, 1], self.triples[:, 2])

    @cached_property
    def heads_index(self) -> dict[tuple[int, int], np.ndarray]:
        return _group(self.triples[:, 1], self.triples[:, 2], self.triples[:, 0])

    def tails(self, h: int, r: int) -> np.ndarray:
        return self.tails_index.get((int(h), int(r)), _EMPTY)

    def heads(self, r: int, t: int) -> np.ndarray:
        return self.heads_index.get((int(r), int(t)), _EMPTY)

    @cached_property
    def type_pairs(self) -> dict[int, frozenset[tuple[int, int]]]:
        """Observed (head type, tail type) pairs per relation id."""
        if not len(self.triples):
            return {}
        ht = self.entity_types[self.triples[:, 0]]
        tt = self.entity_types[self.triples[:, 2]]
        uniq = np.unique(np.stack([self.triples[:, 1], ht, tt], axis=1), axis=0)
        out: dict[int, set] = defaultdict(set)
        for r, a, b in uniq.tolist():
            out[r].add((a, b))
        return {r: frozenset(v) for r, v in out.items()}

    def with_triples(self, triples: np.ndarray, views: np.ndarray | None = None, name: str | None = None) -> "KnowledgeGraph":
        """Same vocabularies, different triple set (used for split partitions)."""
        triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        if views is None:
            views = np.full(len(triples), UNTAGGED, dtype=np.int8)
        return KnowledgeGraph(
            triples.copy(), np.asarray(views, dtype=np.int8).copy(), self.entities, self.relations,
            self.entity_types.copy(), self.name if name is None else name,
        )

    def label_triples(self, triples: np.ndarray | None = None) -> list[tuple[str, str, str]]:
        triples = self.triples if triples is None else triples
        E, R = self.entities.labels, self.relations.labels
        return [(E[h], R[r], E[t]) for h, r, t in np.asarray(triples).tolist()]

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.entities.digest().encode())
        h.update(self.relations.digest().encode())
        h.update(np.ascontiguousarray(self.triples, dtype="<i8").tobytes())
        return h.hexdigest()


_EMPTY = np.zeros(0, dtype=np.int64)
_EMPTY.setflags(write=False)


def triple_keys(triples: np.ndarray, num_entities: int, num_relations: int) -> np.ndarray:
    t = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    return (t[:, 0] * num_relations + t[:, 1]) * num_entities + t[:, 2]


def _group(a: np.ndarray, b: np.ndarray, values: np.ndarray) -> dict[tuple[int, int], np.ndarray]:
    if not len(a):
        return {}
    order = np.lexsort((values, b, a))
    a, b, values = a[order], b[order], values[order]
    change = np.flatnonzero((np.diff(a) != 0) | (np.diff(b) != 0)) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [len(a)]])
    out = {}
    for s, e in zip(starts.tolist(), ends.tolist()):
        arr = values[s:e]
        arr.setflags(write=False)
        out[(int(a[s]), int(b[s]))] = arr
    return out


# ---------------------------------------------------------------------------
# Loading


def _resolve_type_name(name: str, prefixes: Mapping[str, NodeType]) -> NodeType:
    name = name.strip()
    if name in prefixes:
        return prefixes[name]
    for nt in NodeType:
        if name in (nt.value, nt.name) or name.lower() == nt.value.lower():
            return nt
    raise LoadError(f"unknown node type {name!r}")


def read_type_map(path: str | os.PathLike, prefixes: Mapping[str, NodeType] = DEFAULT_PREFIXES) -> dict[str, NodeType]:
    """Read a two-column (entity label, type name) sidecar file."""
    out = {}
    for lineno, row in _rows(Path(path)):
        if len(row) != 2:
            raise LoadError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
        out[row[0]] = _resolve_type_name(row[1], prefixes)
    return out


def _rows(path: Path, header: bool = False):
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise LoadError(f"no such file: {path}") from None
    lines = text.splitlines()
    first = next((ln for ln in lines if ln.strip()), "")
    if "\t" in first:
        reader = csv.reader(lines, delimiter="\t", quoting=csv.QUOTE_NONE)
    else:
        reader = csv.reader(lines, delimiter=",")
    for lineno, row in enumerate(reader, start=1):
        if header and lineno == 1:
            continue
        if not row or all(not c.strip() for c in row):
            continue
        yield lineno, [c.strip() for c in row]


def _type_from_prefix(label: str, prefixes: Mapping[str, NodeType]) -> NodeType | None:
    prefix, sep, _ = label.partition(":")
    if not sep:
        return None
    return prefixes.get(prefix)


def build_graph(
    rows: Sequence[tuple[str, str, str]],
    views: Sequence[int] | None = None,
    type_map: Mapping[str, NodeType] | None = None,
    prefixes: Mapping[str, NodeType] = DEFAULT_PREFIXES,
    name: str = "",
) -> KnowledgeGraph:
    """Build a graph from labelled triples; duplicates keep their first occurrence."""
    if views is None:
        views = [UNTAGGED] * len(rows)
    seen: dict[tuple[str, str, str], int] = {}
    kept_rows, kept_views = [], []
    for row, view in zip(rows, views):
        key = tuple(row)
        if key in seen:
            continue
        seen[key] = len(kept_rows)
        kept_rows.append(key)
        kept_views.append(view)
    dropped = len(rows) - len(kept_rows)
    if dropped:
        log.info("dropped %d duplicate triples", dropped)

    ent_labels = list(dict.fromkeys(x for h, _, t in kept_rows for x in (h, t)))
    rel_labels = list(dict.fromkeys(r for _, r, _ in kept_rows))
    entities, relations = Vocabulary(ent_labels), Vocabulary(rel_labels)
    type_map = type_map or {}
    type_ids = np.empty(len(entities), dtype=np.int16)
    type_pos = {nt: i for i, nt in enumerate(NODE_TYPES)}
    for i, label in enumerate(ent_labels):
        nt = type_map.get(label) or _type_from_prefix(label, prefixes)
        if nt is None:
            raise LoadError(f"cannot resolve node type of entity {label!r}")
        type_ids[i] = type_pos[nt]
    triples = np.array(
        [(entities.index_of(h), relations.index_of(r), entities.index_of(t)) for h, r, t in kept_rows],
        dtype=np.int64,
    ).reshape(-1, 3)
    return KnowledgeGraph(triples, np.asarray(kept_views, dtype=np.int8), entities, relations, type_ids, name)


def _read_triple_rows(path: Path, view: ViewTag | None, header: bool):
    rows, views = [], []
    for lineno, row in _rows(path, header=header):
        if len(row) == 3:
            tag = UNTAGGED if view is None else int(view)
        elif len(row) == 4:
            try:
                tag = int(ViewTag.parse(row[3]))
            except ValueError as exc:
                raise LoadError(f"{path}:{lineno}: {exc}") from None
            if tag == ViewTag.WHOLE:
                raise LoadError(f"{path}:{lineno}: a triple cannot be tagged 'whole'")
        else:
            raise LoadError(f"{path}:{lineno}: expected 3 or 4 columns, got {len(row)}")
        rows.append(tuple(row[:3]))
        views.append(tag)
    return rows, views


def load_triples(
    path: str | os.PathLike,
    type_map: str | os.PathLike | Mapping[str, NodeType] | None = None,
    *,
    view: ViewTag | str | None = None,
    header: bool = False,
    prefixes: Mapping[str, NodeType] = DEFAULT_PREFIXES,
    allow_empty: bool = False,
) -> KnowledgeGraph:
    """Load a head/relation/tail[/view] file (tab- or comma-delimited).

    Node types come from the label prefix (``"Gene:7157"``) unless a sidecar
    type map is given, which takes precedence. ``view`` tags every row that
    has no fourth column. An empty file is an error unless ``allow_empty``.
    """
    path = Path(path)
    if isinstance(view, str):
        view = ViewTag.parse(view)
    if type_map is not None and not isinstance(type_map, Mapping):
        type_map = read_type_map(type_map, prefixes)
    rows, views = _read_triple_rows(path, view, header)
    if not rows and not allow_empty:
        raise LoadError(f"{path}: no triples")
    return build_graph(rows, views, type_map, prefixes, name=path.stem)


def load_views(
    files: Mapping[ViewTag | str, str | os.PathLike],
    type_map: str | os.PathLike | Mapping[str, NodeType] | None = None,
    *,
    header: bool = False,
    prefixes: Mapping[str, NodeType] = DEFAULT_PREFIXES,
) -> KnowledgeGraph:
    """Load separately released ontology / instance / bridge files into one tagged graph."""
    if type_map is not None and not isinstance(type_map, Mapping):
        type_map = read_type_map(type_map, prefixes)
    rows, views = [], []
    for tag, path in files.items():
        tag = ViewTag.parse(tag) if isinstance(tag, str) else ViewTag(tag)
        r, v = _read_triple_rows(Path(path), tag, header)
        rows += r
        views += v
    if not rows:
        raise LoadError("no triples in any view file")
    return build_graph(rows, views, type_map, prefixes, name="whole")


def view_filter(kg: KnowledgeGraph, view: ViewTag | str) -> KnowledgeGraph:
    """Triples of one view, with vocabularies shrunk to what they reference."""
    if isinstance(view, str):
        view = ViewTag.parse(view)
    if view == ViewTag.WHOLE:
        mask = np.ones(len(kg), dtype=bool)
    else:
        if np.any(kg.views == UNTAGGED):
            raise ValueError("graph has untagged triples; cannot select a view")
        mask = kg.views == int(view)
    sub = kg.triples[mask]
    ents = np.unique(sub[:, [0, 2]]) if len(sub) else np.zeros(0, dtype=np.int64)
    rels = np.unique(sub[:, 1]) if len(sub) else np.zeros(0, dtype=np.int64)
    ent_map = np.full(kg.num_entities, -1, dtype=np.int64)
    ent_map[ents] = np.arange(len(ents))
    rel_map = np.full(kg.num_relations, -1, dtype=np.int64)
    rel_map[rels] = np.arange(len(rels))
    new = np.stack([ent_map[sub[:, 0]], rel_map[sub[:, 1]], ent_map[sub[:, 2]]], axis=1) if len(sub) else sub
    return KnowledgeGraph(
        new.astype(np.int64),
        kg.views[mask].copy(),
        Vocabulary(kg.entities.label_of(i) for i in ents.tolist()),
        Vocabulary(kg.relations.label_of(i) for i in rels.tolist()),
        kg.entity_types[ents].copy(),
        f"{kg.name}:{view.name.lower()}",
    )


def candidate_set(kg: KnowledgeGraph, relation: int, slot: str) -> np.ndarray:
    """Entities whose node type was observed in ``slot`` ("head"/"tail") of ``relation``."""
    pairs = kg.type_pairs.get(int(relation))
    if pairs is None:
        raise KeyError(f"relation {relation} not observed in graph")
    if slot == "head":
        types = {a for a, _ in pairs}
    elif slot == "tail":
        types = {b for _, b in pairs}
    else:
        raise ValueError("slot must be 'head' or 'tail'")
    return np.flatnonzero(np.isin(kg.entity_types, list(types)))


# ---------------------------------------------------------------------------
# Statistics


@dataclass
class TypeStats:
    name: str
    nodes: int
    edges: int

    @property
    def average_degree(self) -> float:
        return self.edges / self.nodes if self.nodes else 0.0


@dataclass
class StatsReport:
    """Per-category and per-node-type counts.

    An edge counts once for every distinct category (or type) among its two
    endpoints, so an edge inside one category counts once for it.
    """

    categories: list[TypeStats]
    node_types: list[TypeStats]
    relations: dict[str, int]
    total_nodes: int
    total_edges: int
    views: dict[str, int] = field(default_factory=dict)

    def category(self, name: str) -> TypeStats:
        for row in self.categories:
            if row.name == name:
                return row
        raise KeyError(name)

    def to_dict(self) -> dict:
        rows = lambda xs: [
            {"name": x.name, "nodes": x.nodes, "edges": x.edges, "average_degree": round(x.average_degree, 1)} for x in xs
        ]
        return {
            "categories": rows(self.categories),
            "node_types": rows(self.node_types),
            "relations": dict(self.relations),
            "views": dict(self.views),
            "total_nodes": self.total_nodes,
            "total_edges": self.total_edges,
        }

    def to_table(self) -> str:
        lines = [f"{'Biomedical Category':<22}{'Total nodes':>14}{'Total edges':>14}{'Average node degree':>22}"]
        for row in self.categories:
            lines.append(f"{row.name:<22}{row.nodes:>14,}{row.edges:>14,}{row.average_degree:>22.1f}")
        lines.append(f"{'Total':<22}{self.total_nodes:>14,}{self.total_edges:>14,}{'-':>22}")
        return "\n".join(lines)


def _incident_counts(triples: np.ndarray, groups: np.ndarray, num_groups: int) -> np.ndarray:
    gh = groups[triples[:, 0]]
    gt = groups[triples[:, 2]]
    counts = np.bincount(gh, minlength=num_groups)
    cross = gh != gt
    counts += np.bincount(gt[cross], minlength=num_groups)
    return counts


def stats(kg: KnowledgeGraph) -> StatsReport:
    type_idx = kg.entity_types.astype(np.int64)
    cat_of_type = np.array([CATEGORIES.index(nt.category) for nt in NODE_TYPES])
    cat_idx = cat_of_type[type_idx] if len(type_idx) else type_idx
    tri = kg.triples
    type_nodes = np.bincount(type_idx, minlength=len(NODE_TYPES))
    cat_nodes = np.bincount(cat_idx, minlength=len(CATEGORIES))
    type_edges = _incident_counts(tri, type_idx, len(NODE_TYPES)) if len(tri) else np.zeros(len(NODE_TYPES), int)
    cat_edges = _incident_counts(tri, cat_idx, len(CATEGORIES)) if len(tri) else np.zeros(len(CATEGORIES), int)
    rel_counts = Counter(tri[:, 1].tolist())
    view_counts = Counter(kg.views.tolist())
    return StatsReport(
        categories=[TypeStats(c, int(cat_nodes[i]), int(cat_edges[i])) for i, c in enumerate(CATEGORIES) if cat_nodes[i]],
        node_types=[TypeStats(nt.value, int(type_nodes[i]), int(type_edges[i])) for i, nt in enumerate(NODE_TYPES) if type_nodes[i]],
        relations={kg.relations.label_of(r): n for r, n in sorted(rel_counts.items())},
        total_nodes=kg.num_entities,
        total_edges=len(kg),
        views={(ViewTag(v).name.lower() if v != UNTAGGED else "untagged"): n for v, n in sorted(view_counts.items())},
    )


# ---------------------------------------------------------------------------
# Fetching released files


def default_cache_dir() -> Path:
    return Path(os.environ.get("KGE_CACHE", Path.home() / ".cache" / "kgbench"))


def sha256_file(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _quarantine(path: Path) -> Path:
    target = path.with_name(path.name + ".quarantined")
    os.replace(path, target)
    return target


def fetch_dataset(
    url: str,
    cache_dir: str | os.PathLike | None = None,
    expected_digest: str | None = None,
    filename: str | None = None,
) -> Path:
    """Download ``url`` into the cache unless already present; verify SHA-256 when given.

    A digest mismatch moves the offending file aside (``*.quarantined``) and
    raises :class:`IntegrityError`.
    """
    cache = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    cache.mkdir(parents=True, exist_ok=True)
    target = cache / (filename or Path(urllib.request.urlparse(url).path).name or "download")
    expected = expected_digest.lower() if expected_digest else None
    if expected is None:
        log.warning("fetching %s without an expected digest; contents are not verified", url)

    if target.exists():
        if expected is None or sha256_file(target) == expected:
            return target
        moved = _quarantine(target)
        raise IntegrityError(f"cached {target} does not match expected digest; moved to {moved}")

    fd, tmp = tempfile.mkstemp(dir=cache, prefix=".part-")
    try:
        with os.fdopen(fd, "wb") as out, urllib.request.urlopen(url, timeout=60) as resp:
            shutil.copyfileobj(resp, out)
    except (urllib.error.URLError, OSError) as exc:
        Path(tmp).unlink(missing_ok=True)
        raise FetchError(f"failed to fetch {url}: {exc}") from exc
    os.replace(tmp, target)
    if expected is not None and sha256_file(target) != expected:
        moved = _quarantine(target)
        raise IntegrityError(f"{url} does not match expected digest; moved to {moved}")
    return target
