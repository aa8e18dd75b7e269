"""Link-prediction ranking and metrics.

Three filter modes are supported:

``raw``
    every entity is a candidate;
``type``
    candidates restricted to node types observed for the relation/slot in the
    training graph;
``type-truth``
    additionally drops candidates that complete another known-true triple
    (train, valid or test). This is the default.

Ties are broken pessimistically: every other candidate scoring at least as
high as the target ranks above it.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import RankingError
from .models import EmbeddingTable, KGEModel
from .triple_store import KnowledgeGraph, candidate_set

MODES = ("raw", "type", "type-truth")
SLOTS = ("head", "tail")


@dataclass(frozen=True)
class RankResult:
    triple: tuple[int, int, int]
    slot: str
    rank: int
    num_candidates: int


@dataclass
class MetricsReport:
    mr: float
    mrr: float
    hits1: float
    hits3: float
    hits10: float
    count: int
    mode: str = "type-truth"
    model: str = ""
    per_relation: dict[str, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "MetricsReport":
        return cls(**dict(d))


class RankingContext:
    """Candidate universe (from training triples) and known-true triples for filtering."""

    def __init__(self, train: KnowledgeGraph, known: KnowledgeGraph | None = None):
        self.train = train
        self.known = known if known is not None else train
        self._cands: dict[tuple[int, str], np.ndarray] = {}
        self._all = np.arange(train.num_entities)

    @classmethod
    def from_split(cls, kg: KnowledgeGraph, split) -> "RankingContext":
        known = np.concatenate([split.train, split.valid, split.test])
        return cls(kg.with_triples(split.train), kg.with_triples(known))

    def candidates(self, relation: int, slot: str, mode: str) -> np.ndarray:
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if mode == "raw":
            return self._all
        key = (int(relation), slot)
        if key not in self._cands:
            try:
                self._cands[key] = candidate_set(self.train, relation, slot)
            except KeyError as exc:
                raise RankingError(str(exc)) from None
        return self._cands[key]

    def known_answers(self, triple, slot: str) -> np.ndarray:
        h, r, t = triple
        return self.known.tails(h, r) if slot == "tail" else self.known.heads(r, t)


def rank_one(
    model: KGEModel,
    params: EmbeddingTable,
    triple,
    slot: str,
    ctx: RankingContext,
    mode: str = "type-truth",
) -> RankResult:
    h, r, t = (int(x) for x in triple)
    target = t if slot == "tail" else h
    cands = ctx.candidates(r, slot, mode)
    pos = np.searchsorted(cands, target)
    if pos >= cands.size or cands[pos] != target:
        raise RankingError(f"target {target} of {(h, r, t)} not in {slot} candidate set ({mode})")
    if mode == "type-truth":
        others = ctx.known_answers((h, r, t), slot)
        drop = np.isin(cands, others) & (cands != target)
        cands = cands[~drop]
        pos = np.searchsorted(cands, target)
    if slot == "tail":
        scores = model.score_candidates(params, h, r, None, cands)
    else:
        scores = model.score_candidates(params, None, r, t, cands)
    target_score = scores[pos]
    ahead = int(np.count_nonzero(scores >= target_score)) - 1
    return RankResult((h, r, t), slot, 1 + ahead, int(cands.size))


def metrics_from_ranks(ranks: Sequence[int] | np.ndarray, mode: str = "type-truth", model: str = "") -> MetricsReport:
    ranks = np.asarray(ranks, dtype=float)
    if ranks.size == 0:
        raise ValueError("no ranks")
    return MetricsReport(
        mr=float(ranks.mean()),
        mrr=float((1.0 / ranks).mean()),
        hits1=float((ranks <= 1).mean()),
        hits3=float((ranks <= 3).mean()),
        hits10=float((ranks <= 10).mean()),
        count=int(ranks.size),
        mode=mode,
        model=model,
    )


def rank_all(model, params, triples, ctx: RankingContext, mode: str = "type-truth") -> list[RankResult]:
    return [rank_one(model, params, tri, slot, ctx, mode) for tri in np.asarray(triples).tolist() for slot in SLOTS]


def evaluate(
    model: KGEModel,
    params: EmbeddingTable,
    test: np.ndarray,
    ctx: RankingContext,
    mode: str = "type-truth",
    *,
    per_relation: bool = True,
) -> MetricsReport:
    """Mean metrics over head- and tail-slot ranks of every test triple."""
    test = np.asarray(test).reshape(-1, 3)
    if len(test) == 0:
        raise ValueError("empty test set")
    results = rank_all(model, params, test, ctx, mode)
    report = metrics_from_ranks([res.rank for res in results], mode, model.name)
    if per_relation:
        by_rel: dict[int, list[int]] = {}
        for res in results:
            by_rel.setdefault(res.triple[1], []).append(res.rank)
        labels = ctx.train.relations
        for rel in sorted(by_rel):
            sub = metrics_from_ranks(by_rel[rel], mode, model.name)
            report.per_relation[labels.label_of(rel)] = {
                k: v for k, v in sub.to_dict().items() if k not in ("per_relation", "mode", "model")
            }
    return report


_COLUMNS = (("MR", "mr", "{:.2f}"), ("MRR", "mrr", "{:.4f}"), ("Hit@1", "hits1", "{:.4f}"), ("Hit@3", "hits3", "{:.4f}"), ("Hit@10", "hits10", "{:.4f}"))


def report(metrics: MetricsReport | Iterable[MetricsReport], format: str = "table", *, breakdown: bool = False) -> str:
    """Render one or more reports as a fixed-width table or JSON text."""
    items = [metrics] if isinstance(metrics, MetricsReport) else list(metrics)
    if format == "json":
        return json.dumps([m.to_dict() for m in items], indent=2, sort_keys=True)
    if format != "table":
        raise ValueError("format must be 'table' or 'json'")
    width = max([len("Model")] + [len(m.model) for m in items]) + 2
    rel_width = max([len("Relation")] + [len(r) for m in items for r in m.per_relation]) + 2
    head = f"{'Model':<{width}}" + (f"{'Relation':<{rel_width}}" if breakdown else "")
    head += "".join(f"{c:>10}" for c, _, _ in _COLUMNS) + f"  {'Mode':<10}"
    lines = [head]
    for m in items:
        row = f"{m.model:<{width}}" + (f"{'(all)':<{rel_width}}" if breakdown else "")
        row += "".join(f"{fmt.format(getattr(m, key)):>10}" for _, key, fmt in _COLUMNS) + f"  {m.mode:<10}"
        lines.append(row)
        if breakdown:
            for rel, vals in m.per_relation.items():
                sub = f"{'':<{width}}{rel:<{rel_width}}" + "".join(f"{fmt.format(vals[key]):>10}" for _, key, fmt in _COLUMNS)
                lines.append(sub)
    return "\n".join(lines)


def parse_report_json(text: str) -> list[MetricsReport]:
    return [MetricsReport.from_dict(d) for d in json.loads(text)]
