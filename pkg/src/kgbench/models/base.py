from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from kgbench import geometry as geo

ENTITY = "entity"
RELATION = "relation"


@dataclass(frozen=True)
class TableSpec:
    """Shape and initialisation of one parameter table.

    ``owner`` tells whether rows are indexed by entity or relation id.
    ``init`` is one of ``uniform``, ``zeros``, ``ones``, ``identity``,
    ``curvature`` or ``ball`` (tangent uniform, exp-mapped onto the unit ball).
    """

    owner: str
    row_shape: tuple[int, ...]
    init: str = "uniform"

    @property
    def is_ball(self) -> bool:
        return self.init == "ball"


class SparseGrad(NamedTuple):
    indices: np.ndarray
    values: np.ndarray


@dataclass
class EmbeddingTable:
    """All trainable parameters of one model, keyed by table name."""

    model: str
    dim: int
    num_entities: int
    num_relations: int
    tables: dict[str, np.ndarray]
    specs: dict[str, TableSpec]
    seed: int = 0

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tables[name]

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(
            self.model,
            self.dim,
            self.num_entities,
            self.num_relations,
            {k: v.copy() for k, v in self.tables.items()},
            dict(self.specs),
            self.seed,
        )

    def ball_tables(self) -> list[str]:
        return [k for k, s in self.specs.items() if s.is_ball]

    def allclose(self, other: "EmbeddingTable", atol: float = 0.0) -> bool:
        if self.tables.keys() != other.tables.keys():
            return False
        return all(np.allclose(self.tables[k], other.tables[k], rtol=0.0, atol=atol) for k in self.tables)


class _Grads:
    """Accumulates per-row gradient pieces, then merges duplicate rows."""

    def __init__(self):
        self._parts: dict[str, list[tuple[np.ndarray, np.ndarray]]] = {}

    def add(self, name: str, idx, values):
        self._parts.setdefault(name, []).append((np.asarray(idx), np.asarray(values, dtype=float)))

    def merge(self) -> dict[str, SparseGrad]:
        out = {}
        for name, parts in self._parts.items():
            idx = np.concatenate([p[0].reshape(-1) for p in parts])
            vals = np.concatenate([p[1].reshape((p[0].size,) + p[1].shape[p[0].ndim :]) for p in parts])
            uniq, inv = np.unique(idx, return_inverse=True)
            acc = np.zeros((uniq.size,) + vals.shape[1:])
            np.add.at(acc, inv, vals)
            out[name] = SparseGrad(uniq, acc)
        return out


Backward = Callable[[np.ndarray], _Grads]


def lp_norm(x, p: int):
    if p == 1:
        return np.sum(np.abs(x), axis=-1)
    return np.sqrt(np.sum(x * x, axis=-1))


def lp_norm_grad(x, p: int):
    """Gradient of ``|x|_p`` w.r.t. ``x`` (zero at the kink)."""
    if p == 1:
        return np.sign(x)
    n = np.sqrt(np.sum(x * x, axis=-1, keepdims=True))
    return np.where(n > 0, x / np.where(n > 0, n, 1.0), 0.0)


class KGEModel:
    """Base class for scoring models.

    Subclasses implement :meth:`tables` and :meth:`forward`. ``forward`` takes
    index arrays ``h, r, t`` of equal length and returns the scores plus a
    closure mapping the upstream gradient ``dL/dscore`` to sparse parameter
    gradients. Higher score means more plausible.
    """

    name: str = ""
    category: str = ""
    default_norm: int | None = None
    # default optimiser for this family
    optimizer: str = "adam"
    needs_even_dim = False

    def __init__(self, dim: int, norm: int | None = None):
        if dim < 2:
            raise ValueError("embedding dimension must be >= 2")
        if self.needs_even_dim and dim % 2:
            raise ValueError(f"{self.name} needs an even embedding dimension, got {dim}")
        self.dim = dim
        self.norm = norm if norm is not None else self.default_norm
        if self.norm not in (None, 1, 2):
            raise ValueError("norm must be 1 or 2")

    def tables(self) -> dict[str, TableSpec]:
        raise NotImplementedError

    def forward(self, P: EmbeddingTable, h, r, t) -> tuple[np.ndarray, Backward]:
        raise NotImplementedError

    # -- public API -------------------------------------------------------

    def _check(self, P: EmbeddingTable, h, r, t):
        h = np.asarray(h, dtype=np.int64).reshape(-1)
        r = np.asarray(r, dtype=np.int64).reshape(-1)
        t = np.asarray(t, dtype=np.int64).reshape(-1)
        for name, ids, bound in (("head", h, P.num_entities), ("relation", r, P.num_relations), ("tail", t, P.num_entities)):
            if ids.size and (ids.min() < 0 or ids.max() >= bound):
                raise IndexError(f"{name} id out of bounds [0, {bound})")
        return h, r, t

    def score(self, P: EmbeddingTable, h, r, t) -> np.ndarray:
        h, r, t = self._check(P, h, r, t)
        return self.forward(P, h, r, t)[0]

    def score_triple(self, P: EmbeddingTable, triple) -> float:
        h, r, t = triple
        return float(self.score(P, [h], [r], [t])[0])

    def score_candidates(self, P: EmbeddingTable, h, r, t, candidates) -> np.ndarray:
        """Score ``(h, r, ?)`` when ``t is None`` or ``(?, r, t)`` when ``h is None``."""
        cands = np.asarray(candidates, dtype=np.int64).reshape(-1)
        if cands.size == 0:
            raise ValueError("empty candidate list")
        if (h is None) == (t is None):
            raise ValueError("exactly one of h, t must be None")
        rr = np.full(cands.size, r, dtype=np.int64)
        if t is None:
            return self.score(P, np.full(cands.size, h, dtype=np.int64), rr, cands)
        return self.score(P, cands, rr, np.full(cands.size, t, dtype=np.int64))

    def gradient(self, P: EmbeddingTable, h, r, t, upstream) -> dict[str, SparseGrad]:
        """Sparse gradients of ``sum(upstream * score)``."""
        h, r, t = self._check(P, h, r, t)
        up = np.broadcast_to(np.asarray(upstream, dtype=float), h.shape)
        _, backward = self.forward(P, h, r, t)
        return backward(up).merge()

    def init_params(self, num_entities: int, num_relations: int, seed: int = 0, scale: float = 1e-3) -> EmbeddingTable:
        if num_entities <= 0 or num_relations <= 0:
            raise ValueError("entity and relation counts must be positive")
        rng = np.random.default_rng(seed)
        specs = self.tables()
        tables = {}
        for name in sorted(specs):
            spec = specs[name]
            rows = num_entities if spec.owner == ENTITY else num_relations
            shape = (rows,) + spec.row_shape
            if spec.init == "uniform":
                arr = rng.uniform(-scale, scale, size=shape)
            elif spec.init == "ball":
                arr = geo.project(geo.exp_map_zero(rng.uniform(-scale, scale, size=shape), 1.0), 1.0)
            elif spec.init == "zeros":
                arr = np.zeros(shape)
            elif spec.init == "ones":
                arr = np.ones(shape)
            elif spec.init == "identity":
                arr = np.broadcast_to(np.eye(spec.row_shape[0]), shape).copy()
            elif spec.init == "curvature":
                arr = np.full(shape, geo.inverse_softplus(1.0))
            else:
                raise ValueError(f"unknown init {spec.init}")
            tables[name] = arr
        return EmbeddingTable(self.name, self.dim, num_entities, num_relations, tables, specs, seed)


@dataclass(frozen=True)
class ModelSpec:
    name: str
    dim: int = 512
    norm: int | None = None
    init_scale: float = 1e-3
