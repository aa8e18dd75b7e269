"""Negative sampling, losses, Adam-family optimisers, early-stopped training and beam grid search."""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import geometry as geo
from .errors import NumericError
from .evaluation import RankingContext, evaluate
from .models import EmbeddingTable, KGEModel, ModelSpec, SparseGrad, get_model, init_params

log = logging.getLogger(__name__)

BATCH_SIZES = (512, 1024, 2048)
LEARNING_RATES = (1e-4, 5e-4, 1e-3, 1e-2, 1e-1)
NEGATIVE_RATIOS = (None, 5, 25, 50, 100, 125, 150, 250)
BENCHMARK_GRID = {"batch_size": BATCH_SIZES, "learning_rate": LEARNING_RATES, "negative_ratio": NEGATIVE_RATIOS}


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 512
    learning_rate: float = 1e-3
    negative_ratio: int | None = 50
    margin: float = 0.0
    max_epochs: int = 1000
    patience: int = 5
    loss: str = "auto"  # auto | bce | nll
    optimizer: str = "auto"  # auto | adam | sparse_adam
    corrupt: str = "tail"  # tail | both
    eval_mode: str = "type-truth"
    seed: int = 0

    def __post_init__(self):
        if self.batch_size <= 0 or self.learning_rate <= 0:
            raise ValueError("batch size and learning rate must be positive")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.negative_ratio is not None and self.negative_ratio < 1:
            raise ValueError("negative_ratio must be >= 1 or None")

    @property
    def loss_kind(self) -> str:
        if self.loss != "auto":
            return self.loss
        return "nll" if self.negative_ratio is None else "bce"

    def replace(self, **kw) -> "TrainConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# ---------------------------------------------------------------------------
# Negatives and losses


def corrupt_tails(tails: np.ndarray, ratio: int, num_entities: int, rng: np.random.Generator) -> np.ndarray:
    """``(len(tails), ratio)`` tails drawn uniformly from entities other than the true one."""
    tails = np.asarray(tails, dtype=np.int64).reshape(-1)
    if num_entities == 1:
        return np.zeros((tails.size, ratio), dtype=np.int64)
    draw = rng.integers(0, num_entities - 1, size=(tails.size, ratio))
    return draw + (draw >= tails[:, None])


def sample_negatives(triple, ratio: int, num_entities: int, rng: np.random.Generator) -> np.ndarray:
    """``ratio`` copies of ``triple`` with a random, different tail."""
    if ratio < 1:
        raise ValueError("ratio must be >= 1")
    h, r, t = (int(x) for x in triple)
    tails = corrupt_tails(np.array([t]), ratio, num_entities, rng)[0]
    out = np.empty((ratio, 3), dtype=np.int64)
    out[:, 0], out[:, 1], out[:, 2] = h, r, tails
    return out


def loss_and_grad(pos_scores, neg_scores, kind: str = "bce", margin: float = 0.0):
    """Loss and its gradients w.r.t. ``pos_scores`` and ``neg_scores``.

    ``bce``: ``mean softplus(-(pos + margin)) + mean softplus(neg + margin)``;
    a positive margin lets distance-based scores (which are <= 0) reach
    confident positives.
    ``nll``: ``neg_scores`` is the ``(B, N)`` matrix of scores of every
    candidate tail (the true one included); the loss is the mean of
    ``logsumexp(row) - pos``.
    """
    pos = np.asarray(pos_scores, dtype=float).reshape(-1)
    neg = np.asarray(neg_scores, dtype=float)
    if neg.ndim != 2 or neg.shape[0] != pos.size:
        raise ValueError(f"shape mismatch: pos {pos.shape}, neg {neg.shape}")
    if kind == "bce":
        pos, neg = pos + margin, neg + margin
        loss = geo.softplus(-pos).mean() + geo.softplus(neg).mean()
        g_pos = -geo.sigmoid(-pos) / pos.size
        g_neg = geo.sigmoid(neg) / neg.size
    elif kind == "nll":
        m = neg.max(axis=1, keepdims=True)
        lse = (m + np.log(np.exp(neg - m).sum(axis=1, keepdims=True)))[:, 0]
        loss = float(np.mean(lse - pos))
        g_pos = -np.ones_like(pos) / pos.size
        g_neg = np.exp(neg - lse[:, None]) / pos.size
    else:
        raise ValueError(f"unknown loss {kind!r}")
    return float(loss), g_pos, g_neg


def loss(pos_scores, neg_scores, kind: str = "bce", margin: float = 0.0) -> float:
    return loss_and_grad(pos_scores, neg_scores, kind, margin)[0]


# ---------------------------------------------------------------------------
# Optimisers


class Adam:
    """Adam over the full parameter tables.

    Unit-ball tables are optimised in the tangent space at the origin: the
    gradient is pulled back through ``exp_0``, the step taken on
    ``log_0(x)``, and the result mapped back and projected.
    """

    sparse = False

    def __init__(self, params: EmbeddingTable, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.steps = 0
        self.m = {k: np.zeros_like(v) for k, v in params.tables.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.tables.items()}
        self._ball = set(params.ball_tables())

    def _check(self, grads: Mapping[str, SparseGrad]):
        for name, g in grads.items():
            if not np.all(np.isfinite(g.values)):
                bad = g.indices[~np.all(np.isfinite(g.values.reshape(len(g.indices), -1)), axis=1)]
                raise NumericError(f"non-finite gradient in table {name!r}, rows {bad[:10].tolist()}")

    def _tangent(self, name, x, g):
        u = geo.log_map_zero(x, 1.0, check=False)
        gu, _ = geo.exp_map_zero_vjp(u, 1.0, g)
        return u, gu

    def _write(self, P, name, rows, value_u_or_x, is_tangent):
        if is_tangent:
            value_u_or_x = geo.project(geo.exp_map_zero(value_u_or_x, 1.0), 1.0)
        P.tables[name][rows] = value_u_or_x

    def step(self, P: EmbeddingTable, grads: Mapping[str, SparseGrad]):
        self._check(grads)
        self.steps += 1
        c1 = 1.0 - self.b1**self.steps
        c2 = 1.0 - self.b2**self.steps
        for name, arr in P.tables.items():
            g = np.zeros_like(arr)
            if name in grads:
                g[grads[name].indices] = grads[name].values
            ball = name in self._ball
            if ball:
                u, g = self._tangent(name, arr, g)
            m, v = self.m[name], self.v[name]
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            delta = self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            moved = np.flatnonzero(np.any(delta.reshape(len(arr), -1) != 0, axis=1))
            if moved.size == 0:
                continue
            base = u if ball else arr
            self._write(P, name, moved, base[moved] - delta[moved], ball)


class SparseAdam(Adam):
    """Lazy Adam: moments and parameters change only for rows with a gradient this step."""

    sparse = True

    def step(self, P: EmbeddingTable, grads: Mapping[str, SparseGrad]):
        self._check(grads)
        self.steps += 1
        c1 = 1.0 - self.b1**self.steps
        c2 = 1.0 - self.b2**self.steps
        for name, sg in grads.items():
            rows = sg.indices
            if rows.size == 0:
                continue
            x = P.tables[name][rows]
            g = sg.values
            ball = name in self._ball
            if ball:
                x, g = self._tangent(name, x, g)
            m = self.b1 * self.m[name][rows] + (1 - self.b1) * g
            v = self.b2 * self.v[name][rows] + (1 - self.b2) * g * g
            self.m[name][rows] = m
            self.v[name][rows] = v
            self._write(P, name, rows, x - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps), ball)


def make_optimizer(kind: str, model: KGEModel, params: EmbeddingTable, lr: float) -> Adam:
    if kind == "auto":
        kind = model.optimizer
    if kind == "adam":
        return Adam(params, lr)
    if kind == "sparse_adam":
        return SparseAdam(params, lr)
    raise ValueError(f"unknown optimizer {kind!r}")


def optimizer_step(opt: Adam, params: EmbeddingTable, grads: Mapping[str, SparseGrad], lr: float | None = None):
    if lr is not None:
        opt.lr = lr
    opt.step(params, grads)
    return params


# ---------------------------------------------------------------------------
# Training loop


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    val_mrr: float
    seconds: float

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)


@dataclass
class TrainedModel:
    spec: ModelSpec
    params: EmbeddingTable
    log: list[EpochRecord]
    stopping_epoch: int
    best_epoch: int
    config: TrainConfig = field(default_factory=TrainConfig)

    @property
    def best_val_mrr(self) -> float:
        vals = [r.val_mrr for r in self.log if np.isfinite(r.val_mrr)]
        return max(vals) if vals else float("nan")


EvalHook = Callable[[KGEModel, EmbeddingTable, int], float]


def _merge(a: dict[str, SparseGrad], b: dict[str, SparseGrad]) -> dict[str, SparseGrad]:
    out = dict(a)
    for name, g in b.items():
        if name not in out:
            out[name] = g
            continue
        idx = np.concatenate([out[name].indices, g.indices])
        vals = np.concatenate([out[name].values, g.values])
        uniq, inv = np.unique(idx, return_inverse=True)
        acc = np.zeros((uniq.size,) + vals.shape[1:])
        np.add.at(acc, inv, vals)
        out[name] = SparseGrad(uniq, acc)
    return out


def batch_loss_and_grads(model, P, batch: np.ndarray, cfg: TrainConfig, rng: np.random.Generator):
    h, r, t = batch[:, 0], batch[:, 1], batch[:, 2]
    N = P.num_entities
    kind = cfg.loss_kind
    pos = model.score(P, h, r, t)
    if kind == "nll":
        cands = np.arange(N)
        nh, nr, nt = np.repeat(h, N), np.repeat(r, N), np.tile(cands, len(h))
        neg = model.score(P, nh, nr, nt).reshape(len(h), N)
    else:
        ratio = cfg.negative_ratio or 1
        nh, nr = np.repeat(h, ratio), np.repeat(r, ratio)
        nt = corrupt_tails(t, ratio, N, rng).reshape(-1)
        if cfg.corrupt == "both":
            flip = rng.random(nh.size) < 0.5
            heads = corrupt_tails(nh[flip], 1, N, rng)[:, 0]
            nt = np.where(flip, np.repeat(t, ratio), nt)
            nh = nh.copy()
            nh[flip] = heads
        neg = model.score(P, nh, nr, nt).reshape(len(h), ratio)
    value, g_pos, g_neg = loss_and_grad(pos, neg, kind, cfg.margin)
    if not np.isfinite(value):
        raise NumericError(f"non-finite loss {value}")
    grads = _merge(model.gradient(P, h, r, t, g_pos), model.gradient(P, nh, nr, nt, g_neg.reshape(-1)))
    return value, grads


def fit(
    split,
    kg,
    spec: ModelSpec,
    cfg: TrainConfig = TrainConfig(),
    eval_hook: EvalHook | None = None,
    *,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> TrainedModel:
    """Train with shuffled minibatches and early stopping on validation MRR.

    ``eval_hook(model, params, epoch)`` returns the validation metric; by
    default it is the MRR on ``split.valid``. Training stops once the metric
    has not improved for ``cfg.patience`` consecutive epochs and the
    parameters of the best epoch are returned.
    """
    train = np.asarray(split.train).reshape(-1, 3)
    if len(train) == 0:
        raise ValueError("empty training set")
    model = get_model(spec)
    P = init_params(spec, kg.num_entities, kg.num_relations, seed=cfg.seed)
    opt = make_optimizer(cfg.optimizer, model, P, cfg.learning_rate)
    rng = np.random.default_rng(cfg.seed)

    if eval_hook is None:
        valid = np.asarray(split.valid).reshape(-1, 3)
        if len(valid):
            ctx = RankingContext.from_split(kg, split)
            eval_hook = lambda m, p, epoch: evaluate(m, p, valid, ctx, cfg.eval_mode, per_relation=False).mrr
        else:
            eval_hook = lambda m, p, epoch: float("nan")

    history: list[EpochRecord] = []
    best, best_epoch, best_params, stale = -np.inf, 0, P.copy(), 0
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        start = time.perf_counter()
        order = rng.permutation(len(train))
        total = 0.0
        for s in range(0, len(train), cfg.batch_size):
            batch = train[order[s : s + cfg.batch_size]]
            value, grads = batch_loss_and_grads(model, P, batch, cfg, rng)
            if not np.isfinite(value):
                raise NumericError(f"non-finite loss at epoch {epoch}, batch starting at {s}")
            opt.step(P, grads)
            total += value * len(batch)
        val = float(eval_hook(model, P, epoch))
        rec = EpochRecord(epoch, total / len(train), val, time.perf_counter() - start)
        history.append(rec)
        if on_epoch:
            on_epoch(rec)
        if np.isnan(val):
            best_params, best_epoch = P.copy(), epoch
            continue
        if val > best:
            best, best_epoch, best_params, stale = val, epoch, P.copy(), 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return TrainedModel(spec, best_params, history, epoch, best_epoch, cfg)


# ---------------------------------------------------------------------------
# Hyper-parameter search


@dataclass
class GridResult:
    config: TrainConfig
    val_mrr: float
    stage: str

    def to_dict(self) -> dict:
        return {"stage": self.stage, "val_mrr": self.val_mrr, **self.config.to_dict()}


def grid_search(
    split,
    kg,
    spec: ModelSpec,
    grid: Mapping[str, Sequence] = BENCHMARK_GRID,
    base: TrainConfig = TrainConfig(),
    fit_fn: Callable = fit,
) -> list[GridResult]:
    """Beam search: sweep batch size, fix the best; then learning rate; then negative ratio.

    Parameters absent from ``grid`` keep their ``base`` value. Returns every
    evaluated configuration sorted by validation MRR (descending, ties in
    evaluation order).
    """
    stages = [k for k in ("batch_size", "learning_rate", "negative_ratio") if grid.get(k)]
    if not stages:
        stages = ["batch_size"]
        grid = {"batch_size": [base.batch_size]}
    results: list[GridResult] = []
    current = base
    for key in stages:
        stage_best = None
        for value in grid[key]:
            cfg = current.replace(**{key: value})
            trained = fit_fn(split, kg, spec, cfg)
            score = trained.best_val_mrr
            res = GridResult(cfg, float(score), key)
            results.append(res)
            log.info("grid %s=%s -> val MRR %.4f", key, value, score)
            if stage_best is None or (np.isfinite(score) and not score <= stage_best.val_mrr):
                stage_best = res
        current = stage_best.config
    order = sorted(range(len(results)), key=lambda i: (-np.nan_to_num(results[i].val_mrr, nan=-np.inf), i))
    return [results[i] for i in order]
