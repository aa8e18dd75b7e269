import math

import numpy as np
import pytest

from kgbench.errors import NumericError
from kgbench.models import MODELS, EmbeddingTable, ModelSpec, SparseGrad, TableSpec
from kgbench.splitter import split
from kgbench.synthetic import hierarchy_kg, tree_kg
from kgbench.training import (
    BENCHMARK_GRID,
    Adam,
    SparseAdam,
    TrainConfig,
    TrainedModel,
    corrupt_tails,
    fit,
    grid_search,
    loss,
    loss_and_grad,
    sample_negatives,
)


def one_table(values, init="uniform"):
    arr = np.array(values, dtype=float)
    spec = TableSpec("entity", arr.shape[1:], init)
    return EmbeddingTable("x", arr.shape[-1] if arr.ndim > 1 else 1, arr.shape[0], 1, {"w": arr}, {"w": spec})


# -- negatives --------------------------------------------------------------------


def test_negatives_share_head_and_relation():
    neg = sample_negatives((3, 1, 4), 2, 10, np.random.default_rng(0))
    assert neg.shape == (2, 3)
    assert np.all(neg[:, 0] == 3) and np.all(neg[:, 1] == 1)
    assert np.all(neg[:, 2] != 4)


def test_negatives_forced_outcome_and_determinism():
    neg = sample_negatives((1, 0, 0), 50, 2, np.random.default_rng(0))
    assert np.all(neg[:, 2] == 1)
    a = corrupt_tails(np.arange(20) % 7, 5, 7, np.random.default_rng(3))
    b = corrupt_tails(np.arange(20) % 7, 5, 7, np.random.default_rng(3))
    assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        sample_negatives((0, 0, 0), 0, 5, np.random.default_rng(0))


def test_negatives_uniform_over_other_entities():
    draws = corrupt_tails(np.full(20000, 2), 1, 5, np.random.default_rng(1)).ravel()
    counts = np.bincount(draws, minlength=5)
    assert counts[2] == 0
    assert np.all(np.abs(counts[[0, 1, 3, 4]] / draws.size - 0.25) < 0.02)


# -- losses -------------------------------------------------------------------------


def test_loss_examples():
    assert loss([0.0], [[0.0]], "bce") == pytest.approx(2 * math.log(2), abs=1e-15)
    assert loss([60.0], [[-60.0, -60.0]], "bce") < 1e-20
    assert loss([1.3], [[1.3]], "nll") == 0.0
    with pytest.raises(ValueError):
        loss([0.0, 1.0], [[0.0]], "bce")
    with pytest.raises(ValueError):
        loss([0.0], [[0.0]], "hinge")


@pytest.mark.parametrize("kind", ["bce", "nll"])
def test_loss_gradients(kind):
    rng = np.random.default_rng(0)
    pos, neg = rng.normal(size=4), rng.normal(size=(4, 6))
    if kind == "nll":
        neg[:, 0] = pos
    _, gp, gn = loss_and_grad(pos, neg, kind, margin=0.5)
    eps = 1e-6
    for i in range(4):
        d = np.zeros(4)
        d[i] = eps
        num = (loss(pos + d, neg, kind, 0.5) - loss(pos - d, neg, kind, 0.5)) / (2 * eps)
        # for nll the true candidate's score also sits inside neg; its direct term is g_pos
        assert gp[i] == pytest.approx(num, abs=1e-8)
    D = np.zeros_like(neg)
    D[1, 3] = eps
    num = (loss(pos, neg + D, kind, 0.5) - loss(pos, neg - D, kind, 0.5)) / (2 * eps)
    assert gn[1, 3] == pytest.approx(num, abs=1e-8)


# -- optimisers ---------------------------------------------------------------------


def reference_adam(x, grad, lr, steps, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    out = []
    for k in range(1, steps + 1):
        g = grad(x)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x = x - lr * (m / (1 - b1**k)) / (math.sqrt(v / (1 - b2**k)) + eps)
        out.append(x)
    return out


def test_adam_quadratic():
    P = one_table([[1.0]])
    opt = Adam(P, lr=0.1)
    xs = []
    for _ in range(100):
        x = P["w"][0, 0]
        opt.step(P, {"w": SparseGrad(np.array([0]), np.array([[2 * x]]))})
        xs.append(P["w"][0, 0])
    np.testing.assert_allclose(xs, reference_adam(1.0, lambda x: 2 * x, 0.1, 100), rtol=0, atol=1e-12)
    assert abs(xs[-1]) < 1e-2
    # momentum overshoots zero near step 11, so |x| only falls monotonically on the first approach
    first = xs[: int(np.argmax(np.abs(xs) < 0.05)) + 1]
    assert np.all(np.diff(np.abs(first)) < 0)


def test_zero_gradient_row_unchanged():
    P = one_table([[1.0, 2.0], [3.0, 4.0]])
    before = P.copy()
    Adam(P, lr=0.1).step(P, {"w": SparseGrad(np.array([0]), np.array([[0.5, -0.5]]))})
    np.testing.assert_array_equal(P["w"][1], before["w"][1])
    assert not np.array_equal(P["w"][0], before["w"][0])


def test_sparse_adam_touches_only_gradient_rows():
    P = one_table(np.ones((10, 3)))
    opt = SparseAdam(P, lr=0.1)
    opt.step(P, {"w": SparseGrad(np.array([2]), np.ones((1, 3)))})
    m_before = opt.m["w"].copy()
    opt.step(P, {"w": SparseGrad(np.array([7]), np.ones((1, 3)))})
    changed = np.flatnonzero(np.any(opt.m["w"] != m_before, axis=1))
    assert changed.tolist() == [7]
    assert np.all(P["w"][[0, 1, 3, 4, 5, 6, 8, 9]] == 1.0)


def test_non_finite_gradient_aborts():
    P = one_table([[1.0]])
    with pytest.raises(NumericError, match="rows"):
        Adam(P).step(P, {"w": SparseGrad(np.array([0]), np.array([[np.nan]]))})


def test_ball_rows_stay_inside():
    P = one_table([[0.9, 0.0], [0.0, 0.5]], init="ball")
    for opt in (Adam(P, lr=0.5), SparseAdam(P, lr=0.5)):
        for _ in range(20):
            opt.step(P, {"w": SparseGrad(np.array([0, 1]), np.array([[-50.0, 0.0], [0.0, -50.0]]))})
            assert np.all(np.sum(P["w"] ** 2, axis=-1) < 1.0)


# -- fit ----------------------------------------------------------------------------


@pytest.fixture(scope="module")
def small():
    kg = hierarchy_kg(32)
    return kg, split(kg, 0.2, 10, seed=0)


def test_early_stopping_constant_metric(small):
    kg, ds = small
    cfg = TrainConfig(batch_size=64, max_epochs=50, patience=5, negative_ratio=2)
    tm = fit(ds, kg, ModelSpec("TransE", 8), cfg, eval_hook=lambda m, p, e: 0.5)
    assert tm.stopping_epoch == 6 and len(tm.log) == 6 and tm.best_epoch == 1


def test_improving_metric_runs_to_max_epochs(small):
    kg, ds = small
    cfg = TrainConfig(batch_size=64, max_epochs=8, patience=1, negative_ratio=2)
    tm = fit(ds, kg, ModelSpec("TransE", 8), cfg, eval_hook=lambda m, p, e: float(e))
    assert tm.stopping_epoch == 8 and tm.best_epoch == 8


def test_best_params_returned(small):
    kg, ds = small
    seen = {}
    scores = [0.1, 0.4, 0.3, 0.2, 0.2, 0.1, 0.0]

    def hook(model, P, epoch):
        seen[epoch] = P.copy()
        return scores[epoch - 1]

    cfg = TrainConfig(batch_size=16, max_epochs=20, patience=3, negative_ratio=2)
    tm = fit(ds, kg, ModelSpec("DistMult", 8), cfg, eval_hook=hook)
    assert tm.best_epoch == 2 and tm.stopping_epoch == 5
    assert tm.params.allclose(seen[2])
    assert tm.best_val_mrr == max(r.val_mrr for r in tm.log)


def test_fit_reproducible(small):
    kg, ds = small
    cfg = TrainConfig(batch_size=16, max_epochs=3, negative_ratio=4, seed=11)
    a = fit(ds, kg, ModelSpec("RotH", 8), cfg)
    b = fit(ds, kg, ModelSpec("RotH", 8), cfg)
    assert a.params.allclose(b.params)
    assert [(r.loss, r.val_mrr) for r in a.log] == [(r.loss, r.val_mrr) for r in b.log]


def test_fit_rejects_empty_train(small):
    kg, ds = small
    empty = type(ds)(np.zeros((0, 3), dtype=np.int64), ds.valid, ds.test, ds.excluded, 0, 0.2, 10)
    with pytest.raises(ValueError):
        fit(empty, kg, ModelSpec("TransE", 8))


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(patience=0)
    assert TrainConfig(negative_ratio=None).loss_kind == "nll"
    assert TrainConfig().loss_kind == "bce"


@pytest.mark.parametrize("name", sorted(MODELS))
def test_loss_decreases_on_tree(name):
    kg = tree_kg(depth=4)
    ds = split(kg, 0.2, 10, seed=0)
    cfg = TrainConfig(batch_size=64, learning_rate=0.01, negative_ratio=5, max_epochs=50, patience=50)
    tm = fit(ds, kg, ModelSpec(name, 8), cfg, eval_hook=lambda m, p, e: float("nan"))
    assert len(tm.log) == 50
    assert tm.log[-1].loss < tm.log[0].loss
    for table in tm.params.ball_tables():
        assert np.all(np.sum(tm.params[table] ** 2, axis=-1) < 1.0)


def test_full_softmax_training_runs(small):
    kg, ds = small
    cfg = TrainConfig(batch_size=32, learning_rate=0.01, negative_ratio=None, max_epochs=5, patience=5)
    tm = fit(ds, kg, ModelSpec("DistMult", 8), cfg, eval_hook=lambda m, p, e: float("nan"))
    assert tm.log[-1].loss < tm.log[0].loss


def test_symmetric_corruption_runs(small):
    kg, ds = small
    cfg = TrainConfig(batch_size=32, learning_rate=0.01, negative_ratio=3, max_epochs=3, corrupt="both")
    fit(ds, kg, ModelSpec("TransE", 8), cfg)


# -- grid ---------------------------------------------------------------------------


class StubFit:
    """Validation MRR is a fixed function of the configuration; counts calls."""

    def __init__(self):
        self.calls = []

    def __call__(self, split, kg, spec, cfg):
        self.calls.append(cfg)
        ratio = 0 if cfg.negative_ratio is None else cfg.negative_ratio
        mrr = 1 / (1 + abs(cfg.batch_size - 1024) / 512 + abs(math.log10(cfg.learning_rate) + 2) + abs(ratio - 125) / 100)
        return TrainedModel(spec, None, [type("R", (), {"val_mrr": mrr})()], 1, 1, cfg)


def test_beam_grid_counts_and_order():
    stub = StubFit()
    results = grid_search(None, None, ModelSpec("TransE", 8), BENCHMARK_GRID, TrainConfig(), fit_fn=stub)
    assert len(stub.calls) == 3 + 5 + 8
    stages = [r.stage for r in results]
    assert stages.count("batch_size") == 3 and stages.count("learning_rate") == 5 and stages.count("negative_ratio") == 8
    mrrs = [r.val_mrr for r in results]
    assert mrrs == sorted(mrrs, reverse=True)
    best = results[0].config
    assert (best.batch_size, best.learning_rate, best.negative_ratio) == (1024, 1e-2, 125)
    # later stages keep the winners of earlier ones
    assert all(c.batch_size == 1024 for c in stub.calls[3:])
    assert all(c.learning_rate == 1e-2 for c in stub.calls[8:])


def test_grid_small_cases():
    stub = StubFit()
    one = grid_search(None, None, ModelSpec("TransE", 8), {"batch_size": [512]}, fit_fn=stub)
    assert len(one) == 1 and one[0].config.batch_size == 512
    two = grid_search(None, None, ModelSpec("TransE", 8), {"batch_size": [512, 1024]}, fit_fn=stub)
    assert [r.config.batch_size for r in two] == [1024, 512]
