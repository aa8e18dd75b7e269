"""
Training and filtered ranking
=============================
"""

from kgbench.evaluation import MODES, RankingContext, evaluate, report
from kgbench.models import ModelSpec, get_model
from kgbench.synthetic import compositional_split, hierarchy_kg
from kgbench.training import TrainConfig, fit

# A binary hierarchy with grandparent edges; some of those are held out
kg = hierarchy_kg(64)
ds = compositional_split(kg, "is_a_2", 0.4, seed=0)
print(len(ds.train), len(ds.valid), len(ds.test))

cfg = TrainConfig(batch_size=32, learning_rate=0.01, negative_ratio=25, margin=2.0, max_epochs=200, patience=20)
spec = ModelSpec("TransE", 32)
tm = fit(ds, kg, spec, cfg)
print("stopped at epoch", tm.stopping_epoch, "best epoch", tm.best_epoch)
for rec in tm.log[::20]:
    print(rec.epoch, round(rec.loss, 4), round(rec.val_mrr, 3))

# %%
# The three candidate filters give slightly different numbers
ctx = RankingContext.from_split(kg, ds)
rows = [evaluate(get_model(spec), tm.params, ds.test, ctx, mode) for mode in MODES]
print(report(rows))
