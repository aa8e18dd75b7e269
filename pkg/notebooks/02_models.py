"""
Scoring triples with the model zoo
==================================
"""

import numpy as np

from kgbench.models import MODELS, ModelSpec, get_model, init_params
from kgbench.synthetic import tree_kg

kg = tree_kg(depth=3)
print(kg.num_entities, "entities,", kg.num_relations, "relation(s)")
print(sorted(MODELS))

# Every model exposes the same interface: init_params, score, score_candidates, gradient
h, r, t = np.array([1, 2]), np.array([0, 0]), np.array([0, 0])
for name in ("TransE", "DistMult", "RotatE", "RotH", "AttH"):
    spec = ModelSpec(name, 8)
    model = get_model(spec)
    P = init_params(spec, kg.num_entities, kg.num_relations, seed=0)
    print(f"{name:9s}", model.score(P, h, r, t).round(4), sorted(P.tables))

# %%
# score_candidates ranks all tails at once; it agrees with per-triple scoring
model = get_model("RotH", dim=8)
P = init_params(ModelSpec("RotH", 8), kg.num_entities, kg.num_relations, seed=1)
all_tails = model.score_candidates(P, h[0], r[0], None, np.arange(kg.num_entities))
one_by_one = model.score(P, np.repeat(h[:1], kg.num_entities), np.zeros(kg.num_entities, int), np.arange(kg.num_entities))
print(np.abs(all_tails - one_by_one).max())

# Gradients are sparse: only the rows a batch touches come back
grads = model.gradient(P, h, r, t, np.ones(2))
print({k: g.indices.tolist() for k, g in grads.items()})
