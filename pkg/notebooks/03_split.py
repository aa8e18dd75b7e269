"""
A connectivity-preserving split
===============================

Held-out triples never disconnect the training graph.
"""

from importlib.resources import files

from kgbench.splitter import connected_components, spanning_tree, split
from kgbench.triple_store import load_triples, stats, view_filter

kg = load_triples(files("kgbench") / "data" / "fixture_whole.tsv")
print(stats(kg).to_table())

# The two views are just filters on the tag column
for view in ("ontology", "instance", "bridge"):
    print(view, len(view_filter(kg, view)))

# %%
comps = connected_components(kg)
print([len(c) for c in comps])
tree = spanning_tree(kg, comps[0])
print(len(tree), "tree edges for", len(comps[0]), "nodes")

# Only non-tree triples are eligible for hold-out
ds = split(kg, holdout_fraction=0.2, min_component_size=10, seed=0)
print(len(ds.train), len(ds.valid), len(ds.test), len(ds.excluded))
for row in kg.label_triples(ds.test):
    print("test:", row)
