"""
Working on the Poincare ball
============================

A short tour of the hyperbolic primitives the models are built from.
"""

import numpy as np

from kgbench import geometry as geo

rng = np.random.default_rng(0)

# A point halfway to the boundary of the unit ball, and a small offset
x = np.array([0.5, 0.0])
y = np.array([0.0, 0.1])

# Mobius addition is not commutative, but the left inverse undoes it
print("x + y      :", geo.mobius_add(x, y, 1.0))
print("y + x      :", geo.mobius_add(y, x, 1.0))
print("(-x)+(x+y) :", geo.mobius_add(-x, geo.mobius_add(x, y, 1.0), 1.0))

# %%
# Distances blow up near the boundary. Equal Euclidean steps cost more and more.
radii = np.linspace(0, 0.95, 6)
for r in radii:
    d = geo.hyp_distance(np.array([r, 0.0]), np.array([r + 0.04, 0.0]), 1.0)
    print(f"step at |x|={r:.2f}: hyperbolic length {d:.3f}")

# %%
# Curvature controls how "flat" the ball is. As c goes to zero we get
# back ordinary vector arithmetic and twice the Euclidean distance.
for c in (1.0, 1e-2, 1e-6):
    print(c, geo.mobius_add(x, y, c), geo.hyp_distance(x, y, c) / (2 * np.linalg.norm(x - y)))

# %%
# exp/log at the origin move between the tangent space and the ball
v = rng.normal(size=4)
p = geo.exp_map_zero(v, 0.5)
print("round trip error:", np.abs(geo.log_map_zero(p, 0.5) - v).max())

# Givens rotations act on pairs of coordinates and keep norms
theta = rng.uniform(-np.pi, np.pi, size=2)
print(np.linalg.norm(v), np.linalg.norm(geo.givens_rotate(theta, v)), np.linalg.norm(geo.givens_reflect(theta, v)))
