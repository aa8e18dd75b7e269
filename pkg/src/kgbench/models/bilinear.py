"""Semantic-matching scorers: DistMult, SimplE, CP, and the complex-space ComplEx/RotatE."""

from __future__ import annotations

import numpy as np

from .base import ENTITY, RELATION, KGEModel, TableSpec, _Grads


class DistMult(KGEModel):
    name = "DistMult"
    category = "Semantic"

    def tables(self):
        d = self.dim
        return {"ent": TableSpec(ENTITY, (d,)), "rel": TableSpec(RELATION, (d,))}

    def forward(self, P, h, r, t):
        E = P["ent"]
        eh, er, et = E[h], P["rel"][r], E[t]
        score = np.sum(eh * er * et, axis=-1)

        def backward(up):
            u = up[:, None]
            grads = _Grads()
            grads.add("ent", h, u * er * et)
            grads.add("ent", t, u * eh * er)
            grads.add("rel", r, u * eh * et)
            return grads

        return score, backward


class CP(KGEModel):
    """Canonical polyadic: separate head-role and tail-role entity tables."""

    name = "CP"
    category = "Semantic"

    def tables(self):
        d = self.dim
        return {
            "ent_head": TableSpec(ENTITY, (d,)),
            "ent_tail": TableSpec(ENTITY, (d,)),
            "rel": TableSpec(RELATION, (d,)),
        }

    def forward(self, P, h, r, t):
        eh, er, et = P["ent_head"][h], P["rel"][r], P["ent_tail"][t]
        score = np.sum(eh * er * et, axis=-1)

        def backward(up):
            u = up[:, None]
            grads = _Grads()
            grads.add("ent_head", h, u * er * et)
            grads.add("ent_tail", t, u * eh * er)
            grads.add("rel", r, u * eh * et)
            return grads

        return score, backward


class SimplE(KGEModel):
    """Average of the forward and inverse-relation CP scores.

    Each entity owns a head-role vector and a tail-role vector; each relation
    owns a forward and an inverse diagonal.
    """

    name = "SimplE"
    category = "Semantic"

    def tables(self):
        d = self.dim
        return {
            "ent_head": TableSpec(ENTITY, (d,)),
            "ent_tail": TableSpec(ENTITY, (d,)),
            "rel": TableSpec(RELATION, (d,)),
            "rel_inv": TableSpec(RELATION, (d,)),
        }

    def forward(self, P, h, r, t):
        H, T = P["ent_head"], P["ent_tail"]
        h1, h2, t1, t2 = H[h], T[h], H[t], T[t]
        vr, vi = P["rel"][r], P["rel_inv"][r]
        score = 0.5 * (np.sum(h1 * vr * t2, axis=-1) + np.sum(t1 * vi * h2, axis=-1))

        def backward(up):
            u = 0.5 * up[:, None]
            grads = _Grads()
            grads.add("ent_head", h, u * vr * t2)
            grads.add("ent_tail", t, u * h1 * vr)
            grads.add("ent_head", t, u * vi * h2)
            grads.add("ent_tail", h, u * t1 * vi)
            grads.add("rel", r, u * h1 * t2)
            grads.add("rel_inv", r, u * t1 * h2)
            return grads

        return score, backward


def _split(x):
    k = x.shape[-1] // 2
    return x[..., :k], x[..., k:]


class ComplEx(KGEModel):
    """``Re(<h, r, conj(t)>)``; a width-``d`` row holds ``d/2`` real parts then ``d/2`` imaginary parts."""

    name = "ComplEx"
    category = "Complex"
    optimizer = "sparse_adam"
    needs_even_dim = True

    def tables(self):
        d = self.dim
        return {"ent": TableSpec(ENTITY, (d,)), "rel": TableSpec(RELATION, (d,))}

    def forward(self, P, h, r, t):
        E = P["ent"]
        a, b = _split(E[h])
        c, e = _split(P["rel"][r])
        f, g_ = _split(E[t])
        re = a * c - b * e
        im = a * e + b * c
        score = np.sum(re * f + im * g_, axis=-1)

        def backward(up):
            u = up[:, None]
            grads = _Grads()
            grads.add("ent", h, u * np.concatenate([c * f + e * g_, -e * f + c * g_], axis=-1))
            grads.add("rel", r, u * np.concatenate([a * f + b * g_, -b * f + a * g_], axis=-1))
            grads.add("ent", t, u * np.concatenate([re, im], axis=-1))
            return grads

        return score, backward


class RotatE(KGEModel):
    """``-|h ∘ r - t|`` with unit-modulus relations stored as phase angles.

    L1 sums complex moduli; L2 is the Euclidean norm over all real coordinates.
    """

    name = "RotatE"
    category = "Complex"
    optimizer = "sparse_adam"
    default_norm = 1
    needs_even_dim = True

    def tables(self):
        d = self.dim
        return {"ent": TableSpec(ENTITY, (d,)), "rel_phase": TableSpec(RELATION, (d // 2,))}

    def forward(self, P, h, r, t):
        E = P["ent"]
        a, b = _split(E[h])
        f, g_ = _split(E[t])
        theta = P["rel_phase"][r]
        cos, sin = np.cos(theta), np.sin(theta)
        xr = a * cos - b * sin - f
        xi = a * sin + b * cos - g_
        mod = np.sqrt(xr * xr + xi * xi)
        if self.norm == 1:
            score = -np.sum(mod, axis=-1)
        else:
            score = -np.sqrt(np.sum(mod * mod, axis=-1))

        def backward(up):
            if self.norm == 1:
                denom = np.where(mod > 0, mod, 1.0)
                scale = np.where(mod > 0, 1.0 / denom, 0.0)
            else:
                tot = -score
                scale = np.where(tot > 0, 1.0 / np.where(tot > 0, tot, 1.0), 0.0)[:, None]
            gr = -up[:, None] * xr * scale
            gi = -up[:, None] * xi * scale
            grads = _Grads()
            grads.add("ent", h, np.concatenate([gr * cos + gi * sin, -gr * sin + gi * cos], axis=-1))
            grads.add("ent", t, np.concatenate([-gr, -gi], axis=-1))
            grads.add("rel_phase", r, gr * (-a * sin - b * cos) + gi * (a * cos - b * sin))
            return grads

        return score, backward
