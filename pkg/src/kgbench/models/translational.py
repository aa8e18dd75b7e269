"""Translation-based scorers: TransE, TransH, TransR, TransD."""

from __future__ import annotations

import numpy as np

from .base import ENTITY, RELATION, KGEModel, TableSpec, _Grads, lp_norm, lp_norm_grad


class TransE(KGEModel):
    name = "TransE"
    category = "Distance"
    default_norm = 1

    def tables(self):
        d = self.dim
        return {"ent": TableSpec(ENTITY, (d,)), "rel": TableSpec(RELATION, (d,))}

    def forward(self, P, h, r, t):
        E, R = P["ent"], P["rel"]
        x = E[h] + R[r] - E[t]
        score = -lp_norm(x, self.norm)

        def backward(up):
            g = -up[:, None] * lp_norm_grad(x, self.norm)
            grads = _Grads()
            grads.add("ent", h, g)
            grads.add("ent", t, -g)
            grads.add("rel", r, g)
            return grads

        return score, backward


class TransH(KGEModel):
    """Hyperplane projection ``x - <w, x> w`` with ``w = r_p / |r_p|``.

    The normal is normalised inside the score, so the unit-length constraint
    holds for any stored ``r_p``.
    """

    name = "TransH"
    category = "Distance"
    default_norm = 1

    def tables(self):
        d = self.dim
        return {
            "ent": TableSpec(ENTITY, (d,)),
            "rel": TableSpec(RELATION, (d,)),
            "rel_normal": TableSpec(RELATION, (d,)),
        }

    def forward(self, P, h, r, t):
        E = P["ent"]
        rp = P["rel_normal"][r]
        rp_norm = np.linalg.norm(rp, axis=-1, keepdims=True)
        w = rp / rp_norm
        delta = E[h] - E[t]
        wd = np.sum(w * delta, axis=-1, keepdims=True)
        x = delta - wd * w + P["rel"][r]
        score = -lp_norm(x, self.norm)

        def backward(up):
            g = -up[:, None] * lp_norm_grad(x, self.norm)
            gw_ = np.sum(g * w, axis=-1, keepdims=True)
            g_delta = g - gw_ * w
            gw = -gw_ * delta - wd * g
            g_rp = (gw - np.sum(gw * w, axis=-1, keepdims=True) * w) / rp_norm
            grads = _Grads()
            grads.add("ent", h, g_delta)
            grads.add("ent", t, -g_delta)
            grads.add("rel", r, g)
            grads.add("rel_normal", r, g_rp)
            return grads

        return score, backward


class TransR(KGEModel):
    """Relation-specific projection matrices, square (d x d), initialised to identity."""

    name = "TransR"
    category = "Distance"
    default_norm = 1

    def tables(self):
        d = self.dim
        return {
            "ent": TableSpec(ENTITY, (d,)),
            "rel": TableSpec(RELATION, (d,)),
            "rel_proj": TableSpec(RELATION, (d, d), init="identity"),
        }

    def forward(self, P, h, r, t):
        E = P["ent"]
        M = P["rel_proj"][r]
        delta = E[h] - E[t]
        x = np.einsum("bij,bj->bi", M, delta) + P["rel"][r]
        score = -lp_norm(x, self.norm)

        def backward(up):
            g = -up[:, None] * lp_norm_grad(x, self.norm)
            g_delta = np.einsum("bij,bi->bj", M, g)
            grads = _Grads()
            grads.add("ent", h, g_delta)
            grads.add("ent", t, -g_delta)
            grads.add("rel", r, g)
            grads.add("rel_proj", r, g[:, :, None] * delta[:, None, :])
            return grads

        return score, backward


class TransD(KGEModel):
    """Dynamic mapping ``(I + r_p e_p^T) e`` with per-entity projection vectors."""

    name = "TransD"
    category = "Distance"
    default_norm = 1

    def tables(self):
        d = self.dim
        return {
            "ent": TableSpec(ENTITY, (d,)),
            "ent_proj": TableSpec(ENTITY, (d,)),
            "rel": TableSpec(RELATION, (d,)),
            "rel_proj": TableSpec(RELATION, (d,)),
        }

    def forward(self, P, h, r, t):
        E, Ep = P["ent"], P["ent_proj"]
        eh, et, hp, tp = E[h], E[t], Ep[h], Ep[t]
        rp = P["rel_proj"][r]
        ah = np.sum(hp * eh, axis=-1, keepdims=True)
        at = np.sum(tp * et, axis=-1, keepdims=True)
        x = eh + rp * ah + P["rel"][r] - et - rp * at
        score = -lp_norm(x, self.norm)

        def backward(up):
            g = -up[:, None] * lp_norm_grad(x, self.norm)
            grp = np.sum(rp * g, axis=-1, keepdims=True)
            grads = _Grads()
            grads.add("ent", h, g + hp * grp)
            grads.add("ent", t, -g - tp * grp)
            grads.add("ent_proj", h, grp * eh)
            grads.add("ent_proj", t, -grp * et)
            grads.add("rel", r, g)
            grads.add("rel_proj", r, (ah - at) * g)
            return grads

        return score, backward
