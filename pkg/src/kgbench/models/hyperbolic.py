"""Transform-then-translate scorers in Euclidean space and on the Poincaré ball.

Euclidean members (MurE, RotE, RefE, AttE) score
``-|T_r(h) + r - t|^2 + b_h + b_t``. Their hyperbolic counterparts (MuRP,
RotH, RefH, AttH) apply the same head transform in the tangent space at the
origin, map to the ball, Möbius-add the relation translation and replace the
Euclidean distance by the geodesic one.

Hyperbolic entity and translation rows are stored as points of the unit ball.
Relation ``r`` sees them in its own ball of curvature ``c_r = softplus(k_r)``
through ``exp_0^{c_r}(log_0^1(x))``; MuRP keeps a single fixed curvature 1.
"""

from __future__ import annotations

import numpy as np

from kgbench import geometry as geo

from .base import ENTITY, RELATION, KGEModel, TableSpec, _Grads


def _transform_tables(kind: str, d: int) -> dict[str, TableSpec]:
    if kind == "diag":
        return {"rel_diag": TableSpec(RELATION, (d,), init="ones")}
    if kind == "rot":
        return {"rel_rot": TableSpec(RELATION, (d // 2,))}
    if kind == "ref":
        return {"rel_ref": TableSpec(RELATION, (d // 2,))}
    if kind == "att":
        return {
            "rel_rot": TableSpec(RELATION, (d // 2,)),
            "rel_ref": TableSpec(RELATION, (d // 2,)),
            "rel_att": TableSpec(RELATION, (d,)),
        }
    raise ValueError(kind)


def _transform(kind: str, P, r, u):
    """Relation-specific linear map of tangent vectors ``u``; returns (q, vjp)."""
    if kind == "diag":
        rho = P["rel_diag"][r]

        def vjp(g, grads):
            grads.add("rel_diag", r, g * u)
            return g * rho

        return rho * u, vjp
    if kind == "rot":
        th = P["rel_rot"][r]

        def vjp(g, grads):
            gth, gu = geo.givens_rotate_vjp(th, u, g)
            grads.add("rel_rot", r, gth)
            return gu

        return geo.givens_rotate(th, u), vjp
    if kind == "ref":
        th = P["rel_ref"][r]

        def vjp(g, grads):
            gth, gu = geo.givens_reflect_vjp(th, u, g)
            grads.add("rel_ref", r, gth)
            return gu

        return geo.givens_reflect(th, u), vjp
    if kind == "att":
        th_rot, th_ref, a = P["rel_rot"][r], P["rel_ref"][r], P["rel_att"][r]
        q_rot = geo.givens_rotate(th_rot, u)
        q_ref = geo.givens_reflect(th_ref, u)

        def vjp(g, grads):
            g_rot, g_ref, g_a = geo.tangent_attention_vjp(q_rot, q_ref, a, g)
            gth1, gu1 = geo.givens_rotate_vjp(th_rot, u, g_rot)
            gth2, gu2 = geo.givens_reflect_vjp(th_ref, u, g_ref)
            grads.add("rel_rot", r, gth1)
            grads.add("rel_ref", r, gth2)
            grads.add("rel_att", r, g_a)
            return gu1 + gu2

        return geo.tangent_attention(q_rot, q_ref, a), vjp
    raise ValueError(kind)


def _bias_tables():
    return {"bias_head": TableSpec(ENTITY, (), init="zeros"), "bias_tail": TableSpec(ENTITY, (), init="zeros")}


def _add_bias_grads(grads, h, t, up):
    grads.add("bias_head", h, up)
    grads.add("bias_tail", t, up)


class _EuclideanTransform(KGEModel):
    category = "Distance"
    transform = ""

    def tables(self):
        d = self.dim
        specs = {"ent": TableSpec(ENTITY, (d,)), "rel": TableSpec(RELATION, (d,))}
        specs.update(_transform_tables(self.transform, d))
        specs.update(_bias_tables())
        return specs

    def forward(self, P, h, r, t):
        E = P["ent"]
        q, tvjp = _transform(self.transform, P, r, E[h])
        x = q + P["rel"][r] - E[t]
        score = -np.sum(x * x, axis=-1) + P["bias_head"][h] + P["bias_tail"][t]

        def backward(up):
            g = -2.0 * up[:, None] * x
            grads = _Grads()
            grads.add("ent", h, tvjp(g, grads))
            grads.add("rel", r, g)
            grads.add("ent", t, -g)
            _add_bias_grads(grads, h, t, up)
            return grads

        return score, backward


class MurE(_EuclideanTransform):
    """Diagonal relation scaling of the head."""

    name = "MurE"
    transform = "diag"


class RotE(_EuclideanTransform):
    name = "RotE"
    transform = "rot"


class RefE(_EuclideanTransform):
    name = "RefE"
    transform = "ref"


class AttE(_EuclideanTransform):
    name = "AttE"
    transform = "att"


def _to_ball(x, c):
    """Unit-ball point -> ball of curvature c. Returns (point, vjp)."""
    u = geo.log_map_zero(x, 1.0, check=False)
    y0 = geo.exp_map_zero(u, c)
    y = geo.project(y0, c)

    def vjp(g):
        gy0, gc1 = geo.project_vjp(y0, c, g)
        gu, gc2 = geo.exp_map_zero_vjp(u, c, gy0)
        gx, _ = geo.log_map_zero_vjp(x, 1.0, gu)
        return gx, gc1 + gc2

    return y, vjp


class _HyperbolicTransform(KGEModel):
    category = "Hyperbolic"
    transform = ""
    learn_curvature = True

    def tables(self):
        d = self.dim
        specs = {"ent": TableSpec(ENTITY, (d,), init="ball"), "rel": TableSpec(RELATION, (d,), init="ball")}
        specs.update(_transform_tables(self.transform, d))
        specs.update(_bias_tables())
        if self.learn_curvature:
            specs["curvature"] = TableSpec(RELATION, (), init="curvature")
        return specs

    def curvature(self, P, r):
        if not self.learn_curvature:
            return np.ones((len(r), 1))
        return geo.softplus(P["curvature"][r])[:, None]

    def forward(self, P, h, r, t):
        E = P["ent"]
        c = self.curvature(P, r)
        xh, xr, xt = E[h], P["rel"][r], E[t]

        u_h = geo.log_map_zero(xh, 1.0, check=False)
        q_t, tvjp = _transform(self.transform, P, r, u_h)
        q0 = geo.exp_map_zero(q_t, c)
        q = geo.project(q0, c)
        if self.learn_curvature:
            rc, r_vjp = _to_ball(xr, c)
            tc, t_vjp = _to_ball(xt, c)
            z0 = geo.mobius_add(q, rc, c, project_result=False)
            z = geo.project(z0, c)
            dist = geo.hyp_distance(z, tc, c)
        else:
            # MuRP compares the transformed head with t ⊕ r
            z0 = geo.mobius_add(xt, xr, c, project_result=False)
            z = geo.project(z0, c)
            dist = geo.hyp_distance(q, z, c)
        score = -dist * dist + P["bias_head"][h] + P["bias_tail"][t]

        def backward(up):
            grads = _Grads()
            gdist = -2.0 * up * dist
            if self.learn_curvature:
                gz, gtc, gc = geo.hyp_distance_vjp(z, tc, c, gdist)
                gz0, gc_ = geo.project_vjp(z0, c, gz)
                gc = gc + gc_
                gq, grc, gc_ = geo.mobius_add_vjp(q, rc, c, gz0)
                gc = gc + gc_
                gxt, gc_ = t_vjp(gtc)
                gc = gc + gc_
                gxr, gc_ = r_vjp(grc)
                gc = gc + gc_
            else:
                gq, gz, gc = geo.hyp_distance_vjp(q, z, c, gdist)
                gz0, _ = geo.project_vjp(z0, c, gz)
                gxt, gxr, _ = geo.mobius_add_vjp(xt, xr, c, gz0)
            gq0, gc_ = geo.project_vjp(q0, c, gq)
            gc = gc + gc_
            gqt, gc_ = geo.exp_map_zero_vjp(q_t, c, gq0)
            gc = gc + gc_
            gu_h = tvjp(gqt, grads)
            gxh, _ = geo.log_map_zero_vjp(xh, 1.0, gu_h)
            grads.add("ent", h, gxh)
            grads.add("ent", t, gxt)
            grads.add("rel", r, gxr)
            if self.learn_curvature:
                grads.add("curvature", r, gc[:, 0] * geo.sigmoid(P["curvature"][r]))
            _add_bias_grads(grads, h, t, up)
            return grads

        return score, backward


class MuRP(_HyperbolicTransform):
    """``-d(exp_0(R log_0(h)), t ⊕ r)^2 + b_h + b_t`` at fixed curvature 1, R diagonal."""

    name = "MuRP"
    transform = "diag"
    learn_curvature = False


class RotH(_HyperbolicTransform):
    name = "RotH"
    transform = "rot"


class RefH(_HyperbolicTransform):
    name = "RefH"
    transform = "ref"


class AttH(_HyperbolicTransform):
    name = "AttH"
    transform = "att"
