"""Numeric kernels for Euclidean, complex and Poincaré-ball embeddings.

Every function works on the last axis of its array arguments and broadcasts
over leading axes. Curvatures ``c`` are positive and either scalars or arrays
shaped ``(..., 1)`` so they broadcast against vectors.

Functions ending in ``_vjp`` return vector-Jacobian products: given the
upstream gradient of the output they return gradients of the inputs, in the
same order as the forward arguments.
"""

from __future__ import annotations

import numpy as np

BALL_EPS = 1e-5
MIN_NORM = 1e-15
_SERIES_CUTOFF = 1e-3


def _dot(a, b):
    return np.sum(a * b, axis=-1, keepdims=True)


def _norm(x):
    return np.sqrt(_dot(x, x))


def _sum_to_shape(g, shape):
    """Reduce a broadcast gradient back to ``shape``."""
    g = np.asarray(g)
    if g.shape == tuple(shape):
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _grad_c(g, c):
    if np.ndim(c) == 0:
        return float(np.sum(g))
    return _sum_to_shape(g, np.shape(c))


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def inverse_softplus(y):
    return np.log(np.expm1(y))


# ---------------------------------------------------------------------------
# Ball projection


def project(x, c):
    """Pull points with ``c * |x|^2 >= 1`` back to radius ``(1 - eps)/sqrt(c)``."""
    x = np.asarray(x, dtype=float)
    radius = (1.0 - BALL_EPS) / np.sqrt(c)
    n = np.maximum(_norm(x), MIN_NORM)
    return np.where(n > radius, x / n * radius, x)


def project_vjp(x, c, g):
    x = np.asarray(x, dtype=float)
    sc = np.sqrt(c)
    radius = (1.0 - BALL_EPS) / sc
    n = np.maximum(_norm(x), MIN_NORM)
    clamped = n > radius
    unit = x / n
    gu = g * radius / n - unit * _dot(unit, g) * radius / n
    gx = np.where(clamped, gu, g)
    # d radius / dc = -radius / (2c)
    gc = np.where(clamped, _dot(g, unit) * (-radius / (2.0 * c)), 0.0)
    return gx, _grad_c(gc, c)


def inside_ball(x, c) -> bool:
    return bool(np.all(c * np.sum(np.asarray(x) ** 2, axis=-1) < 1.0))


# ---------------------------------------------------------------------------
# Möbius addition


def _mobius_parts(x, y, c):
    xy = _dot(x, y)
    x2 = _dot(x, x)
    y2 = _dot(y, y)
    a = 1.0 + 2.0 * c * xy + c * y2
    b = 1.0 - c * x2
    den = 1.0 + 2.0 * c * xy + c * c * x2 * y2
    return xy, x2, y2, a, b, den


def mobius_add(x, y, c, *, project_result: bool = True):
    """Möbius addition ``x ⊕_c y`` on the Poincaré ball of curvature ``-c``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _, _, _, a, b, den = _mobius_parts(x, y, c)
    out = (a * x + b * y) / den
    return project(out, c) if project_result else out


def mobius_add_vjp(x, y, c, g):
    """Gradients of the unprojected ``mobius_add`` w.r.t. ``x``, ``y``, ``c``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xy, x2, y2, a, b, den = _mobius_parts(x, y, c)
    num = a * x + b * y
    gx_ = _dot(g, x)
    gy_ = _dot(g, y)
    gn = _dot(g, num) / (den * den)
    gx = (a / den) * g + (2.0 * c * gx_ / den) * y - (2.0 * c * gy_ / den) * x
    gx = gx - gn * (2.0 * c * y + 2.0 * c * c * y2 * x)
    gy = (b / den) * g + (gx_ / den) * (2.0 * c * x + 2.0 * c * y)
    gy = gy - gn * (2.0 * c * x + 2.0 * c * c * x2 * y)
    gc = (gx_ * (2.0 * xy + y2) - gy_ * x2) / den - gn * (2.0 * xy + 2.0 * c * x2 * y2)
    return gx, gy, _grad_c(gc, c)


# ---------------------------------------------------------------------------
# Exponential / logarithmic maps at the origin
#
# Both are radial maps v -> phi(s|v|)/(s|v|) * v with s = sqrt(c). For the
# gradient we need q(z) = phi(z)/z and k(z) = q'(z)/z, with series expansions
# close to the origin where the closed forms cancel catastrophically.


def _tanh_ratio(z):
    small = z < _SERIES_CUTOFF
    zs = np.where(small, 1.0, z)
    q = np.where(small, 1.0 - z * z / 3.0, np.tanh(zs) / zs)
    sech2 = 1.0 - np.tanh(zs) ** 2
    k = np.where(small, -2.0 / 3.0 + 8.0 * z * z / 15.0, (zs * sech2 - np.tanh(zs)) / zs**3)
    return q, k


def _artanh_ratio(z):
    small = z < _SERIES_CUTOFF
    zs = np.where(small, 0.5, z)
    at = np.arctanh(zs)
    q = np.where(small, 1.0 + z * z / 3.0, at / zs)
    k = np.where(small, 2.0 / 3.0 + 4.0 * z * z / 5.0, (zs / (1.0 - zs * zs) - at) / zs**3)
    return q, k


def _radial_vjp(ratio, v, c, g):
    s = np.sqrt(c)
    n = _norm(v)
    q, k = ratio(s * n)
    vg = _dot(v, g)
    gv = q * g + (c * k * vg) * v
    gc = 0.5 * vg * n * n * k
    return gv, _grad_c(gc, c)


def exp_map_zero(v, c):
    """Exponential map at the origin: ``tanh(s|v|) v / (s|v|)`` with ``s = sqrt(c)``."""
    v = np.asarray(v, dtype=float)
    q, _ = _tanh_ratio(np.sqrt(c) * _norm(v))
    return q * v


def exp_map_zero_vjp(v, c, g):
    return _radial_vjp(_tanh_ratio, np.asarray(v, dtype=float), c, g)


def log_map_zero(p, c, *, check: bool = True):
    """Logarithmic map at the origin, the inverse of :func:`exp_map_zero`.

    Raises ``ValueError`` for points on or outside the ball boundary.
    """
    p = np.asarray(p, dtype=float)
    z = np.sqrt(c) * _norm(p)
    if check and np.any(z >= 1.0):
        raise ValueError("log_map_zero: point on or outside the ball boundary")
    q, _ = _artanh_ratio(z)
    return q * p


def log_map_zero_vjp(p, c, g):
    return _radial_vjp(_artanh_ratio, np.asarray(p, dtype=float), c, g)


# ---------------------------------------------------------------------------
# Distance


def hyp_distance(x, y, c):
    """Geodesic distance ``(2/sqrt(c)) artanh(sqrt(c) |(-x) ⊕_c y|)``. Reduces the last axis."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = mobius_add(-x, y, c, project_result=False)
    s = np.sqrt(c)
    z = np.minimum(s * _norm(w), 1.0 - 1e-15)
    return (2.0 / s * np.arctanh(z))[..., 0]


def hyp_distance_vjp(x, y, c, g):
    """``g`` has the batch shape of the distance (last axis reduced)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    g = np.asarray(g, dtype=float)[..., None]
    w = mobius_add(-x, y, c, project_result=False)
    s = np.sqrt(c)
    m = _norm(w)
    z = np.minimum(s * m, 1.0 - 1e-15)
    dd_dm = 2.0 / (1.0 - z * z)
    unit = np.where(m > MIN_NORM, w / np.maximum(m, MIN_NORM), 0.0)
    gw = g * dd_dm * unit
    # direct c dependence of 2 artanh(s m)/s at fixed m
    dd_ds = 2.0 * (m / (1.0 - z * z) - np.arctanh(z) / s) / s
    gc_direct = g * dd_ds / (2.0 * s)
    gnx, gy, gc = mobius_add_vjp(-x, y, c, gw)
    return -gnx, gy, gc + _grad_c(gc_direct, c)


# ---------------------------------------------------------------------------
# Givens transforms


def _blocks(x, half):
    return x[..., 0 : 2 * half : 2], x[..., 1 : 2 * half : 2]


def _assemble(x, y0, y1, half):
    out = np.array(x, dtype=float, copy=True)
    out[..., 0 : 2 * half : 2] = y0
    out[..., 1 : 2 * half : 2] = y1
    return out


def givens_rotate(theta, x):
    """Apply 2x2 block rotations ``[[cos, -sin], [sin, cos]]``; odd last coordinate passes through."""
    x = np.asarray(x, dtype=float)
    half = x.shape[-1] // 2
    cos, sin = np.cos(theta), np.sin(theta)
    x0, x1 = _blocks(x, half)
    return _assemble(x, cos * x0 - sin * x1, sin * x0 + cos * x1, half)


def givens_rotate_vjp(theta, x, g):
    x = np.asarray(x, dtype=float)
    half = x.shape[-1] // 2
    cos, sin = np.cos(theta), np.sin(theta)
    x0, x1 = _blocks(x, half)
    g0, g1 = _blocks(g, half)
    gx = _assemble(g, cos * g0 + sin * g1, -sin * g0 + cos * g1, half)
    gtheta = -g0 * (sin * x0 + cos * x1) + g1 * (cos * x0 - sin * x1)
    return gtheta, gx


def givens_reflect(theta, x):
    """Apply 2x2 block reflections ``[[cos, sin], [sin, -cos]]``; odd last coordinate passes through."""
    x = np.asarray(x, dtype=float)
    half = x.shape[-1] // 2
    cos, sin = np.cos(theta), np.sin(theta)
    x0, x1 = _blocks(x, half)
    return _assemble(x, cos * x0 + sin * x1, sin * x0 - cos * x1, half)


def givens_reflect_vjp(theta, x, g):
    x = np.asarray(x, dtype=float)
    half = x.shape[-1] // 2
    cos, sin = np.cos(theta), np.sin(theta)
    x0, x1 = _blocks(x, half)
    g0, g1 = _blocks(g, half)
    gx = _assemble(g, cos * g0 + sin * g1, sin * g0 - cos * g1, half)
    gtheta = g0 * (cos * x1 - sin * x0) + g1 * (cos * x0 + sin * x1)
    return gtheta, gx


# ---------------------------------------------------------------------------
# Attention over two candidate queries


def _attention_weight(q_rot, q_ref, a):
    return sigmoid((_dot(a, q_rot) - _dot(a, q_ref))[..., 0])[..., None]


def tangent_attention(q_rot, q_ref, a):
    """Softmax-weighted mix ``alpha * q_rot + (1 - alpha) * q_ref``.

    The weights are the softmax of the logits ``<a, q_rot>`` and ``<a, q_ref>``
    at temperature 1.
    """
    q_rot = np.asarray(q_rot, dtype=float)
    q_ref = np.asarray(q_ref, dtype=float)
    if q_rot.shape[-1] != q_ref.shape[-1] or q_rot.shape[-1] != np.shape(a)[-1]:
        raise ValueError("tangent_attention: dimension mismatch")
    alpha = _attention_weight(q_rot, q_ref, a)
    return alpha * q_rot + (1.0 - alpha) * q_ref


def tangent_attention_vjp(q_rot, q_ref, a, g):
    alpha = _attention_weight(q_rot, q_ref, a)
    diff = q_rot - q_ref
    dz = _dot(g, diff) * alpha * (1.0 - alpha)
    g_rot = alpha * g + dz * a
    g_ref = (1.0 - alpha) * g - dz * a
    g_a = dz * diff
    return g_rot, g_ref, g_a


# ---------------------------------------------------------------------------
# Complex kernels (numpy complex arrays)


def complex_rotate(h, r):
    """Elementwise product ``h ∘ r``."""
    h = np.asarray(h, dtype=complex)
    r = np.asarray(r, dtype=complex)
    if h.shape[-1] != r.shape[-1]:
        raise ValueError("complex_rotate: dimension mismatch")
    return h * r


def complex_trilinear(h, r, t):
    """``Re(sum_k h_k r_k conj(t_k))``."""
    h = np.asarray(h, dtype=complex)
    r = np.asarray(r, dtype=complex)
    t = np.asarray(t, dtype=complex)
    if not (h.shape[-1] == r.shape[-1] == t.shape[-1]):
        raise ValueError("complex_trilinear: dimension mismatch")
    return np.real(np.sum(h * r * np.conj(t), axis=-1))


def phases_to_unit(theta):
    return np.exp(1j * np.asarray(theta, dtype=float))
