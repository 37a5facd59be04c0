"""Analytic per-sample gradients, batched mean gradients, and an FD oracle.

``grad_sample`` returns the exact gradient of one node's cross-entropy with
respect to the flat parameter vector, assembled from closed-form chain-rule
expressions (outer products filled into the column-major layout).
``grad_mean`` computes the mean gradient over an index multiset with one
vectorized backward pass; it agrees with averaging per-sample gradients up
to float64 rounding.  ``fd_gradient`` is the independent central-difference
oracle used by the test suite and the gradcheck command.
"""

from __future__ import annotations

import numpy as np

from .activations import act_deriv
from .models import (ForwardCache, ModelSpec, PropOps, forward, gcnii_psi,
                     layout_for, loss_sample)


def _error_row(cache: ForwardCache, i: int, label: int) -> np.ndarray:
    e = cache.probs[i].copy()
    e[label] -= 1.0
    return e


def grad_sample(spec: ModelSpec, ops: PropOps, x: np.ndarray, w: np.ndarray,
                i: int, label: int,
                cache: ForwardCache | None = None) -> np.ndarray:
    """Gradient of the cross-entropy at node i w.r.t. the flat parameters."""
    if cache is None:
        cache = forward(spec, ops, x, w)
    layout = layout_for(spec)
    mats = layout.matrices(w)
    act = spec.activation
    g = np.zeros(layout.dim)
    err = _error_row(cache, i, label)

    if spec.arch == "gcn" and spec.depth == 2:
        w2 = mats["W2"]
        layout.view(g, "W2")[...] = np.outer(cache.z_last[i], err)
        u = err @ w2.T
        nbr, a = ops.p.row(i)
        z1, sp1 = cache.zs[0], act_deriv(act, cache.pres[0][nbr])
        layout.view(g, "W1")[...] = (z1[nbr].T @ (a[:, None] * sp1)) * u[None, :]
    elif spec.arch == "gcn":
        delta = np.zeros((ops.n, spec.num_classes))
        delta[i] = err
        _gcn_backward(spec, ops, cache, layout, mats, g, delta)
    elif spec.arch == "sgc":
        layout.view(g, "W2")[...] = np.outer(cache.zw1[i], err)
        layout.view(g, "W1")[...] = np.outer(cache.z[i], err @ mats["W2"].T)
    elif spec.arch in ("appnp", "gprgnn"):
        if spec.arch == "appnp":
            g_row = ops.appnp_row(i)
        else:
            rows = ops.power_row(i, spec.big_k)
            g_row = mats["gamma"] @ rows
            gg = layout.view(g, "gamma")
            for k in range(spec.big_k + 1):
                gg[k] = err @ cache.stack[k][i]
        sp2 = act_deriv(act, cache.pre2)
        weighted2 = g_row[:, None] * sp2
        layout.view(g, "W2")[...] = (cache.s1.T @ weighted2) * err[None, :]
        back = (sp2 * err[None, :]) @ mats["W2"].T
        sp1 = act_deriv(act, cache.pre1)
        layout.view(g, "W1")[...] = x.T @ (g_row[:, None] * sp1 * back)
    elif spec.arch == "gcnii" and spec.depth == 2:
        alphas, betas = spec.gcnii_alphas(), spec.gcnii_betas()
        w_out = mats["W3"]
        layout.view(g, "W3")[...] = np.outer(cache.hs[2][i], err)
        delta = (err @ w_out.T) * act_deriv(act, cache.pres[2][i])
        layout.view(g, "W2")[...] = betas[1] * np.outer(cache.aggs[1][i], delta)
        u2 = delta @ gcnii_psi(spec, mats, 2).T
        nbr, a = ops.p.row(i)
        dij = (1.0 - alphas[1]) * act_deriv(act, cache.pres[1][nbr]) * u2[None, :]
        layout.view(g, "W1")[...] = betas[0] * (
            cache.aggs[0][nbr].T @ (a[:, None] * dij))
        gh0 = np.zeros((ops.n, spec.h))
        gh0[i] += alphas[1] * u2
        v = dij @ gcnii_psi(spec, mats, 1).T
        gh0[nbr] += alphas[0] * a[:, None] * v
        scatter = np.zeros((ops.n, spec.h))
        scatter[nbr] = a[:, None] * v
        gh0 += (1.0 - alphas[0]) * ops.propagate(scatter)
        layout.view(g, "W0")[...] = x.T @ (act_deriv(act, cache.pres[0]) * gh0)
    else:  # gcnii, deeper stacks
        delta = np.zeros((ops.n, spec.num_classes))
        delta[i] = err
        _gcnii_backward(spec, ops, x, cache, layout, mats, g, delta)
    return g


def _gcn_backward(spec, ops, cache, layout, mats, g, delta):
    """Plain-stack backward pass from a logit-error matrix."""
    act = spec.activation
    depth = spec.depth
    layout.view(g, f"W{depth}")[...] = cache.z_last.T @ delta
    dh = ops.propagate(delta @ mats[f"W{depth}"].T)
    for l in range(depth - 1, 0, -1):
        dpre = dh * act_deriv(act, cache.pres[l - 1])
        layout.view(g, f"W{l}")[...] = cache.zs[l - 1].T @ dpre
        if l > 1:
            dh = ops.propagate(dpre @ mats[f"W{l}"].T)


def _gcnii_backward(spec, ops, x, cache, layout, mats, g, delta):
    """Identity-mapping backward pass from a logit-error matrix."""
    act = spec.activation
    alphas, betas = spec.gcnii_alphas(), spec.gcnii_betas()
    depth = spec.depth
    layout.view(g, f"W{depth + 1}")[...] = cache.hs[depth].T @ delta
    dh = delta @ mats[f"W{depth + 1}"].T
    dh0 = np.zeros((ops.n, spec.h))
    for l in range(depth, 0, -1):
        dpre = dh * act_deriv(act, cache.pres[l])
        layout.view(g, f"W{l}")[...] = betas[l - 1] * (cache.aggs[l - 1].T @ dpre)
        dm = dpre @ gcnii_psi(spec, mats, l).T
        dh0 += alphas[l - 1] * dm
        dh = (1.0 - alphas[l - 1]) * ops.propagate(dm)
    dh0 += dh
    layout.view(g, "W0")[...] = x.T @ (dh0 * act_deriv(act, cache.pres[0]))


def grad_mean(spec: ModelSpec, ops: PropOps, x: np.ndarray, w: np.ndarray,
              idx: np.ndarray, labels: np.ndarray,
              cache: ForwardCache | None = None) -> np.ndarray:
    """Mean gradient over an index multiset via one vectorized backward pass."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("index set must be nonempty")
    if cache is None:
        cache = forward(spec, ops, x, w)
    layout = layout_for(spec)
    mats = layout.matrices(w)
    act = spec.activation
    g = np.zeros(layout.dim)

    delta = np.zeros((ops.n, spec.num_classes))
    err = cache.probs[idx].copy()
    err[np.arange(idx.size), labels[idx]] -= 1.0
    np.add.at(delta, idx, err / idx.size)

    if spec.arch == "gcn":
        _gcn_backward(spec, ops, cache, layout, mats, g, delta)
    elif spec.arch == "sgc":
        layout.view(g, "W2")[...] = cache.zw1.T @ delta
        layout.view(g, "W1")[...] = cache.z.T @ (delta @ mats["W2"].T)
    elif spec.arch in ("appnp", "gprgnn"):
        if spec.arch == "appnp":
            dh = ops.appnp_mat(delta)
        else:
            gg = layout.view(g, "gamma")
            for k in range(spec.big_k + 1):
                gg[k] = float(np.sum(delta * cache.stack[k]))
            from .graphs import gpr_powers
            dstack = gpr_powers(ops.p, delta, spec.big_k)
            dh = np.tensordot(mats["gamma"], dstack, axes=(0, 0))
        dpre2 = dh * act_deriv(act, cache.pre2)
        layout.view(g, "W2")[...] = cache.s1.T @ dpre2
        dpre1 = (dpre2 @ mats["W2"].T) * act_deriv(act, cache.pre1)
        layout.view(g, "W1")[...] = x.T @ dpre1
    else:  # gcnii
        _gcnii_backward(spec, ops, x, cache, layout, mats, g, delta)
    return g


def central_differences(fn, w: np.ndarray, step: float) -> np.ndarray:
    """Coordinate-wise central differences of a scalar function of w."""
    if step <= 0:
        raise ValueError("step must be positive")
    g = np.zeros_like(w)
    wp = w.copy()
    for j in range(w.shape[0]):
        orig = wp[j]
        wp[j] = orig + step
        hi = fn(wp)
        wp[j] = orig - step
        lo = fn(wp)
        wp[j] = orig
        g[j] = (hi - lo) / (2.0 * step)
    return g


def fd_gradient(spec: ModelSpec, ops: PropOps, x: np.ndarray, w: np.ndarray,
                i: int, label: int, step: float = 1e-6) -> np.ndarray:
    """Central finite differences of the per-node loss, coordinate by coordinate."""
    return central_differences(
        lambda wp: loss_sample(spec, ops, x, wp, i, label), w, step)


def max_relative_error(analytic: np.ndarray, reference: np.ndarray) -> float:
    """Componentwise relative error with a scale-aware denominator floor.

    Central differences carry absolute noise around machine_eps / step, so
    components far below the gradient's own scale cannot support a relative
    comparison; they are floored at 1e-2 of the largest reference component
    (and 1e-6 absolute for all-zero gradients).  Components above that floor
    are compared truly relatively.
    """
    scale = float(np.max(np.abs(reference), initial=0.0))
    floor = max(1e-2 * scale, 1e-6)
    denom = np.maximum(np.maximum(np.abs(reference), np.abs(analytic)), floor)
    return float(np.max(np.abs(analytic - reference) / denom))
