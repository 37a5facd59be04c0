"""Model descriptors, flat parameter vectors, and forward passes.

Five architectures share one interface: a spec naming the architecture and
its dimensions, a flat float64 parameter vector with a fixed column-major
(per-column stacking) layout, and a forward pass over the whole node set
that caches every intermediate the analytic gradients need.

Architectures (P is the normalized adjacency, sigma the smoothed ReLU):

  gcn     softmax( P sigma(P X W1) W2 ),  extendable to more layers
  sgc     softmax( P^2 X W1 W2 )
  gcnii   H0 = sigma(X W0);  H_l = sigma(((1-a_l) P H_{l-1} + a_l H0) Psi_l)
          with Psi_l = (1-b_l) I + b_l W_l;  softmax(H_L W_out)
  appnp   softmax( F sigma(sigma(X W1) W2) ) with F the teleport filter
  gprgnn  softmax( sum_k gamma_k P^k sigma(sigma(X W1) W2) )

The gprgnn display is read with a softmax so the cross-entropy gradient has
the same (probs - onehot) form as the other four models.  Bias terms are
omitted everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .activations import ActivationSpec, act_eval
from .graphs import (FILTER_MATERIALIZE_LIMIT, PropagationMatrix, appnp_apply,
                     appnp_coefficients, appnp_filter, gpr_powers)
from .rng import stream

ARCHITECTURES = ("gcn", "gcnii", "sgc", "appnp", "gprgnn")


@dataclass(frozen=True)
class ModelSpec:
    """Architecture descriptor: dimensions, activation, hyperparameters.

    ``depth`` counts propagation layers and only applies to gcn / gcnii
    (default 2, the setting with constant certificates; deeper stacks are
    for the depth experiment only).  gcnii with depth > 2 uses alpha1 for
    every layer and the decaying identity-map weights beta1 / layer_index.
    """

    arch: str
    d: int
    h: int
    num_classes: int
    activation: ActivationSpec
    alpha1: float = 0.1
    alpha2: float = 0.1
    beta1: float = 0.5
    beta2: float = 0.25
    gamma: float = 0.1
    big_k: int = 10
    depth: int = 2

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.arch!r}")
        if min(self.d, self.h, self.num_classes) <= 0:
            raise ValueError("all dimensions must be positive")
        for name in ("alpha1", "alpha2", "beta1", "beta2", "gamma"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.arch == "appnp" and self.big_k < 1:
            raise ValueError("appnp needs K >= 1")
        if self.arch == "gprgnn" and self.big_k < 0:
            raise ValueError("gprgnn needs K >= 0")
        if self.depth < 2:
            raise ValueError("depth must be >= 2")
        if self.depth != 2 and self.arch not in ("gcn", "gcnii"):
            raise ValueError("only gcn/gcnii support depth != 2")

    def gcnii_alphas(self) -> tuple[float, ...]:
        if self.depth == 2:
            return (self.alpha1, self.alpha2)
        return (self.alpha1,) * self.depth

    def gcnii_betas(self) -> tuple[float, ...]:
        if self.depth == 2:
            return (self.beta1, self.beta2)
        return tuple(self.beta1 / l for l in range(1, self.depth + 1))

    def activation_width(self) -> int:
        """Largest vector width the nonlinearity is applied to."""
        if self.arch in ("appnp", "gprgnn"):
            return max(self.h, self.num_classes)
        return self.h


@dataclass(frozen=True)
class ParamLayout:
    """Named blocks of the flat parameter vector, in a fixed order.

    Matrix blocks are stored column-by-column (the column-stacking vec
    convention); vector blocks are stored as-is.
    """

    blocks: tuple[tuple[str, tuple[int, ...]], ...]
    offsets: tuple[int, ...] = field(init=False)
    dim: int = field(init=False)

    def __post_init__(self):
        offs, total = [], 0
        for _, shape in self.blocks:
            offs.append(total)
            total += int(np.prod(shape))
        object.__setattr__(self, "offsets", tuple(offs))
        object.__setattr__(self, "dim", total)

    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.blocks)

    def slice_of(self, name: str) -> slice:
        for (bname, shape), off in zip(self.blocks, self.offsets):
            if bname == name:
                return slice(off, off + int(np.prod(shape)))
        raise KeyError(name)

    def view(self, w: np.ndarray, name: str) -> np.ndarray:
        """Matrix (or vector) view of one block; writes go through to w."""
        for (bname, shape), off in zip(self.blocks, self.offsets):
            if bname == name:
                flat = w[off:off + int(np.prod(shape))]
                if len(shape) == 1:
                    return flat
                return flat.reshape(shape, order="F")
        raise KeyError(name)

    def matrices(self, w: np.ndarray) -> dict[str, np.ndarray]:
        return {name: self.view(w, name) for name, _ in self.blocks}


def layout_for(spec: ModelSpec) -> ParamLayout:
    d, h, c = spec.d, spec.h, spec.num_classes
    if spec.arch == "gcn":
        blocks = [("W1", (d, h))]
        blocks += [(f"W{l}", (h, h)) for l in range(2, spec.depth)]
        blocks += [(f"W{spec.depth}", (h, c))]
    elif spec.arch == "sgc" or spec.arch == "appnp":
        blocks = [("W1", (d, h)), ("W2", (h, c))]
    elif spec.arch == "gprgnn":
        blocks = [("W1", (d, h)), ("W2", (h, c)), ("gamma", (spec.big_k + 1,))]
    else:  # gcnii
        blocks = [("W0", (d, h))]
        blocks += [(f"W{l}", (h, h)) for l in range(1, spec.depth + 1)]
        blocks += [(f"W{spec.depth + 1}", (h, c))]
    return ParamLayout(blocks=tuple(blocks))


def init_params(spec: ModelSpec, seed: int) -> np.ndarray:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) entries, drawn in vec order.

    The gprgnn coefficient block starts at the teleport-filter coefficients
    with restart weight 0.1 (the standard initialization), which also makes
    the constant comparison against appnp meaningful at step 0.

    Plain stacks deeper than two layers get a sqrt(6) gain (He-style
    variance preservation): under the rectifier-family unit, the fan-in
    bound contracts activations by about 1/3 per layer, leaving a six-layer
    stack numb at any reachable feature scale.  The identity-mapping
    architecture does not need the correction at depth: its residual path
    preserves scale by construction.
    """
    layout = layout_for(spec)
    rng = stream(seed, "init")
    gain = np.sqrt(6.0) if (spec.depth > 2 and spec.arch == "gcn") else 1.0
    w = np.empty(layout.dim, dtype=np.float64)
    for (name, shape), off in zip(layout.blocks, layout.offsets):
        size = int(np.prod(shape))
        if name == "gamma":
            w[off:off + size] = appnp_coefficients(0.1, spec.big_k)
        else:
            bound = gain / np.sqrt(shape[0])
            w[off:off + size] = rng.uniform(-bound, bound, size=size)
    return w


class PropOps:
    """Per-(graph, spec) propagation helpers shared by forward and gradients."""

    def __init__(self, p: PropagationMatrix, spec: ModelSpec):
        self.p = p
        self.spec = spec
        self._csr = p.to_scipy()
        self.filter: PropagationMatrix | None = None
        if spec.arch == "appnp":
            if p.n <= FILTER_MATERIALIZE_LIMIT:
                self.filter = appnp_filter(p, spec.gamma, spec.big_k)

    @property
    def n(self) -> int:
        return self.p.n

    def propagate(self, m: np.ndarray) -> np.ndarray:
        return self._csr @ m

    def appnp_mat(self, m: np.ndarray) -> np.ndarray:
        if self.filter is not None:
            return self.filter.matmat(m)
        return appnp_apply(self.p, self.spec.gamma, self.spec.big_k, m)

    def appnp_row(self, i: int) -> np.ndarray:
        """Dense row i of the teleport filter (filters are symmetric)."""
        if self.filter is not None:
            return np.asarray(self.filter.to_scipy().getrow(i).todense()).ravel()
        e = np.zeros(self.n)
        e[i] = 1.0
        return appnp_apply(self.p, self.spec.gamma, self.spec.big_k, e)

    def power_row(self, i: int, big_k: int) -> np.ndarray:
        """Stack of rows [P^k]_{i*} for k = 0..K (P symmetric)."""
        rows = np.zeros((big_k + 1, self.n))
        rows[0, i] = 1.0
        for k in range(1, big_k + 1):
            rows[k] = self._csr @ rows[k - 1]
        return rows


class ForwardCache:
    """All intermediates the backward pass reads, plus logits and probs."""

    def __init__(self, **kw):
        self.__dict__.update(kw)


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Max-subtracted stable softmax along the last axis."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_xent(logits: np.ndarray, label: int) -> tuple[float, np.ndarray]:
    """Stable cross-entropy of one logit row; probs clamped at 1e-12 for log."""
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= label < logits.shape[-1]:
        raise ValueError(f"label {label} out of range")
    probs = softmax_rows(logits)
    loss = -np.log(max(float(probs[label]), 1e-12))
    return loss, probs


def _check_finite(arr: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values in {where}")


def forward(spec: ModelSpec, ops: PropOps, x: np.ndarray,
            w: np.ndarray) -> ForwardCache:
    """Whole-graph forward pass; caches every gradient intermediate."""
    if x.shape != (ops.n, spec.d):
        raise ValueError(f"X has shape {x.shape}, expected {(ops.n, spec.d)}")
    layout = layout_for(spec)
    if w.shape != (layout.dim,):
        raise ValueError(f"w has length {w.shape}, expected {layout.dim}")
    mats = layout.matrices(w)
    act = spec.activation

    if spec.arch == "gcn":
        zs, pres, hs = [], [], []
        m = x
        for l in range(1, spec.depth):
            z = ops.propagate(m)
            pre = z @ mats[f"W{l}"]
            h = act_eval(act, pre)
            zs.append(z)
            pres.append(pre)
            hs.append(h)
            m = h
        z_last = ops.propagate(m)
        logits = z_last @ mats[f"W{spec.depth}"]
        _check_finite(logits, "gcn logits")
        cache = ForwardCache(zs=zs, pres=pres, hs=hs, z_last=z_last)
    elif spec.arch == "sgc":
        z = ops.propagate(ops.propagate(x))
        zw1 = z @ mats["W1"]
        logits = zw1 @ mats["W2"]
        _check_finite(logits, "sgc logits")
        cache = ForwardCache(z=z, zw1=zw1)
    elif spec.arch == "appnp":
        pre1 = x @ mats["W1"]
        s1 = act_eval(act, pre1)
        pre2 = s1 @ mats["W2"]
        h = act_eval(act, pre2)
        logits = ops.appnp_mat(h)
        _check_finite(logits, "appnp logits")
        cache = ForwardCache(pre1=pre1, s1=s1, pre2=pre2, h=h)
    elif spec.arch == "gprgnn":
        pre1 = x @ mats["W1"]
        s1 = act_eval(act, pre1)
        pre2 = s1 @ mats["W2"]
        h = act_eval(act, pre2)
        stack = gpr_powers(ops.p, h, spec.big_k)
        logits = np.tensordot(mats["gamma"], stack, axes=(0, 0))
        _check_finite(logits, "gprgnn logits")
        cache = ForwardCache(pre1=pre1, s1=s1, pre2=pre2, h=h, stack=stack)
    else:  # gcnii
        alphas, betas = spec.gcnii_alphas(), spec.gcnii_betas()
        pre0 = x @ mats["W0"]
        h0 = act_eval(act, pre0)
        hs, pres, aggs = [h0], [pre0], []
        h = h0
        for l in range(1, spec.depth + 1):
            a_l, b_l = alphas[l - 1], betas[l - 1]
            agg = (1.0 - a_l) * ops.propagate(h) + a_l * h0
            psi = (1.0 - b_l) * np.eye(spec.h) + b_l * mats[f"W{l}"]
            pre = agg @ psi
            h = act_eval(act, pre)
            aggs.append(agg)
            pres.append(pre)
            hs.append(h)
        logits = h @ mats[f"W{spec.depth + 1}"]
        _check_finite(logits, "gcnii logits")
        cache = ForwardCache(hs=hs, pres=pres, aggs=aggs)

    probs = softmax_rows(logits)
    cache.logits = logits
    cache.probs = probs
    return cache


def node_loss(cache: ForwardCache, i: int, label: int) -> float:
    """Cross-entropy of node i given its cached probabilities."""
    return -np.log(max(float(cache.probs[i, label]), 1e-12))


def loss_sample(spec: ModelSpec, ops: PropOps, x: np.ndarray, w: np.ndarray,
                i: int, label: int) -> float:
    return node_loss(forward(spec, ops, x, w), i, label)


def gcnii_psi(spec: ModelSpec, mats: dict[str, np.ndarray], l: int) -> np.ndarray:
    b_l = spec.gcnii_betas()[l - 1]
    return (1.0 - b_l) * np.eye(spec.h) + b_l * mats[f"W{l}"]


def save_params(spec: ModelSpec, w: np.ndarray, path) -> None:
    """Write w as raw little-endian float64 plus a JSON layout sidecar."""
    import json
    from pathlib import Path

    layout = layout_for(spec)
    if w.shape != (layout.dim,):
        raise ValueError("parameter vector does not match the layout")
    path = Path(path)
    w.astype("<f8").tofile(path)
    sidecar = {
        "dtype": "<f8",
        "order": "columns",
        "dim": layout.dim,
        "blocks": [{"name": name, "shape": list(shape), "offset": off}
                   for (name, shape), off in zip(layout.blocks,
                                                 layout.offsets)],
    }
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(sidecar, sort_keys=True) + "\n")


def load_params(spec: ModelSpec, path) -> np.ndarray:
    """Read a parameter vector written by save_params, validating the layout."""
    import json
    from pathlib import Path

    layout = layout_for(spec)
    path = Path(path)
    sidecar = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    if sidecar["dim"] != layout.dim:
        raise ValueError(f"layout mismatch: file has dim {sidecar['dim']}, "
                         f"spec needs {layout.dim}")
    w = np.fromfile(path, dtype="<f8")
    if w.shape != (layout.dim,):
        raise ValueError("raw parameter file has the wrong length")
    return w.astype(np.float64)


def spec_with_q(spec: ModelSpec, q: float) -> ModelSpec:
    return replace(spec, activation=ActivationSpec(q=q))
