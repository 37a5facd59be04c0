"""Single-draw stochastic training on a transductive split, with tracing.

The update loop draws indices uniformly with replacement from the training
set, steps along the mean of the drawn samples' gradients (batch size 1 is
the plain single-draw recursion), and records a checkpoint row every
``eval_every`` steps and at the final step.  Only training labels are ever
read by the update path; test labels enter exclusively through checkpoint
evaluation.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .datasets import Split
from .gradients import grad_mean, grad_sample
from .models import ForwardCache, ModelSpec, PropOps, forward, layout_for
from .rng import stream

CSV_HEADER = "t,R_m,R_u,acc_m,acc_u,grad_gap,dist,g_emp"


@dataclass(frozen=True)
class LrSchedule:
    """Step sizes: c / (t + t0) for inverse_time, or constant c."""

    kind: str = "inverse_time"
    c: float = 1.0
    t0: float = 0.0

    def __post_init__(self):
        if self.kind not in ("inverse_time", "constant"):
            raise ValueError("schedule kind must be inverse_time or constant")
        if self.t0 < 0.0:
            raise ValueError("t0 must be >= 0")
        if self.kind == "inverse_time" and self.c <= 0.0:
            raise ValueError("inverse-time schedule needs c > 0")
        if self.c < 0.0:
            raise ValueError("c must be >= 0")

    def eta(self, t: int) -> float:
        if self.kind == "constant":
            return self.c
        return self.c / (t + self.t0)

    def eta_sum(self, big_t: int) -> float:
        """Sum of eta_t over t = 1..T (harmonic partial sum for inverse time)."""
        return float(sum(self.eta(t) for t in range(1, big_t + 1)))


@dataclass(frozen=True)
class SgdConfig:
    big_t: int
    seed: int
    batch_size: int = 1
    schedule: LrSchedule = field(default_factory=LrSchedule)
    optimizer: str = "vanilla_sgd"
    eval_every: int = 10
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.big_t < 1:
            raise ValueError("T must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.optimizer not in ("vanilla_sgd", "adam"):
            raise ValueError("optimizer must be vanilla_sgd or adam")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if self.weight_decay < 0.0:
            raise ValueError("weight_decay must be >= 0")


@dataclass(frozen=True)
class Checkpoint:
    """One evaluation row; g_emp is the running max over every step so far
    of sqrt(eta_t) * ||per-sample gradient||, i.e. the empirical step-size
    weighted gradient bound (measured, never assumed)."""

    t: int
    r_m: float
    r_u: float
    acc_m: float
    acc_u: float
    grad_gap: float
    dist: float
    g_emp: float


@dataclass
class TrainTrace:
    """Checkpoint rows plus whole-run extrema used by the certificates."""

    checkpoints: list[Checkpoint] = field(default_factory=list)
    max_dist: float = 0.0
    g_emp: float = 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        for cp in self.checkpoints:
            vals = [cp.r_m, cp.r_u, cp.acc_m, cp.acc_u, cp.grad_gap, cp.dist,
                    cp.g_emp]
            buf.write(str(cp.t) + "," +
                      ",".join(format(v, ".17g") for v in vals) + "\n")
        return buf.getvalue()

    @staticmethod
    def from_csv(text: str) -> "TrainTrace":
        lines = [ln for ln in text.strip().splitlines() if ln]
        if lines[0] != CSV_HEADER:
            raise ValueError("unexpected trace header")
        trace = TrainTrace()
        for ln in lines[1:]:
            parts = ln.split(",")
            cp = Checkpoint(int(parts[0]), *(float(p) for p in parts[1:]))
            trace.checkpoints.append(cp)
        if trace.checkpoints:
            trace.max_dist = max(cp.dist for cp in trace.checkpoints)
            trace.g_emp = trace.checkpoints[-1].g_emp
        return trace


def node_losses(cache: ForwardCache, idx: np.ndarray,
                labels: np.ndarray) -> np.ndarray:
    p = cache.probs[idx, labels[idx]]
    return -np.log(np.maximum(p, 1e-12))


def evaluate(spec: ModelSpec, ops: PropOps, x: np.ndarray, labels: np.ndarray,
             split: Split, w: np.ndarray,
             cache: ForwardCache | None = None) -> tuple[float, float, float, float]:
    """Mean loss and accuracy over the train and test index sets.

    Accuracy uses argmax with lowest-index tie-break.
    """
    if cache is None:
        cache = forward(spec, ops, x, w)
    pred = np.argmax(cache.probs, axis=1)
    r_m = float(np.mean(node_losses(cache, split.train_idx, labels)))
    r_u = float(np.mean(node_losses(cache, split.test_idx, labels)))
    acc_m = float(np.mean(pred[split.train_idx] == labels[split.train_idx]))
    acc_u = float(np.mean(pred[split.test_idx] == labels[split.test_idx]))
    return r_m, r_u, acc_m, acc_u


def gradient_gap(spec: ModelSpec, ops: PropOps, x: np.ndarray,
                 labels: np.ndarray, split: Split, w: np.ndarray,
                 cache: ForwardCache | None = None) -> float:
    """2-norm of (mean train gradient - mean test gradient)."""
    if cache is None:
        cache = forward(spec, ops, x, w)
    g_train = grad_mean(spec, ops, x, w, split.train_idx, labels, cache=cache)
    g_test = grad_mean(spec, ops, x, w, split.test_idx, labels, cache=cache)
    return float(np.linalg.norm(g_train - g_test))


def schedule_offset(p_const: float, alpha: float,
                    mu: float | None = None) -> float:
    """Smallest admissible schedule offset t0 given the smoothness constant.

    Returns max((2P)^(1/alpha), 1), scaled by 2/mu when a curvature constant
    is supplied.
    """
    if p_const <= 0.0:
        raise ValueError("P must be positive")
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must be in (0, 1]")
    base = (2.0 * p_const) ** (1.0 / alpha)
    if mu is not None:
        if mu <= 0.0:
            raise ValueError("mu must be positive")
        base *= 2.0 / mu
    return max(base, 1.0)


class _AdamState:
    """Adam with the default moment constants (0.9, 0.999, 1e-8)."""

    def __init__(self, dim: int):
        self.m = np.zeros(dim)
        self.v = np.zeros(dim)
        self.t = 0

    def step(self, w: np.ndarray, g: np.ndarray, eta: float) -> np.ndarray:
        self.t += 1
        self.m = 0.9 * self.m + 0.1 * g
        self.v = 0.999 * self.v + 0.001 * g * g
        mhat = self.m / (1.0 - 0.9 ** self.t)
        vhat = self.v / (1.0 - 0.999 ** self.t)
        return w - eta * mhat / (np.sqrt(vhat) + 1e-8)


def run_sgd(spec: ModelSpec, ops: PropOps, x: np.ndarray, labels: np.ndarray,
            split: Split, config: SgdConfig,
            w0: np.ndarray | None = None) -> tuple[np.ndarray, TrainTrace]:
    """Train from w0 (or a fresh seeded init) and trace the trajectory.

    Deterministic given (inputs, config.seed).  Aborts with a diagnostic if a
    checkpoint loss turns non-finite.
    """
    from .models import init_params

    if split.n != ops.n:
        raise ValueError("split does not match graph size")
    w = init_params(spec, config.seed) if w0 is None else w0.astype(np.float64).copy()
    w_start = w.copy()
    layout = layout_for(spec)
    if w.shape != (layout.dim,):
        raise ValueError("w0 has wrong length")

    draw = stream(config.seed, "sgd_draws")
    adam = _AdamState(layout.dim) if config.optimizer == "adam" else None
    trace = TrainTrace()
    train = split.train_idx
    g_emp = 0.0
    max_dist = 0.0

    for t in range(1, config.big_t + 1):
        eta = config.schedule.eta(t)
        cache = forward(spec, ops, x, w)
        picks = train[draw.integers(0, split.m, size=config.batch_size)]
        gsum = np.zeros(layout.dim)
        sqrt_eta = np.sqrt(eta)
        for j in picks:
            g_j = grad_sample(spec, ops, x, w, int(j), int(labels[j]),
                              cache=cache)
            gsum += g_j
            g_emp = max(g_emp, sqrt_eta * float(np.linalg.norm(g_j)))
        g = gsum / config.batch_size
        if config.weight_decay > 0.0:
            g = g + config.weight_decay * w
        if adam is None:
            w = w - eta * g
        else:
            w = adam.step(w, g, eta)
        dist = float(np.linalg.norm(w - w_start))
        max_dist = max(max_dist, dist)

        if t % config.eval_every == 0 or t == config.big_t:
            cache_t = forward(spec, ops, x, w)
            r_m, r_u, acc_m, acc_u = evaluate(spec, ops, x, labels, split, w,
                                              cache=cache_t)
            if not (np.isfinite(r_m) and np.isfinite(r_u)):
                raise FloatingPointError(
                    f"non-finite loss at step {t}: R_m={r_m}, R_u={r_u}")
            gap = gradient_gap(spec, ops, x, labels, split, w, cache=cache_t)
            trace.checkpoints.append(Checkpoint(
                t=t, r_m=r_m, r_u=r_u, acc_m=acc_m, acc_u=acc_u,
                grad_gap=gap, dist=dist, g_emp=g_emp))

    trace.max_dist = max_dist
    trace.g_emp = g_emp
    return w, trace
