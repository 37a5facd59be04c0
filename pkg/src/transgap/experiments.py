"""Multi-seed experiment runner and gap reports.

Each (model, seed) run draws a fresh split and a fresh initialization,
trains, and records the final loss/accuracy gaps.  Runs are independent, so
they may execute in a process pool (capped by TRANSGAP_THREADS); report
assembly is a fixed-order reduction, making the emitted bytes independent
of scheduling.  Reported spreads are population standard deviations.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .activations import ActivationSpec
from .datasets import DatasetBundle, make_split
from .graphs import normalized_adjacency
from .models import ModelSpec, PropOps
from .training import LrSchedule, SgdConfig, TrainTrace, run_sgd

MODEL_CHOICES = ("gcn", "gcnii", "sgc", "appnp", "gprgnn", "gcn6", "gcnii6")

REPORT_SCHEMA = "transgap/1"


def model_spec_for(name: str, d: int, num_classes: int, hidden: int = 64,
                   q: float = 2.0, alpha: float = 0.1, beta: float = 0.5,
                   gamma: float = 0.1, big_k: int = 10) -> ModelSpec:
    """Build a ModelSpec from a CLI-level model name.

    gcn6 / gcnii6 are the six-propagation-layer depth variants; gcnii uses
    identity-map weights beta / layer_index.
    """
    if name not in MODEL_CHOICES:
        raise ValueError(f"unknown model {name!r}; choose from {MODEL_CHOICES}")
    act = ActivationSpec(q=q)
    base = dict(d=d, h=hidden, num_classes=num_classes, activation=act)
    if name in ("gcn", "gcn6"):
        return ModelSpec(arch="gcn", depth=6 if name == "gcn6" else 2, **base)
    if name in ("gcnii", "gcnii6"):
        return ModelSpec(arch="gcnii", depth=6 if name == "gcnii6" else 2,
                         alpha1=alpha, alpha2=alpha,
                         beta1=beta, beta2=beta / 2.0, **base)
    if name == "appnp":
        return ModelSpec(arch="appnp", gamma=gamma, big_k=big_k, **base)
    if name == "gprgnn":
        return ModelSpec(arch="gprgnn", big_k=big_k, **base)
    return ModelSpec(arch="sgc", **base)


@dataclass(frozen=True)
class ExperimentConfig:
    models: tuple[str, ...]
    seeds: tuple[int, ...]
    train_frac: float = 0.30
    big_t: int = 300
    hidden: int = 64
    batch_size: int | None = None  # None: min(512, m)
    optimizer: str = "adam"
    schedule: LrSchedule | None = None
    eval_every: int = 10
    q: float = 2.0
    alpha: float = 0.1
    beta: float = 0.5
    gamma: float = 0.1
    big_k: int = 10

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("seed list must be nonempty")
        if not 0.0 < self.train_frac < 1.0:
            raise ValueError("train_frac must be in (0, 1)")

    def resolved_schedule(self) -> LrSchedule:
        if self.schedule is not None:
            return self.schedule
        if self.optimizer == "adam":
            return LrSchedule(kind="constant", c=0.01)
        return LrSchedule(kind="inverse_time", c=3.0, t0=100.0)


@dataclass(frozen=True)
class RunResult:
    model: str
    seed: int
    loss_gap: float
    acc_gap: float
    test_acc: float
    grad_gap: float
    trace: TrainTrace


def run_single(bundle: DatasetBundle, config: ExperimentConfig, model: str,
               seed: int) -> RunResult:
    """One (model, seed) run: fresh split, fresh init, training, evaluation."""
    spec = model_spec_for(model, d=bundle.d, num_classes=bundle.num_classes,
                          hidden=config.hidden, q=config.q,
                          alpha=config.alpha, beta=config.beta,
                          gamma=config.gamma, big_k=config.big_k)
    p = normalized_adjacency(bundle.graph)
    ops = PropOps(p, spec)
    split = make_split(bundle.n, config.train_frac, seed)
    batch = config.batch_size
    if batch is None:
        batch = min(512, split.m)
    sgd = SgdConfig(big_t=config.big_t, seed=seed, batch_size=batch,
                    schedule=config.resolved_schedule(),
                    optimizer="adam" if config.optimizer == "adam" else "vanilla_sgd",
                    eval_every=config.eval_every)
    try:
        _, trace = run_sgd(spec, ops, bundle.x, bundle.labels, split, sgd)
    except Exception as exc:
        raise RuntimeError(f"run (model={model}, seed={seed}) failed: {exc}") from exc
    last = trace.checkpoints[-1]
    return RunResult(model=model, seed=seed,
                     loss_gap=abs(last.r_m - last.r_u),
                     acc_gap=abs(last.acc_m - last.acc_u),
                     test_acc=last.acc_u, grad_gap=last.grad_gap, trace=trace)


def _pool_size() -> int:
    env = os.environ.get("TRANSGAP_THREADS", "")
    if env.strip():
        return max(1, int(env))
    return os.cpu_count() or 1


def _worker(args):
    bundle, config, model, seed = args
    return run_single(bundle, config, model, seed)


@dataclass
class GapReport:
    """Aggregate mean/std rows plus the per-run results, in a fixed order."""

    config: ExperimentConfig
    runs: list[RunResult] = field(default_factory=list)

    def aggregate(self) -> dict:
        by_model: dict[str, dict] = {}
        for model in self.config.models:
            rows = [r for r in self.runs if r.model == model]
            stats = {}
            for key in ("loss_gap", "acc_gap", "test_acc", "grad_gap"):
                vals = np.array([getattr(r, key) for r in rows])
                stats[key] = {"mean": float(vals.mean()),
                              "std": float(vals.std())}
            by_model[model] = stats
        return {
            "schema": REPORT_SCHEMA,
            "std": "population",
            "models": list(self.config.models),
            "seeds": list(self.config.seeds),
            "T": self.config.big_t,
            "train_frac": self.config.train_frac,
            "optimizer": self.config.optimizer,
            "results": by_model,
            "runs": [
                {"model": r.model, "seed": r.seed, "loss_gap": r.loss_gap,
                 "acc_gap": r.acc_gap, "test_acc": r.test_acc,
                 "grad_gap": r.grad_gap}
                for r in self.runs
            ],
        }


def run_experiment(bundle: DatasetBundle, config: ExperimentConfig,
                   out_dir=None) -> GapReport:
    """All (model, seed) runs, optional trace/curve emission to out_dir."""
    jobs = [(model, seed) for model in config.models for seed in config.seeds]
    workers = _pool_size()
    results: dict[tuple[str, int], RunResult] = {}
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for res in pool.map(_worker,
                                [(bundle, config, m, s) for m, s in jobs]):
                results[(res.model, res.seed)] = res
    else:
        for model, seed in jobs:
            results[(model, seed)] = run_single(bundle, config, model, seed)
    report = GapReport(config=config)
    for model, seed in jobs:
        report.runs.append(results[(model, seed)])

    if out_dir is not None:
        from pathlib import Path

        root = Path(out_dir)
        root.mkdir(parents=True, exist_ok=True)
        for run in report.runs:
            name = root / f"curve_{run.model}_{run.seed}.csv"
            name.write_text(run.trace.to_csv())
        for model in config.models:
            traces = [r.trace for r in report.runs if r.model == model]
            rows = curve_report(traces)
            text = "t,mean_gap,std\n" + "".join(
                f"{t},{format(m, '.17g')},{format(s, '.17g')}\n"
                for t, m, s in rows)
            (root / f"gap_curve_{model}.csv").write_text(text)
        (root / "report.json").write_text(canonical_json(report.aggregate()))
    return report


def curve_report(traces: list[TrainTrace]) -> list[tuple[int, float, float]]:
    """(t, mean |R_m - R_u|, population std) rows across seed traces."""
    if not traces:
        raise ValueError("need at least one trace")
    grid = [cp.t for cp in traces[0].checkpoints]
    for tr in traces:
        if [cp.t for cp in tr.checkpoints] != grid:
            raise ValueError("traces have different checkpoint grids")
    rows = []
    for k, t in enumerate(grid):
        gaps = np.array([abs(tr.checkpoints[k].r_m - tr.checkpoints[k].r_u)
                         for tr in traces])
        rows.append((t, float(gaps.mean()), float(gaps.std())))
    return rows


def canonical_json(obj) -> str:
    """Deterministic JSON: sorted keys, floats at 17 significant digits."""
    out: list[str] = []
    _write_json(obj, out)
    return "".join(out) + "\n"


def _write_json(obj, out: list[str]) -> None:
    import json

    if isinstance(obj, dict):
        out.append("{")
        for k, key in enumerate(sorted(obj)):
            if k:
                out.append(",")
            out.append(json.dumps(str(key)))
            out.append(":")
            _write_json(obj[key], out)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for k, item in enumerate(obj):
            if k:
                out.append(",")
            _write_json(item, out)
        out.append("]")
    elif isinstance(obj, bool) or obj is None:
        out.append(json.dumps(obj))
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        v = float(obj)
        if np.isnan(v):
            out.append('"nan"')
        elif np.isinf(v):
            out.append('"inf"' if v > 0 else '"-inf"')
        else:
            out.append(format(v, ".17g"))
    else:
        out.append(json.dumps(obj))
