"""Command-line front end.

Subcommands: gen (synthetic bundle), analyze (constants + certificate),
train (single traced run), experiment (multi-seed gap report), gradcheck
(analytic vs finite-difference gradients).  Exit codes: 0 success, 1 usage,
2 data, 3 numeric failure.  Identical flags and inputs produce byte-identical
outputs; machine-readable floats carry 17 significant digits, human summary
lines 4.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .bounds import (BoundInputs, gap_certificate, gradient_norm_diagnostics,
                     initial_bounds)
from .constants import constants_report
from .datasets import BundleFormatError, load_bundle, make_split, sbm_bundle, save_bundle
from .experiments import (MODEL_CHOICES, ExperimentConfig, canonical_json,
                          model_spec_for, run_experiment)
from .gradients import fd_gradient, grad_sample, max_relative_error
from .graphs import normalized_adjacency
from .models import PropOps, forward, init_params
from .rng import stream
from .training import LrSchedule, SgdConfig, run_sgd, schedule_offset

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--hidden", type=int, default=64,
                   help="hidden width (default: 64)")
    p.add_argument("--q", type=float, default=2.0,
                   help="activation exponent in (1, 2] (default: 2.0)")
    p.add_argument("--alpha", type=float, default=0.1,
                   help="gcnii residual weight (default: 0.1)")
    p.add_argument("--beta", type=float, default=0.5,
                   help="gcnii identity-map weight (default: 0.5)")
    p.add_argument("--gamma", type=float, default=0.1,
                   help="appnp restart probability (default: 0.1)")
    p.add_argument("--K", type=int, default=10, dest="big_k",
                   help="filter order for appnp/gprgnn (default: 10)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="transgap",
        description="Generalization-gap certificates and experiments for "
                    "sparse graph networks.")
    parser.add_argument("--config", type=str, default=None,
                        help="JSON file of flag values; explicit flags win "
                             "(default: None)")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    g = sub.add_parser("gen", help="generate a planted-partition bundle")
    g.add_argument("--blocks", type=str, default="50,50",
                   help="comma-separated block sizes (default: 50,50)")
    g.add_argument("--pin", type=float, default=0.1,
                   help="in-block edge probability (default: 0.1)")
    g.add_argument("--pout", type=float, default=0.01,
                   help="cross-block edge probability (default: 0.01)")
    g.add_argument("--seed", type=int, default=0, help="seed (default: 0)")
    g.add_argument("--d", type=int, default=8,
                   help="feature dimension (default: 8)")
    g.add_argument("--signal", type=float, default=1.0,
                   help="block-mean feature scale (default: 1.0)")
    g.add_argument("--noise", type=float, default=1.0,
                   help="feature noise scale (default: 1.0)")
    g.add_argument("--name", type=str, default="sbm",
                   help="bundle name (default: sbm)")
    g.add_argument("--row-normalize", action="store_true",
                   help="normalize feature rows to unit norm (default: False)")
    g.add_argument("--out", type=str, required=True, help="output directory")

    a = sub.add_parser("analyze", help="constants report and gap certificate")
    a.add_argument("--data", type=str, required=True, help="bundle directory")
    a.add_argument("--model", type=str, default="gcn", choices=MODEL_CHOICES,
                   help="architecture (default: gcn)")
    a.add_argument("--compare", action="store_true",
                   help="emit all five base models sorted by L_F "
                        "(default: False)")
    a.add_argument("--cw", type=float, default=None,
                   help="pin c_W instead of measuring (default: None)")
    a.add_argument("--seed", type=int, default=0,
                   help="seed for split/init (default: 0)")
    a.add_argument("--train-frac", type=float, default=0.30,
                   help="training fraction (default: 0.3)")
    a.add_argument("--T", type=int, default=300, dest="big_t",
                   help="iterations for the measured radius (default: 300)")
    a.add_argument("--delta", type=float, default=0.1,
                   help="confidence parameter in (0,1) (default: 0.1)")
    a.add_argument("--alpha-rate", type=float, default=None,
                   help="rate exponent override; default q-1 (default: None)")
    a.add_argument("--radius", type=float, default=None,
                   help="radius override; default measured from a run "
                        "(default: None)")
    a.add_argument("--mu", type=float, default=None,
                   help="curvature constant for the offset rule "
                        "(default: None)")
    a.add_argument("--optimizer", type=str, default="sgd",
                   choices=("sgd", "adam"),
                   help="optimizer for the measured radius (default: sgd)")
    a.add_argument("--lr-c", type=float, default=1.0,
                   help="schedule numerator (default: 1.0)")
    a.add_argument("--t0", type=float, default=10.0,
                   help="schedule offset (default: 10.0)")
    a.add_argument("--row-normalize", action="store_true",
                   help="normalize feature rows (default: False)")
    a.add_argument("--out", type=str, default=None,
                   help="write report JSON here instead of stdout "
                        "(default: None)")
    _add_model_flags(a)

    t = sub.add_parser("train", help="one traced training run")
    t.add_argument("--data", type=str, required=True, help="bundle directory")
    t.add_argument("--model", type=str, default="gcn", choices=MODEL_CHOICES,
                   help="architecture (default: gcn)")
    t.add_argument("--T", type=int, default=300, dest="big_t",
                   help="iterations (default: 300)")
    t.add_argument("--seed", type=int, default=0, help="seed (default: 0)")
    t.add_argument("--train-frac", type=float, default=0.30,
                   help="training fraction (default: 0.3)")
    t.add_argument("--batch-size", type=int, default=1,
                   help="samples per step (default: 1)")
    t.add_argument("--optimizer", type=str, default="sgd",
                   choices=("sgd", "adam"),
                   help="optimizer (default: sgd)")
    t.add_argument("--schedule", type=str, default="inverse_time",
                   choices=("inverse_time", "constant"),
                   help="step-size schedule (default: inverse_time)")
    t.add_argument("--lr-c", type=float, default=1.0,
                   help="schedule numerator (default: 1.0)")
    t.add_argument("--t0", type=float, default=10.0,
                   help="schedule offset (default: 10.0)")
    t.add_argument("--t0-auto", action="store_true",
                   help="derive t0 from the measured smoothness constant "
                        "(default: False)")
    t.add_argument("--eval-every", type=int, default=10,
                   help="checkpoint stride (default: 10)")
    t.add_argument("--weight-decay", type=float, default=0.0,
                   help="L2 coefficient (default: 0.0)")
    t.add_argument("--row-normalize", action="store_true",
                   help="normalize feature rows (default: False)")
    t.add_argument("--out", type=str, required=True, help="trace CSV path")
    _add_model_flags(t)

    e = sub.add_parser("experiment", help="multi-seed gap report")
    e.add_argument("--data", type=str, required=True, help="bundle directory")
    e.add_argument("--models", type=str, default="gcn,sgc",
                   help="comma-separated model list (default: gcn,sgc)")
    e.add_argument("--seeds", type=str, default="10",
                   help="seed count N (seeds 0..N-1) or explicit list "
                        "(default: 10)")
    e.add_argument("--T", type=int, default=300, dest="big_t",
                   help="iterations (default: 300)")
    e.add_argument("--train-frac", type=float, default=0.30,
                   help="training fraction (default: 0.3)")
    e.add_argument("--batch-size", type=int, default=None,
                   help="samples per step; default min(512, m) "
                        "(default: None)")
    e.add_argument("--optimizer", type=str, default="adam",
                   choices=("sgd", "adam"),
                   help="optimizer (default: adam)")
    e.add_argument("--schedule", type=str, default=None,
                   choices=("inverse_time", "constant"),
                   help="override schedule kind (default: None)")
    e.add_argument("--lr-c", type=float, default=None,
                   help="override schedule numerator (default: None)")
    e.add_argument("--t0", type=float, default=10.0,
                   help="schedule offset (default: 10.0)")
    e.add_argument("--eval-every", type=int, default=10,
                   help="checkpoint stride (default: 10)")
    e.add_argument("--row-normalize", action="store_true",
                   help="normalize feature rows (default: False)")
    e.add_argument("--out", type=str, required=True, help="output directory")
    _add_model_flags(e)

    c = sub.add_parser("gradcheck",
                       help="analytic gradients vs central differences")
    c.add_argument("--model", type=str, default="all",
                   help="model name or 'all' (default: all)")
    c.add_argument("--n", type=int, default=12,
                   help="synthetic graph size (default: 12)")
    c.add_argument("--d", type=int, default=4,
                   help="feature dimension (default: 4)")
    c.add_argument("--classes", type=int, default=2,
                   help="class count (default: 2)")
    c.add_argument("--instances", type=int, default=10,
                   help="random (w, node) instances per model (default: 10)")
    c.add_argument("--seed", type=int, default=1, help="seed (default: 1)")
    c.add_argument("--step", type=float, default=1e-6,
                   help="finite-difference step (default: 1e-06)")
    c.add_argument("--tol", type=float, default=1e-5,
                   help="max relative error allowed (default: 1e-05)")
    c.add_argument("--hidden", type=int, default=3,
                   help="hidden width (default: 3)")
    c.add_argument("--q", type=float, default=2.0,
                   help="activation exponent (default: 2.0)")
    c.add_argument("--alpha", type=float, default=0.1,
                   help="gcnii residual weight (default: 0.1)")
    c.add_argument("--beta", type=float, default=0.5,
                   help="gcnii identity-map weight (default: 0.5)")
    c.add_argument("--gamma", type=float, default=0.1,
                   help="appnp restart probability (default: 0.1)")
    c.add_argument("--K", type=int, default=3, dest="big_k",
                   help="filter order (default: 3)")
    return parser


def _flag_dest_map(parser: argparse.ArgumentParser) -> dict[str, str]:
    """Map flag spellings (without dashes) to namespace destinations."""
    table: dict[str, str] = {}
    stack = [parser]
    while stack:
        p = stack.pop()
        for action in p._actions:
            if isinstance(action, argparse._SubParsersAction):
                stack.extend(action.choices.values())
                continue
            for opt in action.option_strings:
                table[opt.lstrip("-").replace("-", "_")] = action.dest
            table.setdefault(action.dest, action.dest)
    return table


def _merge_config(parser: argparse.ArgumentParser, argv: list[str],
                  args: argparse.Namespace) -> argparse.Namespace:
    """Apply --config JSON values under explicitly provided flags."""
    if not args.config:
        return args
    try:
        cfg = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"bad --config file: {exc}") from None
    table = _flag_dest_map(parser)
    explicit = set()
    for token in argv:
        if token.startswith("--"):
            name = token.split("=")[0].lstrip("-").replace("-", "_")
            explicit.add(table.get(name, name))
    for key, value in cfg.items():
        dest = table.get(key.replace("-", "_"), key.replace("-", "_"))
        if dest in explicit or not hasattr(args, dest):
            continue
        setattr(args, dest, value)
    return args


def _load(args):
    return load_bundle(args.data,
                       normalize_features=getattr(args, "row_normalize", False))


def cmd_gen(args) -> int:
    sizes = [int(s) for s in str(args.blocks).split(",") if s != ""]
    bundle = sbm_bundle(sizes, args.pin, args.pout, args.seed, d=args.d,
                        name=args.name, signal=args.signal, noise=args.noise)
    if args.row_normalize:
        from .datasets import row_normalize
        bundle = type(bundle)(name=bundle.name, graph=bundle.graph,
                              x=row_normalize(bundle.x), labels=bundle.labels,
                              num_classes=bundle.num_classes)
    save_bundle(bundle, args.out)
    stats = bundle.graph.degree_stats()
    a_inf = normalized_adjacency(bundle.graph).inf_norm
    print(f"bundle {bundle.name}: n={bundle.n} edges={stats.edge_count} "
          f"deg=[{stats.deg_min},{stats.deg_max}] "
          f"adjacency_norm={a_inf:.4g}")
    return 0


def _analyze_one(bundle, args, model: str) -> dict:
    spec = model_spec_for(model, d=bundle.d, num_classes=bundle.num_classes,
                          hidden=args.hidden, q=args.q, alpha=args.alpha,
                          beta=args.beta, gamma=args.gamma, big_k=args.big_k)
    p = normalized_adjacency(bundle.graph)
    ops = PropOps(p, spec)
    split = make_split(bundle.n, args.train_frac, args.seed)
    w1 = init_params(spec, args.seed)
    warnings: list[str] = []
    report = constants_report(spec, p, bundle.x, w1,
                              stats=bundle.graph.degree_stats(),
                              c_w_override=args.cw)
    warnings.extend(report.warnings)

    if args.radius is not None:
        radius = float(args.radius)
    else:
        kind = "constant" if args.optimizer == "adam" else "inverse_time"
        sched = LrSchedule(kind=kind, c=args.lr_c, t0=args.t0)
        sgd = SgdConfig(big_t=args.big_t, seed=args.seed, batch_size=1,
                        schedule=sched,
                        optimizer="adam" if args.optimizer == "adam" else "vanilla_sgd",
                        eval_every=max(1, args.big_t // 10))
        if args.optimizer == "adam":
            warnings.append("certificates assume the single-draw schedule; "
                            "adam radius is heuristic")
        _, trace = run_sgd(spec, ops, bundle.x, bundle.labels, split, sgd,
                           w0=w1)
        radius = trace.max_dist

    b_loss, b_grad = initial_bounds(spec, ops, bundle.x, bundle.labels, w1)
    diag = gradient_norm_diagnostics(spec, ops, bundle.x, bundle.labels, w1)
    alpha_rate = args.alpha_rate if args.alpha_rate is not None else spec.activation.alpha_tilde
    inputs = BoundInputs(m=split.m, u=split.u, dim=init_params(spec, 0).size,
                         big_t=args.big_t, delta=args.delta, alpha=alpha_rate,
                         l_f=report.l_f, radius=radius, b_loss=b_loss,
                         b_grad=b_grad)
    bound = gap_certificate(inputs)
    t0_floor = schedule_offset(report.p_f, alpha_rate, mu=args.mu)
    if t0_floor > 1e6:
        warnings.append(f"theory offset t0={t0_floor:.4g} implies vacuously "
                        "small steps")
    out = {"model": model, "constants": report.to_dict(),
           "bound": bound.to_dict(),
           "bound_inputs": {"m": inputs.m, "u": inputs.u, "dim": inputs.dim,
                            "T": inputs.big_t, "delta": inputs.delta,
                            "alpha": inputs.alpha, "radius": radius,
                            "b_loss": b_loss, "b_grad": b_grad},
           "gradient_diagnostics": diag,
           "t0_floor": t0_floor,
           "aggregation": "lemma-aggregation (sum reading)",
           "warnings": warnings}
    return out


def cmd_analyze(args) -> int:
    if not 0.0 < args.delta < 1.0:
        raise UsageError("--delta must lie strictly inside (0, 1)")
    if args.alpha_rate is not None and not 0.0 < args.alpha_rate <= 1.0:
        raise UsageError("--alpha-rate must lie in (0, 1]")
    bundle = _load(args)
    if args.compare:
        base_models = ("gcn", "gcnii", "sgc", "appnp", "gprgnn")
        reports = [_analyze_one(bundle, args, m) for m in base_models]
        reports.sort(key=lambda r: r["constants"]["L_F"])
        payload = {"schema": "transgap/1", "compare": reports}
    else:
        payload = {"schema": "transgap/1",
                   "compare": [_analyze_one(bundle, args, args.model)]}
    text = canonical_json(payload)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    for entry in payload["compare"]:
        print(f"# {entry['model']}: L_F={entry['constants']['L_F']:.4g} "
              f"P_F={entry['constants']['P_F']:.4g} "
              f"certificate={entry['bound']['total']:.4g}",
              file=sys.stderr)
    return 0


def cmd_train(args) -> int:
    if args.big_t < 1:
        raise UsageError("--T must be >= 1")
    bundle = _load(args)
    spec = model_spec_for(args.model, d=bundle.d,
                          num_classes=bundle.num_classes, hidden=args.hidden,
                          q=args.q, alpha=args.alpha, beta=args.beta,
                          gamma=args.gamma, big_k=args.big_k)
    p = normalized_adjacency(bundle.graph)
    ops = PropOps(p, spec)
    split = make_split(bundle.n, args.train_frac, args.seed)
    t0 = args.t0
    if args.t0_auto:
        w1 = init_params(spec, args.seed)
        rep = constants_report(spec, p, bundle.x, w1,
                               stats=bundle.graph.degree_stats())
        t0 = schedule_offset(rep.p_f, spec.activation.alpha_tilde)
        if t0 > 1e6:
            print(f"warning: theory offset t0={t0:.4g} implies vacuously "
                  "small steps", file=sys.stderr)
    if args.optimizer == "adam":
        print("warning: certificates are stated for the single-draw "
              "schedule; adam is for table reproduction", file=sys.stderr)
    sched = LrSchedule(kind=args.schedule, c=args.lr_c, t0=t0)
    sgd = SgdConfig(big_t=args.big_t, seed=args.seed,
                    batch_size=args.batch_size, schedule=sched,
                    optimizer="adam" if args.optimizer == "adam" else "vanilla_sgd",
                    eval_every=args.eval_every,
                    weight_decay=args.weight_decay)
    _, trace = run_sgd(spec, ops, bundle.x, bundle.labels, split, sgd)
    Path(args.out).write_text(trace.to_csv())
    last = trace.checkpoints[-1]
    print(f"{args.model} T={args.big_t} seed={args.seed}: "
          f"R_m={last.r_m:.4g} R_u={last.r_u:.4g} "
          f"gap={abs(last.r_m - last.r_u):.4g} acc_u={last.acc_u:.4g}")
    return 0


def _parse_seeds(text: str) -> tuple[int, ...]:
    parts = [p for p in str(text).split(",") if p != ""]
    if len(parts) == 1 and "," not in str(text):
        return tuple(range(int(parts[0])))
    return tuple(int(p) for p in parts)


def cmd_experiment(args) -> int:
    bundle = _load(args)
    models = tuple(m for m in args.models.split(",") if m)
    for m in models:
        if m not in MODEL_CHOICES:
            raise UsageError(f"unknown model {m!r}")
    sched = None
    if args.schedule is not None or args.lr_c is not None:
        kind = args.schedule or ("constant" if args.optimizer == "adam"
                                 else "inverse_time")
        c = args.lr_c if args.lr_c is not None else (
            0.01 if args.optimizer == "adam" else 3.0)
        sched = LrSchedule(kind=kind, c=c, t0=args.t0)
    config = ExperimentConfig(models=models, seeds=_parse_seeds(args.seeds),
                              train_frac=args.train_frac, big_t=args.big_t,
                              hidden=args.hidden, batch_size=args.batch_size,
                              optimizer=args.optimizer, schedule=sched,
                              eval_every=args.eval_every, q=args.q,
                              alpha=args.alpha, beta=args.beta,
                              gamma=args.gamma, big_k=args.big_k)
    report = run_experiment(bundle, config, out_dir=args.out)
    agg = report.aggregate()
    for model in models:
        row = agg["results"][model]
        print(f"{model}: loss_gap={row['loss_gap']['mean']:.4g}"
              f"+-{row['loss_gap']['std']:.4g} "
              f"acc_gap={row['acc_gap']['mean']:.4g}"
              f"+-{row['acc_gap']['std']:.4g} "
              f"test_acc={row['test_acc']['mean']:.4g}"
              f"+-{row['test_acc']['std']:.4g}")
    return 0


def gradcheck_instance(model: str, args, inst: int):
    """Deterministic live test instance: (spec, ops, x, w, node, label)."""
    from .graphs import sbm_generate

    half = max(2, args.n // 2)
    graph, labels = sbm_generate([half, args.n - half], 0.6, 0.2,
                                 seed=args.seed)
    labels = (labels % args.classes).astype(np.int64)
    spec = model_spec_for(model, d=args.d, num_classes=args.classes,
                          hidden=args.hidden, q=args.q, alpha=args.alpha,
                          beta=args.beta, gamma=args.gamma, big_k=args.big_k)
    p = normalized_adjacency(graph)
    ops = PropOps(p, spec)
    rng = stream(args.seed, f"gradcheck_features_{inst}")
    x = 2.0 * rng.normal(size=(graph.n, args.d))
    node = inst % graph.n
    w = init_params(spec, args.seed * 1000 + inst * 64)
    for attempt in range(64):
        w = init_params(spec, args.seed * 1000 + inst * 64 + attempt)
        cache = forward(spec, ops, x, w)
        g = grad_sample(spec, ops, x, w, node, int(labels[node]), cache=cache)
        if float(np.abs(g).max()) < 1e-2:  # dead unit; FD would be all noise
            continue
        if args.q >= 1.5:
            break
        closest = min(float(np.min(np.abs(arr))) for arr in _preacts(spec, cache))
        if closest > 1e-4:
            break
    return spec, ops, x, w, node, int(labels[node])


def _preacts(spec, cache):
    if spec.arch == "gcn":
        return cache.pres
    if spec.arch == "sgc":
        return [np.zeros(1) + 1.0]
    if spec.arch in ("appnp", "gprgnn"):
        return [cache.pre1, cache.pre2]
    return cache.pres


def cmd_gradcheck(args) -> int:
    models = list(MODEL_CHOICES[:5]) if args.model == "all" else [args.model]
    for m in models:
        if m not in MODEL_CHOICES:
            raise UsageError(f"unknown model {m!r}")
    failed = False
    for model in models:
        worst = 0.0
        for inst in range(args.instances):
            spec, ops, x, w, node, label = gradcheck_instance(model, args, inst)
            ga = grad_sample(spec, ops, x, w, node, label)
            gf = fd_gradient(spec, ops, x, w, node, label, step=args.step)
            worst = max(worst, max_relative_error(ga, gf))
        status = "PASS" if worst <= args.tol else "FAIL"
        if status == "FAIL":
            failed = True
        print(f"{model}: max_rel_err={worst:.4g} tol={args.tol:.4g} {status}")
    return EXIT_NUMERIC if failed else 0


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    if args.command is None:
        parser.print_help()
        return EXIT_USAGE
    handlers = {"gen": cmd_gen, "analyze": cmd_analyze, "train": cmd_train,
                "experiment": cmd_experiment, "gradcheck": cmd_gradcheck}
    try:
        args = _merge_config(parser, argv, args)
        return handlers[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (BundleFormatError, FileNotFoundError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FloatingPointError, RuntimeError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
