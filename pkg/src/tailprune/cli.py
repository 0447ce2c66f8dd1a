"""Command-line pipeline driver.

One binary, eleven subcommands: generate, score, calibrate, allocate,
select, sweep, reweigh, audit, diagnose, eval, kd-check.  Every artifact
embeds the resolved flags that produced it (JSON outputs carry a
``config`` key; binary and CSV outputs get a ``<path>.meta.json``
sidecar), and identical configs always produce byte-identical artifacts.

Exit codes: 0 success, 2 invalid input, 3 infeasible request.  Stdout
carries only the artifact path; errors go to stderr.

All randomness flows from ``--seed`` through per-subcommand derived
streams.  ``--threads`` (default from TAILPRUNE_THREADS) caps worker
threads; execution is sequential and deterministic, so results never
depend on it and it is excluded from the embedded config.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .allocation import (AllocationPlan, RateModel, apply_floor,
                         estimate_complexities, optimal_allocation)
from .dataset import (EmbeddingDataset, LongTailSpec, PriorVector,
                      empirical_prior, generate_long_tail, load_dataset,
                      save_dataset)
from .diagnostics import (eval_oa_macc, induced_prior, prediction_counts,
                          probe_eval, reweigh_to_prior, signal_audit,
                          term_b_bound, tv_distance)
from .distill import (SoftTargets, calibrate_head, head_to_dict, load_head,
                      kd_robustness_check, rebalance_weights, RebalanceKind,
                      RebalancePolicy, weighted_label_mix, DEFAULT_TEMPERATURE)
from .exceptions import DatasetFormatError, DivergenceError, InfeasibleError
from .sgs import SgsConfig, sgs_select, sweep_k
from .seeding import derive_seed
from .selectors import (Method, Selection, SelectorSpec, load_selection,
                        select, selection_to_dict, stratified_select)
from .signals import ScoreKind, score_scalar

_BASE_METHODS = ("topk", "bottomk", "herding", "kcenter", "flrbf")
_SCORE_KINDS = tuple(k.value for k in ScoreKind)


def _resolved_config(args: argparse.Namespace) -> dict:
    # threads deliberately excluded: it must never affect artifact bytes
    skip = {"func", "threads"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _write_json(path: str, args: argparse.Namespace, payload: dict) -> str:
    doc = {"config": _resolved_config(args), **payload}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _write_sidecar(path: str, args: argparse.Namespace) -> None:
    with open(path + ".meta.json", "w") as fh:
        json.dump({"config": _resolved_config(args)}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _prior_choice(ds: EmbeddingDataset, name: str) -> PriorVector:
    if name == "uniform":
        return PriorVector.uniform(ds.num_classes)
    return empirical_prior(ds)


def _dataset_with_scores_source(args) -> EmbeddingDataset:
    ds = load_dataset(args.data)
    if getattr(args, "head", None):
        logits = load_head(args.head).logits(ds.embeddings).astype(np.float32)
        ds = ds.with_teacher_logits(logits)
    return ds


def _base_spec(method: str, score_kind: str | None) -> SelectorSpec:
    kind = None if score_kind is None else ScoreKind(score_kind)
    return SelectorSpec(Method(method), kind)


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t != ""]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t != ""]


def cmd_generate(args) -> str:
    spec = LongTailSpec(args.classes, args.head_count, args.ratio, args.dims,
                        args.separation, derive_seed(args.seed, "generate"))
    save_dataset(generate_long_tail(spec), args.out)
    _write_sidecar(args.out, args)
    return args.out


def cmd_score(args) -> str:
    ds = _dataset_with_scores_source(args)
    scores = score_scalar(ds, ScoreKind(args.kind))
    with open(args.out, "w") as fh:
        fh.write("index,score,label\n")
        for i in range(ds.n):
            fh.write(f"{i},{float(scores[i])!r},{int(ds.labels[i])}\n")
    _write_sidecar(args.out, args)
    return args.out


def cmd_calibrate(args) -> str:
    ds = load_dataset(args.data)
    if args.alpha == "uniform":
        alpha = np.ones(ds.num_classes)
    else:
        kind = {"cb": RebalanceKind.CLASS_BALANCED, "sqrt": RebalanceKind.SQRT,
                "cbloss": RebalanceKind.CB_LOSS}[args.alpha]
        alpha = rebalance_weights(ds.class_counts, RebalancePolicy(kind))
    fit = calibrate_head(ds, alpha=alpha, lr=args.lr, max_iter=args.max_iter,
                         grad_tol=args.tol)
    if args.emit_dataset:
        logits = fit.head.logits(ds.embeddings).astype(np.float32)
        save_dataset(ds.with_teacher_logits(logits), args.emit_dataset)
        _write_sidecar(args.emit_dataset, args)
    return _write_json(args.out, args, {
        "head": head_to_dict(fit.head),
        "fit": {
            "n_iter": fit.n_iter,
            "grad_norm": fit.grad_norm,
            "converged": fit.converged,
            "final_loss": float(fit.loss_trace[-1]),
        },
    })


def cmd_allocate(args) -> str:
    ds = load_dataset(args.data)
    prior = _prior_choice(ds, args.prior)
    rm = RateModel(estimate_complexities(ds), args.gamma)
    plan = optimal_allocation(rm, prior, args.budget)
    if args.floor is not None:
        plan = apply_floor(plan, args.floor, ds.class_counts)
    return _write_json(args.out, args, {
        "plan": {
            "budgets": [int(v) for v in plan.budgets],
            "total": plan.total,
            "floor": plan.floor,
            "target_prior": [float(p) for p in plan.target_prior.probs],
            "gamma": args.gamma,
            "complexities": [float(c) for c in rm.complexities],
        },
    })


def cmd_select(args) -> str:
    if args.budget < 1:
        raise ValueError("budget must be >= 1")
    ds = _dataset_with_scores_source(args)
    seed = derive_seed(args.seed, "select")
    if args.method == "sgs":
        if args.k is None:
            raise ValueError("--k is required for the sgs method")
        base = _base_spec(args.base_method, args.base_score_kind)
        sel = sgs_select(ds, SgsConfig(args.k, args.budget, base, seed))
    elif args.plan is not None:
        with open(args.plan) as fh:
            plan_doc = json.load(fh)
        budgets = plan_doc["plan"]["budgets"] if "plan" in plan_doc \
            else plan_doc["budgets"]
        spec = _base_spec(args.method, args.score_kind)
        sel = stratified_select(ds, np.asarray(budgets, dtype=np.int64), spec)
    else:
        spec = _base_spec(args.method, args.score_kind)
        sel = select(ds, args.budget, spec)
    return _write_json(args.out, args, {"selection": selection_to_dict(sel)})


def cmd_sweep(args) -> str:
    ds = _dataset_with_scores_source(args)
    base = _base_spec(args.method, args.score_kind)
    rows = sweep_k(ds, _ints(args.budgets), _floats(args.k), probe_eval, base,
                   derive_seed(args.seed, "sweep"))
    with open(args.out, "w") as fh:
        fh.write("k,budget,oa,macc,seed\n")
        for r in rows:
            fh.write(f"{r.k!r},{r.budget},{r.oa!r},{r.macc!r},{r.seed}\n")
    _write_sidecar(args.out, args)
    return args.out


def cmd_reweigh(args) -> str:
    ds = load_dataset(args.data)
    sel = load_selection(args.selection)
    out = reweigh_to_prior(sel, ds.labels, _prior_choice(ds, args.prior))
    return _write_json(args.out, args, {"selection": selection_to_dict(out)})


def cmd_audit(args) -> str:
    ds = _dataset_with_scores_source(args)
    scores = score_scalar(ds, ScoreKind(args.kind))
    sel = load_selection(args.selection) if args.selection else None
    report = signal_audit(ds, scores, sel)
    return _write_json(args.out, args, {
        "audit": {
            "pearson_rho": report.pearson_rho,
            "r_squared": report.r_squared,
            "overlap": report.overlap,
            "selection_imbalance_ratio": report.selection_imbalance_ratio,
            "per_class_mean_magnitude":
                [float(v) for v in report.per_class_mean_magnitude],
            "zero_selection_classes": list(report.zero_selection_classes),
        },
    })


def cmd_diagnose(args) -> str:
    ds = load_dataset(args.data)
    sel = load_selection(args.selection)
    target = _prior_choice(ds, args.prior)
    rho = induced_prior(sel, ds.labels, ds.num_classes)
    return _write_json(args.out, args, {
        "diagnostics": {
            "induced_prior": [float(v) for v in rho.probs],
            "target_prior": [float(v) for v in target.probs],
            "tv": tv_distance(target, rho),
            "term_b_bound": term_b_bound(target, rho, args.bound),
            "selected_per_class": [int(v) for v in sel.per_class_counts],
        },
    })


def cmd_eval(args) -> str:
    ds = load_dataset(args.data)
    head = load_head(args.head)
    correct, total = prediction_counts(ds.labels, head.predict(ds.embeddings),
                                       ds.num_classes)
    oa, macc = eval_oa_macc(correct, total)
    acc = [float(c / t) if t else None for c, t in zip(correct, total)]
    return _write_json(args.out, args, {
        "eval": {"oa": oa, "macc": macc, "per_class_accuracy": acc},
    })


def cmd_kd_check(args) -> str:
    rng = np.random.default_rng(derive_seed(args.seed, "kd-check"))
    n, C = args.samples, args.classes
    labels = np.arange(n, dtype=np.int64) % C
    targets = SoftTargets.from_logits(rng.normal(0.0, 2.0, (n, C)),
                                      args.temperature)
    counts = np.bincount(labels, minlength=C)
    cb = rebalance_weights(counts, RebalancePolicy(RebalanceKind.CLASS_BALANCED))
    report = kd_robustness_check(targets, np.ones(n), cb[labels])
    # hard-label contrast: identical ambiguous inputs, optimum moves with w
    mix_a = weighted_label_mix([0, 1], [1.0, 1.0], 2)
    mix_b = weighted_label_mix([0, 1], [4.0, 1.0], 2)
    return _write_json(args.out, args, {
        "kd_check": {
            "max_gap_a": report.max_gap_a,
            "max_gap_b": report.max_gap_b,
            "solution_gap": report.solution_gap,
            "steps_a": report.steps_a,
            "steps_b": report.steps_b,
            "passed": report.passed(),
            "hard_label_gap": float(np.abs(mix_a - mix_b).sum()),
        },
    })


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tailprune",
        description="Weighted subset selection and distillation for "
                    "long-tailed embedding datasets",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add(name, fn, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(func=fn)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int,
                       default=int(os.environ.get("TAILPRUNE_THREADS", "1")),
                       help="worker cap; never affects results")
        p.add_argument("--out", required=True)
        return p

    p = add("generate", cmd_generate, help="write a synthetic long-tail dataset")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--ratio", type=float, required=True)
    p.add_argument("--head-count", type=int, default=100)
    p.add_argument("--dims", type=int, default=16)
    p.add_argument("--separation", type=float, default=4.0)

    p = add("score", cmd_score, help="per-sample scores as CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--kind", choices=_SCORE_KINDS, required=True)
    p.add_argument("--head", help="head JSON supplying logits")

    p = add("calibrate", cmd_calibrate, help="retrain a linear head")
    p.add_argument("--data", required=True)
    p.add_argument("--alpha", choices=("cb", "uniform", "sqrt", "cbloss"),
                   default="cb")
    p.add_argument("--lr", type=float, default=1.0)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--emit-dataset",
                   help="also write the dataset with the head's logits attached")

    p = add("allocate", cmd_allocate, help="optimal per-class budgets")
    p.add_argument("--data", required=True)
    p.add_argument("--prior", choices=("empirical", "uniform"), default="uniform")
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--floor", type=int)

    p = add("select", cmd_select, help="pick a weighted subset")
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=_BASE_METHODS + ("sgs",), required=True)
    p.add_argument("--score-kind", choices=_SCORE_KINDS)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--k", type=float, help="seeding ratio for sgs")
    p.add_argument("--base-method", choices=_BASE_METHODS, default="flrbf")
    p.add_argument("--base-score-kind", choices=_SCORE_KINDS)
    p.add_argument("--plan", help="allocation plan JSON for stratified quotas")
    p.add_argument("--head", help="head JSON supplying logits for score methods")

    p = add("sweep", cmd_sweep, help="K trade-off curve as CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--budgets", required=True, help="comma list of budgets")
    p.add_argument("--k", required=True, help="comma list of K values")
    p.add_argument("--method", choices=_BASE_METHODS, default="flrbf")
    p.add_argument("--score-kind", choices=_SCORE_KINDS)
    p.add_argument("--head", help="head JSON supplying logits for score methods")

    p = add("reweigh", cmd_reweigh, help="match a selection to a target prior")
    p.add_argument("--data", required=True)
    p.add_argument("--selection", required=True)
    p.add_argument("--prior", choices=("empirical", "uniform"), default="uniform")

    p = add("audit", cmd_audit, help="score-vs-frequency audit report")
    p.add_argument("--data", required=True)
    p.add_argument("--kind", choices=_SCORE_KINDS, required=True)
    p.add_argument("--head", help="head JSON supplying logits")
    p.add_argument("--selection")

    p = add("diagnose", cmd_diagnose, help="induced-prior diagnostics")
    p.add_argument("--data", required=True)
    p.add_argument("--selection", required=True)
    p.add_argument("--prior", choices=("empirical", "uniform"), default="uniform")
    p.add_argument("--bound", type=float, default=1.0)

    p = add("eval", cmd_eval, help="OA and mean class accuracy of a head")
    p.add_argument("--data", required=True)
    p.add_argument("--head", required=True)

    p = add("kd-check", cmd_kd_check, help="distillation weight-robustness probe")
    p.add_argument("--samples", type=int, default=12)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--temperature", type=float, default=DEFAULT_TEMPERATURE)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        path = args.func(args)
    except InfeasibleError as exc:
        print(f"error[infeasible]: {exc}", file=sys.stderr)
        return 3
    except (DatasetFormatError, DivergenceError, ValueError, OSError) as exc:
        print(f"error[invalid-input]: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
