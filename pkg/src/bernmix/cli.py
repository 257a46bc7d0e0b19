"""Command-line entry point: ``bernmix {mine,train,mine-model,eval,gen}``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import em, gibbs, vb
from .dataset import item_frequencies, load_fimi, sample_from_model, split, write_fimi
from .errors import ContractViolation, ModelFormatError, ParseError
from .evaluation import (aggregate_csv, evaluate, length_csv, report_csv, report_text)
from .miner import ItemsetCollection, mine_exact, mine_oracle, read_itemsets, write_itemsets
from .model import Hyperparams, load_model, save_model

METHODS = ("em", "gibbs", "vb", "dp-gibbs", "dp-vb")
TRACE_LABEL = {"em": "log_likelihood", "vb": "elbo", "dp-vb": "elbo",
               "gibbs": "log_posterior", "dp-gibbs": "log_posterior"}

EXIT_ARGS, EXIT_IO, EXIT_NUMERIC = 2, 3, 4


class UsageError(ValueError):
    pass


def _minsup(text: str) -> float:
    v = float(text)
    if not 0.0 < v <= 1.0:
        raise argparse.ArgumentTypeError("minsup must lie in (0, 1]")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _print_counts(coll: ItemsetCollection, out) -> None:
    counts = coll.counts_by_length()
    print(f"total\t{len(coll)}", file=out)
    for length, n in counts.items():
        print(f"{length}\t{n}", file=out)


def cmd_mine(args, out=sys.stdout) -> int:
    ds = load_fimi(args.input)
    coll = mine_exact(ds, args.minsup, threads=args.threads)
    if args.output:
        write_itemsets(coll, args.output, labels=ds.item_labels)
    _print_counts(coll, out)
    return 0


def build_hyperparams(ds, alpha: float, beta: str, gamma: str) -> Hyperparams:
    """Item-frequency policy by default: beta_i = freq_i, gamma_i = 1 - freq_i (floored)."""
    floor = 1e-3
    if beta == "item-frequency":
        freqs = item_frequencies(ds) if ds.n_transactions else np.full(ds.n_items, 0.5)
        b = np.maximum(freqs, floor)
        comp = np.maximum(1.0 - freqs, floor)
    else:
        b = np.full(ds.n_items, float(beta.removeprefix("scalar:")))
        comp = None
    if gamma == "complement":
        if comp is None:
            comp = np.maximum(1.0 - b, floor)
        g = comp
    else:
        g = np.full(ds.n_items, float(gamma.removeprefix("scalar:")))
    return Hyperparams(alpha, b, g)


def _numbered(path: Path, run: int, repeats: int) -> Path:
    if repeats == 1:
        return path
    return path.with_name(f"{path.stem}.run{run}{path.suffix}")


def train_one(ds, train_ds, args, seed: int):
    method = args.method
    if method == "em":
        return em.fit_em(train_ds, args.k, seed=seed, max_iters=args.max_iters, tol=args.tol)
    hyper = build_hyperparams(ds, args.alpha, args.beta, args.gamma)
    if method == "gibbs":
        return gibbs.fit_gibbs_finite(train_ds, args.k, hyper, n_sweeps=args.sweeps,
                                      burn_in=args.burn_in, seed=seed)
    if method == "dp-gibbs":
        return gibbs.fit_gibbs_dp(train_ds, hyper, n_sweeps=args.sweeps,
                                  burn_in=args.burn_in, seed=seed)
    if method == "vb":
        return vb.fit_vb_finite(train_ds, args.k, hyper, tol=args.tol,
                                max_iters=args.max_iters, seed=seed,
                                rho_update=args.rho_update)
    return vb.fit_vb_dp(train_ds, args.k, hyper, tol=args.tol, max_iters=args.max_iters,
                        seed=seed)


def cmd_train(args, out=sys.stdout) -> int:
    if args.method == "dp-gibbs":
        if args.k is not None:
            raise UsageError("--k is not accepted by dp-gibbs (the sampler grows K itself)")
    elif args.k is None:
        raise UsageError(f"--k is required for method {args.method}")
    if not args.output:
        raise UsageError("train requires --output")
    ds = load_fimi(args.input)
    train_ds = ds
    if args.train_fraction is not None:
        train_ds, _ = split(ds, args.train_fraction, args.seed)
    output = Path(args.output)
    for run in range(args.repeats):
        seed = args.seed + run
        model, trace = train_one(ds, train_ds, args, seed)
        path = _numbered(output, run, args.repeats)
        save_model(model, path)
        trace_path = path.with_name(path.stem + ".trace.csv")
        trace_path.write_text(trace.to_csv(TRACE_LABEL[args.method]), encoding="utf-8")
        line = f"{path}\tK={model.K}\titerations={trace.iterations}"
        if trace.k_active:
            line += f"\tmean_K_active={trace.mean_k_active():.2f}"
        print(line, file=out)
    return 0


def cmd_mine_model(args, out=sys.stdout) -> int:
    model = load_model(args.input)
    coll = mine_oracle(model, args.minsup, threads=args.threads)
    if args.output:
        write_itemsets(coll, args.output, labels=model.item_labels)
    _print_counts(coll, out)
    return 0


def _to_indices(coll: ItemsetCollection, labels) -> ItemsetCollection:
    if labels is None:
        return coll
    index = {label: i for i, label in enumerate(labels)}
    try:
        found = {tuple(sorted(index[v] for v in k)): f for k, f in coll.itemsets.items()}
    except KeyError as exc:
        raise UsageError(f"item label {exc.args[0]} is unknown to the model") from exc
    return ItemsetCollection(coll.minsup, found, coll.source)


def _to_labels(coll: ItemsetCollection, labels) -> ItemsetCollection:
    if labels is None:
        return coll
    found = {tuple(labels[i] for i in k): f for k, f in coll.itemsets.items()}
    return ItemsetCollection(coll.minsup, found, coll.source)


def _check_threshold(coll: ItemsetCollection, name: str) -> None:
    low = [v for v in coll.itemsets.values() if v < coll.minsup - 5e-7]
    if low:
        raise UsageError(f"threshold mismatch: {name} holds measures below minsup "
                         f"{coll.minsup} (e.g. {min(low)})")


def cmd_eval(args, out=sys.stdout) -> int:
    if (args.truth is None) == (args.data is None):
        raise UsageError("give exactly one of --truth or --data")
    if not args.model and not args.predicted:
        raise UsageError("give --model and/or --predicted")
    if args.model and args.predicted and len(args.model) != len(args.predicted):
        raise UsageError("--model and --predicted must pair up run by run")
    if args.data is not None:
        ds = load_fimi(args.data)
        truth = _to_labels(mine_exact(ds, args.minsup, threads=args.threads), ds.item_labels)
        truth_name = str(args.data)
    else:
        truth = read_itemsets(args.truth, args.minsup)
        _check_threshold(truth, str(args.truth))
        truth_name = str(args.truth)

    reports = []
    n_runs = len(args.model or args.predicted)
    for run in range(n_runs):
        model = load_model(args.model[run]) if args.model else None
        if args.predicted:
            predicted = read_itemsets(args.predicted[run], args.minsup, "model-predicted")
            _check_threshold(predicted, str(args.predicted[run]))
        else:
            predicted = _to_labels(mine_oracle(model, args.minsup, threads=args.threads),
                                   model.item_labels)
        name = str(args.model[run] if args.model else args.predicted[run])
        if model is not None:
            t_idx = _to_indices(truth, model.item_labels)
            p_idx = _to_indices(predicted, model.item_labels)
            report = evaluate(t_idx, p_idx, model, dataset=truth_name, model_name=name)
        else:
            report = evaluate(truth, predicted, dataset=truth_name, model_name=name)
        reports.append(report)

    prefix = Path(args.output) if args.output else None
    for run, report in enumerate(reports):
        text = report_text(report)
        out.write(text)
        if prefix is not None:
            # the prefix is a bare name: suffixes are appended, never substituted
            name = prefix.name if len(reports) == 1 else f"{prefix.name}.run{run}"
            for suffix, body in ((".txt", text), (".csv", report_csv(report)),
                                 (".lengths.csv", length_csv(report))):
                prefix.with_name(name + suffix).write_text(body, encoding="utf-8")
    if len(reports) > 1:
        summary = aggregate_csv(reports)
        out.write(summary)
        if prefix is not None:
            prefix.with_name(prefix.name + ".runs.csv").write_text(summary, encoding="utf-8")
    return 0


def cmd_gen(args, out=sys.stdout) -> int:
    if not args.output:
        raise UsageError("gen requires --output")
    if args.n < 0:
        raise UsageError("--n must be non-negative")
    model = load_model(args.input)
    ds = sample_from_model(model, args.n, args.seed)
    write_fimi(ds, args.output)
    print(f"{args.output}\tN={ds.n_transactions}\tD={ds.n_items}", file=out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bernmix",
        description="Bernoulli mixture models for frequent itemset prediction.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, minsup=False):
        p.add_argument("--input", required=True)
        p.add_argument("--output")
        p.add_argument("--threads", type=_positive_int, default=1)
        if minsup:
            p.add_argument("--minsup", type=_minsup, required=True)

    p = sub.add_parser("mine", help="exact Eclat mining of a FIMI file")
    common(p, minsup=True)
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("train", help="fit a mixture model")
    common(p)
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--k", type=_positive_int, help="components, or truncation for dp-vb")
    p.add_argument("--alpha", type=float, default=1.5)
    p.add_argument("--beta", default="item-frequency",
                   help="'item-frequency' or a scalar (optionally 'scalar:v')")
    p.add_argument("--gamma", default="complement",
                   help="'complement' (1 - beta) or a scalar")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=_positive_int, default=500)
    p.add_argument("--sweeps", type=_positive_int, default=200)
    p.add_argument("--burn-in", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--repeats", type=_positive_int, default=5)
    p.add_argument("--rho-update", choices=vb.RHO_UPDATES, default="conjugate")
    p.add_argument("--train-fraction", type=float,
                   help="train on a seeded random fraction of the rows")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("mine-model", help="frequent itemsets predicted by a model")
    common(p, minsup=True)
    p.set_defaults(func=cmd_mine_model)

    p = sub.add_parser("eval", help="score predictions against exact itemsets")
    p.add_argument("--truth", help="itemset file from `mine`")
    p.add_argument("--data", help="FIMI file to mine the truth from")
    p.add_argument("--model", nargs="+", help="model file(s), one per run")
    p.add_argument("--predicted", nargs="+", help="itemset file(s) from `mine-model`")
    p.add_argument("--minsup", type=_minsup, required=True)
    p.add_argument("--output", help="report path prefix")
    p.add_argument("--threads", type=_positive_int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gen", help="sample a FIMI dataset from a model")
    common(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out)
    except (ParseError, ModelFormatError, OSError) as exc:
        print(f"bernmix: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ContractViolation, FloatingPointError) as exc:
        print(f"bernmix: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"bernmix: error: {exc}", file=sys.stderr)
        return EXIT_ARGS


if __name__ == "__main__":
    sys.exit(main())
