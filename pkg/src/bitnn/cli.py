"""Command-line entry point: train-baseline, train, eval, pack, infer, bench, gradcheck."""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import data, model_io, packed, report, trainer
from .binarize import BinaryAlphabet
from .errors import BitnnError
from .network import (
    ActivationKind,
    BINARY_ACTIVATIONS,
    BINARY_MODES,
    LayerSpec,
    Network,
    binary_finetune,
    init_random,
    parse_network_config,
)


class UsageError(Exception):
    """Bad flag combination; exits with code 2 like argparse usage errors."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(2)


def _add_data_flags(p, holdout=True):
    p.add_argument("--data", required=True, help="feature file (FRM1 or IDX images)")
    p.add_argument("--labels", required=True, help="label file (LBL1 or IDX labels)")
    p.add_argument("--context", type=int, default=1, help="frame splicing context (odd)")
    if holdout:
        p.add_argument("--holdout-data", help="separate holdout feature file")
        p.add_argument("--holdout-labels", help="separate holdout label file")
        p.add_argument("--holdout-frac", type=float, default=0.1,
                       help="holdout fraction when no separate files are given")


def _add_train_flags(p):
    p.add_argument("--out", required=True, help="output model file")
    p.add_argument("--log", help="per-epoch CSV log (default: model path with .csv)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--lr-decay", type=float, default=0.5)


def build_parser():
    parser = _Parser(prog="bitnn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-baseline", help="train a real-valued baseline network")
    p.add_argument("--config", required=True, help="network config file (key = value)")
    p.add_argument("--lr", type=float, default=0.008)
    _add_data_flags(p)
    _add_train_flags(p)

    p = sub.add_parser("train", help="binary fine-tuning from a trained baseline")
    p.add_argument("--init", required=True, help="baseline model file")
    p.add_argument("--mode", required=True, choices=["bw", "ba", "bnn"])
    p.add_argument("--k", type=float, default=None, help="gradient-mask threshold (ba/bnn)")
    p.add_argument("--p", type=float, default=None, help="semi-stochastic frequency (bw/bnn)")
    p.add_argument("--alpha", type=float, default=None,
                   help="weight-gradient norm threshold (bnn); 0 disables")
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--alphabet", choices=["signed", "unsigned"], default="signed")
    p.add_argument("--fix-input", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--fix-softmax", action=argparse.BooleanOptionalAction, default=True)
    _add_data_flags(p)
    _add_train_flags(p)

    p = sub.add_parser("eval", help="accuracy and cross-entropy of a model on a dataset")
    p.add_argument("--model", required=True)
    _add_data_flags(p, holdout=False)

    p = sub.add_parser("pack", help="re-encode intermediate hidden layers as packed binary")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--alphabet", choices=["signed", "unsigned"], default="signed")

    p = sub.add_parser("infer", help="class posteriors for a feature file")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--context", type=int, default=1)
    p.add_argument("--out", help="posterior CSV (default stdout)")

    p = sub.add_parser("bench", help="time the gemv kernels")
    p.add_argument("--rows", type=int, default=1024)
    p.add_argument("--cols", type=int, default=1024)
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV path (default stdout); figure lands beside it")

    p = sub.add_parser("gradcheck", help="finite-difference check of the backward pass")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--tol", type=float, default=1e-3)

    return parser


def _load_datasets(args):
    ds = data.load_dataset(args.data, args.labels)
    if args.context != 1:
        ds = data.splice(ds, args.context)
    if getattr(args, "holdout_data", None):
        if not args.holdout_labels:
            raise BitnnError("--holdout-data requires --holdout-labels")
        hold = data.load_dataset(args.holdout_data, args.holdout_labels)
        if args.context != 1:
            hold = data.splice(hold, args.context)
        return ds, hold
    return data.holdout_split(ds, args.holdout_frac)


def _train_common(args, net, opts, train_set, holdout_set):
    net, reports = trainer.train(net, train_set, holdout_set, opts)
    model_io.save_model(net, args.out)
    log_path = args.log or str(Path(args.out).with_suffix(".csv"))
    report.write_epoch_csv(log_path, reports)
    report.plot_convergence(reports, str(Path(log_path).with_suffix(".png")))
    last = reports[-1]
    print(f"epochs={last.epoch} holdout_acc={last.holdout_acc:.4f} "
          f"holdout_xent={last.holdout_loss:.6f} model={args.out} log={log_path}")
    return 0


def cmd_train_baseline(args):
    config = parse_network_config(Path(args.config).read_text())
    if any(m in BINARY_MODES for m in config.weight_modes):
        raise BitnnError("train-baseline expects real weight modes; use train --mode for binary")
    if any(a in BINARY_ACTIVATIONS for a in config.activations):
        raise BitnnError("train-baseline expects real activations; use train --mode ba")
    train_set, holdout_set = _load_datasets(args)
    net = init_random(config, args.seed)
    opts = trainer.TrainOptions(initial_lr=args.lr, batch_size=args.batch_size,
                                lr_decay=args.lr_decay, max_epochs=args.epochs,
                                seed=args.seed)
    return _train_common(args, net, opts, train_set, holdout_set)


def cmd_train(args):
    if args.k is not None and args.mode == "bw":
        raise UsageError("--k applies to binary activations (modes ba, bnn)")
    if args.p is not None and args.mode == "ba":
        raise UsageError("--p applies to binary weights (modes bw, bnn)")
    if args.alpha is not None and args.mode != "bnn":
        raise UsageError("--alpha applies to full-binary training (mode bnn)")
    baseline = model_io.load_model(args.init)
    if not isinstance(baseline, Network):
        raise BitnnError(f"{args.init} holds a packed model; fine-tuning needs a float baseline")
    alphabet = BinaryAlphabet(args.alphabet)
    net = binary_finetune(baseline, args.mode, alphabet,
                          fix_input=args.fix_input, fix_softmax=args.fix_softmax)
    train_set, holdout_set = _load_datasets(args)
    opts = trainer.TrainOptions(
        initial_lr=args.lr,
        k=args.k if args.k is not None else 1.0,
        p=args.p if args.p is not None else 0.0,
        alpha=args.alpha if args.alpha is not None else 15.0,
        batch_size=args.batch_size, lr_decay=args.lr_decay,
        max_epochs=args.epochs, seed=args.seed,
    )
    return _train_common(args, net, opts, train_set, holdout_set)


def _model_posteriors(model, feats):
    if isinstance(model, Network):
        from .network import forward_batch
        return forward_batch(model, feats, train=False)
    return np.stack([packed.infer(model, row) for row in feats])


def cmd_eval(args):
    model = model_io.load_model(args.model)
    ds = data.load_dataset(args.data, args.labels)
    if args.context != 1:
        ds = data.splice(ds, args.context)
    probs = _model_posteriors(model, ds.features)
    from .tensor import batch_cross_entropy
    xent, _ = batch_cross_entropy(probs, ds.labels)
    acc = float((probs.argmax(axis=1) == ds.labels).mean()) if ds.n else 0.0
    print(f"acc={acc:.6f} xent={xent:.6f}")
    return 0


def cmd_pack(args):
    model = model_io.load_model(args.model)
    if isinstance(model, Network):
        model = packed.from_network(model)
    model = packed.pack_hidden(model, BinaryAlphabet(args.alphabet))
    model_io.save_model(model, args.out)
    sizes = packed.model_weight_bytes(model)
    print(f"packed {args.out}: weight bytes per layer {sizes}")
    return 0


def cmd_infer(args):
    model = model_io.load_model(args.model)
    feats = data.read_features(args.data)
    if args.context != 1:
        spliced = data.splice(data.Dataset(feats, np.zeros(len(feats), dtype=np.int64), 1),
                              args.context)
        feats = spliced.features
    probs = _model_posteriors(model, feats)
    lines = [",".join(f"class_{c}" for c in range(probs.shape[1]))]
    lines += [",".join(f"{v:.8g}" for v in row) for row in probs]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_bench(args):
    rows = packed.bench_kernels(args.rows, args.cols, args.reps, args.seed)
    if args.out:
        report.write_bench_csv(args.out, rows)
        report.plot_bench(rows, str(Path(args.out).with_suffix(".png")))
    else:
        print(",".join(report.BENCH_FIELDS))
        for r in rows:
            print(f"{r.kernel},{r.rows},{r.cols},{r.reps},{r.ns_per_gemv:.6g},{r.bytes_model}")
    return 0


def cmd_gradcheck(args):
    suites = {
        "sigmoid": [ActivationKind.SIGMOID, ActivationKind.SIGMOID, ActivationKind.SOFTMAX],
        "identity": [ActivationKind.IDENTITY, ActivationKind.IDENTITY, ActivationKind.SOFTMAX],
        "softmax": [ActivationKind.SIGMOID, ActivationKind.SOFTMAX],
    }
    failed = False
    for name, acts in suites.items():
        worst = 0.0
        for seed in range(args.seeds):
            rng = np.random.default_rng(seed)
            dims = [5] + [4] * (len(acts) - 1) + [3]
            specs = [LayerSpec(dims[l], dims[l + 1], activation=acts[l])
                     for l in range(len(acts))]
            weights = [rng.standard_normal((s.out_dim, s.in_dim)).astype(np.float32) * 0.5
                       for s in specs]
            biases = [rng.standard_normal(s.out_dim).astype(np.float32) * 0.1 for s in specs]
            net = Network(specs, weights, biases)
            x = rng.standard_normal(dims[0])
            err = trainer.gradient_check(net, x, label=int(rng.integers(dims[-1])))
            worst = max(worst, err)
        status = "ok" if worst <= args.tol else "FAIL"
        print(f"gradcheck {name}: max_rel_err={worst:.3e} {status}")
        failed = failed or worst > args.tol
    if failed:
        print(f"error: gradient check exceeded tolerance {args.tol}", file=sys.stderr)
        return 1
    return 0


_COMMANDS = {
    "train-baseline": cmd_train_baseline,
    "train": cmd_train,
    "eval": cmd_eval,
    "pack": cmd_pack,
    "infer": cmd_infer,
    "bench": cmd_bench,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (BitnnError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
