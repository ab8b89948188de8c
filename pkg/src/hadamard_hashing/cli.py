"""
Command-line entry point.

Every parameter is a flag; ``--config FILE`` may supply defaults as flat
``key=value`` lines and explicit flags win. Logs go to standard error, data
to files. Exit codes: 0 success, 2 validation error, 3 I/O or file format
error, 4 numeric failure.
"""
import argparse
import json
import logging
import sys

import numpy as np
import pandas as pd

from .analysis import (
    DEFAULT_LAMBDAS,
    Experiment,
    ablate,
    activation_histogram,
    bit_balance,
    codebook_gram,
    confusion_matrix,
    lambda_sweep,
    lsh_codes,
    max_off_diagonal,
    output_stem,
    saturation_fraction,
)
from .codebook import build_codebook, load_codebook, save_codebook
from .exceptions import FileFormatError, NumericError, ValidationError
from .model import NetworkSpec, load_network
from .preprocessing import (
    check_pairing,
    load_features,
    load_labels,
    load_split,
    make_synthetic_blobs,
    save_features,
    save_labels,
    save_split,
    split_protocol,
    standardize,
)
from .retrieval import encode, evaluate, load_codes, save_codes, search
from .training import VARIANTS, HashTrainer, TrainConfig, load_checkpoint, save_checkpoint

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

_TRAIN_DEFAULTS = TrainConfig()
_NET_DEFAULTS = NetworkSpec()


def read_config_file(path) -> dict:
    """Parse flat ``key=value`` lines; '#' starts a comment, '-' and '_' are interchangeable in keys."""
    values = {}
    with open(path, 'r') as fh:
        for number, line in enumerate(fh, start=1):
            line = line.split('#', 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition('=')
            if not sep:
                raise ValidationError(f"{path}:{number}: expected key=value, got {line!r}.")
            values[key.strip().replace('-', '_')] = value.strip()
    return values


def _apply_config(subparser: argparse.ArgumentParser, values: dict):
    defaults = {}
    for action in subparser._actions:
        if action.dest in values:
            raw = values[action.dest]
            if action.nargs in ('*', '+'):
                converted = [action.type(v) if action.type else v for v in raw.replace(',', ' ').split()]
            elif isinstance(action, argparse._StoreTrueAction):
                converted = raw.lower() in ('1', 'true', 'yes', 'on')
            else:
                converted = action.type(raw) if action.type else raw
            defaults[action.dest] = converted
            # A required flag satisfied by the config file is no longer required on the command line.
            action.required = False
    subparser.set_defaults(**defaults)


def _add_train_arguments(p):
    d = _TRAIN_DEFAULTS
    p.add_argument('--epochs', type=int, default=d.epochs, help='Total training epochs.')
    p.add_argument('--batch-size', type=int, default=d.batch_size, help='Mini-batch size.')
    p.add_argument('--lr', dest='base_lr', type=float, default=d.base_lr, help='Initial learning rate.')
    p.add_argument('--lr-halving-period', dest='lr_halving_period_epochs', type=int,
                   default=d.lr_halving_period_epochs, help='Halve the learning rate every this many epochs.')
    p.add_argument('--momentum', type=float, default=d.momentum, help='SGD momentum.')
    p.add_argument('--weight-decay', type=float, default=d.weight_decay, help='L2 weight decay (weights only).')
    p.add_argument('--lambda', dest='lambda_', type=float, default=d.lambda_,
                   help='Weight of the classification loss.')
    p.add_argument('--loss-mode', choices=('ce', 'bce'), default=d.loss_mode,
                   help="'ce' for single-label, 'bce' for multi-label data.")
    p.add_argument('--variant', choices=VARIANTS, default=d.variant, help='Which loss terms are trained.')
    p.add_argument('--seed', type=int, default=d.seed, help='Seed for initialization and shuffling.')
    p.add_argument('--hidden', dest='hidden_dims', type=int, nargs='*', default=list(_NET_DEFAULTS.hidden_dims),
                   help='Widths of the hidden layers below the hash layer.')
    p.add_argument('--hidden-activation', choices=('relu', 'tanh', 'identity'),
                   default=_NET_DEFAULTS.hidden_activation, help='Activation of the hidden layers.')


def _add_data_arguments(p, codebook=True):
    p.add_argument('--features', required=True, help='Features file (HCFS, or .txt/.csv).')
    p.add_argument('--labels', required=True, help='Labels file (HCLS, or .txt/.csv).')
    p.add_argument('--split', required=True, help='Split file.')
    if codebook:
        p.add_argument('--codebook', required=True, help='Codebook file (HCCB).')
    p.add_argument('--standardize', action='store_true', default=False,
                   help='Z-score features with training-split statistics.')


def _add_eval_arguments(p):
    p.add_argument('--map-at', dest='map_at', type=int, default=None,
                   help='R of mAP@R (e.g. 5000 or 1000); omit to rank the whole database.')
    p.add_argument('--denominator', choices=('min', 'relevant'), default='min',
                   help="AP normalization: min(R, #relevant) or #relevant.")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog='hadamard-hashing', formatter_class=fmt,
                                     description='Hadamard codebook hashing: codebooks, training and retrieval.')
    parser.add_argument('--config', default=None, help='Flat key=value file with flag defaults.')
    parser.add_argument('--threads', type=int, default=1, help='Worker threads for search and sweeps.')
    parser.add_argument('--log-level', default='INFO', choices=('DEBUG', 'INFO', 'WARNING', 'ERROR'),
                        help='Logging level on standard error.')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('codebook', formatter_class=fmt, help='Generate a Hadamard codebook.')
    p.add_argument('--bits', type=int, required=True, help='Code length K.')
    p.add_argument('--classes', type=int, required=True, help='Number of classes C.')
    p.add_argument('--seed', type=int, default=0, help='Seed for projection and selection.')
    p.add_argument('--out', required=True, help='Output codebook file.')
    p.set_defaults(handler=cmd_codebook)

    p = sub.add_parser('synth', formatter_class=fmt, help='Generate a synthetic blob dataset.')
    p.add_argument('--classes', type=int, default=8, help='Number of classes.')
    p.add_argument('--per-class', type=int, default=200, help='Items per class.')
    p.add_argument('--dim', type=int, default=16, help='Feature dimension.')
    p.add_argument('--spread', type=float, default=0.5, help='Noise standard deviation.')
    p.add_argument('--separation', type=float, default=8.0, help='Minimum center distance in units of spread.')
    p.add_argument('--seed', type=int, default=1, help='Generation seed.')
    p.add_argument('--features-out', required=True, help='Output features file.')
    p.add_argument('--labels-out', required=True, help='Output labels file.')
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser('split', formatter_class=fmt, help='Draw the query/train/database split.')
    p.add_argument('--labels', required=True, help='Labels file.')
    p.add_argument('--query-per-class', type=int, default=100, help='Query items per class.')
    p.add_argument('--train-per-class', type=int, default=500, help='Training items per class.')
    p.add_argument('--seed', type=int, default=0, help='Split seed.')
    p.add_argument('--out', required=True, help='Output split file.')
    p.set_defaults(handler=cmd_split)

    p = sub.add_parser('train', formatter_class=fmt, help='Train the hash network.')
    _add_data_arguments(p)
    _add_train_arguments(p)
    p.add_argument('--checkpoint-every', type=int, default=_TRAIN_DEFAULTS.checkpoint_every,
                   help='Also checkpoint to --out every this many epochs (0: only at the end).')
    p.add_argument('--resume', default=None, help='Checkpoint to continue from.')
    p.add_argument('--out', required=True, help='Output checkpoint (HCMD + trainer state).')
    p.add_argument('--history', required=True, help='Output history CSV.')
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser('encode', formatter_class=fmt, help='Hash features with a trained network.')
    p.add_argument('--model', required=True, help='Checkpoint or model file.')
    p.add_argument('--features', required=True, help='Features file.')
    p.add_argument('--split', default=None, help='Split file (needed by --mean-centered and --standardize).')
    p.add_argument('--mean-centered', action='store_true', default=False,
                   help='Binarize with sign(u - mean) using database activation means.')
    p.add_argument('--standardize', action='store_true', default=False,
                   help='Z-score features with training-split statistics.')
    p.add_argument('--out', required=True, help='Output codes file (HCBC).')
    p.set_defaults(handler=cmd_encode)

    p = sub.add_parser('eval', formatter_class=fmt, help='Score retrieval with mAP@R and PR curves.')
    p.add_argument('--codes', required=True, help='Codes of every item (HCBC).')
    p.add_argument('--labels', required=True, help='Labels file.')
    p.add_argument('--split', required=True, help='Split file.')
    _add_eval_arguments(p)
    p.add_argument('--out-prefix', required=True, help='Prefix of the JSON and CSV outputs.')
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser('analyze', formatter_class=fmt, help='Bit balance, activations, confusion, codebook Gram.')
    p.add_argument('--codes', required=True, help='Codes of every item (HCBC).')
    p.add_argument('--labels', required=True, help='Labels file.')
    p.add_argument('--split', required=True, help='Split file.')
    p.add_argument('--model', default=None, help='Checkpoint, for the activation histogram.')
    p.add_argument('--features', default=None, help='Features file, for the activation histogram.')
    p.add_argument('--standardize', action='store_true', default=False,
                   help='Z-score features with training-split statistics.')
    p.add_argument('--codebook', default=None, help='Codebook file, for the Gram matrix.')
    p.add_argument('--top-r', type=int, default=100, help='Ranks counted in the confusion matrix.')
    p.add_argument('--bins', type=int, default=20, help='Activation histogram bins.')
    p.add_argument('--lambda', dest='lambda_', type=float, default=_TRAIN_DEFAULTS.lambda_,
                   help='Lambda of the analyzed run (output names only).')
    p.add_argument('--seed', type=int, default=_TRAIN_DEFAULTS.seed, help='Seed of the analyzed run (output names only).')
    p.add_argument('--out-prefix', required=True, help='Prefix of the CSV and JSON outputs.')
    p.set_defaults(handler=cmd_analyze)

    p = sub.add_parser('sweep', formatter_class=fmt, help='Train and evaluate over a lambda grid.')
    _add_data_arguments(p)
    _add_train_arguments(p)
    _add_eval_arguments(p)
    p.add_argument('--lambdas', type=float, nargs='+', default=list(DEFAULT_LAMBDAS), help='Lambda grid.')
    p.add_argument('--out-prefix', required=True, help='Prefix of the CSV output.')
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser('ablate', formatter_class=fmt, help='Compare the joint objective with single-term variants.')
    _add_data_arguments(p)
    _add_train_arguments(p)
    _add_eval_arguments(p)
    p.add_argument('--out-prefix', required=True, help='Prefix of the CSV output.')
    p.set_defaults(handler=cmd_ablate)

    p = sub.add_parser('lsh-baseline', formatter_class=fmt, help='Random-hyperplane LSH codes and their evaluation.')
    _add_data_arguments(p, codebook=False)
    p.add_argument('--bits', type=int, required=True, help='Code length K.')
    p.add_argument('--seed', type=int, default=0, help='Hyperplane seed.')
    _add_eval_arguments(p)
    p.add_argument('--out-prefix', required=True, help='Prefix of the codes and report outputs.')
    p.set_defaults(handler=cmd_lsh_baseline)

    return parser


def _train_config(args, **overrides) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size, base_lr=args.base_lr,
        lr_halving_period_epochs=args.lr_halving_period_epochs, momentum=args.momentum,
        weight_decay=args.weight_decay, lambda_=args.lambda_, loss_mode=args.loss_mode,
        variant=args.variant, seed=args.seed, **overrides,
    ).validate()


def _net_spec(args) -> NetworkSpec:
    return NetworkSpec(hidden_dims=tuple(args.hidden_dims), hidden_activation=args.hidden_activation)


def _load_data(args, with_codebook=True):
    features = load_features(args.features)
    labels = load_labels(args.labels)
    check_pairing(features, labels)
    split = load_split(args.split, features.num_items)
    if args.standardize:
        features = standardize(features, split)
    codebook = load_codebook(args.codebook) if with_codebook else None
    return features, labels, split, codebook


def _experiment(args) -> Experiment:
    features, labels, split, codebook = _load_data(args)
    return Experiment(features, labels, split, codebook, _net_spec(args), cutoff=args.map_at,
                      denominator=args.denominator, threads=args.threads)


def cmd_codebook(args):
    codebook = build_codebook(args.bits, args.classes, args.seed)
    save_codebook(codebook, args.out)
    gram = codebook_gram(codebook)
    sums = np.abs(codebook.codewords.astype(np.int64).sum(axis=1))
    print(f"provenance={codebook.provenance} K*={codebook.order} K={codebook.code_length} "
          f"C={codebook.num_classes} max|offdiag gram|={max_off_diagonal(gram):.4f} "
          f"max|codeword sum|={int(sums.max())}")


def cmd_synth(args):
    features, labels = make_synthetic_blobs(args.classes, args.per_class, args.dim, args.spread, args.seed,
                                            separation=args.separation)
    save_features(features, args.features_out)
    save_labels(labels, args.labels_out)


def cmd_split(args):
    labels = load_labels(args.labels)
    split = split_protocol(labels, args.query_per_class, args.train_per_class, args.seed)
    save_split(split, args.out)


def cmd_train(args):
    features, labels, split, codebook = _load_data(args)
    config = _train_config(args, checkpoint_every=args.checkpoint_every,
                           checkpoint_path=args.out if args.checkpoint_every else None)
    state = load_checkpoint(args.resume) if args.resume else None
    trainer = HashTrainer(config, features, labels, split, codebook, _net_spec(args), state=state)
    _, history = trainer.run()
    save_checkpoint(args.out, trainer.state)
    history.save_csv(args.history)


def cmd_encode(args):
    net = load_network(args.model)
    features = load_features(args.features)
    split = load_split(args.split, features.num_items) if args.split else None
    if (args.mean_centered or args.standardize) and split is None:
        raise ValidationError("--mean-centered and --standardize need --split.")
    if args.standardize:
        features = standardize(features, split)
    mode = 'mean_centered_sign' if args.mean_centered else 'sign'
    codes, _ = encode(net, features, mode, reference_rows=split.database if split is not None else None)
    save_codes(codes, args.out)


def cmd_eval(args):
    codes = load_codes(args.codes)
    labels = load_labels(args.labels)
    if codes.num_items != labels.num_items:
        raise ValidationError(f"{codes.num_items} codes but {labels.num_items} label rows.")
    split = load_split(args.split, codes.num_items)
    report = evaluate(codes.subset(split.query), codes.subset(split.database),
                      labels.values[split.query], labels.values[split.database],
                      args.map_at, args.denominator, args.threads)
    report.save(args.out_prefix)


def cmd_analyze(args):
    codes = load_codes(args.codes)
    labels = load_labels(args.labels)
    if codes.num_items != labels.num_items:
        raise ValidationError(f"{codes.num_items} codes but {labels.num_items} label rows.")
    split = load_split(args.split, codes.num_items)
    if (args.model is None) != (args.features is None):
        raise ValidationError("--model and --features go together.")
    net = load_network(args.model) if args.model else None
    features = load_features(args.features) if args.features else None
    if features is not None and args.standardize:
        features = standardize(features, split)
    codebook = load_codebook(args.codebook) if args.codebook else None

    stem = output_stem(args.out_prefix, codes.code_length, args.lambda_, args.seed)
    database = codes.subset(split.database)
    balance = bit_balance(database)
    rankings = search(codes.subset(split.query), database, args.top_r, args.threads)
    query_labels, db_labels = labels.values[split.query], labels.values[split.database]
    weighted = confusion_matrix(rankings, query_labels, db_labels, args.top_r, weighted=True)
    unweighted = confusion_matrix(rankings, query_labels, db_labels, args.top_r, weighted=False)
    summary = {
        'code_length': codes.code_length,
        'bit_balance_min': float(balance.min()),
        'bit_balance_max': float(balance.max()),
        'bits_within_0.2_0.8': float(((balance >= 0.2) & (balance <= 0.8)).mean()),
        'confusion_min_diagonal': float(np.diag(weighted).min()),
        'confusion_top_r': args.top_r,
    }
    if net is not None:
        u = net.hash_outputs(features.values[split.database])
        counts, edges = activation_histogram(u, args.bins)
        summary['saturation_fraction'] = saturation_fraction(u)
    if codebook is not None:
        gram = codebook_gram(codebook)
        summary['codebook_max_offdiag'] = max_off_diagonal(gram)

    pd.DataFrame({'bit': np.arange(balance.size), 'fraction_plus': balance}).to_csv(
        f"{stem}_bit_balance.csv", index=False, float_format='%.17g')
    pd.DataFrame(weighted).to_csv(f"{stem}_confusion_weighted.csv", index=False, float_format='%.17g')
    pd.DataFrame(unweighted).to_csv(f"{stem}_confusion_unweighted.csv", index=False, float_format='%.17g')
    if net is not None:
        pd.DataFrame({'bin_left': edges[:-1], 'bin_right': edges[1:], 'count': counts}).to_csv(
            f"{stem}_activation_histogram.csv", index=False, float_format='%.17g')
    if codebook is not None:
        pd.DataFrame(gram).to_csv(f"{stem}_codebook_gram.csv", index=False, float_format='%.17g')
    with open(f"{stem}_summary.json", 'w') as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write('\n')
    logger.info("Saved analysis to %s_*", stem)


def cmd_sweep(args):
    experiment = _experiment(args)
    config = _train_config(args)
    table = lambda_sweep(config, experiment, args.lambdas, threads=args.threads)
    path = f"{args.out_prefix}_K{experiment.codebook.code_length}_seed{config.seed}_lambda_sweep.csv"
    table.to_csv(path, index=False, float_format='%.17g')
    logger.info("Saved lambda sweep to %s", path)


def cmd_ablate(args):
    experiment = _experiment(args)
    config = _train_config(args)
    table = ablate(config, experiment, threads=args.threads)
    path = f"{output_stem(args.out_prefix, experiment.codebook.code_length, config.lambda_, config.seed)}_ablation.csv"
    table.to_csv(path, index=False, float_format='%.17g')
    logger.info("Saved ablation table to %s", path)


def cmd_lsh_baseline(args):
    features, labels, split, _ = _load_data(args, with_codebook=False)
    codes = lsh_codes(features, args.bits, args.seed)
    report = evaluate(codes.subset(split.query), codes.subset(split.database),
                      labels.values[split.query], labels.values[split.database],
                      args.map_at, args.denominator, args.threads)
    report.extra['method'] = 'lsh'
    save_codes(codes, f"{args.out_prefix}_codes.hcbc")
    report.save(args.out_prefix)


def parse_args(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument('--config', default=None)
    known, _ = pre.parse_known_args(argv)
    if known.config:
        values = read_config_file(known.config)
        _apply_config(parser, values)
        commands = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
        for subparser in commands.choices.values():
            _apply_config(subparser, values)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO

    logging.basicConfig(stream=sys.stderr, level=getattr(logging, args.log_level),
                        format="%(name)-4s: %(levelname)-4s: %(message)s", force=True)
    try:
        args.handler(args)
    except NumericError as e:
        logger.error("Numeric failure: %s", e)
        return EXIT_NUMERIC
    except ValidationError as e:
        logger.error("Invalid input: %s", e)
        return EXIT_VALIDATION
    except (FileFormatError, OSError) as e:
        logger.error("I/O error: %s", e)
        return EXIT_IO
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
