"""
Command-Line Interface
Fit a single estimator or run one of the experiment protocols on a CSV dataset
"""

import argparse
import json
import os
import sys
from pathlib import Path

root_dir = Path(__file__).parent.resolve()
sys.path.append(str(root_dir))

from src.config import get_config_value, reset_config_cache  # noqa: E402
from src.data import impute_median, load_csv, sample_split, standardize_split  # noqa: E402
from src.errors import DataError, NumericalError, ReportIOError  # noqa: E402
from src.estimators import ESTIMATOR_NAMES, RidgeConfig, fit  # noqa: E402
from src.harness import ExperimentConfig, run_experiment  # noqa: E402
from src.logger import configure_logging  # noqa: E402
from src.qp import QPOptions  # noqa: E402
from src.reporting import aggregate, emit_report  # noqa: E402

EXIT_OK = 0
EXIT_BAD_ARGS = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

_PROTOCOL_COMMANDS = {
    "loss-ratio": "loss_ratio",
    "learning-curve": "learning_curve",
    "cross-validate": "cross_validation",
}


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"{text} is not an unsigned 64-bit integer")
    return value


def _non_negative(text: str) -> float:
    value = float(text)
    if not value >= 0:
        raise argparse.ArgumentTypeError(f"{text} must be non-negative")
    return value


def _name_list(text: str) -> tuple[str, ...]:
    names = tuple(part.strip() for part in text.split(",") if part.strip())
    unknown = [n for n in names if n not in ESTIMATOR_NAMES]
    if unknown:
        raise argparse.ArgumentTypeError(
            f"unknown estimators {unknown}; choose from {', '.join(ESTIMATOR_NAMES)}"
        )
    return names


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {e}") from e


def _add_data_args(parser):
    parser.add_argument('--data', required=True, help='CSV file with a header row')
    parser.add_argument('--label-col', required=True, help='Name of the two-valued label column')
    parser.add_argument('--lambda', dest='lam', type=_non_negative, help='Ridge penalty on w_sup')
    parser.add_argument('--penalize-bias', action='store_true', help='Also shrink the bias weight')
    parser.add_argument('--seed', type=_u64, default=0, help='Base seed (repeat r uses seed + r)')
    parser.add_argument('--standardize', action='store_true',
                        help='Z-score features with labeled+unlabeled statistics')


def _add_experiment_args(parser, protocol):
    _add_data_args(parser)
    parser.add_argument('--estimators', type=_name_list, help='Comma list of estimators')
    parser.add_argument('--repeats', type=int, help='Number of repeats')
    parser.add_argument('--format', choices=['csv', 'json'], default='csv', help='Report format')
    parser.add_argument('--out', help='Report path (default: PATHS.REPORTS_DIR/<protocol>.<format>)')
    parser.add_argument('--n-jobs', type=int, default=1, help='Repeats run in parallel threads')
    parser.add_argument('--no-timing', action='store_true',
                        help='Record wall time as 0 so equal seeds give byte-identical reports')
    if protocol == 'loss_ratio':
        parser.add_argument('--n-unlabeled', type=int, help='Unlabeled objects per repeat')
        parser.add_argument('--n-test', type=int, help='Test objects per repeat')
    elif protocol == 'learning_curve':
        parser.add_argument('--sizes', type=_int_list, help='Unlabeled sizes, e.g. 2,4,8')
        parser.add_argument('--test-fraction', type=float,
                            help='Share of the non-labeled rows held out for testing (default 0.5)')
    else:
        parser.add_argument('--folds', type=int, help='Number of folds (default 10)')
        parser.add_argument('--labeled', type=int, help='Labeled objects per fold (default d+5)')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description='Projected least squares semi-supervised classification'
    )
    parser.add_argument('--config', help='Path to config.yml (overrides CONFIG_FILE_PATH)')
    parser.add_argument('--log-level', help='DEBUG, INFO, WARNING or ERROR')
    commands = parser.add_subparsers(dest='command', required=True)

    fit_parser = commands.add_parser('fit', help='Fit one estimator and save its weights')
    _add_data_args(fit_parser)
    fit_parser.add_argument('--estimator', choices=ESTIMATOR_NAMES, default='projection')
    fit_parser.add_argument('--n-labeled', type=int, help='Labeled objects (default 2d)')
    fit_parser.add_argument('--out', required=True, help='Output JSON file')

    experiment = commands.add_parser('experiment', help='Run an experiment protocol')
    protocols = experiment.add_subparsers(dest='protocol', required=True)
    for command, protocol in _PROTOCOL_COMMANDS.items():
        _add_experiment_args(protocols.add_parser(command), protocol)

    return parser


def _load_dataset(args):
    if not os.path.exists(args.data):
        raise FileNotFoundError(f"Data file not found: {args.data}")
    return impute_median(load_csv(args.data, args.label_col))


def _ridge(args) -> RidgeConfig:
    defaults = RidgeConfig.from_config()
    return RidgeConfig(
        lam=defaults.lam if args.lam is None else args.lam,
        penalize_bias=args.penalize_bias or defaults.penalize_bias,
    )


def run_fit(args) -> int:
    ds = _load_dataset(args)
    n_labeled = args.n_labeled or max(2 * ds.n_features, 1)
    split = sample_split(ds, n_labeled, ds.n_rows - n_labeled, 0, args.seed)
    if args.standardize:
        split = standardize_split(split)

    outcome = fit(args.estimator, split, _ridge(args), QPOptions.from_config())
    result = {
        'estimator': args.estimator,
        'weights': [float(w) for w in outcome.w],
        'feature_names': ['(bias)'] + ds.feature_names,
        'label_values': list(ds.label_values or ()),
        'n_labeled': split.n_labeled,
        'n_unlabeled': split.n_unlabeled,
        'lambda': _ridge(args).lam,
        'seed': args.seed,
        'standardized': bool(args.standardize),
        'converged': bool(outcome.converged),
    }
    out = Path(args.out)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, 'w', encoding='utf-8') as f:
            json.dump(result, f, indent=2)
    except OSError as e:
        raise ReportIOError(f"Could not write {out}: {e}") from e

    print(f"✓ {args.estimator} fitted on {split.n_labeled} labeled / {split.n_unlabeled} unlabeled objects")
    print(f"   • Weights saved to {out}")
    if not outcome.converged:
        print("   • Warning: the projection QP did not converge; the guarantee is approximate")
    return EXIT_OK


def run_protocol(args) -> int:
    protocol = _PROTOCOL_COMMANDS[args.protocol]
    ds = _load_dataset(args)

    overrides = {
        'estimators': args.estimators,
        'n_repeats': args.repeats,
        'seed': args.seed,
        'ridge': _ridge(args),
        'standardize': args.standardize,
        'record_timing': not args.no_timing,
        'n_jobs': args.n_jobs,
    }
    if protocol == 'loss_ratio':
        overrides.update(n_unlabeled=args.n_unlabeled, n_test=args.n_test)
    elif protocol == 'learning_curve':
        overrides.update(sizes=args.sizes, test_fraction=args.test_fraction)
    else:
        overrides.update(n_folds=args.folds, n_labeled=args.labeled)
    cfg = ExperimentConfig.from_config(protocol, **overrides)

    report = run_experiment(ds, cfg)

    out = args.out or Path(get_config_value('PATHS.REPORTS_DIR', 'reports')) / f"{protocol}.{args.format}"
    emit_report(report.rows, args.format, out)

    summary = aggregate(report.rows)
    columns = ['estimator', 'n_unlabeled', 'scope', 'n', 'loss_mean', 'error_mean', 'ratio_mean', 'ratio_max']
    print(f"\n{protocol} on {ds.name}: {len(report.rows)} rows, {len(report.skipped)} skipped fits")
    print(summary[columns].to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    print(f"\n✓ Report written to {out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.config:
        os.environ['CONFIG_FILE_PATH'] = args.config
        reset_config_cache()

    try:
        configure_logging(args.log_level or get_config_value('LOGGING.LEVEL', 'INFO'))
        if args.command == 'fit':
            return run_fit(args)
        return run_protocol(args)
    except (DataError, FileNotFoundError, ReportIOError) as e:
        print(f"\nData error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as e:
        print(f"\nNumerical error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as e:
        print(f"\nInvalid arguments: {e}", file=sys.stderr)
        return EXIT_BAD_ARGS


if __name__ == "__main__":
    sys.exit(main())
