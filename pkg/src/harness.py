"""
Harness Module
Seeded loss-ratio, learning-curve, and cross-validation protocols
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from src.config import get_config_value
from src.data import (
    Dataset,
    SemiSplit,
    kfold_indices,
    make_rng,
    repeat_seed,
    sample_split,
    split_from_indices,
    standardize_split,
)
from src.errors import (
    AllTrialsFailed,
    DataError,
    DegenerateDenominator,
    GuaranteeViolation,
    InsufficientRows,
    ProjectedLSError,
)
from src.estimators import (
    DECISION_THRESHOLD,
    ESTIMATOR_NAMES,
    RidgeConfig,
    decision_values,
    fit,
)
from src.evaluation import error_rate, loss_ratio, quadratic_loss
from src.qp import QPOptions

logger = logging.getLogger(__name__)

PROTOCOLS = ("loss_ratio", "learning_curve", "cross_validation")
SCOPE_ORDER = {"train_all": 0, "unlabeled_only": 1, "test": 2}
DEFAULT_SIZES = (2, 4, 8, 16, 32, 64, 128, 256, 512)

_CONFIG_SECTIONS = {
    "loss_ratio": "EXPERIMENTS.LOSS_RATIO",
    "learning_curve": "EXPERIMENTS.LEARNING_CURVE",
    "cross_validation": "EXPERIMENTS.CROSS_VALIDATION",
}


@dataclass(frozen=True)
class ExperimentConfig:
    protocol: str
    estimators: tuple[str, ...]
    n_repeats: int
    seed: int = 0
    ridge: RidgeConfig = RidgeConfig()
    qp_options: QPOptions = QPOptions()
    # None means the protocol default: 2d for loss_ratio and learning_curve, d+5 for CV
    n_labeled: int | None = None
    n_unlabeled: int = 1000
    n_test: int = 1000
    sizes: tuple[int, ...] = DEFAULT_SIZES
    n_folds: int = 10
    test_fraction: float = 0.5
    extra_labeled: int = 5
    standardize: bool = False
    record_timing: bool = True
    n_jobs: int = 1
    audit_tolerance: float = 1e-9
    self_learning_max_iter: int = 100

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"Unknown protocol '{self.protocol}'. Choose from: {', '.join(PROTOCOLS)}")
        unknown = [e for e in self.estimators if e not in ESTIMATOR_NAMES]
        if unknown:
            raise ValueError(f"Unknown estimators {unknown}. Choose from: {', '.join(ESTIMATOR_NAMES)}")
        if not self.estimators:
            raise ValueError("at least one estimator is required")
        if self.n_repeats < 1:
            raise ValueError("n_repeats must be at least 1")
        if self.n_labeled is not None and self.n_labeled < 1:
            raise ValueError("n_labeled must be positive")
        if self.n_unlabeled < 0 or self.n_test < 0:
            raise ValueError("sample sizes must be non-negative")
        if not self.sizes or min(self.sizes) < 1:
            raise ValueError("learning-curve sizes must be positive")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must lie strictly between 0 and 1")
        if self.self_learning_max_iter < 1:
            raise ValueError("self_learning_max_iter must be at least 1")
        if self.n_folds < 2:
            raise ValueError("cross-validation needs at least 2 folds")
        if self.n_jobs < 1:
            raise ValueError("n_jobs must be at least 1")

    @classmethod
    def from_config(cls, protocol: str, **overrides) -> "ExperimentConfig":
        """Protocol defaults from config.yml, then explicit overrides (None is ignored)."""
        section = _CONFIG_SECTIONS.get(protocol)
        if section is None:
            raise ValueError(f"Unknown protocol '{protocol}'")

        values = {
            "protocol": protocol,
            "estimators": tuple(get_config_value(f"{section}.ESTIMATORS", ["supervised", "projection"])),
            "n_repeats": int(get_config_value(f"{section}.REPEATS", 20)),
            "ridge": RidgeConfig.from_config(),
            "qp_options": QPOptions.from_config(),
            "audit_tolerance": float(get_config_value("AUDIT.RATIO_TOLERANCE", 1e-9)),
            "self_learning_max_iter": int(get_config_value("ESTIMATORS.SELF_LEARNING_MAX_ITER", 100)),
        }
        if protocol == "loss_ratio":
            values["n_unlabeled"] = int(get_config_value(f"{section}.N_UNLABELED", 1000))
            values["n_test"] = int(get_config_value(f"{section}.N_TEST", 1000))
        elif protocol == "learning_curve":
            values["sizes"] = tuple(int(s) for s in get_config_value(f"{section}.SIZES", DEFAULT_SIZES))
            values["test_fraction"] = float(get_config_value(f"{section}.TEST_FRACTION", 0.5))
        else:
            values["n_folds"] = int(get_config_value(f"{section}.FOLDS", 10))
            values["extra_labeled"] = int(get_config_value(f"{section}.EXTRA_LABELED", 5))

        values.update({k: v for k, v in overrides.items() if v is not None})
        if "estimators" in overrides and overrides["estimators"] is not None:
            values["estimators"] = tuple(overrides["estimators"])
        return cls(**values)


@dataclass(frozen=True)
class ReportRow:
    protocol: str
    dataset: str
    estimator: str
    repeat: int
    fold: int
    n_labeled: int
    n_unlabeled: int
    scope: str
    loss: float
    error: float
    ratio: float
    converged: bool
    wall_time_ms: float


REPORT_FIELDS = tuple(ReportRow.__dataclass_fields__)


@dataclass(frozen=True)
class SkippedTrial:
    repeat: int
    fold: int
    estimator: str
    reason: str


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    dataset: str
    rows: list[ReportRow] = field(default_factory=list)
    skipped: list[SkippedTrial] = field(default_factory=list)


@dataclass
class _Fitted:
    w: np.ndarray
    converged: bool
    wall_time_ms: float


def _fit_estimators(split: SemiSplit, cfg: ExperimentConfig, repeat: int, fold: int):
    """Fit the supervised baseline plus every configured estimator on one split.

    Returns (fits, skipped). A failing supervised fit skips the whole trial.
    """
    fits: dict[str, _Fitted] = {}
    skipped: list[SkippedTrial] = []
    names = ["supervised"] + [e for e in cfg.estimators if e != "supervised"]
    for name in names:
        start = time.perf_counter()
        try:
            outcome = fit(name, split, cfg.ridge, cfg.qp_options, cfg.self_learning_max_iter)
        except ProjectedLSError as e:
            logger.warning("Skipping %s (repeat %d, fold %d): %s", name, repeat, fold, e)
            skipped.append(SkippedTrial(repeat, fold, name, str(e)))
            if name == "supervised":
                return {}, skipped
            continue
        elapsed = (time.perf_counter() - start) * 1000.0 if cfg.record_timing else 0.0
        fits[name] = _Fitted(outcome.w, outcome.converged, elapsed)
    return fits, skipped


def _block_rows(
    cfg: ExperimentConfig,
    dataset: str,
    fits: dict[str, _Fitted],
    X: np.ndarray,
    y: np.ndarray,
    scope: str,
    repeat: int,
    fold: int,
    n_labeled: int,
    n_unlabeled: int,
    skipped: list[SkippedTrial],
) -> list[ReportRow]:
    n = len(y)
    if n == 0:
        return []
    w_sup = fits["supervised"].w

    rows = []
    for name in cfg.estimators:
        if name not in fits:
            continue
        fitted = fits[name]
        try:
            ratio = loss_ratio(fitted.w, w_sup, X, y)
        except DegenerateDenominator as e:
            logger.warning("Skipping %s row on %s (repeat %d): %s", name, scope, repeat, e)
            skipped.append(SkippedTrial(repeat, fold, name, f"{scope}: {e}"))
            continue
        rows.append(ReportRow(
            protocol=cfg.protocol,
            dataset=dataset,
            estimator=name,
            repeat=repeat,
            fold=fold,
            n_labeled=n_labeled,
            n_unlabeled=n_unlabeled,
            scope=scope,
            loss=quadratic_loss(fitted.w, X, y) / n,
            error=error_rate(fitted.w, X, y),
            ratio=ratio,
            converged=bool(fitted.converged),
            wall_time_ms=float(fitted.wall_time_ms),
        ))
    return rows


def _default_labeled(ds: Dataset, cfg: ExperimentConfig) -> int:
    if cfg.n_labeled is not None:
        return cfg.n_labeled
    if cfg.protocol == "cross_validation":
        return ds.n_features + cfg.extra_labeled
    return max(2 * ds.n_features, 1)


def _loss_ratio_repeat(ds: Dataset, cfg: ExperimentConfig, repeat: int):
    n_labeled = _default_labeled(ds, cfg)
    split = sample_split(
        ds, n_labeled, cfg.n_unlabeled, cfg.n_test, repeat_seed(cfg.seed, repeat),
        unlabeled_with_replacement=True, test_with_replacement=True,
    )
    if cfg.standardize:
        split = standardize_split(split)

    fits, skipped = _fit_estimators(split, cfg, repeat, -1)
    if not fits:
        return [], skipped

    rows = []
    blocks = [
        (split.X_e, split.y_e_true, "train_all"),
        (split.X_u, split.y_u_true, "unlabeled_only"),
    ]
    if split.X_test is not None:
        blocks.append((split.X_test, split.y_test, "test"))
    for X, y, scope in blocks:
        rows += _block_rows(
            cfg, ds.name, fits, X, y, scope, repeat, -1,
            split.n_labeled, split.n_unlabeled, skipped,
        )
    return rows, skipped


def _learning_curve_counts(n_rows: int, n_labeled: int, cfg: ExperimentConfig) -> tuple[int, int]:
    """(test block size, unlabeled pool size) for the rows left after labeling."""
    rest = n_rows - n_labeled
    n_test = int(np.ceil(cfg.test_fraction * rest))
    return n_test, min(max(cfg.sizes), rest - n_test)


def learning_curve_splits(ds: Dataset, cfg: ExperimentConfig, repeat: int) -> list[SemiSplit]:
    """One split per unlabeled size, sharing the labeled set and the test block.

    The test block keeps at least `test_fraction` of the rows left after labeling.
    Unlabeled subsets are prefixes of one shuffled pool, so larger subsets
    contain the smaller ones. Sizes beyond the pool are clipped to it.
    """
    n_labeled = _default_labeled(ds, cfg)
    n_test, pool_size = _learning_curve_counts(ds.n_rows, n_labeled, cfg)
    if pool_size < 1:
        raise InsufficientRows(
            f"learning_curve needs unlabeled objects beyond a test block of {n_test} "
            f"and {n_labeled} labeled objects, got {ds.n_rows} rows"
        )

    rng = make_rng(repeat_seed(cfg.seed, repeat))
    labeled = rng.choice(ds.n_rows, size=n_labeled, replace=False)
    rest = np.setdiff1d(np.arange(ds.n_rows), labeled)
    # rng.choice without replacement returns the pool in random order
    pool = rng.choice(rest, size=pool_size, replace=False)
    test = np.setdiff1d(rest, pool)

    sizes = sorted({min(s, pool_size) for s in cfg.sizes})
    return [split_from_indices(ds, labeled, pool[:size], test) for size in sizes]


def _learning_curve_repeat(ds: Dataset, cfg: ExperimentConfig, repeat: int):
    rows, skipped = [], []
    for split in learning_curve_splits(ds, cfg, repeat):
        if cfg.standardize:
            split = standardize_split(split)
        fits, failures = _fit_estimators(split, cfg, repeat, -1)
        skipped += failures
        if not fits:
            continue
        rows += _block_rows(
            cfg, ds.name, fits, split.X_test, split.y_test, "test", repeat, -1,
            split.n_labeled, split.n_unlabeled, skipped,
        )
    return rows, skipped


def _cross_validation_repeat(ds: Dataset, cfg: ExperimentConfig, repeat: int):
    seed = repeat_seed(cfg.seed, repeat)
    n_labeled = _default_labeled(ds, cfg)
    folds = kfold_indices(ds.n_rows, cfg.n_folds, seed)
    rng = make_rng(seed, stream=1)

    names = list(cfg.estimators)
    scores = {name: np.full(ds.n_rows, np.nan) for name in ["supervised"] + names}
    converged = {name: True for name in scores}
    elapsed = {name: 0.0 for name in scores}
    hits = np.zeros(ds.n_rows, dtype=int)
    failed: set[str] = set()
    skipped: list[SkippedTrial] = []
    max_unlabeled = 0

    for i, held_out in enumerate(folds):
        train = np.concatenate([f for j, f in enumerate(folds) if j != i])
        if n_labeled > train.size:
            reason = f"{n_labeled} labeled objects requested from a training pool of {train.size}"
            logger.warning("Skipping repeat %d: %s", repeat, reason)
            return [], skipped + [SkippedTrial(repeat, i, "*", reason)]
        labeled = rng.choice(train, size=n_labeled, replace=False)
        unlabeled = np.setdiff1d(train, labeled)
        max_unlabeled = max(max_unlabeled, unlabeled.size)

        split = split_from_indices(ds, labeled, unlabeled, held_out)
        if cfg.standardize:
            split = standardize_split(split)
        fits, failures = _fit_estimators(split, cfg, repeat, i)
        skipped += failures
        hits[held_out] += 1
        for name in scores:
            if name not in fits:
                failed.add(name)
                continue
            scores[name][held_out] = decision_values(fits[name].w, split.X_test)
            converged[name] &= fits[name].converged
            elapsed[name] += fits[name].wall_time_ms

    if not np.all(hits == 1):
        raise AssertionError("cross-validation folds did not predict every object exactly once")
    if "supervised" in failed:
        return [], skipped

    y = ds.labels
    residual_sup = scores["supervised"] - y
    loss_sup = float(residual_sup @ residual_sup)
    rows = []
    for name in names:
        if name in failed:
            continue
        residual = scores[name] - y
        loss = float(residual @ residual)
        if loss_sup == 0.0:
            skipped.append(SkippedTrial(repeat, -1, name, "supervised loss is zero"))
            continue
        rows.append(ReportRow(
            protocol=cfg.protocol,
            dataset=ds.name,
            estimator=name,
            repeat=repeat,
            fold=-1,
            n_labeled=n_labeled,
            n_unlabeled=max_unlabeled,
            scope="test",
            loss=loss / ds.n_rows,
            error=float(np.mean((scores[name] >= DECISION_THRESHOLD).astype(float) != y)),
            ratio=loss / loss_sup,
            converged=converged[name],
            wall_time_ms=elapsed[name],
        ))
    return rows, skipped


_REPEAT_RUNNERS = {
    "loss_ratio": _loss_ratio_repeat,
    "learning_curve": _learning_curve_repeat,
    "cross_validation": _cross_validation_repeat,
}


def _run(ds: Dataset, cfg: ExperimentConfig) -> ExperimentReport:
    if ds.labels is None:
        raise DataError("experiments need a labeled dataset")
    if ds.has_missing:
        raise DataError("impute missing values before running experiments")

    runner = _REPEAT_RUNNERS[cfg.protocol]
    logger.info(
        "Running %s on %s: %d repeats, estimators %s, seed %d",
        cfg.protocol, ds.name, cfg.n_repeats, ",".join(cfg.estimators), cfg.seed,
    )

    def work(repeat):
        return runner(ds, cfg, repeat)

    if cfg.n_jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.n_jobs) as pool:
            results = list(pool.map(work, range(cfg.n_repeats)))
    else:
        results = [work(r) for r in range(cfg.n_repeats)]

    report = ExperimentReport(config=cfg, dataset=ds.name)
    for rows, skipped in results:
        report.rows.extend(rows)
        report.skipped.extend(skipped)
    report.rows.sort(key=_row_order(cfg))

    if report.skipped:
        logger.warning("%d fits skipped in %s", len(report.skipped), cfg.protocol)
    if not report.rows:
        raise AllTrialsFailed(f"every trial of {cfg.protocol} on {ds.name} failed")
    logger.info("%s produced %d rows", cfg.protocol, len(report.rows))
    return report


def _row_order(cfg: ExperimentConfig):
    rank = {name: i for i, name in enumerate(cfg.estimators)}

    def key(row: ReportRow):
        return (rank[row.estimator], row.repeat, row.fold, row.n_unlabeled, SCOPE_ORDER[row.scope])

    return key


def audit_guarantees(rows: list[ReportRow], tolerance: float = 1e-9) -> int:
    """Fail on any converged projection row whose loss ratio exceeds 1 + tolerance.

    Checked on all training objects for the projection estimator and on the
    unlabeled objects for the transductive estimator. Returns the number of rows
    audited.
    """
    guarded = {("projection", "train_all"), ("transductive", "unlabeled_only")}
    audited = 0
    for row in rows:
        if (row.estimator, row.scope) not in guarded:
            continue
        audited += 1
        if row.converged and row.ratio > 1.0 + tolerance:
            raise GuaranteeViolation(
                f"{row.estimator} loss ratio {row.ratio!r} > 1 on {row.scope} "
                f"(dataset {row.dataset}, repeat {row.repeat})"
            )
    logger.info("Loss guarantee holds on %d audited rows", audited)
    return audited


def run_loss_ratio(ds: Dataset, cfg: ExperimentConfig) -> ExperimentReport:
    """2d labeled objects, unlabeled and test objects drawn with replacement."""
    if cfg.protocol != "loss_ratio":
        raise ValueError("config is not a loss_ratio config")
    if ds.n_rows < 2 * (ds.n_features + 1):
        raise InsufficientRows(f"loss_ratio needs at least {2 * (ds.n_features + 1)} rows, got {ds.n_rows}")
    report = _run(ds, cfg)
    audit_guarantees(report.rows, cfg.audit_tolerance)
    return report


def run_learning_curve(ds: Dataset, cfg: ExperimentConfig) -> ExperimentReport:
    """Test-set loss and error for growing unlabeled subsets."""
    if cfg.protocol != "learning_curve":
        raise ValueError("config is not a learning_curve config")
    n_labeled = _default_labeled(ds, cfg)
    if n_labeled >= ds.n_rows:
        raise InsufficientRows(f"learning_curve needs more than {n_labeled} rows, got {ds.n_rows}")
    n_test, pool_size = _learning_curve_counts(ds.n_rows, n_labeled, cfg)
    if pool_size < 1:
        raise InsufficientRows(
            f"learning_curve leaves no unlabeled pool: {ds.n_rows} rows, {n_labeled} labeled, "
            f"{n_test} held out for testing"
        )
    return _run(ds, cfg)


def run_cross_validation(ds: Dataset, cfg: ExperimentConfig) -> ExperimentReport:
    """k-fold predictions with d+5 labeled objects per training portion."""
    if cfg.protocol != "cross_validation":
        raise ValueError("config is not a cross_validation config")
    if ds.n_rows < cfg.n_folds:
        raise InsufficientRows(f"cross_validation needs at least {cfg.n_folds} rows")
    return _run(ds, cfg)


def run_experiment(ds: Dataset, cfg: ExperimentConfig) -> ExperimentReport:
    runners = {
        "loss_ratio": run_loss_ratio,
        "learning_curve": run_learning_curve,
        "cross_validation": run_cross_validation,
    }
    return runners[cfg.protocol](ds, cfg)
