"""
Data Module
Loads labeled CSV tables, imputes missing values, and draws seeded splits
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from src.errors import AllMissing, InsufficientRows, LabelCardinality, ParseError

logger = logging.getLogger(__name__)

SEED_MODULUS = 2**64


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix (no bias column) with optional {0,1} labels."""

    features: np.ndarray
    labels: np.ndarray | None
    feature_names: list[str]
    label_name: str
    name: str = "dataset"
    label_values: tuple[str, str] | None = None

    def __post_init__(self):
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if self.labels is not None:
            if len(self.labels) != self.features.shape[0]:
                raise ValueError("labels and features disagree on the number of rows")
            if not np.isin(self.labels, (0.0, 1.0)).all():
                raise ValueError("labels must be 0 or 1")

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def has_missing(self) -> bool:
        return bool(np.isnan(self.features).any())


@dataclass(frozen=True, eq=False)
class SemiSplit:
    """Labeled block, unlabeled block, and optional test block, all bias-augmented.

    y_u_true holds the hidden labels of the unlabeled objects; only oracle fits and
    evaluation may read it.
    """

    X: np.ndarray
    y: np.ndarray
    X_u: np.ndarray
    y_u_true: np.ndarray | None = None
    X_test: np.ndarray | None = None
    y_test: np.ndarray | None = None
    indices: dict[str, np.ndarray] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.X.ndim != 2 or self.X_u.ndim != 2:
            raise ValueError("X and X_u must be 2-D")
        if self.X.shape[0] < 1:
            raise ValueError("a split needs at least one labeled object")
        if self.X.shape[0] != len(self.y):
            raise ValueError("X and y disagree on the number of rows")
        cols = self.X.shape[1]
        blocks = {"X": self.X, "X_u": self.X_u}
        if self.X_test is not None:
            blocks["X_test"] = self.X_test
            if self.y_test is None or len(self.y_test) != self.X_test.shape[0]:
                raise ValueError("X_test requires y_test of matching length")
        for name, block in blocks.items():
            if block.shape[1] != cols:
                raise ValueError(f"{name} has {block.shape[1]} columns, expected {cols}")
            if cols == 0 or not np.all(block[:, 0] == 1.0):
                raise ValueError(f"first column of {name} must be the bias column of ones")
        if self.y_u_true is not None and len(self.y_u_true) != self.X_u.shape[0]:
            raise ValueError("y_u_true and X_u disagree on the number of rows")

    @property
    def n_labeled(self) -> int:
        return self.X.shape[0]

    @property
    def n_unlabeled(self) -> int:
        return self.X_u.shape[0]

    @property
    def X_e(self) -> np.ndarray:
        return np.vstack([self.X, self.X_u])

    @property
    def y_e_true(self) -> np.ndarray:
        if self.y_u_true is None:
            raise ValueError("split carries no true unlabeled labels")
        return np.concatenate([self.y, self.y_u_true])


def load_csv(path: str | Path, label_column: str, name: str | None = None) -> Dataset:
    """Read a headed CSV; the label column is mapped to {0,1} in lexicographic order."""
    path = Path(path)
    try:
        df = pd.read_csv(
            path,
            dtype={label_column: str},
            keep_default_na=False,
            na_values=[""],
            skip_blank_lines=True,
            encoding="utf-8",
        )
    except pd.errors.EmptyDataError as e:
        raise ParseError(f"{path} is empty") from e
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise ParseError(f"Malformed CSV {path}: {e}") from e

    columns = [str(c) for c in df.columns]
    if label_column not in columns:
        if any(_looks_numeric(c) for c in columns):
            raise ParseError(f"{path} has no header row")
        raise ParseError(f"Label column '{label_column}' not found in {path}")

    raw_labels = df[label_column]
    if raw_labels.isna().any():
        raise ParseError(f"Label column '{label_column}' has empty cells")
    values = sorted(raw_labels.unique())
    if len(values) != 2:
        raise LabelCardinality(
            f"Label column '{label_column}' has {len(values)} distinct values, expected 2"
        )
    labels = (raw_labels == values[1]).to_numpy(dtype=float)

    feature_df = df.drop(columns=[label_column])
    try:
        if feature_df.shape[1]:
            feature_df = feature_df.apply(pd.to_numeric, errors="raise")
    except (ValueError, TypeError) as e:
        raise ParseError(f"Non-numeric feature value in {path}: {e}") from e

    features = feature_df.to_numpy(dtype=float)
    n_missing = int(np.isnan(features).sum())
    logger.info(
        "Loaded %s: %d rows, %d features, labels %s->0 %s->1, %d missing cells",
        path.name, features.shape[0], features.shape[1], values[0], values[1], n_missing,
    )
    return Dataset(
        features=features,
        labels=labels,
        feature_names=[str(c) for c in feature_df.columns],
        label_name=label_column,
        name=name or path.stem,
        label_values=(values[0], values[1]),
    )


def _looks_numeric(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def impute_median(ds: Dataset) -> Dataset:
    """Fill missing cells with the column median of the observed cells."""
    if not ds.has_missing:
        return ds

    features = ds.features.copy()
    missing = np.isnan(features)
    for j in np.flatnonzero(missing.any(axis=0)):
        observed = features[~missing[:, j], j]
        if observed.size == 0:
            raise AllMissing(f"Column '{ds.feature_names[j]}' is entirely missing")
        features[missing[:, j], j] = np.median(observed)

    logger.info("Imputed %d missing cells with column medians", int(missing.sum()))
    return replace(ds, features=features)


def augment_bias(features: np.ndarray) -> np.ndarray:
    """Prepend a column of ones."""
    features = np.asarray(features, dtype=float)
    if features.ndim == 1:
        features = features.reshape(-1, 1)
    return np.hstack([np.ones((features.shape[0], 1)), features])


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """PCG64 generator for a 64-bit seed; distinct streams are independent."""
    if not 0 <= int(seed) < SEED_MODULUS:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.PCG64(sequence))


def repeat_seed(base_seed: int, repeat: int) -> int:
    """Seed of repeat r: base + r, wrapped to 64 bits."""
    return (int(base_seed) + int(repeat)) % SEED_MODULUS


def sample_split(
    ds: Dataset,
    n_labeled: int,
    n_unlabeled: int,
    n_test: int,
    seed: int,
    unlabeled_with_replacement: bool = False,
    test_with_replacement: bool = False,
) -> SemiSplit:
    """Draw labeled, unlabeled, and test objects from a labeled dataset.

    Labeled objects are always drawn without replacement. With replacement,
    unlabeled and test objects come from the full dataset; without, from the
    rows not drawn so far.
    """
    if ds.labels is None:
        raise ValueError("sample_split needs a labeled dataset")
    if ds.has_missing:
        raise ValueError("impute missing values before sampling")
    if min(n_labeled, n_unlabeled, n_test) < 0:
        raise ValueError("sample sizes must be non-negative")
    if n_labeled < 1:
        raise ValueError("at least one labeled object is required")
    if n_labeled > ds.n_rows:
        raise InsufficientRows(f"Requested {n_labeled} labeled objects from {ds.n_rows} rows")
    if n_labeled <= ds.n_features + 1:
        logger.debug("n_labeled=%d does not exceed d+1=%d", n_labeled, ds.n_features + 1)

    rng = make_rng(seed)
    pool = np.arange(ds.n_rows)
    labeled = rng.choice(pool, size=n_labeled, replace=False)
    pool = np.setdiff1d(pool, labeled)

    unlabeled, pool = _draw(rng, ds.n_rows, pool, n_unlabeled, unlabeled_with_replacement, "unlabeled")
    test, _ = _draw(rng, ds.n_rows, pool, n_test, test_with_replacement, "test")

    return split_from_indices(ds, labeled, unlabeled, test if n_test else None)


def split_from_indices(
    ds: Dataset,
    labeled: np.ndarray,
    unlabeled: np.ndarray,
    test: np.ndarray | None = None,
) -> SemiSplit:
    """Assemble a bias-augmented split from row indices of a labeled dataset."""
    if ds.labels is None:
        raise ValueError("splits need a labeled dataset")
    labeled = np.asarray(labeled, dtype=int)
    unlabeled = np.asarray(unlabeled, dtype=int)
    X_all = augment_bias(ds.features)
    indices = {"labeled": labeled, "unlabeled": unlabeled}
    X_test = y_test = None
    if test is not None:
        test = np.asarray(test, dtype=int)
        X_test, y_test = X_all[test], ds.labels[test]
        indices["test"] = test
    return SemiSplit(
        X=X_all[labeled],
        y=ds.labels[labeled],
        X_u=X_all[unlabeled],
        y_u_true=ds.labels[unlabeled],
        X_test=X_test,
        y_test=y_test,
        indices=indices,
    )


def _draw(rng, n_rows, pool, size, with_replacement, what):
    if with_replacement:
        return rng.integers(0, n_rows, size=size), pool
    if size > pool.size:
        raise InsufficientRows(f"Requested {size} {what} objects, only {pool.size} rows left")
    drawn = rng.choice(pool, size=size, replace=False)
    return drawn, np.setdiff1d(pool, drawn)


def kfold_indices(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Partition range(n) into k shuffled folds whose sizes differ by at most one."""
    if k < 2:
        raise ValueError("k must be at least 2")
    if n < k:
        raise ValueError(f"cannot split {n} objects into {k} folds")
    permutation = make_rng(seed).permutation(n)
    return [np.sort(fold) for fold in np.array_split(permutation, k)]


def standardize_split(split: SemiSplit) -> SemiSplit:
    """Z-score the non-bias columns with labeled+unlabeled statistics.

    The test block is transformed with the same statistics. Constant columns are
    centered only.
    """
    X_train = split.X_e[:, 1:]
    mean = X_train.mean(axis=0)
    std = X_train.std(axis=0)
    std[std == 0] = 1.0

    def scale(block):
        if block is None:
            return None
        scaled = block.copy()
        scaled[:, 1:] = (block[:, 1:] - mean) / std
        return scaled

    return replace(split, X=scale(split.X), X_u=scale(split.X_u), X_test=scale(split.X_test))
