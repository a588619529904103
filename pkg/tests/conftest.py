"""Shared test fixtures."""

import numpy as np
import pandas as pd
import pytest

import src.config as config_module
from src.data import Dataset, SemiSplit, augment_bias, sample_split
from src.qp import QPOptions

# Tight enough that solver error stays far below the 1e-9 guarantee tolerance.
TIGHT_QP = QPOptions(tol=1e-12, max_iter=200_000)


def gaussian_dataset(n=400, d=5, seed=0, separation=1.0, name="gauss"):
    """Two Gaussian classes with means at -separation/2 and +separation/2 on every axis."""
    rng = np.random.default_rng(seed)
    labels = (np.arange(n) % 2).astype(float)
    means = np.where(labels[:, None] == 1.0, separation / 2, -separation / 2)
    features = means + rng.standard_normal((n, d))
    return Dataset(
        features=features,
        labels=labels,
        feature_names=[f"x{j}" for j in range(d)],
        label_name="y",
        name=name,
        label_values=("neg", "pos"),
    )


def gaussian_split(seed, d=5, n_unlabeled=50, n_test=0):
    """2d labeled and n_unlabeled unlabeled objects from a fresh Gaussian dataset."""
    ds = gaussian_dataset(n=2 * d + n_unlabeled + n_test + 10, d=d, seed=seed)
    return sample_split(ds, 2 * d, n_unlabeled, n_test, seed)


@pytest.fixture(autouse=True)
def fresh_config(monkeypatch):
    """Read the repository config.yml, never a cached or user-supplied one."""
    monkeypatch.setenv("CONFIG_FILE_PATH", str(config_module.CONFIG_FILE_PATH))
    config_module.reset_config_cache()
    yield
    config_module.reset_config_cache()


@pytest.fixture
def gauss_ds():
    return gaussian_dataset()


@pytest.fixture
def gauss_split():
    return gaussian_split(seed=7, n_test=40)


@pytest.fixture
def line_split():
    """One feature; labeled objects at 0..3, unlabeled objects predicted inside [0, 1]."""
    X = augment_bias(np.array([0.0, 1.0, 2.0, 3.0]))
    y = np.array([0.0, 0.0, 1.0, 1.0])
    X_u = augment_bias(np.array([1.0, 1.5, 2.0]))
    return SemiSplit(X=X, y=y, X_u=X_u, y_u_true=np.array([0.0, 1.0, 1.0]))


@pytest.fixture
def write_csv(tmp_path):
    """Write a DataFrame (or raw text) to a CSV file under tmp_path and return its path."""

    def _write(content, name="data.csv"):
        path = tmp_path / name
        if isinstance(content, pd.DataFrame):
            content.to_csv(path, index=False)
        else:
            path.write_text(content, encoding="utf-8")
        return path

    return _write


@pytest.fixture
def gauss_csv(write_csv):
    ds = gaussian_dataset(n=120, d=3, seed=11)
    df = pd.DataFrame(ds.features, columns=ds.feature_names)
    df["label"] = np.where(ds.labels == 1.0, "pos", "neg")
    return write_csv(df, "gauss.csv")
