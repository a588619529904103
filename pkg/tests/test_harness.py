"""Tests for src/harness.py."""

import numpy as np
import pytest

from src.data import Dataset
from src.errors import AllTrialsFailed, GuaranteeViolation, InsufficientRows
from src.harness import (
    ExperimentConfig,
    ReportRow,
    audit_guarantees,
    learning_curve_splits,
    run_cross_validation,
    run_experiment,
    run_learning_curve,
    run_loss_ratio,
)
from tests.conftest import TIGHT_QP, gaussian_dataset


@pytest.fixture
def small_ds():
    return gaussian_dataset(n=150, d=3, seed=21)


def loss_ratio_cfg(**overrides):
    values = dict(
        protocol="loss_ratio",
        estimators=("supervised", "self_learning", "projection", "transductive", "oracle"),
        n_repeats=4,
        seed=5,
        n_unlabeled=60,
        n_test=40,
        qp_options=TIGHT_QP,
        record_timing=False,
    )
    values.update(overrides)
    return ExperimentConfig(**values)


def row(**overrides):
    values = dict(
        protocol="loss_ratio", dataset="d", estimator="projection", repeat=0, fold=-1,
        n_labeled=6, n_unlabeled=10, scope="train_all", loss=0.1, error=0.1, ratio=0.9,
        converged=True, wall_time_ms=0.0,
    )
    values.update(overrides)
    return ReportRow(**values)


class TestExperimentConfig:
    def test_from_config_defaults(self):
        cfg = ExperimentConfig.from_config("loss_ratio")
        assert cfg.n_repeats == 100
        assert cfg.n_unlabeled == 1000
        assert cfg.estimators == ("supervised", "self_learning", "projection", "oracle")

    def test_overrides_win_and_none_is_ignored(self):
        cfg = ExperimentConfig.from_config("learning_curve", n_repeats=3, sizes=(2, 4), seed=None)
        assert cfg.n_repeats == 3
        assert cfg.sizes == (2, 4)
        assert cfg.seed == 0

    def test_cross_validation_defaults(self):
        cfg = ExperimentConfig.from_config("cross_validation")
        assert cfg.n_folds == 10
        assert cfg.extra_labeled == 5

    def test_learning_curve_and_estimator_defaults(self):
        cfg = ExperimentConfig.from_config("learning_curve")
        assert cfg.test_fraction == 0.5
        assert cfg.self_learning_max_iter == 100

    def test_rejects_bad_test_fraction(self):
        with pytest.raises(ValueError, match="test_fraction"):
            ExperimentConfig.from_config("learning_curve", test_fraction=1.0)

    def test_rejects_unknown_estimator(self):
        with pytest.raises(ValueError, match="Unknown estimators"):
            loss_ratio_cfg(estimators=("supervised", "magic"))

    def test_rejects_unknown_protocol(self):
        with pytest.raises(ValueError):
            ExperimentConfig.from_config("bootstrap")


class TestLossRatio:
    def test_row_layout(self, small_ds):
        report = run_loss_ratio(small_ds, loss_ratio_cfg())
        # 5 estimators x 4 repeats x 3 scopes
        assert len(report.rows) == 60
        assert {r.scope for r in report.rows} == {"train_all", "unlabeled_only", "test"}
        assert all(r.n_labeled == 6 for r in report.rows)
        assert all(r.wall_time_ms == 0.0 for r in report.rows)

    def test_supervised_ratio_is_one(self, small_ds):
        report = run_loss_ratio(small_ds, loss_ratio_cfg())
        assert all(r.ratio == 1.0 for r in report.rows if r.estimator == "supervised")

    def test_projection_never_worse_on_training_objects(self, small_ds):
        report = run_loss_ratio(small_ds, loss_ratio_cfg(n_repeats=10))
        rows = [r for r in report.rows if r.estimator == "projection" and r.scope == "train_all"]
        assert len(rows) == 10
        assert all(r.ratio <= 1.0 + 1e-9 for r in rows if r.converged)

    def test_rows_sorted_by_estimator_then_repeat(self, small_ds):
        report = run_loss_ratio(small_ds, loss_ratio_cfg())
        order = [(r.estimator, r.repeat) for r in report.rows]
        names = list(loss_ratio_cfg().estimators)
        assert order == sorted(order, key=lambda k: (names.index(k[0]), k[1]))

    def test_deterministic(self, small_ds):
        a = run_loss_ratio(small_ds, loss_ratio_cfg())
        b = run_loss_ratio(small_ds, loss_ratio_cfg())
        assert a.rows == b.rows

    def test_threads_do_not_change_results(self, small_ds):
        a = run_loss_ratio(small_ds, loss_ratio_cfg())
        b = run_loss_ratio(small_ds, loss_ratio_cfg(n_jobs=3))
        assert a.rows == b.rows

    def test_seed_changes_results(self, small_ds):
        a = run_loss_ratio(small_ds, loss_ratio_cfg(seed=1))
        b = run_loss_ratio(small_ds, loss_ratio_cfg(seed=2))
        assert a.rows != b.rows

    def test_singular_supervised_fit_skips_every_trial(self):
        ds = gaussian_dataset(n=40, d=3, seed=0)
        ds = Dataset(
            features=np.hstack([ds.features[:, :1], np.zeros((40, 1))]),
            labels=ds.labels, feature_names=["a", "b"], label_name="y",
        )
        with pytest.raises(AllTrialsFailed):
            run_loss_ratio(ds, loss_ratio_cfg(estimators=("supervised", "projection")))

    def test_default_config_passes_audit(self):
        ds = gaussian_dataset(n=200, d=4, seed=0, separation=1.5)
        cfg = ExperimentConfig.from_config(
            "loss_ratio", estimators=("supervised", "projection", "transductive"),
            n_unlabeled=300, n_test=0, record_timing=False,
        )
        report = run_loss_ratio(ds, cfg)
        assert audit_guarantees(report.rows, cfg.audit_tolerance) == 2 * cfg.n_repeats

    def test_reads_no_config_while_fitting(self, small_ds, monkeypatch):
        cfg = loss_ratio_cfg()

        def forbidden(*args, **kwargs):
            raise AssertionError("config read during an experiment")

        monkeypatch.setattr("src.estimators.get_config_value", forbidden)
        assert len(run_loss_ratio(small_ds, cfg).rows) == 60

    def test_too_few_rows(self):
        with pytest.raises(InsufficientRows):
            run_loss_ratio(gaussian_dataset(n=6, d=3), loss_ratio_cfg())

    def test_standardize(self, small_ds):
        report = run_loss_ratio(small_ds, loss_ratio_cfg(standardize=True))
        assert len(report.rows) == 60


class TestAudit:
    def test_passes_good_rows(self):
        rows = [row(), row(estimator="transductive", scope="unlabeled_only", ratio=1.0)]
        assert audit_guarantees(rows) == 2

    def test_raises_on_violation(self):
        with pytest.raises(GuaranteeViolation):
            audit_guarantees([row(ratio=1.001)])

    def test_ignores_unconverged_and_unguarded_rows(self):
        rows = [
            row(ratio=1.5, converged=False),
            row(ratio=1.5, scope="test"),
            row(ratio=1.5, estimator="self_learning"),
        ]
        assert audit_guarantees(rows) == 1


class TestLearningCurve:
    def test_one_row_per_size(self, small_ds):
        cfg = ExperimentConfig(
            protocol="learning_curve",
            estimators=("supervised", "projection", "icls"),
            n_repeats=3,
            sizes=(2, 8, 32),
            record_timing=False,
        )
        report = run_learning_curve(small_ds, cfg)
        assert len(report.rows) == 3 * 3 * 3
        assert {r.n_unlabeled for r in report.rows} == {2, 8, 32}
        assert {r.scope for r in report.rows} == {"test"}

    def test_sizes_clipped_to_available_rows(self):
        ds = gaussian_dataset(n=30, d=2, seed=3)
        cfg = ExperimentConfig(
            protocol="learning_curve", estimators=("supervised",), n_repeats=1,
            sizes=(4, 1000), record_timing=False,
        )
        report = run_learning_curve(ds, cfg)
        # 4 labeled, 26 left: 13 held out for testing, 13 in the unlabeled pool
        assert sorted(r.n_unlabeled for r in report.rows) == [4, 13]

    def test_test_block_keeps_half_the_remaining_rows(self):
        ds = gaussian_dataset(n=351, d=34, seed=1)
        cfg = ExperimentConfig.from_config("learning_curve", estimators=("supervised",))
        splits = learning_curve_splits(ds, cfg, repeat=0)
        # 68 labeled, 283 left: 142 test objects, 141 in the pool
        assert [s.n_unlabeled for s in splits] == [2, 4, 8, 16, 32, 64, 128, 141]
        assert all(s.X_test.shape[0] == 142 for s in splits)
        assert all(np.array_equal(s.indices["test"], splits[0].indices["test"]) for s in splits)

    def test_unlabeled_subsets_are_nested(self, small_ds):
        cfg = ExperimentConfig(
            protocol="learning_curve", estimators=("supervised",), n_repeats=1,
            sizes=(2, 8, 32), seed=9,
        )
        splits = learning_curve_splits(small_ds, cfg, repeat=0)
        for smaller, larger in zip(splits, splits[1:]):
            assert np.array_equal(smaller.indices["labeled"], larger.indices["labeled"])
            size = smaller.n_unlabeled
            assert np.array_equal(larger.indices["unlabeled"][:size], smaller.indices["unlabeled"])
            assert not set(larger.indices["unlabeled"]) & set(larger.indices["test"])

    def test_too_few_rows(self):
        cfg = ExperimentConfig(protocol="learning_curve", estimators=("supervised",), n_repeats=1)
        with pytest.raises(InsufficientRows):
            run_learning_curve(gaussian_dataset(n=5, d=2), cfg)

    def test_deterministic(self, small_ds):
        cfg = ExperimentConfig(
            protocol="learning_curve", estimators=("supervised", "projection"),
            n_repeats=2, sizes=(4, 16), record_timing=False,
        )
        assert run_learning_curve(small_ds, cfg).rows == run_learning_curve(small_ds, cfg).rows


class TestCrossValidation:
    def cfg(self, **overrides):
        values = dict(
            protocol="cross_validation",
            estimators=("supervised", "self_learning", "projection", "icls"),
            n_repeats=2,
            n_folds=5,
            record_timing=False,
            qp_options=TIGHT_QP,
        )
        values.update(overrides)
        return ExperimentConfig(**values)

    def test_one_row_per_estimator_and_repeat(self, small_ds):
        report = run_cross_validation(small_ds, self.cfg())
        assert len(report.rows) == 4 * 2
        assert all(r.fold == -1 and r.scope == "test" for r in report.rows)
        # d + 5 labeled objects per fold
        assert all(r.n_labeled == 8 for r in report.rows)
        # 120 training objects per fold
        assert all(r.n_unlabeled == 112 for r in report.rows)

    def test_supervised_ratio_is_one(self, small_ds):
        report = run_cross_validation(small_ds, self.cfg())
        assert all(r.ratio == 1.0 for r in report.rows if r.estimator == "supervised")

    def test_errors_are_fractions(self, small_ds):
        report = run_cross_validation(small_ds, self.cfg())
        assert all(0.0 <= r.error <= 1.0 for r in report.rows)

    def test_too_few_rows(self):
        with pytest.raises(InsufficientRows):
            run_cross_validation(gaussian_dataset(n=4, d=2), self.cfg())

    def test_deterministic(self, small_ds):
        assert run_cross_validation(small_ds, self.cfg()).rows == run_cross_validation(small_ds, self.cfg()).rows


def test_run_experiment_dispatches(small_ds):
    report = run_experiment(small_ds, loss_ratio_cfg(n_repeats=1))
    assert report.config.protocol == "loss_ratio"
    assert report.dataset == "gauss"
