import numpy as np
import pytest

from mtal import metrics as M
from mtal.data_model import Dataset
from mtal.errors import DataError, ShapeError


def brute_force_pehe(true_po, est_po):
    """Independent oracle: explicit per-unit loop."""
    total = 0.0
    for i in range(len(true_po)):
        ite_t = true_po[i][1] - true_po[i][0]
        ite_e = est_po[i][1] - est_po[i][0]
        total += (ite_t - ite_e) ** 2
    return total / len(true_po)


def brute_force_ate(true_po, est_po):
    n = len(true_po)
    ate_t = sum(r[1] - r[0] for r in true_po) / n
    ate_e = sum(r[1] - r[0] for r in est_po) / n
    return abs(ate_t - ate_e)


def brute_force_mse(true_po, est_po):
    n, k = np.asarray(true_po).shape
    total = 0.0
    for i in range(n):
        for j in range(k):
            total += (true_po[i][j] - est_po[i][j]) ** 2
    return total / (n * k)


class TestPehe:
    def test_perfect_estimator(self):
        po = np.array([[0.0, 1.0], [2.0, 5.0]])
        eps, root = M.pehe(po, po.copy())
        assert eps == 0.0 and root == 0.0

    def test_two_unit_hand_case(self):
        true_po = np.array([[0.0, 1.0], [0.0, -1.0]])  # effects (1, -1)
        est_po = np.zeros((2, 2))  # effects (0, 0)
        eps, root = M.pehe(true_po, est_po)
        assert eps == 1.0 and root == 1.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            M.pehe(np.zeros((3, 2)), np.zeros((4, 2)))

    def test_requires_two_columns(self):
        with pytest.raises(ShapeError):
            M.pehe(np.zeros((3, 3)), np.zeros((3, 3)))

    def test_invariant_under_common_shift(self):
        rng = np.random.default_rng(0)
        true_po, est_po = rng.normal(size=(5, 2)), rng.normal(size=(5, 2))
        base = M.pehe(true_po, est_po)[0]
        shifted = M.pehe(true_po + 7.0, est_po + 7.0)[0]
        assert shifted == pytest.approx(base, rel=1e-12)


class TestAteError:
    def test_perfect_estimator(self):
        po = np.array([[0.0, 2.0], [1.0, 0.0]])
        assert M.ate_error(po, po.copy()) == 0.0

    def test_hand_case(self):
        true_po = np.array([[0.0, 1.0], [0.0, -1.0]])  # ATE 0
        est_po = np.array([[0.0, 1.0], [0.0, 1.0]])  # ATE 1
        assert M.ate_error(true_po, est_po) == 1.0

    def test_invariant_under_common_shift(self):
        rng = np.random.default_rng(1)
        true_po, est_po = rng.normal(size=(6, 2)), rng.normal(size=(6, 2))
        assert M.ate_error(true_po + 3.0, est_po + 3.0) == pytest.approx(
            M.ate_error(true_po, est_po), rel=1e-12
        )


class TestMultiMetric:
    def test_k2_equals_binary_bit_exactly(self):
        rng = np.random.default_rng(2)
        true_po, est_po = rng.normal(size=(7, 2)), rng.normal(size=(7, 2))
        assert M.multi_metric(true_po, est_po, "pehe") == M.pehe(true_po, est_po)[0]
        assert M.multi_metric(true_po, est_po, "ate") == M.ate_error(true_po, est_po)

    def test_perfect_estimator_any_k(self):
        rng = np.random.default_rng(3)
        po = rng.normal(size=(5, 4))
        assert M.multi_metric(po, po.copy(), "pehe") == 0.0
        assert M.multi_metric(po, po.copy(), "ate") == 0.0

    def test_k3_equals_mean_of_pairs(self):
        rng = np.random.default_rng(4)
        true_po, est_po = rng.normal(size=(2, 3)), rng.normal(size=(2, 3))
        pairs = [(0, 1), (0, 2), (1, 2)]
        expected = np.mean(
            [M.pehe(true_po[:, list(p)], est_po[:, list(p)])[0] for p in pairs]
        )
        assert M.multi_metric(true_po, est_po, "pehe") == pytest.approx(expected, rel=1e-14)

    def test_k1_rejected(self):
        with pytest.raises(DataError):
            M.multi_metric(np.zeros((3, 1)), np.zeros((3, 1)), "pehe")

    def test_unknown_metric_rejected(self):
        with pytest.raises(DataError):
            M.multi_metric(np.zeros((3, 2)), np.zeros((3, 2)), "mse")


class TestMsePotential:
    def test_perfect(self):
        po = np.arange(8.0).reshape(4, 2)
        assert M.mse_potential(po, po.copy()) == 0.0

    def test_hand_case(self):
        assert M.mse_potential([[1.0, 1.0]], [[0.0, 1.0]]) == 0.5

    def test_constant_one_estimator_reduction(self):
        rng = np.random.default_rng(5)
        true_po = np.cos(rng.normal(size=(10, 3)) ** 2)
        est_po = np.ones_like(true_po)
        assert M.mse_potential(true_po, est_po) == pytest.approx(
            float(np.mean((1.0 - true_po) ** 2)), rel=1e-14
        )


def tiny_dataset(po, group):
    po = np.asarray(po, dtype=float)
    group = np.asarray(group)
    return Dataset(
        covariates=np.zeros((po.shape[0], 1)),
        group=group,
        factual_outcome=po[np.arange(po.shape[0]), group],
        group_count=po.shape[1],
        potential_outcomes=po,
    )


class TestTgor:
    def test_all_ones(self):
        ds = tiny_dataset([[1.0, 1.0], [1.0, 1.0]], [0, 1])
        assert M.tgor(ds.potential_outcomes, ds) == 1.0

    def test_four_cell_hand_case(self):
        ds = tiny_dataset([[1.0, 0.0], [0.0, 1.0]], [0, 1])
        assert M.tgor(ds.potential_outcomes, ds) == 0.5

    def test_group_level_mean(self):
        ds = tiny_dataset([[1.0, 0.5], [0.0, 0.5], [1.0, 0.5]], [0, 0, 0])
        assert M.tgor(None, ds, group=0) == pytest.approx(2.0 / 3.0)

    def test_group_level_ignores_matrix(self):
        ds = tiny_dataset([[1.0, 9.0], [0.0, 9.0]], [0, 0])
        assert M.tgor(None, ds, group=0) == 0.5

    def test_empty_group_rejected(self):
        ds = tiny_dataset([[1.0, 0.0]], [0])
        with pytest.raises(DataError):
            M.tgor(None, ds, group=1)

    def test_missing_matrix_rejected(self):
        ds = tiny_dataset([[1.0, 0.0]], [0])
        with pytest.raises(DataError, match="impute"):
            M.tgor(None, ds)

    def test_nan_matrix_rejected(self):
        ds = tiny_dataset([[1.0, 0.0]], [0])
        with pytest.raises(DataError, match="fully populated"):
            M.tgor(np.array([[1.0, np.nan]]), ds)

    def test_mutation_level_equals_column_mean_average(self):
        rng = np.random.default_rng(6)
        po = rng.normal(size=(9, 3))
        ds = tiny_dataset(po, rng.integers(0, 3, size=9))
        assert M.tgor(po, ds) == pytest.approx(float(np.mean(po.mean(axis=0))), rel=1e-14)


class TestBruteForceAgreement:
    """Randomized agreement with independent loop-based oracles."""

    def test_random_tiny_instances(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            n = int(rng.integers(1, 7))
            k = int(rng.integers(2, 5))
            true_po = rng.normal(size=(n, k))
            est_po = rng.normal(size=(n, k))
            assert M.mse_potential(true_po, est_po) == pytest.approx(
                brute_force_mse(true_po, est_po), abs=1e-12
            )
            if k == 2:
                eps, _ = M.pehe(true_po, est_po)
                assert eps == pytest.approx(brute_force_pehe(true_po, est_po), abs=1e-12)
                assert M.ate_error(true_po, est_po) == pytest.approx(
                    brute_force_ate(true_po, est_po), abs=1e-12
                )


def test_summarize_mean_and_std_over_replicates():
    reports = [
        M.MetricsReport("d", "m", metrics={"mse": v}, replicate=i)
        for i, v in enumerate([1.0, 3.0])
    ]
    reports.append(M.MetricsReport("d", "other", metrics={"mse": 7.0}))
    rows = M.summarize(reports)
    first = next(r for r in rows if r["model_id"] == "m")
    assert first["mean"] == 2.0 and first["std"] == 1.0 and first["count"] == 2
    other = next(r for r in rows if r["model_id"] == "other")
    assert other["mean"] == 7.0 and other["count"] == 1


def test_report_rows_order_and_metadata():
    report = M.MetricsReport(
        dataset_id="d1", model_id="m1", replicate=3, seed=7,
        metrics={"mse": 0.5, "tgor_mu": 0.1},
    )
    rows = report.rows()
    assert [r["metric"] for r in rows] == ["mse", "tgor_mu"]
    assert rows[0]["dataset_id"] == "d1" and rows[0]["replicate"] == 3
