"""Depth evaluation metrics: hand-computed identities and invariants."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from depthcal import DepthMap
from depthcal.errors import DataError, DomainError
from depthcal.metrics import EvalConfig, MetricsReport, aggregate_metrics, compute_metrics

CFG = EvalConfig(min_depth=0.001, max_depth=10.0)

LOG10_E = 0.4342944819032518  # mpmath

# kept small enough that e * D stays below max_depth, so clamping is inert
D33 = DepthMap(values=(np.arange(9, dtype=np.float64).reshape(3, 3) + 1.0) / 3.0)


class TestHandCases:
    def test_identity(self):
        r = compute_metrics(D33, D33, CFG)
        assert r.abs_rel == 0.0
        assert r.rmse == 0.0
        assert r.rmse_log == 0.0
        assert r.log10 == 0.0
        assert (r.d1, r.d2, r.d3) == (1.0, 1.0, 1.0)
        assert r.n_pixels == 9

    def test_constant_ratio_one_point_one(self):
        pred = DepthMap(values=1.1 * D33.values)
        r = compute_metrics(pred, D33, CFG)
        assert r.abs_rel == pytest.approx(0.1, abs=1e-12)
        assert r.d1 == 1.0  # 1.1 < 1.25 strictly
        expected_rmse = 0.1 * np.sqrt(np.mean(D33.values**2))
        assert r.rmse == pytest.approx(expected_rmse, abs=1e-12)

    def test_constant_ratio_e(self):
        pred = DepthMap(values=np.e * D33.values)
        r = compute_metrics(pred, D33, CFG)
        assert r.rmse_log == pytest.approx(1.0, abs=1e-12)
        assert r.log10 == pytest.approx(LOG10_E, abs=1e-12)
        assert r.d1 == 0.0
        assert r.d2 == 0.0  # e > 1.5625
        assert r.d3 == 0.0  # e > 1.953125

    def test_boundary_ratio_counts_as_miss(self):
        gt = DepthMap(values=np.full((2, 2), 1.0))
        pred = DepthMap(values=np.full((2, 2), 1.25))
        r = compute_metrics(pred, gt, CFG)
        assert r.d1 == 0.0
        assert r.d2 == 1.0


class TestFilteringAndClamping:
    def test_out_of_range_gt_ignored(self):
        gt = np.array([[1.0, 50.0], [2.0, 0.0005]])
        pred_match = gt.copy()
        pred_mismatch = gt.copy()
        pred_mismatch[0, 1] = 3.0  # differs only outside [min,max]
        pred_mismatch[1, 1] = 9.0
        r1 = compute_metrics(DepthMap(values=pred_match), DepthMap(values=gt), CFG)
        r2 = compute_metrics(DepthMap(values=pred_mismatch), DepthMap(values=gt), CFG)
        assert r1 == r2
        assert r1.n_pixels == 2

    def test_prediction_clamping(self):
        gt = DepthMap(values=np.full((2, 2), 5.0))
        pred = DepthMap(values=np.full((2, 2), 100.0))
        r = compute_metrics(pred, gt, CFG)
        # clamped to max_depth=10 -> ratio 2
        assert r.abs_rel == pytest.approx(1.0)

    def test_empty_after_filter_is_error(self):
        gt = DepthMap(values=np.zeros((2, 2)))
        with pytest.raises(DataError):
            compute_metrics(gt, gt, CFG)

    def test_crop(self):
        gt = np.ones((4, 4))
        gt[0, :] = 100.0  # would be filtered anyway; crop removes the row
        pred = np.ones((4, 4))
        cfg = EvalConfig(crop=(1, 4, 0, 4))
        r = compute_metrics(DepthMap(values=pred), DepthMap(values=gt), cfg)
        assert r.n_pixels == 12
        assert r.abs_rel == 0.0

    def test_pixel_order_invariance(self):
        rng = np.random.default_rng(0)
        gt = rng.uniform(0.5, 8.0, size=(6, 6))
        pred = gt * rng.uniform(0.8, 1.3, size=(6, 6))
        r1 = compute_metrics(DepthMap(values=pred), DepthMap(values=gt), CFG)
        perm = rng.permutation(36)
        r2 = compute_metrics(
            DepthMap(values=pred.reshape(-1)[perm].reshape(6, 6)),
            DepthMap(values=gt.reshape(-1)[perm].reshape(6, 6)),
            CFG,
        )
        assert r1.abs_rel == pytest.approx(r2.abs_rel, abs=1e-12)
        assert r1.rmse == pytest.approx(r2.rmse, abs=1e-12)
        assert r1.d1 == r2.d1


class TestNesting:
    @settings(max_examples=50)
    @given(st.integers(min_value=0, max_value=2**32 - 1))
    def test_d1_le_d2_le_d3(self, seed):
        rng = np.random.default_rng(seed)
        gt = rng.uniform(0.01, 9.0, size=(8, 8))
        pred = gt * np.exp(rng.normal(0.0, 0.5, size=(8, 8)))
        r = compute_metrics(DepthMap(values=pred), DepthMap(values=gt), CFG)
        assert 0.0 <= r.d1 <= r.d2 <= r.d3 <= 1.0

    def test_nesting_on_1000_random_maps(self):
        rng = np.random.default_rng(99)
        for _ in range(1000):
            gt = rng.uniform(0.01, 9.5, size=(4, 4))
            pred = gt * np.exp(rng.normal(0.0, 0.7, size=(4, 4)))
            r = compute_metrics(DepthMap(values=pred), DepthMap(values=gt), CFG)
            assert r.d1 <= r.d2 <= r.d3


class TestAggregate:
    def _report(self, abs_rel):
        return MetricsReport(
            abs_rel=abs_rel,
            rmse=1.0,
            rmse_log=0.5,
            log10=0.2,
            d1=0.9,
            d2=0.95,
            d3=1.0,
            n_images=1,
            n_pixels=10,
        )

    def test_single_report_is_identity(self):
        r = self._report(0.1)
        assert aggregate_metrics([r]) == r

    def test_two_identical(self):
        r = self._report(0.1)
        agg = aggregate_metrics([r, r])
        assert agg.abs_rel == 0.1
        assert agg.n_images == 2
        assert agg.n_pixels == 20

    def test_mean(self):
        agg = aggregate_metrics([self._report(0.1), self._report(0.3)])
        assert agg.abs_rel == pytest.approx(0.2)

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            aggregate_metrics([])


class TestConfigValidation:
    def test_bad_range(self):
        with pytest.raises(DomainError):
            EvalConfig(min_depth=5.0, max_depth=1.0)

    def test_bad_base(self):
        with pytest.raises(DomainError):
            EvalConfig(threshold_base=1.0)
