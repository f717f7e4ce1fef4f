"""Closed-form oracle: hand-solved cases, optimality, planted recovery."""

import numpy as np
import pytest

from depthcal import CalibBounds, DataError, DepthMap, InverseDepthMap
from depthcal.oracle import fit_oracle, invert_depth, oracle_targets

BOUNDS = CalibBounds(beta_min=0.0, beta_max=2.0, alpha_max=100.0, eps=1e-6, r_max=3.0)

# mpmath, 50 dps
SOFTPLUS_INV_1 = 0.5413248546129181
SOFTPLUS_INV_EPS = -13.815510057964232  # softplus^-1(1e-6)


def _maps(y, g):
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    g = np.atleast_2d(np.asarray(g, dtype=np.float64))
    return InverseDepthMap(values=y), DepthMap(values=g)


def masked_mse(y, g, a, b):
    """Independent residual oracle used by the optimality checks."""
    r = a * y + b - g
    return float(np.mean(r * r))


class TestInvertDepth:
    def test_reciprocal(self):
        D = DepthMap(values=np.array([[2.0]]))
        assert invert_depth(D, 1e-6).values[0, 0] == 0.5

    def test_invalid_pixel_hits_ceiling_but_stays_masked(self):
        D = DepthMap(values=np.array([[0.0]]))
        out = invert_depth(D, 1e-6)
        assert out.values[0, 0] == 1e6
        assert not D.mask[0, 0]

    def test_reciprocal_symmetry(self):
        D = DepthMap(values=np.array([[0.25, 4.0]]))
        assert invert_depth(D, 1e-6).values[0].tolist() == [4.0, 0.25]


class TestFitOracle:
    def test_hand_solved_normal_equations(self):
        # y=[0,1,2], g=[1,3,5]: Var=2/3, Cov=4/3 -> (2, 1)
        Y = InverseDepthMap(values=np.array([[0.0, 1.0, 2.0]]))
        D = DepthMap(values=np.array([[1.0, 1.0 / 3.0, 0.2]]))
        t = fit_oracle(Y, D, BOUNDS)
        assert t.alpha_raw == pytest.approx(2.0, rel=1e-12)
        assert t.beta_raw == pytest.approx(1.0, rel=1e-12)
        assert t.alpha_ls == pytest.approx(2.0, rel=1e-12)
        assert t.beta_ls == pytest.approx(1.0, rel=1e-12)
        assert t.n_valid == 3
        assert not t.degenerate

    def test_identity_fit(self):
        rng = np.random.default_rng(3)
        yv = rng.uniform(0.5, 2.0, size=(8, 8))
        Y = InverseDepthMap(values=yv)
        D = DepthMap(values=1.0 / yv)  # g == y exactly up to reciprocal rounding
        t = fit_oracle(Y, D, BOUNDS)
        assert t.alpha_raw == pytest.approx(1.0, abs=1e-12)
        assert t.beta_raw == pytest.approx(0.0, abs=1e-12)

    def test_zero_variance_clamps_alpha_to_eps(self):
        Y = InverseDepthMap(values=np.full((4, 4), 0.7))
        D = DepthMap(values=np.full((4, 4), 0.5))  # g constant 2.0
        t = fit_oracle(Y, D, BOUNDS)
        assert t.alpha_raw == 0.0
        assert t.alpha_ls == BOUNDS.eps
        assert t.beta_ls == pytest.approx(2.0, rel=1e-12)
        assert t.degenerate

    def test_empty_mask_is_error(self):
        Y, D = _maps([[0.5]], [[0.0]])
        with pytest.raises(DataError, match="no valid pixels"):
            fit_oracle(Y, D, BOUNDS)

    def test_mask_applied_before_moments(self):
        # corrupting an invalid pixel's Y must not change the fit
        yv = np.array([[0.1, 0.5, 0.9]])
        gv = np.array([[2.0, 0.0, 1.0]])
        t1 = fit_oracle(*_maps(yv, gv), BOUNDS)
        yv2 = yv.copy()
        yv2[0, 1] = 1e9
        t2 = fit_oracle(*_maps(yv2, gv), BOUNDS)
        assert t1.alpha_raw == t2.alpha_raw
        assert t1.beta_raw == t2.beta_raw

    def test_planted_recovery_exact(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            a = float(np.exp(rng.uniform(np.log(0.1), np.log(10.0))))
            b = float(rng.uniform(BOUNDS.beta_min + 0.05, BOUNDS.beta_max - 0.05))
            yv = rng.uniform(0.05, 1.0, size=(32, 32))
            gt = 1.0 / (a * yv + b)
            t = fit_oracle(InverseDepthMap(values=yv), DepthMap(values=gt), BOUNDS)
            assert abs(t.alpha_raw - a) / a < 1e-9
            assert abs(t.beta_raw - b) / max(abs(b), 1e-12) < 1e-9

    def test_optimality_against_random_probes(self):
        rng = np.random.default_rng(23)
        yv = rng.uniform(0.05, 1.0, size=(16, 16))
        gv = 1.0 / (1.4 * yv + 0.6) * np.exp(0.05 * rng.standard_normal(yv.shape))
        Y, D = InverseDepthMap(values=yv), DepthMap(values=gv)
        t = fit_oracle(Y, D, BOUNDS)
        g = 1.0 / np.maximum(gv, BOUNDS.eps)
        best = masked_mse(yv, g, t.alpha_raw, t.beta_raw)
        for _ in range(100):
            da, db = rng.normal(0.0, 0.3, size=2)
            probe = masked_mse(yv, g, t.alpha_raw + da, t.beta_raw + db)
            assert best <= probe + 1e-12

    def test_scale_equivariance_preclamp(self):
        rng = np.random.default_rng(29)
        yv = rng.uniform(0.05, 1.0, size=(16, 16))
        gv = 1.0 / (2.0 * yv + 0.4)
        t1 = fit_oracle(InverseDepthMap(values=yv), DepthMap(values=gv), BOUNDS)
        for c in (0.5, 3.0, 10.0):
            t2 = fit_oracle(InverseDepthMap(values=c * yv), DepthMap(values=gv), BOUNDS)
            assert t2.alpha_raw == pytest.approx(t1.alpha_raw / c, rel=1e-9)
            assert t2.beta_raw == pytest.approx(t1.beta_raw, rel=1e-9)

    def test_clamped_values_always_in_range(self):
        rng = np.random.default_rng(31)
        for _ in range(50):
            yv = rng.uniform(-5.0, 5.0, size=(4, 4))
            gv = np.abs(rng.uniform(-100.0, 100.0, size=(4, 4)))
            gv[0, 0] = 0.0
            t = fit_oracle(InverseDepthMap(values=yv), DepthMap(values=gv), BOUNDS)
            assert BOUNDS.eps <= t.alpha_ls <= BOUNDS.alpha_max
            assert BOUNDS.beta_min <= t.beta_ls <= BOUNDS.beta_max

    def test_single_pixel_flagged_degenerate(self):
        Y, D = _maps([[0.5]], [[2.0]])
        t = fit_oracle(Y, D, BOUNDS)
        assert t.n_valid == 1
        assert t.degenerate
        assert t.alpha_ls == BOUNDS.eps


class TestOracleTargets:
    def test_unit_pair(self):
        t = fit_oracle(*_maps([[0.0, 1.0, 2.0]], [[1.0, 0.5, 1.0 / 3.0]]), BOUNDS)
        # planted g = y + 1 -> (1, 1)
        assert t.alpha_ls == pytest.approx(1.0, rel=1e-12)
        assert t.beta_ls == pytest.approx(1.0, rel=1e-12)
        filled = oracle_targets(t, BOUNDS)
        assert filled.theta_tilde_star.alpha_tilde == pytest.approx(
            SOFTPLUS_INV_1, abs=1e-12
        )
        assert filled.theta_tilde_star.beta_tilde == pytest.approx(0.0, abs=1e-12)

    def test_beta_at_upper_bound_stays_finite(self):
        Y = InverseDepthMap(values=np.full((3, 3), 0.5))
        D = DepthMap(values=np.full((3, 3), 0.1))  # g = 10 -> beta_raw = 10 > beta_max
        t = oracle_targets(fit_oracle(Y, D, BOUNDS), BOUNDS)
        assert t.beta_ls == BOUNDS.beta_max
        p = 1.0 - BOUNDS.eps
        assert t.theta_tilde_star.beta_tilde == pytest.approx(
            np.log(p / (1.0 - p)), rel=1e-9
        )

    def test_alpha_at_eps(self):
        Y = InverseDepthMap(values=np.full((3, 3), 0.5))
        D = DepthMap(values=np.full((3, 3), 1.0))
        t = oracle_targets(fit_oracle(Y, D, BOUNDS), BOUNDS)
        assert t.alpha_ls == BOUNDS.eps
        assert t.theta_tilde_star.alpha_tilde == pytest.approx(
            SOFTPLUS_INV_EPS, abs=1e-9
        )
