"""Envelope head, selector head, feature pooling."""

import numpy as np
import pytest

from depthcal.errors import DataError
from depthcal.heads import (
    EnvelopeHead,
    FeaturePyramid,
    SelectorHead,
    envelope_backward,
    envelope_forward,
    pool_features,
    selector_backward,
    selector_forward,
)
from depthcal.nn import grad_check

LN_2 = 0.6931471805599453
TANH_HALF = 0.4621171572600098  # mpmath


class TestPoolFeatures:
    def test_constant_levels(self):
        levels = tuple(np.full((1, 4, 4), float(k + 1)) for k in range(4))
        s = pool_features(FeaturePyramid(levels=levels))
        assert s.tolist() == [1.0, 2.0, 3.0, 4.0]

    def test_arithmetic_mean(self):
        lvl0 = np.array([[[1.0, 3.0], [5.0, 7.0]]])
        levels = (lvl0,) + tuple(np.zeros((1, 2, 2)) for _ in range(3))
        assert pool_features(FeaturePyramid(levels=levels))[0] == 4.0

    def test_concat_length(self):
        levels = tuple(np.zeros((2, 3, 3)) for _ in range(4))
        assert pool_features(FeaturePyramid(levels=levels)).shape == (8,)

    def test_prepooled_passthrough(self):
        levels = tuple(np.arange(2, dtype=np.float64) + k for k in range(4))
        s = pool_features(FeaturePyramid(levels=levels))
        assert s.tolist() == [0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0]

    def test_wrong_level_count(self):
        with pytest.raises(DataError):
            FeaturePyramid(levels=(np.zeros(2),) * 3)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(0)
        levels = [rng.standard_normal((3, 5, 5)) for _ in range(4)]
        s1 = pool_features(FeaturePyramid(levels=tuple(levels)))
        shuffled = []
        for lvl in levels:
            flat = lvl.reshape(3, -1)
            perm = rng.permutation(flat.shape[1])
            shuffled.append(flat[:, perm].reshape(3, 5, 5))
        s2 = pool_features(FeaturePyramid(levels=tuple(shuffled)))
        assert s1 == pytest.approx(s2, abs=1e-12)


class TestEnvelopeForward:
    def test_zero_initialized_head(self):
        head = EnvelopeHead.create(d_text=8, r_max=3.0, seed=0)
        head.head_mu.weight[:] = 0.0
        head.head_r.weight[:] = 0.0
        env, _ = envelope_forward(np.ones(8), head)
        assert env.mu.tolist() == [0.0, 0.0]
        assert env.r == pytest.approx([LN_2, LN_2], abs=1e-15)

    def test_r_clamped_at_r_max(self):
        head = EnvelopeHead.create(d_text=4, r_max=3.0, seed=1)
        head.head_r.weight[:] = 0.0
        head.head_r.bias[:] = 10.0
        env, tape = envelope_forward(np.zeros(4), head)
        assert env.r.tolist() == [3.0, 3.0]
        assert tape.clamp_active.all()

    def test_identity_mu_head_passes_trunk_output(self):
        head = EnvelopeHead.create(d_text=4, r_max=3.0, seed=2, hidden=2)
        head.head_mu.weight[:] = np.eye(2)
        head.head_mu.bias[:] = 0.0
        env, tape = envelope_forward(np.array([0.3, -0.1, 0.8, 0.5]), head)
        assert env.mu == pytest.approx(tape.h)

    def test_dim_mismatch(self):
        head = EnvelopeHead.create(d_text=8, r_max=3.0, seed=0)
        with pytest.raises(DataError):
            envelope_forward(np.zeros(9), head)

    def test_bound_guarantee_for_random_heads(self):
        rng = np.random.default_rng(7)
        for seed in range(5):
            head = EnvelopeHead.create(d_text=6, r_max=3.0, seed=seed, hidden=8)
            env, _ = envelope_forward(rng.standard_normal(6), head)
            assert np.all(env.r > 0.0)
            assert np.all(env.r <= 3.0)


class TestSelectorForward:
    def test_zero_net(self):
        head = SelectorHead.create(d_feat=6, seed=0)
        for layer in head.net.layers:
            layer.weight[:] = 0.0
        offset, _ = selector_forward(np.ones(6), head)
        assert offset.delta.tolist() == [0.0, 0.0]

    def test_tanh_saturation(self):
        head = SelectorHead.create(d_feat=2, seed=0, hidden=2)
        for layer in head.net.layers:
            layer.weight[:] = 0.0
            layer.bias[:] = 0.0
        head.net.layers[-1].bias[:] = 50.0
        offset, _ = selector_forward(np.zeros(2), head)
        assert offset.delta == pytest.approx([1.0, 1.0])

    def test_hand_tanh_value(self):
        head = SelectorHead.create(d_feat=2, seed=0, hidden=2)
        for layer in head.net.layers:
            layer.weight[:] = 0.0
            layer.bias[:] = 0.0
        head.net.layers[-1].bias[:] = np.array([0.5, -0.5])
        offset, _ = selector_forward(np.zeros(2), head)
        assert offset.delta == pytest.approx([TANH_HALF, -TANH_HALF], abs=1e-12)

    def test_strictly_inside_for_moderate_nets(self):
        head = SelectorHead.create(d_feat=5, seed=3, hidden=8)
        offset, _ = selector_forward(np.random.default_rng(1).standard_normal(5), head)
        assert np.all(np.abs(offset.delta) < 1.0)


class TestHeadGradients:
    @pytest.mark.parametrize("seed", range(3))
    def test_envelope_backward_matches_fd(self, seed):
        rng = np.random.default_rng(seed)
        z = rng.standard_normal(5)
        w_mu = rng.standard_normal(2)
        w_r = rng.standard_normal(2)

        def fn(params):
            head = EnvelopeHead.create(d_text=5, r_max=3.0, seed=seed, hidden=6)
            head.set_params([p.copy() for p in params])
            env, tape = envelope_forward(z, head)
            loss = float(env.mu @ w_mu + env.r @ w_r)
            grads, _ = envelope_backward(head, tape, w_mu, w_r)
            return loss, grads

        head0 = EnvelopeHead.create(d_text=5, r_max=3.0, seed=seed, hidden=6)
        head0.head_mu.weight[:] = rng.normal(0.0, 0.3, size=(2, 6))
        head0.head_r.weight[:] = rng.normal(0.0, 0.3, size=(2, 6))
        report = grad_check(fn, head0.params(), h=1e-5, tol=1e-4)
        assert report.passed, f"max rel err {report.max_rel_err:.3e}"

    def test_envelope_backward_through_active_clamp(self):
        # force one clamped and one unclamped radius coordinate
        def make():
            head = EnvelopeHead.create(d_text=3, r_max=1.5, seed=9, hidden=4)
            head.head_r.bias[:] = np.array([10.0, 0.0])
            return head

        z = np.array([0.2, -0.4, 0.6])
        w_r = np.array([1.0, 1.0])

        def fn(params):
            head = make()
            head.set_params([p.copy() for p in params])
            env, tape = envelope_forward(z, head)
            grads, _ = envelope_backward(head, tape, np.zeros(2), w_r)
            return float(env.r @ w_r), grads

        head0 = make()
        env, tape = envelope_forward(z, head0)
        assert tape.clamp_active.tolist() == [True, False]
        report = grad_check(fn, head0.params(), h=1e-5, tol=1e-4)
        assert report.passed, f"max rel err {report.max_rel_err:.3e}"

    @pytest.mark.parametrize("seed", range(3))
    def test_selector_backward_matches_fd(self, seed):
        rng = np.random.default_rng(100 + seed)
        s = rng.standard_normal(4)
        w = rng.standard_normal(2)

        def fn(params):
            head = SelectorHead.create(d_feat=4, seed=seed, hidden=6)
            head.set_params([p.copy() for p in params])
            offset, tape = selector_forward(s, head)
            grads, _ = selector_backward(head, tape, w)
            return float(offset.delta @ w), grads

        head0 = SelectorHead.create(d_feat=4, seed=seed, hidden=6)
        head0.net.layers[-1].weight[:] = rng.normal(0.0, 0.3, size=(2, 6))
        report = grad_check(fn, head0.params(), h=1e-5, tol=1e-4)
        assert report.passed, f"max rel err {report.max_rel_err:.3e}"
