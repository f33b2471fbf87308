"""Tests for global-norm clipping and Adam."""

import numpy as np
import pytest

from src.neural.optim import AdamState, adam_step, clip_by_global_norm, global_norm
from src.neural.tensor import NonFiniteError


# ---------------------------------------------------------------------------
# Clipping
# ---------------------------------------------------------------------------

class TestClipping:
    def test_below_limit_unchanged(self):
        clipped, norm = clip_by_global_norm({"a": np.array([3.0, 4.0])}, 10.0)
        assert norm == 5.0
        assert np.array_equal(clipped["a"], [3.0, 4.0])

    def test_above_limit_scaled(self):
        clipped, norm = clip_by_global_norm({"a": np.array([30.0]), "b": np.array([40.0])}, 10.0)
        assert norm == 50.0
        assert clipped["a"][0] == pytest.approx(6.0, abs=1e-12)
        assert clipped["b"][0] == pytest.approx(8.0, abs=1e-12)

    def test_randomized_contract(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            grads = {f"t{i}": rng.normal(scale=rng.uniform(0.1, 20), size=rng.integers(1, 6, size=2))
                     for i in range(4)}
            clipped, norm = clip_by_global_norm(grads, 10.0)
            assert abs(global_norm(clipped) - min(norm, 10.0)) < 1e-12
            scale = 1.0 if norm <= 10.0 else 10.0 / norm
            for name in grads:
                assert np.array_equal(clipped[name], grads[name] * scale)

    def test_non_finite_norm(self):
        with pytest.raises(NonFiniteError):
            clip_by_global_norm({"a": np.array([np.nan])}, 10.0)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

class TestAdam:
    def test_zero_gradient_keeps_params(self):
        params = {"w": np.array([1.0, -2.0])}
        new, _ = adam_step(params, {"w": np.zeros(2)}, AdamState(), 1e-3)
        assert np.array_equal(new["w"], params["w"])

    def test_first_step_hand_trace(self):
        new, state = adam_step({"w": np.array([0.0])}, {"w": np.array([1.0])}, AdamState(), 1e-3)
        assert new["w"][0] == pytest.approx(-1e-3 / (1 + 1e-8), rel=1e-12)
        assert state.t == {"w": 1}

    def test_absent_tensors_untouched(self):
        params = {"shared": np.ones(2), "jazz": np.ones(2)}
        state = AdamState()
        params, state = adam_step(params, {"shared": np.ones(2), "jazz": np.ones(2)}, state, 1e-3)
        frozen_param, frozen_m = params["jazz"].copy(), state.m["jazz"].copy()
        params, state = adam_step(params, {"shared": np.ones(2)}, state, 1e-3)
        assert np.array_equal(params["jazz"], frozen_param)
        assert np.array_equal(state.m["jazz"], frozen_m)
        assert state.t == {"shared": 2, "jazz": 1}

    def test_deterministic(self):
        def run():
            rng = np.random.default_rng(7)
            params, state = {"w": rng.normal(size=(3, 3))}, AdamState()
            for _ in range(10):
                params, state = adam_step(params, {"w": rng.normal(size=(3, 3))}, state, 1e-2)
            return params["w"]
        assert np.array_equal(run(), run())

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            adam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, AdamState(), 1e-3)

    def test_non_finite_update(self):
        with pytest.raises(NonFiniteError):
            adam_step({"w": np.zeros(1)}, {"w": np.array([np.inf])}, AdamState(), 1e-3)
