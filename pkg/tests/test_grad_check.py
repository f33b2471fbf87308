"""Tests for the finite-difference checker and the layer-by-layer suite."""

import numpy as np
import pytest

from src.neural.grad_check import grad_check, relative_error
from src.stylenet.gradcheck_suite import GENRES, run_gradcheck_suite, stylenet_case


class TestGradCheck:
    def test_relative_error(self):
        assert relative_error(1.0, 1.0) == 0.0
        assert relative_error(1.0, -1.0) == 2.0
        assert relative_error(0.0, 0.0) == 0.0

    def test_quadratic(self):
        params = {"x": np.array([1.0, -2.0, 3.0])}
        report = grad_check(lambda p: float(np.sum(p["x"] ** 2)), params, {"x": 2 * params["x"]})
        assert report.passed(1e-8)
        assert report.checked == {"x": 3}

    def test_sign_flip_detected(self):
        params = {"x": np.array([1.0, -2.0])}
        report = grad_check(lambda p: float(np.sum(p["x"] ** 2)), params, {"x": -2 * params["x"]})
        assert report.max_error == pytest.approx(2.0)

    def test_params_restored(self):
        params = {"x": np.array([0.5, 0.25])}
        grad_check(lambda p: float(np.sum(p["x"] ** 3)), params, {"x": 3 * params["x"] ** 2})
        assert np.array_equal(params["x"], [0.5, 0.25])

    def test_sampled_entries(self):
        params = {"x": np.arange(100, dtype=float)}
        report = grad_check(lambda p: float(np.sum(p["x"])), params, {"x": np.ones(100)}, max_entries=5)
        assert report.checked == {"x": 5}


class TestSuite:
    def test_every_layer_passes(self):
        rows = run_gradcheck_suite(seed=0, trials=20)
        assert [row.layer for row in rows] == ["linear", "lstm", "bilstm", "dropout", "mse", "stylenet"]
        assert all(row.passed for row in rows), rows
        linear = next(row for row in rows if row.layer == "linear")
        assert linear.max_error < 1e-7

    @pytest.mark.parametrize("genre", GENRES)
    def test_composed_model_case(self, genre):
        rng = np.random.default_rng(40)
        loss, params, analytic = stylenet_case(rng, genre)
        assert np.max(np.abs(analytic["interpretation.fwd.W"])) > 1e-4
        report = grad_check(loss, params, analytic, max_entries=8, rng=rng)
        assert report.passed(1e-4), report.errors

    def test_injected_fault_fails(self):
        rows = run_gradcheck_suite(seed=0, trials=1, inject_fault=True)
        assert not any(row.passed for row in rows)
        assert all(row.max_error == pytest.approx(2.0) for row in rows)

    def test_fixed_seed_is_reproducible(self):
        first = run_gradcheck_suite(seed=3, trials=2)
        second = run_gradcheck_suite(seed=3, trials=2)
        assert first == second
