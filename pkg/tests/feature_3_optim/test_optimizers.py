"""
Feature 3 — Optimizer Tests
===========================

Gradient descent, Nesterov momentum and Adam (uncorrected by default,
epsilon inside the square root) on flat parameter vectors.

Test matrix:
  3.1  Gradient descent — exact p - lr * g
  3.2  Adam — hand-computed first step, beta=0 reduction, sign consistency
  3.3  Bias-corrected Adam — first step is lr * sign(g) scale
  3.4  Nesterov — look-ahead point, mu = 0 matches GD
  3.5  State — step counter, replay, inputs not mutated
  3.6  Errors — dimension mismatch, non-finite gradients, wrong kind
  3.7  Convergence — |w| < 1e-3 on w^2 within 500 steps
"""
from __future__ import annotations

import math

import numpy as np
import pytest

from src.optim.optimizers import (
    DimensionMismatch,
    NonFiniteGradient,
    OptimizerConfig,
    OptimizerKind,
    OptimizerState,
    WrongOptimizerKind,
    lookahead_point,
    step,
)


pytestmark = pytest.mark.feature_3


def config(kind: OptimizerKind, **kwargs) -> OptimizerConfig:
    return OptimizerConfig(kind=kind, **kwargs)


# -----------------------------------------------------------------------
# 3.1 Gradient descent
# -----------------------------------------------------------------------
class TestGradientDescent:
    def test_single_step(self):
        p, _ = step(config(OptimizerKind.GD, learning_rate=0.1), OptimizerState.initial(1), [1.0], [2.0])
        assert p.tolist() == [0.8]

    def test_bitwise_multiply_subtract(self, rng):
        p = rng.normal(size=15)
        g = rng.normal(size=15)
        out, _ = step(config(OptimizerKind.GD, learning_rate=0.037), OptimizerState.initial(15), p, g)
        assert np.array_equal(out, p - 0.037 * g)


# -----------------------------------------------------------------------
# 3.2 Adam
# -----------------------------------------------------------------------
class TestAdam:
    def test_first_step_by_hand(self):
        p, state = step(config(OptimizerKind.ADAM), OptimizerState.initial(1), [0.0], [1.0])
        assert state.first_moment[0] == pytest.approx(0.1, abs=1e-15)
        assert state.second_moment[0] == pytest.approx(0.001, abs=1e-15)
        assert p[0] == pytest.approx(-0.0316226, abs=1e-7)
        assert abs(p[0] - (-0.01 * 0.1 / math.sqrt(0.001 + 1e-8))) < 1e-15

    def test_zero_betas_reduce_to_normalized_step(self, rng):
        g = rng.normal(size=8)
        p = rng.normal(size=8)
        cfg = config(OptimizerKind.ADAM, beta1=0.0, beta2=0.0, learning_rate=0.05)
        out, _ = step(cfg, OptimizerState.initial(8), p, g)
        assert np.max(np.abs(out - (p - 0.05 * g / np.sqrt(g * g + 1e-8)))) < 1e-12

    def test_moves_against_gradient_sign(self, rng):
        g = rng.normal(size=20)
        out, _ = step(config(OptimizerKind.ADAM), OptimizerState.initial(20), np.zeros(20), g)
        assert np.all(np.sign(out) == -np.sign(g))

    def test_moves_against_first_moment(self, rng):
        state = OptimizerState.initial(10)
        p = np.zeros(10)
        cfg = config(OptimizerKind.ADAM)
        for _ in range(5):
            new_p, state = step(cfg, state, p, rng.normal(size=10))
            moved = new_p - p
            nonzero = state.first_moment != 0
            assert np.all(np.sign(moved[nonzero]) == -np.sign(state.first_moment[nonzero]))
            p = new_p


# -----------------------------------------------------------------------
# 3.3 Bias-corrected Adam
# -----------------------------------------------------------------------
class TestBiasCorrectedAdam:
    def test_first_step_is_learning_rate(self):
        cfg = config(OptimizerKind.ADAM, bias_correction=True)
        p, _ = step(cfg, OptimizerState.initial(1), [0.0], [4.0])
        # v_hat = g, s_hat = g^2, so the step is lr * g / (|g| + eps)
        assert p[0] == pytest.approx(-0.01 * 4.0 / (4.0 + 1e-8), abs=1e-15)

    def test_differs_from_default(self):
        a, _ = step(config(OptimizerKind.ADAM), OptimizerState.initial(1), [0.0], [1.0])
        b, _ = step(config(OptimizerKind.ADAM, bias_correction=True), OptimizerState.initial(1), [0.0], [1.0])
        assert a[0] != b[0]


# -----------------------------------------------------------------------
# 3.4 Nesterov
# -----------------------------------------------------------------------
class TestNesterov:
    @pytest.mark.parametrize(
        "mu, v, p, expected",
        [
            (0.9, [0.0], [3.0], [3.0]),
            (0.9, [1.0], [0.0], [0.9]),
            (0.5, [-2.0, 4.0], [1.0, 1.0], [0.0, 3.0]),
        ],
    )
    def test_lookahead(self, mu, v, p, expected):
        state = OptimizerState(0, np.array(v), np.zeros(len(v)))
        out = lookahead_point(config(OptimizerKind.NESTEROV, momentum=mu), state, p)
        assert out.tolist() == expected

    def test_zero_momentum_is_gd(self, rng):
        nesterov = config(OptimizerKind.NESTEROV, momentum=0.0, learning_rate=0.02)
        gd = config(OptimizerKind.GD, learning_rate=0.02)
        p = rng.normal(size=6)
        state_n, state_g = OptimizerState.initial(6), OptimizerState.initial(6)
        pn, pg = p, p
        for _ in range(10):
            g = rng.normal(size=6)
            pn, state_n = step(nesterov, state_n, pn, g)
            pg, state_g = step(gd, state_g, pg, g)
            assert np.max(np.abs(pn - pg)) < 1e-12

    def test_velocity_update(self):
        cfg = config(OptimizerKind.NESTEROV, momentum=0.9, learning_rate=0.1)
        p, state = step(cfg, OptimizerState(1, np.array([1.0]), np.zeros(1)), [0.0], [2.0])
        assert state.first_moment[0] == pytest.approx(0.9 - 0.2)
        assert p[0] == pytest.approx(0.7)


# -----------------------------------------------------------------------
# 3.5 State
# -----------------------------------------------------------------------
class TestOptimizerState:
    def test_step_count_increases(self):
        state = OptimizerState.initial(2)
        for expected in (1, 2, 3):
            _, state = step(config(OptimizerKind.ADAM), state, [0.0, 0.0], [1.0, -1.0])
            assert state.step_count == expected

    @pytest.mark.parametrize("kind", list(OptimizerKind), ids=lambda k: k.value)
    def test_replay_is_bitwise(self, rng, kind):
        grads = [rng.normal(size=5) for _ in range(30)]

        def trajectory():
            p, state = np.ones(5), OptimizerState.initial(5)
            out = []
            for g in grads:
                p, state = step(config(kind), state, p, g)
                out.append(p)
            return out

        assert all(np.array_equal(a, b) for a, b in zip(trajectory(), trajectory()))

    def test_inputs_not_mutated(self):
        p = np.array([1.0, 2.0])
        g = np.array([0.5, 0.5])
        state = OptimizerState.initial(2)
        step(config(OptimizerKind.ADAM), state, p, g)
        assert p.tolist() == [1.0, 2.0]
        assert state.first_moment.tolist() == [0.0, 0.0]
        assert state.step_count == 0


# -----------------------------------------------------------------------
# 3.6 Errors
# -----------------------------------------------------------------------
class TestOptimizerErrors:
    def test_grad_length_mismatch(self):
        with pytest.raises(DimensionMismatch):
            step(config(OptimizerKind.GD), OptimizerState.initial(2), [0.0, 0.0], [1.0])

    def test_state_length_mismatch(self):
        with pytest.raises(DimensionMismatch):
            step(config(OptimizerKind.GD), OptimizerState.initial(3), [0.0, 0.0], [1.0, 1.0])

    @pytest.mark.parametrize("bad", [float("nan"), float("inf")])
    def test_non_finite_gradient(self, bad):
        with pytest.raises(NonFiniteGradient):
            step(config(OptimizerKind.ADAM), OptimizerState.initial(1), [0.0], [bad])

    def test_lookahead_needs_nesterov(self):
        with pytest.raises(WrongOptimizerKind):
            lookahead_point(config(OptimizerKind.ADAM), OptimizerState.initial(1), [0.0])

    def test_config_rejects_bad_learning_rate(self):
        with pytest.raises(ValueError):
            OptimizerConfig(learning_rate=0.0)


# -----------------------------------------------------------------------
# 3.7 Convergence on w^2
# -----------------------------------------------------------------------
class TestQuadraticConvergence:
    @pytest.mark.parametrize("kind", list(OptimizerKind), ids=lambda k: k.value)
    def test_reaches_minimum(self, kind):
        cfg = config(kind)
        w, state = np.array([1.0]), OptimizerState.initial(1)
        smallest = abs(w[0])
        for _ in range(500):
            at = lookahead_point(cfg, state, w) if kind == OptimizerKind.NESTEROV else w
            w, state = step(cfg, state, w, 2.0 * at)
            smallest = min(smallest, abs(w[0]))
            if smallest < 1e-3:
                break
        assert smallest < 1e-3
