import numpy as np
import pytest

from legalner.corpus import TagSet
from legalner.encoder import (
    BiLSTMEncoder,
    LSTMCellParams,
    LSTMState,
    bilstm_backward,
    bilstm_forward,
    bilstm_run_cached,
    init_encoder,
    init_lstm_cell,
    lstm_backward,
    lstm_cell_step,
    lstm_forward,
    lstm_run_cached,
    project_backward,
    project_emissions,
)
from legalner.errors import ShapeError

from oracles import fd_gradient, max_relative_error, scalar_lstm_cell


def zero_cell(input_dim, hidden):
    shape = (hidden, input_dim + hidden)
    return LSTMCellParams(*(np.zeros(shape) for _ in range(4)),
                          *(np.zeros(hidden) for _ in range(4)))


def random_cell(input_dim, hidden, rng, scale=0.8):
    shape = (hidden, input_dim + hidden)
    return LSTMCellParams(
        *(rng.normal(scale=scale, size=shape) for _ in range(4)),
        *(rng.normal(scale=scale, size=hidden) for _ in range(4)),
    )


def oracle_step(params, x, prev):
    h, c = scalar_lstm_cell(
        params.W_i.tolist(), params.W_f.tolist(), params.W_o.tolist(),
        params.W_c.tolist(), params.b_i.tolist(), params.b_f.tolist(),
        params.b_o.tolist(), params.b_c.tolist(),
        list(x), list(prev.h), list(prev.c),
    )
    return np.array(h), np.array(c)


class TestCellStep:
    def test_all_zero(self):
        state = lstm_cell_step(zero_cell(2, 3), np.array([1.0, -2.0]),
                               LSTMState(np.zeros(3), np.zeros(3)))
        assert np.all(state.h == 0.0) and np.all(state.c == 0.0)

    def test_zero_params_unit_cell(self):
        # sigmoid(0) = 0.5 and tanh(0) = 0 force c = 0.5, h = 0.5 * tanh(0.5).
        state = lstm_cell_step(zero_cell(1, 1), np.array([3.7]),
                               LSTMState(np.zeros(1), np.ones(1)))
        assert state.c[0] == pytest.approx(0.5, abs=1e-15)
        assert state.h[0] == pytest.approx(0.23105857863000487, abs=1e-12)

    def test_saturated_gates(self):
        # 1-dim cell, every gate weight [1, 0], x = 10: gates sit at
        # sigmoid(10), the candidate at tanh(10).
        w = np.array([[1.0, 0.0]])
        params = LSTMCellParams(w.copy(), w.copy(), w.copy(), w.copy(),
                                *(np.zeros(1) for _ in range(4)))
        state = lstm_cell_step(params, np.array([10.0]),
                               LSTMState(np.zeros(1), np.zeros(1)))
        assert state.c[0] == pytest.approx(0.9999545980091775, rel=1e-12)
        assert state.h[0] == pytest.approx(0.7615405137393967, rel=1e-12)

    def test_matches_scalar_oracle_on_random_instances(self):
        rng = np.random.default_rng(99)
        for _ in range(60):
            input_dim = int(rng.integers(1, 5))
            hidden = int(rng.integers(1, 5))
            params = random_cell(input_dim, hidden, rng)
            x = rng.normal(size=input_dim)
            prev = LSTMState(rng.normal(size=hidden), rng.normal(size=hidden))
            state = lstm_cell_step(params, x, prev)
            h_ref, c_ref = oracle_step(params, x, prev)
            assert max_relative_error(state.h, h_ref, floor=1e-12) <= 1e-12
            assert max_relative_error(state.c, c_ref, floor=1e-12) <= 1e-12

    def test_hidden_state_is_bounded(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            params = random_cell(3, 4, rng, scale=5.0)
            state = lstm_cell_step(
                params, rng.normal(scale=5.0, size=3),
                LSTMState(rng.normal(size=4), rng.normal(scale=3.0, size=4)),
            )
            assert np.all(np.abs(state.h) < 1.0)

    def test_dim_mismatch_names_operand(self):
        with pytest.raises(ShapeError, match="x_t"):
            lstm_cell_step(zero_cell(2, 3), np.zeros(5),
                           LSTMState(np.zeros(3), np.zeros(3)))


class TestUnrolling:
    def test_zero_params_all_states_zero(self):
        states = lstm_forward(zero_cell(2, 3),
                              [np.ones(2)] * 4)
        assert all(np.all(s.h == 0) and np.all(s.c == 0) for s in states)

    def test_length_one_equals_single_step(self):
        rng = np.random.default_rng(1)
        params = random_cell(2, 3, rng)
        x = rng.normal(size=2)
        [state] = lstm_forward(params, [x])
        step = lstm_cell_step(params, x,
                              LSTMState(np.zeros(3), np.zeros(3)))
        assert np.array_equal(state.h, step.h)
        assert np.array_equal(state.c, step.c)

    def test_backward_is_forward_on_reversed_input(self):
        rng = np.random.default_rng(2)
        params = random_cell(2, 3, rng)
        xs = [rng.normal(size=2) for _ in range(5)]
        bwd = lstm_forward(params, xs, "bwd")
        fwd_rev = lstm_forward(params, xs[::-1], "fwd")
        for t in range(5):
            assert np.array_equal(bwd[t].h, fwd_rev[len(xs) - 1 - t].h)

    def test_empty_input_rejected(self):
        with pytest.raises(ShapeError):
            lstm_forward(zero_cell(1, 1), [])

    def test_bad_direction(self):
        with pytest.raises(ValueError):
            lstm_forward(zero_cell(1, 1), [np.zeros(1)], "sideways")


class TestBiLSTM:
    def test_zero_params_zero_output(self):
        enc = BiLSTMEncoder(zero_cell(2, 3), zero_cell(2, 3),
                            np.zeros((6, 4)), np.zeros(4))
        hidden = bilstm_forward(enc, [np.ones(2)] * 3)
        assert hidden.shape == (3, 6)
        assert np.all(hidden == 0.0)

    def test_hidden_256_gives_width_512(self, rng):
        enc = init_encoder(4, 256, 29, rng)
        hidden = bilstm_forward(enc, [np.zeros(4)])
        assert hidden.shape == (1, 512)

    def test_length_one_halves_equal_single_steps(self, rng):
        enc = init_encoder(2, 3, 4, rng)
        x = rng.normal(size=2)
        hidden = bilstm_forward(enc, [x])
        zero = LSTMState(np.zeros(3), np.zeros(3))
        fwd = lstm_cell_step(enc.forward_cell, x, zero)
        bwd = lstm_cell_step(enc.backward_cell, x, zero)
        assert np.array_equal(hidden[0, :3], fwd.h)
        assert np.array_equal(hidden[0, 3:], bwd.h)


class TestProjection:
    def test_zero_projection(self):
        enc = BiLSTMEncoder(zero_cell(2, 2), zero_cell(2, 2),
                            np.zeros((4, 5)), np.zeros(5))
        scores = project_emissions(enc, np.ones((3, 4)))
        assert scores.shape == (3, 5) and np.all(scores == 0.0)

    def test_bias_passes_through_zero_hidden(self):
        bias = np.array([1.0, -2.0, 3.0])
        enc = BiLSTMEncoder(zero_cell(1, 1), zero_cell(1, 1),
                            np.zeros((2, 3)), bias)
        scores = project_emissions(enc, np.zeros((4, 2)))
        assert np.array_equal(scores, np.tile(bias, (4, 1)))

    def test_shape_matches_tag_count(self, rng):
        enc = init_encoder(3, 5, TagSet.default().n_tags, rng)
        hidden = bilstm_forward(enc, [rng.normal(size=3) for _ in range(7)])
        assert project_emissions(enc, hidden).shape == (7, 29)

    def test_width_mismatch(self, rng):
        enc = init_encoder(3, 5, 4, rng)
        with pytest.raises(ShapeError):
            project_emissions(enc, np.zeros((2, 7)))


class TestInit:
    def test_forget_bias_default_one(self, rng):
        cell = init_lstm_cell(3, 4, rng)
        assert np.all(cell.b_f == 1.0)
        assert np.all(cell.b_i == 0.0)

    def test_weight_bound(self, rng):
        cell = init_lstm_cell(3, 16, rng)
        bound = np.sqrt(1.0 / 16)
        for w in (cell.W_i, cell.W_f, cell.W_o, cell.W_c):
            assert np.all(np.abs(w) <= bound)


class TestBackwardPass:
    def test_lstm_gradients_match_finite_differences(self):
        rng = np.random.default_rng(31)
        for _ in range(5):
            input_dim = int(rng.integers(1, 4))
            hidden = int(rng.integers(1, 4))
            T = int(rng.integers(1, 5))
            params = random_cell(input_dim, hidden, rng, scale=0.6)
            xs = [rng.normal(size=input_dim) for _ in range(T)]
            weights = rng.normal(size=(T, hidden))

            def loss():
                h, _ = lstm_run_cached(params, xs)
                return float(np.sum(h * weights))

            _, cache = lstm_run_cached(params, xs)
            grads, d_inputs = lstm_backward(params, cache, weights)
            for name, arr in params.tensors().items():
                numeric = fd_gradient(loss, arr)
                assert max_relative_error(grads[name], numeric) <= 1e-4, name
            for t in range(T):
                numeric = fd_gradient(loss, xs[t])
                assert max_relative_error(d_inputs[t], numeric) <= 1e-4

    def test_encoder_and_projection_gradients(self):
        rng = np.random.default_rng(77)
        enc = init_encoder(2, 3, 4, rng, forget_bias=0.0)
        xs = [rng.normal(size=2) for _ in range(3)]
        weights = rng.normal(size=(3, 4))

        def loss():
            hidden, _ = bilstm_run_cached(enc, xs)
            return float(np.sum(project_emissions(enc, hidden) * weights))

        hidden, cache = bilstm_run_cached(enc, xs)
        proj_grads, d_hidden = project_backward(enc, hidden, weights)
        cell_grads, d_inputs = bilstm_backward(enc, cache, d_hidden)
        analytic = dict(cell_grads)
        analytic["proj_W"] = proj_grads["proj_W"]
        analytic["proj_b"] = proj_grads["proj_b"]
        for name, arr in enc.tensors().items():
            numeric = fd_gradient(loss, arr)
            assert max_relative_error(analytic[name], numeric) <= 1e-4, name
        for t in range(3):
            numeric = fd_gradient(loss, xs[t])
            assert max_relative_error(d_inputs[t], numeric) <= 1e-4


class TestCellParamsValidation:
    def test_mismatched_gate_shapes(self):
        with pytest.raises(ShapeError):
            LSTMCellParams(np.zeros((2, 4)), np.zeros((3, 4)),
                           np.zeros((2, 4)), np.zeros((2, 4)),
                           *(np.zeros(2) for _ in range(4)))

    def test_mismatched_cells_in_encoder(self):
        with pytest.raises(ShapeError):
            BiLSTMEncoder(zero_cell(2, 3), zero_cell(2, 4),
                          np.zeros((6, 4)), np.zeros(4))
