import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from crashdetect.numerics import (
    Activation,
    AdamState,
    adam_step,
    apply_activation,
    as_matrix,
    hadamard,
    matvec,
    sigmoid,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_matvec_identity_zero_and_hand_case():
    assert np.array_equal(matvec(np.eye(2), [3.0, 4.0]), [3.0, 4.0])
    assert np.array_equal(matvec(np.zeros((2, 3)), [1.0, -2.0, 5.0]), [0.0, 0.0])
    assert np.array_equal(matvec([[1.0, 2.0], [3.0, 4.0]], [1.0, 1.0]), [3.0, 7.0])


def test_matvec_mismatch_names_both_shapes():
    with pytest.raises(ValueError, match=r"\(2, 3\).*\(2,\)"):
        matvec(np.zeros((2, 3)), np.zeros(2))


def test_as_matrix_row_major():
    m = as_matrix([1, 2, 3, 4, 5, 6], rows=2, cols=3)
    assert m[1, 0] == 4
    with pytest.raises(ValueError):
        as_matrix([1, 2, 3], rows=2, cols=2)
    with pytest.raises(ValueError):
        as_matrix([[1.0, math.inf]])


def test_hadamard():
    x = np.array([0.3, -2.0, 7.5])
    assert np.array_equal(hadamard(np.ones(3), x), x)
    assert np.array_equal(hadamard([0.0, 0.0], [5.0, 7.0]), [0.0, 0.0])
    assert np.array_equal(hadamard([2.0, 3.0], [4.0, 5.0]), [8.0, 15.0])
    with pytest.raises(ValueError):
        hadamard([1.0], [1.0, 2.0])


def test_activation_values():
    assert apply_activation(Activation.SIGMOID, np.array([0.0]))[0] == 0.5
    assert apply_activation("tanh", np.array([0.0]))[0] == 0.0
    assert apply_activation(Activation.SIGMOID, np.array([math.log(3.0)]))[0] == pytest.approx(0.75, abs=1e-15)


def test_sigmoid_saturates_without_overflow():
    with np.errstate(over="raise"):
        out = sigmoid(np.array([-1000.0, 1000.0]))
    assert out[0] == 0.0 and out[1] == 1.0


@given(arrays(np.float64, st.integers(1, 20), elements=st.floats(-30, 30)))
def test_sigmoid_symmetry(x):
    assert np.all(np.abs(sigmoid(x) + sigmoid(-x) - 1.0) <= 1e-15)


@given(arrays(np.float64, st.integers(1, 20), elements=st.floats(-50, 50)))
def test_tanh_sigmoid_identity(x):
    np.testing.assert_allclose(np.tanh(x), 2 * sigmoid(2 * x) - 1, rtol=0, atol=1e-12)


@given(arrays(np.float64, st.integers(1, 20), elements=finite))
def test_activation_codomain(x):
    s = apply_activation("sigmoid", x)
    t = apply_activation("tanh", x)
    assert np.all((s >= 0) & (s <= 1))
    assert np.all((t >= -1) & (t <= 1))


@settings(max_examples=50)
@given(st.integers(1, 6), st.integers(1, 6), st.data())
def test_matvec_linear(rows, cols, data):
    el = st.floats(-10, 10)
    m = data.draw(arrays(np.float64, (rows, cols), elements=el))
    u = data.draw(arrays(np.float64, cols, elements=el))
    v = data.draw(arrays(np.float64, cols, elements=el))
    a, b = data.draw(el), data.draw(el)
    lhs = matvec(m, a * u + b * v)
    rhs = a * matvec(m, u) + b * matvec(m, v)
    scale = np.abs(m) @ (np.abs(a * u) + np.abs(b * v)) + 1e-300
    assert np.all(np.abs(lhs - rhs) <= 1e-12 * np.maximum(scale, 1.0))


def test_adam_zero_gradient_fresh_state():
    state = AdamState.fresh(3)
    p = np.array([1.0, -2.0, 0.5])
    new_p, new_state = adam_step(state, p, np.zeros(3))
    assert np.array_equal(new_p, p)
    assert new_state.step_count == 1
    assert state.step_count == 0  # input untouched


def test_adam_first_step_moves_by_learning_rate():
    state = AdamState.fresh(1, learning_rate=0.01)
    new_p, _ = adam_step(state, np.array([0.0]), np.array([1.0]))
    # bias-corrected m/sqrt(v) = g/|g| = 1, minus the epsilon effect
    assert new_p[0] == pytest.approx(-0.01, rel=1e-6)


def test_adam_descends_quadratic():
    # scalar simulation: f(p) = p^2, grad 2p
    state = AdamState.fresh(1, learning_rate=0.1)
    p = np.array([3.0])
    values = [float(p[0] ** 2)]
    for _ in range(2):
        p, state = adam_step(state, p, 2 * p)
        values.append(float(p[0] ** 2))
    assert values[0] > values[1] > values[2]
    assert state.step_count == 2


def test_adam_length_mismatch():
    with pytest.raises(ValueError):
        adam_step(AdamState.fresh(2), np.zeros(2), np.zeros(3))


def test_adam_state_validation():
    with pytest.raises(ValueError):
        AdamState(np.zeros(2), np.zeros(3))
    with pytest.raises(ValueError):
        AdamState(np.zeros(2), np.zeros(2), beta1=1.0)
    with pytest.raises(ValueError):
        AdamState(np.zeros(2), np.zeros(2), epsilon=0.0)


@settings(max_examples=50)
@given(
    arrays(np.float64, 4, elements=finite),
    arrays(np.float64, 4, elements=st.floats(0, 1e3)),
    st.integers(0, 1000),
)
def test_adam_zero_gradient_identity_when_momentum_is_zero(params, second, steps):
    # with no accumulated momentum, a zero gradient cannot move anything
    state = AdamState(np.zeros(4), second, steps)
    new_p, new_state = adam_step(state, params, np.zeros(4))
    assert np.array_equal(new_p, params)
    assert new_state.step_count == steps + 1


@settings(max_examples=30)
@given(arrays(np.float64, 5, elements=finite), arrays(np.float64, 5, elements=finite))
def test_adam_deterministic(params, grads):
    state = AdamState(np.full(5, 0.1), np.full(5, 0.2), 3)
    a = adam_step(state, params, grads)
    b = adam_step(state, params, grads)
    assert a[0].tobytes() == b[0].tobytes()
    assert a[1].first_moment.tobytes() == b[1].first_moment.tobytes()
