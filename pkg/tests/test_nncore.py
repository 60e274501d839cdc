import math

import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import given
from hypothesis.extra.numpy import arrays

from scr import nncore as nn
from scr import verify
from scr.errors import ConfigError, DomainError, NumericError, ShapeError

finite = st.floats(min_value=-30.0, max_value=30.0, allow_nan=False, allow_infinity=False)


# forward

def test_identity_layer_with_zero_weights_outputs_zeros():
    layer = nn.DenseLayer.zeros(3, 2, nn.Activation.IDENTITY)
    out = nn.forward(layer, np.arange(6.0).reshape(2, 3))
    np.testing.assert_array_equal(out, np.zeros((2, 2)))


def test_softmax_of_equal_logits_is_uniform():
    layer = nn.DenseLayer.zeros(2, 4, nn.Activation.SOFTMAX)
    out = nn.forward(layer, np.ones((1, 2)))
    np.testing.assert_allclose(out, np.full((1, 4), 0.25))


def test_activation_fixed_points():
    assert nn.activate(nn.Activation.TANH, np.zeros(1))[0] == 0.0
    assert nn.activate(nn.Activation.SIGMOID, np.zeros(1))[0] == 0.5
    assert nn.activate(nn.Activation.RELU, np.array([-1.0]))[0] == 0.0


def test_forward_rejects_wrong_width():
    layer = nn.DenseLayer.zeros(3, 2, nn.Activation.TANH)
    with pytest.raises(ShapeError):
        nn.forward(layer, np.zeros((1, 4)))


def test_bias_must_match_weight_columns():
    with pytest.raises(ShapeError):
        nn.DenseLayer(np.zeros((3, 2)), np.zeros(3))


@given(arrays(np.float64, (4, 7), elements=finite))
def test_softmax_rows_sum_to_one(logits):
    out = nn.activate(nn.Activation.SOFTMAX, logits)
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-6)
    assert np.all(out >= 0.0)


# losses

def test_multinomial_nll_perfect_prediction():
    assert nn.multinomial_nll(np.array([[0.0, 1.0]]), np.array([[0.0, 1.0]])) == pytest.approx(0.0, abs=1e-9)


def test_multinomial_nll_uniform():
    probs = np.full((1, 4), 0.25)
    assert nn.multinomial_nll(np.array([[0, 0, 1, 0.0]]), probs) == pytest.approx(math.log(4))
    assert nn.multinomial_nll(np.array([[1, 0, 1, 0.0]]), probs) == pytest.approx(2 * math.log(4))


def test_multinomial_nll_errors():
    with pytest.raises(DomainError):
        nn.multinomial_nll(np.array([[1.0, 0.0]]), np.array([[1.5, -0.5]]))
    with pytest.raises(ShapeError):
        nn.multinomial_nll(np.ones((1, 3)), np.full((1, 2), 0.5))
    with pytest.raises(DomainError):
        nn.multinomial_nll(np.array([[1.0, 0.0]]), np.array([[0.5, 0.6]]))


def test_gaussian_kl_examples():
    assert nn.gaussian_kl(nn.GaussianParams(np.zeros(3), np.zeros(3))) == 0.0
    assert nn.gaussian_kl(nn.GaussianParams(np.array([1.0, 0.0]), np.zeros(2))) == pytest.approx(0.5)
    value = nn.gaussian_kl(nn.GaussianParams(np.zeros(1), np.array([math.log(4)])))
    assert value == pytest.approx(0.5 * (4 - 1 - math.log(4)))
    assert value == pytest.approx(0.8069, abs=1e-4)


def test_gaussian_kl_rejects_non_finite():
    with pytest.raises(DomainError):
        nn.gaussian_kl(nn.GaussianParams(np.array([np.nan]), np.zeros(1)))


@given(arrays(np.float64, (3, 5), elements=finite), arrays(np.float64, (3, 5), elements=finite))
def test_gaussian_kl_is_non_negative(mu, log_var):
    params = nn.GaussianParams(mu, log_var)
    assert nn.gaussian_kl(params) >= 0.0
    assert np.all(nn.gaussian_kl_rows(params) >= -1e-12)


def test_multilabel_bce_examples():
    assert nn.multilabel_bce(np.array([[1.0]]), np.array([[1.0]])) == pytest.approx(0.0, abs=1e-6)
    assert nn.multilabel_bce(np.array([[1.0]]), np.array([[0.5]])) == pytest.approx(math.log(2))
    assert nn.multilabel_bce(np.array([[1.0, 0.0]]), np.array([[0.5, 0.5]])) == pytest.approx(2 * math.log(2))


@given(arrays(np.float64, (2, 3), elements=st.floats(0.0, 1.0)),
       arrays(np.int8, (2, 3), elements=st.integers(0, 1)))
def test_multilabel_bce_non_negative_and_additive(probs, targets):
    targets = targets.astype(np.float64)
    total = nn.multilabel_bce(targets, probs)
    parts = sum(nn.multilabel_bce(targets[i:i + 1], probs[i:i + 1]) for i in range(2))
    assert total >= 0.0
    assert total == pytest.approx(parts)


# adam

def test_adam_zero_gradient_leaves_params_unchanged():
    params = [np.array([1.0, -2.0]), np.ones((2, 2))]
    before = [p.copy() for p in params]
    state = nn.AdamState.for_params(params)
    nn.adam_step(state, params, [np.zeros(2), np.zeros((2, 2))])
    for p, b in zip(params, before):
        np.testing.assert_array_equal(p, b)
    assert state.step == 1


def test_adam_first_step_moves_by_learning_rate():
    x = np.array([0.3])
    state = nn.AdamState.for_params([x], learning_rate=0.1)
    nn.adam_step(state, [x], [np.array([-4.0])])
    assert x[0] == pytest.approx(0.4, abs=1e-6)


def test_adam_minimises_a_quadratic():
    x = np.array([1.0])
    state = nn.AdamState.for_params([x], learning_rate=0.05)
    for _ in range(500):
        nn.adam_step(state, [x], [2.0 * x])
    assert abs(x[0]) < 1e-3


def test_adam_rejects_non_finite_gradient():
    x = np.array([1.0])
    state = nn.AdamState.for_params([x])
    with pytest.raises(NumericError):
        nn.adam_step(state, [x], [np.array([np.inf])])


# dropout

def test_dropout_mask_cases(rng):
    np.testing.assert_array_equal(nn.dropout_mask((3, 4), 0.0, rng), np.ones((3, 4)))
    np.testing.assert_array_equal(nn.dropout_mask((3, 4), 0.5, rng, training=False), np.ones((3, 4)))
    mask = nn.dropout_mask((10_000,), 0.5, rng)
    assert abs((mask > 0).mean() - 0.5) < 0.02
    assert set(np.unique(mask)) <= {0.0, 2.0}


def test_dropout_rate_of_one_is_rejected(rng):
    with pytest.raises(ConfigError):
        nn.dropout_mask((2,), 1.0, rng)


# gradient checks

def test_grad_check_linear_is_exact(rng):
    report = verify.check_linear(rng, 1e-4)
    assert report.passed
    assert report.max_rel_error < 1e-8


def test_grad_check_flags_a_wrong_gradient():
    w = np.array([1.0, 2.0])
    report = nn.grad_check(lambda: (float(np.sum(w ** 2)), [w]), [w])
    assert not report.passed


def test_grad_check_error_is_relative_to_the_larger_gradient():
    w = np.array([2.0])
    # true gradient 2.0, claimed 3.0
    report = nn.grad_check(lambda: (float(0.5 * w[0] ** 2), [1.5 * w]), [w])
    assert report.max_rel_error == pytest.approx(1.0 / 3.0, rel=1e-6)


def test_grad_check_compares_vanishing_gradients_absolutely():
    w = np.array([0.0])
    report = nn.grad_check(lambda: (float(w[0] ** 4), [np.array([1e-9])]), [w])
    assert report.max_rel_error == pytest.approx(1e-9, abs=1e-12)
    assert report.passed


@pytest.mark.parametrize("check", verify.CHECKS)
def test_gradient_suite_passes(check):
    report = check(np.random.default_rng(0), 1e-4)
    assert report.passed, f"{report.name}: {report.max_rel_error}"
