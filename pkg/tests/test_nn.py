import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dscope import gradcheck, nn
from dscope.nn import DenseLayer, MLPModel, SGDConfig

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def random_model(seed, sizes=(5, 6, 4, 3), acts=("relu", "tanh", "identity")):
    rng = np.random.default_rng(seed)
    layers = [
        DenseLayer(rng.normal(size=(o, i)), rng.normal(size=o) * 0.1, a)
        for i, o, a in zip(sizes[:-1], sizes[1:], acts)
    ]
    return MLPModel(layers)


# -- forward -------------------------------------------------------------------


def test_identity_layer_passes_input_through():
    model = MLPModel([DenseLayer(np.eye(3), np.zeros(3), "identity")])
    x = np.array([[1.5, -2.0, 0.25]])
    np.testing.assert_array_equal(nn.forward(model, x)[-1], x)


def test_relu_on_negative_input_is_zero():
    model = MLPModel([DenseLayer(np.eye(4), np.zeros(4), "relu")])
    out = nn.forward(model, -np.abs(np.random.default_rng(0).normal(size=(5, 4))) - 0.1)[-1]
    assert np.all(out == 0)


def test_two_layer_net_matches_hand_arithmetic():
    model = nn.init_mlp([2, 3, 2], seed=0)
    w1, b1 = model.layers[0].weights, model.layers[0].bias
    w2, b2 = model.layers[1].weights, model.layers[1].bias
    hidden = []
    for r in range(3):
        z = w1[r][0] * 1.0 + w1[r][1] * 1.0 + b1[r]
        hidden.append(z if z > 0 else 0.0)
    expected = [sum(w2[r][c] * hidden[c] for c in range(3)) + b2[r] for r in range(2)]
    np.testing.assert_allclose(nn.forward(model, [[1.0, 1.0]])[-1][0], expected, rtol=1e-12)


def test_forward_returns_one_matrix_per_tap():
    model = nn.init_mlp([8, 6, 6, 6, 6, 3], seed=1)
    outs = nn.forward(model, np.ones((4, 8)))
    assert len(outs) == 5
    assert [o.shape[1] for o in outs] == [6, 6, 6, 6, 3]


def test_dimension_mismatch_names_layer():
    model = nn.init_mlp([4, 3, 2], seed=0)
    with pytest.raises(nn.ShapeError) as err:
        nn.forward(model, np.ones((2, 5)))
    assert err.value.layer == 0
    with pytest.raises(nn.ShapeError) as err:
        MLPModel([DenseLayer(np.ones((3, 4)), np.zeros(3)), DenseLayer(np.ones((2, 5)), np.zeros(2))])
    assert err.value.layer == 1


def test_forward_is_bitwise_deterministic():
    model = nn.init_mlp([10, 16, 16, 4], seed=3, hidden_activation="tanh")
    x = np.random.default_rng(1).normal(size=(33, 10))
    a, b = nn.forward(model, x), nn.forward(model, x)
    for u, v in zip(a, b):
        assert u.tobytes() == v.tobytes()


def test_tap_validation():
    layers = nn.init_mlp([3, 3, 3, 3], seed=0).layers
    with pytest.raises(ValueError):
        MLPModel(layers, [0, 2, 1])
    with pytest.raises(ValueError):
        MLPModel(layers, [0, 1])
    assert MLPModel(layers).tap_points == [0, 1, 2]


# -- softmax / KL / cross-entropy ----------------------------------------------


def test_softmax_examples():
    np.testing.assert_allclose(nn.softmax_t([0.0, 0.0], 1.0), [0.5, 0.5], atol=1e-12)
    np.testing.assert_allclose(nn.softmax_t([math.log(2), 0.0], 1.0), [2 / 3, 1 / 3], atol=1e-12)
    np.testing.assert_allclose(nn.softmax_t([10.0, 0.0], 10000.0), [0.5, 0.5], atol=1e-3)


@pytest.mark.parametrize("T", [0.0, -1.0])
def test_softmax_rejects_nonpositive_temperature(T):
    with pytest.raises(ValueError):
        nn.softmax_t([1.0, 2.0], T)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(2, 12), elements=finite), finite, st.floats(0.05, 100))
def test_softmax_is_distribution_and_shift_invariant(logits, shift, T):
    p = nn.softmax_t(logits, T)
    assert np.all(p > 0) or np.all(p >= 0)
    assert abs(p.sum() - 1.0) < 1e-12
    assert np.max(np.abs(nn.softmax_t(logits + shift, T) - p)) < 1e-12


def test_kl_examples():
    assert nn.kl_divergence([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert nn.kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-12)
    with pytest.raises(ValueError):
        nn.kl_divergence([0.5, 0.5], [0.2, 0.3, 0.5])


def test_kl_matches_scalar_loop():
    rng = np.random.default_rng(7)
    for _ in range(50):
        p = rng.dirichlet(np.ones(6))
        q = rng.dirichlet(np.ones(6))
        expected = 0.0
        for pi, qi in zip(p, q):
            expected += pi * math.log(pi / qi)
        assert nn.kl_divergence(p, q) == pytest.approx(expected, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 10))
def test_kl_nonnegative_and_zero_on_self(seed, k):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(k))
    q = rng.dirichlet(np.ones(k))
    assert nn.kl_divergence(p, q) >= 0
    assert nn.kl_divergence(p, p) == 0.0


def test_cross_entropy_examples():
    assert nn.cross_entropy([0.0, 0.0, 0.0, 0.0], 2) == pytest.approx(math.log(4), abs=1e-12)
    assert nn.cross_entropy([100.0, 0.0], 0) < 1e-6
    with pytest.raises(IndexError):
        nn.cross_entropy([1.0, 2.0], 2)


def test_cross_entropy_matches_softmax_then_log():
    rng = np.random.default_rng(11)
    for _ in range(50):
        logits = rng.normal(scale=3, size=7)
        label = int(rng.integers(7))
        e = [math.exp(v) for v in logits]
        expected = -math.log(e[label] / sum(e))
        assert nn.cross_entropy(logits, label) == pytest.approx(expected, abs=1e-9)


def test_distillation_loss_zero_iff_logits_differ_by_row_constant():
    rng = np.random.default_rng(2)
    g = rng.normal(size=(8, 5))
    loss, grad = nn.distillation_loss(g, g + rng.normal(size=(8, 1)), 4.0)
    assert loss == pytest.approx(0.0, abs=1e-14)
    assert np.max(np.abs(grad)) < 1e-14
    loss, _ = nn.distillation_loss(g, rng.normal(size=(8, 5)), 4.0)
    assert loss > 0


def test_distillation_loss_is_mean_of_rowwise_kl():
    rng = np.random.default_rng(5)
    g, f = rng.normal(size=(6, 4)), rng.normal(size=(6, 4))
    T = 4.0
    expected = np.mean([nn.kl_divergence(nn.softmax_t(a, T), nn.softmax_t(b, T)) for a, b in zip(g, f)])
    assert nn.distillation_loss(g, f, T)[0] == pytest.approx(expected, abs=1e-12)


# -- gradients and SGD ---------------------------------------------------------


@pytest.mark.parametrize("seed", range(20))
def test_cross_entropy_gradient_matches_finite_differences(seed):
    model = random_model(seed)
    rng = np.random.default_rng(100 + seed)
    x = rng.normal(size=(4, 5))
    y = rng.integers(0, 3, size=4)
    err = gradcheck.check_model(model, x, lambda out: nn.cross_entropy_loss(out, y))
    assert err < 1e-4


@pytest.mark.parametrize("seed", range(20))
def test_distillation_gradient_matches_finite_differences(seed):
    model = random_model(seed, acts=("tanh", "relu", "identity"))
    rng = np.random.default_rng(200 + seed)
    x = rng.normal(size=(4, 5))
    teacher = rng.normal(scale=3, size=(4, 3))
    err = gradcheck.check_model(model, x, lambda out: nn.distillation_loss(out, teacher, 4.0))
    assert err < 1e-4


def test_zero_loss_gradient_leaves_model_unchanged():
    model = nn.init_mlp([3, 4, 2], seed=0)
    before = model.copy()
    nn.backward_and_step(model, np.ones((2, 3)), lambda out: (0.0, np.zeros_like(out)), SGDConfig())
    for a, b in zip(model.layers, before.layers):
        assert np.array_equal(a.weights, b.weights) and np.array_equal(a.bias, b.bias)


def test_linear_squared_error_gradient_is_analytic():
    rng = np.random.default_rng(4)
    W = rng.normal(size=(2, 3))
    model = MLPModel([DenseLayer(W.copy(), np.zeros(2), "identity")])
    x = rng.normal(size=3)
    y = rng.normal(size=2)

    def sq(out):
        r = out - y
        return float(np.sum(r * r)), 2 * r

    pre, post = nn.forward_all(model, x[None, :])
    (dw, _), = nn.backward(model, x[None, :], pre, post, sq(post[-1])[1])
    np.testing.assert_allclose(dw, 2 * np.outer(W @ x - y, x), rtol=1e-12)


def test_learning_rate_schedule():
    cfg = SGDConfig(initial_lr=0.1, decay_every=60, decay_factor=0.2)
    assert nn.learning_rate(cfg, 0) == 0.1
    assert nn.learning_rate(cfg, 59) == 0.1
    assert nn.learning_rate(cfg, 60) == pytest.approx(0.02, rel=1e-12)
    assert nn.learning_rate(cfg, 120) == pytest.approx(0.004, rel=1e-12)


def test_sgd_config_validation():
    with pytest.raises(ValueError):
        SGDConfig(initial_lr=0)
    with pytest.raises(ValueError):
        SGDConfig(decay_factor=1.5)
    with pytest.raises(ValueError):
        SGDConfig(batch_size=0)


def test_non_finite_gradient_names_layer():
    model = nn.init_mlp([2, 3, 2], seed=0)
    with pytest.raises(nn.NonFiniteError) as err:
        pre, post = nn.forward_all(model, np.ones((1, 2)))
        nn.backward(model, np.ones((1, 2)), pre, post, np.array([[np.inf, 0.0]]))
    assert err.value.layer == 1


# -- serialisation -------------------------------------------------------------


def test_model_roundtrip_through_f32_file(tmp_path):
    model = nn.init_mlp([5, 7, 3], seed=9, hidden_activation="tanh")
    path = tmp_path / "m.dscm"
    nn.save_model(model, path)
    back = nn.load_model(path)
    for a, b in zip(model.layers, back.layers):
        assert a.activation == b.activation
        np.testing.assert_array_equal(b.weights, a.weights.astype(np.float32).astype(np.float64))
    # second save of the loaded model is byte-identical
    assert nn.model_to_bytes(back) == path.read_bytes()


def test_model_file_layout():
    model = MLPModel([DenseLayer([[1.0, 2.0]], [0.5], "relu")])
    data = nn.model_to_bytes(model)
    assert data[:4] == b"DSCM"
    assert struct.unpack_from("<II", data, 4) == (1, 1)
    assert struct.unpack_from("<IIB", data, 12) == (1, 2, 1)
    assert struct.unpack_from("<3f", data, 21) == (1.0, 2.0, 0.5)
    with pytest.raises(ValueError):
        nn.model_from_bytes(b"XXXX" + data[4:])
