import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from _gradcases import ALL_CASES
from elevgan.nn import ParamSet, ShapeError, Tape, Tensor, adam_step, backward, grad_check, numeric_gradient, ops


@pytest.mark.parametrize("name", sorted(ALL_CASES))
def test_gradients_match_finite_differences(name):
    for seed in range(3):
        params, objective = ALL_CASES[name](seed)
        result = grad_check(objective, params)
        assert result.checked > 0
        assert result.max_rel_error < 1e-4, f"{name} seed {seed}: {result}"


def test_grad_check_flags_relu_kink():
    params = ParamSet({"a": np.array([0.0, 1.0])})
    result = grad_check(lambda: ops.sum(ops.relu(params["a"])), params)
    assert result.excluded == [("a", 0)]
    assert result.checked == 1 and result.max_rel_error < 1e-9


def test_grad_check_detects_wrong_gradient():
    params = ParamSet({"a": np.array([0.3, -0.7])})

    def wrong():
        a = params["a"]
        out = Tensor(np.sum(a.data**2))
        from elevgan.nn.tensor import record

        record("bad_square", (a,), (out,), lambda g: (g[0] * a.data,))  # missing factor 2
        return out

    assert grad_check(wrong, params).max_rel_error > 0.1


def test_numeric_gradient_of_quadratic():
    x = np.array([1.0, -2.0, 0.5])
    np.testing.assert_allclose(numeric_gradient(lambda: float((x**2).sum()), x), 2 * x, atol=1e-9)


finite = st.floats(-30, 30, allow_nan=False)


@given(arrays(np.float64, (3, 5), elements=finite))
def test_softmax_is_a_distribution(z):
    p = ops.softmax(Tensor(z)).data
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-12)
    assert (p >= 0).all()
    shifted = ops.softmax(Tensor(z + 123.0)).data
    np.testing.assert_allclose(p, shifted, atol=1e-12)


@given(arrays(np.float64, (4,), elements=finite), st.integers(0, 3))
def test_softmax_cross_entropy_equals_composition(z, target):
    fused = ops.softmax_cross_entropy(Tensor(z[None]), np.array([target])).item()
    composed = ops.categorical_cross_entropy(ops.softmax(Tensor(z[None])), np.array([target])).item()
    assert fused == pytest.approx(composed, rel=1e-9, abs=1e-9) or not np.isfinite(composed)


def test_sigmoid_bce_stable_for_large_logits():
    loss = ops.sigmoid_binary_cross_entropy(Tensor(np.array([800.0, -800.0])), np.array([0.0, 1.0])).item()
    assert loss == pytest.approx(800.0)


def test_dropout_inference_identity_and_training_statistics():
    x = Tensor(np.ones((200, 500)))
    assert ops.dropout(x, 0.3, None, training=False) is x
    out = ops.dropout(x, 0.3, np.random.default_rng(0), training=True).data
    kept = (out > 0).mean()
    # 100k Bernoulli(0.7) draws: sd of the mean ~ 0.0015
    assert abs(kept - 0.7) < 0.01
    assert abs(out.mean() - 1.0) < 0.015
    assert set(np.unique(out)) <= {0.0, 1 / 0.7}


def test_dropout_training_needs_rng():
    with pytest.raises(ValueError):
        ops.dropout(Tensor(np.ones(3)), 0.5, None, training=True)


def test_lstm_zero_length_returns_initial_state():
    h0, c0 = np.ones((2, 3)), np.full((2, 3), 2.0)
    hs, h, c = ops.lstm(Tensor(np.zeros((2, 0, 4))), Tensor(h0), Tensor(c0), Tensor(np.zeros((4, 12))), Tensor(np.zeros((3, 12))), Tensor(np.zeros(12)))
    assert hs.shape == (2, 0, 3)
    np.testing.assert_array_equal(h.data, h0)
    np.testing.assert_array_equal(c.data, c0)


def test_conv1d_matches_direct_sum():
    rng = np.random.default_rng(1)
    x, k, b = rng.normal(size=(9, 2)), rng.normal(size=(3, 2, 4)), rng.normal(size=4)
    out = ops.conv1d(Tensor(x), Tensor(k), Tensor(b)).data
    direct = np.array([[np.sum(x[t : t + 3] * k[:, :, f]) + b[f] for f in range(4)] for t in range(7)])
    np.testing.assert_allclose(out, direct, atol=1e-12)


@pytest.mark.parametrize(
    "call",
    [
        lambda: ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2)))),
        lambda: ops.add(Tensor(np.ones(2)), Tensor(np.ones(3))),
        lambda: ops.conv1d(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 3, 1)))),
        lambda: ops.softmax_cross_entropy(Tensor(np.ones((2, 3))), np.array([0, 3])),
        lambda: ops.embedding_lookup(Tensor(np.ones((3, 2))), np.array([3])),
    ],
)
def test_shape_errors_are_raised(call):
    with pytest.raises(ShapeError):
        call()


def test_shape_error_names_op_and_shapes():
    with pytest.raises(ShapeError, match=r"matmul.*\(2, 3\).*\(4, 2\)"):
        ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))


def test_tape_accumulates_shared_inputs():
    params = ParamSet({"a": np.array([3.0])})
    with Tape() as tape:
        a = params["a"]
        loss = ops.sum(ops.add(ops.mul(a, a), a))
    grads = backward(tape, loss, params)
    np.testing.assert_allclose(grads["a"], [7.0])


def test_backward_requires_scalar_and_untouched_params_get_zero():
    params = ParamSet({"a": np.ones(2), "unused": np.ones(3)})
    with Tape() as tape:
        loss = ops.sum(ops.scale(params["a"], 2.0))
    grads = backward(tape, loss, params)
    np.testing.assert_array_equal(grads["unused"], np.zeros(3))
    with Tape() as tape:
        vec = ops.scale(params["a"], 2.0)
    with pytest.raises(ShapeError):
        tape.backward(vec)


def test_no_recording_outside_tape():
    params = ParamSet({"a": np.ones(2)})
    out = ops.scale(params["a"], 2.0)
    assert Tape.current() is None and out.data.tolist() == [2.0, 2.0]


def test_adam_matches_reference_recursion():
    params = ParamSet({"w": np.array([1.0, -2.0])})
    m = v = np.zeros(2)
    w = np.array([1.0, -2.0])
    lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
    for t in range(1, 6):
        g = np.array([0.5 * t, -1.0])
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w = w - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        adam_step(params, {"w": g}, lr)
    np.testing.assert_allclose(params["w"].data, w, rtol=1e-14)
    assert params.step_count == 5


def test_adam_first_step_moves_by_lr():
    params = ParamSet({"w": np.array([0.0, 0.0])})
    adam_step(params, {"w": np.array([3.0, -0.2])}, 0.1)
    np.testing.assert_allclose(params["w"].data, [-0.1, 0.1], rtol=1e-6)


def test_adam_rejects_shape_mismatch():
    params = ParamSet({"w": np.zeros(2)})
    with pytest.raises(ShapeError):
        adam_step(params, {"w": np.zeros(3)}, 0.1)


@settings(max_examples=20)
@given(arrays(np.float64, (2, 3), elements=st.floats(-1e6, 1e6, allow_nan=False)))
def test_paramset_save_load_roundtrip(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("ckpt") / "p.npz"
    params = ParamSet({"layer/w": values, "b": values[0]})
    params.save(path)
    loaded = ParamSet.load(path)
    assert loaded.equal(params) and list(loaded) == ["layer/w", "b"]
