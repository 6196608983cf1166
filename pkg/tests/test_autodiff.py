import numpy as np
import pytest

from fewstep.autodiff import tensor as T
from fewstep.autodiff.nn import MLP, Conv1d, Linear, Parameter, sinusoidal_embedding
from fewstep.autodiff.optim import AdamState, adam_step
from fewstep.autodiff.serialize import (
    WeightFormatError,
    load_hyperparams,
    load_weights,
    save_weights,
    sidecar_path,
)

RTOL = 1e-6


def numeric_grad(f, arr, h=1e-6):
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = arr[i]
        arr[i] = old + h
        fp = f()
        arr[i] = old - h
        fm = f()
        arr[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def check_grads(build, inputs, rtol=RTOL):
    """``build(*tensors)`` returns a scalar tensor; compare analytic and central-difference grads."""
    tensors = [Parameter(x) for x in inputs]
    build(*tensors).backward()
    for t in tensors:
        def f():
            with T.no_grad():
                return float(build(*[T.Tensor(u.data) for u in tensors]).data)
        num = numeric_grad(f, t.data)
        scale = max(np.max(np.abs(num)), 1e-3)
        assert np.max(np.abs(t.grad - num)) / scale < rtol, (t.grad, num)


def weighted_sum(y, seed=0):
    w = np.random.default_rng(seed).standard_normal(y.shape)
    return T.tensor_sum(T.mul(y, T.Tensor(w)))


rng = np.random.default_rng(0)


@pytest.mark.parametrize("op", [T.add, T.sub, T.mul])
def test_binary_broadcast(op):
    check_grads(lambda a, b: weighted_sum(op(a, b)), [rng.standard_normal((3, 4, 2)), rng.standard_normal((4, 1))])


def test_neg_and_operators():
    check_grads(lambda a, b: weighted_sum(-(a * b) + a - b), [rng.standard_normal((2, 3)), rng.standard_normal((2, 3))])


def test_matmul():
    check_grads(lambda a, b: weighted_sum(T.matmul(a, b)), [rng.standard_normal((2, 3, 4)), rng.standard_normal((4, 5))])
    check_grads(lambda a, b: weighted_sum(a @ b), [rng.standard_normal((3, 4)), rng.standard_normal((4, 2))])


def test_transpose_reshape():
    check_grads(lambda a: weighted_sum(T.reshape(T.transpose(a), (2, 12))), [rng.standard_normal((2, 3, 4))])


def test_split_concat():
    def f(a, b):
        p, q, r = T.split(a, 3, axis=-1)
        return weighted_sum(T.concat([T.mul(p, q), r, b], axis=-1))
    check_grads(f, [rng.standard_normal((2, 6)), rng.standard_normal((2, 3))])


@pytest.mark.parametrize("act", [T.gelu, T.sigmoid, T.silu, T.tanh])
def test_smooth_activations(act):
    check_grads(lambda a: weighted_sum(act(a)), [rng.standard_normal((4, 5))])


def test_relu_away_from_kink():
    x = rng.standard_normal((4, 5))
    x[np.abs(x) < 0.1] = 0.5
    check_grads(lambda a: weighted_sum(T.relu(a)), [x])


def test_gelu_tanh_form():
    x = np.linspace(-3, 3, 13)
    ref = 0.5 * x * (1 + np.tanh(np.sqrt(2 / np.pi) * (x + 0.044715 * x**3)))
    np.testing.assert_allclose(T.gelu(T.Tensor(x)).data, ref, atol=1e-15)


@pytest.mark.parametrize("dilation", [1, 2, 4])
def test_conv1d(dilation):
    check_grads(
        lambda x, w, b: weighted_sum(T.conv1d(x, w, b, dilation=dilation)),
        [rng.standard_normal((2, 9, 3)), rng.standard_normal((3, 3, 2)), rng.standard_normal(2)],
    )


def test_conv1d_matches_direct_sum():
    x = rng.standard_normal((1, 7, 2))
    w = rng.standard_normal((3, 2, 1))
    out = T.conv1d(T.Tensor(x), T.Tensor(w), None, dilation=2).data
    ref = np.zeros((7, 1))
    for t in range(7):
        for j in range(3):
            s = t + (j - 1) * 2
            if 0 <= s < 7:
                ref[t] += x[0, s] @ w[j]
    np.testing.assert_allclose(out[0], ref, atol=1e-14)


def test_conv1d_shape_errors():
    with pytest.raises(T.ShapeError, match=r"\(2, 9, 3\)"):
        T.conv1d(T.Tensor(np.zeros((2, 9, 3))), T.Tensor(np.zeros((3, 4, 2))))


def test_matmul_shape_error_reports_shapes():
    with pytest.raises(T.ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
        T.matmul(T.Tensor(np.zeros((2, 3))), T.Tensor(np.zeros((4, 5))))


def test_mean_and_mse():
    check_grads(lambda a: T.mean(T.mul(a, a)), [rng.standard_normal((3, 4))])
    target = rng.standard_normal((3, 4))
    check_grads(lambda a: T.mse_loss(a, T.Tensor(target)), [rng.standard_normal((3, 4))])


def test_grad_accumulates_through_reuse():
    a = Parameter(np.array([2.0, -1.0]))
    T.tensor_sum(T.mul(a, a)).backward()
    np.testing.assert_allclose(a.grad, [4.0, -2.0])


def test_no_grad_records_nothing():
    a = Parameter(np.ones(3))
    with T.no_grad():
        y = T.mul(a, a)
    assert not y.requires_grad


def test_backward_frees_graph():
    a = Parameter(np.ones(3))
    y = T.tensor_sum(T.mul(a, a))
    y.backward()
    assert y._parents == ()


def test_layers():
    r = np.random.default_rng(1)
    for layer, x in (
        (Linear(3, 4, r), r.standard_normal((2, 5, 3))),
        (Conv1d(3, 2, 3, r, dilation=2), r.standard_normal((2, 8, 3))),
        (MLP(3, 6, 2, r, activation="gelu"), r.standard_normal((4, 3))),
    ):
        params = layer.named_parameters()
        xt = T.Tensor(x)
        loss = weighted_sum(layer(xt))
        layer.zero_grad()
        loss.backward()
        for name, p in params.items():
            def f():
                with T.no_grad():
                    return float(weighted_sum(layer(xt)).data)
            num = numeric_grad(f, p.data)
            scale = max(np.max(np.abs(num)), 1e-3)
            assert np.max(np.abs(p.grad - num)) / scale < RTOL, name


def test_zero_init_linear():
    lin = Linear(3, 2, np.random.default_rng(0), zero_init=True)
    assert np.all(lin(T.Tensor(np.ones((1, 3)))).data == 0)


def test_sinusoidal_embedding():
    e = sinusoidal_embedding(np.array([0.0, 5.0]), 8)
    assert e.shape == (2, 8)
    np.testing.assert_allclose(e[0], [0, 0, 0, 0, 1, 1, 1, 1])
    freqs = np.exp(-np.log(10000.0) * np.arange(4) / 4)
    np.testing.assert_allclose(e[1, :4], np.sin(5 * freqs), atol=1e-12)


def test_adam_first_step_is_lr_sign():
    p = Parameter(np.array([1.0, -2.0]))
    p.grad = np.array([0.5, -3.0])
    st = AdamState(lr=0.1)
    adam_step(st, {"p": p})
    np.testing.assert_allclose(p.data, [0.9, -1.9], atol=1e-6)


def test_adamw_decoupled_decay():
    p = Parameter(np.array([1.0]))
    p.grad = np.array([0.0])
    st = AdamState(lr=0.1, weight_decay=0.5)
    adam_step(st, {"p": p})
    np.testing.assert_allclose(p.data, [0.95])


def test_adam_minimizes_quadratic():
    p = Parameter(np.array([3.0, -4.0]))
    st = AdamState(lr=0.1)
    for _ in range(500):
        p.grad = None
        T.tensor_sum(T.mul(p, p)).backward()
        adam_step(st, {"p": p})
    assert np.max(np.abs(p.data)) < 1e-2


def test_weights_round_trip(tmp_path):
    state = {"a.w": rng.standard_normal((3, 2)), "b": np.arange(4.0)}
    path = tmp_path / "m.fsw"
    save_weights(path, state, {"arch": "cnn"})
    back = load_weights(path)
    assert list(back) == list(state)
    for k in state:
        np.testing.assert_array_equal(back[k], state[k])
    assert load_hyperparams(path) == {"arch": "cnn"}
    assert sidecar_path(path).exists()


def test_weights_rejects_corruption(tmp_path):
    path = tmp_path / "m.fsw"
    save_weights(path, {"w": np.ones(3)})
    raw = path.read_bytes()
    (tmp_path / "bad.fsw").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(WeightFormatError):
        load_weights(tmp_path / "bad.fsw")
    (tmp_path / "short.fsw").write_bytes(raw[:-8])
    with pytest.raises(WeightFormatError):
        load_weights(tmp_path / "short.fsw")
