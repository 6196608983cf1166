import numpy as np
import pytest

from fewstep._validation import InvalidInputError
from fewstep.autodiff import tensor as T
from fewstep.models import (
    CnnDenoiser,
    CnnDenoiserConfig,
    DiffusionDenoiser,
    DimDecoder,
    DimDecoderConfig,
    build_model,
    film_gate,
    training_loss,
)
from fewstep.schedule import make_linear

MODEL_RTOL = 1e-4

TINY_CNN = {"in_dims": 2, "hidden_channels": 4, "blocks": 2, "dilations": (1, 2), "time_embed_dim": 4}
TINY_DIM = {"action_dim": 2, "horizon": 6, "token_dim": 4, "depth": 2, "mlp_ratio": 2, "cond_dim": 3,
            "time_embed_dim": 4}


def _fd_check(model, loss_fn, n_params=25, seed=0):
    """Central differences on a random subset of every parameter tensor."""
    params = model.named_parameters()
    model.zero_grad()
    loss_fn().backward()
    rng = np.random.default_rng(seed)
    h = 1e-6
    for name, p in params.items():
        grad = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        idx = rng.choice(flat.size, size=min(n_params, flat.size), replace=False)
        for i in idx:
            old = flat[i]
            flat[i] = old + h
            with T.no_grad():
                fp = float(loss_fn().data)
            flat[i] = old - h
            with T.no_grad():
                fm = float(loss_fn().data)
            flat[i] = old
            num = (fp - fm) / (2 * h)
            ana = grad.reshape(-1)[i]
            assert abs(ana - num) <= MODEL_RTOL * max(abs(num), 1e-4), (name, i, ana, num)


def _randomize(model, seed=5):
    # zero-initialized FiLM layers would hide gradient paths; perturb everything
    rng = np.random.default_rng(seed)
    for p in model.parameters():
        p.data = p.data + 0.3 * rng.standard_normal(p.shape)


def test_cnn_gradients():
    model = build_model("cnn", TINY_CNN, seed=0)
    _randomize(model)
    rng = np.random.default_rng(1)
    x = rng.standard_normal((3, 6, 2))
    target = rng.standard_normal((3, 6, 2))
    t = np.array([0, 40, 99])
    _fd_check(model, lambda: T.mse_loss(model(x, t), T.Tensor(target)))


def test_dim_gradients():
    model = build_model("dim", TINY_DIM, seed=0)
    _randomize(model)
    rng = np.random.default_rng(2)
    x = rng.standard_normal((3, 6, 2))
    cond = rng.standard_normal((3, 3))
    target = rng.standard_normal((3, 6, 2))
    _fd_check(model, lambda: T.mse_loss(model(x, np.array([1, 50, 98]), cond), T.Tensor(target)))


def test_gelu_cnn_gradients():
    cfg = dict(TINY_CNN, activation="gelu")
    model = build_model("cnn", cfg, seed=3)
    x = np.random.default_rng(3).standard_normal((2, 5, 2))
    _fd_check(model, lambda: T.mean(T.mul(model(x, 10), model(x, 10))))


def test_film_gate_closed_is_identity():
    rng = np.random.default_rng(0)
    H = T.Tensor(rng.standard_normal((2, 5, 3)))
    a = T.Tensor(rng.standard_normal((2, 1, 3)))
    b = T.Tensor(rng.standard_normal((2, 1, 3)))
    out = film_gate(H, a, b, T.Tensor(np.zeros((2, 1, 3))))
    np.testing.assert_array_equal(out.data, H.data)


def test_film_gate_hand_example():
    H = np.array([[[1.0, 2.0], [3.0, 4.0]]])
    a = np.array([[[2.0, 0.5]]])
    b = np.array([[[1.0, -1.0]]])
    g = np.array([[[0.5, 1.0]]])
    # (H*a + b) = [[3, 0], [7, 1]]; * g = [[1.5, 0], [3.5, 1]]; + H
    expect = np.array([[[2.5, 2.0], [6.5, 5.0]]])
    out = film_gate(*(T.Tensor(v) for v in (H, a, b, g)))
    np.testing.assert_array_equal(out.data, expect)


def test_dim_block_starts_as_mixer_only():
    # zero-initialized FiLM output: a = b = 0, so the block reduces to the two mixing residuals
    model = build_model("dim", TINY_DIM, seed=0)
    block = model.blocks[0]
    rng = np.random.default_rng(1)
    H = T.Tensor(rng.standard_normal((2, 6, 4)))
    c = T.Tensor(rng.standard_normal((2, 3)))
    a, b, g = block.film_params(c)
    assert np.all(a.data == 0) and np.all(b.data == 0)
    np.testing.assert_allclose(g.data, 0.5)
    H1 = H.data + np.swapaxes(block.temporal(T.transpose(H)).data, -1, -2)
    H2 = H1 + block.channel(T.Tensor(H1)).data
    np.testing.assert_allclose(block(H, c).data, H2, atol=1e-12)


def test_parameter_counts():
    cnn = build_model("cnn", {}, seed=0)
    assert cnn.num_parameters() == 198_724
    dim = build_model("dim", {}, seed=0)
    assert dim.num_parameters() < 2_520_000


def test_output_shapes_and_errors():
    cnn = build_model("cnn", TINY_CNN, seed=0)
    assert cnn(np.zeros((2, 7, 2)), 3).shape == (2, 7, 2)
    with pytest.raises(T.ShapeError, match=r"\(2, 7, 3\)"):
        cnn(np.zeros((2, 7, 3)), 3)
    dim = build_model("dim", TINY_DIM, seed=0)
    with pytest.raises(T.ShapeError):
        dim(np.zeros((2, 7, 2)), 3)
    with pytest.raises(InvalidInputError):
        build_model("unet", {}, 0)
    with pytest.raises(InvalidInputError):
        CnnDenoiserConfig(blocks=0)
    with pytest.raises(InvalidInputError):
        DimDecoderConfig(depth=0)


def test_parameterizations():
    assert CnnDenoiser.parameterization == "epsilon"
    assert DimDecoder.parameterization == "x0"


def test_build_is_seeded():
    a = build_model("cnn", TINY_CNN, 7).state_dict()
    b = build_model("cnn", TINY_CNN, 7).state_dict()
    c = build_model("cnn", TINY_CNN, 8).state_dict()
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert not all(np.array_equal(a[k], c[k]) for k in a)


def test_training_loss_targets():
    s = make_linear()
    model = build_model("cnn", TINY_CNN, 0)
    x0 = np.random.default_rng(0).standard_normal((4, 6, 2))
    loss = training_loss(model, x0, s, np.random.default_rng(1))
    assert loss.data.shape == () and float(loss.data) > 0


def _small_data():
    return np.random.default_rng(0).standard_normal((40, 8, 2))


@pytest.mark.parametrize("arch,cfg", [
    ("cnn", {"hidden_channels": 4, "blocks": 2, "time_embed_dim": 4}),
    ("dim", {"token_dim": 4, "depth": 1, "mlp_ratio": 2, "cond_dim": 4, "time_embed_dim": 4}),
])
def test_estimator_fit_predict_save_load(tmp_path, arch, cfg):
    X = _small_data()
    est = DiffusionDenoiser(arch=arch, config=cfg, epochs=3, batch_size=16, seed=1).fit(X)
    assert len(est.history_) == 3
    assert np.all(np.isfinite(est.history_))
    out = est(X[:5], 10)
    assert out.shape == (5, 8, 2)
    assert est.predict(X[0], 10).shape == (8, 2)
    est.save(tmp_path / "m.fsw")
    back = DiffusionDenoiser.load(tmp_path / "m.fsw")
    np.testing.assert_array_equal(back(X[:5], 10), out)
    assert back.get_params()["arch"] == arch
    assert back.num_parameters() == est.num_parameters()


def test_training_is_deterministic():
    X = _small_data()
    kw = dict(config={"hidden_channels": 4, "blocks": 1, "time_embed_dim": 4}, epochs=2, batch_size=16, seed=3)
    a = DiffusionDenoiser(**kw).fit(X)
    b = DiffusionDenoiser(**kw).fit(X)
    assert a.history_ == b.history_
    np.testing.assert_array_equal(a(X, 50), b(X, 50))


def test_training_reduces_loss():
    X = np.random.default_rng(0).standard_normal((128, 8, 2)) * 0.1
    est = DiffusionDenoiser(config={"hidden_channels": 8, "blocks": 2, "time_embed_dim": 8},
                            epochs=15, batch_size=32, lr=3e-3).fit(X)
    assert est.history_[-1] < est.history_[0]


def test_first_frame_conditioning():
    X = _small_data()
    est = DiffusionDenoiser(arch="dim", config={"token_dim": 4, "depth": 1, "mlp_ratio": 2, "cond_dim": 4,
                                                "time_embed_dim": 4},
                            epochs=1, batch_size=20, cond_mode="first_frame").fit(X)
    c = est.condition_for(X[:3])
    assert c.shape == (3, 4)
    np.testing.assert_array_equal(c[:, :2], X[:3, 0, :])
    assert np.all(c[:, 2:] == 0)
