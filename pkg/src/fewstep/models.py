"""Denoiser networks and the diffusion training objective.

Two architectures share the ``(batch, frames, dims)`` layout:

* :class:`CnnDenoiser` - dilated residual 1-D CNN predicting the injected noise.
* :class:`DimDecoder` - mixer-style decoder predicting the clean trajectory.
  Each block mixes along time, then along channels, then applies FiLM with a
  gated residual ``H <- (H * a + b) * g + H`` whose ``(a, b, g)`` come from the
  conditioning vector plus a timestep embedding.

:class:`DiffusionDenoiser` wraps either network in a scikit-learn estimator.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import InvalidInputError, check_trajectories
from .autodiff import tensor as T
from .autodiff.nn import ACTIVATIONS, MLP, Conv1d, Linear, Module, sinusoidal_embedding
from .autodiff.optim import AdamState, adam_step
from .autodiff.serialize import load_hyperparams, load_weights, save_weights
from .schedule import make_schedule

__all__ = [
    "CnnDenoiserConfig",
    "DimDecoderConfig",
    "CnnDenoiser",
    "DimDecoder",
    "film_gate",
    "build_model",
    "training_loss",
    "train_denoiser",
    "DiffusionDenoiser",
]

log = logging.getLogger(__name__)


@dataclass
class CnnDenoiserConfig:
    in_dims: int = 4
    hidden_channels: int = 64
    blocks: int = 8
    dilations: tuple = (1, 2, 4, 8)
    time_embed_dim: int = 128
    kernel: int = 3
    activation: str = "relu"

    def __post_init__(self):
        self.dilations = tuple(self.dilations)
        if self.blocks < 1 or self.hidden_channels < 1 or self.in_dims < 1:
            raise InvalidInputError(f"invalid CNN config {self}")
        if not self.dilations:
            raise InvalidInputError("dilations must be non-empty")


@dataclass
class DimDecoderConfig:
    action_dim: int = 4
    horizon: int = 64
    token_dim: int = 128
    depth: int = 6
    mlp_ratio: int = 4
    cond_dim: int = 64
    time_embed_dim: int = 64
    activation: str = "silu"

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, int) and v < 1:
                raise InvalidInputError(f"{f.name} must be positive, got {v}")


def _time_features(t, dim, batch):
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (batch,))
    return T.Tensor(sinusoidal_embedding(t, dim))


def _check_input(x, frames=None, dims=None):
    if x.ndim != 3:
        raise T.ShapeError(f"expected (batch, frames, dims) input, got shape {x.shape}")
    if dims is not None and x.shape[2] != dims:
        raise T.ShapeError(f"expected {dims} action dims, got input shape {x.shape}")
    if frames is not None and x.shape[1] != frames:
        raise T.ShapeError(f"expected {frames} frames, got input shape {x.shape}")


class _CnnBlock(Module):
    def __init__(self, channels, dilation, kernel, time_dim, rng):
        self.conv = Conv1d(channels, channels, kernel, rng, dilation=dilation)
        self.time_proj = Linear(time_dim, channels, rng)
        self.mix = Linear(channels, channels, rng)

    def forward(self, h, temb, act):
        B, C = h.shape[0], h.shape[2]
        z = T.add(self.conv(h), T.reshape(self.time_proj(temb), (B, 1, C)))
        return T.add(h, self.mix(act(z)))


class CnnDenoiser(Module):
    """Noise predictor: 1x1 in-projection, dilated residual blocks, 1x1 out-projection.

    Block ``i`` computes ``h + W1x1 act(conv_k,dil_i(h) + P_i emb(t))`` with the
    timestep embedding projected to a per-channel bias after the dilated conv.
    """

    parameterization = "epsilon"

    def __init__(self, cfg, rng):
        self.cfg = cfg
        C = cfg.hidden_channels
        self.in_proj = Linear(cfg.in_dims, C, rng)
        self.blocks = [
            _CnnBlock(C, cfg.dilations[i % len(cfg.dilations)], cfg.kernel, cfg.time_embed_dim, rng)
            for i in range(cfg.blocks)
        ]
        self.out_proj = Linear(C, cfg.in_dims, rng)

    def forward(self, x, t, cond=None):
        x = T.as_tensor(x)
        _check_input(x, dims=self.cfg.in_dims)
        temb = _time_features(t, self.cfg.time_embed_dim, x.shape[0])
        act = ACTIVATIONS[self.cfg.activation]
        h = self.in_proj(x)
        for block in self.blocks:
            h = block(h, temb, act)
        return self.out_proj(h)


def film_gate(H, alpha, beta, gate):
    """``(H * alpha + beta) * gate + H``, broadcasting the modulation over tokens."""
    return T.add(T.mul(T.add(T.mul(H, alpha), beta), gate), H)


class _DimBlock(Module):
    def __init__(self, cfg, rng):
        self.temporal = MLP(cfg.horizon, cfg.horizon * cfg.mlp_ratio, cfg.horizon, rng, cfg.activation)
        self.channel = MLP(cfg.token_dim, cfg.token_dim * cfg.mlp_ratio, cfg.token_dim, rng, cfg.activation)
        # zero output layer: a = b = 0 at init so the modulation branch starts closed
        self.film = MLP(cfg.cond_dim, cfg.token_dim, 3 * cfg.token_dim, rng, cfg.activation, zero_last=True)

    def film_params(self, c):
        a, b, g = T.split(self.film(c), 3, axis=-1)
        B, D = a.shape
        shape = (B, 1, D)
        return T.reshape(a, shape), T.reshape(b, shape), T.reshape(T.sigmoid(g), shape)

    def forward(self, H, c):
        H = T.add(H, T.transpose(self.temporal(T.transpose(H))))
        H = T.add(H, self.channel(H))
        a, b, g = self.film_params(c)
        return film_gate(H, a, b, g)


class DimDecoder(Module):
    """x0-predictor built from mixer blocks with FiLM + gated residual conditioning."""

    parameterization = "x0"

    def __init__(self, cfg, rng):
        self.cfg = cfg
        self.in_proj = Linear(cfg.action_dim, cfg.token_dim, rng)
        self.time_proj = Linear(cfg.time_embed_dim, cfg.cond_dim, rng)
        self.blocks = [_DimBlock(cfg, rng) for _ in range(cfg.depth)]
        self.out_proj = Linear(cfg.token_dim, cfg.action_dim, rng)

    def condition(self, t, cond, batch):
        c = self.time_proj(_time_features(t, self.cfg.time_embed_dim, batch))
        if cond is not None:
            cond = np.broadcast_to(np.asarray(cond, dtype=np.float64), (batch, self.cfg.cond_dim))
            c = T.add(c, cond)
        return c

    def forward(self, x, t, cond=None):
        x = T.as_tensor(x)
        _check_input(x, frames=self.cfg.horizon, dims=self.cfg.action_dim)
        c = self.condition(t, cond, x.shape[0])
        H = self.in_proj(x)
        for block in self.blocks:
            H = block(H, c)
        return self.out_proj(H)


ARCHS = {"cnn": (CnnDenoiser, CnnDenoiserConfig), "dim": (DimDecoder, DimDecoderConfig)}


def build_model(arch, cfg, seed):
    """Instantiate a network with weights drawn from ``SeedSequence([seed, 0])``."""
    if arch not in ARCHS:
        raise InvalidInputError(f"unknown architecture {arch!r}; choose from {sorted(ARCHS)}")
    cls, cfg_cls = ARCHS[arch]
    if isinstance(cfg, dict):
        cfg = cfg_cls(**cfg)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))
    return cls(cfg, rng)


def _cond_vectors(x0, cond_dim, mode):
    if mode == "none":
        return None
    if mode == "first_frame":
        out = np.zeros((x0.shape[0], cond_dim))
        k = min(cond_dim, x0.shape[2])
        out[:, :k] = x0[:, 0, :k]
        return out
    raise InvalidInputError(f"unknown conditioning mode {mode!r}")


def training_loss(model, x0, schedule, rng, cond=None):
    """One draw of the denoising objective on a batch of clean trajectories.

    Samples ``t`` uniformly over training steps and Gaussian noise, forms
    ``x_t = alpha_t x0 + sigma_t eps`` and returns the mean squared error of the
    network output against ``eps`` (epsilon models) or ``x0`` (x0 models).
    """
    x0 = np.asarray(x0, dtype=np.float64)
    B = x0.shape[0]
    t = rng.integers(0, schedule.num_train_steps, size=B)
    eps = rng.standard_normal(x0.shape)
    a = schedule.alphas[t][:, None, None]
    s = schedule.sigmas[t][:, None, None]
    x_t = a * x0 + s * eps
    pred = model.forward(T.Tensor(x_t), t, cond)
    target = eps if model.parameterization == "epsilon" else x0
    return T.mse_loss(pred, T.Tensor(target))


def train_denoiser(model, X, schedule, epochs=60, batch_size=256, lr=1e-3, weight_decay=0.0,
                   seed=0, cond_mode="none"):
    """Minibatch Adam(W) training; returns per-epoch mean losses.

    Shuffling and noise draws come from ``SeedSequence([seed, 1])``, so a run is
    bit-reproducible for fixed inputs.
    """
    X = np.asarray(X, dtype=np.float64)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 1]))
    params = model.named_parameters()
    state = AdamState(lr=lr, weight_decay=weight_decay)
    cond_dim = getattr(model.cfg, "cond_dim", 0)
    history = []
    for epoch in range(int(epochs)):
        order = rng.permutation(len(X))
        total, count = 0.0, 0
        for start in range(0, len(X), batch_size):
            batch = X[order[start : start + batch_size]]
            model.zero_grad()
            loss = training_loss(model, batch, schedule, rng, _cond_vectors(batch, cond_dim, cond_mode))
            loss.backward()
            adam_step(state, params)
            total += float(loss.data) * len(batch)
            count += len(batch)
            del loss
        history.append(total / count)
        log.info("epoch %d/%d loss %.6f", epoch + 1, epochs, history[-1])
        if not np.isfinite(history[-1]):
            raise FloatingPointError(f"training diverged at epoch {epoch + 1}")
    return history


class DiffusionDenoiser(BaseEstimator):
    """Trainable trajectory denoiser with a scikit-learn interface.

    ``fit(X)`` trains on standardized ``(N, n, d)`` trajectories.  A fitted
    estimator is callable as ``est(x_t, t_index, cond)`` and exposes
    ``parameterization`` so it plugs straight into :mod:`fewstep.sampler`.

    Parameters
    ----------
    arch : {"cnn", "dim"}
    config : dict, optional
        Overrides for :class:`CnnDenoiserConfig` / :class:`DimDecoderConfig`;
        data-shape fields are filled from ``X``.
    schedule : dict, optional
        Noise schedule config (see :func:`fewstep.schedule.make_schedule`).
    cond_mode : {"none", "first_frame"}
        Conditioning vector used by the DiM decoder during training and sampling.
    """

    def __init__(self, arch="cnn", config=None, schedule=None, epochs=60, batch_size=256,
                 lr=1e-3, weight_decay=0.0, seed=0, cond_mode="none"):
        self.arch = arch
        self.config = config
        self.schedule = schedule
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.weight_decay = weight_decay
        self.seed = seed
        self.cond_mode = cond_mode

    def _model_config(self, n, d):
        cfg = dict(self.config or {})
        if self.arch == "cnn":
            cfg["in_dims"] = d
            return CnnDenoiserConfig(**cfg)
        cfg["action_dim"] = d
        cfg["horizon"] = n
        return DimDecoderConfig(**cfg)

    def fit(self, X, y=None):
        X = check_trajectories(X)
        self.schedule_ = make_schedule(self.schedule or {})
        self.model_config_ = self._model_config(X.shape[1], X.shape[2])
        self.net_ = build_model(self.arch, self.model_config_, self.seed)
        self.history_ = train_denoiser(
            self.net_, X, self.schedule_, self.epochs, self.batch_size, self.lr,
            self.weight_decay, self.seed, self.cond_mode,
        )
        self.n_frames_, self.n_dims_ = X.shape[1], X.shape[2]
        return self

    @property
    def parameterization(self):
        return ARCHS[self.arch][0].parameterization

    def condition_for(self, x0):
        """Conditioning vectors derived from clean trajectories (``None`` if unconditional)."""
        cond_dim = getattr(self.model_config_, "cond_dim", 0)
        return _cond_vectors(np.asarray(x0, dtype=np.float64), cond_dim, self.cond_mode)

    def predict(self, X_t, t_index, cond=None):
        check_is_fitted(self, "net_")
        X_t = np.asarray(X_t, dtype=np.float64)
        squeeze = X_t.ndim == 2
        if squeeze:
            X_t = X_t[None]
        with T.no_grad():
            out = self.net_.forward(T.Tensor(X_t), t_index, cond).data
        return out[0] if squeeze else out

    __call__ = predict

    def num_parameters(self):
        check_is_fitted(self, "net_")
        return self.net_.num_parameters()

    def hyperparams(self):
        return {
            "format": "fewstep-model/1",
            "arch": self.arch,
            "model_config": asdict(self.model_config_),
            "schedule": self.schedule_.to_config(),
            "training": {
                "epochs": self.epochs, "batch_size": self.batch_size, "lr": self.lr,
                "weight_decay": self.weight_decay, "seed": self.seed, "cond_mode": self.cond_mode,
            },
            "history": list(self.history_),
            "n_frames": self.n_frames_,
            "n_dims": self.n_dims_,
        }

    def save(self, path):
        check_is_fitted(self, "net_")
        save_weights(path, self.net_.state_dict(), self.hyperparams())

    @classmethod
    def load(cls, path):
        hp = load_hyperparams(path)
        tr = hp["training"]
        est = cls(arch=hp["arch"], config=hp["model_config"], schedule=hp["schedule"],
                  epochs=tr["epochs"], batch_size=tr["batch_size"], lr=tr["lr"],
                  weight_decay=tr["weight_decay"], seed=tr["seed"], cond_mode=tr["cond_mode"])
        est.schedule_ = make_schedule(hp["schedule"])
        est.model_config_ = ARCHS[hp["arch"]][1](**hp["model_config"])
        est.net_ = build_model(hp["arch"], est.model_config_, tr["seed"])
        est.net_.load_state_dict(load_weights(path))
        est.history_ = hp.get("history", [])
        est.n_frames_, est.n_dims_ = hp["n_frames"], hp["n_dims"]
        return est
