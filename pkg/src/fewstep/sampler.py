"""Forward corruption and reverse samplers (deterministic DDIM, ancestral DDPM).

A *model* is any callable ``model(x_t, t_index, cond) -> array`` with a
``parameterization`` attribute of ``"epsilon"`` or ``"x0"``; trajectories are
batched as ``(batch, frames, dims)``.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._validation import InvalidInputError, check_same_shape
from .schedule import make_grid

__all__ = [
    "SamplerError",
    "SampleRun",
    "forward_corrupt",
    "to_x0",
    "ddim_step",
    "sample",
    "ddpm_sample",
    "terminal_noise",
    "noise_digest",
    "step_ablation",
]


class SamplerError(ValueError):
    pass


def forward_corrupt(x0, schedule, t_index, noise):
    """``alpha_t x0 + sigma_t noise`` at a training index."""
    check_same_shape(x0, noise, "forward_corrupt")
    alpha, sigma = schedule.alpha_sigma(int(t_index))
    return alpha * np.asarray(x0, dtype=np.float64) + sigma * np.asarray(noise, dtype=np.float64)


def to_x0(x_t, model_output, parameterization, alpha, sigma):
    """Clean-sample estimate implied by a model output."""
    if parameterization == "x0":
        return np.asarray(model_output, dtype=np.float64)
    if parameterization == "epsilon":
        return (x_t - sigma * model_output) / alpha
    raise SamplerError(f"unknown parameterization {parameterization!r}")


def ddim_step(x_t, t_from, t_to, model_output, parameterization, schedule):
    """One deterministic DDIM transition from ``t_from`` to ``t_to``.

    ``t_to = -1`` returns the clean-sample estimate itself.
    """
    if not t_from > t_to >= -1:
        raise SamplerError(f"need t_from > t_to >= -1, got {t_from} -> {t_to}")
    check_same_shape(x_t, model_output, "ddim_step")
    a, s = schedule.alpha_sigma(int(t_from))
    x_t = np.asarray(x_t, dtype=np.float64)
    x0_hat = to_x0(x_t, model_output, parameterization, a, s)
    if t_to == -1:
        return x0_hat
    if parameterization == "epsilon":
        eps_hat = np.asarray(model_output, dtype=np.float64)
    else:
        if s == 0:
            raise SamplerError(f"sigma is zero at non-terminal step {t_from}")
        eps_hat = (x_t - a * x0_hat) / s
    a_to, s_to = schedule.alpha_sigma(int(t_to))
    return a_to * x0_hat + s_to * eps_hat


def sample(model, schedule, K, terminal, cond=None):
    """Run ``K``-step DDIM from ``terminal`` noise along :func:`make_grid`."""
    grid = make_grid(schedule, K)
    x = np.asarray(terminal, dtype=np.float64)
    for t_from, t_to in grid.transitions():
        out = model(x, t_from, cond)
        x = ddim_step(x, t_from, t_to, out, model.parameterization, schedule)
    return x


def ddpm_sample(model, schedule, shape, seed, cond=None):
    """Ancestral sampling over every training step; no noise is added at index 0."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 2]))
    x = rng.standard_normal(shape)
    ab = np.asarray(schedule.alpha_bar)
    for t in range(schedule.num_train_steps - 1, -1, -1):
        a, s = schedule.alpha_sigma(t)
        x0_hat = to_x0(x, model(x, t, cond), model.parameterization, a, s)
        if t == 0:
            x = x0_hat
            break
        ab_prev = ab[t - 1]
        beta_t = 1.0 - ab[t] / ab_prev
        coef0 = np.sqrt(ab_prev) * beta_t / (1.0 - ab[t])
        coeft = np.sqrt(1.0 - beta_t) * (1.0 - ab_prev) / (1.0 - ab[t])
        var = beta_t * (1.0 - ab_prev) / (1.0 - ab[t])
        x = coef0 * x0_hat + coeft * x + np.sqrt(var) * rng.standard_normal(shape)
    return x


def terminal_noise(seed, count, n, d):
    """Terminal Gaussian draws; draw ``i`` comes from ``SeedSequence(seed, spawn_key=(3, i))``."""
    out = np.empty((int(count), n, d))
    for i in range(int(count)):
        rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(3, i)))
        out[i] = rng.standard_normal((n, d))
    return out


def noise_digest(noise):
    return hashlib.sha256(np.ascontiguousarray(noise, dtype="<f8").tobytes()).hexdigest()


@dataclass
class SampleRun:
    """Outputs of a step ablation; every ``K`` starts from the same terminal noise."""

    terminal: np.ndarray
    steps: tuple
    parameterization: str
    outputs: dict = field(default_factory=dict)
    noise_hash: str = ""

    def verify_shared_noise(self, terminal):
        if noise_digest(terminal) != self.noise_hash:
            raise SamplerError("terminal noise differs from the one recorded for this run")


def _chunks(count, parts):
    bounds = np.linspace(0, count, parts + 1).astype(int)
    return [(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]


def step_ablation(model, schedule, steps, terminal, cond=None, threads=1):
    """Decode the same terminal noise with each ``K`` in ``steps``.

    Work is split over trajectory chunks; results are written back by index
    so they do not depend on ``threads``.
    """
    terminal = np.asarray(terminal, dtype=np.float64)
    if terminal.ndim != 3:
        raise InvalidInputError(f"terminal noise must be (count, frames, dims), got {terminal.shape}")
    steps = tuple(int(k) for k in steps)
    run = SampleRun(terminal.copy(), steps, model.parameterization, noise_hash=noise_digest(terminal))
    spans = _chunks(len(terminal), max(1, int(threads)))

    def work(span):
        lo, hi = span
        c = None if cond is None else cond[lo:hi]
        return {K: sample(model, schedule, K, terminal[lo:hi], c) for K in steps}

    if len(spans) == 1:
        parts = [work(spans[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(spans)) as pool:
            parts = list(pool.map(work, spans))
    for K in steps:
        run.outputs[K] = np.concatenate([p[K] for p in parts], axis=0)
    run.verify_shared_noise(terminal)
    return run
