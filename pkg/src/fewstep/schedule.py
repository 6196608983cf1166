"""Variance-preserving noise schedules and reverse-sampler step grids.

Index ``i`` in ``[0, num_train_steps - 1]`` is a training timestep;
``alpha_bar[i]`` is the cumulative signal fraction, ``alpha = sqrt(alpha_bar)``
and ``sigma = sqrt(1 - alpha_bar)``.  Continuous time ``t`` in ``[0, 1]``
corresponds to index ``t * num_train_steps - 1`` (``t = 0`` is clean data).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ScheduleError",
    "NoiseSchedule",
    "StepGrid",
    "make_linear",
    "make_cosine",
    "make_schedule",
    "snr_ratio",
    "make_grid",
]


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseSchedule:
    kind: str
    num_train_steps: int
    alpha_bar: np.ndarray
    betas: np.ndarray | None = None

    @property
    def alphas(self):
        return np.sqrt(self.alpha_bar)

    @property
    def sigmas(self):
        return np.sqrt(1.0 - self.alpha_bar)

    def _check_index(self, t_index):
        if not 0 <= t_index < self.num_train_steps:
            raise ScheduleError(f"timestep index {t_index} outside [0, {self.num_train_steps - 1}]")

    def alpha_sigma(self, t_index):
        """``(alpha, sigma)`` at a training index; index -1 denotes clean data."""
        if t_index == -1:
            return 1.0, 0.0
        self._check_index(t_index)
        ab = float(self.alpha_bar[t_index])
        return float(np.sqrt(ab)), float(np.sqrt(1.0 - ab))

    def alpha_sigma_at(self, t):
        """``(alpha, sigma)`` at continuous time ``t`` in ``[0, 1]``.

        Exact for the cosine schedule; for the linear schedule ``log alpha_bar``
        is interpolated linearly between grid points, with ``alpha_bar(0) = 1``.
        """
        if not 0.0 <= t <= 1.0:
            raise ScheduleError(f"continuous time {t} outside [0, 1]")
        if self.kind == "cosine":
            return float(np.cos(0.5 * np.pi * t)), float(np.sin(0.5 * np.pi * t))
        grid_t = np.concatenate([[0.0], np.arange(1, self.num_train_steps + 1) / self.num_train_steps])
        grid_log = np.concatenate([[0.0], np.log(self.alpha_bar)])
        ab = float(np.exp(np.interp(t, grid_t, grid_log)))
        return float(np.sqrt(ab)), float(np.sqrt(1.0 - ab))

    def to_config(self):
        cfg = {"kind": self.kind, "steps": self.num_train_steps}
        if self.betas is not None:
            cfg["beta_min"] = float(self.betas[0])
            cfg["beta_max"] = float(self.betas[-1])
        return cfg


@dataclass(frozen=True)
class StepGrid:
    timesteps: tuple

    @property
    def K(self):
        return len(self.timesteps)

    def transitions(self):
        """``(t_from, t_to)`` pairs; the last transition targets clean data (-1)."""
        ts = list(self.timesteps) + [-1]
        return list(zip(ts[:-1], ts[1:]))


def _readonly(a):
    a = np.asarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def make_linear(beta_min=1e-4, beta_max=2e-2, steps=100):
    """Linear beta schedule with betas spaced inclusively on ``[beta_min, beta_max]``."""
    if not (0 < beta_min <= beta_max < 1):
        raise ScheduleError(f"need 0 < beta_min <= beta_max < 1, got {beta_min}, {beta_max}")
    if int(steps) < 1:
        raise ScheduleError(f"steps must be >= 1, got {steps}")
    betas = np.linspace(beta_min, beta_max, int(steps))
    alpha_bar = np.cumprod(1.0 - betas)
    return NoiseSchedule("linear-beta", int(steps), _readonly(alpha_bar), _readonly(betas))


def make_cosine(steps=100):
    """``alpha(t) = cos(pi t / 2)`` sampled at ``t = (i + 1) / steps``."""
    if int(steps) < 1:
        raise ScheduleError(f"steps must be >= 1, got {steps}")
    t = np.arange(1, int(steps) + 1) / int(steps)
    alpha_bar = np.cos(0.5 * np.pi * t) ** 2
    return NoiseSchedule("cosine", int(steps), _readonly(alpha_bar))


def make_schedule(cfg):
    """Build a schedule from a config mapping (``kind``, ``steps``, betas)."""
    kind = cfg.get("kind", "linear-beta")
    steps = int(cfg.get("steps", 100))
    if kind in ("linear", "linear-beta"):
        return make_linear(cfg.get("beta_min", 1e-4), cfg.get("beta_max", 2e-2), steps)
    if kind == "cosine":
        return make_cosine(steps)
    raise ScheduleError(f"unknown schedule kind {kind!r}")


def snr_ratio(s, t_index):
    """``sigma^2 / alpha^2`` at a training index."""
    s._check_index(t_index)
    ab = float(s.alpha_bar[t_index])
    return (1.0 - ab) / ab


def make_grid(s, K):
    """``K`` evenly spaced indices, descending from the highest-noise index."""
    N = s.num_train_steps
    if not 1 <= int(K) <= N:
        raise ScheduleError(f"K must lie in [1, {N}], got {K}")
    K = int(K)
    # integer form of floor((N - 1) * (1 - j / K)); avoids float rounding at exact integers
    idx = [((N - 1) * (K - j)) // K for j in range(K)]
    out = []
    for i in idx:
        if not out or i != out[-1]:
            out.append(i)
    return StepGrid(tuple(out))
