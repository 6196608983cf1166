"""Orthonormal DCT-II/III along the time axis and per-mode energy accounting.

Trajectories are ``(n, d)`` arrays: ``n`` frames by ``d`` action dimensions.
The transform matrix ``U`` has rows ``U[k, t] = a_k cos(pi (t + 1/2) k / n)``
with ``a_0 = n**-0.5`` and ``a_k = (2/n)**0.5``; it is orthogonal, so
coefficients ``C = U x`` satisfy Parseval and squared coefficients are energy.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import InvalidInputError, check_trajectories, check_trajectory

__all__ = [
    "Spectrum",
    "BandMask",
    "dct_matrix",
    "dct_raw",
    "idct_raw",
    "dct_forward",
    "dct_inverse",
    "spectrum_from_energy",
    "cutoff_low_to_high",
    "cutoff_high_to_low",
    "band_project",
    "dataset_spectrum",
    "segment_episode",
    "DCTSpectrum",
]

# relative slack when comparing a cumulative share against the cutoff fraction
_CUM_TOL = 1e-12


@lru_cache(maxsize=32)
def _dct_matrix_cached(n):
    t = np.arange(n)
    k = np.arange(n)[:, None]
    U = np.cos(np.pi * (t + 0.5) * k / n)
    U[0] *= np.sqrt(1.0 / n)
    U[1:] *= np.sqrt(2.0 / n)
    U.setflags(write=False)
    return U


def dct_matrix(n):
    """Orthonormal DCT-II matrix of size ``n x n`` (read-only, cached)."""
    if int(n) < 1:
        raise InvalidInputError(f"n must be >= 1, got {n}")
    return _dct_matrix_cached(int(n))


def dct_raw(x):
    """DCT-II along axis -2 with no mean handling. Works on ``(..., n, d)``."""
    x = np.asarray(x, dtype=np.float64)
    return dct_matrix(x.shape[-2]) @ x


def idct_raw(c):
    """Inverse of :func:`dct_raw` (orthonormal DCT-III)."""
    c = np.asarray(c, dtype=np.float64)
    return dct_matrix(c.shape[-2]).T @ c


@dataclass(frozen=True)
class Spectrum:
    """DCT coefficients with per-mode energy and normalized share.

    ``coeffs`` is ``None`` for aggregated dataset spectra.  When the total
    energy is zero, ``energy_share`` is all zeros and ``degenerate`` is True.
    """

    coeffs: np.ndarray | None
    mode_energy: np.ndarray
    energy_share: np.ndarray
    degenerate: bool = False

    @property
    def n(self):
        return len(self.mode_energy)

    @property
    def total_energy(self):
        return float(self.mode_energy.sum())

    def cumulative_share(self):
        return np.cumsum(self.energy_share)


def spectrum_from_energy(mode_energy, coeffs=None):
    E = np.asarray(mode_energy, dtype=np.float64)
    if E.ndim != 1 or np.any(E < 0) or not np.all(np.isfinite(E)):
        raise InvalidInputError("mode energy must be a finite non-negative vector")
    total = E.sum()
    if total > 0:
        share, degenerate = E / total, False
    else:
        share, degenerate = np.zeros_like(E), True
    return Spectrum(coeffs=coeffs, mode_energy=E, energy_share=share, degenerate=degenerate)


def _spectrum_from_coeffs(C):
    return spectrum_from_energy((C * C).sum(axis=1), coeffs=C)


def dct_forward(x):
    """Mean-removed orthonormal DCT-II of one trajectory."""
    x = check_trajectory(x)
    centered = x - x.mean(axis=0, keepdims=True)
    return _spectrum_from_coeffs(dct_matrix(x.shape[0]) @ centered)


def dct_inverse(s, mean=None):
    """Map a spectrum back to the time domain and re-add the per-dimension mean."""
    C = s.coeffs if isinstance(s, Spectrum) else s
    if C is None:
        raise InvalidInputError("spectrum has no coefficients to invert")
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2:
        raise InvalidInputError(f"coefficients must be (n, d); got shape {C.shape}")
    x = dct_matrix(C.shape[0]).T @ C
    if mean is not None:
        mean = np.asarray(mean, dtype=np.float64).reshape(-1)
        if mean.shape != (C.shape[1],):
            raise InvalidInputError(f"mean must have length {C.shape[1]}; got {mean.shape}")
        x = x + mean
    return x


@dataclass(frozen=True)
class BandMask:
    """Complementary low/high split of ``n`` DCT modes."""

    low: np.ndarray  # boolean, length n

    def __post_init__(self):
        low = np.asarray(self.low, dtype=bool).copy()
        low.setflags(write=False)
        object.__setattr__(self, "low", low)

    @classmethod
    def from_low_count(cls, n, m):
        if not 0 <= m <= n:
            raise InvalidInputError(f"low mode count {m} outside [0, {n}]")
        return cls(np.arange(n) < m)

    @classmethod
    def from_high_suffix(cls, n, size):
        if not 0 <= size <= n:
            raise InvalidInputError(f"suffix size {size} outside [0, {n}]")
        return cls(np.arange(n) < n - size)

    @property
    def n(self):
        return len(self.low)

    @property
    def high(self):
        return ~self.low

    @property
    def m(self):
        return int(self.low.sum())

    @property
    def low_modes(self):
        return tuple(int(i) for i in np.flatnonzero(self.low))

    @property
    def high_modes(self):
        return tuple(int(i) for i in np.flatnonzero(~self.low))

    def select(self, which):
        if which == "low":
            return self.low
        if which == "high":
            return self.high
        raise InvalidInputError(f"band must be 'low' or 'high', got {which!r}")


def _check_fraction(fraction):
    if not 0 < fraction <= 1:
        raise InvalidInputError(f"fraction must lie in (0, 1], got {fraction}")


def _first_reaching(cum, fraction):
    return int(np.argmax(cum >= fraction * (1.0 - _CUM_TOL)))


def cutoff_low_to_high(spec, fraction=0.95):
    """Smallest prefix ``{0..m-1}`` holding at least ``fraction`` of the energy."""
    _check_fraction(fraction)
    if spec.degenerate:
        raise InvalidInputError("cannot place a cutoff on a zero-energy spectrum")
    m = _first_reaching(np.cumsum(spec.energy_share), fraction) + 1
    return BandMask.from_low_count(spec.n, m)


def cutoff_high_to_low(spec, fraction=0.95):
    """Smallest suffix of modes holding at least ``fraction`` of the energy.

    The suffix is labelled the high band; the remaining prefix is the low band.
    """
    _check_fraction(fraction)
    if spec.degenerate:
        raise InvalidInputError("cannot place a cutoff on a zero-energy spectrum")
    size = _first_reaching(np.cumsum(spec.energy_share[::-1]), fraction) + 1
    return BandMask.from_high_suffix(spec.n, size)


def band_project(s, mask, which):
    """Zero every coefficient outside the selected band."""
    if s.coeffs is None:
        raise InvalidInputError("spectrum has no coefficients to project")
    if mask.n != s.n:
        raise InvalidInputError(f"mask covers {mask.n} modes, spectrum has {s.n}")
    keep = mask.select(which)
    return _spectrum_from_coeffs(s.coeffs * keep[:, None])


def dataset_spectrum(trajs):
    """Aggregate mode energy summed over segments, normalized by the grand total."""
    X = check_trajectories(trajs, "trajs")
    centered = X - X.mean(axis=1, keepdims=True)
    C = dct_matrix(X.shape[1]) @ centered
    return spectrum_from_energy((C * C).sum(axis=(0, 2)))


def segment_episode(episode, window):
    """Split an episode into non-overlapping windows, dropping the remainder."""
    if int(window) < 1:
        raise InvalidInputError(f"window must be >= 1, got {window}")
    x = check_trajectory(episode, "episode")
    count = x.shape[0] // window
    return [x[i * window : (i + 1) * window].copy() for i in range(count)]


class DCTSpectrum(TransformerMixin, BaseEstimator):
    """Mean-removed orthonormal DCT of trajectory batches.

    ``fit`` measures the dataset spectrum and places the band cutoff;
    ``transform`` maps ``(N, n, d)`` trajectories to DCT coefficients of the
    same shape and ``inverse_transform`` maps them back (zero-mean).

    Parameters
    ----------
    fraction : float
        Cumulative energy fraction that defines the dominant band.
    direction : {"low_to_high", "high_to_low"}
        Whether the dominant band is a prefix or a suffix of the modes.
    """

    def __init__(self, fraction=0.95, direction="low_to_high"):
        self.fraction = fraction
        self.direction = direction

    def fit(self, X, y=None):
        X = check_trajectories(X)
        if self.direction not in ("low_to_high", "high_to_low"):
            raise InvalidInputError(f"unknown direction {self.direction!r}")
        self.spectrum_ = dataset_spectrum(X)
        cut = cutoff_low_to_high if self.direction == "low_to_high" else cutoff_high_to_low
        self.mask_ = cut(self.spectrum_, self.fraction)
        self.n_frames_ = X.shape[1]
        self.n_dims_ = X.shape[2]
        return self

    def _check_shape(self, X):
        if X.shape[1:] != (self.n_frames_, self.n_dims_):
            raise InvalidInputError(
                f"expected trajectories of shape {(self.n_frames_, self.n_dims_)}, got {X.shape[1:]}"
            )

    def transform(self, X):
        check_is_fitted(self, "spectrum_")
        X = check_trajectories(X)
        self._check_shape(X)
        return dct_raw(X - X.mean(axis=1, keepdims=True))

    def inverse_transform(self, C):
        check_is_fitted(self, "spectrum_")
        C = check_trajectories(C, "C")
        self._check_shape(C)
        return idct_raw(C)

    def band_energy(self, X):
        """Per-trajectory ``(low, high)`` energy under the fitted mask."""
        C = self.transform(X)
        E = (C * C).sum(axis=2)
        return np.stack([E[:, self.mask_.low].sum(axis=1), E[:, self.mask_.high].sum(axis=1)], axis=1)
