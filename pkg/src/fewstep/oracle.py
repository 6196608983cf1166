"""Closed-form Gaussian denoising in the DCT domain.

For ``y0 ~ N(0, Sigma)`` and ``y_t = alpha y0 + sigma xi`` the posterior is
Gaussian with mean ``alpha Sigma (alpha^2 Sigma + sigma^2 I)^-1 y_t`` and
covariance ``sigma^2 Sigma (alpha^2 Sigma + sigma^2 I)^-1``.  The trace of the
covariance is the exact squared error of the optimal (posterior-mean)
estimator, split into low/high bands by a :class:`~fewstep.spectral.BandMask`.
Per-frame errors divide by ``n``; relative errors further divide by ``Tr(Sigma)``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import InvalidInputError, check_trajectories
from .spectral import BandMask, dct_raw, idct_raw

__all__ = [
    "OracleError",
    "GaussianFreqModel",
    "ErrorBoundReport",
    "MCReport",
    "eta_of",
    "posterior_mean",
    "posterior_covariance_diag",
    "posterior_variance_trace",
    "exact_band_errors",
    "theorem1_bounds",
    "corollary_bound",
    "relative_bound",
    "mc_verify",
    "bound_suite",
    "GaussianPosteriorDenoiser",
]


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class GaussianFreqModel:
    """Zero-mean Gaussian prior over ``n`` DCT modes.

    ``sigma_diag`` holds the eigenvalues of ``Sigma``; ``full`` optionally holds
    the dense matrix, in which case ``eigvecs`` diagonalizes it.
    """

    sigma_diag: np.ndarray
    full: np.ndarray | None = None
    eigvecs: np.ndarray | None = None

    @classmethod
    def diagonal(cls, nu):
        nu = np.asarray(nu, dtype=np.float64).reshape(-1)
        if nu.size == 0 or np.any(nu < 0) or not np.all(np.isfinite(nu)):
            raise OracleError("diagonal covariance must be finite and non-negative")
        nu = nu.copy()
        nu.setflags(write=False)
        return cls(sigma_diag=nu)

    @classmethod
    def from_matrix(cls, sigma):
        S = np.asarray(sigma, dtype=np.float64)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise OracleError(f"covariance must be square, got shape {S.shape}")
        if np.max(np.abs(S - S.T), initial=0.0) > 1e-10:
            raise OracleError("covariance is not symmetric")
        S = 0.5 * (S + S.T)
        w, Q = np.linalg.eigh(S)
        if w.min() < -1e-10:
            raise OracleError(f"covariance is not PSD (min eigenvalue {w.min():.3e})")
        w = np.clip(w, 0.0, None)
        return cls(sigma_diag=w, full=S, eigvecs=Q)

    @property
    def n(self):
        return len(self.sigma_diag)

    @property
    def is_diagonal(self):
        return self.full is None

    @property
    def trace(self):
        return float(self.sigma_diag.sum())

    def mode_variances(self):
        """Diagonal of ``Sigma`` in the DCT basis (not the eigenvalues)."""
        return self.sigma_diag if self.full is None else np.diag(self.full)

    def sample(self, rng, size):
        z = rng.standard_normal((size, self.n))
        y = z * np.sqrt(self.sigma_diag)
        return y if self.full is None else y @ self.eigvecs.T


@dataclass(frozen=True)
class ErrorBoundReport:
    e_L_bound: float
    e_H_bound: float
    e_total_bound: float
    e_hat_bound: float
    m: int
    n: int
    eta: float
    snr: float
    trace: float

    def as_dict(self):
        return asdict(self)


def _check_mask(model, mask):
    if mask.n != model.n:
        raise OracleError(f"mask covers {mask.n} modes, model has {model.n}")


def eta_of(model, mask):
    """Tight high-band energy fraction ``Tr(P_H Sigma) / Tr(Sigma)``."""
    _check_mask(model, mask)
    tr = model.trace
    if tr <= 0:
        raise OracleError("Tr(Sigma) must be positive")
    return float(model.mode_variances()[mask.high].sum() / tr)


def _check_noise(alpha, sigma):
    if alpha < 0 or sigma < 0:
        raise OracleError(f"alpha and sigma must be non-negative, got {alpha}, {sigma}")
    if alpha == 0 and sigma == 0:
        raise OracleError("alpha and sigma cannot both be zero")


def _eig_gain(nu, alpha, sigma):
    if sigma == 0:
        return np.full_like(nu, 1.0 / alpha)
    return alpha * nu / (alpha * alpha * nu + sigma * sigma)


def posterior_mean(model, y_t, alpha, sigma):
    """``E[y0 | y_t]``; modes lie on the last axis of ``y_t``."""
    _check_noise(alpha, sigma)
    y_t = np.asarray(y_t, dtype=np.float64)
    if y_t.shape[-1] != model.n:
        raise OracleError(f"y_t has {y_t.shape[-1]} modes, model has {model.n}")
    gain = _eig_gain(model.sigma_diag, alpha, sigma)
    if model.full is None:
        return y_t * gain
    Q = model.eigvecs
    return ((y_t @ Q) * gain) @ Q.T


def _eig_post_var(nu, alpha, sigma):
    if sigma == 0:
        return np.zeros_like(nu)
    return sigma * sigma * nu / (alpha * alpha * nu + sigma * sigma)


def posterior_covariance_diag(model, alpha, sigma):
    """Diagonal of ``Cov[y0 | y_t]`` in the DCT basis."""
    _check_noise(alpha, sigma)
    v = _eig_post_var(model.sigma_diag, alpha, sigma)
    if model.full is None:
        return v
    Q = model.eigvecs
    return (Q * Q) @ v


def posterior_variance_trace(model, alpha, sigma):
    """``Tr Cov[y0 | y_t]``: exact total squared error of the optimal estimator."""
    _check_noise(alpha, sigma)
    return float(_eig_post_var(model.sigma_diag, alpha, sigma).sum())


def exact_band_errors(model, mask, alpha, sigma):
    """Exact per-frame ``(e_L, e_H)`` of the optimal estimator."""
    _check_mask(model, mask)
    v = posterior_covariance_diag(model, alpha, sigma)
    return float(v[mask.low].sum() / model.n), float(v[mask.high].sum() / model.n)


def _bounds(model, mask, alpha, sigma):
    if alpha <= 0:
        raise OracleError("alpha must be positive: the low-band bound diverges at alpha = 0")
    if sigma < 0:
        raise OracleError(f"sigma must be non-negative, got {sigma}")
    n, m = model.n, mask.m
    tr = model.trace
    eta = eta_of(model, mask)
    snr = (sigma * sigma) / (alpha * alpha)
    e_L = m / n * snr
    e_H = eta / n * tr
    return ErrorBoundReport(
        e_L_bound=e_L,
        e_H_bound=e_H,
        e_total_bound=e_L + e_H,
        e_hat_bound=m * snr / (n * tr) + eta / n,
        m=m,
        n=n,
        eta=eta,
        snr=snr,
        trace=tr,
    )


def relative_bound(m, n, eta, trace, alpha, sigma):
    """Relative-error bound ``m snr / (n Tr) + eta / n`` from raw constants."""
    if alpha <= 0 or sigma < 0:
        raise OracleError(f"need alpha > 0 and sigma >= 0, got {alpha}, {sigma}")
    if trace <= 0 or not 0 <= eta <= 1 or not 0 <= m <= n:
        raise OracleError(f"invalid constants m={m}, n={n}, eta={eta}, trace={trace}")
    snr = (sigma * sigma) / (alpha * alpha)
    return m * snr / (n * trace) + eta / n


def theorem1_bounds(model, mask, alpha, sigma):
    """Upper bounds on the per-frame low/high/total error and the relative error."""
    return _bounds(model, mask, alpha, sigma)


def corollary_bound(model, mask, schedule, K):
    """Relative-error bound of a ``K``-step sampler, read at ``t = 1/K``."""
    if int(K) < 1:
        raise OracleError(f"K must be >= 1, got {K}")
    alpha, sigma = schedule.alpha_sigma_at(1.0 / int(K))
    return _bounds(model, mask, alpha, sigma).e_hat_bound


@dataclass(frozen=True)
class MCReport:
    empirical_mse: float
    empirical_e_L: float
    empirical_e_H: float
    se_mse: float
    se_e_L: float
    se_e_H: float
    analytic_trace: float
    bounds: ErrorBoundReport
    n_samples: int

    @property
    def analytic_mse(self):
        return self.analytic_trace / self.bounds.n

    def mse_matches(self, n_se=3.0):
        return abs(self.empirical_mse - self.analytic_mse) <= n_se * self.se_mse

    def within_bounds(self, n_se=3.0):
        b = self.bounds
        return (
            self.empirical_e_L <= b.e_L_bound + n_se * self.se_e_L
            and self.empirical_e_H <= b.e_H_bound + n_se * self.se_e_H
            and self.empirical_mse <= b.e_total_bound + n_se * self.se_mse
        )


def mc_verify(model, mask, alpha, sigma, n_samples=10_000, seed=0, chunk_size=8192):
    """Monte-Carlo check of the optimal estimator's error against the bounds.

    Samples are drawn in fixed-size chunks, chunk ``i`` from the ``i``-th child
    of ``SeedSequence(seed)``; the result depends only on
    ``(seed, n_samples, chunk_size)``.
    """
    if n_samples < 100:
        raise OracleError(f"n_samples must be >= 100, got {n_samples}")
    bounds = theorem1_bounds(model, mask, alpha, sigma)
    n = model.n
    low = mask.low
    n_chunks = -(-n_samples // chunk_size)
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    errs_L, errs_H = [], []
    for i, child in enumerate(children):
        size = min(chunk_size, n_samples - i * chunk_size)
        rng = np.random.default_rng(child)
        y0 = model.sample(rng, size)
        y_t = alpha * y0 + sigma * rng.standard_normal((size, n))
        e2 = (y0 - posterior_mean(model, y_t, alpha, sigma)) ** 2
        errs_L.append(e2[:, low].sum(axis=1) / n)
        errs_H.append(e2[:, ~low].sum(axis=1) / n)
    eL = np.concatenate(errs_L)
    eH = np.concatenate(errs_H)
    e = eL + eH
    root = np.sqrt(n_samples)
    return MCReport(
        empirical_mse=float(e.mean()),
        empirical_e_L=float(eL.mean()),
        empirical_e_H=float(eH.mean()),
        se_mse=float(e.std(ddof=1) / root),
        se_e_L=float(eL.std(ddof=1) / root),
        se_e_H=float(eH.std(ddof=1) / root),
        analytic_trace=posterior_variance_trace(model, alpha, sigma),
        bounds=bounds,
        n_samples=int(n_samples),
    )


BOUND_COLUMNS = (
    "alpha", "sigma", "m", "eta", "e_L_emp", "e_L_bound",
    "e_H_emp", "e_H_bound", "e_emp", "e_bound", "ratio",
)


def bound_suite(trials=1000, n=32, n_samples=10_000, seed=0, n_se=3.0):
    """Random diagonal priors and unit-circle ``(alpha, sigma)`` pairs.

    Returns ``(rows, summary)``: one row per trial keyed by ``BOUND_COLUMNS``
    (``ratio`` is empirical over bound total error), and counts of trials whose
    Monte-Carlo MSE disagrees with the closed form or exceeds a bound by more
    than ``n_se`` standard errors.
    """
    params = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    rows = []
    mismatch = violations = 0
    for i in range(trials):
        nu = params.uniform(0.0, 1.0, n)
        theta = params.uniform(0.0, 0.5 * np.pi)
        while theta == 0.0:
            theta = params.uniform(0.0, 0.5 * np.pi)
        alpha, sigma = float(np.cos(theta)), float(np.sin(theta))
        m = int(params.integers(1, n))
        model = GaussianFreqModel.diagonal(nu)
        mask = BandMask.from_low_count(n, m)
        rep = mc_verify(model, mask, alpha, sigma, n_samples, seed=[seed, 1, i])
        mismatch += not rep.mse_matches(n_se)
        violations += not rep.within_bounds(n_se)
        b = rep.bounds
        rows.append(dict(
            alpha=alpha, sigma=sigma, m=m, eta=b.eta,
            e_L_emp=rep.empirical_e_L, e_L_bound=b.e_L_bound,
            e_H_emp=rep.empirical_e_H, e_H_bound=b.e_H_bound,
            e_emp=rep.empirical_mse, e_bound=b.e_total_bound,
            ratio=rep.empirical_mse / b.e_total_bound,
        ))
    return rows, {"trials": trials, "mse_mismatches": mismatch, "bound_violations": violations}


class GaussianPosteriorDenoiser(BaseEstimator):
    """Optimal x0-denoiser for trajectories whose DCT modes are independent Gaussians.

    ``fit`` estimates the per-mode variance (averaged over samples and action
    dimensions) from raw, non-mean-removed DCT coefficients; ``predict``
    returns ``E[x0 | x_t]`` in the time domain.  With a ``schedule`` it can be
    used directly as an x0-model by the samplers.

    Parameters
    ----------
    schedule : NoiseSchedule, optional
        Maps timestep indices to ``(alpha, sigma)`` in :meth:`__call__`.
    """

    parameterization = "x0"

    def __init__(self, schedule=None):
        self.schedule = schedule

    def fit(self, X, y=None):
        X = check_trajectories(X)
        C = dct_raw(X)
        self.model_ = GaussianFreqModel.diagonal((C * C).mean(axis=(0, 2)))
        return self

    @classmethod
    def from_variances(cls, nu, schedule=None):
        est = cls(schedule=schedule)
        est.model_ = GaussianFreqModel.diagonal(nu)
        return est

    def predict(self, X_t, alpha, sigma):
        check_is_fitted(self, "model_")
        X_t = np.asarray(X_t, dtype=np.float64)
        if X_t.shape[-2] != self.model_.n:
            raise InvalidInputError(f"expected {self.model_.n} frames, got {X_t.shape[-2]}")
        Y = np.swapaxes(dct_raw(X_t), -1, -2)
        Y0 = posterior_mean(self.model_, Y, alpha, sigma)
        return idct_raw(np.swapaxes(Y0, -1, -2))

    def __call__(self, x_t, t_index, cond=None):
        if self.schedule is None:
            raise OracleError("a schedule is required to denoise by timestep index")
        alpha, sigma = self.schedule.alpha_sigma(int(t_index))
        return self.predict(x_t, alpha, sigma)
