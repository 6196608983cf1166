"""Band-decomposed decoding error and the execution-filter proxy.

Errors are split with the *raw* orthonormal DCT of the error signal (mode 0
included), so ``low_band_mse + high_band_mse == action_mse`` exactly up to
rounding.  The execution map of a real controller is replaced by a linear,
DC-gain-1 low-pass filter (:class:`ExecFilter`).
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ._validation import InvalidInputError, check_same_shape
from .io import format_float, read_trajectories
from .oracle import GaussianFreqModel, corollary_bound, mc_verify
from .spectral import BandMask, cutoff_high_to_low, cutoff_low_to_high, dataset_spectrum, dct_raw, idct_raw

__all__ = [
    "ErrorBreakdown",
    "ExecFilter",
    "exec_apply",
    "error_breakdown",
    "mean_breakdown",
    "mask_for_dataset",
    "evaluate_ablation",
    "evaluate_run",
    "bound_comparison",
    "write_table6",
    "write_mse_vs_nfe",
    "write_bound_comparison",
    "TABLE6_COLUMNS",
]

TABLE6_COLUMNS = (
    "dataset", "steps", "action_mse", "low_band_mse", "high_band_mse",
    "exec_mse", "exec_low_mse", "exec_high_mse",
)


@dataclass(frozen=True)
class ExecFilter:
    """Linear low-pass stand-in for a trajectory-tracking controller.

    ``first-order``: ``y[0] = x[0]``, ``y[t] = y[t-1] + kappa (x[t] - y[t-1])``.
    ``dct-lowpass``: keep the first ``cutoff`` raw DCT modes, zero the rest.
    """

    kind: str = "first-order"
    kappa: float = 0.5
    cutoff: int | None = None

    def __post_init__(self):
        if self.kind == "first-order":
            if not 0 < self.kappa <= 1:
                raise InvalidInputError(f"kappa must lie in (0, 1], got {self.kappa}")
        elif self.kind == "dct-lowpass":
            if self.cutoff is None or self.cutoff < 1:
                raise InvalidInputError("dct-lowpass needs a cutoff >= 1")
        else:
            raise InvalidInputError(f"unknown filter kind {self.kind!r}")

    def to_dict(self):
        return asdict(self)


def exec_apply(x, filt):
    """Filter along the frame axis of ``(n, d)`` or ``(N, n, d)`` input."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (2, 3) or x.shape[-2] < 1:
        raise InvalidInputError(f"expected (n, d) or (N, n, d) input, got shape {x.shape}")
    if filt.kind == "dct-lowpass":
        C = dct_raw(x)
        C[..., filt.cutoff :, :] = 0.0
        return idct_raw(C)
    y = np.empty_like(x)
    y[..., 0, :] = x[..., 0, :]
    k = filt.kappa
    for t in range(1, x.shape[-2]):
        y[..., t, :] = y[..., t - 1, :] + k * (x[..., t, :] - y[..., t - 1, :])
    return y


@dataclass(frozen=True)
class ErrorBreakdown:
    action_mse: float
    low_band_mse: float
    high_band_mse: float
    exec_mse: float
    exec_low_mse: float
    exec_high_mse: float
    steps: int | None = None
    dataset: str | None = None

    def row(self):
        return {"dataset": self.dataset, "steps": self.steps, **{
            k: getattr(self, k) for k in TABLE6_COLUMNS[2:]
        }}


def _band_mses(err, mask):
    """Per-trajectory ``(total, low, high)`` MSE of ``(N, n, d)`` error signals."""
    n, d = err.shape[-2:]
    E = (dct_raw(err) ** 2).sum(axis=-1) / (n * d)
    low = E[..., mask.low].sum(axis=-1)
    high = E[..., mask.high].sum(axis=-1)
    total = (err**2).mean(axis=(-2, -1))
    return total, low, high


def _breakdowns(decoded, truth, mask, filt):
    decoded = np.asarray(decoded, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    check_same_shape(decoded, truth, "error_breakdown")
    if mask.n != decoded.shape[-2]:
        raise InvalidInputError(f"mask covers {mask.n} modes, trajectories have {decoded.shape[-2]} frames")
    raw = _band_mses(decoded - truth, mask)
    ex = _band_mses(exec_apply(decoded, filt) - exec_apply(truth, filt), mask)
    return raw + ex


def error_breakdown(decoded, truth, mask, filt=ExecFilter(), steps=None, dataset=None):
    """Error of one decoded trajectory against its reference."""
    vals = _breakdowns(decoded, truth, mask, filt)
    return ErrorBreakdown(*(float(v) for v in vals), steps=steps, dataset=dataset)


def mean_breakdown(decoded, truth, mask, filt=ExecFilter(), steps=None, dataset=None):
    """Uniform mean over trajectories of per-trajectory breakdowns, summed in index order."""
    vals = _breakdowns(decoded, truth, mask, filt)
    return ErrorBreakdown(*(float(np.mean(v)) for v in vals), steps=steps, dataset=dataset)


def mask_for_dataset(kind, trajs, fraction=0.95):
    """95%-cutoff band mask: a low prefix for lowfreq/broadband, a high suffix for highfreq."""
    spec = dataset_spectrum(trajs)
    if kind == "highfreq":
        return cutoff_high_to_low(spec, fraction)
    return cutoff_low_to_high(spec, fraction)


def evaluate_ablation(run, mask, filt=ExecFilter(), dataset=None, reference_steps=None):
    """Table rows for every ``K`` of a :class:`~fewstep.sampler.SampleRun`.

    The reference (pseudo-truth) is the run's largest ``K`` unless given.
    """
    ref_k = max(run.steps) if reference_steps is None else int(reference_steps)
    if ref_k not in run.outputs:
        raise InvalidInputError(f"pseudo-truth ({ref_k} steps) missing from run")
    truth = run.outputs[ref_k]
    return [mean_breakdown(run.outputs[K], truth, mask, filt, K, dataset) for K in sorted(run.steps)]


def evaluate_run(run_dir, mask, filt=ExecFilter(), dataset=None, reference_steps=None):
    """Evaluate a sample directory written by the ``sample`` command."""
    run_dir = Path(run_dir)
    manifest = json.loads((run_dir / "manifest.json").read_text())
    steps = [int(k) for k in manifest["steps"]]
    ref_k = max(steps) if reference_steps is None else int(reference_steps)
    if ref_k not in steps:
        raise InvalidInputError(f"pseudo-truth ({ref_k} steps) missing from {run_dir}")
    count = int(manifest["count"])
    outputs = {}
    for K in steps:
        outputs[K] = np.stack([
            read_trajectories(run_dir / manifest["pattern"].format(index=i, steps=K))[0]
            for i in range(count)
        ])
    truth = outputs[ref_k]
    name = dataset if dataset is not None else manifest.get("dataset")
    return [mean_breakdown(outputs[K], truth, mask, filt, K, name) for K in sorted(steps)]


def bound_comparison(lam, schedule, K_list, mask, n_samples=20_000, seed=0, trained=None):
    """Relative-error bound versus the optimal estimator's Monte-Carlo error per ``K``.

    For each ``K`` the optimal estimator is evaluated one step from
    ``t = 1/K`` on the schedule's continuous form.  ``trained`` optionally maps
    ``K`` to a trained model's relative error, reported without assertion.
    """
    model = GaussianFreqModel.diagonal(lam)
    rows = []
    for K in K_list:
        alpha, sigma = schedule.alpha_sigma_at(1.0 / int(K))
        rep = mc_verify(model, mask, alpha, sigma, n_samples, seed=[seed, int(K)])
        rows.append({
            "K": int(K),
            "corollary_bound": corollary_bound(model, mask, schedule, K),
            "empirical_relative_mse": rep.empirical_mse / model.trace,
            "relative_se": rep.se_mse / model.trace,
            "analytic_relative_mse": rep.analytic_mse / model.trace,
            "trained_relative_mse": (trained or {}).get(int(K), float("nan")),
        })
    return rows


def _write_rows(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([format_float(r[c]) if isinstance(r[c], float) else r[c] for c in columns])


def write_table6(path, breakdowns):
    _write_rows(path, TABLE6_COLUMNS, [b.row() for b in breakdowns])


def write_mse_vs_nfe(path, breakdowns):
    cols = ("dataset", "steps", "action_mse", "low_band_mse", "high_band_mse", "exec_mse")
    _write_rows(path, cols, [b.row() for b in breakdowns])


def write_bound_comparison(path, rows):
    cols = ("K", "corollary_bound", "empirical_relative_mse", "relative_se",
            "analytic_relative_mse", "trained_relative_mse")
    _write_rows(path, cols, rows)
