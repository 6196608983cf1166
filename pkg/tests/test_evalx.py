import csv
import json

import numpy as np
import pytest

from fewstep._validation import InvalidInputError
from fewstep.evalx import (
    TABLE6_COLUMNS,
    ExecFilter,
    bound_comparison,
    error_breakdown,
    evaluate_ablation,
    evaluate_run,
    exec_apply,
    mask_for_dataset,
    mean_breakdown,
    write_bound_comparison,
    write_table6,
)
from fewstep.io import write_trajectories
from fewstep.oracle import GaussianPosteriorDenoiser
from fewstep.sampler import step_ablation, terminal_noise
from fewstep.schedule import make_linear
from fewstep.spectral import BandMask, idct_raw
from fewstep.synthdata import GeneratorSpec, generate


def _mode(n, k, d=1):
    C = np.zeros((n, d))
    C[k] = 1.0
    return idct_raw(C)


def test_first_order_filter_recursion():
    x = np.array([[1.0], [3.0], [3.0], [-1.0]])
    y = exec_apply(x, ExecFilter(kappa=0.5))
    # y0 = 1, y1 = 1 + .5*2 = 2, y2 = 2.5, y3 = 2.5 + .5*(-3.5) = 0.75
    np.testing.assert_allclose(y[:, 0], [1.0, 2.0, 2.5, 0.75])


def test_filter_dc_gain_one_and_linearity():
    const = np.full((20, 2), 3.0)
    np.testing.assert_allclose(exec_apply(const, ExecFilter()), const)
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal((2, 3, 16, 2))
    f = ExecFilter(kappa=0.3)
    np.testing.assert_allclose(exec_apply(2 * a - b, f), 2 * exec_apply(a, f) - exec_apply(b, f), atol=1e-12)


def test_filter_attenuates_high_modes_more():
    n = 64
    f = ExecFilter()
    low = np.sum(exec_apply(_mode(n, 1), f) ** 2)
    high = np.sum(exec_apply(_mode(n, 60), f) ** 2)
    assert high < 0.2 * low


def test_dct_lowpass_filter():
    n = 16
    x = _mode(n, 2) + _mode(n, 10)
    np.testing.assert_allclose(exec_apply(x, ExecFilter("dct-lowpass", cutoff=5)), _mode(n, 2), atol=1e-13)


def test_filter_validation():
    with pytest.raises(InvalidInputError):
        ExecFilter(kappa=0.0)
    with pytest.raises(InvalidInputError):
        ExecFilter("dct-lowpass")
    with pytest.raises(InvalidInputError):
        ExecFilter("butterworth")


def test_breakdown_pure_modes():
    n = 32
    mask = BandMask.from_low_count(n, 4)
    truth = np.zeros((n, 1))
    lo = error_breakdown(_mode(n, 2), truth, mask)
    # a unit mode has squared norm 1 over n*d entries
    assert lo.action_mse == pytest.approx(1 / n)
    assert lo.low_band_mse == pytest.approx(1 / n)
    assert lo.high_band_mse == pytest.approx(0.0, abs=1e-18)
    hi = error_breakdown(_mode(n, 20), truth, mask)
    assert hi.high_band_mse == pytest.approx(1 / n)
    assert hi.exec_high_mse < hi.high_band_mse


def test_breakdown_partition_property():
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal((2, 5, 16, 3))
    mask = BandMask.from_low_count(16, 5)
    r = mean_breakdown(a, b, mask, steps=2, dataset="x")
    assert r.low_band_mse + r.high_band_mse == pytest.approx(r.action_mse, rel=1e-12)
    assert r.exec_low_mse + r.exec_high_mse == pytest.approx(r.exec_mse, rel=1e-12)
    per = [error_breakdown(a[i], b[i], mask).action_mse for i in range(5)]
    assert r.action_mse == pytest.approx(np.mean(per), rel=1e-12)
    assert r.row()["steps"] == 2


def test_breakdown_errors():
    mask = BandMask.from_low_count(8, 2)
    with pytest.raises(InvalidInputError):
        error_breakdown(np.zeros((8, 2)), np.zeros((8, 3)), mask)
    with pytest.raises(InvalidInputError):
        error_breakdown(np.zeros((9, 2)), np.zeros((9, 2)), mask)


def test_mask_for_dataset():
    lo = generate(GeneratorSpec("lowfreq"), 500).trajs
    hi = generate(GeneratorSpec("highfreq"), 500).trajs
    assert mask_for_dataset("lowfreq", lo).m == 6
    assert len(mask_for_dataset("highfreq", hi).high_modes) == 6


def _oracle_run(count=8):
    s = make_linear()
    lam = np.linspace(1.0, 0.1, 16)
    den = GaussianPosteriorDenoiser.from_variances(lam, schedule=s)
    return step_ablation(den, s, (1, 2, 100), terminal_noise(0, count, 16, 2))


def test_evaluate_ablation_reference_is_zero():
    rows = evaluate_ablation(_oracle_run(), BandMask.from_low_count(16, 4), dataset="t")
    assert [r.steps for r in rows] == [1, 2, 100]
    assert rows[-1].action_mse == 0.0
    assert rows[0].action_mse > rows[1].action_mse > 0
    with pytest.raises(InvalidInputError):
        evaluate_ablation(_oracle_run(), BandMask.from_low_count(16, 4), reference_steps=50)


def test_evaluate_run_matches_in_memory(tmp_path):
    run = _oracle_run(4)
    for K, out in run.outputs.items():
        for i in range(4):
            write_trajectories(tmp_path / f"traj_{i:04d}_K{K:03d}.csv", out[i][None])
    (tmp_path / "manifest.json").write_text(json.dumps({
        "steps": [1, 2, 100], "count": 4, "pattern": "traj_{index:04d}_K{steps:03d}.csv", "dataset": "t",
    }))
    mask = BandMask.from_low_count(16, 4)
    a = evaluate_run(tmp_path, mask)
    b = evaluate_ablation(run, mask, dataset="t")
    assert a == b


def test_bound_comparison_rows():
    lam = np.linspace(1.0, 0.01, 32)
    mask = BandMask.from_low_count(32, 4)
    rows = bound_comparison(lam, make_linear(), (1, 2, 10), mask, n_samples=2000, trained={2: 0.5})
    assert [r["K"] for r in rows] == [1, 2, 10]
    for r in rows:
        assert r["empirical_relative_mse"] <= r["corollary_bound"] + 3 * r["relative_se"]
    assert rows[1]["trained_relative_mse"] == 0.5
    assert np.isnan(rows[0]["trained_relative_mse"])


def test_writers(tmp_path):
    rows = evaluate_ablation(_oracle_run(), BandMask.from_low_count(16, 4), dataset="t")
    write_table6(tmp_path / "t6.csv", rows)
    with open(tmp_path / "t6.csv") as fh:
        table = list(csv.reader(fh))
    assert tuple(table[0]) == TABLE6_COLUMNS
    assert len(table) == 4
    assert float(table[1][2]) == rows[0].action_mse
    write_bound_comparison(tmp_path / "b.csv", [{"K": 1, "corollary_bound": 0.1, "empirical_relative_mse": 0.01,
                                                   "relative_se": 0.001, "analytic_relative_mse": 0.01,
                                                   "trained_relative_mse": float("nan")}])
    assert (tmp_path / "b.csv").read_text().startswith("K,corollary_bound")
