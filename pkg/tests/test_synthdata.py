import json

import numpy as np
import pytest

from fewstep._validation import InvalidInputError
from fewstep.spectral import cutoff_high_to_low, cutoff_low_to_high, dataset_spectrum, dct_raw
from fewstep.synthdata import (
    HEAD_VALUES,
    GeneratorSpec,
    TrajectoryStandardizer,
    denormalize,
    generate,
    lambda_spectrum,
    load_dataset,
    normalize,
    paper_splits,
    save_dataset,
)


def test_lowfreq_spectrum_shape():
    lam = lambda_spectrum(GeneratorSpec("lowfreq"))
    assert len(lam) == 64
    np.testing.assert_array_equal(lam[:6], HEAD_VALUES)
    tail = lam[6:]
    assert abs(tail.sum() / lam.sum() - 0.01) < 1e-12
    np.testing.assert_allclose(tail[1:] / tail[:-1], np.exp(-0.25))


def test_highfreq_is_reversed_lowfreq():
    lo = lambda_spectrum(GeneratorSpec("lowfreq"))
    hi = lambda_spectrum(GeneratorSpec("highfreq"))
    np.testing.assert_array_equal(hi, lo[::-1])
    np.testing.assert_array_equal(lambda_spectrum(GeneratorSpec("broadband")), np.ones(64))


def test_spectrum_cutoffs_analytic():
    # mean removal drops mode 0 from the measured spectrum
    for kind, expect in (("lowfreq", 6), ("broadband", 61)):
        lam = lambda_spectrum(GeneratorSpec(kind)).copy()
        lam[0] = 0.0
        cum = np.cumsum(lam) / lam.sum()
        assert int(np.argmax(cum >= 0.95)) + 1 == expect
    lam = lambda_spectrum(GeneratorSpec("highfreq")).copy()
    lam[0] = 0.0
    cum = np.cumsum(lam[::-1]) / lam.sum()
    assert int(np.argmax(cum >= 0.95)) + 1 == 6


@pytest.mark.parametrize("kind,direction,count", [
    ("lowfreq", "low", 6), ("broadband", "low", 61), ("highfreq", "high", 6)
])
def test_generated_cutoffs(kind, direction, count):
    ds = generate(GeneratorSpec(kind, seed=0), 2000)
    spec = dataset_spectrum(ds.trajs)
    if direction == "low":
        assert cutoff_low_to_high(spec, 0.95).m == count
    else:
        assert len(cutoff_high_to_low(spec, 0.95).high_modes) == count


def test_empirical_mode_variance_matches_lambda():
    spec = GeneratorSpec("lowfreq", n=16, d=3, seed=1)
    ds = generate(spec, 4000)
    emp = (dct_raw(ds.trajs) ** 2).mean(axis=(0, 2))
    lam = lambda_spectrum(spec)
    # chi-square with 12000 dof: relative sd about 1.3%
    np.testing.assert_allclose(emp, lam, rtol=0.06)


def test_determinism_and_independence_of_count():
    spec = GeneratorSpec("broadband", n=8, d=2, seed=3)
    a = generate(spec, 10).trajs
    b = generate(spec, 4).trajs
    np.testing.assert_array_equal(a[:4], b)
    tr, te = paper_splits(spec, 5, 5)
    assert not np.allclose(tr.trajs, te.trajs)
    c = generate(GeneratorSpec("broadband", n=8, d=2, seed=4), 4).trajs
    assert not np.allclose(b, c)


def test_generate_errors():
    with pytest.raises(InvalidInputError):
        generate(GeneratorSpec("pink"), 3)
    with pytest.raises(InvalidInputError):
        generate(GeneratorSpec(), 0)
    with pytest.raises(InvalidInputError):
        generate(GeneratorSpec(), 2, split="val")
    with pytest.raises(InvalidInputError):
        lambda_spectrum(GeneratorSpec("lowfreq", n=6))


def test_standardizer():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((30, 10, 3)) * [1.0, 5.0, 0.1] + [0.0, 2.0, -1.0]
    sc = TrajectoryStandardizer().fit(X)
    Z = sc.transform(X)
    np.testing.assert_allclose(Z.mean(axis=(0, 1)), 0.0, atol=1e-12)
    np.testing.assert_allclose(Z.std(axis=(0, 1)), 1.0, atol=1e-12)
    np.testing.assert_allclose(sc.inverse_transform(Z), X, atol=1e-12)
    with pytest.raises(InvalidInputError):
        TrajectoryStandardizer().fit(np.zeros((2, 3, 1)))


def test_normalize_round_trip():
    tr, te = paper_splits(GeneratorSpec("lowfreq", n=16, d=2), 50, 10)
    ntr = normalize(tr)
    nte = normalize(te, ntr.normalization)
    np.testing.assert_allclose(denormalize(nte).trajs, te.trajs, atol=1e-12)
    with pytest.raises(InvalidInputError):
        normalize(te)
    with pytest.raises(InvalidInputError):
        normalize(ntr)


def test_save_load(tmp_path):
    tr, te = paper_splits(GeneratorSpec("highfreq", n=16, d=2, seed=9), 20, 5)
    meta = save_dataset(tmp_path, tr, te)
    assert json.loads((tmp_path / "meta.json").read_text()) == meta
    rtr, rte = load_dataset(tmp_path, normalized=False)
    np.testing.assert_array_equal(rtr.trajs, tr.trajs)
    np.testing.assert_array_equal(rte.trajs, te.trajs)
    assert rtr.spec == tr.spec
    ntr, nte = load_dataset(tmp_path)
    np.testing.assert_allclose(ntr.trajs, normalize(tr).trajs, atol=1e-12)
