"""Synthetic trajectories with a controlled DCT spectrum.

Each trajectory is built in the DCT domain: independent coefficients
``z[k, j] ~ N(0, lam[k])`` per mode ``k`` and action dimension ``j``, mapped to
time with the inverse orthonormal DCT.  Three spectra are provided:

``lowfreq``    six fixed head modes at ``k = 0..5`` plus an exponentially
               decaying tail carrying ``tail_energy_fraction`` of the total;
``broadband``  ``lam[k] = 1``;
``highfreq``   the ``lowfreq`` spectrum reversed.

Randomness: trajectory ``i`` of split ``s`` draws from
``SeedSequence(seed, spawn_key=(s, i))`` (PCG64), so output depends only on the
master seed and index, never on generation order or worker count.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import InvalidInputError, check_trajectories
from .io import read_trajectories, write_trajectories
from .spectral import idct_raw

__all__ = [
    "HEAD_VALUES",
    "GeneratorSpec",
    "Dataset",
    "TrajectoryStandardizer",
    "lambda_spectrum",
    "generate",
    "normalize",
    "denormalize",
    "paper_splits",
    "save_dataset",
    "load_dataset",
]

HEAD_VALUES = (0.25, 1.00, 0.90, 0.65, 0.35, 0.20)
KINDS = ("lowfreq", "broadband", "highfreq")
SPLIT_STREAMS = {"train": 0, "test": 1}


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str = "lowfreq"
    n: int = 64
    d: int = 4
    head_values: tuple = HEAD_VALUES
    tail_energy_fraction: float = 0.01
    tail_decay: float = 0.25
    seed: int = 0

    def to_dict(self):
        out = asdict(self)
        out["head_values"] = list(self.head_values)
        return out

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if "head_values" in data:
            data["head_values"] = tuple(data["head_values"])
        return cls(**data)


def lambda_spectrum(spec):
    """Per-mode coefficient variances for a generator."""
    if spec.kind not in KINDS:
        raise InvalidInputError(f"unknown generator kind {spec.kind!r}")
    if spec.n < 1 or spec.d < 1:
        raise InvalidInputError(f"n and d must be positive, got n={spec.n}, d={spec.d}")
    if spec.kind == "broadband":
        return np.ones(spec.n)
    head = np.asarray(spec.head_values, dtype=np.float64)
    h = len(head)
    if spec.n <= h:
        raise InvalidInputError(f"{spec.kind} needs n > {h}, got {spec.n}")
    f = spec.tail_energy_fraction
    if not 0 <= f < 1:
        raise InvalidInputError(f"tail_energy_fraction must lie in [0, 1), got {f}")
    if spec.tail_decay <= 0:
        raise InvalidInputError(f"tail_decay must be positive, got {spec.tail_decay}")
    shape = np.exp(-spec.tail_decay * np.arange(spec.n - h))
    # tail / (head + tail) = f  <=>  tail = f / (1 - f) * head
    amplitude = f / (1.0 - f) * head.sum() / shape.sum()
    lam = np.concatenate([head, amplitude * shape])
    return lam[::-1].copy() if spec.kind == "highfreq" else lam


@dataclass
class Dataset:
    """Trajectories of one split plus the normalization they were mapped with.

    ``normalization`` is ``None`` for raw data, else ``(mean, std)`` vectors of
    length ``d`` computed on the training split.
    """

    trajs: np.ndarray
    spec: GeneratorSpec
    split: str = "train"
    normalization: tuple | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.trajs)

    @property
    def normalized(self):
        return self.normalization is not None


def _trajectory_rng(seed, split, index):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(SPLIT_STREAMS[split], index)))


def generate(spec, count, split="train", lam=None):
    """Sample ``count`` raw trajectories; deterministic in ``(spec.seed, split, index)``."""
    if int(count) < 1:
        raise InvalidInputError(f"count must be >= 1, got {count}")
    if split not in SPLIT_STREAMS:
        raise InvalidInputError(f"split must be one of {sorted(SPLIT_STREAMS)}, got {split!r}")
    lam = lambda_spectrum(spec) if lam is None else np.asarray(lam, dtype=np.float64)
    scale = np.sqrt(lam)[:, None]
    Z = np.empty((int(count), spec.n, spec.d))
    for i in range(int(count)):
        Z[i] = _trajectory_rng(spec.seed, split, i).standard_normal((spec.n, spec.d)) * scale
    return Dataset(trajs=idct_raw(Z), spec=spec, split=split)


class TrajectoryStandardizer(TransformerMixin, BaseEstimator):
    """Per-action-dimension z-scoring over all samples and frames.

    Works on ``(N, n, d)`` batches; statistics are pooled over the first two axes.
    """

    def fit(self, X, y=None):
        X = check_trajectories(X)
        self.mean_ = X.mean(axis=(0, 1))
        self.scale_ = X.std(axis=(0, 1))
        if np.any(self.scale_ == 0):
            raise InvalidInputError("zero standard deviation in at least one action dimension")
        self.n_dims_ = X.shape[2]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = check_trajectories(X)
        if X.shape[2] != self.n_dims_:
            raise InvalidInputError(f"expected {self.n_dims_} action dimensions, got {X.shape[2]}")
        return (X - self.mean_) / self.scale_

    def inverse_transform(self, X):
        check_is_fitted(self, "mean_")
        X = np.asarray(X, dtype=np.float64)
        return X * self.scale_ + self.mean_


def _standardizer_from(stats):
    sc = TrajectoryStandardizer()
    sc.mean_ = np.asarray(stats[0], dtype=np.float64)
    sc.scale_ = np.asarray(stats[1], dtype=np.float64)
    sc.n_dims_ = len(sc.mean_)
    return sc


def normalize(ds, stats=None):
    """Z-score a raw dataset.

    Training data is normalized with its own statistics; pass the training
    split's ``normalization`` as ``stats`` to map a test split.
    """
    if ds.normalized:
        raise InvalidInputError("dataset is already normalized")
    if stats is None:
        if ds.split != "train":
            raise InvalidInputError("test splits must be normalized with training statistics")
        sc = TrajectoryStandardizer().fit(ds.trajs)
    else:
        sc = _standardizer_from(stats)
    return replace(ds, trajs=sc.transform(ds.trajs), normalization=(sc.mean_, sc.scale_))


def denormalize(ds):
    if not ds.normalized:
        return ds
    sc = _standardizer_from(ds.normalization)
    return replace(ds, trajs=sc.inverse_transform(ds.trajs), normalization=None)


def paper_splits(spec, n_train=10_000, n_test=256):
    """Raw ``(train, test)`` datasets from disjoint seed streams."""
    return generate(spec, n_train, "train"), generate(spec, n_test, "test")


def save_dataset(directory, train, test):
    """Persist raw splits as ``train.csv`` / ``test.csv`` plus ``meta.json``.

    The training-set normalization statistics are stored in ``meta.json``.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    train, test = denormalize(train), denormalize(test)
    sc = TrajectoryStandardizer().fit(train.trajs)
    write_trajectories(directory / "train.csv", train.trajs)
    write_trajectories(directory / "test.csv", test.trajs)
    meta = {
        "format": "fewstep-dataset/1",
        "spec": train.spec.to_dict(),
        "seeds": {"master": train.spec.seed, "streams": SPLIT_STREAMS},
        "counts": {"train": len(train), "test": len(test)},
        "normalization": {"mean": sc.mean_.tolist(), "std": sc.scale_.tolist()},
    }
    (directory / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return meta


def load_dataset(directory, normalized=True):
    """Load ``(train, test)``; normalized with the stored training statistics by default."""
    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text())
    spec = GeneratorSpec.from_dict(meta["spec"])
    train = Dataset(read_trajectories(directory / "train.csv"), spec, "train", meta=meta)
    test = Dataset(read_trajectories(directory / "test.csv"), spec, "test", meta=meta)
    if normalized:
        stats = (np.asarray(meta["normalization"]["mean"]), np.asarray(meta["normalization"]["std"]))
        train = normalize(train, stats)
        test = normalize(test, stats)
    return train, test
