"""Command-line pipelines: ``fewstep <command> [options]``.

Every command writes its artifacts plus a ``manifest.json`` listing inputs,
seeds, library versions and the SHA-256 of each output file.  On failure the
process exits nonzero, prints an error JSON on stderr, writes ``error.json``
next to the artifacts and marks the manifest ``"status": "partial"``.

Relative ``--out`` paths resolve against ``$FEWSTEP_OUTPUT_ROOT`` when it is
set.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from ._validation import InvalidInputError
from .evalx import (
    ExecFilter,
    bound_comparison,
    evaluate_ablation,
    evaluate_run,
    mask_for_dataset,
    write_bound_comparison,
    write_mse_vs_nfe,
    write_table6,
)
from .io import format_float, read_trajectories, read_trajectory_dir, write_spectrum, write_trajectories
from .models import DiffusionDenoiser
from .oracle import BOUND_COLUMNS, bound_suite, relative_bound
from .sampler import step_ablation, terminal_noise
from .schedule import make_cosine
from .spectral import cutoff_high_to_low, cutoff_low_to_high, dataset_spectrum, segment_episode
from .synthdata import GeneratorSpec, lambda_spectrum, load_dataset, paper_splits, save_dataset

log = logging.getLogger("fewstep")

OUTPUT_ROOT_ENV = "FEWSTEP_OUTPUT_ROOT"
DEFAULT_STEPS = (1, 2, 5, 10, 50, 100)
SAMPLE_PATTERN = "traj_{index:04d}_K{steps:03d}.csv"


class CommandError(RuntimeError):
    pass


# -- experiment config ---------------------------------------------------------


@dataclass
class ExperimentConfig:
    """Everything needed to re-run an experiment; round-trips through JSON.

    Defaults are the full-scale synthetic protocol.  :meth:`desk` returns a
    reduced preset that finishes in minutes on one CPU core.
    """

    datasets: list = field(default_factory=lambda: ["lowfreq", "broadband", "highfreq"])
    generator: dict = field(default_factory=lambda: {"n": 64, "d": 4})
    n_train: int = 10_000
    n_test: int = 256
    schedule: dict = field(default_factory=lambda: {"kind": "linear-beta", "steps": 100,
                                                    "beta_min": 1e-4, "beta_max": 2e-2})
    arch: str = "cnn"
    model: dict = field(default_factory=dict)
    training: dict = field(default_factory=lambda: {"epochs": 60, "batch_size": 256, "lr": 1e-3,
                                                    "weight_decay": 0.0})
    steps: list = field(default_factory=lambda: list(DEFAULT_STEPS))
    filter: dict = field(default_factory=lambda: {"kind": "first-order", "kappa": 0.5})
    fraction: float = 0.95
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    bounds: dict = field(default_factory=lambda: {"trials": 1000, "n": 32, "n_samples": 10_000,
                                                  "comparison_samples": 20_000})
    output_dir: str = "table6"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.datasets or any(k not in ("lowfreq", "broadband", "highfreq") for k in self.datasets):
            raise InvalidInputError(f"datasets must be a non-empty subset of lowfreq/broadband/highfreq, got {self.datasets}")
        if self.arch not in ("cnn", "dim"):
            raise InvalidInputError(f"arch must be 'cnn' or 'dim', got {self.arch!r}")
        if self.n_train < 1 or self.n_test < 1:
            raise InvalidInputError("n_train and n_test must be positive")
        if not self.steps or not self.seeds:
            raise InvalidInputError("steps and seeds must be non-empty")
        if not 0 < self.fraction <= 1:
            raise InvalidInputError(f"fraction must lie in (0, 1], got {self.fraction}")
        ExecFilter(**self.filter)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data, base=None):
        """Build from a dict; fields not given come from ``base`` (the full defaults)."""
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidInputError(f"unknown config fields: {sorted(unknown)}")
        merged = (cls() if base is None else base).to_dict()
        for k, v in data.items():
            # nested dicts merge so a config may override a single field
            if isinstance(merged.get(k), dict) and isinstance(v, dict):
                merged[k] = {**merged[k], **v}
            else:
                merged[k] = v
        return cls(**merged)

    @classmethod
    def desk(cls, arch="cnn", **overrides):
        """Reduced preset: 2000 training trajectories, 30 epochs, narrower networks."""
        if arch not in DESK_MODELS:
            raise InvalidInputError(f"arch must be one of {sorted(DESK_MODELS)}, got {arch!r}")
        cfg = cls().to_dict()
        cfg.update(
            n_train=2000,
            arch=arch,
            model=dict(DESK_MODELS[arch]),
            training={"epochs": 30, "batch_size": 256, "lr": 1e-3, "weight_decay": 0.0},
        )
        cfg.update(overrides)
        return cls(**cfg)


DESK_MODELS = {
    "cnn": {"hidden_channels": 32, "blocks": 8},
    "dim": {"token_dim": 32, "depth": 3, "mlp_ratio": 2},
}


PRESETS = {"full": ExperimentConfig, "desk": ExperimentConfig.desk}


def load_config(path=None, preset="full"):
    """Preset defaults overlaid with the JSON file at ``path``, if any."""
    if preset not in PRESETS:
        raise InvalidInputError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    data = {} if path is None else json.loads(Path(path).read_text())
    if preset == "full":
        return ExperimentConfig.from_dict(data)
    # the desk model size depends on the architecture
    base = ExperimentConfig.desk(arch=data.get("arch", "cnn"))
    return ExperimentConfig.from_dict(data, base=base)


# -- manifests -----------------------------------------------------------------


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _versions():
    import sklearn

    return {"fewstep": __version__, "numpy": np.__version__, "scikit-learn": sklearn.__version__,
            "python": platform.python_version()}


class Run:
    """Output directory bookkeeping for one command."""

    def __init__(self, command, out_dir, params, manifest_name="manifest.json", only=None):
        self.command = command
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.params = params
        self.manifest_name = manifest_name
        self.only = only
        self.inputs = {}
        self.extra = {}

    def add_input(self, path):
        path = Path(path)
        files = sorted(path.rglob("*")) if path.is_dir() else [path]
        for f in files:
            if f.is_file():
                self.inputs[str(f)] = sha256_file(f)

    def manifest(self, status):
        files = sorted(self.out.rglob("*")) if self.only is None else [Path(f) for f in self.only]
        outputs = {}
        for f in files:
            if f.is_file() and f != self.out / self.manifest_name:
                outputs[f.relative_to(self.out).as_posix()] = sha256_file(f)
        return {
            "format": "fewstep-manifest/1",
            "command": self.command,
            "status": status,
            "params": self.params,
            "inputs": self.inputs,
            "outputs": outputs,
            "versions": _versions(),
            **self.extra,
        }

    def finish(self, status="complete"):
        text = json.dumps(self.manifest(status), indent=2, sort_keys=True, default=_json_default) + "\n"
        (self.out / self.manifest_name).write_text(text)


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def resolve_out(path):
    p = Path(path)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not p.is_absolute():
        p = Path(root) / p
    return p


def _parse_int_list(text):
    try:
        vals = [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise InvalidInputError(f"expected a comma-separated list of integers, got {text!r}") from None
    if not vals:
        raise InvalidInputError("empty integer list")
    return vals


def _json_arg(text):
    """A JSON object given inline or as a path to a file."""
    if text is None:
        return {}
    p = Path(text)
    raw = p.read_text() if p.exists() else text
    try:
        val = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"invalid JSON ({exc})") from None
    if not isinstance(val, dict):
        raise InvalidInputError("expected a JSON object")
    return val


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


# -- pipeline steps (shared by the subcommands and ``reproduce``) -------------------


def synth_step(out, kind, n, d, n_train, n_test, seed, extra=None):
    spec = GeneratorSpec(kind=kind, n=n, d=d, seed=seed, **(extra or {}))
    train, test = paper_splits(spec, n_train, n_test)
    return save_dataset(out, train, test)


def train_step(data_dir, model_path, arch, model_cfg, training, schedule, seed, cond_mode="none"):
    train, _ = load_dataset(data_dir)
    est = DiffusionDenoiser(arch=arch, config=model_cfg, schedule=schedule, seed=seed, cond_mode=cond_mode,
                            **training)
    est.fit(train.trajs)
    est.save(model_path)
    return est


def sample_step(est, data_dir, out, steps, seed, count=None, threads=1):
    _, test = load_dataset(data_dir)
    n_test = len(test) if count is None else min(int(count), len(test))
    x0 = test.trajs[:n_test]
    noise = terminal_noise(seed, n_test, x0.shape[1], x0.shape[2])
    cond = est.condition_for(x0)
    max_k = est.schedule_.num_train_steps
    steps = sorted(set(int(k) for k in steps))
    if max_k not in steps:
        steps.append(max_k)
    run = step_ablation(est, est.schedule_, steps, noise, cond, threads=threads)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for K in steps:
        for i in range(n_test):
            write_trajectories(out / SAMPLE_PATTERN.format(index=i, steps=K), run.outputs[K][i][None])
    info = {"steps": steps, "count": n_test, "pattern": SAMPLE_PATTERN, "dataset": test.spec.kind,
            "noise_seed": int(seed), "noise_sha256": run.noise_hash, "parameterization": run.parameterization}
    return run, info


def _trained_relative(rows, test_trajs):
    """Per-frame action MSE over the per-dimension prior trace ``n mean(x^2)``, keyed by K."""
    n = test_trajs.shape[1]
    trace = n * float(np.mean(test_trajs**2))
    return {r.steps: r.action_mse / trace for r in rows}


def evaluate_step(rows, data_dir, out, schedule, fraction, comparison_samples, seed):
    train, test = load_dataset(data_dir)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_table6(out / "table6.csv", rows)
    write_mse_vs_nfe(out / "mse_vs_nfe.csv", rows)
    kind = train.spec.kind
    lam = lambda_spectrum(train.spec)
    mask = _mask(kind, train.trajs, fraction)
    trained = _trained_relative(rows, test.trajs)
    K_list = [r.steps for r in rows]
    bc = bound_comparison(lam, schedule, K_list, mask, comparison_samples, seed, trained)
    write_bound_comparison(out / "bound_comparison.csv", bc)
    return bc


def _mask(kind, trajs, fraction):
    return mask_for_dataset(kind, trajs, fraction)


# -- subcommands ---------------------------------------------------------------


def cmd_synth(args):
    run = Run("synth", resolve_out(args.out), vars_clean(args))
    meta = synth_step(run.out, args.kind, args.n, args.d, args.count, args.test_count, args.seed)
    run.extra["seeds"] = {"master": args.seed}
    run.extra["dataset"] = meta["spec"]
    return run


def cmd_analyze(args):
    run = Run("analyze", resolve_out(args.out), vars_clean(args))
    src = Path(args.input)
    run.add_input(src)
    X = read_trajectory_dir(src) if src.is_dir() else read_trajectories(src)
    if args.window:
        segs = [s for x in X for s in segment_episode(x, args.window)]
        if not segs:
            raise InvalidInputError(f"no complete window of {args.window} frames in the input")
        X = np.stack(segs)
    spec = dataset_spectrum(X)
    write_spectrum(run.out / "spectrum.csv", spec)
    if spec.degenerate:
        raise InvalidInputError("input trajectories carry no energy after mean removal")
    mask = cutoff_high_to_low(spec, args.fraction) if args.direction == "high_to_low" else \
        cutoff_low_to_high(spec, args.fraction)
    cum = spec.cumulative_share()
    summary = {
        "trajectories": int(len(X)),
        "frames": int(X.shape[1]),
        "dims": int(X.shape[2]),
        "fraction": args.fraction,
        "direction": args.direction,
        "m": int(mask.m),
        "low_modes": len(mask.low_modes),
        "high_modes": len(mask.high_modes),
        "cumulative_share": {str(k): float(cum[k - 1]) for k in (1, 2, 4, 6, 8, 16) if k <= spec.n},
    }
    _write_json(run.out / "cutoff.json", summary)
    run.extra["summary"] = summary
    return run


def cmd_train(args):
    model_path = resolve_out(args.out)
    from .autodiff.serialize import sidecar_path

    run = Run("train", model_path.parent, vars_clean(args), manifest_name=model_path.name + ".manifest.json",
              only=[model_path, sidecar_path(model_path)])
    run.add_input(Path(args.data) / "meta.json")
    run.add_input(Path(args.data) / "train.csv")
    training = {"epochs": args.epochs, "batch_size": args.batch, "lr": args.lr, "weight_decay": args.weight_decay}
    schedule = {"kind": args.schedule, "steps": args.train_steps}
    est = train_step(args.data, model_path, args.arch, _json_arg(args.model_config), training, schedule,
                     args.seed, args.cond)
    run.extra["seeds"] = {"init": [args.seed, 0], "training": [args.seed, 1]}
    run.extra["parameters"] = est.num_parameters()
    run.extra["final_loss"] = est.history_[-1]
    return run


def cmd_sample(args):
    run = Run("sample", resolve_out(args.out), vars_clean(args))
    run.add_input(args.model)
    est = DiffusionDenoiser.load(args.model)
    _, info = sample_step(est, args.data, run.out, _parse_int_list(args.steps), args.seed, args.count, args.threads)
    run.extra.update(info)
    return run


def cmd_evaluate(args):
    run = Run("evaluate", resolve_out(args.out), vars_clean(args))
    run.add_input(Path(args.samples) / "manifest.json")
    train, _ = load_dataset(args.data)
    kind = args.kind or train.spec.kind
    mask = _mask(kind, train.trajs, args.fraction)
    filt = ExecFilter(args.filter, args.kappa, args.cutoff)
    rows = evaluate_run(args.samples, mask, filt, dataset=kind)
    from .schedule import make_schedule

    sched = make_schedule({"kind": args.schedule, "steps": args.train_steps})
    evaluate_step(rows, args.data, run.out, sched, args.fraction, args.comparison_samples, args.seed)
    run.extra["mask"] = {"m": mask.m, "high_modes": len(mask.high_modes)}
    return run


def cmd_verify_bounds(args):
    run = Run("verify-bounds", resolve_out(args.out), vars_clean(args))
    rows, summary = bound_suite(args.trials, args.n, args.samples, args.seed, args.n_se)
    _write_rows(run.out / "bounds.csv", BOUND_COLUMNS, rows)
    _write_json(run.out / "summary.json", summary)
    run.extra["summary"] = summary
    if args.strict and (summary["bound_violations"] or summary["mse_mismatches"]):
        raise CommandError(f"{summary['bound_violations']} bound violations, "
                           f"{summary['mse_mismatches']} MSE mismatches in {args.trials} trials")
    return run


def _write_rows(path, columns, rows):
    lines = [",".join(columns)]
    for r in rows:
        lines.append(",".join(format_float(r[c]) if isinstance(r[c], float) else str(r[c]) for c in columns))
    Path(path).write_text("\n".join(lines) + "\n")


WORKED_TRACE = 1.0 / (32 * 0.0023)


def worked_bound(m=1, n=32, eta=0.07, trace=WORKED_TRACE, K=2):
    """The relative bound on a cosine schedule read at ``t = 1/K``.

    The default trace makes the low-band coefficient ``m / (n Tr)`` equal
    0.0023 for ``m = 1``.
    """
    alpha, sigma = make_cosine(K).alpha_sigma_at(1.0 / K)
    value = relative_bound(m, n, eta, trace, alpha, sigma)
    return {"m": m, "n": n, "eta": eta, "trace": trace, "K": K, "alpha": alpha, "sigma": sigma,
            "low_term": m * (sigma / alpha) ** 2 / (n * trace), "high_term": eta / n, "e_hat_bound": value}


# (m, eta) pairs: one dominant mode with eta = 0.07, and two modes holding 98.5% of the energy
WORKED_VARIANTS = {"m1": (1, 0.07), "m2": (2, 0.015)}


def reproduce_bounds(cfg, out, seed):
    b = cfg.bounds
    rows, summary = bound_suite(b["trials"], b["n"], b["n_samples"], seed)
    _write_rows(out / "bounds.csv", BOUND_COLUMNS, rows)
    _write_json(out / "summary.json", summary)
    _write_json(out / "worked_bound.json",
                {k: worked_bound(m=m, eta=eta) for k, (m, eta) in WORKED_VARIANTS.items()})
    return summary


def reproduce_table6(cfg, out, threads=1):
    """synth -> train -> sample -> evaluate for every dataset and seed.

    Per-seed artifacts live in ``seed_<s>/<kind>/``; the top-level
    ``table6.csv`` and ``mse_vs_nfe.csv`` hold means over seeds.
    """
    from .schedule import make_schedule

    out = Path(out)
    all_rows = {}
    sched = make_schedule(cfg.schedule)
    g = dict(cfg.generator)
    n, d = int(g.pop("n", 64)), int(g.pop("d", 4))
    for seed in cfg.seeds:
        for kind in cfg.datasets:
            base = out / f"seed_{seed}" / kind
            data_dir = base / "data"
            synth_step(data_dir, kind, n, d, cfg.n_train, cfg.n_test, seed, g)
            est = train_step(data_dir, base / "model.bin", cfg.arch, cfg.model, cfg.training, cfg.schedule, seed)
            run, info = sample_step(est, data_dir, base / "samples", cfg.steps, seed, threads=threads)
            _write_json(base / "samples" / "run.json", info)
            train, _ = load_dataset(data_dir)
            mask = _mask(kind, train.trajs, cfg.fraction)
            rows = evaluate_ablation(run, mask, ExecFilter(**cfg.filter), dataset=kind)
            evaluate_step(rows, data_dir, base / "eval", sched, cfg.fraction,
                          cfg.bounds["comparison_samples"], seed)
            all_rows[(seed, kind)] = rows
            log.info("seed %s %s done", seed, kind)
    mean_rows = _mean_over_seeds(all_rows, cfg)
    write_table6(out / "table6.csv", mean_rows)
    write_mse_vs_nfe(out / "mse_vs_nfe.csv", mean_rows)
    per_seed = []
    for (seed, kind), rows in all_rows.items():
        per_seed.extend({"seed": seed, **r.row()} for r in rows)
    cols = ("seed",) + tuple(per_seed[0].keys())[1:]
    _write_rows(out / "table6_per_seed.csv", cols, per_seed)
    return all_rows


def _mean_over_seeds(all_rows, cfg):
    from .evalx import TABLE6_COLUMNS, ErrorBreakdown

    out = []
    for kind in cfg.datasets:
        per = [all_rows[(s, kind)] for s in cfg.seeds]
        for j, r0 in enumerate(per[0]):
            vals = {c: float(np.mean([p[j].row()[c] for p in per])) for c in TABLE6_COLUMNS[2:]}
            out.append(ErrorBreakdown(**vals, steps=r0.steps, dataset=kind))
    return out


def cmd_reproduce(args):
    cfg = load_config(args.config, args.preset)
    if args.seed is not None:
        cfg.seeds = [args.seed]
    params = vars_clean(args)
    params["config"] = cfg.to_dict()
    run = Run(f"reproduce:{args.experiment}", resolve_out(args.out or cfg.output_dir), params)
    _write_json(run.out / "config.json", cfg.to_dict())
    if args.experiment == "bounds":
        run.extra["summary"] = reproduce_bounds(cfg, run.out, cfg.seeds[0])
    else:
        reproduce_table6(cfg, run.out, args.threads)
    return run


def vars_clean(args):
    return {k: v for k, v in vars(args).items() if k != "func"}


# -- entry point ---------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="fewstep", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"fewstep {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic dataset directory")
    s.add_argument("--kind", choices=["lowfreq", "broadband", "highfreq"], default="lowfreq")
    s.add_argument("--n", type=int, default=64, help="frames per trajectory")
    s.add_argument("--d", type=int, default=4, help="action dimensions")
    s.add_argument("--count", type=int, default=10_000, help="training trajectories")
    s.add_argument("--test-count", type=int, default=256)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("analyze", help="DCT energy spectrum of trajectory CSVs")
    s.add_argument("input", help="a trajectory CSV or a directory of them")
    s.add_argument("--fraction", type=float, default=0.95)
    s.add_argument("--direction", choices=["low_to_high", "high_to_low"], default="low_to_high")
    s.add_argument("--window", type=int, default=0, help="cut each trajectory into windows of this length")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("train", help="train a denoiser on a dataset directory")
    s.add_argument("--arch", choices=["cnn", "dim"], default="cnn")
    s.add_argument("--data", required=True)
    s.add_argument("--epochs", type=int, default=60)
    s.add_argument("--batch", type=int, default=256)
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--weight-decay", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--schedule", choices=["linear-beta", "cosine"], default="linear-beta")
    s.add_argument("--train-steps", type=int, default=100)
    s.add_argument("--model-config", help="JSON object (inline or file) overriding architecture fields")
    s.add_argument("--cond", choices=["none", "first_frame"], default="none")
    s.add_argument("--out", required=True, help="weight file path")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("sample", help="DDIM step ablation from shared terminal noise")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--steps", default=",".join(map(str, DEFAULT_STEPS)))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--count", type=int, help="number of test trajectories (default: all)")
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("evaluate", help="band-split errors of a sample run")
    s.add_argument("--samples", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--kind", choices=["lowfreq", "broadband", "highfreq"])
    s.add_argument("--fraction", type=float, default=0.95)
    s.add_argument("--filter", choices=["first-order", "dct-lowpass"], default="first-order")
    s.add_argument("--kappa", type=float, default=0.5)
    s.add_argument("--cutoff", type=int)
    s.add_argument("--schedule", choices=["linear-beta", "cosine"], default="linear-beta")
    s.add_argument("--train-steps", type=int, default=100)
    s.add_argument("--comparison-samples", type=int, default=20_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("verify-bounds", help="Monte-Carlo check of the optimal-denoiser bounds")
    s.add_argument("--trials", type=int, default=1000)
    s.add_argument("--n", type=int, default=32)
    s.add_argument("--samples", type=int, default=10_000)
    s.add_argument("--n-se", type=float, default=3.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--strict", action="store_true", help="exit nonzero on any violation")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_verify_bounds)

    s = sub.add_parser("reproduce", help="run a full experiment from a config")
    s.add_argument("--experiment", choices=["table6", "bounds"], required=True)
    s.add_argument("--config", help="ExperimentConfig JSON file; fields override the preset")
    s.add_argument("--preset", choices=sorted(PRESETS), default="full")
    s.add_argument("--seed", type=int, help="run a single seed instead of the config's list")
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_reproduce)
    return p


def _error_payload(args, exc):
    return {"status": "error", "command": getattr(args, "command", None), "error": type(exc).__name__,
            "message": str(exc)}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    run = None
    try:
        run = args.func(args)
        run.finish("complete")
        print(json.dumps({"status": "ok", "command": args.command, "out": str(run.out)}))
        return 0
    except Exception as exc:  # noqa: BLE001 - every failure becomes an error JSON
        payload = _error_payload(args, exc)
        print(json.dumps(payload), file=sys.stderr)
        out = _failure_dir(args)
        if out is not None:
            try:
                out.mkdir(parents=True, exist_ok=True)
                _write_json(out / "error.json", payload)
                partial = Run(args.command, out, vars_clean(args))
                partial.extra["error"] = payload
                partial.finish("partial")
            except OSError:
                pass
        log.debug("failure", exc_info=True)
        return 2 if isinstance(exc, (InvalidInputError, ValueError, FileNotFoundError, KeyError)) else 1


def _failure_dir(args):
    out = getattr(args, "out", None)
    if out is None:
        return None
    p = resolve_out(out)
    return p.parent if args.command == "train" else p


if __name__ == "__main__":
    sys.exit(main())
