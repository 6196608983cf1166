"""CSV readers and writers for trajectories and spectra.

Trajectory CSV: a ``t,a0,a1,...`` header followed by one row per frame.
Several trajectories in one file are separate header+rows blocks divided by a
blank line.  Values are written with 17 significant digits so a write/read
round trip is exact.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ._validation import InvalidInputError, check_trajectories

__all__ = [
    "write_trajectories",
    "read_trajectories",
    "read_trajectory_dir",
    "write_spectrum",
    "read_spectrum",
    "format_float",
]


def format_float(v):
    return f"{float(v):.17g}"


def _block(x):
    n, d = x.shape
    header = ",".join(["t"] + [f"a{j}" for j in range(d)])
    rows = [header]
    for t in range(n):
        rows.append(",".join([str(t)] + [format_float(v) for v in x[t]]))
    return "\n".join(rows)


def write_trajectories(path, trajs):
    X = check_trajectories(trajs, "trajs")
    text = "\n\n".join(_block(x) for x in X) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def read_trajectories(path):
    """Read every trajectory block of a CSV file into an ``(N, n, d)`` array."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    lengths, data, width = [], [], None
    current = 0
    for ln in lines:
        ln = ln.strip()
        if not ln:
            if current:
                lengths.append(current)
                current = 0
            continue
        if ln.startswith("t,") or ln == "t":
            if current:
                lengths.append(current)
                current = 0
            cols = ln.count(",") + 1
            if width is not None and cols != width:
                raise InvalidInputError(f"{path}: inconsistent column count")
            width = cols
            continue
        data.append(ln)
        current += 1
    if current:
        lengths.append(current)
    if not lengths:
        raise InvalidInputError(f"{path}: no trajectories found")
    if len(set(lengths)) != 1:
        raise InvalidInputError(f"{path}: trajectories differ in length {sorted(set(lengths))}")
    try:
        flat = np.array(" ".join(data).replace(",", " ").split(), dtype=np.float64)
    except ValueError as exc:
        raise InvalidInputError(f"{path}: malformed number ({exc})") from None
    if flat.size != len(data) * width:
        raise InvalidInputError(f"{path}: ragged rows")
    arr = flat.reshape(len(lengths), lengths[0], width)
    return check_trajectories(arr[:, :, 1:], str(path))


def read_trajectory_dir(directory):
    """Read every ``*.csv`` file in a directory (sorted by name) as one batch."""
    files = sorted(Path(directory).glob("*.csv"))
    if not files:
        raise InvalidInputError(f"{directory}: no CSV files")
    return np.concatenate([read_trajectories(f) for f in files], axis=0)


def write_spectrum(path, spec):
    cum = spec.cumulative_share()
    rows = ["mode,energy,share,cumulative_share"]
    for k in range(spec.n):
        rows.append(
            f"{k},{format_float(spec.mode_energy[k])},{format_float(spec.energy_share[k])},{format_float(cum[k])}"
        )
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def read_spectrum(path):
    from .spectral import spectrum_from_energy

    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return spectrum_from_energy(arr[:, 1])
