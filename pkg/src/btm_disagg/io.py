"""CSV reading/writing for datasets, per-load truth and matrices.

Dataset directory layout::

    windows.csv          N rows x P columns (kW), header t0..t{P-1}
    labels.csv           N rows x C columns over {1, 0, ?}, header = class names
    classes.csv          name,sign,initial_atoms (one row per class)
    truth/load_<c>.csv   optional, unsigned ground truth per class (c is 1-based)
"""
from __future__ import annotations

import csv
import os
from pathlib import Path

import numpy as np

from .core import (
    ABSENT,
    PRESENT,
    UNKNOWN,
    Dataset,
    LoadClassSpec,
    default_specs,
    validate_dataset,
)
from .errors import FormatError

_LABEL_TEXT = {PRESENT: "1", ABSENT: "0", UNKNOWN: "?"}
_LABEL_CODE = {v: k for k, v in _LABEL_TEXT.items()}


def fmt(x: float) -> str:
    # repr-precision so that read(write(x)) == x
    return repr(float(x))


def write_matrix(path, rows, header=None):
    """Write a 2-D array row by row (floats at round-trip precision)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header is None:
            header = [f"v{i}" for i in range(rows.shape[1])]
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def read_matrix(path) -> np.ndarray:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(path, 0, 0, "empty file") from None
        out = []
        for i, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise FormatError(path, i, len(row), f"expected {len(header)} fields")
            vals = []
            for j, cell in enumerate(row):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise FormatError(path, i, j, f"not a number: {cell!r}") from None
            out.append(vals)
    if not out:
        return np.zeros((0, len(header)))
    return np.array(out, dtype=float)


def write_labels(path, entries, names):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(names))
        for col in np.asarray(entries).T:
            w.writerow([_LABEL_TEXT[int(v)] for v in col])


def read_labels(path) -> tuple[np.ndarray, list[str]]:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        names = next(reader)
        rows = []
        for i, row in enumerate(reader, start=1):
            if len(row) != len(names):
                raise FormatError(path, i, len(row), f"expected {len(names)} fields")
            codes = []
            for j, cell in enumerate(row):
                code = _LABEL_CODE.get(cell.strip())
                if code is None:
                    raise FormatError(path, i, j, f"label must be 1, 0 or ?, got {cell!r}")
                codes.append(code)
            rows.append(codes)
    return np.array(rows, dtype=np.int8).reshape(-1, len(names)).T, names


def write_specs(path, specs):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", "sign", "initial_atoms"])
        for s in specs:
            w.writerow([s.name, s.sign, s.initial_atoms])


def read_specs(path) -> list[LoadClassSpec]:
    path = Path(path)
    specs = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for i, row in enumerate(reader, start=1):
            try:
                specs.append(LoadClassSpec(row[0], int(row[1]), int(row[2])))
            except (ValueError, IndexError) as exc:
                raise FormatError(path, i, 0, str(exc)) from None
    return specs


def write_dataset(dataset: Dataset, truth, directory) -> None:
    """Write ``dataset`` (and optional ``truth``, shape ``C x P x N``) to ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    P = dataset.windows.P
    write_matrix(d / "windows.csv", dataset.X.T, [f"t{i}" for i in range(P)])
    write_labels(d / "labels.csv", dataset.Y, [s.name for s in dataset.specs])
    write_specs(d / "classes.csv", dataset.specs)
    if truth is not None:
        for c, tc in enumerate(truth, start=1):
            write_matrix(d / "truth" / f"load_{c}.csv", np.asarray(tc).T,
                         [f"t{i}" for i in range(P)])


def read_dataset(directory, allow_unlabeled=True):
    """Read a dataset directory; returns ``(dataset, truth or None)``.

    ``truth`` is absent (None) when the ``truth/`` directory is missing.
    """
    d = Path(directory)
    X = read_matrix(d / "windows.csv").T
    Y, names = read_labels(d / "labels.csv")
    if Y.shape[1] != X.shape[1]:
        raise FormatError(d / "labels.csv", Y.shape[1], 0,
                          f"{Y.shape[1]} label rows but {X.shape[1]} windows")
    if (d / "classes.csv").exists():
        specs = read_specs(d / "classes.csv")
    else:
        specs = default_specs(len(names))
    ds = validate_dataset(X, Y, specs, allow_unlabeled=allow_unlabeled)
    truth = None
    tdir = d / "truth"
    if tdir.is_dir():
        truth = np.stack([read_matrix(tdir / f"load_{c}.csv").T
                          for c in range(1, len(specs) + 1)])
    return ds, truth


def write_text(path, lines):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for line in lines:
            fh.write(f"{line}\n")


def read_kv(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#") and "=" in line:
                k, v = line.split("=", 1)
                out[k.strip()] = v.strip()
    return out


def ensure_dir(path) -> Path:
    os.makedirs(path, exist_ok=True)
    return Path(path)
