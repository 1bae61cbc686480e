"""JSON model files and CSV tables.

Model files carry a ``kind`` field: ``discrete`` and ``continuous``
polynomial models are given by sparse coefficient lists, while
``linear-gaussian`` and ``gaussian-ou`` hold dense matrices.  CSV output
writes floats with ``repr`` so values round-trip exactly.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .multiindex import IndexBasis
from .polyproc import GaussianOU, GeneratorMatrix, PolyProcess
from .polyssm import CoefficientMatrix, LinearGaussianSSM, PolySSM

Model = PolySSM | PolyProcess | LinearGaussianSSM | GaussianOU


def _basis_of(data: dict) -> IndexBasis:
    try:
        d, order = int(data["d"]), int(data["order"])
    except KeyError as exc:
        raise ValueError(f"model file lacks field {exc.args[0]!r}") from None
    return IndexBasis(d, order)


def _initial_moments(data: dict, basis: IndexBasis) -> np.ndarray:
    m0 = np.zeros(len(basis))
    m0[0] = 1.0
    for entry in data.get("initial_moments", []):
        m0[basis.rank(entry["lambda"])] = float(entry["value"])
    return m0


def _coefficients(entries: Sequence[dict], basis: IndexBasis, n_pieces: int | None, key: str) -> np.ndarray:
    size = len(basis)
    steps = n_pieces if n_pieces is not None else 1
    out = np.zeros((steps, size, size))
    for entry in entries:
        i, j = basis.rank(entry["lambda"]), basis.rank(entry["mu"])
        val = float(entry["value"])
        if key in entry:
            k = int(entry[key]) - (1 if key == "t" else 0)
            if not 0 <= k < steps:
                raise ValueError(f"{key}={entry[key]} outside 1..{steps}" if key == "t"
                                 else f"{key}={entry[key]} outside 0..{steps - 1}")
            out[k, i, j] = val
        else:
            out[:, i, j] = val
    return out if n_pieces is not None else out[0]


def model_from_dict(data: dict) -> Model:
    kind = data.get("kind")
    if kind == "discrete":
        basis = _basis_of(data)
        entries = data.get("coefficients", [])
        steps = max((int(e["t"]) for e in entries if "t" in e), default=None)
        B = _coefficients(entries, basis, steps, "t")
        B[..., 0, 0] = 1.0
        return PolySSM(CoefficientMatrix(basis, B), _initial_moments(data, basis))
    if kind == "continuous":
        basis = _basis_of(data)
        times = data.get("times")
        pieces = None if times is None else len(times) - 1
        Bc = _coefficients(data.get("generator", []), basis, pieces, "piece")
        return PolyProcess(GeneratorMatrix(basis, Bc, None if times is None else np.asarray(times, float)),
                           _initial_moments(data, basis))
    if kind == "linear-gaussian":
        return LinearGaussianSSM(*(np.asarray(data[k], float) for k in ("a", "A", "C", "mu0", "Sigma0")))
    if kind == "gaussian-ou":
        C: Any = np.asarray(data["C"], float)
        if "C_times" in data:
            C = _interpolated(np.asarray(data["C_times"], float), C)
        times = data.get("times")
        return GaussianOU(np.asarray(data["a"], float), np.asarray(data["A"], float), C,
                          np.asarray(data["mu0"], float), np.asarray(data["Sigma0"], float),
                          None if times is None else np.asarray(times, float))
    raise ValueError(f"unknown model kind {kind!r}")


def _interpolated(times: np.ndarray, values: np.ndarray):
    if values.shape[0] != times.size:
        raise ValueError("C_times and C have different lengths")

    def C(t: float) -> np.ndarray:
        flat = values.reshape(times.size, -1)
        return np.array([np.interp(t, times, col) for col in flat.T]).reshape(values.shape[1:])

    return C


def load_model(path: str | Path) -> Model:
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def _sparse(values: np.ndarray, basis: IndexBasis, key: str | None = None, offset: int = 0) -> list[dict]:
    out = []
    mats = values if values.ndim == 3 else values[None]
    for k, b in enumerate(mats):
        for i, j in zip(*np.nonzero(b)):
            if i == 0:
                continue
            entry = {"lambda": list(basis[i]), "mu": list(basis[j]), "value": float(b[i, j])}
            if values.ndim == 3:
                entry[key] = k + offset
            out.append(entry)
    return out


def model_to_dict(model: Model, grid: Sequence[float] | None = None) -> dict:
    """JSON-ready description; a callable OU covariance is sampled on ``grid``."""
    if isinstance(model, PolySSM):
        basis = model.basis
        return {"kind": "discrete", "d": basis.d, "order": basis.n,
                "coefficients": _sparse(model.B.values, basis, "t", 1),
                "initial_moments": [{"lambda": list(lam), "value": float(v)}
                                    for lam, v in zip(basis, model.initial_moments) if sum(lam) > 0]}
    if isinstance(model, PolyProcess):
        basis = model.basis
        out = {"kind": "continuous", "d": basis.d, "order": basis.n,
               "generator": _sparse(model.generator.values, basis, "piece", 0),
               "initial_moments": [{"lambda": list(lam), "value": float(v)}
                                   for lam, v in zip(basis, model.initial_moments) if sum(lam) > 0]}
        if model.generator.times is not None:
            out["times"] = model.generator.times.tolist()
        return out
    if isinstance(model, LinearGaussianSSM):
        return {"kind": "linear-gaussian", "a": model.a.tolist(), "A": model.A.tolist(), "C": model.C.tolist(),
                "mu0": model.mu0.tolist(), "Sigma0": model.Sigma0.tolist()}
    if isinstance(model, GaussianOU):
        out = {"kind": "gaussian-ou", "a": model.a.tolist(), "A": model.A.tolist(),
               "mu0": model.mu0.tolist(), "Sigma0": model.Sigma0.tolist()}
        if callable(model.C):
            if grid is None:
                raise ValueError("a time-dependent OU covariance needs a sampling grid")
            out["C_times"] = [float(t) for t in grid]
            out["C"] = [model.C_at(t).tolist() for t in grid]
        else:
            out["C"] = model.C.tolist()
        if model.times is not None:
            out["times"] = model.times.tolist()
        return out
    raise TypeError(f"cannot serialize {type(model).__name__}")


def save_model(model: Model, path: str | Path, grid: Sequence[float] | None = None) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model, grid), fh, indent=1, sort_keys=True)
        fh.write("\n")


def fmt(x: float) -> str:
    """Shortest decimal that round-trips to the same double."""
    return repr(float(x))


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[float]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) if not isinstance(x, (int, np.integer)) else str(int(x)) for x in row])


def read_observations(path: str | Path) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Read ``t,<name_1>,...``; returns names, the time column and the value matrix."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0] or rows[0][0] != "t":
        raise ValueError(f"{path}: header must start with 't'")
    header, body = rows[0], [r for r in rows[1:] if r]
    if any(len(r) != len(header) for r in body):
        raise ValueError(f"{path}: ragged rows")
    try:
        data = np.array([[float(x) for x in r] for r in body], dtype=float).reshape(len(body), len(header))
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None
    if not np.all(np.isfinite(data)):
        raise ValueError(f"{path}: missing or non-finite values")
    return header[1:], data[:, 0], data[:, 1:]


def state_header(d: int, names: Sequence[str] | None = None) -> list[str]:
    """``t,s`` then the estimate and the upper triangle of its covariance, row by row."""
    names = list(names) if names is not None else [f"x{i}" for i in range(d)]
    cov = [f"P_{names[i]}_{names[j]}" for i in range(d) for j in range(i, d)]
    return ["t", "s"] + [f"xhat_{n}" for n in names] + cov


def state_row(t: float, s: float, x: np.ndarray, P: np.ndarray) -> list:
    d = len(x)
    iu = np.triu_indices(d)
    return [t, s] + [float(v) for v in x] + [float(v) for v in P[iu]]
