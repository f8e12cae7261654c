"""Data ingestion, standardisation, distance matrices and result documents."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .model import DataSet, MvHyperParams, UvHyperParams


def read_csv(path) -> DataSet:
    """Parse a numeric CSV into a DataSet, rows as observations.

    Accepts headerless files or a single header row, UTF-8, comma delimiter,
    '.' decimal separator. Reports the offending line and column on bad input.
    """
    text = Path(path).read_text(encoding="utf-8")
    lines = [(no, line) for no, line in enumerate(text.splitlines(), start=1) if line.strip()]
    if not lines:
        raise ValueError(f"empty CSV file: {path}")

    def parse_row(line):
        cells = line.split(",")
        out = []
        for col, cell in enumerate(cells, start=1):
            try:
                out.append(float(cell))
            except ValueError:
                return None, col, cell
        return out, None, None

    first_row, _, _ = parse_row(lines[0][1])
    start = 0 if first_row is not None else 1  # non-numeric first row is a header
    if start == 1 and len(lines) == 1:
        raise ValueError(f"CSV file has a header but no data rows: {path}")

    rows = []
    width = None
    for no, line in lines[start:]:
        row, col, cell = parse_row(line)
        if row is None:
            raise ValueError(f"non-numeric value {cell!r} at line {no}, column {col}")
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ValueError(f"ragged row at line {no}: expected {width} fields, got {len(row)}")
        rows.append(row)
    return DataSet(np.asarray(rows))


def write_csv(data, path, header=None) -> None:
    """Write a DataSet or 2-d array as CSV with 17 significant digit floats."""
    values = data.values if isinstance(data, DataSet) else np.atleast_2d(np.asarray(data))
    out = []
    if header:
        out.append(",".join(header))
    for row in values:
        out.append(",".join(f"{v:.17g}" for v in row))
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def read_labels_csv(path) -> np.ndarray:
    """Read a single-column CSV of integer labels."""
    data = read_csv(path)
    if data.b != 1:
        raise ValueError(f"label file must have one column, got {data.b}")
    col = data.values[:, 0]
    labels = col.astype(np.int64)
    if not np.array_equal(labels, col):
        raise ValueError("labels must be integers")
    return labels


def standardize(data: DataSet):
    """Centre and scale each column to mean 0 and sample sd 1 (n - 1 denominator).

    Returns the transformed data together with the per-column means and sds.
    A column with zero variance is an error.
    """
    means = data.values.mean(axis=0)
    sds = data.values.std(axis=0, ddof=1) if data.n > 1 else np.zeros(data.b)
    bad = np.flatnonzero(~(sds > 0))
    if bad.size:
        raise ValueError(f"column {int(bad[0]) + 1} has zero variance and cannot be standardized")
    return DataSet((data.values - means) / sds), means, sds


def distance_matrix(data: DataSet, metric: str = "euclidean") -> np.ndarray:
    """Dense pairwise distances; symmetric with an exactly zero diagonal."""
    x = data.values
    diff = x[:, None, :] - x[None, :, :]
    if metric == "euclidean":
        d = np.sqrt(np.sum(diff * diff, axis=-1))
    elif metric == "manhattan":
        d = np.sum(np.abs(diff), axis=-1)
    else:
        raise ValueError(f"metric must be 'euclidean' or 'manhattan', got {metric!r}")
    d = np.triu(d, 1)
    return d + d.T


def hyperparams_to_dict(params) -> dict:
    if isinstance(params, MvHyperParams):
        return {
            "family": "multivariate",
            "alpha": params.alpha,
            "tau": params.tau,
            "mu": [float(v) for v in params.mu],
            "nu": params.nu,
            "omega": params.omega,
            "xi": None if params.xi is None else [[float(v) for v in row] for row in params.xi],
        }
    if isinstance(params, UvHyperParams):
        return {
            "family": "univariate",
            "alpha": params.alpha,
            "tau": params.tau,
            "mu": params.mu,
            "gamma": params.gamma,
            "delta": params.delta,
        }
    raise TypeError(f"unsupported hyperparameter type {type(params).__name__}")


def write_result(solution, params, metadata: dict, path) -> None:
    """Serialise a search result as a canonical JSON document.

    Floats are written with shortest round-trip precision (at most 17
    significant digits), so parsing the document back reproduces the exact
    values. Keys are sorted and the layout is fixed, which makes repeated
    runs with the same seed byte-comparable apart from the wall-clock field.
    """
    doc = {
        "hyperparams": hyperparams_to_dict(params),
        "seed": metadata.get("seed"),
        "restarts": metadata.get("restarts"),
        "sweeps": solution.sweeps_used,
        "K": solution.K,
        "icl_ex": solution.icl,
        "labels": [int(v) for v in solution.allocation.labels],
        "restart_best": list(solution.restart_bests) if solution.restart_bests else [solution.icl],
        "runtime_ms": metadata.get("runtime_ms"),
        "run": {
            k: metadata[k]
            for k in ("algorithm", "metric", "standardize", "beta1", "beta2", "k_max")
            if k in metadata
        },
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_result(path) -> dict:
    """Parse a result document written by write_result."""
    return json.loads(Path(path).read_text(encoding="utf-8"))
