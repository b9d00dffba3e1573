"""CSV and JSON writers for profiles, matrices and statistics.

Numbers are written as ``%.17e`` so every double round-trips. Matrix files
carry their coordinates: the header row lists the column coordinates and
the first column the row coordinates; multi-component fields label each
coordinate ``x:c``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from pathlib import Path

import numpy as np

__all__ = [
    "FLOAT_FMT",
    "fmt",
    "write_table",
    "write_matrix",
    "read_matrix",
    "write_profile",
    "write_phi",
    "write_ensemble",
    "write_micro",
    "write_comparison",
    "write_json",
    "to_jsonable",
    "sha256",
]

FLOAT_FMT = "%.17e"


def fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, str):
        return v
    return FLOAT_FMT % float(v)


def write_table(path, header, rows) -> Path:
    """Comma-separated table; floats in scientific notation."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def _labels(x, n):
    if n == 1:
        return [fmt(v) for v in x]
    return [f"{fmt(v)}:{c + 1}" for v in x for c in range(n)]


def write_matrix(path, A, x, n: int = 1, corner: str = "x\\x'") -> Path:
    A = np.asarray(A, dtype=float)
    labels = _labels(x, n)
    rows = ([lab, *row] for lab, row in zip(labels, A))
    return write_table(path, [corner, *labels], rows)


def read_matrix(path):
    """Inverse of :func:`write_matrix` for ``n = 1``; returns ``(x, A)``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    x = np.array([float(r[0]) for r in rows[1:]])
    A = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    return x, A


def write_profile(path, profile) -> Path:
    n = profile.n
    header = ["x", *(f"q_{c + 1}" for c in range(n))]
    rows = ([x, *q] for x, q in zip(profile.grid.cell_points, profile.values))
    return write_table(path, header, rows)


def write_phi(path, phi_profile) -> Path:
    """One column per component pair ``Phi_jk`` plus the symmetric part."""
    phi = phi_profile.phi
    n = phi.shape[1]
    pairs = [(j, k) for j in range(n) for k in range(n)]
    header = ["x", *(f"Phi_{j + 1}{k + 1}" for j, k in pairs)]
    rows = ([x, *(p[j, k] for j, k in pairs)] for x, p in zip(phi_profile.x, phi))
    return write_table(path, header, rows)


def write_ensemble(stem, stats, x, n: int = 1) -> list:
    """EnsembleStats as covariance / SE matrices, a mean table and a JSON summary."""
    stem = Path(stem)
    files = [
        write_matrix(f"{stem}_covariance.csv", stats.covariance, x, n),
        write_matrix(f"{stem}_covariance_se.csv", stats.covariance_se, x, n),
    ]
    labels = _labels(x, n)
    rows = zip(labels, stats.mean, stats.mean_se, np.diag(stats.covariance),
               np.diag(stats.covariance_se), stats.standardized_fourth_moment)
    files.append(write_table(f"{stem}_diagonal.csv",
                             ["x", "mean", "mean_se", "variance", "variance_se", "fourth_moment"],
                             rows))
    for lag in stats.lag_covariances:
        tag = f"{stem}_lag_{lag.steps}"
        files.append(write_matrix(f"{tag}.csv", lag.matrix, x, n))
        files.append(write_matrix(f"{tag}_se.csv", lag.se, x, n))
    summary = {
        "n_samples": stats.n_samples,
        "n_batches": stats.n_batches,
        "low_confidence": stats.low_confidence,
        "lags": [{"lag": l.lag, "steps": l.steps} for l in stats.lag_covariances],
    }
    files.append(write_json(f"{stem}_summary.json", summary))
    return files


def write_micro(stem, micro) -> list:
    stem = Path(stem)
    rows = zip(micro.x, micro.profile, micro.profile_se, micro.variance, micro.variance_se)
    files = [
        write_table(f"{stem}_profile.csv",
                    ["x", "density", "density_se", "variance", "variance_se"], rows),
        write_matrix(f"{stem}_scaled_covariance.csv", micro.scaled_covariance, micro.x),
        write_matrix(f"{stem}_scaled_covariance_se.csv", micro.scaled_covariance_se, micro.x),
        write_table(f"{stem}_bond_current.csv", ["bond", "current", "current_se"],
                    zip(range(micro.bond_current.size), micro.bond_current,
                        micro.bond_current_se)),
    ]
    return files


def write_comparison(stem, comparison) -> list:
    stem = Path(stem)
    rows = ([r["k"], r["l"], r["micro"], r["micro_se"], r["macro"]] for r in comparison.table())
    return [
        write_table(f"{stem}_modes.csv", ["k", "l", "micro", "micro_se", "macro"], rows),
        write_table(f"{stem}_diagonal.csv", ["x", "macro_q(1-q)", "z"],
                    zip(comparison.x, comparison.macro_diag, comparison.diag_z)),
        write_json(f"{stem}.json", comparison.as_dict()),
    ]


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, obj) -> Path:
    """Write JSON atomically (temporary file, then rename)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(to_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
    return path


def sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()
