"""CSV and manifest files for experiment output.

All files are UTF-8, comma separated, LF line endings, one header row.
Floats are written with 17 significant digits so they round-trip exactly.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, List, Sequence

import numpy as np

from . import __version__
from .harness import ExperimentRecord
from .particles import ParticleEnsemble
from .quantum import bloch_vector

RECORD_HEADER = ["step", "alpha_label", "outcome", "score", "ess", "fidelity",
                 "infidelity", "millis"]
AGGREGATE_HEADER = ["n", "mean_infidelity", "stderr", "strategy"]
PURITY_HEADER = ["strategy", "purity", "n", "mean_infidelity", "stderr"]
SCORE_HEADER = ["step", "label", "score"]


def fmt_float(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".16e")


def _write(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(row)


def _read(path: Path, header: Sequence[str]) -> List[List[str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != list(header):
        raise ValueError(f"{path}: unexpected header {rows[0] if rows else None}")
    return rows[1:]


def write_records(path, records: Sequence[ExperimentRecord]) -> None:
    _write(Path(path), RECORD_HEADER, (
        [r.step, r.alpha_label, r.outcome, fmt_float(r.score), fmt_float(r.ess),
         fmt_float(r.fidelity), fmt_float(r.infidelity), fmt_float(r.millis)]
        for r in records))


def read_records(path) -> List[ExperimentRecord]:
    return [ExperimentRecord(int(r[0]), r[1], int(r[2]), *(float(x) for x in r[3:]))
            for r in _read(Path(path), RECORD_HEADER)]


def write_aggregate(path, table) -> None:
    _write(Path(path), AGGREGATE_HEADER,
           ([n, fmt_float(m), fmt_float(se), name] for n, m, se, name in table))


def read_aggregate(path) -> list:
    return [(int(r[0]), float(r[1]), float(r[2]), r[3])
            for r in _read(Path(path), AGGREGATE_HEADER)]


def write_purity_table(path, table) -> None:
    _write(Path(path), PURITY_HEADER,
           ([name, fmt_float(p), n, fmt_float(m), fmt_float(se)]
            for name, p, n, m, se in table))


def snapshot_header(dim: int) -> List[str]:
    if dim == 2:
        return ["x", "y", "z", "weight"]
    return [f"c{i}" for i in range(dim * dim)] + ["weight"]


def write_snapshot(path, ens: ParticleEnsemble) -> None:
    """Particle coordinates and weights: Bloch vectors for qubits, otherwise
    the real Hermitian coordinates of each density matrix."""
    coords = bloch_vector(ens.rhos) if ens.dim == 2 else ens.coords
    rows = np.column_stack([coords, ens.weights])
    _write(Path(path), snapshot_header(ens.dim), ([fmt_float(v) for v in row] for row in rows))


def read_snapshot(path, dim: int) -> np.ndarray:
    return np.array([[float(v) for v in r] for r in _read(Path(path), snapshot_header(dim))])


def write_scores(path, step: int, table) -> None:
    _write(Path(path), SCORE_HEADER, ([step, label, fmt_float(s)] for label, s in table))


def write_manifest(path, config, seeds: Sequence[int], files: Sequence[str]) -> None:
    doc = {
        "config_hash": config.hash(),
        "seeds": list(seeds),
        "artifact_version": __version__,
        "files": sorted(files),
        "config": config.resolved,
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
