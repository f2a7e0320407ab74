"""Tabular output (CSV or JSON lines) and run manifests."""
from __future__ import annotations

import csv
import json
import platform
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .dynamics import Trajectory

FORMATS = ("csv", "jsonl")


class OutputError(OSError):
    pass


def fmt(x) -> str:
    """12 significant digits for floats, plain text for everything else."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".12g")
    return str(x)


def _jsonable(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(format(float(x), ".12g"))
    return x


def write_table(path: str | Path, header: Sequence[str], rows: Iterable[Sequence], format: str = "csv") -> Path:
    """Write ``rows`` under ``header``; ``format="jsonl"`` swaps the extension to ``.jsonl``."""
    if format not in FORMATS:
        raise ValueError(f"unknown output format {format!r}")
    path = Path(path)
    if format == "jsonl":
        path = path.with_suffix(".jsonl")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            if format == "csv":
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(header)
                for row in rows:
                    w.writerow([fmt(v) for v in row])
            else:
                for row in rows:
                    fh.write(json.dumps({k: _jsonable(v) for k, v in zip(header, row)}) + "\n")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return path


def trajectory_table(traj: Trajectory) -> tuple[list[str], list[list]]:
    n_sites = traj.site_populations.shape[1]
    header = (["t_us", "n_optical", "n_microwave", "atom_excitation", "P0", "Pp1", "Pm1"]
              + [f"site_{s}" for s in range(1, n_sites + 1)] + ["leaked_weight"])
    eig = traj.eigen_populations if traj.eigen_populations is not None else np.full((len(traj), 3), np.nan)
    rows = []
    for i, t in enumerate(traj.times):
        rows.append([t, traj.n_optical[i], traj.n_microwave[i], traj.atom_excitation[i],
                     eig[i, 0], eig[i, 1], eig[i, 2], *traj.site_populations[i], traj.leaked_weight[i]])
    return header, rows


def heatmap_table(result) -> tuple[list[str], list[list]]:
    Ns, Ts = result.axes["N"], result.axes["T_us"]
    rows = [[int(N), float(T), float(result.values[i, j])] for i, N in enumerate(Ns) for j, T in enumerate(Ts)]
    return ["N", "T_us", "fidelity"], rows


def disorder_table(result) -> tuple[list[str], list[list]]:
    rows = [[float(e1), float(e2), float(m), float(s), int(result.sample_count), int(result.master_seed)]
            for e1, e2, m, s in zip(result.axes["eta1"], result.axes["eta2"], result.values, result.stderr)]
    return ["eta1", "eta2", "mean_n_optical", "stderr", "samples", "seed"], rows


def write_manifest(path: str | Path, *, command: str, options: dict, config: dict, outputs: Sequence[Path],
                   seed: int | None, wall_time_s: float, summary: str) -> Path:
    manifest = {
        "command": command,
        "options": options,
        "config": config,
        "seed": seed,
        "outputs": [Path(p).name for p in outputs],
        "summary": summary,
        "code_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "wall_time_s": round(wall_time_s, 3),
    }
    path = Path(path)
    try:
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return path


def read_manifest(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())
