"""CSV and JSON writers for profiles, scans, runs and manifests.

CSV files carry a one-line header, use "," as separator and print floats
with 17 significant digits, so rerunning a deterministic command reproduces
them byte for byte. Wall-clock data only ever goes into manifest.json.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np

from .models import (
    SCHEMA_VERSION,
    BranchScan,
    EquivariantPair,
    Profile,
    Run,
    RunManifest,
)

logger = logging.getLogger("expanderlab")

PathLike = Union[str, Path]
CSV_FORMAT = "%.17g"
MANIFEST_NAME = "manifest.json"
SNAPSHOT_INDEX = "snapshots.json"

SnapshotTable = Tuple[float, Dict[str, np.ndarray]]


def ensure_dir(path: PathLike) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_csv(path: PathLike, columns: Dict[str, Sequence[float]]) -> Path:
    """Write equal-length columns as CSV with a header line.

    Raises:
        ValueError: Columns differ in length or none are given.
    """
    if not columns:
        raise ValueError("no columns to write")
    arrays = [np.asarray(values, dtype=float).ravel() for values in columns.values()]
    lengths = {len(a) for a in arrays}
    if len(lengths) != 1:
        raise ValueError(f"column lengths differ: {sorted(lengths)}")
    path = Path(path)
    ensure_dir(path.parent)
    np.savetxt(
        path,
        np.column_stack(arrays),
        fmt=CSV_FORMAT,
        delimiter=",",
        header=",".join(columns),
        comments="",
    )
    logger.debug(f"wrote {path} ({lengths.pop()} rows)")
    return path


def read_csv(path: PathLike) -> Dict[str, np.ndarray]:
    """Inverse of write_csv."""
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {name: data[:, i] for i, name in enumerate(header)}


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    if hasattr(value, "to_dict"):
        return value.to_dict()
    if hasattr(value, "value"):
        return value.value
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def write_json(path: PathLike, payload: Any) -> Path:
    path = Path(path)
    ensure_dir(path.parent)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=_jsonable)
        f.write("\n")
    return path


def read_json(path: PathLike) -> Any:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def write_manifest(out_dir: PathLike, manifest: RunManifest) -> Path:
    return write_json(Path(out_dir) / MANIFEST_NAME, manifest.to_dict())


def profile_columns(profile: Profile) -> Dict[str, np.ndarray]:
    return {"rho": profile.nodes, "psi": profile.psi, "dpsi": profile.dpsi}


def scan_columns(scan: BranchScan) -> Dict[str, np.ndarray]:
    return {"alpha": scan.alphas, "limit": scan.limits, "crossings": scan.crossings}


def run_tables(run: Run) -> List[SnapshotTable]:
    """One `r,h` table per snapshot, paired with its time."""
    r = run.grid.nodes
    return [(snap.time, {"r": r, "h": snap.values}) for snap in run.snapshots]


def diagnostics_columns(run: Run) -> Dict[str, np.ndarray]:
    keys: List[str] = list(run.diagnostics[0])
    return {
        k: np.array([diag.get(k, np.nan) for diag in run.diagnostics]) for k in keys
    }


def gl_tables(snapshots: Sequence[EquivariantPair]) -> List[SnapshotTable]:
    """Snapshot tables of the heat flow with the extra components v and w."""
    return [
        (s.time, {"r": s.grid.nodes, "h": s.angle, "v": s.v, "w": s.w})
        for s in snapshots
    ]


def write_snapshots(
    directory: PathLike, tables: Sequence[SnapshotTable], **metadata: Any
) -> List[Path]:
    """Write snapshot_0000.csv, snapshot_0001.csv, ... and snapshots.json.

    The index lists every file with its time, under the current schema,
    together with any metadata given (such as epsilon for GL runs).
    """
    directory = ensure_dir(directory)
    paths = [
        write_csv(directory / f"snapshot_{i:04d}.csv", columns)
        for i, (_, columns) in enumerate(tables)
    ]
    index = {
        "schema": SCHEMA_VERSION,
        "times": [float(t) for t, _ in tables],
        "files": [p.name for p in paths],
        **metadata,
    }
    paths.append(write_json(directory / SNAPSHOT_INDEX, index))
    return paths
