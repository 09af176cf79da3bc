"""Fingerprint data model, validation and (de)serialization.

A device fingerprint is a stack of P frequency grids, one per LUT path.
Grids are indexed ``[row, col]``; the column axis is the one used when
counting comparisons.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import DataError, SchemaError, ValidationError

FRESH = "fresh"
AGED = "aged"
GROUND_TRUTH_LABELS = (FRESH, AGED)


def _frozen(arr) -> np.ndarray:
    a = np.array(arr, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RoGrid:
    """R x C ring-oscillator frequencies in MHz."""

    freqs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "freqs", _frozen(self.freqs))

    @property
    def rows(self) -> int:
        return self.freqs.shape[0] if self.freqs.ndim == 2 else 0

    @property
    def cols(self) -> int:
        return self.freqs.shape[1] if self.freqs.ndim == 2 else 0

    @property
    def shape(self) -> tuple:
        return self.freqs.shape

    def __eq__(self, other):
        if not isinstance(other, RoGrid):
            return NotImplemented
        return self.freqs.shape == other.freqs.shape and bool(
            np.array_equal(self.freqs, other.freqs)
        )


@dataclass(frozen=True)
class PathFingerprint:
    path_index: int
    grid: RoGrid


@dataclass(frozen=True)
class DeviceFingerprint:
    device_id: str
    paths: tuple
    ground_truth: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "paths", tuple(self.paths))

    @property
    def n_paths(self) -> int:
        return len(self.paths)

    @property
    def dims(self) -> tuple:
        """(R, C) of the first path grid, or (0, 0) for a pathless device."""
        if not self.paths:
            return (0, 0)
        g = self.paths[0].grid
        return (g.rows, g.cols)

    def grid(self, path_index: int) -> np.ndarray:
        for p in self.paths:
            if p.path_index == path_index:
                return p.grid.freqs
        raise KeyError(f"device {self.device_id!r} has no path {path_index}")

    def stack(self) -> np.ndarray:
        """Frequencies as a (P, R, C) array ordered by path_index."""
        ordered = sorted(self.paths, key=lambda p: p.path_index)
        return np.stack([p.grid.freqs for p in ordered])

    @classmethod
    def from_stack(cls, device_id, stack, ground_truth=None):
        stack = np.asarray(stack, dtype=np.float64)
        paths = [PathFingerprint(i + 1, RoGrid(stack[i])) for i in range(stack.shape[0])]
        return cls(device_id, tuple(paths), ground_truth)


@dataclass(frozen=True)
class Dataset:
    devices: tuple
    rows: int
    cols: int
    n_paths: int
    provenance: str = ""

    def __post_init__(self):
        object.__setattr__(self, "devices", tuple(self.devices))

    @property
    def meta(self) -> dict:
        return {
            "rows": self.rows,
            "cols": self.cols,
            "paths": self.n_paths,
            "provenance": self.provenance,
        }

    def device(self, device_id: str) -> DeviceFingerprint:
        for d in self.devices:
            if d.device_id == device_id:
                return d
        raise KeyError(device_id)

    @property
    def device_ids(self) -> list:
        return [d.device_id for d in self.devices]


@dataclass(frozen=True)
class Violation:
    message: str
    device_id: Optional[str] = None
    path_index: Optional[int] = None
    location: Optional[tuple] = None

    def __str__(self):
        where = []
        if self.device_id is not None:
            where.append(f"device={self.device_id}")
        if self.path_index is not None:
            where.append(f"path={self.path_index}")
        if self.location is not None:
            where.append(f"cell={self.location}")
        prefix = f"[{', '.join(where)}] " if where else ""
        return prefix + self.message


def _validate_grid(grid: RoGrid, device_id, path_index, out: list) -> None:
    f = grid.freqs
    if f.ndim != 2:
        out.append(Violation(f"grid must be 2-D, got shape {f.shape}", device_id, path_index))
        return
    if f.shape[0] < 2 or f.shape[1] < 2:
        out.append(
            Violation(f"grid must be at least 2x2, got {f.shape[0]}x{f.shape[1]}", device_id, path_index)
        )
    bad = ~np.isfinite(f)
    for r, c in zip(*np.nonzero(bad)):
        out.append(Violation("frequency is not finite", device_id, path_index, (int(r), int(c))))
    nonpos = np.isfinite(f) & (f <= 0)
    for r, c in zip(*np.nonzero(nonpos)):
        out.append(Violation("frequency must be > 0", device_id, path_index, (int(r), int(c))))


def validate_device(device: DeviceFingerprint, dims=None, n_paths=None) -> list:
    out: list = []
    did = device.device_id
    P = len(device.paths)
    if P == 0:
        out.append(Violation("device has no paths", did))
    if P % 2 and n_paths is None:
        out.append(Violation(f"P must be even, got {P}", did))
    if n_paths is not None and P != n_paths:
        out.append(Violation(f"expected {n_paths} paths, got {P}", did))
    indices = [p.path_index for p in device.paths]
    if sorted(indices) != list(range(1, P + 1)):
        out.append(Violation(f"path_index values must be exactly 1..{P}, got {sorted(indices)}", did))
    if device.ground_truth is not None and device.ground_truth not in GROUND_TRUTH_LABELS:
        out.append(Violation(f"unknown ground_truth {device.ground_truth!r}", did))
    ref = dims
    for p in device.paths:
        _validate_grid(p.grid, did, p.path_index, out)
        shape = p.grid.freqs.shape
        if ref is None:
            ref = shape
        elif shape != tuple(ref):
            out.append(
                Violation(f"grid shape {shape} differs from expected {tuple(ref)}", did, p.path_index)
            )
    return out


def validate(dataset: Dataset) -> list:
    """Return every invariant violation in ``dataset`` (empty when valid)."""
    out: list = []
    dims = (dataset.rows, dataset.cols)
    if dataset.rows < 2 or dataset.cols < 2:
        out.append(Violation(f"meta dims must be >= 2x2, got {dims}"))
    if dataset.n_paths % 2 or dataset.n_paths <= 0:
        out.append(Violation(f"P must be even and positive, got {dataset.n_paths}"))
    seen = set()
    for dev in dataset.devices:
        if dev.device_id in seen:
            out.append(Violation("duplicate device_id", dev.device_id))
        seen.add(dev.device_id)
        out.extend(validate_device(dev, dims, dataset.n_paths))
    return out


def check(dataset: Dataset) -> Dataset:
    violations = validate(dataset)
    if violations:
        raise ValidationError(violations)
    return dataset


# --- serialization -------------------------------------------------------


def dataset_to_dict(dataset: Dataset) -> dict:
    devices = []
    for dev in dataset.devices:
        devices.append(
            {
                "id": dev.device_id,
                "ground_truth": dev.ground_truth,
                "paths": [
                    {"path_index": p.path_index, "freqs_mhz": p.grid.freqs.tolist()}
                    for p in sorted(dev.paths, key=lambda p: p.path_index)
                ],
            }
        )
    return {"meta": dataset.meta, "devices": devices}


def _req(obj, key, kind, where):
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object")
    if key not in obj:
        raise SchemaError(f"{where}.{key}: missing required field")
    val = obj[key]
    if kind is int and (isinstance(val, bool) or not isinstance(val, int)):
        raise SchemaError(f"{where}.{key}: expected integer, got {type(val).__name__}")
    if kind is str and not isinstance(val, str):
        raise SchemaError(f"{where}.{key}: expected string, got {type(val).__name__}")
    if kind is list and not isinstance(val, list):
        raise SchemaError(f"{where}.{key}: expected array, got {type(val).__name__}")
    return val


def _parse_freqs(raw, where) -> np.ndarray:
    if not isinstance(raw, list) or not all(isinstance(row, list) for row in raw):
        raise SchemaError(f"{where}: expected a list of rows")
    if raw and len({len(row) for row in raw}) != 1:
        raise SchemaError(f"{where}: rows have unequal lengths")
    for i, row in enumerate(raw):
        for j, v in enumerate(row):
            # NaN/Infinity survive json.loads as floats; leave them to validate()
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise SchemaError(f"{where}[{i}][{j}]: expected number, got {type(v).__name__}")
    arr = np.array(raw, dtype=np.float64)
    if arr.ndim != 2:
        arr = arr.reshape(len(raw), 0)
    return arr


def dataset_from_dict(doc) -> Dataset:
    meta = _req(doc, "meta", dict, "$")
    rows = _req(meta, "rows", int, "$.meta")
    cols = _req(meta, "cols", int, "$.meta")
    n_paths = _req(meta, "paths", int, "$.meta")
    provenance = meta.get("provenance", "")
    if not isinstance(provenance, str):
        raise SchemaError("$.meta.provenance: expected string")
    raw_devices = _req(doc, "devices", list, "$")
    devices = []
    for i, rd in enumerate(raw_devices):
        where = f"$.devices[{i}]"
        did = _req(rd, "id", str, where)
        gt = rd.get("ground_truth")
        if gt is not None and gt not in GROUND_TRUTH_LABELS:
            raise SchemaError(f"{where}.ground_truth: expected 'fresh', 'aged' or null, got {gt!r}")
        paths = []
        for j, rp in enumerate(_req(rd, "paths", list, where)):
            pw = f"{where}.paths[{j}]"
            idx = _req(rp, "path_index", int, pw)
            freqs = _parse_freqs(_req(rp, "freqs_mhz", list, pw), pw + ".freqs_mhz")
            paths.append(PathFingerprint(idx, RoGrid(freqs)))
        devices.append(DeviceFingerprint(did, tuple(paths), gt))
    return Dataset(tuple(devices), rows, cols, n_paths, provenance)


def save_dataset(dataset: Dataset, path) -> None:
    """Write ``dataset`` as JSON. Floats use repr, so round trips are exact."""
    text = json.dumps(dataset_to_dict(dataset), allow_nan=True, separators=(",", ":"))
    try:
        Path(path).write_text(text + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write dataset to {path}: {exc.strerror}") from exc


def load_dataset(path) -> Dataset:
    """Read and validate a dataset file.

    Raises
    ------
    SchemaError
        Malformed JSON or a field of the wrong type/shape.
    ValidationError
        Well-formed file whose contents break a dataset invariant.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    return check(dataset_from_dict(doc))


def export_csv(dataset: Dataset, path) -> None:
    """One row per RO: device_id,path_index,row,col,freq_mhz."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["device_id", "path_index", "row", "col", "freq_mhz"])
        for dev in dataset.devices:
            for p in sorted(dev.paths, key=lambda p: p.path_index):
                f = p.grid.freqs
                for r in range(f.shape[0]):
                    for c in range(f.shape[1]):
                        w.writerow([dev.device_id, p.path_index, r, c, repr(float(f[r, c]))])


def max_abs_difference(a: Dataset, b: Dataset) -> float:
    """Largest per-cell frequency difference between two same-shaped datasets."""
    worst = 0.0
    for da, db in zip(a.devices, b.devices):
        diff = np.abs(da.stack() - db.stack())
        if diff.size:
            worst = max(worst, float(np.nanmax(diff)))
    return worst


def subset(dataset: Dataset, device_ids: Iterable[str]) -> Dataset:
    keep = set(device_ids)
    return Dataset(
        tuple(d for d in dataset.devices if d.device_id in keep),
        dataset.rows,
        dataset.cols,
        dataset.n_paths,
        dataset.provenance,
    )
