"""End-to-end experiment: simulate, estimate, pair, score, detect, report.

Every artifact is a pure function of the configuration. JSON outputs use
sorted keys and floats rounded to 12 significant digits, so reruns are
byte-identical.
"""
from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .detector import (
    ComparisonCounter,
    CpScoreVector,
    DetectionReport,
    audit_comparisons,
    detect,
    score_device_baseline,
    score_device_symmetric,
)
from .errors import DataError, SymdetectError
from .fingerprint import FRESH, Dataset, load_dataset, save_dataset
from .pairing import SymmetryPairing, consensus_pairing, pair_by_rmse, save_pairing, structural_pairing
from .simulator import simulate
from .vp import SampleMask, make_mask, vp_reconstruct

log = logging.getLogger(__name__)

ARTIFACTS = ("dataset.json", "rmse.csv", "pairing.json", "scores.csv", "report.json")


class StageError(SymdetectError):
    """A pipeline stage failed; ``cause`` keeps the original exception."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
        super().__init__(f"stage={stage} cause={type(cause).__name__}: {cause}")


def fmt_float(x):
    if x is None:
        return None
    x = float(x)
    if not np.isfinite(x):
        return None
    return float(f"{x:.12g}")


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return fmt_float(obj)
    return obj


def write_json(obj, path) -> None:
    text = json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def device_mask(rows: int, cols: int, fraction: float, seed: int, device_id: str) -> SampleMask:
    """One mask per device, keyed by id so device order does not matter."""
    ss = np.random.SeedSequence([int(seed), 3, *device_id.encode("utf-8")])
    return make_mask(rows, cols, fraction, ss)


@dataclass
class RmseTable:
    """Per device: RMSE and atom count of every path, in path order."""

    rmse: dict = field(default_factory=dict)
    atoms: dict = field(default_factory=dict)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["device_id", "path_index", "rmse_mhz", "n_atoms"])
            for dev in self.rmse:
                for p, (r, k) in enumerate(zip(self.rmse[dev], self.atoms[dev]), start=1):
                    w.writerow([dev, p, repr(fmt_float(r)), k])

    @classmethod
    def read_csv(cls, path) -> "RmseTable":
        out = cls()
        rows = {}
        try:
            with open(path, newline="", encoding="utf-8") as fh:
                reader = csv.DictReader(fh)
                need = {"device_id", "path_index", "rmse_mhz"}
                if reader.fieldnames is None or not need <= set(reader.fieldnames):
                    raise DataError(f"{path}: expected columns {sorted(need)}")
                for line, rec in enumerate(reader, start=2):
                    try:
                        key = (rec["device_id"], int(rec["path_index"]))
                        rows[key] = (float(rec["rmse_mhz"]), int(rec.get("n_atoms") or 0))
                    except (TypeError, ValueError) as exc:
                        raise DataError(f"{path}:{line}: {exc}") from exc
        except OSError as exc:
            raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc
        for dev in dict.fromkeys(d for d, _ in rows):
            idx = sorted(p for d, p in rows if d == dev)
            if idx != list(range(1, len(idx) + 1)):
                raise DataError(f"{path}: device {dev} path indices are not 1..{len(idx)}")
            out.rmse[dev] = [rows[(dev, p)][0] for p in idx]
            out.atoms[dev] = [rows[(dev, p)][1] for p in idx]
        return out


def _map(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def estimate_dataset(dataset: Dataset, config: PipelineConfig, jobs: int = 1) -> RmseTable:
    vp = config.vp

    def one(dev):
        mask = device_mask(dataset.rows, dataset.cols, vp.fraction, config.seed, dev.device_id)
        ordered = sorted(dev.paths, key=lambda p: p.path_index)
        est = [vp_reconstruct(p.grid, mask, vp.stop_tol, vp.max_atoms) for p in ordered]
        return [e.rmse_mhz for e in est], [e.n_atoms for e in est]

    table = RmseTable()
    for dev, (r, k) in zip(dataset.devices, _map(one, dataset.devices, jobs)):
        table.rmse[dev.device_id] = r
        table.atoms[dev.device_id] = k
    return table


def derive_pairing(dataset: Dataset, table: RmseTable, mode: str) -> SymmetryPairing:
    """``fresh``: consensus over fresh-labelled devices; ``population``:
    consensus over every device; ``structural``: ``(p, p + P/2)``."""
    if mode == "structural":
        profiles = list(table.rmse.values())
        pairing = structural_pairing(dataset.n_paths)
        if profiles:
            pairing = SymmetryPairing(
                pairing.pairs, np.mean([pairing.with_margins(r).margins for r in profiles], axis=0),
                pairing.source,
            )
        return pairing
    if mode == "fresh":
        ids = [d.device_id for d in dataset.devices if d.ground_truth == FRESH]
        if not ids:
            raise DataError("pairing mode 'fresh' needs fresh-labelled devices; use 'population' or 'structural'")
    elif mode == "population":
        ids = dataset.device_ids
    else:
        raise DataError(f"unknown pairing mode {mode!r}")
    profiles = [table.rmse[i] for i in ids]
    return consensus_pairing([pair_by_rmse(r) for r in profiles], profiles)


def score_dataset(dataset, pairing, config: PipelineConfig, counter=None, jobs: int = 1) -> list:
    return _map(
        lambda d: score_device_symmetric(d, pairing, config.ulsif, counter, keep_columns=False),
        dataset.devices,
        jobs,
    )


def write_scores_csv(vectors, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["device_id", "cp_index", "score"])
        for v in vectors:
            for k, s in enumerate(v.scores, start=1):
                w.writerow([v.device_id, k, repr(fmt_float(s))])


def read_scores_csv(path) -> list:
    by_dev = {}
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"device_id", "cp_index", "score"} <= set(reader.fieldnames):
                raise DataError(f"{path}: expected columns device_id,cp_index,score")
            for line, rec in enumerate(reader, start=2):
                try:
                    by_dev.setdefault(rec["device_id"], {})[int(rec["cp_index"])] = float(rec["score"])
                except (TypeError, ValueError) as exc:
                    raise DataError(f"{path}:{line}: {exc}") from exc
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc
    out = []
    for dev, cps in by_dev.items():
        idx = sorted(cps)
        if idx != list(range(1, len(idx) + 1)):
            raise DataError(f"{path}: device {dev} cp indices are not 1..{len(idx)}")
        out.append(CpScoreVector(dev, np.array([cps[k] for k in idx])))
    return out


def report_document(report: DetectionReport, dataset: Dataset, pairing, vectors, config) -> dict:
    doc = report.to_dict()
    doc.update(
        {
            "n_devices": len(dataset.devices),
            "n_cps": len(pairing.pairs),
            "dims": {"rows": dataset.rows, "cols": dataset.cols, "paths": dataset.n_paths},
            "pairing": pairing.to_dict(),
            "cp_scores": {v.device_id: list(v.scores) for v in vectors},
            "ground_truth": {d.device_id: d.ground_truth for d in dataset.devices},
            "config": config.to_dict(),
        }
    )
    return doc


class Manifest:
    def __init__(self, out_dir: Path):
        self.path = out_dir / "manifest.json"
        self.entries = {name: "pending" for name in ARTIFACTS}
        self.failed_stage = None
        self.cause = None

    def done(self, name):
        self.entries[name] = "complete"

    def fail(self, stage, exc):
        self.failed_stage = stage
        self.cause = f"{type(exc).__name__}: {exc}"
        for name, state in self.entries.items():
            if state == "pending":
                # a file left behind by the failing stage is incomplete
                self.entries[name] = "partial" if (self.path.parent / name).exists() else "missing"
        self.write()

    def write(self):
        write_json(
            {
                "status": "failed" if self.failed_stage else "complete",
                "failed_stage": self.failed_stage,
                "cause": self.cause,
                "artifacts": self.entries,
            },
            self.path,
        )


def run_experiment(config: PipelineConfig, out_dir, dataset_path=None, jobs: int = 1) -> DetectionReport:
    """Run every stage and write the artifacts under ``out_dir``.

    Raises :class:`StageError` naming the failed stage; the manifest
    records which artifacts were completed before the failure.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out)
    stage = "config"
    for name in ARTIFACTS:
        # stale files from an earlier run must not pass for fresh output
        (out / name).unlink(missing_ok=True)
    try:
        config.validate()
        stage = "simulate" if dataset_path is None else "load"
        t0 = time.perf_counter()
        dataset = simulate(config.simulator) if dataset_path is None else load_dataset(dataset_path)
        current = "dataset.json"
        save_dataset(dataset, out / current)
        manifest.done(current)
        log.info("%s: %d devices in %.1fs", stage, len(dataset.devices), time.perf_counter() - t0)

        stage, current = "estimate", "rmse.csv"
        t0 = time.perf_counter()
        table = estimate_dataset(dataset, config, jobs)
        table.write_csv(out / current)
        manifest.done(current)
        log.info("estimate: %.1fs", time.perf_counter() - t0)

        stage, current = "pair", "pairing.json"
        pairing = derive_pairing(dataset, table, config.pairing_mode)
        save_pairing(pairing, out / current)
        manifest.done(current)

        stage, current = "score", "scores.csv"
        t0 = time.perf_counter()
        counter = ComparisonCounter()
        vectors = score_dataset(dataset, pairing, config, counter, jobs)
        write_scores_csv(vectors, out / current)
        manifest.done(current)
        log.info("score: %d comparisons in %.1fs", counter.count, time.perf_counter() - t0)

        stage, current = "detect", "report.json"
        audit = audit_comparisons(dataset.rows, dataset.cols, dataset.n_paths)
        per_device = counter.count // max(len(dataset.devices), 1)
        baseline = audit["baseline"]
        extra = {"comparisons_ratio": audit["ratio"], "comparisons_proposed_total": counter.count}
        if config.run_baseline and dataset.devices:
            bcount = ComparisonCounter()
            score_device_baseline(dataset.devices[0], config.ulsif, bcount, keep_columns=False)
            baseline = bcount.count
        truth = {d.device_id: d.ground_truth for d in dataset.devices}
        report = detect(vectors, truth, config.seed, per_device, baseline, extra)
        write_json(report_document(report, dataset, pairing, vectors, config), out / current)
        manifest.done(current)
        manifest.write()
        return report
    except SymdetectError as exc:
        manifest.fail(stage, exc)
        raise StageError(stage, exc) from exc
    except OSError as exc:
        manifest.fail(stage, exc)
        raise StageError(stage, DataError(f"I/O failure: {exc}")) from exc
