"""Command-line entry point.

Subcommands: simulate, estimate, pair, score, detect, roc, audit, run.
Exit codes: 0 success, 2 config error, 3 data error, 4 numeric error.
Failures print one line ``error: stage=<stage> cause=<Type>: <message>``.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__, kernels
from .config import PAIRING_MODES, PipelineConfig, load_config
from .detector import (
    ComparisonCounter,
    audit_comparisons,
    detect,
    roc_curve,
    score_device_baseline,
    score_device_symmetric,
)
from .errors import ConfigError, DataError, SymdetectError
from .fingerprint import AGED, export_csv, load_dataset, save_dataset
from .pairing import consensus_pairing, load_pairing, pair_by_rmse, save_pairing, structural_pairing
from .pipeline import (
    RmseTable,
    StageError,
    derive_pairing,
    estimate_dataset,
    read_scores_csv,
    report_document,
    run_experiment,
    write_json,
    write_scores_csv,
)
from .simulator import simulate

log = logging.getLogger("symdetect")

SIM_OVERRIDES = (
    ("rows", int), ("cols", int), ("paths", int), ("n_fresh", int), ("n_aged", int),
    ("aging_drop_pct", float),
)


def _global_flags(parser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=d, help="pipeline config (.toml or .json)")
    parser.add_argument("--seed", type=int, default=d, help="master seed (overrides the config)")
    parser.add_argument("--jobs", type=int, default=argparse.SUPPRESS if suppress else 1,
                        help="worker threads for per-device stages")
    parser.add_argument("--out-dir", default=d, help="directory for outputs")


def _sim_flags(parser) -> None:
    for name, kind in SIM_OVERRIDES:
        parser.add_argument("--" + name.replace("_", "-"), dest=name, type=kind, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="symdetect", description="Recycled-FPGA detection by path symmetry.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    _global_flags(ap, suppress=False)
    sub = ap.add_subparsers(dest="command", required=True)

    def cmd(name, help):
        p = sub.add_parser(name, help=help)
        _global_flags(p, suppress=True)
        return p

    p = cmd("simulate", "generate a synthetic dataset")
    _sim_flags(p)
    p.add_argument("--out", help="dataset JSON (default: <out-dir>/dataset.json)")
    p.add_argument("--csv", help="also export one row per RO to this CSV")

    p = cmd("estimate", "VP reconstruction RMSE of every path")
    p.add_argument("--dataset", required=True)
    p.add_argument("--fraction", type=float, default=None)
    p.add_argument("--out", help="rmse CSV (default: <out-dir>/rmse.csv)")

    p = cmd("pair", "derive comparison pairs")
    p.add_argument("--rmse", help="rmse CSV from 'estimate'")
    p.add_argument("--mode", choices=("rmse", "fresh", "structural"), default="rmse",
                   help="rmse: consensus over every device in the CSV; fresh: only fresh-labelled "
                        "devices of --dataset; structural: (p, p+P/2)")
    p.add_argument("--dataset", help="dataset supplying labels for --mode fresh")
    p.add_argument("--paths", type=int, help="P for --mode structural without --rmse")
    p.add_argument("--out", help="pairing JSON (default: <out-dir>/pairing.json)")

    p = cmd("score", "per-CP maximum anomaly scores")
    p.add_argument("--dataset", required=True)
    p.add_argument("--pairing", help="pairing JSON (required unless --baseline)")
    p.add_argument("--baseline", action="store_true", help="adjacent-column scheme instead")
    p.add_argument("--columns", help="also write every column score to this CSV")
    p.add_argument("--out", help="scores CSV (default: <out-dir>/scores.csv)")

    p = cmd("detect", "score, cluster and report")
    p.add_argument("--dataset", required=True)
    p.add_argument("--pairing", required=True)
    p.add_argument("--out", help="report JSON (default: <out-dir>/report.json)")
    p.add_argument("--emit-scores", help="also write CP scores to this CSV")

    p = cmd("roc", "ROC curve of per-device maximum scores")
    p.add_argument("--scores", required=True, help="scores CSV")
    p.add_argument("--dataset", required=True, help="dataset supplying ground truth")
    p.add_argument("--out", help="ROC CSV (fpr,tpr,threshold)")

    p = cmd("audit", "comparison counts of both schemes")
    p.add_argument("--rows", type=int, default=None)
    p.add_argument("--cols", type=int, default=None)
    p.add_argument("--paths", type=int, default=None)
    p.add_argument("--dataset", help="take dims from a dataset")
    p.add_argument("--measure", action="store_true",
                   help="run both schemes on one device and report the live counters")

    p = cmd("run", "end-to-end experiment")
    _sim_flags(p)
    p.add_argument("--dataset", help="use this dataset instead of simulating")
    p.add_argument("--pairing-mode", choices=PAIRING_MODES, default=None)
    p.add_argument("--baseline", action="store_true", help="also count baseline comparisons live")
    return ap


def _config(args) -> PipelineConfig:
    cfg = load_config(getattr(args, "config", None))
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    over = {n: getattr(args, n) for n, _ in SIM_OVERRIDES if getattr(args, n, None) is not None}
    if over:
        cfg = cfg.with_simulator(**over)
    return cfg.validate()


def _out(args, explicit, default_name) -> Path:
    if explicit:
        path = Path(explicit)
    else:
        path = Path(getattr(args, "out_dir", None) or ".") / default_name
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _jobs(args) -> int:
    jobs = getattr(args, "jobs", 1) or 1
    if jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    return jobs


def cmd_simulate(args):
    cfg = _config(args)
    out = _out(args, args.out, "dataset.json")
    ds = simulate(cfg.simulator)
    save_dataset(ds, out)
    if args.csv:
        export_csv(ds, args.csv)
    print(f"wrote {out}: {len(ds.devices)} devices, {ds.rows}x{ds.cols}, P={ds.n_paths}")


def cmd_estimate(args):
    cfg = _config(args)
    if args.fraction is not None:
        cfg = replace(cfg, vp=replace(cfg.vp, fraction=args.fraction)).validate()
    ds = load_dataset(args.dataset)
    table = estimate_dataset(ds, cfg, _jobs(args))
    out = _out(args, args.out, "rmse.csv")
    table.write_csv(out)
    print(f"wrote {out}: {len(table.rmse)} devices, fraction {cfg.vp.fraction}")


def cmd_pair(args):
    out = _out(args, args.out, "pairing.json")
    if args.mode == "structural":
        table = RmseTable.read_csv(args.rmse) if args.rmse else None
        P = args.paths or (len(next(iter(table.rmse.values()))) if table and table.rmse else None)
        if P is None:
            raise ConfigError("--mode structural needs --paths or --rmse")
        pairing = structural_pairing(P)
    else:
        if not args.rmse:
            raise ConfigError(f"--mode {args.mode} needs --rmse")
        table = RmseTable.read_csv(args.rmse)
        if not table.rmse:
            raise DataError(f"{args.rmse}: no devices")
        if args.mode == "fresh":
            if not args.dataset:
                raise ConfigError("--mode fresh needs --dataset for the labels")
            pairing = derive_pairing(load_dataset(args.dataset), table, "fresh")
        else:
            profiles = list(table.rmse.values())
            pairing = consensus_pairing([pair_by_rmse(r) for r in profiles], profiles)
    save_pairing(pairing, out)
    print(f"wrote {out}: {len(pairing.pairs)} pairs ({pairing.source})")


def cmd_score(args):
    cfg = _config(args)
    ds = load_dataset(args.dataset)
    counter = ComparisonCounter()
    if args.baseline:
        vectors = [score_device_baseline(d, cfg.ulsif, counter) for d in ds.devices]
        unit = "path"
    else:
        if not args.pairing:
            raise ConfigError("score needs --pairing unless --baseline is given")
        pairing = load_pairing(args.pairing)
        vectors = [score_device_symmetric(d, pairing, cfg.ulsif, counter) for d in ds.devices]
        unit = "cp"
    out = _out(args, args.out, "scores.csv")
    write_scores_csv(vectors, out)
    if args.columns:
        with open(args.columns, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["device_id", f"{unit}_index", "column", "score"])
            for v in vectors:
                for k, row in enumerate(v.per_column, start=1):
                    for c, s in enumerate(row, start=1):
                        w.writerow([v.device_id, k, c, repr(float(s))])
    print(f"wrote {out}: {counter.count} comparisons over {len(ds.devices)} devices")


def cmd_detect(args):
    cfg = _config(args)
    ds = load_dataset(args.dataset)
    pairing = load_pairing(args.pairing)
    counter = ComparisonCounter()
    vectors = [score_device_symmetric(d, pairing, cfg.ulsif, counter, keep_columns=False) for d in ds.devices]
    audit = audit_comparisons(ds.rows, ds.cols, ds.n_paths)
    truth = {d.device_id: d.ground_truth for d in ds.devices}
    report = detect(vectors, truth, cfg.seed, counter.count // max(len(ds.devices), 1), audit["baseline"],
                    {"comparisons_ratio": audit["ratio"], "comparisons_proposed_total": counter.count})
    out = _out(args, args.out, "report.json")
    write_json(report_document(report, ds, pairing, vectors, cfg), out)
    if args.emit_scores:
        write_scores_csv(vectors, args.emit_scores)
    _print_summary(report)
    print(f"wrote {out}")


def cmd_roc(args):
    ds = load_dataset(args.dataset)
    truth = {d.device_id: d.ground_truth for d in ds.devices}
    vectors = read_scores_csv(args.scores)
    missing = [v.device_id for v in vectors if truth.get(v.device_id) is None]
    if missing:
        raise DataError(f"no ground truth for device(s) {missing}")
    roc = roc_curve([v.max_score for v in vectors], [truth[v.device_id] == AGED for v in vectors])
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["fpr", "tpr", "threshold"])
            for f, t, th in zip(roc.fpr, roc.tpr, roc.thresholds):
                w.writerow([repr(f), repr(t), repr(float(th))])
    print(f"auc {roc.auc:.6f} over {len(vectors)} devices")


def cmd_audit(args):
    dims = {"rows": args.rows, "cols": args.cols, "paths": args.paths}
    ds = None
    if args.dataset:
        ds = load_dataset(args.dataset)
        dims = {k: v if v is not None else getattr(ds, "n_paths" if k == "paths" else k)
                for k, v in dims.items()}
    else:
        defaults = PipelineConfig().simulator
        dims = {k: v if v is not None else getattr(defaults, k) for k, v in dims.items()}
    a = audit_comparisons(dims["rows"], dims["cols"], dims["paths"])
    print(f"dims R={dims['rows']} C={dims['cols']} P={dims['paths']}")
    print(f"proposed {a['proposed']}  (C*P/2)")
    print(f"baseline {a['baseline']}  ((C-1)*P)")
    print(f"ratio    {a['ratio']:.4f}  ({100 * (1 - a['ratio']):.1f}% fewer comparisons)")
    if args.measure:
        cfg = _config(args)
        if ds is None:
            ds = simulate(cfg.with_simulator(**dims, n_fresh=1, n_aged=0).validate().simulator)
        dev = ds.devices[0]
        pc, bc = ComparisonCounter(), ComparisonCounter()
        score_device_symmetric(dev, structural_pairing(dev.n_paths), cfg.ulsif, pc, keep_columns=False)
        score_device_baseline(dev, cfg.ulsif, bc, keep_columns=False)
        ok = pc.count == a["proposed"] and bc.count == a["baseline"]
        print(f"measured proposed {pc.count}, baseline {bc.count} on {dev.device_id}: "
              f"{'match' if ok else 'MISMATCH'}")
        if not ok:
            raise SymdetectError("instrumented counters disagree with the formulas")


def cmd_run(args):
    cfg = _config(args)
    if args.pairing_mode:
        cfg = replace(cfg, pairing_mode=args.pairing_mode)
    if args.baseline:
        cfg = replace(cfg, run_baseline=True)
    out = Path(getattr(args, "out_dir", None) or "symdetect-out")
    t0 = time.perf_counter()
    report = run_experiment(cfg, out, args.dataset, _jobs(args))
    _print_summary(report)
    print(f"artifacts in {out} ({time.perf_counter() - t0:.1f}s, backend {kernels.BACKEND})")


def _print_summary(report) -> None:
    n_rec = sum(1 for v in report.labels.values() if v == "recycled")
    print(f"devices {len(report.labels)}, flagged recycled {n_rec}")
    if report.accuracy is not None:
        rec = "n/a" if report.recall is None else f"{report.recall:.4f}"
        print(f"accuracy {report.accuracy:.4f}, aged recall {rec}")
    if report.auc is not None:
        print(f"auc {report.auc:.4f}")
    print(f"comparisons per device: proposed {report.comparisons_proposed}, "
          f"baseline {report.comparisons_baseline}")


COMMANDS = {
    "simulate": cmd_simulate, "estimate": cmd_estimate, "pair": cmd_pair, "score": cmd_score,
    "detect": cmd_detect, "roc": cmd_roc, "audit": cmd_audit, "run": cmd_run,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except SymdetectError as exc:
        stage = "config" if type(exc) is ConfigError else args.command
        print(f"error: stage={stage} cause={type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: stage={args.command} cause={type(exc).__name__}: {exc}", file=sys.stderr)
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
