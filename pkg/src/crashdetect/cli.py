"""Command line entry point.

    crashdetect generate [--config C] [--seed S] OUT_CSV
    crashdetect train    [--config C] [--seed S] DATA_CSV MODEL_OUT [--test-index P] [--log P]
    crashdetect evaluate [--config C] MODEL DATA_CSV TEST_INDEX REPORT_DIR
    crashdetect evaluate --predictions PRED_CSV [--threshold T] REPORT_DIR
    crashdetect detect   [--config C] MODEL WINDOWS_CSV

Exit status is 0 on success and 1 on any error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import checkpoint
from .config import ConfigError, load_run_config
from .dataio import (
    atomic_write_text,
    dataset_to_csv_text,
    feature_means,
    generate_synthetic,
    load_csv,
)
from .evaluation import evaluate, metrics_csv, roc_csv
from .pipeline import evaluate_partition, fit_pipeline
from .training import predict_rows

log = logging.getLogger("crashdetect")


class CliError(Exception):
    pass


def _config(args):
    cfg = load_run_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def default_test_index_path(model_path) -> Path:
    p = Path(model_path)
    return p.with_name(p.stem + ".test_index.txt")


def default_log_path(model_path) -> Path:
    p = Path(model_path)
    return p.with_name(p.stem + ".training_log.csv")


def write_index(indices, path) -> None:
    atomic_write_text(path, "".join(f"{int(i)}\n" for i in indices))


def read_index(path) -> np.ndarray:
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            out.append(int(line))
        except ValueError:
            raise CliError(f"{path}, line {lineno}: not an integer row index: {line!r}") from None
    return np.array(out, dtype=np.int64)


def cmd_generate(args) -> None:
    cfg = _config(args)
    ds = generate_synthetic(cfg.generator)
    atomic_write_text(args.output, dataset_to_csv_text(ds))
    n_pos, n_neg = ds.class_counts()
    print(f"wrote {len(ds)} windows to {args.output}: {n_pos} accident, {n_neg} non-accident")
    for name, mean in feature_means(ds).items():
        print(f"  mean {name:<11} {mean:8.2f}")


def cmd_train(args) -> None:
    cfg = _config(args)
    try:
        ds = load_csv(args.data)
    except ValueError as exc:
        raise CliError(f"load stage failed: {exc}") from None
    result = fit_pipeline(ds, cfg)
    model = result.model
    checkpoint.save_checkpoint(model, args.model_out, {"data_rows": len(ds)})
    index_path = args.test_index or default_test_index_path(args.model_out)
    write_index(result.test_indices, index_path)
    log_path = args.log or default_log_path(args.model_out)
    atomic_write_text(
        log_path, "epoch,loss\n" + "".join(f"{i},{loss!r}\n" for i, loss in enumerate(model.training_log, 1))
    )
    losses = model.training_log
    print(f"trained {model.spec.cell_kind.value} {list(model.spec.layer_widths)} for {len(losses)} epochs; "
          f"loss {losses[0]:.6f} -> {losses[-1]:.6f}; threshold {model.threshold}")
    print(f"checkpoint: {args.model_out}\ntest index: {index_path}\ntraining log: {log_path}")


def _write_report(report, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "metrics.csv", metrics_csv(report))
    atomic_write_text(out / "roc.csv", roc_csv(report.roc))
    cm = report.confusion
    print(f"TP {cm.tp}  FP {cm.fp}  FN {cm.fn}  TN {cm.tn}  (threshold {report.threshold})")
    print(f"accuracy {report.accuracy:.1f}%")
    print(f"detection rate {report.detection_rate:.1f}%")
    print(f"false alarm rate {report.false_alarm_rate:.1f}%")
    print(f"AUC {report.auc:.3f}")


def read_predictions(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a ``probability,label`` CSV."""
    scores, labels = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header != ["probability", "label"]:
            raise CliError(f"{path}: expected header probability,label, found {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                p, y = float(row[0]), int(row[1])
            except (ValueError, IndexError):
                raise CliError(f"{path}, row {lineno}: malformed prediction row {row}") from None
            if not 0 <= p <= 1 or y not in (0, 1):
                raise CliError(f"{path}, row {lineno}: probability must be in [0,1] and label 0/1")
            scores.append(p)
            labels.append(y)
    return np.array(scores), np.array(labels)


def cmd_evaluate(args) -> None:
    if args.predictions:
        if len(args.paths) != 1:
            raise CliError("with --predictions, give exactly one positional argument: REPORT_DIR")
        scores, labels = read_predictions(args.predictions)
        _write_report(evaluate(scores, labels, args.threshold), args.paths[0])
        return
    if len(args.paths) != 4:
        raise CliError("evaluate needs MODEL DATA_CSV TEST_INDEX REPORT_DIR")
    model_path, data_path, index_path, out_dir = args.paths
    model, meta = checkpoint.load_checkpoint(model_path)
    ds = load_csv(data_path)
    idx = read_index(index_path)
    if "data_rows" in meta and meta["data_rows"] != len(ds):
        raise CliError(f"{data_path} has {len(ds)} rows but the model was trained on a file with "
                       f"{meta['data_rows']} rows; test index does not match this data")
    if len(idx) == 0 or idx.min() < 0 or idx.max() >= len(ds) or len(np.unique(idx)) != len(idx):
        raise CliError(f"{index_path}: indices must be unique rows of {data_path} (0..{len(ds) - 1})")
    _write_report(evaluate_partition(model, ds, idx), out_dir)


def cmd_detect(args) -> None:
    model, _ = checkpoint.load_checkpoint(args.model)
    ds = load_csv(args.windows, require_label=False)
    probs = predict_rows(model, ds.features)
    out = sys.stdout
    out.write("row_index,probability,decision\n")
    for i, p in enumerate(probs):
        out.write(f"{i},{float(p)!r},{int(p >= model.threshold)}\n")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="crashdetect", description="Accident detection with LSTM/GRU networks")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="run configuration file (section.key = value)")
        p.add_argument("--seed", type=int, help="override every seed in the config")

    p = sub.add_parser("generate", help="write a synthetic window dataset")
    common(p)
    p.add_argument("output")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="split, scale, oversample and train; write a checkpoint")
    common(p)
    p.add_argument("data")
    p.add_argument("model_out")
    p.add_argument("--test-index", help="where to write test-partition row indices")
    p.add_argument("--log", help="where to write the per-epoch loss CSV")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score the held-out partition and write metric/ROC CSVs")
    common(p)
    p.add_argument("paths", nargs="+", metavar="PATH")
    p.add_argument("--predictions", help="score a probability,label CSV instead of a model")
    p.add_argument("--threshold", type=float, default=0.5, help="decision threshold for --predictions")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("detect", help="print probability and decision per window")
    common(p)
    p.add_argument("model")
    p.add_argument("windows")
    p.set_defaults(func=cmd_detect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except (CliError, ConfigError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
