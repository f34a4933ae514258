"""``shadowloss`` command line: train, eval, compare, gradcheck, bench-mem.

Summaries go to stdout, diagnostics to stderr, machine-readable artifacts
to files under ``--out``.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from . import __version__
from .config import TrainConfig, dump_config, load_config, load_datasets
from .embednet import embed, load_checkpoint, save_checkpoint
from .errors import ShadowLossError
from .evaluation import (
    MetricsRecord,
    export_embeddings_csv,
    pca_project_2d,
    write_metrics_csv,
    write_metrics_jsonl,
)
from .gradcheck import run_gradcheck
from .memtrace import bench_report
from .mining import EmbeddingBatch
from .trainer import compare, evaluate_state, train

logger = logging.getLogger("shadowloss")

# flag name -> config key
CONFIG_FLAGS = {
    "seed": "seed",
    "loss": "loss",
    "epochs": "epochs",
    "out": "out",
    "dataset": "dataset",
    "train_images": "train_images",
    "train_labels": "train_labels",
    "test_images": "test_images",
    "test_labels": "test_labels",
    "csv": "csv_path",
    "label_column": "label_column",
    "margin": "margin",
    "lr": "lr",
}


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_json_safe(v) for v in obj]
    return obj


def write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(_json_safe(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--loss", choices=["shadow", "triplet"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--dataset", choices=["blobs", "idx", "csv"])
    p.add_argument("--train-images")
    p.add_argument("--train-labels")
    p.add_argument("--test-images")
    p.add_argument("--test-labels")
    p.add_argument("--csv", help="CSV feature table (one integer label column)")
    p.add_argument("--label-column")
    p.add_argument("--margin", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key (repeatable)")


def _config_from_args(args) -> TrainConfig:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ShadowLossError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k] = v
    for flag, key in CONFIG_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    return load_config(args.config, overrides).validate()


def _format_record(rec: MetricsRecord) -> str:
    return (f"epoch={rec.epoch} loss={rec.mean_loss:.6f} accuracy={rec.accuracy:.4f} "
            f"macro_f1={rec.macro_f1:.4f} inter={rec.inter_class_distance:.6f} "
            f"intra={rec.intra_class_distance:.6f} lr={rec.lr:g}")


def _export_embeddings(state, dataset, out: Path) -> None:
    emb = EmbeddingBatch(embed(state, dataset.features), dataset.labels)
    export_embeddings_csv(emb, out / "embeddings.csv")
    if emb.size >= 3 and emb.dim >= 2:
        proj, _ = pca_project_2d(emb)
        export_embeddings_csv(EmbeddingBatch(proj, emb.labels), out / "embeddings_2d.csv", ["x", "y"])


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    train_set, test_set = load_datasets(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    state, history = train(cfg, train_set, test_set)
    (out / "config.txt").write_text(dump_config(cfg), encoding="utf-8")
    write_metrics_csv(history, out / "metrics.csv")
    write_metrics_jsonl(history, out / "metrics.jsonl")
    save_checkpoint(state, out / "checkpoint.npz")
    _export_embeddings(state, test_set, out)
    if history:
        print(_format_record(history[-1]))
    else:
        print("no epochs run; initial state saved")
    return 0


def cmd_eval(args) -> int:
    cfg = _config_from_args(args)
    state = load_checkpoint(args.checkpoint)
    train_set, test_set = load_datasets(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rec = evaluate_state(state, train_set, test_set, epoch=state.scheduler.current_epoch - 1, k=cfg.knn_k)
    write_metrics_jsonl([rec], out / "eval_metrics.jsonl")
    _export_embeddings(state, test_set, out)
    print(_format_record(rec))
    return 0


def cmd_compare(args) -> int:
    cfg = _config_from_args(args)
    train_set, test_set = load_datasets(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    report = compare(cfg, train_set, test_set)
    write_json(report, out / "compare.json")
    print(f"{'loss':<8} {'final acc':>9} {'macro-F1':>9} {'epochs>=' + format(cfg.threshold, 'g'):>12} {'inter/intra':>12}")
    for kind, r in report["losses"].items():
        ett = r["epochs_to_threshold"]
        acc = r["final_accuracy"]
        f1 = r["final_macro_f1"]
        print(f"{kind:<8} {acc if acc is None else format(acc, '.4f'):>9} "
              f"{f1 if f1 is None else format(f1, '.4f'):>9} {'never' if ett is None else ett:>12} "
              f"{r['final_separation_ratio']:>12.4f}")
    print(f"delta accuracy (shadow - triplet): {report['deltas']['accuracy']:+.4f}")
    print(f"delta macro-F1 (shadow - triplet): {report['deltas']['macro_f1']:+.4f}")
    return 0


def _int_list(text: str) -> list[int]:
    try:
        values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("list must be non-empty")
    return values


def cmd_gradcheck(args) -> int:
    report = run_gradcheck(tuple(args.dims), args.trials, args.seed)
    for kind, r in report["kernels"].items():
        print(f"{kind:<8} kernel  max rel err {r['max_relative_error']:.3e}  samples {r['samples']}  "
              f"kink-excluded {r['kink_excluded']}  {'PASS' if r['passed'] else 'FAIL'}")
    for kind, r in report["network"].items():
        print(f"{kind:<8} network max rel err {r['max_relative_error']:.3e}  params {r['parameters_checked']}  "
              f"{'PASS' if r['passed'] else 'FAIL'}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_json(report, out / "gradcheck.json")
    return 0 if report["passed"] else 1


def cmd_bench_mem(args) -> int:
    report = bench_report(args.sizes, args.dims, P=args.params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(report, out / "membench.json")
    print(f"{'kind':<8} {'S':>5} {'D':>5} {'theory':>10} {'measured':>10}")
    for row in report["rows"]:
        print(f"{row['kind']:<8} {row['S']:>5} {row['D']:>5} {row['theoretical']['embeddings_scalars']:>10} "
              f"{row['measured']['scalars_retained']:>10}")
    return 0 if all(r["within_budget"] for r in report["rows"]) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shadowloss", description="Shadow loss vs triplet loss toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one loss and write metrics, checkpoint and embeddings")
    _add_config_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the configured dataset")
    _add_config_args(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="train both losses under identical settings")
    _add_config_args(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gradcheck", help="analytic vs finite-difference gradients")
    p.add_argument("--dims", type=_int_list, default=[2, 8, 64])
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="directory for gradcheck.json")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("bench-mem", help="theoretical and measured loss-stage memory")
    p.add_argument("--sizes", type=_int_list, default=[32], help="batch sizes S")
    p.add_argument("--dims", type=_int_list, default=[8, 64, 512], help="embedding dims D")
    p.add_argument("--params", type=int, default=1, help="model parameter count P (shared gradient term)")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_bench_mem)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if getattr(args, "trials", 1) < 1:
        print("error: --trials must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ShadowLossError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
