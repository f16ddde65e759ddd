"""Command-line interface.

Subcommands: synth, graph, embed, train, eval, backtest, pipeline.
Exit codes: 0 success, 1 configuration/validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, describe_schema, load_config
from .data import DataError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vgforecast",
        description=("Visibility-graph structural features and attention-based "
                     "direction forecasting."),
        epilog="Run 'vgforecast schema' for the full config-key reference.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="path to the key=value config file")
        p.add_argument("--seed", type=int, default=None, help="override [run] seed")
        p.add_argument("--cache-dir", default=None, help="override [run] cache_dir")
        p.add_argument("--jobs", type=int, default=None, help="override [run] jobs")

    common(sub.add_parser("synth", help="generate the synthetic corpus from [synth]"))
    common(sub.add_parser("graph", help="build and cache window graphs and node weights"))
    common(sub.add_parser("embed", help="build and cache structural embeddings"))
    common(sub.add_parser("train", help="train the model into a fresh run directory"))

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    common(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--split", choices=("val", "test"), default="val")

    p_back = sub.add_parser("backtest", help="simulate trading from a checkpoint")
    common(p_back)
    p_back.add_argument("--checkpoint", required=True)
    p_back.add_argument("--out", default=None,
                        help="output directory (default: the checkpoint's directory)")

    common(sub.add_parser("pipeline", help="run every stage end to end"))
    sub.add_parser("schema", help="print the config key reference")
    return parser


def _load(args):
    cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["run__seed"] = args.seed
    if args.cache_dir is not None:
        overrides["run__cache_dir"] = args.cache_dir
    if args.jobs is not None:
        overrides["run__jobs"] = args.jobs
    return cfg.override(**overrides) if overrides else cfg


def _cmd_synth(args) -> int:
    from .pipeline import run_synth

    out = run_synth(_load(args))
    print(f"synthetic corpus written to {out}")
    return 0


def _cmd_graph(args) -> int:
    from .pipeline import stage_graph

    report = stage_graph(_load(args))
    if report.corrupt:
        print(f"warning: rebuilt {report.corrupt} corrupt cache entries",
              file=sys.stderr)
    print(f"graphs: built {report.built}, reused {report.reused} "
          f"(total {report.total})")
    return 0


def _cmd_embed(args) -> int:
    from .pipeline import stage_embed

    cfg = _load(args)
    report = stage_embed(cfg, jobs=cfg["run.jobs"])
    if report.corrupt:
        print(f"warning: rebuilt {report.corrupt} corrupt cache entries",
              file=sys.stderr)
    print(f"embeddings: built {report.built}, reused {report.reused} "
          f"(total {report.total})")
    return 0


def _cmd_train(args) -> int:
    from .pipeline import (
        all_windows, build_samples, load_tables, prepare_run_dir,
        save_checkpoint, write_manifest,
    )
    from .data import split_windows
    from .report import write_history
    from .training import train as train_fn

    cfg = _load(args)
    paths = prepare_run_dir(cfg)
    try:
        windows = all_windows(cfg, load_tables(cfg))
        samples = build_samples(cfg, windows, jobs=cfg["run.jobs"])
        by_key = {(s.ticker, s.end_date): s for s in samples}
        train_w, val_w, _ = split_windows(windows, cfg.split_spec())
        train_s = [by_key[(w.ticker, w.end_date)] for w in train_w]
        val_s = [by_key[(w.ticker, w.end_date)] for w in val_w]
        result = train_fn(train_s, val_s, cfg.model_dims(), cfg.train_config())
        save_checkpoint(paths.checkpoint, cfg, result.params)
        write_history(paths.history, result.history)
        write_manifest(paths, cfg)
    except Exception as exc:
        paths.failed_marker.write_text(f"{type(exc).__name__}: {exc}\n", encoding="utf-8")
        raise
    final = result.history[-1]
    print(f"run directory: {paths.root}")
    print(f"best epoch {result.best_epoch}: val_loss {final.val_loss:.6f}, "
          f"val_acc {final.val_acc:.4f}")
    return 0


def _cmd_eval(args) -> int:
    from .pipeline import all_windows, build_samples, load_params, load_tables
    from .data import split_windows
    from .training import evaluate

    cfg = _load(args)
    params = load_params(args.checkpoint, cfg)
    windows = all_windows(cfg, load_tables(cfg))
    samples = build_samples(cfg, windows, jobs=cfg["run.jobs"])
    by_key = {(s.ticker, s.end_date): s for s in samples}
    train_w, val_w, test_w = split_windows(windows, cfg.split_spec())
    chosen = val_w if args.split == "val" else test_w
    subset = [by_key[(w.ticker, w.end_date)] for w in chosen]
    if not subset:
        print(f"no samples in the {args.split} split", file=sys.stderr)
        return 2
    metrics, _ = evaluate(subset, params)
    print(f"split={args.split} n={metrics.n} accuracy={metrics.accuracy:.6f} "
          f"precision={metrics.precision:.6f} recall={metrics.recall:.6f} "
          f"f1={metrics.f1:.6f}")
    return 0


def _cmd_backtest(args) -> int:
    from .pipeline import (
        RunPaths, all_windows, build_samples, load_params, load_tables,
        stage_backtest,
    )
    from .data import split_windows
    from .report import write_metrics_summary

    cfg = _load(args)
    params = load_params(args.checkpoint, cfg)
    windows = all_windows(cfg, load_tables(cfg))
    samples = build_samples(cfg, windows, jobs=cfg["run.jobs"])
    by_key = {(s.ticker, s.end_date): s for s in samples}
    _, _, test_w = split_windows(windows, cfg.split_spec())
    test_s = [by_key[(w.ticker, w.end_date)] for w in test_w]
    if not test_s:
        print("no test samples to backtest", file=sys.stderr)
        return 2
    out_root = Path(args.out) if args.out else Path(args.checkpoint).parent
    paths = RunPaths(root=out_root)
    paths.curves.mkdir(parents=True, exist_ok=True)
    paths.figures.mkdir(parents=True, exist_ok=True)
    rows = stage_backtest(cfg, params, paths, test_s)
    write_metrics_summary(paths.metrics, rows)
    for row in rows:
        print(f"{row['period']}: strategy {row['strategy_return']:+.4%} "
              f"vs market {row['baseline_return']:+.4%} "
              f"(accuracy {row['accuracy']:.4f})")
    return 0


def _cmd_pipeline(args) -> int:
    from .pipeline import run_pipeline

    cfg = _load(args)
    paths = run_pipeline(cfg, jobs=cfg["run.jobs"])
    print(f"run directory: {paths.root}")
    print((paths.metrics).read_text(), end="")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "schema":
        print(describe_schema())
        return 0
    handlers = {
        "synth": _cmd_synth,
        "graph": _cmd_graph,
        "embed": _cmd_embed,
        "train": _cmd_train,
        "eval": _cmd_eval,
        "backtest": _cmd_backtest,
        "pipeline": _cmd_pipeline,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, DataError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
