"""End-to-end stage orchestration behind the command-line interface.

Stages communicate through the content-addressed caches and a per-run
output directory named by config hash and start time.  Every run writes
a manifest with the config echo, derived seeds, artifact hashes and
library versions; outputs themselves carry no timestamps so identical
configurations reproduce byte-identical files.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import struct
import sys
import time
from dataclasses import dataclass
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from . import __version__
from .backtest import ci_distribution_report, market_baseline, signals_from_predictions, simulate
from .cache import EmbeddingCache, GraphCache
from .config import ConfigError, PipelineConfig, stage_seed
from .data import (
    CHANNELS,
    DataError,
    MarketTable,
    PriceWindow,
    load_ohlcv,
    make_windows,
    split_windows,
    synth_corpus,
    write_ohlcv,
)
from .influence import ci as ci_op
from .influence import normalize_ci
from .model import ModelParams
from .report import (
    plot_ci_distributions,
    plot_nv_curves,
    write_ci_report_csv,
    write_history,
    write_metrics_summary,
    write_nv_csv,
)
from .struc2vec import EmbedConfig, embed_series, window_content_hash
from .training import TrainingSample, evaluate_metrics, predict_samples, train
from .visibility import vg_fast

CKPT_MAGIC = b"VGCKPT\x00\x01"


class PipelineError(RuntimeError):
    pass


@dataclass
class StageReport:
    built: int = 0
    reused: int = 0
    corrupt: int = 0

    @property
    def total(self) -> int:
        return self.built + self.reused


# ---------------------------------------------------------------------------
# Data and windows
# ---------------------------------------------------------------------------

def run_synth(cfg: PipelineConfig) -> Path:
    """Generate the synthetic corpus configured under [synth]."""
    tables = synth_corpus(
        n_tickers=cfg["synth.tickers"],
        n_days=cfg["synth.days"],
        seed=stage_seed(cfg["run.seed"], "synth"),
        signal_strength=cfg["synth.signal_strength"],
        momentum_days=cfg["synth.momentum_days"],
        daily_vol=cfg["synth.daily_vol"],
    )
    out = Path(cfg["synth.out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    write_ohlcv(tables, out)
    return out


def load_tables(cfg: PipelineConfig) -> list[MarketTable]:
    path = cfg["data.path"]
    if not path:
        raise ConfigError("data.path must be set")
    if not Path(path).exists():
        raise DataError(f"data file {path} does not exist")
    return load_ohlcv(path, max_gap_days=cfg["data.max_gap_days"])


def all_windows(cfg: PipelineConfig, tables: list[MarketTable]) -> list[PriceWindow]:
    out = []
    for table in tables:
        out.extend(make_windows(table, cfg["window.lookback"]))
    out.sort(key=lambda w: (w.ticker, w.end_date))
    return out


# ---------------------------------------------------------------------------
# Graph and embedding stages
# ---------------------------------------------------------------------------

def stage_graph(cfg: PipelineConfig, windows: list[PriceWindow] | None = None,
                cache_dir=None) -> StageReport:
    """Populate the graph/CI cache for every window channel."""
    if windows is None:
        windows = all_windows(cfg, load_tables(cfg))
    cache = GraphCache(Path(cache_dir or cfg["run.cache_dir"]) / "graphs")
    ecfg = cfg.embed_config()
    radius = cfg["graph.ci_radius"]
    report = StageReport()
    for w in windows:
        whash = window_content_hash(w.values, ecfg)
        for ch in range(len(CHANNELS)):
            if (whash, ch) in cache and cache.get(whash, ch) is not None:
                report.reused += 1
                continue
            g = vg_fast(w.values[ch])
            raw = ci_op(g, radius)
            cache.put(whash, ch, g, raw)
            report.built += 1
    report.corrupt = cache.corrupt_reads
    return report


def _embed_one(args) -> tuple[str, int, np.ndarray]:
    values, channel, cfg_kwargs = args
    ecfg = EmbedConfig(**cfg_kwargs)
    whash = window_content_hash(values, ecfg)
    matrix, _, _ = embed_series(values[channel], ecfg)
    return whash, channel, matrix


def stage_embed(cfg: PipelineConfig, windows: list[PriceWindow] | None = None,
                cache_dir=None, jobs: int = 1) -> StageReport:
    """Ensure every (window, channel) embedding is present in the cache."""
    if windows is None:
        windows = all_windows(cfg, load_tables(cfg))
    cache = EmbeddingCache(Path(cache_dir or cfg["run.cache_dir"]) / "embeddings")
    ecfg = cfg.embed_config()
    report = StageReport()
    todo = []
    cfg_kwargs = dict(
        dim=ecfg.dim, k_max=ecfg.k_max, walks_per_node=ecfg.walks_per_node,
        walk_length=ecfg.walk_length, window=ecfg.window, epochs=ecfg.epochs,
        lr=ecfg.lr, q_stay=ecfg.q_stay, ci_l=ecfg.ci_l,
        ci_normalize=ecfg.ci_normalize, seed=ecfg.seed,
    )
    for w in windows:
        whash = window_content_hash(w.values, ecfg)
        for ch in range(len(CHANNELS)):
            if (whash, ch) in cache and cache.get(whash, ch) is not None:
                report.reused += 1
            else:
                todo.append((w.values, ch, cfg_kwargs))
    report.corrupt = cache.corrupt_reads
    if not todo:
        return report
    if jobs > 1:
        with get_context("fork").Pool(processes=jobs) as pool:
            for whash, ch, matrix in pool.imap_unordered(_embed_one, todo, chunksize=16):
                cache.put(whash, ch, matrix)
                report.built += 1
    else:
        for task in todo:
            whash, ch, matrix = _embed_one(task)
            cache.put(whash, ch, matrix)
            report.built += 1
    return report


def build_samples(cfg: PipelineConfig, windows: list[PriceWindow],
                  cache_dir=None, jobs: int = 1) -> list[TrainingSample]:
    """Assemble model inputs, filling any embedding-cache misses on demand."""
    stage_embed(cfg, windows, cache_dir=cache_dir, jobs=jobs)
    cache = EmbeddingCache(Path(cache_dir or cfg["run.cache_dir"]) / "embeddings")
    ecfg = cfg.embed_config()
    radius = cfg["graph.ci_radius"]
    samples = []
    for w in windows:
        whash = window_content_hash(w.values, ecfg)
        T = w.values.shape[1]
        x = np.empty((6, T, ecfg.dim))
        ci_att = np.empty((6, T))
        ci_raw = np.empty((6, T))
        for ch in range(6):
            mat = cache.get(whash, ch)
            if mat is None:
                mat, att, raw = embed_series(w.values[ch], ecfg)
                cache.put(whash, ch, mat)
            else:
                g = vg_fast(w.values[ch])
                raw = ci_op(g, radius)
                att = normalize_ci(raw) if ecfg.ci_normalize else raw
            x[ch] = mat
            ci_att[ch] = att
            ci_raw[ch] = raw
        samples.append(TrainingSample(
            ticker=w.ticker, end_date=w.end_date, x=x, ci=ci_att,
            label=w.label, next_return=w.next_return, ci_raw=ci_raw,
        ))
    return samples


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, cfg: PipelineConfig, params: ModelParams) -> None:
    echo = cfg.canonical_text().encode()
    vec = params.flatten()
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", 1, len(echo)))
        fh.write(echo)
        fh.write(struct.pack("<Q", vec.size))
        fh.write(vec.astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[str, np.ndarray]:
    with open(path, "rb") as fh:
        magic = fh.read(len(CKPT_MAGIC))
        if magic != CKPT_MAGIC:
            raise PipelineError(f"{path}: not a model checkpoint")
        version, echo_len = struct.unpack("<II", fh.read(8))
        if version != 1:
            raise PipelineError(f"{path}: unsupported checkpoint version {version}")
        echo = fh.read(echo_len).decode()
        (n,) = struct.unpack("<Q", fh.read(8))
        raw = fh.read(n * 8)
        if len(raw) != n * 8:
            raise PipelineError(f"{path}: truncated checkpoint")
        return echo, np.frombuffer(raw, dtype="<f8").copy()


def load_params(path, cfg: PipelineConfig) -> ModelParams:
    _, vec = load_checkpoint(path)
    params = ModelParams.init(cfg.model_dims(), seed=0)
    params.load_flat(vec)
    return params


# ---------------------------------------------------------------------------
# Run directories
# ---------------------------------------------------------------------------

@dataclass
class RunPaths:
    root: Path

    @property
    def checkpoint(self) -> Path:
        return self.root / "checkpoint.bin"

    @property
    def history(self) -> Path:
        return self.root / "history.txt"

    @property
    def metrics(self) -> Path:
        return self.root / "metrics_summary.csv"

    @property
    def manifest(self) -> Path:
        return self.root / "manifest.txt"

    @property
    def curves(self) -> Path:
        return self.root / "curves"

    @property
    def figures(self) -> Path:
        return self.root / "figures"

    @property
    def failed_marker(self) -> Path:
        return self.root / "FAILED"


def prepare_run_dir(cfg: PipelineConfig) -> RunPaths:
    stamp = time.strftime("%Y%m%d-%H%M%S", time.gmtime())
    base = Path(cfg["run.out_dir"])
    root = base / f"run-{cfg.config_hash()}-{stamp}"
    suffix = 0
    while root.exists():
        suffix += 1
        root = base / f"run-{cfg.config_hash()}-{stamp}-{suffix}"
    (root / "curves").mkdir(parents=True)
    (root / "figures").mkdir()
    return RunPaths(root=root)


def write_manifest(paths: RunPaths, cfg: PipelineConfig) -> None:
    lines = [f"config_hash = {cfg.config_hash()}", "", "[config]"]
    lines.extend(cfg.canonical_text().splitlines())
    lines += ["", "[seeds]"]
    for stage in ("synth", "embed", "split", "train"):
        lines.append(f"{stage} = {stage_seed(cfg['run.seed'], stage)}")
    lines += ["", "[artifacts]"]
    for f in sorted(paths.root.rglob("*")):
        if f.is_file() and f.name not in ("manifest.txt", "FAILED"):
            digest = hashlib.sha256(f.read_bytes()).hexdigest()
            lines.append(f"{f.relative_to(paths.root)} = {digest}")
    lines += ["", "[versions]"]
    import numba

    lines.append(f"python = {sys.version.split()[0]}")
    lines.append(f"numpy = {np.__version__}")
    lines.append(f"numba = {numba.__version__}")
    lines.append(f"vgforecast = {__version__}")
    paths.manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Evaluation and backtest stages
# ---------------------------------------------------------------------------

def _metrics_row(period: str, samples, probs, strategy_return=None,
                 baseline_return=None) -> dict:
    labels = np.array([s.label for s in samples])
    m = evaluate_metrics(labels, probs)
    return {
        "period": period, "n": m.n, "accuracy": m.accuracy,
        "precision": m.precision, "recall": m.recall, "f1": m.f1,
        "strategy_return": strategy_return, "baseline_return": baseline_return,
    }


def stage_backtest(cfg: PipelineConfig, params: ModelParams, paths: RunPaths,
                   test_samples: list[TrainingSample]) -> list[dict]:
    """Simulate the strategy per test period; writes curves and figures."""
    if not test_samples:
        return []
    mode = cfg["backtest.mode"]
    probs = predict_samples(test_samples, params)
    rows = []
    for start, end in cfg["split.test_periods"]:
        idx = [i for i, s in enumerate(test_samples) if start <= s.end_date <= end]
        if not idx:
            continue
        period = f"{start.isoformat()}..{end.isoformat()}"
        members = [test_samples[i] for i in idx]
        member_probs = probs[idx]
        pred_rows = [(s.end_date, s.ticker, float(p), s.next_return)
                     for s, p in zip(members, member_probs)]
        signals = signals_from_predictions(pred_rows, mode)
        trading_dates = sorted({s.end_date for s in members})
        strategy = simulate(signals, trading_dates=trading_dates)
        universe: dict[dt.date, list[float]] = {}
        for s in members:
            universe.setdefault(s.end_date, []).append(s.next_return)
        baseline = market_baseline(universe)
        write_nv_csv(paths.curves / f"nv_{period}_{mode}.csv", strategy)
        write_nv_csv(paths.curves / f"nv_{period}_baseline.csv", baseline)
        plot_nv_curves(paths.figures / f"nv_{period}.png",
                       {mode: strategy, "market": baseline},
                       f"net value {period}")
        rows.append(_metrics_row(period, members, member_probs,
                                 strategy.cumulative_return,
                                 baseline.cumulative_return))
    return rows


def run_pipeline(cfg: PipelineConfig, jobs: int | None = None) -> RunPaths:
    """All stages in order; partial outputs stay behind a FAILED marker."""
    paths = prepare_run_dir(cfg)
    jobs = jobs or cfg["run.jobs"]
    try:
        tables = load_tables(cfg)
        windows = all_windows(cfg, tables)
        if not windows:
            raise PipelineError("no windows can be formed from the data")
        stage_graph(cfg, windows)
        samples = build_samples(cfg, windows, jobs=jobs)
        spec = cfg.split_spec()
        window_split = split_windows(windows, spec)
        by_key = {(s.ticker, s.end_date): s for s in samples}
        train_s, val_s, test_s = (
            [by_key[(w.ticker, w.end_date)] for w in part] for part in window_split
        )
        if not train_s or not val_s:
            raise PipelineError("split produced an empty training or validation set")
        result = train(train_s, val_s, cfg.model_dims(), cfg.train_config())
        save_checkpoint(paths.checkpoint, cfg, result.params)
        write_history(paths.history, result.history)
        rows = []
        val_probs = predict_samples(val_s, result.params)
        rows.append(_metrics_row("validation", val_s, val_probs))
        if test_s:
            test_probs = predict_samples(test_s, result.params)
            rows.append(_metrics_row("test", test_s, test_probs))
        rows.extend(stage_backtest(cfg, result.params, paths, test_s))
        write_metrics_summary(paths.metrics, rows)
        report = ci_distribution_report(
            np.stack([s.ci_raw for s in samples]),
            np.array([s.label for s in samples]),
            CHANNELS,
        )
        write_ci_report_csv(paths.root / "ci_report.csv", report)
        plot_ci_distributions(paths.figures / "ci_distributions.png", report)
        write_manifest(paths, cfg)
    except Exception as exc:
        paths.failed_marker.write_text(f"{type(exc).__name__}: {exc}\n", encoding="utf-8")
        raise
    return paths
