"""End-to-end command-line tests on a small synthetic corpus."""

import datetime as dt
from pathlib import Path

import numpy as np
import pytest

from vgforecast.cli import main

SMALL_CFG = """
[data]
path = {data}

[window]
lookback = 20

[embed]
dim = 8
k_max = 3
walks_per_node = 3
walk_length = 6
window = 2
epochs = 2

[model]
enc_hidden = 8
dec_hidden = 8
batch_size = 16

[train]
epochs = 3
lr = 0.002
patience = 3

[split]
train_val_end = 2015-02-28
test_periods = 2015-03-02:2015-03-31

[synth]
tickers = 5
days = 60
signal_strength = 0.95
momentum_days = 3
out = {data}

[run]
seed = 11
out_dir = {out}
cache_dir = {cache}
"""


def write_cfg(root: Path, **kw) -> Path:
    cfg = root / "cfg.ini"
    cfg.write_text(SMALL_CFG.format(
        data=kw.get("data", root / "synth.csv"),
        out=kw.get("out", root / "runs"),
        cache=kw.get("cache", root / "cache"),
    ))
    return cfg


@pytest.fixture(scope="module")
def pipeline_run(tmp_path_factory):
    """One full pipeline execution shared by the assertion tests below."""
    root = tmp_path_factory.mktemp("cli")
    cfg = write_cfg(root)
    assert main(["synth", "--config", str(cfg)]) == 0
    assert main(["pipeline", "--config", str(cfg)]) == 0
    run_dirs = sorted((root / "runs").iterdir())
    assert len(run_dirs) == 1
    return root, cfg, run_dirs[0]


class TestSynth:
    def test_deterministic_output(self, tmp_path):
        cfg = write_cfg(tmp_path)
        assert main(["synth", "--config", str(cfg)]) == 0
        first = (tmp_path / "synth.csv").read_bytes()
        assert main(["synth", "--config", str(cfg)]) == 0
        assert (tmp_path / "synth.csv").read_bytes() == first

    def test_seed_override_changes_data(self, tmp_path):
        cfg = write_cfg(tmp_path)
        assert main(["synth", "--config", str(cfg)]) == 0
        first = (tmp_path / "synth.csv").read_bytes()
        assert main(["synth", "--config", str(cfg), "--seed", "99"]) == 0
        assert (tmp_path / "synth.csv").read_bytes() != first


class TestGraphStage:
    def test_counts_and_reuse(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path)
        main(["synth", "--config", str(cfg)])
        # 5 tickers x 25 days at lookback 20 -> 5 windows each -> 150 graphs
        small = tmp_path / "small.csv"
        from vgforecast.data import load_ohlcv, write_ohlcv, MarketTable

        tables = load_ohlcv(tmp_path / "synth.csv")
        cut = [MarketTable(t.ticker, t.dates[:25], t.values[:, :25]) for t in tables]
        write_ohlcv(cut, small)
        cfg2 = tmp_path / "cfg2.ini"
        cfg2.write_text(cfg.read_text().replace(
            str(tmp_path / "synth.csv"), str(small)))
        assert main(["graph", "--config", str(cfg2)]) == 0
        out = capsys.readouterr().out
        assert "built 150, reused 0" in out
        assert main(["graph", "--config", str(cfg2)]) == 0
        out = capsys.readouterr().out
        assert "built 0, reused 150" in out

    def test_corrupt_entry_rebuilt_with_warning(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path)
        main(["synth", "--config", str(cfg)])
        assert main(["graph", "--config", str(cfg)]) == 0
        capsys.readouterr()
        data_file = tmp_path / "cache" / "graphs" / "graphs.dat"
        blob = bytearray(data_file.read_bytes())
        blob[4] = ord("?")
        data_file.write_bytes(bytes(blob))
        assert main(["graph", "--config", str(cfg)]) == 0
        captured = capsys.readouterr()
        assert "warning" in captured.err
        assert "rebuilt" in captured.err

    def test_missing_data_fails_validation(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, data=tmp_path / "absent.csv")
        assert main(["graph", "--config", str(cfg)]) == 1
        assert "absent.csv" in capsys.readouterr().err


class TestValidation:
    def test_unknown_key_exits_one_before_work(self, tmp_path, capsys):
        cfg = tmp_path / "bad.ini"
        cfg.write_text("[train]\nvelocity = 3\n")
        assert main(["pipeline", "--config", str(cfg)]) == 1
        assert "train.velocity" in capsys.readouterr().err
        assert not (tmp_path / "runs").exists()

    def test_schema_command(self, capsys):
        assert main(["schema"]) == 0
        assert "walks_per_node" in capsys.readouterr().out


class TestPipelineArtifacts:
    def test_run_directory_contents(self, pipeline_run):
        _, _, run_dir = pipeline_run
        assert (run_dir / "checkpoint.bin").exists()
        assert (run_dir / "history.txt").exists()
        assert (run_dir / "metrics_summary.csv").exists()
        assert (run_dir / "manifest.txt").exists()
        assert (run_dir / "ci_report.csv").exists()
        assert not (run_dir / "FAILED").exists()
        curves = list((run_dir / "curves").glob("*.csv"))
        assert len(curves) == 2  # strategy + baseline for the one test period
        figures = list((run_dir / "figures").glob("*.png"))
        assert len(figures) == 2
        for fig in figures:
            assert fig.stat().st_size > 1000

    def test_metrics_summary_shape(self, pipeline_run):
        _, _, run_dir = pipeline_run
        lines = (run_dir / "metrics_summary.csv").read_text().splitlines()
        assert lines[0].startswith("period,n,accuracy")
        periods = [ln.split(",")[0] for ln in lines[1:]]
        assert periods[0] == "validation"
        assert periods[1] == "test"
        assert periods[2] == "2015-03-02..2015-03-31"

    def test_nv_curve_format(self, pipeline_run):
        _, _, run_dir = pipeline_run
        curve = sorted((run_dir / "curves").glob("*long_short*"))[0]
        lines = curve.read_text().splitlines()
        assert lines[0] == "date,net_value"
        day, value = lines[1].split(",")
        assert float(value) == 1.0
        dt.date.fromisoformat(day)

    def test_manifest_lists_artifact_hashes(self, pipeline_run):
        _, _, run_dir = pipeline_run
        text = (run_dir / "manifest.txt").read_text()
        assert "checkpoint.bin" in text
        assert "[seeds]" in text
        assert "[versions]" in text

    def test_eval_matches_final_history_row(self, pipeline_run, capsys):
        root, cfg, run_dir = pipeline_run
        from vgforecast.report import read_history

        final = read_history(run_dir / "history.txt")[-1]
        assert main(["eval", "--config", str(cfg),
                     "--checkpoint", str(run_dir / "checkpoint.bin"),
                     "--split", "val"]) == 0
        out = capsys.readouterr().out
        acc = float(out.split("accuracy=")[1].split()[0])
        assert acc == pytest.approx(final[3], abs=1e-9)

    def test_backtest_command_reproduces_curves(self, pipeline_run, tmp_path, capsys):
        root, cfg, run_dir = pipeline_run
        out_dir = tmp_path / "bt"
        assert main(["backtest", "--config", str(cfg),
                     "--checkpoint", str(run_dir / "checkpoint.bin"),
                     "--out", str(out_dir)]) == 0
        fresh = (out_dir / "curves" / "nv_2015-03-02..2015-03-31_long_short.csv")
        original = (run_dir / "curves" / "nv_2015-03-02..2015-03-31_long_short.csv")
        assert fresh.read_bytes() == original.read_bytes()

    def test_failed_pipeline_leaves_marker(self, tmp_path, capsys):
        cfg_path = write_cfg(tmp_path)
        main(["synth", "--config", str(cfg_path)])
        broken = tmp_path / "broken.ini"
        # boundary before any window's label date -> empty training split
        broken.write_text(cfg_path.read_text().replace(
            "train_val_end = 2015-02-28", "train_val_end = 2015-01-05"))
        assert main(["pipeline", "--config", str(broken)]) == 2
        run_dirs = sorted((tmp_path / "runs").iterdir())
        assert len(run_dirs) == 1
        marker = run_dirs[0] / "FAILED"
        assert marker.exists()
        assert "empty training or validation" in marker.read_text()
