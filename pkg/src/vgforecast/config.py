"""Pipeline configuration: a sectioned key=value file with strict validation.

Every key is declared in the schema below with its type, default and
bounds; unknown sections or keys fail before any work starts.  All
randomness derives from the single [run] seed through named stage
derivations, so each stage is reproducible in isolation.
"""

from __future__ import annotations

import configparser
import datetime as dt
import hashlib
from dataclasses import dataclass

from .data import SplitSpec
from .model import ModelDims
from .struc2vec import EmbedConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class _Key:
    kind: str               # int | float | bool | str | date | periods
    default: object
    lo: float | None = None
    hi: float | None = None
    doc: str = ""


SCHEMA: dict[str, dict[str, _Key]] = {
    "data": {
        "path": _Key("str", "", doc="OHLCV CSV file to load"),
        "max_gap_days": _Key("int", 14, 1, 365, "largest calendar gap tolerated between rows"),
    },
    "window": {
        "lookback": _Key("int", 20, 3, 500, "window length T in trading days"),
    },
    "graph": {
        "ci_radius": _Key("int", 2, 0, 10, "ball radius for the influence weights"),
        "ci_normalize": _Key("bool", True, doc="min-max scale node weights before attention"),
    },
    "embed": {
        "dim": _Key("int", 64, 2, 1024, "embedding width E"),
        "k_max": _Key("int", 5, 0, 20, "cap on structural-distance layers"),
        "walks_per_node": _Key("int", 20, 1, 1000, "random walks started per node"),
        "walk_length": _Key("int", 10, 2, 1000, "emitted nodes per walk"),
        "window": _Key("int", 5, 1, 100, "skip-gram context half-width"),
        "epochs": _Key("int", 5, 1, 1000, "skip-gram passes over the walk corpus"),
        "lr": _Key("float", 0.025, 1e-6, 10.0, "skip-gram initial learning rate"),
        "q_stay": _Key("float", 0.3, 1e-6, 1.0 - 1e-6, "stay-in-layer probability"),
    },
    "model": {
        "enc_hidden": _Key("int", 64, 1, 2048, "encoder state size m"),
        "dec_hidden": _Key("int", 64, 1, 2048, "decoder state size p"),
        "batch_size": _Key("int", 128, 1, 4096, "training batch cap I"),
    },
    "train": {
        "epochs": _Key("int", 50, 1, 100000, "maximum training epochs"),
        "lr": _Key("float", 1e-3, 1e-9, 10.0, "Adam learning rate"),
        "patience": _Key("int", 5, 0, 100000, "early-stopping patience in epochs"),
    },
    "split": {
        "train_val_end": _Key("date", None, doc="last date usable for training labels"),
        "test_periods": _Key("periods", (), doc="comma-separated start:end test windows"),
        "val_fraction": _Key("float", 0.3, 1e-6, 1.0 - 1e-6, "validation share of training pool"),
    },
    "backtest": {
        "mode": _Key("str", "long_short", doc="long_short or long_only"),
    },
    "synth": {
        "tickers": _Key("int", 50, 1, 10000, "synthetic corpus size"),
        "days": _Key("int", 600, 10, 100000, "trading days per synthetic ticker"),
        "signal_strength": _Key("float", 0.9, 0.0, 1.0, "momentum-following probability scale"),
        "momentum_days": _Key("int", 5, 1, 250, "horizon of the planted momentum signal"),
        "daily_vol": _Key("float", 0.02, 0.001, 0.2, "log-return volatility of the walks"),
        "out": _Key("str", "synth.csv", doc="where the synth command writes the corpus"),
    },
    "run": {
        "seed": _Key("int", 0, 0, 2**62, "root seed fanned out to every stage"),
        "out_dir": _Key("str", "runs", doc="directory for run outputs"),
        "cache_dir": _Key("str", "cache", doc="directory for graph and embedding caches"),
        "jobs": _Key("int", 1, 1, 256, "worker processes for the embedding stage"),
    },
}


def _parse_value(section: str, key: str, spec: _Key, raw: str):
    where = f"{section}.{key}"
    raw = raw.strip()
    if spec.kind == "int":
        try:
            val = int(raw)
        except ValueError:
            raise ConfigError(f"{where}: expected an integer, got {raw!r}") from None
    elif spec.kind == "float":
        try:
            val = float(raw)
        except ValueError:
            raise ConfigError(f"{where}: expected a number, got {raw!r}") from None
    elif spec.kind == "bool":
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"{where}: expected a boolean, got {raw!r}")
    elif spec.kind == "date":
        try:
            return dt.date.fromisoformat(raw)
        except ValueError:
            raise ConfigError(f"{where}: expected YYYY-MM-DD, got {raw!r}") from None
    elif spec.kind == "periods":
        if not raw:
            return ()
        periods = []
        for part in raw.split(","):
            part = part.strip()
            try:
                a, b = part.split(":")
                periods.append((dt.date.fromisoformat(a.strip()),
                                dt.date.fromisoformat(b.strip())))
            except ValueError:
                raise ConfigError(
                    f"{where}: expected start:end date pairs, got {part!r}"
                ) from None
        return tuple(periods)
    else:
        return raw
    if spec.lo is not None and val < spec.lo:
        raise ConfigError(f"{where}: {val} below minimum {spec.lo}")
    if spec.hi is not None and val > spec.hi:
        raise ConfigError(f"{where}: {val} above maximum {spec.hi}")
    return val


@dataclass(frozen=True)
class PipelineConfig:
    values: dict

    def __getitem__(self, dotted: str):
        return self.values[dotted]

    # -- stage views --------------------------------------------------------

    def embed_config(self) -> EmbedConfig:
        return EmbedConfig(
            dim=self["embed.dim"],
            k_max=self["embed.k_max"],
            walks_per_node=self["embed.walks_per_node"],
            walk_length=self["embed.walk_length"],
            window=self["embed.window"],
            epochs=self["embed.epochs"],
            lr=self["embed.lr"],
            q_stay=self["embed.q_stay"],
            ci_l=self["graph.ci_radius"],
            ci_normalize=self["graph.ci_normalize"],
            seed=stage_seed(self["run.seed"], "embed"),
        )

    def model_dims(self) -> ModelDims:
        return ModelDims(
            lookback=self["window.lookback"],
            embed=self["embed.dim"],
            enc_hidden=self["model.enc_hidden"],
            dec_hidden=self["model.dec_hidden"],
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self["train.epochs"],
            lr=self["train.lr"],
            patience=self["train.patience"],
            batch_cap=self["model.batch_size"],
            seed=stage_seed(self["run.seed"], "train"),
        )

    def split_spec(self) -> SplitSpec:
        if self["split.train_val_end"] is None:
            raise ConfigError("split.train_val_end must be set")
        return SplitSpec(
            train_val_end=self["split.train_val_end"],
            test_periods=self["split.test_periods"],
            val_fraction=self["split.val_fraction"],
            seed=stage_seed(self["run.seed"], "split"),
        )

    # -- identity ------------------------------------------------------------

    def canonical_text(self) -> str:
        lines = []
        for section in sorted(SCHEMA):
            lines.append(f"[{section}]")
            for key in sorted(SCHEMA[section]):
                val = self.values[f"{section}.{key}"]
                if isinstance(val, tuple):
                    rendered = ",".join(f"{a.isoformat()}:{b.isoformat()}" for a, b in val)
                elif isinstance(val, dt.date):
                    rendered = val.isoformat()
                else:
                    rendered = repr(val) if isinstance(val, float) else str(val)
                lines.append(f"{key} = {rendered}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:12]

    def override(self, **dotted) -> "PipelineConfig":
        vals = dict(self.values)
        for dotted_key, val in dotted.items():
            key = dotted_key.replace("__", ".")
            if key not in vals:
                raise ConfigError(f"unknown config key {key}")
            vals[key] = val
        return PipelineConfig(vals)


def default_config() -> PipelineConfig:
    values = {}
    for section, keys in SCHEMA.items():
        for key, spec in keys.items():
            values[f"{section}.{key}"] = spec.default
    return PipelineConfig(values)


def load_config(path) -> PipelineConfig:
    """Parse and validate a config file; unknown keys fail fast by name."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    values = {}
    for section, keys in SCHEMA.items():
        for key, spec in keys.items():
            values[f"{section}.{key}"] = spec.default
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown config key {section}.{key}")
            values[f"{section}.{key}"] = _parse_value(section, key, SCHEMA[section][key], raw)
    mode = values["backtest.mode"]
    if mode not in ("long_short", "long_only"):
        raise ConfigError(f"backtest.mode: expected long_short or long_only, got {mode!r}")
    return PipelineConfig(values)


def stage_seed(root_seed: int, stage: str) -> int:
    """Named derivation of per-stage seeds from the root seed."""
    digest = hashlib.sha256(f"{root_seed}:{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "little") % (2**62)


def describe_schema() -> str:
    """Human-readable key reference with defaults and bounds."""
    lines = []
    for section in sorted(SCHEMA):
        lines.append(f"[{section}]")
        for key in sorted(SCHEMA[section]):
            spec = SCHEMA[section][key]
            bounds = ""
            if spec.lo is not None or spec.hi is not None:
                bounds = f" (range {spec.lo}..{spec.hi})"
            lines.append(f"  {key} = {spec.default!r}{bounds}  # {spec.doc}")
        lines.append("")
    return "\n".join(lines)
