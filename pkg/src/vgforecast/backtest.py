"""Daily-rebalanced trading simulation and distribution diagnostics.

The strategy holds equal weights in every signalled stock for one day:
long positions earn the stock's next-day simple return, shorts earn its
negative.  Profits compound with no transaction costs.  The market
baseline holds every universe stock evenly.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field

import numpy as np

LONG = 1
SHORT = -1


class BacktestError(ValueError):
    pass


@dataclass(frozen=True)
class Signal:
    date: dt.date
    ticker: str
    direction: int          # LONG or SHORT
    realized_return: float  # next-day simple return of the stock

    def __post_init__(self):
        if self.direction not in (LONG, SHORT):
            raise BacktestError(f"direction must be +1 or -1, got {self.direction}")


@dataclass(frozen=True)
class NetValueCurve:
    dates: tuple[dt.date, ...]      # trading days, one per compounding step
    values: np.ndarray              # length = len(dates) + 1, values[0] = 1
    flagged_dates: tuple[dt.date, ...] = ()

    @property
    def final(self) -> float:
        return float(self.values[-1])

    @property
    def cumulative_return(self) -> float:
        return self.final - 1.0


def signals_from_predictions(
    rows: list[tuple[dt.date, str, float, float]],
    mode: str = "long_short",
    threshold: float = 0.5,
) -> list[Signal]:
    """Turn (date, ticker, probability, realized_return) rows into signals.

    ``long_short`` shorts every predicted-fall stock; ``long_only`` skips
    them instead.
    """
    if mode not in ("long_short", "long_only"):
        raise BacktestError(f"unknown backtest mode {mode!r}")
    out = []
    for date, ticker, prob, ret in rows:
        if prob >= threshold:
            out.append(Signal(date, ticker, LONG, ret))
        elif mode == "long_short":
            out.append(Signal(date, ticker, SHORT, ret))
    return out


def simulate(signals: list[Signal],
             trading_dates: list[dt.date] | None = None) -> NetValueCurve:
    """Compound the equal-weight signed-mean daily returns of the signals.

    ``trading_dates``, when given, fixes the calendar; days without any
    signal carry the net value flat and are flagged.
    """
    if not signals and not trading_dates:
        raise BacktestError("no signals to simulate")
    by_date: dict[dt.date, list[Signal]] = {}
    for s in signals:
        by_date.setdefault(s.date, []).append(s)
    dates = sorted(trading_dates) if trading_dates else sorted(by_date)
    values = [1.0]
    flagged = []
    for day in dates:
        todays = by_date.get(day, [])
        if not todays:
            flagged.append(day)
            values.append(values[-1])
            continue
        day_return = float(np.mean([s.direction * s.realized_return for s in todays]))
        values.append(values[-1] * (1.0 + day_return))
    return NetValueCurve(dates=tuple(dates), values=np.array(values),
                         flagged_dates=tuple(flagged))


def market_baseline(universe_returns: dict[dt.date, list[float]]) -> NetValueCurve:
    """Hold every universe stock evenly: compound the unsigned mean return."""
    if not universe_returns:
        raise BacktestError("empty universe")
    dates = sorted(universe_returns)
    values = [1.0]
    for day in dates:
        rets = universe_returns[day]
        if not rets:
            raise BacktestError(f"no universe returns on {day}")
        values.append(values[-1] * (1.0 + float(np.mean(rets))))
    return NetValueCurve(dates=tuple(dates), values=np.array(values))


# ---------------------------------------------------------------------------
# Two-sample Kolmogorov-Smirnov test
# ---------------------------------------------------------------------------

def _kolmogorov_sf(lam: float) -> float:
    """Survival function of the Kolmogorov distribution, alternating series."""
    if lam <= 0.0:
        return 1.0
    total = 0.0
    for j in range(1, 101):
        term = 2.0 * (-1.0) ** (j - 1) * math.exp(-2.0 * j * j * lam * lam)
        total += term
        if abs(term) < 1e-12 * abs(total) or abs(term) < 1e-300:
            break
    return min(1.0, max(0.0, total))


def ks_two_sample(a, b) -> tuple[float, float]:
    """KS statistic sup|ECDF_a - ECDF_b| and its asymptotic p-value.

    The p-value evaluates the Kolmogorov distribution at the statistic
    scaled by the two-sample effective size sqrt(n1*n2/(n1+n2)); exact
    small-sample enumeration is deliberately out of scope.
    """
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    n1, n2 = len(a), len(b)
    if n1 == 0 or n2 == 0:
        raise BacktestError("both samples must be nonempty")
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / n1
    cdf_b = np.searchsorted(b, grid, side="right") / n2
    stat = float(np.max(np.abs(cdf_a - cdf_b)))
    en = math.sqrt(n1 * n2 / (n1 + n2))
    return stat, _kolmogorov_sf(en * stat)


# ---------------------------------------------------------------------------
# Node-weight distribution report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChannelDistribution:
    channel: str
    rise: np.ndarray
    fall: np.ndarray
    statistic: float
    p_value: float
    bin_edges: np.ndarray
    rise_counts: np.ndarray
    fall_counts: np.ndarray


@dataclass(frozen=True)
class DistributionReport:
    channels: tuple[ChannelDistribution, ...]
    skipped: tuple[str, ...] = ()


def ci_distribution_report(ci_values: np.ndarray, labels: np.ndarray,
                           channel_names: tuple[str, ...],
                           bins: int = 30) -> DistributionReport:
    """Group per-window node weights by label and KS-test rise against fall.

    ``ci_values`` has shape (n_windows, n_channels, T); each window's
    weights pool into its label group.  A channel with an empty group is
    skipped and flagged.
    """
    ci_values = np.asarray(ci_values, dtype=np.float64)
    labels = np.asarray(labels).astype(int)
    if ci_values.ndim != 3 or ci_values.shape[0] != labels.shape[0]:
        raise BacktestError("ci_values must be (n_windows, n_channels, T) matching labels")
    rise_mask = labels == 1
    fall_mask = labels == 0
    out = []
    skipped = []
    for ch, name in enumerate(channel_names):
        rise = ci_values[rise_mask, ch, :].ravel()
        fall = ci_values[fall_mask, ch, :].ravel()
        if rise.size == 0 or fall.size == 0:
            skipped.append(name)
            continue
        stat, p = ks_two_sample(rise, fall)
        lo = float(min(rise.min(), fall.min()))
        hi = float(max(rise.max(), fall.max()))
        if hi == lo:
            hi = lo + 1.0
        edges = np.linspace(lo, hi, bins + 1)
        out.append(ChannelDistribution(
            channel=name, rise=rise, fall=fall, statistic=stat, p_value=p,
            bin_edges=edges,
            rise_counts=np.histogram(rise, bins=edges)[0],
            fall_counts=np.histogram(fall, bins=edges)[0],
        ))
    return DistributionReport(channels=tuple(out), skipped=tuple(skipped))
