import datetime as dt
import math

import numpy as np
import pytest
import scipy.stats

from vgforecast.backtest import (
    LONG,
    SHORT,
    BacktestError,
    NetValueCurve,
    Signal,
    ci_distribution_report,
    ks_two_sample,
    market_baseline,
    signals_from_predictions,
    simulate,
)

D = dt.date


def day(i):
    return D(2021, 1, 1) + dt.timedelta(days=i)


class TestSimulate:
    def test_two_longs_one_percent(self):
        curve = simulate([
            Signal(day(0), "A", LONG, 0.01),
            Signal(day(0), "B", LONG, 0.01),
        ])
        assert curve.final == pytest.approx(1.01, abs=1e-12)

    def test_long_and_short_signed_mean(self):
        curve = simulate([
            Signal(day(0), "A", LONG, 0.02),
            Signal(day(0), "B", SHORT, -0.01),
        ])
        # hand arithmetic: mean(+2%, +1%) = 1.5%
        assert curve.final == pytest.approx(1.015, abs=1e-12)

    def test_two_days_compound(self):
        curve = simulate([
            Signal(day(0), "A", LONG, 0.01),
            Signal(day(1), "A", LONG, 0.01),
        ])
        assert curve.final == pytest.approx(1.0201, abs=1e-12)

    def test_single_stock_all_long_reproduces_compounding(self):
        rng = np.random.default_rng(5)
        rets = rng.normal(0, 0.01, size=30)
        signals = [Signal(day(i), "A", LONG, float(r)) for i, r in enumerate(rets)]
        curve = simulate(signals)
        assert curve.final == pytest.approx(np.prod(1 + rets), rel=1e-14)

    def test_empty_dates_carry_flat_and_flag(self):
        curve = simulate(
            [Signal(day(0), "A", LONG, 0.02)],
            trading_dates=[day(0), day(1), day(2)],
        )
        assert curve.values.tolist() == pytest.approx([1.0, 1.02, 1.02, 1.02])
        assert curve.flagged_dates == (day(1), day(2))

    def test_sign_flip_symmetry(self):
        rng = np.random.default_rng(7)
        signals = []
        for i in range(10):
            for tick in "ABC":
                r = float(rng.normal(0, 0.02))
                d = LONG if rng.random() < 0.5 else SHORT
                signals.append(Signal(day(i), tick, d, r))
        flipped = [Signal(s.date, s.ticker, -s.direction, -s.realized_return)
                   for s in signals]
        a = simulate(signals)
        b = simulate(flipped)
        assert np.allclose(a.values, b.values, atol=1e-15)

    def test_no_signals_rejected(self):
        with pytest.raises(BacktestError):
            simulate([])

    def test_nv_positive_under_bounded_losses(self):
        rng = np.random.default_rng(9)
        signals = [Signal(day(i), "A", LONG, float(rng.uniform(-0.5, 0.5)))
                   for i in range(100)]
        assert np.all(simulate(signals).values > 0)


class TestBaseline:
    def test_flat_universe(self):
        curve = market_baseline({day(i): [0.0, 0.0] for i in range(5)})
        assert np.all(curve.values == 1.0)

    def test_single_stock_identity(self):
        rng = np.random.default_rng(11)
        rets = rng.normal(0, 0.01, 20)
        curve = market_baseline({day(i): [float(r)] for i, r in enumerate(rets)})
        assert curve.final == pytest.approx(np.prod(1 + rets), rel=1e-14)

    def test_offsetting_returns(self):
        curve = market_baseline({day(0): [0.02, -0.02]})
        assert curve.final == pytest.approx(1.0, abs=1e-15)


class TestSignalsFromPredictions:
    def test_long_short_split(self):
        rows = [(day(0), "A", 0.7, 0.01), (day(0), "B", 0.3, -0.02)]
        signals = signals_from_predictions(rows, "long_short")
        assert [(s.ticker, s.direction) for s in signals] == [("A", LONG), ("B", SHORT)]

    def test_long_only_skips_falls(self):
        rows = [(day(0), "A", 0.7, 0.01), (day(0), "B", 0.3, -0.02)]
        signals = signals_from_predictions(rows, "long_only")
        assert [(s.ticker, s.direction) for s in signals] == [("A", LONG)]

    def test_threshold_boundary_is_long(self):
        signals = signals_from_predictions([(day(0), "A", 0.5, 0.0)], "long_short")
        assert signals[0].direction == LONG

    def test_unknown_mode(self):
        with pytest.raises(BacktestError):
            signals_from_predictions([], "hedged")


class TestKolmogorovSmirnov:
    def test_identical_samples_zero(self):
        stat, _ = ks_two_sample([1, 2, 3], [1, 2, 3])
        assert stat == 0.0

    def test_disjoint_supports_one(self):
        stat, p = ks_two_sample([1, 2, 3], [10, 11, 12])
        assert stat == 1.0
        assert 0.0 <= p <= 1.0

    def test_hand_case_statistic(self):
        stat, p = ks_two_sample([1, 2, 3, 4, 5], [3, 4, 5, 6, 7])
        assert stat == pytest.approx(0.4, abs=1e-12)
        en = math.sqrt(25 / 10)
        want = scipy.stats.kstwobign.sf(en * 0.4)
        assert p == pytest.approx(want, abs=1e-3)

    def test_matches_reference_on_random_pairs(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            n1 = int(rng.integers(20, 300))
            n2 = int(rng.integers(20, 300))
            a = rng.normal(rng.uniform(-1, 1), rng.uniform(0.5, 2), n1)
            b = rng.normal(rng.uniform(-1, 1), rng.uniform(0.5, 2), n2)
            stat, p = ks_two_sample(a, b)
            ref = scipy.stats.ks_2samp(a, b, method="asymp")
            assert stat == pytest.approx(ref.statistic, abs=1e-6)
            en = math.sqrt(n1 * n2 / (n1 + n2))
            ref_p = scipy.stats.kstwobign.sf(en * stat)
            assert p == pytest.approx(ref_p, abs=1e-3)

    def test_symmetry(self):
        rng = np.random.default_rng(17)
        a = rng.normal(size=40)
        b = rng.normal(0.3, 1.1, size=60)
        assert ks_two_sample(a, b) == ks_two_sample(b, a)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(19)
        a = rng.uniform(0.1, 5, size=50)
        b = rng.uniform(0.1, 5, size=70)
        s1, _ = ks_two_sample(a, b)
        s2, _ = ks_two_sample(np.log(a), np.log(b))
        assert s1 == pytest.approx(s2, abs=1e-15)

    def test_calibration_same_distribution(self):
        rng = np.random.default_rng(23)
        ok = 0
        for _ in range(100):
            a = rng.normal(size=120)
            b = rng.normal(size=150)
            _, p = ks_two_sample(a, b)
            if p > 0.01:
                ok += 1
        assert ok >= 95

    def test_power_on_shifted_distributions(self):
        rng = np.random.default_rng(29)
        a = rng.normal(0, 1, size=400)
        b = rng.normal(1.0, 1, size=400)
        _, p = ks_two_sample(a, b)
        assert p < 0.001

    def test_empty_sample_rejected(self):
        with pytest.raises(BacktestError):
            ks_two_sample([], [1.0])


class TestDistributionReport:
    CHANNELS = ("close", "open", "high", "low", "amount", "volume")

    def test_all_same_label_skips_everything(self):
        rng = np.random.default_rng(31)
        ci = rng.uniform(0, 1, size=(10, 6, 20))
        report = ci_distribution_report(ci, np.ones(10), self.CHANNELS)
        assert report.channels == ()
        assert report.skipped == self.CHANNELS

    def test_same_distribution_calibration(self):
        rng = np.random.default_rng(37)
        ok = 0
        for _ in range(100):
            ci = rng.normal(5, 1, size=(40, 1, 10))
            labels = (rng.random(40) > 0.5).astype(int)
            if labels.min() == labels.max():
                ok += 1  # degenerate draw, nothing to test
                continue
            report = ci_distribution_report(ci, labels, ("close",))
            if report.channels[0].p_value > 0.01:
                ok += 1
        assert ok >= 95

    def test_shifted_groups_detected(self):
        rng = np.random.default_rng(41)
        labels = np.array([1] * 30 + [0] * 30)
        ci = np.empty((60, 1, 12))
        ci[:30, 0, :] = rng.normal(0, 1, size=(30, 12))
        ci[30:, 0, :] = rng.normal(1.2, 1, size=(30, 12))
        report = ci_distribution_report(ci, labels, ("close",))
        assert report.channels[0].p_value < 0.001

    def test_histograms_cover_both_groups(self):
        rng = np.random.default_rng(43)
        ci = rng.uniform(0, 1, size=(20, 6, 8))
        labels = np.array([1, 0] * 10)
        report = ci_distribution_report(ci, labels, self.CHANNELS, bins=10)
        assert len(report.channels) == 6
        for chd in report.channels:
            assert chd.rise_counts.sum() == chd.rise.size
            assert chd.fall_counts.sum() == chd.fall.size
            assert len(chd.bin_edges) == 11
