import math
from datetime import date, timedelta

import numpy as np
import pytest

from ivol_lab.data_ingest import RawOptionQuote, TradingCalendar
from ivol_lab.errors import DataError, DegenerateChainError
from ivol_lab.ivol_engine import (
    ExpirySlice,
    VarianceStrip,
    compute_strip,
    daily_ivol_series,
    forward_level,
    interpolate_constant_maturity,
    ivol_points_to_series,
    select_strip,
    term_variance,
)

from helpers import make_bs_chain, weekdays

TRADE = date(2016, 1, 4)
EXPIRY = date(2016, 2, 5)
T = (EXPIRY - TRADE).days / 365.0


def quote(strike, is_call, bid, ask=None, expiry=EXPIRY):
    return RawOptionQuote(TRADE, expiry, strike, is_call, bid,
                          bid if ask is None else ask)


def chain(quotes, rate=0.0):
    return ExpirySlice(EXPIRY, T, rate, tuple(quotes))


class TestForwardLevel:
    def test_put_call_symmetry(self):
        c = chain([quote(100.0, True, 5.0), quote(100.0, False, 5.0)])
        assert forward_level(c) == 100.0

    def test_direct_substitution(self):
        # F = K* + e^{R T} (C - P) with R = 0: 100 + (6 - 4) = 102
        c = chain([quote(100.0, True, 6.0), quote(100.0, False, 4.0)])
        assert forward_level(c) == pytest.approx(102.0, abs=1e-12)

    def test_nonzero_rate_discounting(self):
        r = 0.05
        c = ExpirySlice(EXPIRY, T, r, (quote(100.0, True, 6.0),
                                       quote(100.0, False, 4.0)))
        assert forward_level(c) == pytest.approx(100.0 + math.exp(r * T) * 2.0)

    def test_tie_breaks_to_lower_strike(self):
        c = chain([
            quote(90.0, True, 7.0), quote(90.0, False, 5.0),   # |C-P| = 2
            quote(110.0, True, 3.0), quote(110.0, False, 1.0),  # |C-P| = 2
        ])
        assert forward_level(c) == pytest.approx(90.0 + 2.0)

    def test_requires_both_sides(self):
        with pytest.raises(DegenerateChainError):
            forward_level(chain([quote(100.0, True, 5.0)]))


class TestSelectStrip:
    def test_k0_definition_and_sides(self):
        quotes = []
        for k in (90.0, 100.0, 110.0):
            quotes += [quote(k, True, 2.0), quote(k, False, 2.0)]
        strip = select_strip(chain(quotes), F=101.0)
        assert strip.K0 == 100.0
        strikes = [k for k, _, _ in strip.contributions]
        assert strikes == [90.0, 100.0, 110.0]

    def test_interior_delta_k_is_centered_difference(self):
        quotes = []
        for k in (90.0, 100.0, 110.0):
            quotes += [quote(k, True, 2.0), quote(k, False, 2.0)]
        strip = select_strip(chain(quotes), F=101.0)
        by_strike = {k: dk for k, dk, _ in strip.contributions}
        assert by_strike[100.0] == pytest.approx(10.0)
        assert by_strike[90.0] == pytest.approx(10.0)   # one-sided at the edge
        assert by_strike[110.0] == pytest.approx(10.0)

    def test_two_consecutive_zero_bids_truncate(self):
        # call side moving outward: bids 5, 0, 0, 3 -> only the 5 survives
        quotes = [quote(100.0, True, 4.0), quote(100.0, False, 4.0),
                  quote(110.0, True, 5.0),
                  quote(120.0, True, 0.0, 0.5),
                  quote(130.0, True, 0.0, 0.5),
                  quote(140.0, True, 3.0)]
        strip = select_strip(chain(quotes), F=100.0)
        strikes = [k for k, _, _ in strip.contributions]
        assert 140.0 not in strikes
        assert 120.0 not in strikes and 130.0 not in strikes
        assert strikes == [100.0, 110.0]

    def test_single_zero_bid_skipped_not_truncated(self):
        quotes = [quote(100.0, True, 4.0), quote(100.0, False, 4.0),
                  quote(110.0, True, 5.0),
                  quote(120.0, True, 0.0, 0.5),
                  quote(130.0, True, 3.0)]
        strip = select_strip(chain(quotes), F=100.0)
        strikes = [k for k, _, _ in strip.contributions]
        assert strikes == [100.0, 110.0, 130.0]

    def test_forward_below_lowest_strike(self):
        quotes = [quote(100.0, True, 4.0), quote(100.0, False, 4.0)]
        with pytest.raises(DegenerateChainError):
            select_strip(chain(quotes), F=95.0)

    def test_at_the_money_quote_is_put_call_average(self):
        quotes = [quote(100.0, True, 6.0), quote(100.0, False, 4.0),
                  quote(110.0, True, 2.0)]
        strip = select_strip(chain(quotes), F=100.0)
        by_strike = {k: q for k, _, q in strip.contributions}
        assert by_strike[100.0] == pytest.approx(5.0)


class TestTermVariance:
    def test_all_zero_quotes_and_f_equals_k0(self):
        strip = VarianceStrip(F=100.0, K0=100.0,
                              contributions=((90.0, 10.0, 0.0), (100.0, 10.0, 0.0)))
        assert term_variance(strip, 0.25, 0.0) == 0.0

    def test_single_strike_hand_substitution(self):
        # (2/0.25) * (10/100^2) * e^0 * 2 - (1/0.25) * 0 = 0.016
        strip = VarianceStrip(F=100.0, K0=100.0, contributions=((100.0, 10.0, 2.0),))
        assert term_variance(strip, 0.25, 0.0) == 0.016

    def test_negative_variance_is_degenerate(self):
        strip = VarianceStrip(F=105.0, K0=100.0, contributions=((100.0, 10.0, 0.0),))
        with pytest.raises(DegenerateChainError, match="negative"):
            term_variance(strip, 0.25, 0.0)

    def test_scale_invariance_in_price(self):
        rng = np.random.default_rng(4)
        for _ in range(25):
            ks = np.sort(rng.uniform(50, 150, 7))
            dks = np.concatenate([[ks[1] - ks[0]],
                                  0.5 * (ks[2:] - ks[:-2]),
                                  [ks[-1] - ks[-2]]])
            qs = rng.uniform(0.5, 5.0, 7)
            # keep the forward near K0 so the strip variance stays positive
            f = float(rng.uniform(ks[3], min(ks[3] * 1.02, ks[4])))
            k0 = float(ks[ks <= f].max())
            base = VarianceStrip(f, k0, tuple(zip(ks, dks, qs)))
            c = float(rng.uniform(0.5, 20.0))
            scaled = VarianceStrip(c * f, c * k0,
                                   tuple(zip(c * ks, c * dks, c * qs)))
            assert term_variance(scaled, 0.3, 0.02) == pytest.approx(
                term_variance(base, 0.3, 0.02), rel=1e-12)

    def test_monotone_in_quotes(self):
        ks = (90.0, 100.0, 110.0)
        dks = (10.0, 10.0, 10.0)
        qs = [1.0, 2.0, 1.5]
        f, k0 = 100.0, 100.0
        base = term_variance(VarianceStrip(f, k0, tuple(zip(ks, dks, qs))), 0.25, 0.0)
        for j in range(3):
            bumped = list(qs)
            bumped[j] += 0.5
            v = term_variance(VarianceStrip(f, k0, tuple(zip(ks, dks, bumped))),
                              0.25, 0.0)
            assert v >= base


class TestInterpolation:
    def test_constant_variance_is_fixed_point(self):
        for target in (25 / 365, 30 / 365, 38 / 365):
            out = interpolate_constant_maturity((20 / 365, 0.04), (40 / 365, 0.04),
                                                target)
            assert out == pytest.approx(20.0, abs=1e-12)

    def test_spreadsheet_oracle_day_count_weights(self):
        # independent formulation: the day-count weighted white-paper formula
        n1, n2, n_target = 20, 40, 30
        s1, s2 = 0.04, 0.09
        t1, t2 = n1 / 365, n2 / 365
        expected_var = (t1 * s1 * (n2 - n_target) / (n2 - n1)
                        + t2 * s2 * (n_target - n1) / (n2 - n1)) * 365 / n_target
        expected = 100 * math.sqrt(expected_var)
        out = interpolate_constant_maturity((t1, s1), (t2, s2), n_target / 365)
        assert out == pytest.approx(expected, abs=1e-12)
        assert out == pytest.approx(27.080128015453195, abs=1e-9)

    def test_exact_near_term_returns_near_vol(self):
        out = interpolate_constant_maturity((30 / 365, 0.0625), (60 / 365, 0.09),
                                            30 / 365)
        assert out == pytest.approx(100 * math.sqrt(0.0625), abs=1e-12)

    def test_single_term_with_clamp_warns(self, caplog):
        with caplog.at_level("WARNING"):
            out = interpolate_constant_maturity((20 / 365, 0.04), None, 30 / 365,
                                                clamp=True)
        assert out == pytest.approx(20.0)
        assert any("single expiry" in r.message for r in caplog.records)

    def test_same_side_without_clamp_is_error(self):
        with pytest.raises(DataError, match="outside term range"):
            interpolate_constant_maturity((40 / 365, 0.04), (60 / 365, 0.05), 30 / 365)

    def test_same_side_with_clamp_uses_nearest(self):
        out = interpolate_constant_maturity((40 / 365, 0.04), (60 / 365, 0.05),
                                            30 / 365, clamp=True)
        assert out == pytest.approx(20.0)

    def test_volatility_space_flag(self):
        out = interpolate_constant_maturity((20 / 365, 0.04), (40 / 365, 0.09),
                                            30 / 365, method="volatility")
        assert out == pytest.approx(100 * (0.5 * 0.2 + 0.5 * 0.3), abs=1e-12)


class TestDailySeries:
    def synthetic_quotes(self, days, sigma=0.25, n_per_side=60):
        quotes = []
        for d in days:
            for dte in (21, 42):
                quotes += make_bs_chain(d, d + timedelta(days=dte), 100.0, 0.01,
                                        sigma, n_per_side=n_per_side, width_sd=6.0)
        return quotes

    def test_one_point_per_trading_day(self):
        days = weekdays(date(2016, 1, 4), 10)
        cal = TradingCalendar(days)
        points = daily_ivol_series(self.synthetic_quotes(days), cal, rate=0.01)
        assert len(points) == 10
        assert all(p.ivol >= 0 and math.isfinite(p.ivol) for p in points)

    def test_constant_chain_gives_constant_series(self):
        days = weekdays(date(2016, 1, 4), 6)
        cal = TradingCalendar(days)
        points = daily_ivol_series(self.synthetic_quotes(days), cal, rate=0.01)
        values = ivol_points_to_series(points).values
        assert np.allclose(values, values[0], rtol=1e-6)

    def test_flat_bs_chain_recovers_sigma_within_2pct(self):
        days = weekdays(date(2016, 1, 4), 3)
        cal = TradingCalendar(days)
        for sigma in (0.1, 0.3, 0.5):
            points = daily_ivol_series(
                self.synthetic_quotes(days, sigma=sigma, n_per_side=150),
                cal, rate=0.01)
            for p in points:
                assert abs(p.ivol - 100 * sigma) / (100 * sigma) < 0.02

    def test_missing_day_is_hard_error_naming_it(self):
        days = weekdays(date(2016, 1, 4), 4)
        cal = TradingCalendar(days)
        quotes = [q for q in self.synthetic_quotes(days)
                  if q.trade_date != days[2]]
        with pytest.raises(DegenerateChainError, match=days[2].isoformat()):
            daily_ivol_series(quotes, cal)

    def test_min_near_days_skips_expiry_week(self):
        days = weekdays(date(2016, 1, 4), 1)
        cal = TradingCalendar(days)
        d = days[0]
        quotes = (make_bs_chain(d, d + timedelta(days=3), 100.0, 0.0, 0.2, 40, 6.0)
                  + make_bs_chain(d, d + timedelta(days=25), 100.0, 0.0, 0.2, 40, 6.0)
                  + make_bs_chain(d, d + timedelta(days=46), 100.0, 0.0, 0.2, 40, 6.0))
        points = daily_ivol_series(quotes, cal, min_near_days=7)
        assert points[0].near_expiry == d + timedelta(days=25)
        assert points[0].next_expiry == d + timedelta(days=46)

    def test_round_trip_ivol_csv(self, tmp_path):
        days = weekdays(date(2016, 1, 4), 5)
        cal = TradingCalendar(days)
        points = daily_ivol_series(self.synthetic_quotes(days), cal, rate=0.01)
        from ivol_lab.ivol_engine import load_ivol_csv, write_ivol_csv

        p = tmp_path / "ivol.csv"
        write_ivol_csv(p, points)
        series = load_ivol_csv(p)
        assert series.dates == days
        assert np.allclose(series.values,
                           [round(pt.ivol, 6) for pt in points], atol=1e-9)


class TestComputeStrip:
    def test_dense_chain_variance_close_to_flat_sigma_squared(self):
        d = date(2016, 1, 4)
        quotes = make_bs_chain(d, d + timedelta(days=30), 100.0, 0.01, 0.2,
                               n_per_side=300, width_sd=8.0)
        strip = compute_strip(ExpirySlice(d + timedelta(days=30), 30 / 365, 0.01,
                                          tuple(quotes)))
        assert strip.sigma2 == pytest.approx(0.04, rel=2e-4)
