from datetime import date

import numpy as np
import pytest

from ivol_lab.data_ingest import (
    Bar,
    CountObservation,
    DailySeries,
    RawOptionQuote,
    TradingCalendar,
    align_to_calendar,
    load_bars,
    load_counts,
    load_options,
    write_bars,
    write_counts,
    write_options,
)
from ivol_lab.errors import DataError, SchemaError

from helpers import make_bars, weekdays


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestLoadBars:
    def test_three_rows_in_order(self, tmp_path):
        p = write(tmp_path, "bars.csv",
                  "date,open,high,low,close,volume\n"
                  "2016-01-04,10.0,11.0,9.5,10.5,100\n"
                  "2016-01-05,10.5,10.6,10.0,10.1,200\n"
                  "2016-01-06,10.1,10.4,9.9,10.3,300\n")
        bars = load_bars(p)
        assert len(bars) == 3
        assert [b.date for b in bars] == [date(2016, 1, 4), date(2016, 1, 5),
                                          date(2016, 1, 6)]
        assert bars[1].close == 10.1

    def test_high_below_low_names_line_and_date(self, tmp_path):
        p = write(tmp_path, "bars.csv",
                  "date,open,high,low,close,volume\n"
                  "2016-01-04,10.0,9.0,9.5,9.2,100\n")
        with pytest.raises(SchemaError, match=r"bars.csv:2.*2016-01-04"):
            load_bars(p)

    def test_duplicate_date_rejected(self, tmp_path):
        p = write(tmp_path, "bars.csv",
                  "date,open,high,low,close,volume\n"
                  "2016-01-04,10,11,9,10,1\n"
                  "2016-01-04,10,11,9,10,1\n")
        with pytest.raises(SchemaError, match="duplicate date"):
            load_bars(p)

    def test_nan_price_rejected_with_line(self, tmp_path):
        p = write(tmp_path, "bars.csv",
                  "date,open,high,low,close,volume\n"
                  "2016-01-04,nan,11,9,10,1\n")
        with pytest.raises(SchemaError, match="bars.csv:2"):
            load_bars(p)

    def test_negative_price_rejected(self, tmp_path):
        p = write(tmp_path, "bars.csv",
                  "date,open,high,low,close,volume\n"
                  "2016-01-04,-10,11,9,10,1\n")
        with pytest.raises(SchemaError, match="negative"):
            load_bars(p)

    def test_wrong_header(self, tmp_path):
        p = write(tmp_path, "bars.csv", "day,o,h,l,c,v\n")
        with pytest.raises(SchemaError, match="header"):
            load_bars(p)

    def test_486_day_panel(self, tmp_path):
        bars = make_bars(weekdays(date(2016, 1, 1), 486))
        p = tmp_path / "bars.csv"
        write_bars(p, bars)
        assert len(load_bars(p)) == 486

    def test_comment_lines_skipped(self, tmp_path):
        p = write(tmp_path, "bars.csv",
                  "# tool 0.1\n"
                  "date,open,high,low,close,volume\n"
                  "2016-01-04,10.0,11.0,9.5,10.5,100\n")
        assert len(load_bars(p)) == 1


class TestRoundTrip:
    def test_bars_write_read_write_is_fixed_point(self, tmp_path):
        bars = make_bars(weekdays(date(2016, 1, 4), 60), seed=3)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_bars(p1, bars)
        write_bars(p2, load_bars(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_counts_round_trip(self, tmp_path):
        obs = [CountObservation(d, i * 3) for i, d in
               enumerate(weekdays(date(2016, 1, 4), 40))]
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_counts(p1, obs)
        write_counts(p2, load_counts(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_options_round_trip(self, tmp_path):
        quotes = []
        for k in (90.0, 100.0, 110.5):
            for is_call in (True, False):
                quotes.append(RawOptionQuote(date(2016, 1, 4), date(2016, 2, 5),
                                             k, is_call, 1.25, 1.75))
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_options(p1, quotes)
        write_options(p2, load_options(p1))
        assert p1.read_bytes() == p2.read_bytes()


class TestOptionsSchema:
    def test_bid_above_ask_rejected(self, tmp_path):
        p = write(tmp_path, "options.csv",
                  "trade_date,expiry,strike,type,bid,ask\n"
                  "2016-01-04,2016-02-05,100,C,2.0,1.0\n")
        with pytest.raises(SchemaError, match="options.csv:2"):
            load_options(p)

    def test_bad_type_letter(self, tmp_path):
        p = write(tmp_path, "options.csv",
                  "trade_date,expiry,strike,type,bid,ask\n"
                  "2016-01-04,2016-02-05,100,X,1.0,2.0\n")
        with pytest.raises(SchemaError, match="C or P"):
            load_options(p)

    def test_expiry_not_after_trade_date(self, tmp_path):
        p = write(tmp_path, "options.csv",
                  "trade_date,expiry,strike,type,bid,ask\n"
                  "2016-01-04,2016-01-04,100,C,1.0,2.0\n")
        with pytest.raises(SchemaError, match="not in the future"):
            load_options(p)


class TestCalendar:
    def test_weekend_rejected(self):
        with pytest.raises(DataError, match="weekend"):
            TradingCalendar((date(2016, 1, 9),))  # a Saturday

    def test_out_of_order_rejected(self):
        with pytest.raises(DataError, match="increasing"):
            TradingCalendar((date(2016, 1, 5), date(2016, 1, 4)))


class TestAlignToCalendar:
    def cal(self):
        return TradingCalendar(weekdays(date(2016, 1, 4), 5))

    def test_drop_keeps_trading_days_only(self):
        cal = self.cal()
        obs = [CountObservation(d, 7) for d in cal.days]
        obs.append(CountObservation(date(2016, 1, 9), 99))  # Saturday
        out = align_to_calendar(obs, cal, "drop")
        assert len(out) == len(cal)
        assert np.all(out.values == 7)

    def test_sum_into_next_weekend_oracle(self):
        # Fri 2016-01-08, Sat 9th=3, Sun 10th=4, Mon 11th=5 -> Monday reads 12
        cal = TradingCalendar((date(2016, 1, 8), date(2016, 1, 11)))
        obs = [
            CountObservation(date(2016, 1, 8), 1),
            CountObservation(date(2016, 1, 9), 3),
            CountObservation(date(2016, 1, 10), 4),
            CountObservation(date(2016, 1, 11), 5),
        ]
        out = align_to_calendar(obs, cal, "sum_into_next")
        assert out.values.tolist() == [1.0, 12.0]

    def test_carry_forward_reuses_previous(self):
        cal = self.cal()
        obs = [CountObservation(d, i + 1) for i, d in enumerate(cal.days)
               if i != 2]  # drop the middle trading day
        out = align_to_calendar(obs, cal, "carry_forward")
        assert out.values.tolist() == [1.0, 2.0, 2.0, 4.0, 5.0]

    def test_missing_day_under_drop_is_error(self):
        cal = self.cal()
        obs = [CountObservation(cal.days[0], 1)]
        with pytest.raises(DataError, match="no observation"):
            align_to_calendar(obs, cal, "drop")

    def test_output_length_always_calendar_length(self):
        rng = np.random.default_rng(0)
        for n in (1, 3, 10, 25):
            cal = TradingCalendar(weekdays(date(2016, 1, 4), n))
            obs = [CountObservation(d, int(rng.integers(0, 10))) for d in cal.days]
            for policy in ("drop", "sum_into_next", "carry_forward"):
                assert len(align_to_calendar(obs, cal, policy)) == len(cal)

    def test_unknown_policy(self):
        with pytest.raises(ValueError):
            align_to_calendar([CountObservation(date(2016, 1, 4), 1)],
                              self.cal(), "interpolate")


class TestDailySeries:
    def test_rejects_nan(self):
        with pytest.raises(DataError, match="non-finite"):
            DailySeries(weekdays(date(2016, 1, 4), 2), np.array([1.0, np.nan]), "x")

    def test_rejects_length_mismatch(self):
        with pytest.raises(DataError):
            DailySeries(weekdays(date(2016, 1, 4), 2), np.array([1.0]), "x")

    def test_values_are_read_only(self):
        s = DailySeries(weekdays(date(2016, 1, 4), 2), np.array([1.0, 2.0]), "x")
        with pytest.raises(ValueError):
            s.values[0] = 5.0
