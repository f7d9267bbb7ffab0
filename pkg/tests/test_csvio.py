from datetime import datetime, timedelta, timezone

import numpy as np
import pandas as pd
import pytest

from marketcorr.csvio import (
    read_bars_csv,
    read_calendar_csv,
    read_ticks_csv,
    rows_to_csv,
    write_bars_csv,
    write_calendar_csv,
    write_ticks_csv,
)
from marketcorr.exceptions import ParseError
from marketcorr.marketdata import HOUR, Bar

UTC = timezone.utc

TICKS = """timestamp,instrument,contract,price,volume
2010-03-01T10:00:01Z,SI,SI-3.10,30000,1
2010-03-01T10:00:02Z,SI,SI-3.10,30001,2
2010-03-01T10:00:03Z,SI,SI-3.10,30002,1
2010-03-01T10:00:04Z,SI,SI-3.10,30003,1
2010-03-01T10:00:05Z,SI,SI-3.10,30004,1
2010-03-01T10:00:06Z,SI,SI-3.10,abc,1
2010-03-01T10:00:07Z,SI,SI-3.10,30005,1
"""


def test_bad_price_reports_line_seven(tmp_path):
    f = tmp_path / "t.csv"
    f.write_text(TICKS)
    with pytest.raises(ParseError) as err:
        read_ticks_csv(f)
    assert err.value.line == 7
    assert ":7" in str(err.value) or "line 7" in str(err.value)


def test_wrong_header(tmp_path):
    f = tmp_path / "t.csv"
    f.write_text("time,inst,price\n")
    with pytest.raises(ParseError) as err:
        read_ticks_csv(f)
    assert err.value.line == 1


def test_timezone_header_applies_to_naive_stamps(tmp_path):
    f = tmp_path / "t.csv"
    f.write_text("# timezone: Europe/Moscow\n"
                 "timestamp,instrument,contract,price,volume\n"
                 "2010-03-01T13:00:00,SI,c,1.5,1\n"
                 "2010-03-01T13:00:00+00:00,SI,c,1.5,1\n")
    df = read_ticks_csv(f)
    assert df["timestamp"][0] == pd.Timestamp("2010-03-01T10:00:00Z")
    assert df["timestamp"][1] == pd.Timestamp("2010-03-01T13:00:00Z")


def test_ticks_round_trip_exactly(tmp_path):
    rng = np.random.default_rng(1)
    n = 200
    df = pd.DataFrame({
        "timestamp": pd.to_datetime(1_300_000_000_000 + np.sort(rng.integers(0, 10**8, n)),
                                    unit="ms", utc=True),
        "instrument": "BR", "contract": "BR-5.11",
        "price": 80 * np.exp(rng.normal(0, 0.01, n)),
        "volume": rng.integers(0, 50, n),
    })
    f = tmp_path / "t.csv"
    write_ticks_csv(df, f)
    back = read_ticks_csv(f)
    assert (back["timestamp"].to_numpy() == df["timestamp"].to_numpy()).all()
    assert (back["price"].to_numpy() == df["price"].to_numpy()).all()
    assert (back["volume"].to_numpy() == df["volume"].to_numpy()).all()


def test_bars_and_calendar_round_trip(tmp_path):
    t0 = datetime(2012, 5, 1, tzinfo=UTC)
    bars = [Bar("ED", "ED-6.12", t0 + k * HOUR, HOUR, 1.1 + k / 3, 1.2 + k / 3,
                1.0 + k / 3, 1.15 + k / 3, 7 * k, k + 1) for k in range(5)]
    write_bars_csv(bars, tmp_path / "b.csv")
    assert read_bars_csv(tmp_path / "b.csv") == bars
    cal = [("ED", t0 + timedelta(days=40)), ("SI", t0 + timedelta(days=3, minutes=30))]
    write_calendar_csv(cal, tmp_path / "c.csv")
    assert read_calendar_csv(tmp_path / "c.csv") == cal


def test_inconsistent_bar_cites_line(tmp_path):
    f = tmp_path / "b.csv"
    f.write_text("interval_start,interval_seconds,instrument,contract,open,high,low,close,"
                 "volume,tick_count\n"
                 "2010-01-01T00:00:00Z,3600,SI,c,1,2,0.5,1,3,1\n"
                 "2010-01-01T01:00:00Z,3600,SI,c,1,0.9,0.5,1,3,1\n")
    with pytest.raises(ParseError) as err:
        read_bars_csv(f)
    assert err.value.line == 3


def test_report_csv_uses_full_precision():
    text = rows_to_csv(["a", "b"], [[0.1 + 0.2, True]])
    assert text == "a,b\n0.30000000000000004,true\n"
