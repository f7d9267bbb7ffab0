"""CSV readers and writers for ticks, bars, rollover calendars and reports.

Files are UTF-8 with LF line endings and ``.`` as decimal separator. Floats
are written with ``repr`` so they read back bit for bit. A tick file may
start with ``# timezone: <IANA name>`` lines; the zone applies to timestamps
that carry no offset of their own (the default is UTC).
"""

from __future__ import annotations

import io
import math
import re
from datetime import timedelta
from pathlib import Path

import numpy as np
import pandas as pd

from .exceptions import ParseError
from .marketdata import TICK_COLUMNS, UTC, Bar

BAR_COLUMNS = ["interval_start", "interval_seconds", "instrument", "contract",
               "open", "high", "low", "close", "volume", "tick_count"]
CALENDAR_COLUMNS = ["instrument", "switch_timestamp"]

_OFFSET = re.compile(r"(?:Z|[+-]\d{2}:?\d{2})$")
_TZ_LINE = re.compile(r"#\s*(?:timezone|tz)\s*[:=]\s*(\S+)", re.IGNORECASE)


def _read_table(path, columns):
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.split("\n")
    tz = "UTC"
    skip = 0
    while skip < len(lines) and lines[skip].startswith("#"):
        m = _TZ_LINE.match(lines[skip])
        if m:
            tz = m.group(1)
        skip += 1
    if skip >= len(lines) or not lines[skip].strip():
        raise ParseError("missing header", path, skip + 1)
    header = [h.strip() for h in lines[skip].rstrip("\r").split(",")]
    if header != columns:
        raise ParseError(f"expected header {','.join(columns)}, got {','.join(header)}",
                         path, skip + 1)
    df = pd.read_csv(io.StringIO("\n".join(lines[skip:])), dtype=str,
                     keep_default_na=False, skip_blank_lines=True)
    # file line of each data row: header line + 1 + row position (blank lines dropped)
    body = lines[skip + 1:]
    line_no = np.array([skip + 2 + k for k, s in enumerate(body) if s.strip()][:len(df)])
    return df, line_no, tz, path


def _fail_first(mask, line_no, path, message, values):
    bad = np.flatnonzero(mask)
    if bad.size:
        k = bad[0]
        raise ParseError(f"{message}: {values[k]!r}", path, int(line_no[k]))


def _numbers(df, col, line_no, path, integer=False):
    raw = df[col].str.strip().to_numpy()
    try:
        # numpy's str->float conversion is correctly rounded; pandas' fast parser is not
        f = raw.astype(float)
    except ValueError:
        f = pd.to_numeric(pd.Series(raw), errors="coerce").to_numpy(dtype=float)
    _fail_first(~np.isfinite(f), line_no, path, f"non-numeric {col}", raw)
    if integer:
        _fail_first(f != np.round(f), line_no, path, f"non-integer {col}", raw)
        return f.astype(np.int64)
    return f


def _timestamps(df, col, line_no, path, tz="UTC"):
    raw = df[col].str.strip()
    has_offset = raw.str.contains(_OFFSET).to_numpy()
    out = pd.Series(pd.NaT, index=df.index, dtype="datetime64[ns, UTC]")
    if has_offset.any():
        out[has_offset] = pd.to_datetime(raw[has_offset], format="ISO8601", utc=True,
                                         errors="coerce")
    if (~has_offset).any():
        naive = pd.to_datetime(raw[~has_offset], format="ISO8601", errors="coerce")
        out[~has_offset] = naive.dt.tz_localize(tz).dt.tz_convert(UTC)
    _fail_first(out.isna().to_numpy(), line_no, path, f"unparseable {col}", raw.to_numpy())
    return out


def format_timestamps(ts) -> list[str]:
    """ISO-8601 with millisecond precision and explicit ``+00:00``."""
    idx = pd.DatetimeIndex(pd.to_datetime(ts, utc=True))
    return [s[:-3] + "+00:00" for s in idx.strftime("%Y-%m-%dT%H:%M:%S.%f")]


def read_ticks_csv(path) -> pd.DataFrame:
    df, line_no, tz, path = _read_table(path, TICK_COLUMNS)
    price = _numbers(df, "price", line_no, path)
    _fail_first(~(price > 0), line_no, path, "non-positive price", df["price"].to_numpy())
    volume = _numbers(df, "volume", line_no, path, integer=True)
    _fail_first(volume < 0, line_no, path, "negative volume", df["volume"].to_numpy())
    return pd.DataFrame({
        "timestamp": _timestamps(df, "timestamp", line_no, path, tz),
        "instrument": df["instrument"].str.strip(),
        "contract": df["contract"].str.strip(),
        "price": price,
        "volume": volume,
    })


def write_ticks_csv(ticks: pd.DataFrame, path) -> None:
    lines = [",".join(TICK_COLUMNS)]
    stamps = format_timestamps(ticks["timestamp"])
    for s, inst, con, p, v in zip(stamps, ticks["instrument"], ticks["contract"],
                                  ticks["price"].to_numpy(float).tolist(),
                                  ticks["volume"].to_numpy().tolist()):
        lines.append(f"{s},{inst},{con},{p!r},{v}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_bars_csv(path) -> list[Bar]:
    df, line_no, tz, path = _read_table(path, BAR_COLUMNS)
    starts = _timestamps(df, "interval_start", line_no, path, tz)
    secs = _numbers(df, "interval_seconds", line_no, path, integer=True)
    _fail_first(secs <= 0, line_no, path, "non-positive interval_seconds",
                df["interval_seconds"].to_numpy())
    ohlc = {c: _numbers(df, c, line_no, path) for c in ("open", "high", "low", "close")}
    vol = _numbers(df, "volume", line_no, path, integer=True)
    ticks = _numbers(df, "tick_count", line_no, path, integer=True)
    columns = zip(df["instrument"].str.strip(), df["contract"].str.strip(),
                  pd.DatetimeIndex(starts).to_pydatetime(), secs.tolist(), ohlc["open"].tolist(),
                  ohlc["high"].tolist(), ohlc["low"].tolist(), ohlc["close"].tolist(),
                  vol.tolist(), ticks.tolist())
    bars = []
    for k, (inst, con, start, sec, o, h, lo, c, v, n) in enumerate(columns):
        try:
            bars.append(Bar(inst, con, start, timedelta(seconds=sec), o, h, lo, c, v, n))
        except ValueError as exc:
            raise ParseError(str(exc), path, int(line_no[k])) from None
    return bars


def write_bars_csv(bars, path) -> None:
    lines = [",".join(BAR_COLUMNS)]
    stamps = format_timestamps([b.interval_start for b in bars]) if bars else []
    for s, b in zip(stamps, bars):
        secs = b.interval_length.total_seconds()
        prices = ",".join(repr(float(v)) for v in (b.open, b.high, b.low, b.close))
        lines.append(f"{s},{int(secs)},{b.instrument_id},{b.contract_id},{prices},"
                     f"{int(b.volume)},{int(b.tick_count)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_calendar_csv(path) -> list[tuple]:
    df, line_no, tz, path = _read_table(path, CALENDAR_COLUMNS)
    stamps = _timestamps(df, "switch_timestamp", line_no, path, tz)
    return [(i.strip(), s.to_pydatetime()) for i, s in zip(df["instrument"], stamps)]


def write_calendar_csv(calendar, path) -> None:
    lines = [",".join(CALENDAR_COLUMNS)]
    stamps = format_timestamps([s for _, s in calendar]) if calendar else []
    lines += [f"{i},{s}" for (i, _), s in zip(calendar, stamps)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def fmt(value) -> str:
    """Full-precision CSV cell."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return repr(v) if math.isfinite(v) else str(v)
    return str(value)


def rows_to_csv(header, rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"
