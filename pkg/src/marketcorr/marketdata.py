"""Bar construction, log-returns and multi-instrument alignment.

Timestamps are UTC throughout. A bar is labelled by the start of its
interval; the return computed from two bars is labelled by the close time of
the later one (``interval_start + interval_length``).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .exceptions import (
    EmptyPanelError,
    InputError,
    OrderingError,
    ValidationError,
)

UTC = timezone.utc
HOUR = timedelta(hours=1)

TICK_COLUMNS = ["timestamp", "instrument", "contract", "price", "volume"]


def to_utc(ts) -> datetime:
    """Coerce a datetime-like value to an aware UTC ``datetime``.

    Naive values are taken to be UTC already.
    """
    if type(ts) is datetime and ts.tzinfo is UTC:
        return ts
    ts = pd.Timestamp(ts)
    if ts.tzinfo is None:
        ts = ts.tz_localize(UTC)
    else:
        ts = ts.tz_convert(UTC)
    return ts.to_pydatetime()


def _to_ms(ts) -> int:
    return int(pd.Timestamp(to_utc(ts)).value // 1_000_000)


def _interval_ms(interval) -> int:
    ms = int(pd.Timedelta(interval).value // 1_000_000)
    if ms <= 0:
        raise ValidationError(f"bar interval must be positive, got {interval!r}")
    return ms


@dataclass(frozen=True)
class Tick:
    timestamp: datetime
    price: float
    volume: int
    instrument_id: str
    contract_id: str

    def __post_init__(self):
        object.__setattr__(self, "timestamp", to_utc(self.timestamp))
        if not self.price > 0:
            raise ValidationError(f"tick price must be positive, got {self.price!r}")
        if self.volume < 0:
            raise ValidationError(f"tick volume must be non-negative, got {self.volume!r}")


@dataclass(frozen=True)
class Bar:
    instrument_id: str
    contract_id: str
    interval_start: datetime
    interval_length: timedelta
    open: float
    high: float
    low: float
    close: float
    volume: int
    tick_count: int

    def __post_init__(self):
        object.__setattr__(self, "interval_start", to_utc(self.interval_start))
        if min(self.open, self.high, self.low, self.close) <= 0:
            raise ValidationError(f"bar prices must be positive: {self}")
        if not (self.low <= min(self.open, self.close)
                and max(self.open, self.close) <= self.high):
            raise ValidationError(f"inconsistent OHLC: {self}")
        if self.tick_count < 1 or self.volume < 0:
            raise ValidationError(f"bar needs at least one tick: {self}")

    @property
    def close_time(self) -> datetime:
        return self.interval_start + self.interval_length


@dataclass(frozen=True)
class ReturnObservation:
    instrument_id: str
    timestamp: datetime
    log_return: float
    delta_t: timedelta
    rollover_affected: bool = False

    def __post_init__(self):
        if not math.isfinite(self.log_return):
            raise ValidationError(f"non-finite log return at {self.timestamp}")
        if self.delta_t <= timedelta(0):
            raise ValidationError(f"delta_t must be positive at {self.timestamp}")


@dataclass(frozen=True, eq=False)
class AlignedPanel:
    """Simultaneous returns of several instruments.

    ``returns[t, k]`` is the log-return of ``instrument_ids[k]`` for the bar
    closing at ``timestamps[t]``. Every row is complete; rows where any
    instrument lacked a valid return were removed during alignment.
    """

    instrument_ids: tuple
    timestamps: np.ndarray
    returns: np.ndarray
    source_window: tuple = (None, None)
    dropped_count: int = 0

    def __post_init__(self):
        ids = tuple(str(i) for i in self.instrument_ids)
        ts = np.asarray(self.timestamps, dtype="datetime64[ms]")
        x = np.array(self.returns, dtype=float, copy=True)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[1] != len(ids):
            raise ValidationError(
                f"returns shape {x.shape} does not match {len(ids)} instruments")
        if len(set(ids)) != len(ids):
            raise ValidationError(f"duplicate instrument ids: {ids}")
        if ts.shape != (x.shape[0],):
            raise ValidationError("timestamps and returns have different lengths")
        if ts.size > 1 and not np.all(ts[1:] > ts[:-1]):
            raise ValidationError("panel timestamps must be strictly increasing")
        if not np.all(np.isfinite(x)):
            raise ValidationError("panel contains non-finite returns")
        x.setflags(write=False)
        ts.setflags(write=False)
        object.__setattr__(self, "instrument_ids", ids)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "returns", x)

    @classmethod
    def from_array(cls, returns, instrument_ids=None, timestamps=None,
                   start="2009-02-01T00:00:00", step=HOUR):
        """Wrap a plain ``(T, N)`` array, inventing evenly spaced timestamps if needed."""
        x = np.asarray(returns, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if instrument_ids is None:
            instrument_ids = [f"x{k}" for k in range(x.shape[1])]
        if timestamps is None:
            t0 = np.datetime64(pd.Timestamp(start).tz_localize(None), "ms")
            timestamps = t0 + np.arange(x.shape[0]) * np.timedelta64(
                int(pd.Timedelta(step).value // 1_000_000), "ms")
        return cls(tuple(instrument_ids), timestamps, x)

    @property
    def n_rows(self) -> int:
        return self.returns.shape[0]

    @property
    def n_instruments(self) -> int:
        return self.returns.shape[1]

    def __len__(self):
        return self.n_rows

    def column_index(self, key) -> int:
        if isinstance(key, (int, np.integer)):
            if not 0 <= key < self.n_instruments:
                raise IndexError(f"column {key} out of range")
            return int(key)
        try:
            return self.instrument_ids.index(str(key))
        except ValueError:
            raise KeyError(f"unknown instrument {key!r}; have {self.instrument_ids}") from None

    def column(self, key) -> np.ndarray:
        return self.returns[:, self.column_index(key)]

    def select(self, start=None, end=None) -> "AlignedPanel":
        """Rows with ``start <= timestamp < end``."""
        mask = np.ones(self.n_rows, dtype=bool)
        if start is not None:
            mask &= self.timestamps >= _as_dt64(start)
        if end is not None:
            mask &= self.timestamps < _as_dt64(end)
        return AlignedPanel(self.instrument_ids, self.timestamps[mask],
                            self.returns[mask], (start, end), 0)

    def subset(self, keys) -> "AlignedPanel":
        idx = [self.column_index(k) for k in keys]
        return AlignedPanel(tuple(self.instrument_ids[k] for k in idx),
                            self.timestamps, self.returns[:, idx],
                            self.source_window, self.dropped_count)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update("\x1f".join(self.instrument_ids).encode())
        h.update(self.timestamps.astype("int64").tobytes())
        h.update(np.ascontiguousarray(self.returns).tobytes())
        return h.hexdigest()

    def to_frame(self) -> pd.DataFrame:
        index = pd.DatetimeIndex(self.timestamps.astype("datetime64[ns]"),
                                 name="timestamp").tz_localize(UTC)
        return pd.DataFrame(np.array(self.returns), index=index,
                            columns=list(self.instrument_ids))


def _as_dt64(ts) -> np.datetime64:
    if isinstance(ts, np.datetime64):
        return ts.astype("datetime64[ms]")
    if type(ts) is datetime and ts.tzinfo is UTC:
        return np.datetime64(ts.replace(tzinfo=None), "ms")
    return np.datetime64(pd.Timestamp(to_utc(ts)).tz_localize(None), "ms")


# -- ticks -> bars -----------------------------------------------------------

def ticks_to_frame(ticks) -> pd.DataFrame:
    """Normalize a tick iterable or frame to columns ``TICK_COLUMNS``."""
    if isinstance(ticks, pd.DataFrame):
        df = ticks.loc[:, TICK_COLUMNS].copy()
        df["timestamp"] = pd.to_datetime(df["timestamp"], utc=True)
        return df
    rows = [(t.timestamp, t.instrument_id, t.contract_id, t.price, t.volume)
            for t in ticks]
    df = pd.DataFrame(rows, columns=TICK_COLUMNS)
    df["timestamp"] = pd.to_datetime(df["timestamp"], utc=True)
    return df


def _check_tick_order(df: pd.DataFrame) -> None:
    ts = df["timestamp"].to_numpy(dtype="datetime64[ns]").view("int64")
    keys = pd.MultiIndex.from_arrays([df["instrument"], df["contract"]])
    codes, uniques = pd.factorize(keys)
    order = np.argsort(codes, kind="stable")
    c = codes[order]
    t = ts[order]
    bad = np.flatnonzero((c[1:] == c[:-1]) & (t[1:] < t[:-1]))
    if bad.size:
        k = bad[0]
        stamp = lambda v: pd.Timestamp(v, tz=UTC).isoformat()  # noqa: E731
        raise OrderingError(stamp(t[k]), stamp(t[k + 1]), key=uniques[c[k]])


def aggregate_ticks(ticks, interval=HOUR) -> list[Bar]:
    """Aggregate trades into OHLCV bars of fixed length.

    Intervals are aligned to the Unix epoch in UTC, so hourly bars start on
    the hour and daily bars at UTC midnight. A bar is produced only for
    intervals holding at least one tick. Ticks sharing a timestamp keep their
    arrival order, so the last one sets the close.
    """
    df = ticks_to_frame(ticks)
    if df.empty:
        return []
    price = df["price"].to_numpy(dtype=float)
    if not np.all(price > 0):
        k = int(np.flatnonzero(~(price > 0))[0])
        raise ValidationError(f"non-positive tick price {price[k]!r} at row {k}")
    if not np.all(df["volume"].to_numpy() >= 0):
        raise ValidationError("negative tick volume")
    _check_tick_order(df)

    step = _interval_ms(interval)
    ms = df["timestamp"].to_numpy(dtype="datetime64[ns]").view("int64") // 1_000_000
    df["bucket"] = (ms // step) * step
    g = df.groupby(["instrument", "contract", "bucket"], sort=False)["price"]
    out = pd.DataFrame({
        "open": g.first(), "high": g.max(), "low": g.min(), "close": g.last(),
        "tick_count": g.size(),
    })
    out["volume"] = df.groupby(["instrument", "contract", "bucket"], sort=False)["volume"].sum()
    out = out.reset_index().sort_values(["instrument", "bucket", "contract"], kind="stable")

    length = pd.Timedelta(milliseconds=step).to_pytimedelta()
    starts = pd.to_datetime(out["bucket"].to_numpy(), unit="ms", utc=True)
    return [
        Bar(str(r.instrument), str(r.contract), s.to_pydatetime(), length,
            float(r.open), float(r.high), float(r.low), float(r.close),
            int(r.volume), int(r.tick_count))
        for r, s in zip(out.itertuples(index=False), starts)
    ]


# -- bars -> returns ---------------------------------------------------------

def _group_bars(bars: Iterable[Bar]) -> dict:
    groups: dict = {}
    for b in bars:
        groups.setdefault(b.instrument_id, []).append(b)
    return groups


def _front_bars(bars: list[Bar]) -> list[Bar]:
    """Drop same-interval duplicates, keeping the most traded contract."""
    out: list[Bar] = []
    for b in bars:
        if out and b.interval_start < out[-1].interval_start:
            raise OrderingError(out[-1].interval_start.isoformat(),
                                b.interval_start.isoformat(), key=b.instrument_id)
        if out and b.interval_start == out[-1].interval_start:
            if b.volume >= out[-1].volume:
                out[-1] = b
            continue
        out.append(b)
    return out


def compute_returns(bars: Sequence[Bar], rollover_calendar=(),
                    max_delta_t: timedelta | None = None) -> list[ReturnObservation]:
    """Close-to-close log-returns for each instrument in ``bars``.

    A return is flagged ``rollover_affected`` when its two bars belong to
    different contracts, or when a calendar switch for the instrument falls
    strictly after the start of the earlier bar and strictly before the end
    of the later one. Returns spanning more than ``max_delta_t`` are dropped.
    """
    switches: dict = {}
    for instrument, ts in rollover_calendar:
        switches.setdefault(str(instrument), []).append(_to_ms(ts))

    out: list[ReturnObservation] = []
    for instrument, group in _group_bars(bars).items():
        group = _front_bars(group)
        if len(group) < 2:
            continue
        close = np.array([b.close for b in group])
        if not np.all(close > 0):
            raise ValidationError(f"non-positive close for {instrument}")
        logp = np.log(close)
        sw = np.sort(np.array(switches.get(instrument, []), dtype=np.int64))
        for prev, cur, lp0, lp1 in zip(group[:-1], group[1:], logp[:-1], logp[1:]):
            dt = cur.close_time - prev.close_time
            if max_delta_t is not None and dt > max_delta_t:
                continue
            affected = prev.contract_id != cur.contract_id
            if not affected and sw.size:
                lo = _to_ms(prev.interval_start)
                hi = _to_ms(cur.close_time)
                k = np.searchsorted(sw, lo, side="right")
                affected = bool(k < sw.size and sw[k] < hi)
            out.append(ReturnObservation(instrument, cur.close_time,
                                         float(lp1 - lp0), dt, affected))
    return out


# -- alignment ---------------------------------------------------------------

def align_panel(series: Sequence[Sequence[ReturnObservation]], window=None) -> AlignedPanel:
    """Keep only timestamps where every instrument has a usable return.

    ``window`` is ``(start, end)`` with ``start <= t < end``; either side may
    be ``None``. The panel's ``dropped_count`` is the number of timestamps
    that carried a usable return for some but not all instruments.
    """
    if not series:
        raise InputError("align_panel needs at least one series")
    start, end = window if window is not None else (None, None)
    lo = _as_dt64(start) if start is not None else None
    hi = _as_dt64(end) if end is not None else None

    ids = []
    maps = []
    for obs in series:
        names = {o.instrument_id for o in obs}
        if len(names) > 1:
            raise InputError(f"series mixes instruments {sorted(names)}")
        if not names:
            raise EmptyPanelError("an input series has no observations")
        ids.append(names.pop())
        m = {}
        for o in obs:
            if o.rollover_affected:
                continue
            t = _as_dt64(o.timestamp)
            if (lo is not None and t < lo) or (hi is not None and t >= hi):
                continue
            if t in m:
                raise InputError(f"duplicate return timestamp {o.timestamp} for {ids[-1]}")
            m[t] = o.log_return
        maps.append(m)

    common = set(maps[0])
    union = set(maps[0])
    for m in maps[1:]:
        common &= set(m)
        union |= set(m)
    if not common:
        raise EmptyPanelError(f"empty panel: no timestamp shared by all of {ids}")
    ts = np.array(sorted(common), dtype="datetime64[ms]")
    x = np.array([[m[t] for m in maps] for t in ts])
    return AlignedPanel(tuple(ids), ts, x, (start, end), len(union) - len(common))


def build_panel(bars: Sequence[Bar], rollover_calendar=(), window=None,
                instruments=None, max_delta_t=None) -> AlignedPanel:
    """Bars of several instruments straight to an aligned panel."""
    obs = compute_returns(bars, rollover_calendar, max_delta_t=max_delta_t)
    by_inst: dict = {}
    for o in obs:
        by_inst.setdefault(o.instrument_id, []).append(o)
    names = list(instruments) if instruments is not None else sorted(
        {b.instrument_id for b in bars})
    missing = [n for n in names if n not in by_inst]
    if missing:
        raise EmptyPanelError(f"no returns for instruments {missing}")
    return align_panel([by_inst[n] for n in names], window)


# -- volume ------------------------------------------------------------------

_BUCKET_FREQ = {"year": "Y", "month": "M", "day": "D"}


def volume_profile(bars: Sequence[Bar], bucket: str = "year") -> list[tuple]:
    """Mean per-bar volume in each calendar bucket, as ``(bucket_start, mean)``."""
    if bucket not in _BUCKET_FREQ:
        raise InputError(f"bucket must be one of {sorted(_BUCKET_FREQ)}, got {bucket!r}")
    if not bars:
        return []
    starts = pd.DatetimeIndex([b.interval_start for b in bars]).tz_convert(UTC)
    vol = pd.Series([b.volume for b in bars], dtype=float)
    periods = starts.tz_localize(None).to_period(_BUCKET_FREQ[bucket])
    means = vol.groupby(np.asarray(periods)).mean().sort_index()
    return [(p.start_time.tz_localize(UTC).to_pydatetime(), float(v))
            for p, v in means.items()]
