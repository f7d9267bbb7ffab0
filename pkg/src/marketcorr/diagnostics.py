"""Leader-follower tables, windowed coefficient histories and the CBPI.

The Correlation-Based Predictability Index (CBPI) of a panel is the mean of
``|C(lag | x_i, x_j)|`` over all ordered column pairs including ``i == j``.
Its null benchmark CBPI0 is the mean of a half-normal distribution whose
sigma is the typical measurement error of one coefficient,
``mean_sigma * sqrt(2 / pi)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from datetime import datetime

import numpy as np
import pandas as pd

from .correlation import normalized_correlation
from .exceptions import (
    DegenerateSeriesError,
    InsufficientDataError,
    ValidationError,
)
from .marketdata import UTC, AlignedPanel
from .special import chi2_sf

HALF_NORMAL_MEAN = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class LeaderFollowerEntry:
    leader_id: str
    follower_id: str
    lag: int
    significance: float
    coefficient: float
    sign_type: str


@dataclass(frozen=True)
class ConstancyFit:
    values: tuple
    errors: tuple
    p0: float
    p0_error: float
    chi2: float
    degrees_of_freedom: int
    p_value: float

    @property
    def chi2_per_dof(self) -> float:
        return self.chi2 / self.degrees_of_freedom


@dataclass(frozen=True)
class CbpiReport:
    window: tuple
    cbpi: float
    cbpi0: float
    coefficient_count: int
    components: tuple
    mean_sigma: float
    row_count: int = 0
    low_statistics: bool = False

    @property
    def excess(self) -> float:
        return self.cbpi - self.cbpi0


@dataclass(frozen=True)
class CoefficientHistory:
    leader_id: str
    follower_id: str
    lag: int
    windows: tuple
    values: tuple
    errors: tuple
    pair_counts: tuple
    skipped: tuple = field(default=())

    def fit(self) -> ConstancyFit:
        return fit_constant(self.values, self.errors)


def _as_panel(panel) -> AlignedPanel:
    return panel if isinstance(panel, AlignedPanel) else AlignedPanel.from_array(panel)


def leader_follower_table(panel, lag=1, threshold=3.0,
                          include_autocorrelation=False) -> list[LeaderFollowerEntry]:
    """Significant lagged effects for every ordered (leader, follower) pair.

    The effect of leader A on follower B is ``C(lag | x_B, x_A)``: the
    follower's return is taken ``lag`` rows after the leader's. An entry is
    kept when ``|coefficient / std_error| > threshold``; a threshold of zero
    or less keeps every pair. ``sign_type`` is ``"tail"`` when the lagged
    coefficient has the sign of the zero-lag one, else ``"oscillating"``.
    """
    panel = _as_panel(panel)
    if panel.n_instruments < 2 and not include_autocorrelation:
        raise ValidationError("a leader-follower table needs at least two columns")
    out = []
    n = panel.n_instruments
    for a in range(n):
        for b in range(n):
            if a == b and not include_autocorrelation:
                continue
            lc = normalized_correlation(panel, b, a, lag)
            sig = lc.significance
            if threshold > 0 and not abs(sig) > threshold:
                continue
            zero = normalized_correlation(panel, b, a, 0).normalized_value
            same = math.copysign(1.0, lc.normalized_value) == math.copysign(1.0, zero)
            out.append(LeaderFollowerEntry(panel.instrument_ids[a], panel.instrument_ids[b],
                                           lag, sig, lc.normalized_value,
                                           "tail" if same else "oscillating"))
    return out


def fit_constant(values, errors) -> ConstancyFit:
    """Inverse-variance weighted constant fit with chi-square goodness of fit."""
    v = np.asarray(values, dtype=float)
    e = np.asarray(errors, dtype=float)
    if v.shape != e.shape or v.ndim != 1:
        raise ValidationError("values and errors must be 1-d and of equal length")
    if v.size < 2:
        raise InsufficientDataError(f"need at least 2 values, got {v.size}")
    if not np.all(e > 0):
        raise ValidationError("all errors must be positive")
    w = 1.0 / e ** 2
    p0 = float(np.sum(w * v) / np.sum(w))
    chi2 = float(np.sum(((v - p0) / e) ** 2))
    dof = v.size - 1
    return ConstancyFit(tuple(v.tolist()), tuple(e.tolist()), p0,
                        float(1.0 / math.sqrt(np.sum(w))), chi2, dof, chi2_sf(chi2, dof))


def windowed_coefficient_history(panel, i, j, lag, windows) -> CoefficientHistory:
    """Per-window ``C(lag | x_i, x_j)`` with its standard error.

    Each window ``(start, end)`` selects rows with ``start <= t < end``; the
    coefficient, its normalizers and its lag offsets are all computed from
    those rows alone. Windows too short for the lag are skipped with a
    warning and listed in ``skipped``.
    """
    panel = _as_panel(panel)
    ci, cj = panel.column_index(i), panel.column_index(j)
    kept, values, errors, counts, skipped = [], [], [], [], []
    for w in windows:
        sub = panel.select(*w)
        if sub.n_rows < 2 or sub.n_rows <= abs(lag):
            warnings.warn(f"window {w} has {sub.n_rows} rows; skipped", stacklevel=2)
            skipped.append(w)
            continue
        lc = normalized_correlation(sub, ci, cj, lag)
        kept.append(w)
        values.append(lc.normalized_value)
        errors.append(lc.std_error)
        counts.append(lc.pair_count)
    return CoefficientHistory(panel.instrument_ids[ci], panel.instrument_ids[cj], lag,
                              tuple(kept), tuple(values), tuple(errors), tuple(counts),
                              tuple(skipped))


def yearly_windows(panel: AlignedPanel, count=None, start=None) -> list[tuple]:
    """Consecutive one-year windows from ``start`` (default: first panel row)."""
    t0 = pd.Timestamp(start if start is not None else panel.timestamps[0])
    t0 = t0.tz_localize(UTC) if t0.tzinfo is None else t0.tz_convert(UTC)
    last = pd.Timestamp(panel.timestamps[-1]).tz_localize(UTC)
    out = []
    k = 0
    while count is None or k < count:
        a = t0 + pd.DateOffset(years=k)
        if count is None and a > last:
            break
        out.append((a.to_pydatetime(), (a + pd.DateOffset(years=1)).to_pydatetime()))
        k += 1
    return out


def calendar_windows(panel: AlignedPanel, bucket="month") -> list[tuple]:
    """Disjoint calendar buckets (``"month"``, ``"year"`` or ``"day"``) covering the panel."""
    freq = {"month": "M", "year": "Y", "day": "D"}[bucket]
    ts = pd.DatetimeIndex(panel.timestamps.astype("datetime64[ns]"))
    periods = ts.to_period(freq).unique()
    return [(p.start_time.tz_localize(UTC).to_pydatetime(),
             (p + 1).start_time.tz_localize(UTC).to_pydatetime()) for p in periods]


def cbpi(panel, lag=1) -> CbpiReport:
    """Mean absolute lagged coefficient over all ``N**2`` ordered combinations."""
    panel = _as_panel(panel)
    n = panel.n_instruments
    components = []
    for a in range(n):
        for b in range(n):
            try:
                lc = normalized_correlation(panel, a, b, lag)
            except DegenerateSeriesError as exc:
                raise DegenerateSeriesError(
                    f"CBPI undefined: {exc}", instrument=exc.instrument) from exc
            components.append((panel.instrument_ids[a], panel.instrument_ids[b],
                               abs(lc.normalized_value), lc.std_error))
    absvals = np.array([c[2] for c in components])
    sigmas = np.array([c[3] for c in components])
    mean_sigma = float(np.mean(sigmas))
    window = (panel.timestamps[0], panel.timestamps[-1]) if panel.n_rows else (None, None)
    return CbpiReport(window, float(np.mean(absvals)), mean_sigma * HALF_NORMAL_MEAN,
                      len(components), tuple(components), mean_sigma, panel.n_rows)


def cbpi_history(panel, bucket="month", lag=1, min_rows=50) -> list[CbpiReport]:
    """One CBPI report per disjoint calendar bucket.

    Buckets with fewer than ``min_rows`` rows are still reported but flagged
    ``low_statistics``; buckets too short for the lag, or with a constant
    column, are skipped with a warning.
    """
    panel = _as_panel(panel)
    out = []
    for start, end in calendar_windows(panel, bucket):
        sub = panel.select(start, end)
        if sub.n_rows <= max(lag, 1):
            warnings.warn(f"bucket starting {start} has {sub.n_rows} rows; skipped",
                          stacklevel=2)
            continue
        try:
            rep = cbpi(sub, lag)
        except DegenerateSeriesError as exc:
            warnings.warn(f"bucket starting {start} skipped: {exc}", stacklevel=2)
            continue
        out.append(CbpiReport((start, end), rep.cbpi, rep.cbpi0, rep.coefficient_count,
                              rep.components, rep.mean_sigma, rep.row_count,
                              rep.row_count < min_rows))
    return out


def render_table(entries, instrument_ids, digits=3) -> str:
    """Leaders as rows, followers as columns; blank where nothing passed the threshold."""
    cells = {(e.leader_id, e.follower_id): e.significance for e in entries}
    ids = list(instrument_ids)
    width = max(8, *(len(i) + 2 for i in ids))
    head = "leader \\ follower".ljust(width + 10) + "".join(i.rjust(width) for i in ids)
    lines = [head]
    for a in ids:
        row = a.ljust(width + 10)
        for b in ids:
            v = cells.get((a, b))
            row += ("" if v is None else f"{v:.{digits}g}").rjust(width)
        lines.append(row)
    return "\n".join(lines) + "\n"


def _window_label(w):
    if isinstance(w, datetime):
        return w.isoformat()
    if isinstance(w, np.datetime64):
        return pd.Timestamp(w).tz_localize(UTC).isoformat()
    return "" if w is None else str(w)
