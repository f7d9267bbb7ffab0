"""scikit-learn style estimators over the functional core.

Each estimator takes its configuration in ``__init__`` (so ``get_params`` /
``set_params`` / ``clone`` work) and learns ``*_`` attributes in ``fit``.
Panels may be given as an :class:`AlignedPanel`, a DataFrame (a
DatetimeIndex is kept as timestamps, columns as instrument ids) or any
2-d array-like.
"""

from __future__ import annotations

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import correlation, diagnostics, tails
from .marketdata import AlignedPanel, Bar, aggregate_ticks, build_panel


def check_panel(X, min_rows=2) -> AlignedPanel:
    """Validate ``X`` and return it as an :class:`AlignedPanel`."""
    if isinstance(X, AlignedPanel):
        if X.n_rows < min_rows:
            raise ValueError(f"panel has {X.n_rows} rows, need at least {min_rows}")
        return X
    timestamps = None
    ids = None
    if isinstance(X, pd.DataFrame):
        ids = [str(c) for c in X.columns]
        if isinstance(X.index, pd.DatetimeIndex):
            idx = X.index
            if idx.tz is not None:
                idx = idx.tz_convert("UTC").tz_localize(None)
            timestamps = idx.to_numpy().astype("datetime64[ms]")
    values = check_array(X, dtype=np.float64, ensure_min_samples=min_rows,
                         ensure_2d=False)
    return AlignedPanel.from_array(values, ids, timestamps)


def bars_to_frame(bars) -> pd.DataFrame:
    cols = ["instrument", "contract", "interval_start", "interval_seconds", "open",
            "high", "low", "close", "volume", "tick_count"]
    return pd.DataFrame(
        [(b.instrument_id, b.contract_id, b.interval_start,
          int(b.interval_length.total_seconds()), b.open, b.high, b.low, b.close,
          b.volume, b.tick_count) for b in bars], columns=cols)


class BarAggregator(TransformerMixin, BaseEstimator):
    """Ticks (frame with tick-CSV columns) to a frame of OHLCV bars."""

    def __init__(self, interval="1h", as_frame=True):
        self.interval = interval
        self.as_frame = as_frame

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        bars = aggregate_ticks(X, pd.Timedelta(self.interval).to_pytimedelta())
        return bars_to_frame(bars) if self.as_frame else bars


class ReturnPanelBuilder(TransformerMixin, BaseEstimator):
    """Bars to an aligned frame of log-returns (rows: close times, columns: instruments)."""

    def __init__(self, rollover_calendar=(), instruments=None, window=None,
                 max_delta_t=None):
        self.rollover_calendar = rollover_calendar
        self.instruments = instruments
        self.window = window
        self.max_delta_t = max_delta_t

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        if isinstance(X, pd.DataFrame):
            X = [Bar(r.instrument, r.contract, r.interval_start,
                     pd.Timedelta(seconds=int(r.interval_seconds)).to_pytimedelta(),
                     r.open, r.high, r.low, r.close, int(r.volume), int(r.tick_count))
                 for r in X.itertuples(index=False)]
        max_dt = None if self.max_delta_t is None else pd.Timedelta(self.max_delta_t)
        panel = build_panel(X, self.rollover_calendar or (), self.window,
                            self.instruments, max_dt)
        self.dropped_count_ = panel.dropped_count
        return panel.to_frame()


class LaggedCorrelation(BaseEstimator):
    """Lagged correlation matrices for lags ``-max_lag .. max_lag``.

    After fitting, ``coef_[k, i, j]`` is ``C(lags_[k] | x_i, x_j)`` and
    ``std_error_[k]`` its standard error (the same for every pair at a lag).
    """

    def __init__(self, max_lag=12):
        self.max_lag = max_lag

    def fit(self, X, y=None):
        panel = check_panel(X, min_rows=2 * self.max_lag + 1)
        self.panel_ = panel
        self.feature_names_in_ = np.array(panel.instrument_ids, dtype=object)
        self.n_features_in_ = panel.n_instruments
        self.lags_ = np.arange(-self.max_lag, self.max_lag + 1)
        n = panel.n_instruments
        self.coef_ = np.empty((self.lags_.size, n, n))
        self.raw_ = np.empty_like(self.coef_)
        self.std_error_ = np.empty(self.lags_.size)
        self.pair_count_ = np.empty(self.lags_.size, dtype=int)
        for i in range(n):
            for j in range(n):
                f = correlation.correlation_function(panel, i, j, self.max_lag)
                self.coef_[:, i, j] = f.normalized
                self.raw_[:, i, j] = [lc.raw_value for lc in f.lags]
                self.std_error_[:] = f.std_errors
                self.pair_count_[:] = [lc.pair_count for lc in f.lags]
        return self

    def function(self, i, j) -> correlation.CorrelationFunction:
        check_is_fitted(self, "coef_")
        return correlation.correlation_function(self.panel_, i, j, self.max_lag)

    def significance(self):
        check_is_fitted(self, "coef_")
        return self.coef_ / self.std_error_[:, None, None]


class LeaderFollowerDetector(BaseEstimator):
    """Significant lag-``lag`` effects; ``significance_[a, b]`` is leader a on follower b."""

    def __init__(self, lag=1, threshold=3.0, include_autocorrelation=False):
        self.lag = lag
        self.threshold = threshold
        self.include_autocorrelation = include_autocorrelation

    def fit(self, X, y=None):
        panel = check_panel(X, min_rows=self.lag + 2)
        self.feature_names_in_ = np.array(panel.instrument_ids, dtype=object)
        self.n_features_in_ = panel.n_instruments
        coef, err = correlation.lag_matrix(panel, self.lag)
        # lag_matrix indexes [follower, leader]
        self.coefficient_ = coef.T
        self.significance_ = (coef / err).T
        self.entries_ = diagnostics.leader_follower_table(
            panel, self.lag, self.threshold, self.include_autocorrelation)
        return self

    def render(self) -> str:
        check_is_fitted(self, "entries_")
        return diagnostics.render_table(self.entries_, self.feature_names_in_)


class PredictabilityIndex(BaseEstimator):
    """CBPI of a panel, optionally as a calendar-bucketed history."""

    def __init__(self, lag=1, bucket=None, min_rows=50):
        self.lag = lag
        self.bucket = bucket
        self.min_rows = min_rows

    def fit(self, X, y=None):
        panel = check_panel(X, min_rows=self.lag + 2)
        self.feature_names_in_ = np.array(panel.instrument_ids, dtype=object)
        self.n_features_in_ = panel.n_instruments
        self.report_ = diagnostics.cbpi(panel, self.lag)
        self.cbpi_ = self.report_.cbpi
        self.cbpi0_ = self.report_.cbpi0
        if self.bucket is not None:
            self.history_ = diagnostics.cbpi_history(panel, self.bucket, self.lag,
                                                     self.min_rows)
        return self

    def score(self, X, y=None) -> float:
        """CBPI of ``X`` in excess of its own null benchmark."""
        return diagnostics.cbpi(check_panel(X, self.lag + 2), self.lag).excess


class PowerLawTail(BaseEstimator):
    """Histogram one tail of a return sample and fit ``p0 * x**p1`` to it."""

    def __init__(self, side="positive", bins=20, bin_range=None, fit_range=None,
                 min_samples=100):
        self.side = side
        self.bins = bins
        self.bin_range = bin_range
        self.fit_range = fit_range
        self.min_samples = min_samples

    def fit(self, X, y=None):
        x = check_array(np.asarray(X, dtype=float).reshape(-1, 1), dtype=np.float64,
                        ensure_min_samples=1).ravel()
        self.histogram_ = tails.tail_histogram(x, self.side, self.bins, self.bin_range,
                                               self.min_samples)
        self.fit_ = tails.fit_power_law(self.histogram_, self.fit_range)
        self.p0_ = self.fit_.p0
        self.p1_ = self.fit_.p1
        self.max_moment_ = tails.max_convergent_moment(self.fit_)
        return self

    def predict(self, X):
        """Fitted density at ``|X|``."""
        check_is_fitted(self, "fit_")
        return self.fit_.density(np.abs(np.asarray(X, dtype=float)))
