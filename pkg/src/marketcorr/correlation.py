"""Lagged two-point correlation functions of aligned return panels.

For columns ``x1`` and ``x2`` and a signed lag ``d`` (in panel rows)::

    c(d | x1, x2) = mean over t of x1[t + d] * x2[t]
    C(d | x1, x2) = c(d | x1, x2) / sqrt(E[x1**2] * E[x2**2])

Neither the products nor the second moments are mean-subtracted, so a drift
in a series shows up as autocorrelation. With uncentered second moments
Cauchy-Schwarz keeps ``|C| <= 1`` at lag 0; at lag ``d`` the product mean
runs over ``n - |d|`` pairs while the moments use all ``n`` rows, so the
bound loosens to ``n / (n - |d|)``.

Positive ``d`` means the ``x1`` datum is taken ``d`` rows after the ``x2``
datum. ``C(d | x1, x2)`` and ``C(-d | x2, x1)`` traverse the same pairs and
are computed by the same call, so they agree bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import DegenerateSeriesError, InsufficientDataError
from .marketdata import AlignedPanel


@dataclass(frozen=True)
class LagCorrelation:
    lag: int
    raw_value: float
    normalized_value: float
    std_error: float
    pair_count: int

    @property
    def significance(self) -> float:
        return self.normalized_value / self.std_error


@dataclass(frozen=True)
class CorrelationFunction:
    leader_id: str
    follower_id: str
    lags: tuple
    window: tuple = (None, None)
    panel_hash: str = ""

    def __getitem__(self, lag: int) -> LagCorrelation:
        for lc in self.lags:
            if lc.lag == lag:
                return lc
        raise KeyError(lag)

    @property
    def lag_values(self) -> np.ndarray:
        return np.array([lc.lag for lc in self.lags])

    @property
    def normalized(self) -> np.ndarray:
        return np.array([lc.normalized_value for lc in self.lags])

    @property
    def std_errors(self) -> np.ndarray:
        return np.array([lc.std_error for lc in self.lags])

    def to_csv(self) -> str:
        lines = ["lag,raw,normalized,std_error,pair_count"]
        for lc in self.lags:
            lines.append(f"{lc.lag},{lc.raw_value!r},{lc.normalized_value!r},"
                         f"{lc.std_error!r},{lc.pair_count}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "leader_id": self.leader_id,
            "follower_id": self.follower_id,
            "window": [None if w is None else str(w) for w in self.window],
            "panel_hash": self.panel_hash,
            "lags": [asdict(lc) for lc in self.lags],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _columns(panel, i, j):
    if isinstance(panel, AlignedPanel):
        return panel.column(i), panel.column(j)
    x = np.asarray(panel, dtype=float)
    return x[:, i], x[:, j]


def _lagged_sum(x1: np.ndarray, x2: np.ndarray, lag: int) -> tuple[float, int]:
    n = x1.shape[0]
    if abs(lag) >= n:
        raise InsufficientDataError(f"lag {lag} needs more than {n} rows")
    # Always dot(later, earlier) so that (x1, x2, d) and (x2, x1, -d) match exactly.
    if lag >= 0:
        later, earlier = x1[lag:], x2[:n - lag]
    else:
        later, earlier = x2[-lag:], x1[:n + lag]
    return float(np.dot(later, earlier)), n - abs(lag)


def second_moment(x: np.ndarray) -> float:
    """Uncentered second moment, the normalizer used for every coefficient."""
    x = np.asarray(x, dtype=float)
    return float(np.dot(x, x)) / x.shape[0]


def raw_correlation(panel, i, j, lag: int) -> tuple[float, int]:
    """Return ``(c(lag | x_i, x_j), pair_count)``."""
    x1, x2 = _columns(panel, i, j)
    total, count = _lagged_sum(x1, x2, int(lag))
    return total / count, count


def _normalizer(panel, x1, x2, i, j) -> float:
    m1, m2 = second_moment(x1), second_moment(x2)
    for m, key in ((m1, i), (m2, j)):
        if not m > 0:
            name = panel.instrument_ids[panel.column_index(key)] if isinstance(
                panel, AlignedPanel) else key
            raise DegenerateSeriesError(f"series {name!r} has zero second moment",
                                        instrument=name)
    # split root: m1 * m2 can underflow when both moments are tiny
    return math.sqrt(m1) * math.sqrt(m2)


def normalized_correlation(panel, i, j, lag: int) -> LagCorrelation:
    """Lagged correlation coefficient with its null-hypothesis standard error.

    The standard error is ``1 / sqrt(pair_count)``, the spread of the
    coefficient for independent series with no serial correlation.
    """
    x1, x2 = _columns(panel, i, j)
    norm = _normalizer(panel, x1, x2, i, j)
    total, count = _lagged_sum(x1, x2, int(lag))
    raw = total / count
    return LagCorrelation(int(lag), raw, raw / norm, 1.0 / math.sqrt(count), count)


def correlation_function(panel, i, j, max_lag: int) -> CorrelationFunction:
    """Coefficients for every lag in ``-max_lag .. +max_lag``."""
    if max_lag < 1:
        raise ValueError(f"max_lag must be >= 1, got {max_lag}")
    x1, x2 = _columns(panel, i, j)
    n = x1.shape[0]
    if n <= 2 * max_lag:
        raise InsufficientDataError(f"{n} rows are too few for max_lag={max_lag}")
    norm = _normalizer(panel, x1, x2, i, j)
    lags = []
    for d in range(-max_lag, max_lag + 1):
        total, count = _lagged_sum(x1, x2, d)
        raw = total / count
        lags.append(LagCorrelation(d, raw, raw / norm, 1.0 / math.sqrt(count), count))
    if isinstance(panel, AlignedPanel):
        names = (panel.instrument_ids[panel.column_index(i)],
                 panel.instrument_ids[panel.column_index(j)])
        window = (panel.timestamps[0], panel.timestamps[-1])
        digest = panel.content_hash()
    else:
        names, window, digest = (str(i), str(j)), (None, None), ""
    return CorrelationFunction(names[0], names[1], tuple(lags), window, digest)


def lag_matrix(panel, lag: int) -> tuple[np.ndarray, np.ndarray]:
    """All ordered pairs at one lag: ``C[a, b] = C(lag | x_a, x_b)`` and errors."""
    x = panel.returns if isinstance(panel, AlignedPanel) else np.asarray(panel, float)
    n_cols = x.shape[1]
    coef = np.empty((n_cols, n_cols))
    err = np.empty((n_cols, n_cols))
    for a in range(n_cols):
        for b in range(n_cols):
            lc = normalized_correlation(panel, a, b, lag)
            coef[a, b] = lc.normalized_value
            err[a, b] = lc.std_error
    return coef, err

