"""Synthetic return panels and tail samples with known population properties.

Randomness comes from numpy's PCG64 bit generator. Only uniform doubles are
drawn from it; Gaussian variates use the Box-Muller transform and Student-t
variates the inverse CDF, so the number of uniforms consumed per draw is
fixed and outputs are reproducible from the seed alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import linalg, special

from .exceptions import ValidationError
from .marketdata import HOUR, AlignedPanel, Bar

PAPER_INSTRUMENTS = ("RI", "BR", "ED", "EU", "SI")

# (leader, follower, sign) for the one-hour effects of the paper-like preset.
PAPER_LINKS = (
    ("RI", "EU", -1.0), ("BR", "EU", -1.0), ("SI", "EU", 1.0),
    ("RI", "SI", -1.0), ("BR", "SI", -1.0), ("ED", "SI", -1.0),
)


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def standard_normal(rng: np.random.Generator, size) -> np.ndarray:
    """Box-Muller normals; consumes exactly one uniform per output value (rounded up to even)."""
    shape = (size,) if np.isscalar(size) else tuple(size)
    n = int(np.prod(shape))
    half = (n + 1) // 2
    u = rng.random((2, half))
    r = np.sqrt(-2.0 * np.log1p(-u[0]))
    theta = 2.0 * np.pi * u[1]
    z = np.empty(2 * half)
    z[0::2] = r * np.cos(theta)
    z[1::2] = r * np.sin(theta)
    return z[:n].reshape(shape)


@dataclass(frozen=True, eq=False)
class VarModel:
    """Stationary VAR(1): ``x(t) = phi @ x(t-1) + eps(t)`` with ``eps ~ N(0, sigma)``."""

    phi: np.ndarray
    sigma: np.ndarray
    seed: int = 0
    instrument_ids: tuple = field(default=())

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float)
        sigma = np.array(self.sigma, dtype=float)
        n = phi.shape[0]
        if phi.shape != (n, n) or sigma.shape != (n, n):
            raise ValidationError("phi and sigma must be square and of equal size")
        if not np.allclose(sigma, sigma.T, rtol=0, atol=1e-12):
            raise ValidationError("innovation covariance is not symmetric")
        try:
            np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError:
            raise ValidationError("innovation covariance is not positive definite") from None
        radius = float(np.max(np.abs(np.linalg.eigvals(phi)))) if n else 0.0
        if not radius < 1:
            raise ValidationError(f"VAR is not stationary: spectral radius {radius:.6g}")
        ids = tuple(self.instrument_ids) or tuple(f"x{k}" for k in range(n))
        if len(ids) != n:
            raise ValidationError("instrument_ids length does not match dimension")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "sigma", (sigma + sigma.T) / 2)
        object.__setattr__(self, "instrument_ids", ids)

    @property
    def dimension(self) -> int:
        return self.phi.shape[0]

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.phi))))

    @property
    def burn_in(self) -> int:
        # the tolerance keeps 10 / (1 - 0.9) at 100 despite rounding
        return math.ceil(10.0 / (1.0 - self.spectral_radius) - 1e-9)

    @classmethod
    def white_noise(cls, n, seed=0, instrument_ids=()):
        return cls(np.zeros((n, n)), np.eye(n), seed, instrument_ids)


def stationary_covariance(model: VarModel) -> np.ndarray:
    """Solve ``S = phi S phi' + sigma``."""
    s = linalg.solve_discrete_lyapunov(model.phi, model.sigma)
    return (s + s.T) / 2


def autocovariance(model: VarModel, max_lag: int) -> np.ndarray:
    """``g[h] = E[x(t+h) x(t)']`` for ``h = 0..max_lag``."""
    s = stationary_covariance(model)
    out = np.empty((max_lag + 1, model.dimension, model.dimension))
    out[0] = s
    for h in range(1, max_lag + 1):
        out[h] = model.phi @ out[h - 1]
    return out


def population_lag1_correlation(model: VarModel, i: int, j: int) -> float:
    """Population ``C(1 | x_i, x_j)``; zero means make centred and uncentred agree."""
    s = stationary_covariance(model)
    lag1 = model.phi @ s
    return float(lag1[i, j] / math.sqrt(s[i, i] * s[j, j]))


def population_lag1_matrix(model: VarModel) -> np.ndarray:
    s = stationary_covariance(model)
    d = np.sqrt(np.diag(s))
    return (model.phi @ s) / np.outer(d, d)


def lag1_asymptotic_std_error(model: VarModel, i: int, j: int, length: int) -> float:
    """Large-sample spread of the estimated ``C(1 | x_i, x_j)`` for a Gaussian VAR.

    Delta method on the lagged product mean and the two second moments, whose
    joint covariance follows from the model's autocovariances (Isserlis).
    Reduces to ``1/sqrt(length)`` for independent white noise.
    """
    rho = model.spectral_radius
    k_max = 5 if rho < 1e-12 else min(5000, int(math.log(1e-17) / math.log(rho)) + 5)
    g = autocovariance(model, k_max + 2)

    def gamma(a, b, h):
        h = np.asarray(h)
        pos = np.where(h >= 0, h, 0)
        neg = np.where(h < 0, -h, 0)
        inside = np.abs(h) <= k_max + 2
        val = np.where(h >= 0, g[np.minimum(pos, k_max + 2), a, b],
                       g[np.minimum(neg, k_max + 2), b, a])
        return np.where(inside, val, 0.0)

    stats = [(i, j, 1), (i, i, 0), (j, j, 0)]
    k = np.arange(-k_max, k_max + 1)
    v = np.empty((3, 3))
    for a, (p, q, u) in enumerate(stats):
        for b, (r, s_, w) in enumerate(stats):
            terms = (gamma(p, r, u - k - w) * gamma(q, s_, -k)
                     + gamma(p, s_, u - k) * gamma(q, r, -k - w))
            v[a, b] = terms.sum()
    s = g[0]
    mi, mj = s[i, i], s[j, j]
    c = g[1][i, j] / math.sqrt(mi * mj)
    grad = np.array([1.0 / math.sqrt(mi * mj), -c / (2 * mi), -c / (2 * mj)])
    return math.sqrt(max(grad @ v @ grad, 0.0) / length)


def hourly_timestamps(length, start="2009-02-01T00:00:00", step=HOUR) -> np.ndarray:
    """Evenly spaced bar close times."""
    t0 = np.datetime64(pd.Timestamp(start).tz_localize(None), "ms")
    step_ms = int(pd.Timedelta(step).value // 1_000_000)
    return t0 + np.arange(length) * np.timedelta64(step_ms, "ms")


def generate_var(model: VarModel, length: int, timestamps=None, coupling_scale=None,
                 stationary_init=False) -> AlignedPanel:
    """Draw ``length`` rows from ``model`` after discarding a burn-in.

    ``coupling_scale`` optionally multiplies ``phi`` row by row, giving a
    process whose lag-1 coupling varies in time (the burn-in uses the first
    value). With ``stationary_init`` the start state is drawn from the
    stationary distribution instead of running a burn-in.
    """
    if length < 100:
        raise ValidationError(f"length must be at least 100, got {length}")
    n = model.dimension
    rng = make_rng(model.seed)
    chol = np.linalg.cholesky(model.sigma)
    burn = 0 if stationary_init else model.burn_in
    x0 = np.zeros(n)
    if stationary_init:
        x0 = np.linalg.cholesky(stationary_covariance(model)) @ standard_normal(rng, n)
    eps = standard_normal(rng, (burn + length, n)) @ chol.T

    if coupling_scale is None:
        scale = np.ones(burn + length)
    else:
        scale = np.asarray(coupling_scale, dtype=float)
        if scale.shape != (length,):
            raise ValidationError("coupling_scale must have one value per row")
        scale = np.concatenate([np.full(burn, scale[0]), scale])

    if not np.any(model.phi):
        out = eps
    else:
        out = np.empty_like(eps)
        phi = model.phi
        prev = x0
        for t in range(burn + length):
            prev = scale[t] * (phi @ prev) + eps[t]
            out[t] = prev
    if timestamps is None:
        timestamps = hourly_timestamps(length)
    return AlignedPanel(model.instrument_ids, timestamps, out[burn:])


def random_var_model(n, rng: np.random.Generator, max_radius=0.9, seed=0) -> VarModel:
    """Random stationary model with spectral radius uniform in ``[0, max_radius]``."""
    phi = standard_normal(rng, (n, n))
    radius = float(np.max(np.abs(np.linalg.eigvals(phi))))
    phi *= rng.random() * max_radius / radius
    b = standard_normal(rng, (n, n))
    sigma = b @ b.T / n + 0.5 * np.eye(n)
    return VarModel(phi, sigma, seed)


def planted_pair_model(n, leader, follower, strength, seed=0, instrument_ids=()) -> VarModel:
    """White noise except ``follower(t) = phi * leader(t-1) + eps``.

    ``phi`` is set so the population ``C(1 | follower, leader)`` equals
    ``strength``.
    """
    phi = np.zeros((n, n))
    phi[follower, leader] = strength / math.sqrt(1.0 - strength ** 2)
    return VarModel(phi, np.eye(n), seed, instrument_ids)


def paper_like_model(coupling=0.05, seed=0, contemporaneous=True) -> VarModel:
    """Five instruments with one-hour leader-follower links shaped like the paper's table.

    Innovations are contemporaneously correlated with the same sign as each
    lagged link, so every planted effect is of the tail type.
    """
    ids = PAPER_INSTRUMENTS
    pos = {k: n for n, k in enumerate(ids)}
    phi = np.zeros((5, 5))
    for leader, follower, sign in PAPER_LINKS:
        phi[pos[follower], pos[leader]] = sign * coupling
    if contemporaneous:
        corr = np.eye(5)
        pairs = {("RI", "BR"): 0.3, ("RI", "SI"): -0.3, ("BR", "SI"): -0.47,
                 ("RI", "EU"): -0.2, ("BR", "EU"): -0.3, ("SI", "EU"): 0.5,
                 ("ED", "SI"): -0.2, ("ED", "RI"): 0.1}
        for (a, b), r in pairs.items():
            corr[pos[a], pos[b]] = corr[pos[b], pos[a]] = r
    else:
        corr = np.eye(5)
    return VarModel(phi, corr, seed, ids)


# -- tail samples ------------------------------------------------------------

_FAMILIES = ("gaussian", "student_t", "pareto")


@dataclass(frozen=True)
class TailModel:
    """iid return distribution.

    ``tail_parameter`` is the degrees of freedom for ``student_t`` and the
    tail index ``alpha`` for ``pareto``; in both cases the density falls as
    ``|x|**-(tail_parameter + 1)``. Pareto samples are symmetric about zero
    with ``|x| >= scale``. Ignored for ``gaussian``.
    """

    family: str
    tail_parameter: float = 0.0
    scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValidationError(f"family must be one of {_FAMILIES}, got {self.family!r}")
        if self.family != "gaussian" and not self.tail_parameter > 0:
            raise ValidationError(f"{self.family} needs a positive tail parameter")
        if not self.scale > 0:
            raise ValidationError("scale must be positive")

    @property
    def density_exponent(self) -> float:
        if self.family == "gaussian":
            return -math.inf
        return -(self.tail_parameter + 1.0)

    @classmethod
    def pareto(cls, density_exponent, scale=1.0, seed=0):
        return cls("pareto", -density_exponent - 1.0, scale, seed)


def generate_tail_sample(model: TailModel, count: int) -> np.ndarray:
    if count < 100:
        raise ValidationError(f"count must be at least 100, got {count}")
    rng = make_rng(model.seed)
    if model.family == "gaussian":
        return model.scale * standard_normal(rng, count)
    u = rng.random((2, count))
    if model.family == "student_t":
        # stdtrit(nu, u) is the t quantile; 1 - u keeps it off the u = 0 pole.
        return model.scale * special.stdtrit(model.tail_parameter, 1.0 - u[0])
    magnitude = model.scale * (1.0 - u[0]) ** (-1.0 / model.tail_parameter)
    return np.where(u[1] < 0.5, -magnitude, magnitude)


# -- prices, bars and ticks ---------------------------------------------------

def _close_prices(panel: AlignedPanel, return_scale, base_price):
    x = panel.returns * return_scale
    logp = np.vstack([np.zeros((1, x.shape[1])), np.cumsum(x, axis=0)])
    return base_price * np.exp(logp)


def _bar_starts(panel: AlignedPanel, step) -> np.ndarray:
    step_ms = np.timedelta64(int(pd.Timedelta(step).value // 1_000_000), "ms")
    starts = panel.timestamps - step_ms
    return np.concatenate([[starts[0] - step_ms], starts])


def _contracts(n_rows, roll_every, instrument, basis):
    """Contract label and price multiplier for each of ``n_rows`` bars."""
    if not roll_every:
        return [f"{instrument}-0"] * n_rows, np.ones(n_rows), []
    k = np.arange(n_rows) // roll_every
    labels = [f"{instrument}-{int(v)}" for v in k]
    switches = list(np.flatnonzero(np.diff(k)) + 1)
    return labels, basis ** k, switches


def panel_to_bars(panel: AlignedPanel, return_scale=0.002, base_price=100.0,
                  step=HOUR, roll_every=None, basis=1.01, seed=0):
    """Bars whose closes reproduce ``return_scale * panel.returns``.

    One extra bar precedes the first row so every panel row has a return.
    With ``roll_every`` the contract changes every that many bars and its
    price is shifted by ``basis``; the switch returns then carry the basis
    jump and must be excluded downstream. Returns ``(bars, calendar)``.
    """
    rng = make_rng(seed)
    closes = _close_prices(panel, return_scale, base_price)
    starts = pd.to_datetime(_bar_starts(panel, step), utc=True)
    length = pd.Timedelta(step).to_pytimedelta()
    bars, calendar = [], []
    for col, inst in enumerate(panel.instrument_ids):
        labels, mult, switches = _contracts(closes.shape[0], roll_every, inst, basis)
        close = closes[:, col] * mult
        wiggle = np.exp(return_scale * np.abs(standard_normal(rng, (2, close.size))))
        opens = np.concatenate([[close[0]], close[:-1]])
        high = np.maximum(opens, close) * wiggle[0]
        low = np.minimum(opens, close) / wiggle[1]
        vol = 1 + (rng.random(close.size) * 5000).astype(int)
        for t in range(close.size):
            bars.append(Bar(inst, labels[t], starts[t].to_pydatetime(), length,
                            float(opens[t]), float(high[t]), float(low[t]),
                            float(close[t]), int(vol[t]), 1))
        calendar += [(inst, starts[s].to_pydatetime()) for s in switches]
    return bars, calendar


def panel_to_ticks(panel: AlignedPanel, return_scale=0.002, base_price=100.0,
                   step=HOUR, ticks_per_bar=4, roll_every=None, basis=1.01, seed=0):
    """Tick frame whose hourly aggregation reproduces ``panel_to_bars`` closes.

    Each bar gets ``ticks_per_bar`` trades at sorted random offsets inside
    its interval; the last trade is at the close price. Returns
    ``(ticks, calendar)`` with ``ticks`` a frame in tick-CSV column order.
    """
    rng = make_rng(seed)
    closes = _close_prices(panel, return_scale, base_price)
    starts = _bar_starts(panel, step).astype("int64")
    step_ms = int(pd.Timedelta(step).value // 1_000_000)
    n_bars = closes.shape[0]
    frames, calendar = [], []
    for col, inst in enumerate(panel.instrument_ids):
        labels, mult, switches = _contracts(n_bars, roll_every, inst, basis)
        close = closes[:, col] * mult
        offs = np.sort((rng.random((n_bars, ticks_per_bar)) * step_ms).astype(np.int64), axis=1)
        stamps = starts[:, None] + offs
        noise = np.exp(return_scale * standard_normal(rng, (n_bars, ticks_per_bar)))
        prices = close[:, None] * noise
        prices[:, -1] = close
        volume = 1 + (rng.random((n_bars, ticks_per_bar)) * 50).astype(np.int64)
        frames.append(pd.DataFrame({
            "timestamp": pd.to_datetime(stamps.ravel(), unit="ms", utc=True),
            "instrument": inst,
            "contract": np.repeat(labels, ticks_per_bar),
            "price": prices.ravel(),
            "volume": volume.ravel(),
        }))
        calendar += [(inst, pd.Timestamp(int(starts[s]), unit="ms", tz="UTC").to_pydatetime())
                     for s in switches]
    return pd.concat(frames, ignore_index=True), calendar


def rollover_rows(n_rows, roll_every) -> np.ndarray:
    """Panel rows whose return spans a synthetic contract switch."""
    if not roll_every:
        return np.array([], dtype=int)
    # bar index = row + 1; a switch at bar s affects row s - 1
    bars = np.arange(n_rows + 1) // roll_every
    return np.flatnonzero(np.diff(bars))
