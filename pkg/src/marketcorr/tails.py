"""Tail densities of return distributions and power-law fits to them."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import InsufficientDataError, UnderdeterminedFitError

NO_CONVERGENT_MOMENT = -1

_SIDES = ("positive", "negative")


@dataclass(frozen=True, eq=False)
class TailHistogram:
    """Density of ``|x|`` on one side of zero, on a geometric grid.

    Densities are normalized by the total sample count over both sides and
    the centre, so the two tail histograms plus the central mass integrate
    to one. Negative returns are mirrored onto the positive axis.
    """

    side: str
    bin_edges: np.ndarray
    densities: np.ndarray
    density_errors: np.ndarray
    sample_count: int
    counts: np.ndarray | None = None

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)

    @property
    def centers(self) -> np.ndarray:
        return np.sqrt(self.bin_edges[:-1] * self.bin_edges[1:])

    @property
    def mass(self) -> float:
        return float(np.sum(self.densities * self.widths))

    def to_rows(self) -> list[dict]:
        counts = self.counts if self.counts is not None else [None] * len(self.densities)
        return [
            {"side": self.side, "lower": float(lo), "upper": float(hi),
             "center": float(c), "count": None if n is None else int(n),
             "density": float(d), "density_error": float(e)}
            for lo, hi, c, n, d, e in zip(self.bin_edges[:-1], self.bin_edges[1:],
                                          self.centers, counts, self.densities,
                                          self.density_errors)
        ]


@dataclass(frozen=True)
class PowerLawFit:
    p0: float
    p1: float
    p0_error: float
    p1_error: float
    chi2: float
    degrees_of_freedom: int
    fit_range: tuple

    def density(self, x):
        return self.p0 * np.asarray(x, dtype=float) ** self.p1

    def to_dict(self) -> dict:
        return {"p0": self.p0, "p1": self.p1, "p0_error": self.p0_error,
                "p1_error": self.p1_error, "chi2": self.chi2,
                "degrees_of_freedom": self.degrees_of_freedom,
                "fit_min": self.fit_range[0], "fit_max": self.fit_range[1]}


def default_range(returns, quantile=90.0) -> tuple[float, float]:
    """From the given percentile of ``|x|`` to its maximum, shared by both sides."""
    a = np.abs(np.asarray(returns, dtype=float))
    return float(np.percentile(a, quantile)), float(a.max())


def tail_histogram(returns, side="positive", bins=20, range=None,
                   min_samples=100) -> TailHistogram:
    x = np.asarray(returns, dtype=float).ravel()
    if side not in _SIDES:
        raise ValueError(f"side must be one of {_SIDES}, got {side!r}")
    if x.size == 0:
        raise InsufficientDataError("no returns given")
    lo, hi = range if range is not None else default_range(x)
    if not 0 < lo < hi:
        raise InsufficientDataError(f"degenerate tail range ({lo}, {hi})")
    edges = np.geomspace(lo, hi, bins + 1)
    edges[0], edges[-1] = lo, hi
    tail = x[x > 0] if side == "positive" else -x[x < 0]
    counts, _ = np.histogram(tail, bins=edges)
    used = int(counts.sum())
    if used < min_samples:
        raise InsufficientDataError(
            f"only {used} {side} returns in [{lo:.6g}, {hi:.6g}], need {min_samples}")
    scale = x.size * np.diff(edges)
    return TailHistogram(side, edges, counts / scale, np.sqrt(counts) / scale,
                         int(x.size), counts)


def fit_power_law(hist: TailHistogram, fit_range=None) -> PowerLawFit:
    """Weighted least-squares fit of ``density = p0 * x**p1`` in log-log space.

    Each non-empty bin contributes ``ln(density)`` at the geometric bin centre
    with error ``density_error / density``. Empty bins are skipped.
    """
    x = hist.centers
    d = hist.densities
    e = hist.density_errors
    use = (d > 0) & (e > 0)
    if fit_range is not None:
        use &= (x >= fit_range[0]) & (x <= fit_range[1])
    if use.sum() < 3:
        raise UnderdeterminedFitError(
            f"{int(use.sum())} usable bins; a two-parameter fit needs at least 3")
    lx = np.log(x[use])
    ly = np.log(d[use])
    w = (d[use] / e[use]) ** 2

    design = np.column_stack([np.ones_like(lx), lx])
    normal = design.T @ (w[:, None] * design)
    cov = np.linalg.inv(normal)
    intercept, slope = cov @ (design.T @ (w * ly))
    resid = ly - intercept - slope * lx
    chi2 = float(np.sum(w * resid ** 2))
    p0 = math.exp(intercept)
    rng = (float(hist.bin_edges[:-1][use][0]), float(hist.bin_edges[1:][use][-1]))
    return PowerLawFit(p0, float(slope), p0 * math.sqrt(cov[0, 0]),
                       math.sqrt(cov[1, 1]), chi2, int(use.sum()) - 2, rng)


def max_convergent_moment(fit) -> int:
    """Largest ``n >= 0`` with ``n + p1 < -1``, else ``NO_CONVERGENT_MOMENT``.

    The n-th moment of a density with power-law tails ``x**p1`` is finite
    only if the integrand ``x**(n + p1)`` decays faster than ``1/x``.
    """
    p1 = fit.p1 if isinstance(fit, PowerLawFit) else float(fit)
    if not p1 < -1:
        return NO_CONVERGENT_MOMENT
    return math.ceil(-1.0 - p1) - 1
