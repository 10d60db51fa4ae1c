"""Site-level quantile forecasts: monotone repair, CDF and inverse-CDF evaluation.

A site forecast is a set of quantile values on a fixed grid of probability
levels, read as a piecewise-linear CDF between the knots and extended linearly
to the declared support bounds (solar generation is physically bounded below
by zero and above by capacity). Repeated quantile values -- mass concentrations
such as zero generation around sunrise -- are resolved with a midpoint
tie-break so the probability integral transform stays deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "QuantileGrid",
    "QuantileForecast",
    "ForecastPanel",
    "repair_monotone",
    "cdf_eval",
    "quantile_eval",
]

# Bounded extrapolation margin used when a site's capacity is unknown.
UNKNOWN_CAPACITY_MARGIN = 0.05


def _readonly(arr) -> np.ndarray:
    """Return ``arr`` as a float ndarray that is safe to share across threads.

    Already read-only inputs are passed through by reference so panels with
    many repeated quantile vectors (e.g. per-hour scalings) can share storage.
    """
    a = np.asarray(arr, dtype=float)
    if a.flags.writeable:
        a = a.copy()
        a.setflags(write=False)
    return a


def repair_monotone(values: Sequence[float] | np.ndarray) -> np.ndarray:
    """Project a quantile vector onto non-decreasing vectors via running maximum.

    Equals the input when it is already sorted; idempotent.

    Raises:
        ValueError: on an empty vector or NaN entries.
    """
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("cannot repair an empty quantile vector")
    if np.isnan(arr).any():
        raise ValueError("quantile vector contains NaN")
    return np.maximum.accumulate(arr)


@dataclass(frozen=True)
class QuantileGrid:
    """Ordered probability levels shared by every forecast in a panel.

    Levels must be strictly increasing and lie in the open interval (0, 1).
    """

    levels: np.ndarray

    def __post_init__(self):
        levels = _readonly(self.levels)
        if levels.ndim != 1 or levels.size < 2:
            raise ValueError("grid needs at least two levels")
        if not np.all(np.diff(levels) > 0):
            raise ValueError("levels must be strictly increasing")
        if levels[0] <= 0.0 or levels[-1] >= 1.0:
            raise ValueError("levels must lie strictly inside (0, 1)")
        object.__setattr__(self, "levels", levels)

    @property
    def k(self) -> int:
        return int(self.levels.size)

    @classmethod
    def default(cls) -> "QuantileGrid":
        """The 99 percentile levels 0.01, 0.02, ..., 0.99."""
        return cls(np.arange(1, 100) / 100.0)

    def matches(self, other: "QuantileGrid") -> bool:
        return np.array_equal(self.levels, other.levels)


@dataclass(frozen=True, eq=False)
class QuantileForecast:
    """One site, one timestamp: quantile values (MW) on a grid of levels.

    Values are monotone-repaired at construction; ``repaired`` records whether
    the repair changed anything. ``support_hi=None`` selects a bounded default
    just above the outermost quantile rather than an infinite tail.
    """

    grid: QuantileGrid
    values: np.ndarray
    support_lo: float = 0.0
    support_hi: float | None = None
    repaired: bool = field(init=False, default=False)

    def __post_init__(self):
        raw = _readonly(self.values)
        if raw.ndim != 1 or raw.size != self.grid.k:
            raise ValueError(
                f"expected {self.grid.k} quantile values, got {raw.size}"
            )
        if np.isnan(raw).any():
            raise ValueError("quantile values contain NaN")
        fixed = repair_monotone(raw)
        if np.array_equal(fixed, raw):
            fixed = raw  # keep the (possibly shared) input buffer
        else:
            fixed.setflags(write=False)
            object.__setattr__(self, "repaired", True)
        object.__setattr__(self, "values", fixed)

        lo = float(self.support_lo)
        hi = self.support_hi
        if hi is None:
            spread = float(fixed[-1] - fixed[0])
            hi = float(fixed[-1]) + spread * UNKNOWN_CAPACITY_MARGIN
        hi = float(hi)
        if lo > fixed[0]:
            raise ValueError(
                f"support_lo={lo} exceeds smallest quantile value {fixed[0]}"
            )
        if hi < fixed[-1]:
            raise ValueError(
                f"support_hi={hi} is below largest quantile value {fixed[-1]}"
            )
        object.__setattr__(self, "support_lo", lo)
        object.__setattr__(self, "support_hi", hi)


def cdf_eval(f: QuantileForecast, x) -> float | np.ndarray:
    """Evaluate the forecast CDF at ``x`` (MW), returning u in [0, 1].

    Piecewise-linear between the quantile knots; linear from
    (support_lo, 0) below the first knot and to (support_hi, 1) above the
    last. Points on a flat run of repeated values map to the midpoint of the
    matching level range. Outside the support (or for an infinite bound) the
    result saturates at 0 or 1.
    """
    xs = np.asarray(x, dtype=float)
    scalar = xs.ndim == 0
    xs = np.atleast_1d(xs)
    if np.isnan(xs).any():
        raise ValueError("cdf_eval received NaN")

    v = f.values
    lv = f.grid.levels
    k = v.size
    u = np.empty(xs.shape, dtype=float)

    lo_i = np.searchsorted(v, xs, side="left")
    hi_i = np.searchsorted(v, xs, side="right")

    tie = lo_i < hi_i  # x coincides with one knot or a flat run of knots
    if tie.any():
        u[tie] = 0.5 * (lv[lo_i[tie]] + lv[hi_i[tie] - 1])

    below = ~tie & (hi_i == 0)
    if below.any():
        xb = xs[below]
        if np.isinf(f.support_lo):
            u[below] = 0.0
        else:
            span = v[0] - f.support_lo
            if span > 0:
                frac = (xb - f.support_lo) / span
                u[below] = np.where(xb < f.support_lo, 0.0, lv[0] * frac)
            else:
                u[below] = 0.0  # degenerate: everything below v[0] is below support

    above = ~tie & (lo_i == k)
    if above.any():
        xa = xs[above]
        if np.isinf(f.support_hi):
            u[above] = 1.0
        else:
            span = f.support_hi - v[-1]
            if span > 0:
                frac = (xa - v[-1]) / span
                u[above] = np.where(
                    xa > f.support_hi, 1.0, lv[-1] + (1.0 - lv[-1]) * frac
                )
            else:
                u[above] = 1.0

    mid = ~(tie | below | above)
    if mid.any():
        i = lo_i[mid]  # x strictly between distinct knots i-1 and i
        x0, x1 = v[i - 1], v[i]
        l0, l1 = lv[i - 1], lv[i]
        u[mid] = l0 + (l1 - l0) * (xs[mid] - x0) / (x1 - x0)

    np.clip(u, 0.0, 1.0, out=u)
    return float(u[0]) if scalar else u


def quantile_eval(f: QuantileForecast, u) -> float | np.ndarray:
    """Evaluate the forecast quantile function (inverse CDF) at ``u``.

    Linear interpolation through the knots extended with (0, support_lo) and
    (1, support_hi); an infinite support bound degrades to constant
    extrapolation at the outermost quantile value.
    """
    us = np.asarray(u, dtype=float)
    scalar = us.ndim == 0
    us = np.atleast_1d(us)
    if np.isnan(us).any() or (us < 0.0).any() or (us > 1.0).any():
        raise ValueError("quantile_eval requires u in [0, 1]")

    lo = f.support_lo if np.isfinite(f.support_lo) else float(f.values[0])
    hi = f.support_hi if np.isfinite(f.support_hi) else float(f.values[-1])
    xp = np.concatenate(([0.0], f.grid.levels, [1.0]))
    fp = np.concatenate(([lo], f.values, [hi]))
    out = np.interp(us, xp, fp)
    return float(out[0]) if scalar else out


@dataclass(eq=False)
class ForecastPanel:
    """N sites x T timestamps of quantile forecasts; cells may be missing (None).

    All present cells share the same quantile grid. ``repair_count`` tallies
    how many cells needed quantile-crossing repair at load time.
    """

    sites: list[str]
    times: list
    grid: QuantileGrid
    cells: np.ndarray  # (N, T) object array of QuantileForecast | None
    repair_count: int = 0

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=object)
        n, t = len(self.sites), len(self.times)
        if self.cells.shape != (n, t):
            raise ValueError(
                f"cells shape {self.cells.shape} does not match "
                f"{n} sites x {t} times"
            )

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def n_times(self) -> int:
        return len(self.times)

    def column(self, t_idx: int) -> list[QuantileForecast | None]:
        """Forecasts of all sites at one timestamp, in site order."""
        return list(self.cells[:, t_idx])
