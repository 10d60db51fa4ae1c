"""Synthetic fleets with a known Gaussian dependence structure and marginals.

The generator is the test oracle for fitting, aggregation, and calibration
claims: latent correlated normals become uniforms, uniforms become Beta
capacity factors scaled by per-site capacity and an hourly diurnal profile.
Forecast cells are the exact quantiles of that generating distribution,
optionally miscalibrated by a width scale about the median or a bias shift.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

import numpy as np
from scipy.stats import beta as beta_dist

from .copula import ActualsPanel
from .gaussian import cholesky, std_normal_cdf, substream_seed
from .marginals import ForecastPanel, QuantileForecast, QuantileGrid

__all__ = [
    "SynthConfig",
    "build_correlation",
    "latent_uniforms",
    "generate_truth",
    "generate_forecasts",
    "DEFAULT_DIURNAL",
    "FLAT_DIURNAL",
]

# Solar-like default: zero at night, sine-squared bump between 06:00 and 18:00.
DEFAULT_DIURNAL = tuple(
    float(np.sin(np.pi * (h - 6) / 12.0) ** 2) if 6 <= h <= 18 else 0.0
    for h in range(24)
)
FLAT_DIURNAL = (1.0,) * 24

_DEFAULT_START = datetime(2019, 1, 1, tzinfo=timezone.utc)


@dataclass
class SynthConfig:
    """Fleet description: dependence, marginals, diurnal shape, miscalibration.

    ``correlation`` accepts an equicorrelation rho (float in [0, 1)), a list of
    (block_size, rho) pairs laid out block-diagonally, or an explicit matrix.
    ``width_scale`` stretches quantile spread about the median; ``bias`` shifts
    every quantile by bias x capacity. Both default to the calibrated case.
    """

    n_sites: int
    n_times: int
    correlation: object = 0.0
    capacities: np.ndarray | None = None
    beta_a: float | np.ndarray = 4.0
    beta_b: float | np.ndarray = 4.0
    diurnal_profile: tuple = FLAT_DIURNAL
    width_scale: float = 1.0
    bias: float = 0.0
    seed: int = 0
    start_time: datetime = _DEFAULT_START

    def __post_init__(self):
        if self.n_sites < 1 or self.n_times < 1:
            raise ValueError("n_sites and n_times must be positive")
        if self.capacities is None:
            self.capacities = np.linspace(50.0, 150.0, self.n_sites)
        self.capacities = np.asarray(self.capacities, dtype=float)
        if self.capacities.shape != (self.n_sites,):
            raise ValueError("capacities must have one entry per site")
        if (self.capacities <= 0.0).any():
            raise ValueError("capacities must be positive")
        profile = np.asarray(self.diurnal_profile, dtype=float)
        if profile.shape != (24,):
            raise ValueError("diurnal_profile needs 24 hourly multipliers")
        if (profile < 0.0).any():
            raise ValueError("diurnal multipliers must be non-negative")
        self.diurnal_profile = tuple(float(v) for v in profile)
        if self.width_scale < 0.0:
            raise ValueError("width_scale must be non-negative")

    @property
    def sites(self) -> list[str]:
        width = len(str(self.n_sites))
        return [f"site{str(i + 1).zfill(width)}" for i in range(self.n_sites)]

    @property
    def times(self) -> list[datetime]:
        return [self.start_time + timedelta(hours=h) for h in range(self.n_times)]

    def beta_params(self) -> tuple[np.ndarray, np.ndarray]:
        a = np.broadcast_to(np.asarray(self.beta_a, dtype=float), (self.n_sites,))
        b = np.broadcast_to(np.asarray(self.beta_b, dtype=float), (self.n_sites,))
        if (a <= 0).any() or (b <= 0).any():
            raise ValueError("beta shape parameters must be positive")
        return np.array(a), np.array(b)


def build_correlation(cfg: SynthConfig) -> np.ndarray:
    """Resolve the config's correlation description to an explicit matrix."""
    spec = cfg.correlation
    n = cfg.n_sites
    if isinstance(spec, (int, float)):
        rho = float(spec)
        if not 0.0 <= rho < 1.0:
            raise ValueError("equicorrelation rho must lie in [0, 1)")
        sigma = np.full((n, n), rho)
        np.fill_diagonal(sigma, 1.0)
        return sigma
    if isinstance(spec, np.ndarray):
        sigma = np.asarray(spec, dtype=float)
        if sigma.shape != (n, n):
            raise ValueError("explicit correlation matrix has wrong shape")
        return sigma
    # list of (block_size, rho) pairs, independent across blocks
    sigma = np.eye(n)
    offset = 0
    for size, rho in spec:
        if offset + size > n:
            raise ValueError("correlation blocks exceed the site count")
        block = np.full((size, size), float(rho))
        np.fill_diagonal(block, 1.0)
        sigma[offset : offset + size, offset : offset + size] = block
        offset += size
    if offset != n:
        raise ValueError(f"correlation blocks cover {offset} of {n} sites")
    return sigma


def latent_uniforms(cfg: SynthConfig) -> np.ndarray:
    """The (N, T) matrix of latent uniforms behind ``generate_truth``.

    One substream per timestamp, so the result is independent of any
    parallel evaluation order.
    """
    sigma = build_correlation(cfg)
    factor = cholesky(sigma)
    u = np.empty((cfg.n_sites, cfg.n_times))
    for t in range(cfg.n_times):
        rng = np.random.Generator(np.random.Philox(substream_seed(cfg.seed, t)))
        g = rng.standard_normal(cfg.n_sites)
        u[:, t] = std_normal_cdf(factor.lower @ g)
    return u


def generate_truth(cfg: SynthConfig) -> tuple[ActualsPanel, np.ndarray]:
    """Draw the actuals panel and return it with the true correlation matrix."""
    sigma = build_correlation(cfg)
    u = latent_uniforms(cfg)
    a, b = cfg.beta_params()
    factors = beta_dist.ppf(u, a[:, None], b[:, None])
    hours = np.array([t.hour for t in cfg.times])
    diurnal = np.asarray(cfg.diurnal_profile)[hours]
    x = cfg.capacities[:, None] * diurnal[None, :] * factors
    panel = ActualsPanel(
        sites=cfg.sites, times=cfg.times, x=x, capacity=cfg.capacities.copy()
    )
    return panel, sigma


def generate_forecasts(cfg: SynthConfig, grid: QuantileGrid | None = None) -> ForecastPanel:
    """Exact (or deliberately miscalibrated) marginal quantiles for every cell.

    With the defaults the cell quantiles are the generating distribution's own
    quantiles on the grid levels, so the PIT of the actuals is uniform up to
    interpolation error. ``width_scale`` stretches values about the median and
    ``bias`` shifts them by bias x capacity; results are clipped back into the
    physical support [0, capacity x diurnal].
    """
    if grid is None:
        grid = QuantileGrid.default()
    a, b = cfg.beta_params()
    base = beta_dist.ppf(grid.levels[None, :], a[:, None], b[:, None])  # (N, K)
    base_med = beta_dist.ppf(0.5, a, b)  # (N,)

    profile = np.asarray(cfg.diurnal_profile)
    cells = np.full((cfg.n_sites, cfg.n_times), None, dtype=object)
    hours = [t.hour for t in cfg.times]
    # One forecast object per (site, hour): cells repeat across days, so the
    # underlying read-only value buffers are shared.
    cache: dict[tuple[int, int], QuantileForecast] = {}
    for i in range(cfg.n_sites):
        cap = cfg.capacities[i]
        for t, hour in enumerate(hours):
            key = (i, hour)
            f = cache.get(key)
            if f is None:
                scale = cap * profile[hour]
                values = base[i] * scale
                if cfg.width_scale != 1.0:
                    med = base_med[i] * scale
                    values = med + cfg.width_scale * (values - med)
                if cfg.bias != 0.0:
                    values = values + cfg.bias * cap
                values = np.clip(values, 0.0, scale)
                f = QuantileForecast(
                    grid=grid, values=values, support_lo=0.0, support_hi=scale
                )
                cache[key] = f
            cells[i, t] = f
    return ForecastPanel(sites=cfg.sites, times=cfg.times, grid=grid, cells=cells)
