"""Gaussian copula estimation from historical actuals and marginal forecasts.

Pipeline: probability integral transform of each actual through its own
marginal forecast, probit of the (clamped) PIT values, then the second-moment
product over fully-observed time columns. The raw product is rescaled to unit
diagonal, PSD-repaired by eigenvalue clipping when needed, and factored with
the jitter-laddered Cholesky.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict, field

import numpy as np

from .gaussian import CholeskyFactor, cholesky, std_normal_inv
from .marginals import ForecastPanel, cdf_eval

__all__ = [
    "ActualsPanel",
    "CopulaDiagnostics",
    "CopulaModel",
    "pit_matrix",
    "probit_matrix",
    "fit_copula",
    "model_from_sigma",
    "identity_model",
    "save_model",
    "load_model",
    "DEFAULT_CLAMP_EPS",
    "MODEL_FORMAT_VERSION",
]

# Half the resolution of the 99-percentile grid: PIT values beyond the
# outermost quantiles carry no finer information.
DEFAULT_CLAMP_EPS = 0.005

EIGENVALUE_FLOOR = 1e-8
MODEL_FORMAT_VERSION = 1


@dataclass(eq=False)
class ActualsPanel:
    """N sites x T timestamps of actual generation in MW; NaN marks missing.

    ``capacity`` is the optional per-site nameplate MW, aligned with sites.
    """

    sites: list[str]
    times: list
    x: np.ndarray
    capacity: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        n, t = len(self.sites), len(self.times)
        if self.x.shape != (n, t):
            raise ValueError(
                f"actuals shape {self.x.shape} does not match {n} sites x {t} times"
            )
        if np.nanmin(self.x, initial=0.0) < 0.0:
            raise ValueError("actual generation must be non-negative")
        if self.capacity is not None:
            self.capacity = np.asarray(self.capacity, dtype=float)
            if self.capacity.shape != (n,):
                raise ValueError("capacity must align with sites")

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def n_times(self) -> int:
        return len(self.times)

    @property
    def mask(self) -> np.ndarray:
        return ~np.isnan(self.x)


@dataclass(frozen=True)
class CopulaDiagnostics:
    t_used: int
    clamp_rate: float
    psd_repair_applied: bool
    min_eigenvalue_before_repair: float
    z_means: tuple = ()  # per-site probit means; drift from 0 signals bias


@dataclass(eq=False)
class CopulaModel:
    """Fitted correlation matrix with its Cholesky factor and fit diagnostics."""

    sites: list[str]
    sigma: np.ndarray
    factor: CholeskyFactor
    clamp_eps: float = DEFAULT_CLAMP_EPS
    diagnostics: CopulaDiagnostics = field(
        default_factory=lambda: CopulaDiagnostics(0, 0.0, False, 0.0)
    )

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=float)
        n = len(self.sites)
        if sigma.shape != (n, n):
            raise ValueError("sigma must be N x N for the N model sites")
        if not np.allclose(np.diag(sigma), 1.0, atol=1e-12):
            raise ValueError("sigma must have a unit diagonal")
        if np.abs(sigma).max() > 1.0 + 1e-9:
            raise ValueError("sigma entries must lie in [-1, 1]")
        self.sigma = sigma

    @property
    def n_sites(self) -> int:
        return len(self.sites)


def pit_matrix(
    actuals: ActualsPanel, forecasts: ForecastPanel
) -> tuple[np.ndarray, np.ndarray]:
    """PIT of every aligned cell: y[i, t] = F_hat[i, t](x[i, t]).

    Returns the (N, T) matrix (NaN where unavailable) and a boolean validity
    mask. Panels must already be aligned on sites and times.
    """
    if actuals.sites != forecasts.sites:
        raise ValueError("panels are not aligned on sites")
    if list(actuals.times) != list(forecasts.times):
        raise ValueError("panels are not aligned on times")

    n, t = actuals.x.shape
    y = np.full((n, t), np.nan)
    x_ok = actuals.mask
    for i in range(n):
        row = forecasts.cells[i]
        # Batch columns that share one forecast object (panels built from a
        # daily profile reuse cells across days) into a single vectorized call.
        groups: dict[int, list[int]] = {}
        for j in range(t):
            if row[j] is not None and x_ok[i, j]:
                groups.setdefault(id(row[j]), []).append(j)
        for idx in groups.values():
            cols = np.asarray(idx)
            y[i, cols] = cdf_eval(row[idx[0]], actuals.x[i, cols])
    mask = ~np.isnan(y)
    if not mask.any():
        raise ValueError("no aligned cells with both an actual and a forecast")
    return y, mask


def probit_matrix(
    y: np.ndarray, clamp_eps: float = DEFAULT_CLAMP_EPS
) -> tuple[np.ndarray, float]:
    """Map PIT values through the normal quantile after clamping the boundary.

    Entries are clamped to [clamp_eps, 1 - clamp_eps] first; the returned rate
    is the fraction of valid entries that the clamp actually moved. NaN cells
    pass through untouched.
    """
    if not 0.0 < clamp_eps < 0.5:
        raise ValueError("clamp_eps must lie in (0, 0.5)")
    y = np.asarray(y, dtype=float)
    valid = ~np.isnan(y)
    z = np.full(y.shape, np.nan)
    if valid.any():
        yv = y[valid]
        if (yv < 0.0).any() or (yv > 1.0).any():
            raise ValueError("PIT values must lie in [0, 1]")
        clamped = np.clip(yv, clamp_eps, 1.0 - clamp_eps)
        rate = float(np.mean(clamped != yv))
        z[valid] = std_normal_inv(clamped)
    else:
        rate = 0.0
    return z, rate


def _repair_psd(sigma: np.ndarray) -> tuple[np.ndarray, bool, float]:
    """Clip eigenvalues at the floor and rescale back to unit diagonal."""
    eigvals = np.linalg.eigvalsh(sigma)
    min_eig = float(eigvals[0])
    if min_eig >= EIGENVALUE_FLOOR:
        return sigma, False, min_eig
    w, v = np.linalg.eigh(sigma)
    w = np.maximum(w, EIGENVALUE_FLOOR)
    repaired = (v * w) @ v.T
    d = np.sqrt(np.diag(repaired))
    repaired = repaired / np.outer(d, d)
    repaired = 0.5 * (repaired + repaired.T)
    np.fill_diagonal(repaired, 1.0)
    return repaired, True, min_eig


def fit_copula(
    actuals: ActualsPanel,
    forecasts: ForecastPanel,
    clamp_eps: float = DEFAULT_CLAMP_EPS,
) -> CopulaModel:
    """Estimate the Gaussian copula over all fully-observed time columns.

    Time columns with any missing cell are dropped so the plain second-moment
    product stays well-defined. The product is rescaled to unit diagonal
    (the estimator itself does not normalize), PSD-repaired if an eigenvalue
    falls below the floor, and factored.

    Raises:
        ValueError: fewer than two fully-observed columns, or a site whose
            probit values have zero variance (named in the message).
    """
    y, mask = pit_matrix(actuals, forecasts)
    z, clamp_rate = probit_matrix(y, clamp_eps)

    full_cols = mask.all(axis=0)
    t_used = int(full_cols.sum())
    if t_used < 2:
        raise ValueError(
            f"need at least 2 fully-observed time columns to fit, got {t_used}"
        )
    zf = z[:, full_cols]

    z_var = zf.var(axis=1)
    dead = np.flatnonzero(z_var <= 1e-24)
    if dead.size:
        names = ", ".join(actuals.sites[i] for i in dead)
        raise ValueError(f"zero probit variance for site(s): {names}")

    raw = (zf @ zf.T) / t_used
    d = np.sqrt(np.diag(raw))
    sigma = raw / np.outer(d, d)
    sigma = 0.5 * (sigma + sigma.T)
    np.fill_diagonal(sigma, 1.0)

    sigma, repaired, min_eig = _repair_psd(sigma)
    factor = cholesky(sigma)
    diagnostics = CopulaDiagnostics(
        t_used=t_used,
        clamp_rate=clamp_rate,
        psd_repair_applied=repaired,
        min_eigenvalue_before_repair=min_eig,
        z_means=tuple(float(v) for v in zf.mean(axis=1)),
    )
    return CopulaModel(
        sites=list(actuals.sites),
        sigma=sigma,
        factor=factor,
        clamp_eps=clamp_eps,
        diagnostics=diagnostics,
    )


def model_from_sigma(
    sites: list[str], sigma: np.ndarray, clamp_eps: float = DEFAULT_CLAMP_EPS
) -> CopulaModel:
    """Build a model from a known correlation matrix (tests, baselines)."""
    sigma = np.asarray(sigma, dtype=float)
    repaired_sigma, repaired, min_eig = _repair_psd(0.5 * (sigma + sigma.T))
    np.fill_diagonal(repaired_sigma, 1.0)
    factor = cholesky(repaired_sigma)
    diagnostics = CopulaDiagnostics(
        t_used=0,
        clamp_rate=0.0,
        psd_repair_applied=repaired,
        min_eigenvalue_before_repair=min_eig,
    )
    return CopulaModel(
        sites=list(sites),
        sigma=repaired_sigma,
        factor=factor,
        clamp_eps=clamp_eps,
        diagnostics=diagnostics,
    )


def identity_model(sites: list[str]) -> CopulaModel:
    """Independence copula over the given sites."""
    return model_from_sigma(sites, np.eye(len(sites)))


def save_model(model: CopulaModel, path) -> None:
    """Write the model as self-describing JSON; floats roundtrip exactly."""
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "sites": list(model.sites),
        "clamp_eps": model.clamp_eps,
        "sigma": [[float(v) for v in row] for row in model.sigma],
        "diagnostics": asdict(model.diagnostics),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_model(path) -> CopulaModel:
    """Read a model file and recompute the Cholesky factor deterministically."""
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    version = payload.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version: {version}")
    sigma = np.asarray(payload["sigma"], dtype=float)
    diag = payload["diagnostics"]
    diagnostics = CopulaDiagnostics(
        t_used=int(diag["t_used"]),
        clamp_rate=float(diag["clamp_rate"]),
        psd_repair_applied=bool(diag["psd_repair_applied"]),
        min_eigenvalue_before_repair=float(diag["min_eigenvalue_before_repair"]),
        z_means=tuple(diag.get("z_means", ())),
    )
    return CopulaModel(
        sites=[str(s) for s in payload["sites"]],
        sigma=sigma,
        factor=cholesky(sigma),
        clamp_eps=float(payload["clamp_eps"]),
        diagnostics=diagnostics,
    )
