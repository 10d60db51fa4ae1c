"""CSV ingestion and panel preparation: pivoting, alignment, filtering, splits.

File formats (all timestamps UTC RFC-3339; ``.gz`` paths are transparently
decompressed):

* actuals:    ``site_id,timestamp_utc,mw`` long format, any sub-hourly cadence;
  sub-hourly records are averaged up to the hourly grid the forecasts live on.
* forecasts:  ``site_id,target_time,q01..qK`` wide format, one row per cell.
* capacities: ``site_id,capacity_mw``.

Panels come out sorted by site id (byte-wise) and chronological time.
"""

from __future__ import annotations

import csv
import gzip
import logging
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

import numpy as np

from .copula import ActualsPanel
from .marginals import ForecastPanel, QuantileForecast, QuantileGrid

__all__ = [
    "DatasetConfig",
    "parse_rfc3339",
    "format_rfc3339",
    "load_actuals",
    "load_forecasts",
    "load_capacities",
    "align_panels",
    "filter_daylight",
    "split_train_test",
    "actuals_subset",
    "forecasts_subset",
    "write_actuals_csv",
    "write_forecasts_csv",
    "write_sigma_csv",
    "read_sigma_csv",
]

log = logging.getLogger(__name__)

DEFAULT_LOW_GEN_THRESHOLD = 0.04
DEFAULT_TRAIN_MONTHS = 11


@dataclass
class DatasetConfig:
    """Paths plus the filtering and splitting knobs of an evaluation dataset."""

    actuals_path: str
    forecasts_path: str
    capacity_path: str | None = None
    low_gen_threshold: float = DEFAULT_LOW_GEN_THRESHOLD
    train_months: int = DEFAULT_TRAIN_MONTHS
    quantile_grid: QuantileGrid = field(default_factory=QuantileGrid.default)

    def __post_init__(self):
        if not 0.0 <= self.low_gen_threshold < 1.0:
            raise ValueError("low_gen_threshold must lie in [0, 1)")
        if self.train_months < 1:
            raise ValueError("train_months must be at least 1")


def parse_rfc3339(value: str) -> datetime:
    """Parse an RFC-3339 timestamp to a timezone-aware UTC datetime."""
    text = value.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        raise ValueError(f"timestamp lacks a UTC offset: {value!r}")
    return dt.astimezone(timezone.utc)


def format_rfc3339(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _open_text(path, mode="rt"):
    if str(path).endswith(".gz"):
        return gzip.open(path, mode, encoding="utf-8", newline="")
    return open(path, mode, encoding="utf-8", newline="")


def _floor_hour(dt: datetime) -> datetime:
    return dt.replace(minute=0, second=0, microsecond=0)


def load_actuals(path) -> ActualsPanel:
    """Read long-format actuals and pivot to an N x T hourly panel.

    Duplicate (site, timestamp) rows are an error; negative generation is
    clamped to zero with a warning; sub-hourly records are averaged into
    their hour so the panel matches the forecasts' hourly cadence.
    """
    sums: dict[tuple[str, datetime], float] = {}
    counts: dict[tuple[str, datetime], int] = {}
    seen_raw: set[tuple[str, datetime]] = set()
    negatives = 0

    with _open_text(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["site_id", "timestamp_utc", "mw"]:
            raise ValueError(
                f"{path}: expected header site_id,timestamp_utc,mw, got {header}"
            )
        for row in reader:
            if not row:
                continue
            line = reader.line_num
            if len(row) != 3:
                raise ValueError(f"{path}:{line}: expected 3 columns, got {len(row)}")
            site = row[0].strip()
            try:
                stamp = parse_rfc3339(row[1])
                mw = float(row[2])
            except ValueError as exc:
                raise ValueError(f"{path}:{line}: {exc}") from exc
            raw_key = (site, stamp)
            if raw_key in seen_raw:
                raise ValueError(
                    f"{path}:{line}: duplicate record for site {site!r} "
                    f"at {format_rfc3339(stamp)}"
                )
            seen_raw.add(raw_key)
            if mw < 0.0:
                negatives += 1
                mw = 0.0
            key = (site, _floor_hour(stamp))
            sums[key] = sums.get(key, 0.0) + mw
            counts[key] = counts.get(key, 0) + 1

    if not sums:
        raise ValueError(f"{path}: no data rows")
    if negatives:
        log.warning("%s: clamped %d negative mw values to 0", path, negatives)

    sites = sorted({site for site, _ in sums})
    times = sorted({stamp for _, stamp in sums})
    site_idx = {s: i for i, s in enumerate(sites)}
    time_idx = {t: j for j, t in enumerate(times)}
    x = np.full((len(sites), len(times)), np.nan)
    for (site, stamp), total in sums.items():
        x[site_idx[site], time_idx[stamp]] = total / counts[(site, stamp)]
    return ActualsPanel(sites=sites, times=times, x=x)


def load_capacities(path) -> dict[str, float]:
    capacities: dict[str, float] = {}
    with _open_text(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["site_id", "capacity_mw"]:
            raise ValueError(
                f"{path}: expected header site_id,capacity_mw, got {header}"
            )
        for row in reader:
            if not row:
                continue
            line = reader.line_num
            try:
                capacities[row[0].strip()] = float(row[1])
            except (IndexError, ValueError) as exc:
                raise ValueError(f"{path}:{line}: {exc}") from exc
    return capacities


def attach_capacities(panel: ActualsPanel, capacities: dict[str, float]) -> None:
    """Set panel.capacity from a site -> MW mapping; every site must appear."""
    missing = [s for s in panel.sites if s not in capacities]
    if missing:
        raise ValueError(f"capacity file lacks site(s): {', '.join(missing)}")
    panel.capacity = np.array([capacities[s] for s in panel.sites], dtype=float)


def load_forecasts(path, grid: QuantileGrid) -> ForecastPanel:
    """Read wide-format quantile forecasts into an N x T panel of cells.

    Each row becomes one forecast with monotone repair applied; cells absent
    from the file stay missing (masked) rather than erroring. Negative
    quantile values are clamped to zero (with a warning), mirroring the
    actuals policy, so the default zero support floor stays valid.
    """
    rows: dict[tuple[str, datetime], np.ndarray] = {}
    negatives = 0
    with _open_text(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if header[:2] != ["site_id", "target_time"]:
            raise ValueError(
                f"{path}: expected leading columns site_id,target_time, got {header[:2]}"
            )
        if len(header) - 2 != grid.k:
            raise ValueError(
                f"{path}: {len(header) - 2} quantile columns do not match "
                f"grid of {grid.k} levels"
            )
        for row in reader:
            if not row:
                continue
            line = reader.line_num
            if len(row) != 2 + grid.k:
                raise ValueError(
                    f"{path}:{line}: expected {2 + grid.k} columns, got {len(row)}"
                )
            site = row[0].strip()
            try:
                stamp = parse_rfc3339(row[1])
                values = np.array([float(v) for v in row[2:]], dtype=float)
            except ValueError as exc:
                raise ValueError(f"{path}:{line}: {exc}") from exc
            key = (site, stamp)
            if key in rows:
                raise ValueError(
                    f"{path}:{line}: duplicate forecast for site {site!r} "
                    f"at {format_rfc3339(stamp)}"
                )
            if (values < 0.0).any():
                negatives += int((values < 0.0).sum())
                values = np.maximum(values, 0.0)
            rows[key] = values

    if not rows:
        raise ValueError(f"{path}: no data rows")
    if negatives:
        log.warning("%s: clamped %d negative quantile values to 0", path, negatives)

    sites = sorted({site for site, _ in rows})
    times = sorted({stamp for _, stamp in rows})
    site_idx = {s: i for i, s in enumerate(sites)}
    time_idx = {t: j for j, t in enumerate(times)}
    cells = np.full((len(sites), len(times)), None, dtype=object)
    repair_count = 0
    for (site, stamp), values in rows.items():
        f = QuantileForecast(grid=grid, values=values)
        repair_count += int(f.repaired)
        cells[site_idx[site], time_idx[stamp]] = f
    if repair_count:
        log.warning("%s: repaired quantile crossings in %d cells", path, repair_count)
    return ForecastPanel(
        sites=sites, times=times, grid=grid, cells=cells, repair_count=repair_count
    )


def align_panels(
    actuals: ActualsPanel, forecasts: ForecastPanel
) -> tuple[ActualsPanel, ForecastPanel]:
    """Restrict both panels to their common sites and times, same ordering."""
    sites = sorted(set(actuals.sites) & set(forecasts.sites))
    times = sorted(set(actuals.times) & set(forecasts.times))
    if not sites or not times:
        raise ValueError("panels share no sites or no times")

    a_si = [actuals.sites.index(s) for s in sites]
    a_ti = [actuals.times.index(t) for t in times]
    f_si = [forecasts.sites.index(s) for s in sites]
    f_ti = [forecasts.times.index(t) for t in times]

    capacity = actuals.capacity[a_si] if actuals.capacity is not None else None
    aligned_actuals = ActualsPanel(
        sites=sites,
        times=times,
        x=actuals.x[np.ix_(a_si, a_ti)],
        capacity=capacity,
    )
    aligned_forecasts = ForecastPanel(
        sites=sites,
        times=times,
        grid=forecasts.grid,
        cells=forecasts.cells[np.ix_(f_si, f_ti)],
        repair_count=forecasts.repair_count,
    )
    return aligned_actuals, aligned_forecasts


def _site_capacities(actuals: ActualsPanel) -> np.ndarray:
    """Nameplate capacities, falling back to each site's max observed actual."""
    if actuals.capacity is not None:
        return actuals.capacity
    with np.errstate(all="ignore"):
        caps = np.nanmax(actuals.x, axis=1)
    caps = np.where(np.isnan(caps), 0.0, caps)
    return caps


def filter_daylight(
    actuals: ActualsPanel,
    threshold: float = DEFAULT_LOW_GEN_THRESHOLD,
    scope: str = "fleet",
) -> list:
    """Timestamps whose generation clears the low-generation threshold.

    ``fleet`` scope (default) keeps t when the fleet total is at least
    threshold x fleet capacity; ``site`` scope demands every observed site
    clear threshold x its own capacity. The comparison is inclusive.
    """
    caps = _site_capacities(actuals)
    if scope == "fleet":
        fleet_cap = float(caps.sum())
        if fleet_cap <= 0.0:
            raise ValueError("fleet capacity is zero; cannot filter")
        totals = np.nansum(actuals.x, axis=0)
        keep = totals >= threshold * fleet_cap
    elif scope == "site":
        if (caps <= 0.0).any():
            raise ValueError("site capacity is zero; cannot filter")
        frac = actuals.x / caps[:, None]
        keep = np.nanmin(frac, axis=0) >= threshold
    else:
        raise ValueError(f"unknown filter scope: {scope!r}")
    return [t for t, k in zip(actuals.times, keep) if k]


def split_train_test(times, train_months: int) -> tuple[list, list]:
    """Chronologically first ``train_months`` calendar months vs the rest."""
    times = sorted(times)
    months = sorted({(t.year, t.month) for t in times})
    if len(months) < train_months + 1:
        raise ValueError(
            f"need at least {train_months + 1} calendar months, got {len(months)}"
        )
    train_set = set(months[:train_months])
    train = [t for t in times if (t.year, t.month) in train_set]
    test = [t for t in times if (t.year, t.month) not in train_set]
    return train, test


def actuals_subset(actuals: ActualsPanel, times) -> ActualsPanel:
    wanted = set(times)
    idx = [j for j, t in enumerate(actuals.times) if t in wanted]
    return ActualsPanel(
        sites=list(actuals.sites),
        times=[actuals.times[j] for j in idx],
        x=actuals.x[:, idx],
        capacity=actuals.capacity,
    )


def forecasts_subset(panel: ForecastPanel, times) -> ForecastPanel:
    wanted = set(times)
    idx = [j for j, t in enumerate(panel.times) if t in wanted]
    return ForecastPanel(
        sites=list(panel.sites),
        times=[panel.times[j] for j in idx],
        grid=panel.grid,
        cells=panel.cells[:, idx],
        repair_count=panel.repair_count,
    )


def write_actuals_csv(panel: ActualsPanel, path) -> None:
    with _open_text(path, "wt") as fh:
        writer = csv.writer(fh)
        writer.writerow(["site_id", "timestamp_utc", "mw"])
        for i, site in enumerate(panel.sites):
            for j, stamp in enumerate(panel.times):
                mw = panel.x[i, j]
                if np.isnan(mw):
                    continue
                writer.writerow([site, format_rfc3339(stamp), repr(float(mw))])


def write_forecasts_csv(panel: ForecastPanel, path) -> None:
    with _open_text(path, "wt") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["site_id", "target_time"]
            + [f"q{k:02d}" for k in range(1, panel.grid.k + 1)]
        )
        for i, site in enumerate(panel.sites):
            for j, stamp in enumerate(panel.times):
                f = panel.cells[i, j]
                if f is None:
                    continue
                writer.writerow(
                    [site, format_rfc3339(stamp)]
                    + [repr(float(v)) for v in f.values]
                )


def write_sigma_csv(sites, sigma: np.ndarray, path) -> None:
    with _open_text(path, "wt") as fh:
        writer = csv.writer(fh)
        writer.writerow(["site_id"] + list(sites))
        for i, site in enumerate(sites):
            writer.writerow([site] + [repr(float(v)) for v in sigma[i]])


def read_sigma_csv(path) -> tuple[list[str], np.ndarray]:
    with _open_text(path) as fh:
        reader = csv.reader(fh)
        header = next(reader)
        sites = header[1:]
        rows = [[float(v) for v in row[1:]] for row in reader]
    return sites, np.asarray(rows, dtype=float)
