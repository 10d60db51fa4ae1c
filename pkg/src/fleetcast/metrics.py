"""Interval calibration metrics: coverage (PICP) and width (AIW) reports.

Coverage counts a record when the actual fleet total lies inside the interval,
boundaries included -- this matters for solar intervals clipped at zero.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

__all__ = ["IntervalRecord", "ReportRow", "EvalReport", "picp", "aiw", "hourly_report"]

# Miscoverage levels matching the standard four-column comparison tables.
DEFAULT_ALPHAS = (0.1, 0.2, 0.3, 0.4)

REPORT_COLUMNS = ("method", "alpha", "hour", "picp", "aiw", "n")


@dataclass(frozen=True)
class IntervalRecord:
    """One issued interval and the realized fleet total it is judged against."""

    time: object
    method: str
    alpha: float
    lo: float
    hi: float
    actual_total: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"interval lower bound {self.lo} above upper {self.hi}")

    @property
    def covered(self) -> bool:
        return self.lo <= self.actual_total <= self.hi

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def hour(self) -> int:
        return self.time.hour


@dataclass(frozen=True)
class ReportRow:
    method: str
    alpha: float
    hour: int | None  # None = pooled over all hours
    picp: float
    aiw: float
    n: int


def picp(records) -> float:
    """Percent of records whose actual lies inside the interval (inclusive)."""
    records = list(records)
    if not records:
        raise ValueError("picp requires at least one record")
    covered = sum(1 for r in records if r.covered)
    return 100.0 * covered / len(records)


def aiw(records) -> float:
    """Mean interval width in MW."""
    records = list(records)
    if not records:
        raise ValueError("aiw requires at least one record")
    return sum(r.width for r in records) / len(records)


@dataclass
class EvalReport:
    """Pooled and per-hour PICP/AIW rows for each (method, alpha) pair."""

    overall: list[ReportRow]
    hourly: list[ReportRow]

    def rows(self) -> list[ReportRow]:
        return list(self.overall) + list(self.hourly)

    def find(self, method: str, alpha: float, hour: int | None = None) -> ReportRow:
        pool = self.hourly if hour is not None else self.overall
        for row in pool:
            if row.method == method and abs(row.alpha - alpha) < 1e-12:
                if hour is None or row.hour == hour:
                    return row
        raise KeyError(f"no report row for {method} alpha={alpha} hour={hour}")

    @staticmethod
    def write_csv(rows, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(REPORT_COLUMNS)
            for row in rows:
                writer.writerow([
                    row.method,
                    repr(float(row.alpha)),
                    "all" if row.hour is None else row.hour,
                    repr(float(row.picp)),
                    repr(float(row.aiw)),
                    row.n,
                ])

    @staticmethod
    def format_table(rows) -> str:
        header = f"{'method':<8} {'alpha':>6} {'hour':>5} {'picp':>7} {'aiw':>12} {'n':>7}"
        lines = [header, "-" * len(header)]
        for row in rows:
            hour = "all" if row.hour is None else str(row.hour)
            lines.append(
                f"{row.method:<8} {row.alpha:>6.2f} {hour:>5} "
                f"{row.picp:>7.1f} {row.aiw:>12.1f} {row.n:>7d}"
            )
        return "\n".join(lines)


def _group_rows(records, key_hour: bool) -> list[ReportRow]:
    groups: dict = {}
    for r in records:
        key = (r.method, r.alpha, r.hour if key_hour else None)
        groups.setdefault(key, []).append(r)
    rows = []
    for (method, alpha, hour) in sorted(
        groups, key=lambda k: (k[0], k[1], -1 if k[2] is None else k[2])
    ):
        grp = groups[(method, alpha, hour)]
        rows.append(
            ReportRow(
                method=method,
                alpha=alpha,
                hour=hour,
                picp=picp(grp),
                aiw=aiw(grp),
                n=len(grp),
            )
        )
    return rows


def hourly_report(records) -> EvalReport:
    """Group records into pooled rows plus per-hour-of-day rows.

    Empty (method, alpha, hour) groups are simply absent. An empty record
    list produces an empty report.
    """
    records = list(records)
    if not records:
        return EvalReport(overall=[], hourly=[])
    return EvalReport(
        overall=_group_rows(records, key_hour=False),
        hourly=_group_rows(records, key_hour=True),
    )
