"""Quarterly panel ingestion, transformation, standardization, and backtest planning.

A panel is a balanced rectangular block of quarterly series.  Series enter in
levels and are made stationary with one of three transform codes (level,
log level, or 100 times the log difference), after which they can be
standardized column by column.  Expanding-window forecast origins are planned
against the transformed time index.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .errors import (
    ConstantSeries,
    MissingSeries,
    NonPositiveValue,
    OriginOutOfRange,
    RaggedPanel,
    UnparseableDate,
)

_QUARTER_RE = re.compile(r"^\s*(\d{4})\s*[Qq]\s*([1-4])\s*$")


@dataclass(frozen=True, order=True)
class Quarter:
    """A calendar quarter, ordered chronologically."""

    year: int
    quarter: int

    def __post_init__(self):
        if not 1 <= self.quarter <= 4:
            raise ValueError(f"quarter must be in 1..4, got {self.quarter}")

    @classmethod
    def parse(cls, text: str) -> "Quarter":
        m = _QUARTER_RE.match(str(text))
        if m is None:
            raise UnparseableDate(f"cannot parse quarterly date {text!r}")
        return cls(int(m.group(1)), int(m.group(2)))

    def __str__(self) -> str:
        return f"{self.year}Q{self.quarter}"

    def __add__(self, k: int) -> "Quarter":
        idx = self.year * 4 + (self.quarter - 1) + int(k)
        return Quarter(idx // 4, idx % 4 + 1)

    def __sub__(self, other: "Quarter") -> int:
        return (self.year * 4 + self.quarter) - (other.year * 4 + other.quarter)


class TransformCode(enum.Enum):
    """Per-series stationarity transform."""

    NONE = "none"
    LOG = "log"
    DIFF_LOG_100 = "diff_log_100"


@dataclass
class Panel:
    """A balanced quarterly panel with transform metadata.

    Attributes
    ----------
    names : list of str
        Series identifiers, in column order.
    times : list of Quarter
        Common time index of ``values``.
    values : ndarray, shape (n, p)
        One column per series.
    transform : list of TransformCode
        Transform assigned to each series (already applied or not; see
        `transform_panel`).
    standardization : (means, sds) or None
        Per-column affine state recorded by `standardize_panel`.
    """

    names: list[str]
    times: list[Quarter]
    values: np.ndarray
    transform: list[TransformCode]
    standardization: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise RaggedPanel("panel values must be a 2-d array")
        n, p = self.values.shape
        if len(self.names) != p or len(self.transform) != p or len(self.times) != n:
            raise RaggedPanel(
                f"inconsistent panel: {n} rows, {p} cols, {len(self.names)} names, "
                f"{len(self.times)} times, {len(self.transform)} transforms"
            )

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def column(self, name: str) -> np.ndarray:
        try:
            return self.values[:, self.names.index(name)]
        except ValueError:
            raise MissingSeries(f"series {name!r} not in panel") from None


@dataclass
class WindowPlan:
    """Expanding-window backtest plan.

    Every window starts at `start`; window ends (forecast origins) increase
    one quarter at a time from `first_origin`.  `horizons_for` returns only
    horizons whose target date is inside the sample.
    """

    origins: list[Quarter]
    horizons: list[int]
    start: Quarter
    first_origin: Quarter
    last_date: Quarter = field(default=None)  # type: ignore[assignment]

    def horizons_for(self, origin: Quarter) -> list[int]:
        return [h for h in self.horizons if (origin + h) - self.last_date <= 0]


def load_csv_panel(path, spec: list[tuple[str, TransformCode]]) -> Panel:
    """Read a quarterly CSV into a raw (untransformed) Panel.

    The file's first column holds dates like ``1960Q1``; the header row names
    the series.  Rows with missing values at the start or end of a requested
    series are trimmed to the largest fully observed span; interior gaps are
    an error.

    Parameters
    ----------
    path : str or Path
        CSV file, UTF-8, decimal point.
    spec : list of (name, TransformCode)
        Series to keep, in order, with the transform each will receive.
    """
    if not spec:
        raise MissingSeries("no series requested")
    df = pd.read_csv(path, encoding="utf-8")
    if df.shape[1] < 2:
        raise RaggedPanel("CSV must have a date column and at least one series")
    dates = [Quarter.parse(v) for v in df.iloc[:, 0]]
    if any((dates[i + 1] - dates[i]) != 1 for i in range(len(dates) - 1)):
        raise UnparseableDate("dates must be consecutive quarters")
    names = [name for name, _ in spec]
    missing = [nm for nm in names if nm not in df.columns]
    if missing:
        raise MissingSeries(f"series not found in file: {missing}")
    block = df[names].to_numpy(dtype=float)
    ok = np.isfinite(block).all(axis=1)
    if not ok.any():
        raise RaggedPanel("no fully observed rows")
    first, last = np.argmax(ok), len(ok) - 1 - np.argmax(ok[::-1])
    if not ok[first : last + 1].all():
        raise RaggedPanel("interior missing values: panel is not rectangular")
    return Panel(
        names=names,
        times=dates[first : last + 1],
        values=block[first : last + 1],
        transform=[code for _, code in spec],
    )


def write_csv_panel(panel: Panel, path) -> None:
    """Write a Panel back to the CSV layout accepted by `load_csv_panel`."""
    df = pd.DataFrame(panel.values, columns=panel.names)
    df.insert(0, "date", [str(t) for t in panel.times])
    df.to_csv(path, index=False, encoding="utf-8")


def apply_transform(series: np.ndarray, code: TransformCode) -> np.ndarray:
    """Apply one transform code to a single series.

    DIFF_LOG_100 returns ``100 * (log x_t - log x_{t-1})`` and is one
    observation shorter than the input; log-based codes require strictly
    positive levels.
    """
    x = np.asarray(series, dtype=float)
    if code is TransformCode.NONE:
        return x.copy()
    if np.any(x <= 0.0):
        raise NonPositiveValue(f"{code.value} requires strictly positive levels")
    if code is TransformCode.LOG:
        return np.log(x)
    return 100.0 * np.diff(np.log(x))


def invert_transform(transformed: np.ndarray, code: TransformCode, anchor: float | None = None) -> np.ndarray:
    """Undo `apply_transform`; DIFF_LOG_100 needs the pre-sample level `anchor`."""
    z = np.asarray(transformed, dtype=float)
    if code is TransformCode.NONE:
        return z.copy()
    if code is TransformCode.LOG:
        return np.exp(z)
    if anchor is None:
        raise ValueError("DIFF_LOG_100 inversion needs the anchoring first level")
    return anchor * np.exp(np.cumsum(z) / 100.0)


def transform_panel(panel: Panel) -> Panel:
    """Apply each series' transform code and rebalance the time index.

    Differenced series lose their first observation, so when any series uses
    DIFF_LOG_100 the whole panel is aligned on ``times[1:]``.
    """
    drops = [1 if c is TransformCode.DIFF_LOG_100 else 0 for c in panel.transform]
    lead = max(drops)
    cols = []
    for j, code in enumerate(panel.transform):
        z = apply_transform(panel.values[:, j], code)
        cols.append(z[lead - drops[j] :] if lead > drops[j] else z)
    return Panel(
        names=list(panel.names),
        times=panel.times[lead:],
        values=np.column_stack(cols),
        transform=list(panel.transform),
    )


def standardize_panel(panel: Panel) -> Panel:
    """Return a copy with columns scaled to mean 0 and sample sd 1 (n-1 denominator).

    The per-column (mean, sd) pair is recorded so forecasts can be mapped
    back to pre-standardization units.
    """
    means = panel.values.mean(axis=0)
    sds = panel.values.std(axis=0, ddof=1)
    if np.any(sds <= 0.0) or not np.all(np.isfinite(sds)):
        bad = [panel.names[j] for j in np.flatnonzero(~(sds > 0.0))]
        raise ConstantSeries(f"zero sample variance in series {bad}")
    return replace(
        panel,
        values=(panel.values - means) / sds,
        standardization=(means, sds),
    )


def destandardize_panel(panel: Panel) -> Panel:
    """Invert `standardize_panel` using the recorded (mean, sd) state."""
    if panel.standardization is None:
        raise ValueError("panel has no recorded standardization")
    means, sds = panel.standardization
    return replace(panel, values=panel.values * sds + means, standardization=None)


def plan_expanding_windows(panel: Panel, first_origin: Quarter, max_horizon: int) -> WindowPlan:
    """Plan an expanding-window backtest over the panel's time index.

    Windows all begin at the panel's first date; forecast origins run from
    `first_origin` up to one quarter before the sample end, so every origin
    scores at least the 1-step horizon.
    """
    if max_horizon < 1:
        raise ValueError("max_horizon must be >= 1")
    start, last = panel.times[0], panel.times[-1]
    if first_origin - start < 0 or last - first_origin < 1:
        raise OriginOutOfRange(
            f"first_origin {first_origin} must lie in [{start}, {last + (-1)}]"
        )
    n_orig = (last - first_origin)  # origins: first_origin .. last-1
    origins = [first_origin + k for k in range(n_orig)]
    return WindowPlan(
        origins=origins,
        horizons=list(range(1, max_horizon + 1)),
        start=start,
        first_origin=first_origin,
        last_date=last,
    )
