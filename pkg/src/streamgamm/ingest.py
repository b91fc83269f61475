"""Sensor CSV loading, 15-minute alignment, transforms, and summaries.

The ingest flow is: per-variable CSVs -> :class:`SensorSeries` ->
:func:`align` -> :class:`AlignedFrame` (response plus covariates on the
15-minute response lattice, with a validity mask and a gap table).

Timestamps are RFC 3339 UTC on the wire and int64 epoch seconds
internally.  All functions here are pure; nothing mutates shared state.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Mapping, Sequence

import numpy as np

from .errors import AlignmentError, DataError, EmptyInputError, SchemaError

GRID_STEP_S = 900
SECONDS_PER_DAY = 86400.0

#: Variables that must be non-negative; negative readings are sensor noise
#: and invalidate the row (keeps log(turbidity+1) out of its undefined region).
NONNEGATIVE_VARIABLES = ("turbidity", "cond")


def parse_timestamp(text: str) -> int:
    """Parse an RFC 3339 UTC timestamp to epoch seconds.

    Accepts 'Z' or an explicit numeric offset; naive timestamps are
    rejected.  Fractional seconds are rounded to the nearest second.
    """
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    # Python 3.10 fromisoformat only takes 3- or 6-digit fractions; pad.
    m = re.fullmatch(r"(.*T\d{2}:\d{2}:\d{2})\.(\d{1,6})(.*)", s)
    if m:
        s = f"{m.group(1)}.{m.group(2):<06s}{m.group(3)}"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        raise ValueError(f"timestamp {text!r} has no UTC offset")
    return round(dt.astimezone(timezone.utc).timestamp())


def format_timestamp(epoch_s: int) -> str:
    dt = datetime.fromtimestamp(int(epoch_s), tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class ColumnSchema:
    """Column mapping for :func:`load_series` input CSVs."""

    timestamp: str = "timestamp"
    value: str = "value"
    qc_flag: str | None = "qc_flag"


@dataclass
class LoadReport:
    rows_read: int = 0
    rows_kept: int = 0
    unparseable: int = 0
    duplicates: int = 0


@dataclass
class SensorSeries:
    """One variable's timestamped measurements with quality flags."""

    variable: str
    unit: str
    timestamps: np.ndarray  # int64 epoch seconds, strictly increasing
    values: np.ndarray  # float64, no NaN
    qc_flags: np.ndarray | None = None  # uint8, 0=pass 1=fail
    report: LoadReport | None = None

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.qc_flags is not None:
            self.qc_flags = np.asarray(self.qc_flags, dtype=np.uint8)
        if self.values.shape != self.timestamps.shape:
            raise DataError(
                f"{self.variable}: {self.values.size} values for "
                f"{self.timestamps.size} timestamps"
            )
        if self.qc_flags is not None and self.qc_flags.shape != self.timestamps.shape:
            raise DataError(f"{self.variable}: qc_flags length mismatch")
        if self.timestamps.size > 1 and not np.all(np.diff(self.timestamps) > 0):
            raise DataError(f"{self.variable}: timestamps not strictly increasing")
        if np.isnan(self.values).any():
            raise DataError(f"{self.variable}: NaN values are not allowed")

    def __len__(self) -> int:
        return self.timestamps.size


def load_series(
    path,
    schema: ColumnSchema | None = None,
    variable: str | None = None,
    unit: str = "",
) -> SensorSeries:
    """Load one variable's CSV into a sorted, de-duplicated SensorSeries.

    Rows with unparseable timestamps or values are dropped and counted in
    the attached :class:`LoadReport`; duplicated timestamps keep the first
    occurrence.  Flagged rows are retained (filtering happens in
    :func:`align`).
    """
    schema = schema or ColumnSchema()
    if variable is None:
        variable = str(path).rsplit("/", 1)[-1].rsplit(".", 1)[0]

    report = LoadReport()
    times: list[int] = []
    vals: list[float] = []
    flags: list[int] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in (schema.timestamp, schema.value):
            if col not in header:
                raise SchemaError(f"{path}: missing required column {col!r}")
        has_qc = schema.qc_flag is not None and schema.qc_flag in header
        for row in reader:
            report.rows_read += 1
            try:
                t = parse_timestamp(row[schema.timestamp])
                v = float(row[schema.value])
                if math.isnan(v):
                    raise ValueError("NaN value")
                f = 0
                if has_qc:
                    raw = (row[schema.qc_flag] or "").strip()
                    if raw:
                        f = 1 if float(raw) != 0.0 else 0
            except (ValueError, TypeError):
                report.unparseable += 1
                continue
            times.append(t)
            vals.append(v)
            flags.append(f)

    if not times:
        raise EmptyInputError(f"{path}: no parseable rows")

    order = np.argsort(np.asarray(times), kind="stable")
    t_arr = np.asarray(times, dtype=np.int64)[order]
    v_arr = np.asarray(vals, dtype=np.float64)[order]
    f_arr = np.asarray(flags, dtype=np.uint8)[order]
    keep = np.ones(t_arr.size, dtype=bool)
    keep[1:] = t_arr[1:] != t_arr[:-1]
    report.duplicates = int((~keep).sum())
    report.rows_kept = int(keep.sum())

    return SensorSeries(
        variable=variable,
        unit=unit,
        timestamps=t_arr[keep],
        values=v_arr[keep],
        qc_flags=f_arr[keep] if has_qc else None,
        report=report,
    )


@dataclass(frozen=True)
class Gap:
    """A run of absent 15-minute lattice rows between two grid entries."""

    start: int  # epoch seconds of the last grid instant before the gap
    end: int  # epoch seconds of the first grid instant after the gap
    missing_rows: int


@dataclass
class AlignedFrame:
    """Response and covariates on the 15-minute response lattice.

    Columns hold NaN where the source observation is absent, flagged, or
    anomalous; ``valid`` is true exactly where the response and every
    covariate are finite.
    """

    grid: np.ndarray  # int64 epoch seconds, strictly increasing, on lattice
    response: np.ndarray  # float64
    covariates: dict[str, np.ndarray]  # insertion-ordered
    valid: np.ndarray  # bool
    gaps: list[Gap] = field(default_factory=list)
    response_name: str = "nitrate"
    time_origin: int = 0  # epoch seconds anchoring the time_days column
    snap_duplicates: int = 0

    def __post_init__(self):
        n = self.grid.size
        if self.response.size != n or self.valid.size != n:
            raise DataError("aligned columns must share the grid length")
        for name, col in self.covariates.items():
            if col.size != n:
                raise DataError(f"covariate {name!r} length mismatch")
        if n > 1:
            steps = np.diff(self.grid)
            if np.any(steps <= 0) or np.any(steps % GRID_STEP_S != 0):
                raise AlignmentError("grid spacing must be a positive multiple of 15 minutes")

    @property
    def n_rows(self) -> int:
        return self.grid.size

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())

    def column(self, name: str) -> np.ndarray:
        if name == self.response_name:
            return self.response
        return self.covariates[name]


def _gap_table(grid: np.ndarray) -> list[Gap]:
    gaps = []
    steps = np.diff(grid)
    for i in np.nonzero(steps > GRID_STEP_S)[0]:
        gaps.append(
            Gap(
                start=int(grid[i]),
                end=int(grid[i + 1]),
                missing_rows=int(steps[i] // GRID_STEP_S - 1),
            )
        )
    return gaps


def _select_at_or_before(series: SensorSeries, grid: np.ndarray, tolerance: float) -> np.ndarray:
    """Last observation at-or-before each grid instant within tolerance.

    Absent or flagged selections come back as NaN.
    """
    idx = np.searchsorted(series.timestamps, grid, side="right") - 1
    out = np.full(grid.size, np.nan)
    ok = idx >= 0
    within = np.zeros(grid.size, dtype=bool)
    within[ok] = (grid[ok] - series.timestamps[idx[ok]]) <= tolerance
    out[within] = series.values[idx[within]]
    if series.qc_flags is not None:
        flagged = np.zeros(grid.size, dtype=bool)
        flagged[within] = series.qc_flags[idx[within]] == 1
        out[flagged] = np.nan
    return out


def align(
    nitrate: SensorSeries,
    others: Sequence[SensorSeries],
    tolerance: float = 60.0,
    time_origin: int | None = None,
) -> AlignedFrame:
    """Align covariates onto the response's 15-minute lattice.

    The grid is the response timestamps snapped to the lattice; each
    covariate contributes its last observation at-or-before each grid
    instant within ``tolerance`` seconds.  Rows with a flagged response,
    a flagged or absent covariate, or an anomalous (negative turbidity /
    conductance) reading are invalid.  turbidity becomes
    log(turbidity+1); a fractional-days time index is appended.
    """
    if len(nitrate) == 0:
        raise EmptyInputError("response series is empty")
    if tolerance < 0:
        raise ValueError("tolerance must be >= 0")

    ts = nitrate.timestamps
    snapped = ((ts + GRID_STEP_S // 2) // GRID_STEP_S) * GRID_STEP_S
    off = np.abs(ts - snapped) > tolerance
    if off.any():
        names = ", ".join(format_timestamp(t) for t in ts[off][:10])
        raise AlignmentError(
            f"{int(off.sum())} response timestamps are not within {tolerance:g}s "
            f"of the 15-minute lattice: {names}"
        )

    keep = np.ones(snapped.size, dtype=bool)
    keep[1:] = snapped[1:] != snapped[:-1]
    snap_duplicates = int((~keep).sum())
    grid = snapped[keep]

    response = nitrate.values[keep].astype(np.float64).copy()
    if nitrate.qc_flags is not None:
        response[nitrate.qc_flags[keep] == 1] = np.nan

    covariates: dict[str, np.ndarray] = {}
    for series in others:
        col = _select_at_or_before(series, grid, tolerance)
        name = series.variable
        if name in NONNEGATIVE_VARIABLES:
            col[col < 0] = np.nan
        if name == "turbidity":
            col = np.log1p(col)
            name = "log_turbidity"
        if name in covariates:
            raise SchemaError(f"duplicate covariate name {name!r}")
        covariates[name] = col

    origin = int(grid[0]) if time_origin is None else int(time_origin)
    if "time_days" not in covariates:
        covariates["time_days"] = (grid - origin) / SECONDS_PER_DAY

    valid = np.isfinite(response)
    for col in covariates.values():
        valid &= np.isfinite(col)
    if not valid.any():
        raise EmptyInputError("alignment produced no valid rows")

    return AlignedFrame(
        grid=grid,
        response=response,
        covariates=covariates,
        valid=valid,
        gaps=_gap_table(grid),
        response_name=nitrate.variable or "nitrate",
        time_origin=origin,
        snap_duplicates=snap_duplicates,
    )


@dataclass(frozen=True)
class ColumnSummary:
    min: float
    q1: float
    median: float
    mean: float
    q3: float
    max: float
    count: int
    missing: int


def summarize(frame: AlignedFrame) -> dict[str, ColumnSummary]:
    """Per-column distribution summary over finite entries.

    Quartiles use linear interpolation of order statistics; ``missing``
    counts grid rows where the column itself is absent.
    """
    if frame.n_valid < 1:
        raise EmptyInputError("frame has no valid rows")
    out: dict[str, ColumnSummary] = {}
    cols = {frame.response_name: frame.response, **frame.covariates}
    for name, col in cols.items():
        finite = col[np.isfinite(col)]
        if finite.size == 0:
            out[name] = ColumnSummary(*(math.nan,) * 6, count=0, missing=int(col.size))
            continue
        q1, med, q3 = np.quantile(finite, [0.25, 0.5, 0.75])
        out[name] = ColumnSummary(
            min=float(finite.min()),
            q1=float(q1),
            median=float(med),
            mean=float(finite.mean()),
            q3=float(q3),
            max=float(finite.max()),
            count=int(finite.size),
            missing=int(col.size - finite.size),
        )
    return out


def frame_to_csv(frame: AlignedFrame, path) -> None:
    """Write the frame as a wide CSV, round-trippable bit-exactly."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["timestamp", frame.response_name, *frame.covariates.keys(), "valid"]
        )
        cols = [frame.response, *frame.covariates.values()]
        for i, t in enumerate(frame.grid):
            row = [format_timestamp(t)]
            for col in cols:
                v = col[i]
                row.append("" if not np.isfinite(v) else "%.17g" % v)
            row.append("1" if frame.valid[i] else "0")
            writer.writerow(row)


def frame_from_csv(path) -> AlignedFrame:
    """Read a frame written by :func:`frame_to_csv`."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "timestamp" or header[-1] != "valid":
            raise SchemaError(f"{path}: not an aligned-frame CSV")
        names = header[1:-1]
        if not names:
            raise SchemaError(f"{path}: no data columns")
        rows = list(reader)
    if not rows:
        raise EmptyInputError(f"{path}: no rows")

    grid = np.array([parse_timestamp(r[0]) for r in rows], dtype=np.int64)
    data = np.full((len(rows), len(names)), np.nan)
    for i, r in enumerate(rows):
        for j, cell in enumerate(r[1:-1]):
            if cell != "":
                data[i, j] = float(cell)

    response = data[:, 0]
    covariates = {name: data[:, j + 1] for j, name in enumerate(names[1:])}
    valid = np.isfinite(response)
    for col in covariates.values():
        valid &= np.isfinite(col)

    origin = int(grid[0])
    td = covariates.get("time_days")
    if td is not None and np.isfinite(td[0]):
        origin = int(grid[0] - round(td[0] * SECONDS_PER_DAY))
    return AlignedFrame(
        grid=grid,
        response=response,
        covariates=covariates,
        valid=valid,
        gaps=_gap_table(grid),
        response_name=names[0],
        time_origin=origin,
    )
