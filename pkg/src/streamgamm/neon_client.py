"""Client for the NEON data API: list, download, verify, unpack.

Downloads are atomic (written to a side file, renamed only after the
md5 checksum verifies) and idempotent (a file that already exists with
the right checksum is skipped).  Transient transport failures retry with
exponential backoff; missing products or sites do not.

``DEFAULT_REGISTRY`` maps this package's variable names to the NEON
products and columns they come from, so ``unpack`` can turn a downloaded
month of files into :class:`~streamgamm.ingest.SensorSeries` without any
per-site configuration.  The base URL can be overridden per call or via
``STREAMGAMM_NEON_BASE_URL``, which the offline tests use to point at a
local server.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import requests

from .errors import DataError, IntegrityError, NotFoundError, TransportError
from .ingest import ColumnSchema, SensorSeries, load_series

DEFAULT_BASE_URL = "https://data.neonscience.org/api/v0"
DEFAULT_RELEASE = "RELEASE-2021"

#: Local standard-time offsets (hours from UTC) for the documented
#: stream sites; used only to annotate plot time axes.
SITE_UTC_OFFSET = {"ARIK": -7, "CARI": -8, "LEWI": -5}

_MONTH_RE = re.compile(r"^\d{4}-(0[1-9]|1[0-2])$")

#: Retry schedule for transient transport errors (seconds).
_BACKOFF = (0.5, 1.0, 2.0)

_TIMEOUT = 60.0


@dataclass(frozen=True)
class VariableSpec:
    """Where one model variable lives inside the NEON catalog."""

    variable: str
    product: str
    file_pattern: str  # substring of the data file name
    value_col: str
    qc_col: str
    unit: str
    timestamp_col: str = "startDateTime"


DEFAULT_REGISTRY: dict[str, VariableSpec] = {
    "nitrate": VariableSpec(
        "nitrate", "DP1.20033.001", "NSW_15_minute", "surfWaterNitrateMean", "finalQF", "uM"
    ),
    "temp": VariableSpec(
        "temp", "DP1.20053.001", "TSW_5min", "surfWaterTempMean", "finalQF", "degC"
    ),
    "spc": VariableSpec(
        "spc",
        "DP1.20288.001",
        "waq_instantaneous",
        "specificConductance",
        "specificCondFinalQF",
        "uS/cm",
    ),
    "turbidity": VariableSpec(
        "turbidity", "DP1.20288.001", "waq_instantaneous", "turbidity", "turbidityFinalQF", "NTU"
    ),
    "elevation": VariableSpec(
        "elevation",
        "DP1.20016.001",
        "EOS_5_min",
        "surfacewaterElevMean",
        "sWatElevFinalQF",
        "m",
    ),
}


@dataclass(frozen=True)
class ProductRequest:
    """One product / site / month-range request."""

    product: str
    site: str
    start_month: str
    end_month: str
    package: str = "basic"
    release: str = DEFAULT_RELEASE

    def __post_init__(self):
        for label, value in (("start_month", self.start_month), ("end_month", self.end_month)):
            if not _MONTH_RE.match(value):
                raise DataError(f"{label} must be YYYY-MM, got {value!r}")
        if self.end_month < self.start_month:
            raise DataError("end_month precedes start_month")

    def months(self) -> list[str]:
        year, month = map(int, self.start_month.split("-"))
        end_year, end_month = map(int, self.end_month.split("-"))
        out = []
        while (year, month) <= (end_year, end_month):
            out.append(f"{year:04d}-{month:02d}")
            month += 1
            if month > 12:
                month = 1
                year += 1
        return out


@dataclass(frozen=True)
class FileEntry:
    name: str
    size: int
    md5: str
    url: str


@dataclass
class FetchResult:
    """Outcome of one :func:`fetch` call."""

    entries: list[FileEntry]
    paths: dict[str, Path]
    skipped: list[str] = field(default_factory=list)


def _base_url(base_url: Optional[str]) -> str:
    if base_url:
        return base_url.rstrip("/")
    return os.environ.get("STREAMGAMM_NEON_BASE_URL", DEFAULT_BASE_URL).rstrip("/")


def _get(url: str, params: Optional[dict] = None) -> requests.Response:
    """GET with bounded retries on transient failures."""
    last: Optional[Exception] = None
    for attempt, pause in enumerate(_BACKOFF + (None,)):
        try:
            resp = requests.get(url, params=params, timeout=_TIMEOUT)
        except requests.RequestException as exc:
            last = exc
            if pause is None:
                break
            time.sleep(pause)
            continue
        if resp.status_code == 404:
            raise NotFoundError(f"not found: {url}")
        if resp.status_code >= 500:
            last = TransportError(f"server error {resp.status_code} for {url}")
            if pause is None:
                break
            time.sleep(pause)
            continue
        if resp.status_code != 200:
            raise TransportError(f"unexpected status {resp.status_code} for {url}")
        return resp
    raise TransportError(f"request failed after {len(_BACKOFF) + 1} attempts: {last}")


def list_files(req: ProductRequest, base_url: Optional[str] = None) -> list[FileEntry]:
    """All data files for the request, sorted by name.

    One API call per month; months with no data contribute nothing
    rather than failing, but a product/site unknown to the API raises
    :class:`NotFoundError`.
    """
    base = _base_url(base_url)
    entries: dict[str, FileEntry] = {}
    for month in req.months():
        url = f"{base}/data/{req.product}/{req.site}/{month}"
        try:
            resp = _get(url, params={"package": req.package, "release": req.release})
        except NotFoundError:
            continue
        payload = resp.json()
        files = (payload.get("data") or {}).get("files") or []
        for f in files:
            try:
                entry = FileEntry(
                    name=str(f["name"]),
                    size=int(f.get("size", 0)),
                    md5=str(f.get("md5", "")),
                    url=str(f["url"]),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise TransportError(f"malformed file listing from {url}: {exc}") from exc
            entries[entry.name] = entry
    if not entries:
        raise NotFoundError(
            f"no files for {req.product} at {req.site} in "
            f"{req.start_month}..{req.end_month} ({req.release})"
        )
    return [entries[name] for name in sorted(entries)]


def _md5_of(path: Path) -> str:
    digest = hashlib.md5()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _download_one(entry: FileEntry, dest_dir: Path) -> tuple[str, Path, bool]:
    """Fetch one file atomically; returns (name, path, skipped)."""
    target = dest_dir / entry.name
    if target.exists() and entry.md5 and _md5_of(target) == entry.md5:
        return entry.name, target, True
    part = target.with_name(target.name + ".part")
    resp = _get(entry.url)
    part.write_bytes(resp.content)
    if entry.md5:
        got = _md5_of(part)
        if got != entry.md5:
            part.unlink(missing_ok=True)
            raise IntegrityError(f"checksum mismatch for {entry.name}: {got} != {entry.md5}")
    os.replace(part, target)
    return entry.name, target, False


def fetch(
    req: ProductRequest,
    dest_dir: Path,
    base_url: Optional[str] = None,
    max_workers: int = 4,
) -> FetchResult:
    """Download every file for the request into ``dest_dir``.

    Already-verified files are left alone.  A manifest of what the
    directory should contain is written alongside as ``manifest.json``.
    """
    dest_dir = Path(dest_dir)
    dest_dir.mkdir(parents=True, exist_ok=True)
    entries = list_files(req, base_url=base_url)
    result = FetchResult(entries=entries, paths={})
    workers = max(1, min(max_workers, len(entries)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for name, path, skipped in pool.map(lambda e: _download_one(e, dest_dir), entries):
            result.paths[name] = path
            if skipped:
                result.skipped.append(name)
    manifest = [
        {"name": e.name, "size": e.size, "md5": e.md5, "url": e.url} for e in entries
    ]
    with open(dest_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    result.skipped.sort()
    return result


def merge_series(parts: list[SensorSeries]) -> SensorSeries:
    """Concatenate monthly series into one, sorted with first-kept dupes."""
    if not parts:
        raise DataError("no series to merge")
    ts = np.concatenate([p.timestamps for p in parts])
    vals = np.concatenate([p.values for p in parts])
    flags = None
    if all(p.qc_flags is not None for p in parts):
        flags = np.concatenate([p.qc_flags for p in parts])
    order = np.argsort(ts, kind="stable")
    ts, vals = ts[order], vals[order]
    if flags is not None:
        flags = flags[order]
    keep = np.ones(ts.size, dtype=bool)
    keep[1:] = np.diff(ts) > 0
    return SensorSeries(
        variable=parts[0].variable,
        unit=parts[0].unit,
        timestamps=ts[keep],
        values=vals[keep],
        qc_flags=flags[keep] if flags is not None else None,
    )


def unpack(
    data_dir: Path,
    variable: str,
    registry: Optional[dict[str, VariableSpec]] = None,
) -> SensorSeries:
    """Build one variable's series from downloaded files in a directory.

    Matching files are located by the registry's name pattern; each is
    parsed with the registry's column mapping and the monthly pieces are
    merged in time order.
    """
    registry = registry or DEFAULT_REGISTRY
    if variable not in registry:
        raise DataError(f"unknown variable {variable!r}; registry has {sorted(registry)}")
    spec = registry[variable]
    data_dir = Path(data_dir)
    matches = sorted(p for p in data_dir.rglob("*.csv") if spec.file_pattern in p.name)
    if not matches:
        raise NotFoundError(f"no files matching {spec.file_pattern!r} under {data_dir}")
    schema = ColumnSchema(
        timestamp=spec.timestamp_col, value=spec.value_col, qc_flag=spec.qc_col
    )
    parts = [load_series(p, schema=schema, variable=variable, unit=spec.unit) for p in matches]
    return merge_series(parts)


def fetch_variables(
    dest_dir: Path,
    site: str,
    start_month: str,
    end_month: str,
    variables: Optional[list[str]] = None,
    base_url: Optional[str] = None,
    package: str = "basic",
    release: str = DEFAULT_RELEASE,
    registry: Optional[dict[str, VariableSpec]] = None,
) -> dict[str, SensorSeries]:
    """Fetch and unpack every requested variable for one site.

    Products shared by several variables are downloaded once.  Returns
    the unpacked series keyed by variable name.
    """
    registry = registry or DEFAULT_REGISTRY
    variables = variables or list(registry)
    unknown = [v for v in variables if v not in registry]
    if unknown:
        raise DataError(f"unknown variables {unknown}; registry has {sorted(registry)}")
    dest_dir = Path(dest_dir)
    products = sorted({registry[v].product for v in variables})
    for product in products:
        req = ProductRequest(
            product=product,
            site=site,
            start_month=start_month,
            end_month=end_month,
            package=package,
            release=release,
        )
        fetch(req, dest_dir / product, base_url=base_url)
    out = {}
    for v in variables:
        out[v] = unpack(dest_dir / registry[v].product, v, registry=registry)
    return out
