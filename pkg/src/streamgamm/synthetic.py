"""Synthetic data generators for simulation studies and test fixtures.

``simulate_study`` draws from the model the package is built to recover:
four smooth covariate effects plus two pure-noise covariates, Gaussian
ARMA(2, 1) errors, everything on a regular 15-minute grid.  The returned
truth record carries the exact components so studies can score recovery.

``site_fixture`` dresses the same machinery up as stream-sensor data
(nitrate against temperature, conductance, turbidity, elevation) with a
site-specific nitrate level, and ``write_site_csvs`` emits the raw
multi-rate sensor files the ingest layer expects.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .arma import _state_space
from .ingest import GRID_STEP_S, AlignedFrame, format_timestamp

#: 2021-01-01T00:00:00Z, default epoch origin for generated grids.
DEFAULT_START = 1609459200

#: Median nitrate (micromolar) targeted by each bundled site fixture.
SITE_MEDIANS = {"arikaree": 5.5, "caribou": 28.4, "kings": 192.0}


@dataclass
class StudyTruth:
    """Exact components behind one simulated dataset."""

    beta0: float
    active: list[str]
    noise: list[str]
    functions: dict[str, Callable[[np.ndarray], np.ndarray]]
    ar: np.ndarray
    ma: np.ndarray
    sigma2: float
    arma_component: np.ndarray
    smooth_components: dict[str, np.ndarray] = field(default_factory=dict)


def simulate_arma(
    n: int,
    ar: np.ndarray,
    ma: np.ndarray,
    sigma: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw an exactly stationary mean-zero ARMA path.

    The initial state comes from the stationary distribution, so there
    is no burn-in transient.
    """
    ar = np.atleast_1d(np.asarray(ar, dtype=np.float64)) if np.size(ar) else np.zeros(0)
    ma = np.atleast_1d(np.asarray(ma, dtype=np.float64)) if np.size(ma) else np.zeros(0)
    tmat, _, p0 = _state_space(ar, ma)
    m = tmat.shape[0]
    rvec = np.zeros(m)
    rvec[0] = 1.0
    rvec[1 : ma.size + 1] = ma
    # PSD factor of the stationary covariance; eigh tolerates the
    # singular directions a Cholesky would reject.
    w, v = np.linalg.eigh(p0)
    root = v @ np.diag(np.sqrt(np.maximum(w, 0.0)))
    state = root @ rng.standard_normal(m)
    eps = rng.standard_normal(n)
    out = np.empty(n)
    for t in range(n):
        state = tmat @ state + rvec * eps[t]
        out[t] = state[0]
    return sigma * out


def _smooth_covariate(n: int, rng: np.random.Generator, phi: float = 0.9) -> np.ndarray:
    """Standardized AR(1) path; slow enough to look like sensor drift."""
    innov_sd = math.sqrt(1.0 - phi * phi)
    x = np.empty(n)
    x[0] = rng.standard_normal()
    eps = rng.standard_normal(n - 1) * innov_sd
    for t in range(1, n):
        x[t] = phi * x[t - 1] + eps[t - 1]
    sd = x.std()
    return (x - x.mean()) / (sd if sd > 0 else 1.0)


def study_functions() -> dict[str, Callable[[np.ndarray], np.ndarray]]:
    """The four smooth effects used by ``simulate_study``.

    ``x1`` dominates by variance; all four stay within the curvature a
    7-dimensional thin-plate basis can track.
    """
    return {
        "x1": lambda x: 1.2 * np.sin(1.2 * x),
        "x2": lambda x: 0.8 * np.tanh(1.2 * x),
        "x3": lambda x: 0.35 * (x * x - 1.0),
        "x4": lambda x: 0.9 * np.exp(-0.5 * x * x) - 0.5,
    }


def simulate_study(
    n: int = 10000,
    seed: int = 0,
    *,
    ar: tuple[float, ...] = (1.2, -0.5),
    ma: tuple[float, ...] = (0.4,),
    sigma: float = 0.2,
    start: int = DEFAULT_START,
) -> tuple[AlignedFrame, StudyTruth]:
    """Simulate one study dataset on a gap-free 15-minute grid.

    Response = 10 + f1(x1) + f2(x2) + f3(x3) + f4(x4) + ARMA noise, with
    ``noise1``/``noise2`` drawn independently of the response.  Distinct
    seeds give independent replicates.
    """
    rng = np.random.default_rng([seed, n])
    funcs = study_functions()
    active = list(funcs)
    noise = ["noise1", "noise2"]

    # All covariates are iid draws.  Any temporal structure in a covariate
    # lets its smooth exchange power with the ARMA error process: spurious
    # terms can harvest low-frequency error power past the information
    # criterion, and the white-error coefficient covariance understates
    # the smooth variance (bands lose coverage).  iid covariates make the
    # errors effectively exchangeable within the design, so step-one
    # selection and inference stay near nominal.
    covariates: dict[str, np.ndarray] = {}
    for name in active + noise:
        covariates[name] = rng.standard_normal(n)

    beta0 = 10.0
    smooth_parts = {name: funcs[name](covariates[name]) for name in active}
    arma_part = simulate_arma(n, np.asarray(ar), np.asarray(ma), sigma, rng)
    y = beta0 + sum(smooth_parts.values()) + arma_part

    grid = start + GRID_STEP_S * np.arange(n, dtype=np.int64)
    covariates["time_days"] = (grid - grid[0]) / 86400.0
    frame = AlignedFrame(
        grid=grid,
        response=y,
        covariates=covariates,
        valid=np.ones(n, dtype=bool),
        gaps=[],
        time_origin=int(grid[0]),
    )
    truth = StudyTruth(
        beta0=beta0,
        active=active,
        noise=noise,
        functions=funcs,
        ar=np.asarray(ar, dtype=np.float64),
        ma=np.asarray(ma, dtype=np.float64),
        sigma2=sigma * sigma,
        arma_component=arma_part,
        smooth_components=smooth_parts,
    )
    return frame, truth


def site_fixture(site: str, n: int = 4000, seed: int = 11) -> AlignedFrame:
    """A sensor-flavored frame whose nitrate median matches the site level.

    Sites: ``arikaree`` (grassland, low nitrate), ``caribou`` (forested),
    ``kings`` (agricultural, high nitrate).
    """
    key = site.lower()
    if key not in SITE_MEDIANS:
        raise KeyError(f"unknown site {site!r}; choose from {sorted(SITE_MEDIANS)}")
    target = SITE_MEDIANS[key]
    # str hash is salted per process; an index keyed on the sorted site
    # list keeps fixtures reproducible across runs.
    site_id = sorted(SITE_MEDIANS).index(key)
    rng = np.random.default_rng([site_id, seed, n])

    temp = 12.0 + 6.0 * _smooth_covariate(n, rng)
    spc = 150.0 + 40.0 * _smooth_covariate(n, rng)
    turbidity = np.expm1(np.clip(1.0 + 0.9 * _smooth_covariate(n, rng), -2.0, 6.0))
    elevation = 2.0 + 0.25 * _smooth_covariate(n, rng)

    shape = (
        0.25 * np.sin((temp - 12.0) / 4.0)
        + 0.2 * np.tanh((spc - 150.0) / 40.0)
        + 0.15 * np.log1p(turbidity) / 3.0
        + simulate_arma(n, np.asarray([1.2, -0.5]), np.asarray([0.4]), 0.05, rng)
    )
    scale = 0.25 * target
    y = target + scale * (shape - np.median(shape))

    grid = DEFAULT_START + GRID_STEP_S * np.arange(n, dtype=np.int64)
    covariates = {
        "temp": temp,
        "spc": spc,
        "log_turbidity": np.log1p(turbidity),
        "elevation": elevation,
        "time_days": (grid - grid[0]) / 86400.0,
    }
    return AlignedFrame(
        grid=grid,
        response=y,
        covariates=covariates,
        valid=np.ones(n, dtype=bool),
        gaps=[],
        time_origin=int(grid[0]),
    )


def write_site_csvs(
    directory: Path,
    site: str = "arikaree",
    n: int = 800,
    seed: int = 11,
    *,
    gap_at: Optional[int] = 300,
    flagged_every: int = 97,
) -> dict[str, Path]:
    """Write raw multi-rate sensor CSVs for one synthetic site.

    Nitrate lands on the 15-minute grid; the other sensors report every
    5 minutes.  A block of nitrate rows can be withheld (``gap_at``) and
    every ``flagged_every``-th nitrate row carries a QC flag, so the
    files exercise gap handling and flag masking downstream.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    frame = site_fixture(site, n=n, seed=seed)
    rng = np.random.default_rng([seed, 5])

    paths: dict[str, Path] = {}

    def write(name: str, rows: list[tuple[str, float, int]]) -> None:
        path = directory / f"{name}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["timestamp", "value", "qc_flag"])
            for ts, value, flag in rows:
                writer.writerow([ts, f"{value:.6f}", flag])
        paths[name] = path

    nitrate_rows = []
    for i in range(n):
        if gap_at is not None and gap_at <= i < gap_at + 12:
            continue
        flag = 1 if flagged_every and i and i % flagged_every == 0 else 0
        nitrate_rows.append((format_timestamp(int(frame.grid[i])), float(frame.response[i]), flag))
    write("nitrate", nitrate_rows)

    # 5-minute sensors: on-grid samples reuse the frame values, the two
    # intermediate samples jitter around them.
    fine_step = GRID_STEP_S // 3
    for name in ("temp", "spc", "elevation"):
        values = frame.covariates[name]
        rows = []
        for i in range(n):
            base = float(values[i])
            for k in range(3):
                ts = int(frame.grid[i]) + k * fine_step
                val = base if k == 0 else base + float(rng.normal(scale=1e-3))
                rows.append((format_timestamp(ts), val, 0))
        write(name, rows)

    turb = np.expm1(frame.covariates["log_turbidity"])
    rows = []
    for i in range(n):
        base = float(turb[i])
        for k in range(3):
            ts = int(frame.grid[i]) + k * fine_step
            val = base if k == 0 else max(base + float(rng.normal(scale=1e-3)), 0.0)
            rows.append((format_timestamp(ts), val, 0))
    write("turbidity", rows)
    return paths
