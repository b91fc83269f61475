"""Structured JSON reports for CLI runs.

Sections are plain dicts assembled from fitted objects; writing is
byte-deterministic (sorted keys, fixed indentation, no timestamps).
Non-finite numbers are encoded portably: infinities as the strings
"inf" / "-inf", NaN as null.  The shipped JSON schema documents the
shape for downstream consumers.
"""

from __future__ import annotations

import json
import math
from importlib import resources
from pathlib import Path

from . import __version__
from .arma import ArmaFit
from .gam import GamFit
from .gamm import GammModel, ImportanceReport
from .ingest import AlignedFrame, ColumnSummary, format_timestamp

SCHEMA_RESOURCE = "report.schema.json"


def schema_path() -> Path:
    """Filesystem path of the bundled report schema."""
    return Path(str(resources.files("streamgamm.schemas") / SCHEMA_RESOURCE))


def load_schema() -> dict:
    with open(schema_path()) as fh:
        return json.load(fh)


def sanitize(obj):
    """Recursively make a report JSON-safe (inf/nan have no JSON form)."""
    if isinstance(obj, dict):
        return {k: sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, float):
        if math.isnan(obj):
            return None
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    return obj


def data_section(frame: AlignedFrame) -> dict:
    missing = sum(g.missing_rows for g in frame.gaps)
    return {
        "response": frame.response_name,
        "covariates": list(frame.covariates),
        "n_rows": frame.n_rows,
        "n_valid": frame.n_valid,
        "grid_start": format_timestamp(int(frame.grid[0])),
        "grid_end": format_timestamp(int(frame.grid[-1])),
        "n_gaps": len(frame.gaps),
        "gap_missing_rows": int(missing),
    }


def summary_section(summaries: dict[str, ColumnSummary]) -> dict:
    out = {}
    for name, s in summaries.items():
        out[name] = {
            "min": s.min,
            "q1": s.q1,
            "median": s.median,
            "mean": s.mean,
            "q3": s.q3,
            "max": s.max,
            "count": s.count,
            "missing": s.missing,
        }
    return out


def vif_section(table: dict[str, float], threshold: float, excluded: list[str]) -> dict:
    return {
        "table": dict(table),
        "threshold": threshold,
        "excluded": sorted(excluded),
    }


def gam_section(fit: GamFit) -> dict:
    return {
        "selected": fit.term_names,
        "lambdas": {t.name: t.lam for t in fit.terms},
        "edf": {t.name: t.edf for t in fit.terms},
        "total_edf": fit.total_edf,
        "n": fit.n,
        "rss": fit.rss,
        "tss": fit.tss,
        "sigma2": fit.sigma2,
        "deviance_explained": fit.deviance_explained,
        "aic": fit.aic,
        "gcv": fit.gcv,
        "intercept": fit.intercept,
        "converged": fit.converged,
    }


def arma_section(fit: ArmaFit) -> dict:
    out = {
        "p": fit.p,
        "q": fit.q,
        "ar": [float(v) for v in fit.ar],
        "ma": [float(v) for v in fit.ma],
        "sigma2": fit.sigma2,
        "loglik": fit.loglik,
        "aic": fit.aic,
        "n_obs": fit.n_obs,
        "converged": fit.converged,
        "segmented": fit.segmented,
    }
    if fit.search is not None:
        out["grid"] = [
            {
                "p": c.p,
                "q": c.q,
                "aic": c.aic,
                "loglik": c.loglik,
                "converged": c.converged,
                "error": c.error,
            }
            for c in fit.search.cells
        ]
    return out


def comparison_section(model: GammModel) -> dict:
    return {
        "aaic_gam": model.aaic_gam,
        "aaic_gamm": model.aaic_gamm,
        "preferred": model.preferred,
        "de_gam": model.de_gam,
        "de_arma": model.de_arma,
        "de_total": model.de_total,
    }


def importance_section(report: ImportanceReport) -> dict:
    return {
        "entries": [
            {
                "name": e.name,
                "importance_pct": e.importance_pct,
                "de_total_without": e.de_total_without,
                "converged": e.converged,
                "error": e.error,
            }
            for e in report.entries
        ],
        "arma_share_pct": report.arma_share_pct,
        "de_total_pct": report.de_total_pct,
        "ranking": report.ranking,
    }


def build_report(stage: str, **sections) -> dict:
    report = {"version": __version__, "stage": stage}
    for name, value in sections.items():
        if value is not None:
            report[name] = value
    return sanitize(report)


def write_report(path: Path, report: dict) -> None:
    text = json.dumps(report, sort_keys=True, indent=2, allow_nan=False) + "\n"
    Path(path).write_text(text)
