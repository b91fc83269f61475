"""Run configuration: INI file, environment overrides, CLI overrides.

Precedence is CLI flag > ``STREAMGAMM_<SECTION>_<KEY>`` environment
variable > config file > built-in default.  Sections group the knobs by
pipeline stage; unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from .errors import SchemaError

#: (section, key) -> RunConfig attribute; also defines the legal key set.
_KEYMAP = {
    ("run", "output_dir"): "output_dir",
    ("run", "seed"): "seed",
    ("run", "threads"): "threads",
    ("inputs", "nitrate"): "nitrate_path",
    ("inputs", "covariates"): "covariate_paths",
    ("align", "tolerance_s"): "tolerance_s",
    ("model", "candidates"): "candidates",
    ("model", "basis_dim"): "basis_dim",
    ("model", "p_max"): "p_max",
    ("model", "q_max"): "q_max",
    ("model", "min_valid_rows"): "min_valid_rows",
    ("model", "segmented"): "segmented",
    ("model", "vif_threshold"): "vif_threshold",
    ("neon", "site"): "neon_site",
    ("neon", "start_month"): "neon_start_month",
    ("neon", "end_month"): "neon_end_month",
    ("neon", "base_url"): "neon_base_url",
    ("neon", "release"): "neon_release",
    ("neon", "package"): "neon_package",
    ("plots", "window_days"): "window_days",
    ("plots", "window_start"): "window_start",
}

_INT_ATTRS = {"seed", "threads", "basis_dim", "p_max", "q_max", "min_valid_rows"}
_FLOAT_ATTRS = {"tolerance_s", "vif_threshold", "window_days"}


@dataclass
class RunConfig:
    """Everything a CLI run needs, with sensible defaults."""

    output_dir: str = "out"
    seed: int = 0
    threads: Optional[int] = None
    nitrate_path: Optional[str] = None
    covariate_paths: dict[str, str] = field(default_factory=dict)
    tolerance_s: float = 60.0
    candidates: list[str] = field(default_factory=list)
    basis_dim: int = 7
    p_max: int = 5
    q_max: int = 5
    min_valid_rows: int = 500
    segmented: bool = False
    vif_threshold: float = 6.0
    neon_site: Optional[str] = None
    neon_start_month: Optional[str] = None
    neon_end_month: Optional[str] = None
    neon_base_url: Optional[str] = None
    neon_release: str = "RELEASE-2021"
    neon_package: str = "basic"
    window_days: float = 5.0
    window_start: Optional[str] = None

    @property
    def n_jobs(self) -> int:
        """Worker threads for parallel searches; default = available cores."""
        if self.threads is not None:
            return max(1, self.threads)
        return os.cpu_count() or 1


def _convert(attr: str, raw: str):
    raw = raw.strip()
    try:
        if attr in _INT_ATTRS:
            return int(raw)
        if attr in _FLOAT_ATTRS:
            return float(raw)
    except ValueError as exc:
        raise SchemaError(f"bad numeric value for {attr}: {raw!r}") from exc
    if attr == "segmented":
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise SchemaError(f"bad boolean for {attr}: {raw!r}")
    if attr == "candidates":
        return [part.strip() for part in raw.split(",") if part.strip()]
    if attr == "covariate_paths":
        out = {}
        for part in raw.split(","):
            part = part.strip()
            if not part:
                continue
            if ":" not in part:
                raise SchemaError(f"covariates entries must be name:path, got {part!r}")
            name, path = part.split(":", 1)
            out[name.strip()] = path.strip()
        return out
    return raw or None


def load_config(path: Optional[str] = None) -> RunConfig:
    """Build a RunConfig from an optional INI file plus the environment."""
    cfg = RunConfig()
    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise SchemaError(f"config file not found: {path}")
        for section in parser.sections():
            for key, raw in parser.items(section):
                attr = _KEYMAP.get((section, key))
                if attr is None:
                    raise SchemaError(f"unknown config key [{section}] {key}")
                setattr(cfg, attr, _convert(attr, raw))
    for (section, key), attr in sorted(_KEYMAP.items()):
        env_name = f"STREAMGAMM_{section.upper()}_{key.upper()}"
        if env_name in os.environ:
            setattr(cfg, attr, _convert(attr, os.environ[env_name]))
    return cfg


def ensure_output_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def config_as_dict(cfg: RunConfig) -> dict:
    """JSON-friendly view of the effective configuration."""
    out = {}
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, Path):
            value = str(value)
        out[f.name] = value
    return out
