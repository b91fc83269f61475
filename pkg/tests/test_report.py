"""Report assembly, JSON safety, and on-disk determinism."""

import json
import math

import jsonschema
import numpy as np
import pytest

from streamgamm.ingest import AlignedFrame, summarize
from streamgamm.report import (
    build_report,
    load_schema,
    sanitize,
    summary_section,
    vif_section,
    write_report,
)


def _tiny_frame():
    grid = 900 * np.arange(8, dtype=np.int64)
    response = np.array([1.0, 2.0, np.nan, 4.0, 5.0, 6.0, 7.0, 8.0])
    cov = {"temp": np.linspace(0.0, 1.0, 8), "time_days": grid / 86400.0}
    valid = np.isfinite(response)
    return AlignedFrame(grid=grid, response=response, covariates=cov, valid=valid, gaps=[])


def test_sanitize_maps_nonfinite_to_json_safe_values():
    raw = {
        "a": float("nan"),
        "b": float("inf"),
        "c": float("-inf"),
        "d": [1.0, float("nan"), (2.0, float("inf"))],
        "e": {"f": np.float64("nan")},
        "g": "text",
        "h": 3,
    }
    out = sanitize(raw)
    assert out["a"] is None
    assert out["b"] == "inf"
    assert out["c"] == "-inf"
    assert out["d"] == [1.0, None, [2.0, "inf"]]
    assert out["e"]["f"] is None
    assert out["g"] == "text"
    assert out["h"] == 3
    json.dumps(out, allow_nan=False)  # nothing non-encodable is left


def test_build_report_stamps_metadata_and_drops_empty_sections():
    rep = build_report("vif", vif={"table": {"x": 1.5}}, gam=None)
    assert rep["stage"] == "vif"
    assert isinstance(rep["version"], str) and rep["version"]
    assert "gam" not in rep
    assert rep["vif"]["table"]["x"] == 1.5


def test_vif_section_sorts_exclusions():
    sec = vif_section({"b": 9.0, "a": 1.1}, 6.0, ["b", "a"])
    assert sec["excluded"] == ["a", "b"]
    assert sec["threshold"] == 6.0


def test_summary_section_survives_nan_quantiles_and_validates():
    frame = _tiny_frame()
    rep = build_report("summarize", summary=summary_section(summarize(frame)))
    jsonschema.validate(rep, load_schema())
    assert rep["summary"]["nitrate"]["missing"] == 1


def test_write_report_is_deterministic_and_newline_terminated(tmp_path):
    rep = build_report("vif", vif=vif_section({"x": float("inf"), "y": 2.0}, 6.0, ["x"]))
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    write_report(p1, rep)
    write_report(p2, dict(reversed(list(rep.items()))))  # key order must not matter
    b1, b2 = p1.read_bytes(), p2.read_bytes()
    assert b1 == b2
    assert b1.endswith(b"\n")
    loaded = json.loads(b1)
    assert loaded["vif"]["table"]["x"] == "inf"
    assert "NaN" not in b1.decode()


def test_write_report_refuses_raw_nonfinite(tmp_path):
    # Reports must pass through sanitize/build_report first.
    with pytest.raises(ValueError):
        write_report(tmp_path / "bad.json", {"version": "0", "stage": "vif", "x": math.nan})
