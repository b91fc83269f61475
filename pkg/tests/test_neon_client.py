"""Data-API client behavior against a local in-process HTTP server."""

import hashlib
import json

import numpy as np
import pytest

from streamgamm import neon_client
from streamgamm.errors import DataError, IntegrityError, NotFoundError, TransportError
from streamgamm.neon_client import (
    FileEntry,
    ProductRequest,
    VariableSpec,
    fetch,
    fetch_variables,
    list_files,
    merge_series,
    unpack,
)
from streamgamm.ingest import SensorSeries

NITRATE_CSV = (
    "startDateTime,surfWaterNitrateMean,finalQF\n"
    "2019-01-01T00:00:00Z,5.5,0\n"
    "2019-01-01T00:15:00Z,5.7,0\n"
    "2019-01-01T00:30:00Z,6.0,1\n"
)
NITRATE_FEB_CSV = (
    "startDateTime,surfWaterNitrateMean,finalQF\n"
    "2019-02-01T00:00:00Z,7.1,0\n"
)


@pytest.fixture(autouse=True)
def _fast_backoff(monkeypatch):
    monkeypatch.setattr(neon_client, "_BACKOFF", (0.01, 0.01, 0.01))
    monkeypatch.delenv("STREAMGAMM_NEON_BASE_URL", raising=False)


def test_product_request_validation_and_month_expansion():
    req = ProductRequest("DP1.20033.001", "POSE", "2019-11", "2020-02")
    assert req.months() == ["2019-11", "2019-12", "2020-01", "2020-02"]
    single = ProductRequest("DP1.20033.001", "POSE", "2019-05", "2019-05")
    assert single.months() == ["2019-05"]
    with pytest.raises(DataError):
        ProductRequest("DP1.20033.001", "POSE", "2019-13", "2019-12")
    with pytest.raises(DataError):
        ProductRequest("DP1.20033.001", "POSE", "201901", "2019-02")
    with pytest.raises(DataError):
        ProductRequest("DP1.20033.001", "POSE", "2019-05", "2019-04")


def test_list_files_sorts_and_tolerates_empty_months(api):
    f2 = api.add_file("b.csv", "x,y\n1,2\n")
    f1 = api.add_file("a.csv", "x,y\n3,4\n")
    api.add_month("DP1.20033.001", "POSE", "2019-01", [f2])
    api.add_month("DP1.20033.001", "POSE", "2019-03", [f1])
    # 2019-02 is not routed at all: the API 404s and the month is skipped.
    req = ProductRequest("DP1.20033.001", "POSE", "2019-01", "2019-03")
    entries = list_files(req, base_url=api.base)
    assert [e.name for e in entries] == ["a.csv", "b.csv"]
    assert all(isinstance(e, FileEntry) for e in entries)

    with pytest.raises(NotFoundError):
        list_files(ProductRequest("DP1.20033.001", "NOPE", "2019-01", "2019-01"), base_url=api.base)


def test_fetch_is_atomic_idempotent_and_writes_manifest(api, tmp_path):
    name = "NEON.D02.POSE.DP1.20033.001.NSW_15_minute.2019-01.basic.csv"
    entry = api.add_file(name, NITRATE_CSV)
    api.add_month("DP1.20033.001", "POSE", "2019-01", [entry])
    req = ProductRequest("DP1.20033.001", "POSE", "2019-01", "2019-01")

    dest = tmp_path / "dl"
    first = fetch(req, dest, base_url=api.base)
    assert first.skipped == []
    assert (dest / name).read_text() == NITRATE_CSV
    assert not list(dest.glob("*.part"))
    manifest = json.loads((dest / "manifest.json").read_text())
    assert manifest[0]["name"] == name
    downloads_after_first = api.hits(f"/files/{name}")

    second = fetch(req, dest, base_url=api.base)
    assert second.skipped == [name]
    # Verified files are not re-downloaded.
    assert api.hits(f"/files/{name}") == downloads_after_first


def test_fetch_rejects_corrupt_download_and_leaves_no_file(api, tmp_path):
    name = "corrupt.csv"
    entry = api.add_file(name, NITRATE_CSV, md5="0" * 32)
    api.add_month("DP1.20033.001", "POSE", "2019-01", [entry])
    req = ProductRequest("DP1.20033.001", "POSE", "2019-01", "2019-01")
    with pytest.raises(IntegrityError):
        fetch(req, tmp_path / "dl", base_url=api.base)
    assert not (tmp_path / "dl" / name).exists()
    assert not list((tmp_path / "dl").glob("*.part"))


def test_transient_server_errors_retry_then_succeed(api, tmp_path):
    name = "flaky.csv"
    data = NITRATE_CSV.encode()
    state = {"calls": 0}

    def flaky():
        state["calls"] += 1
        if state["calls"] <= 2:
            return 500, b"boom"
        return 200, data

    api.server.routes[f"/files/{name}"] = flaky
    entry = {
        "name": name,
        "size": len(data),
        "md5": hashlib.md5(data).hexdigest(),
        "url": f"{api.base}/files/{name}",
    }
    api.add_month("DP1.20033.001", "POSE", "2019-01", [entry])
    req = ProductRequest("DP1.20033.001", "POSE", "2019-01", "2019-01")
    result = fetch(req, tmp_path / "dl", base_url=api.base)
    assert state["calls"] == 3
    assert result.paths[name].read_text() == NITRATE_CSV


def test_persistent_server_errors_raise_transport_error(api, tmp_path):
    api.server.routes["/data/DP1.20033.001/POSE/2019-01"] = (500, b"down")
    req = ProductRequest("DP1.20033.001", "POSE", "2019-01", "2019-01")
    with pytest.raises(TransportError):
        list_files(req, base_url=api.base)


def test_base_url_env_override(api, tmp_path, monkeypatch):
    entry = api.add_file("x.csv", NITRATE_CSV)
    api.add_month("DP1.20033.001", "POSE", "2019-01", [entry])
    monkeypatch.setenv("STREAMGAMM_NEON_BASE_URL", api.base)
    req = ProductRequest("DP1.20033.001", "POSE", "2019-01", "2019-01")
    entries = list_files(req)  # no explicit base_url
    assert [e.name for e in entries] == ["x.csv"]


def test_unpack_merges_months_with_registry_schema(tmp_path):
    d = tmp_path / "DP1.20033.001"
    d.mkdir()
    (d / "NEON.D02.POSE.DP1.20033.001.NSW_15_minute.2019-02.basic.csv").write_text(
        NITRATE_FEB_CSV
    )
    (d / "NEON.D02.POSE.DP1.20033.001.NSW_15_minute.2019-01.basic.csv").write_text(
        NITRATE_CSV
    )
    (d / "NEON.D02.POSE.DP1.20033.001.sensor_positions.2019-01.basic.csv").write_text(
        "a,b\n1,2\n"
    )
    series = unpack(tmp_path / "DP1.20033.001", "nitrate")
    assert series.variable == "nitrate"
    assert series.unit == "uM"
    assert len(series) == 4
    assert np.all(np.diff(series.timestamps) > 0)
    np.testing.assert_array_equal(series.qc_flags, [0, 0, 1, 0])
    np.testing.assert_allclose(series.values, [5.5, 5.7, 6.0, 7.1])

    with pytest.raises(DataError):
        unpack(tmp_path, "unknown_variable")
    with pytest.raises(NotFoundError):
        unpack(tmp_path / "DP1.20033.001", "temp")


def test_merge_series_dedups_keep_first():
    a = SensorSeries("x", "", np.array([0, 900], dtype=np.int64), np.array([1.0, 2.0]))
    b = SensorSeries("x", "", np.array([900, 1800], dtype=np.int64), np.array([9.0, 3.0]))
    merged = merge_series([a, b])
    np.testing.assert_array_equal(merged.timestamps, [0, 900, 1800])
    np.testing.assert_allclose(merged.values, [1.0, 2.0, 3.0])
    with pytest.raises(DataError):
        merge_series([])


def test_fetch_variables_shares_product_downloads(api, tmp_path):
    registry = {
        "spc": VariableSpec(
            "spc", "DP1.20288.001", "waq_instantaneous", "specificConductance",
            "specificCondFinalQF", "uS/cm", timestamp_col="startDateTime",
        ),
        "turbidity": VariableSpec(
            "turbidity", "DP1.20288.001", "waq_instantaneous", "turbidity",
            "turbidityFinalQF", "NTU", timestamp_col="startDateTime",
        ),
    }
    waq = (
        "startDateTime,specificConductance,specificCondFinalQF,turbidity,turbidityFinalQF\n"
        "2019-01-01T00:00:00Z,150.0,0,3.5,0\n"
        "2019-01-01T00:15:00Z,151.0,0,3.6,1\n"
    )
    name = "NEON.D02.POSE.DP1.20288.001.waq_instantaneous.2019-01.basic.csv"
    entry = api.add_file(name, waq)
    api.add_month("DP1.20288.001", "POSE", "2019-01", [entry])

    series = fetch_variables(
        tmp_path, "POSE", "2019-01", "2019-01",
        variables=["spc", "turbidity"], base_url=api.base, registry=registry,
    )
    assert set(series) == {"spc", "turbidity"}
    np.testing.assert_allclose(series["spc"].values, [150.0, 151.0])
    np.testing.assert_allclose(series["turbidity"].values, [3.5, 3.6])
    np.testing.assert_array_equal(series["turbidity"].qc_flags, [0, 1])
    # One product, one listing call, one file download despite 2 variables.
    assert api.hits("/data/DP1.20288.001/POSE/2019-01") == 1
    assert api.hits(f"/files/{name}") == 1

    with pytest.raises(DataError):
        fetch_variables(
            tmp_path, "POSE", "2019-01", "2019-01",
            variables=["nope"], base_url=api.base, registry=registry,
        )
