"""CSV loading, lattice alignment, summaries, and frame round trips."""

import numpy as np
import pytest

from streamgamm.errors import (
    AlignmentError,
    DataError,
    EmptyInputError,
    SchemaError,
)
from streamgamm.ingest import (
    GRID_STEP_S,
    AlignedFrame,
    ColumnSchema,
    SensorSeries,
    align,
    format_timestamp,
    frame_from_csv,
    frame_to_csv,
    load_series,
    parse_timestamp,
    summarize,
)

T0 = 1_577_836_800  # 2020-01-01T00:00:00Z, on the 15-minute lattice


def _series(variable, offsets, values, flags=None, unit=""):
    return SensorSeries(
        variable=variable,
        unit=unit,
        timestamps=T0 + np.asarray(offsets, dtype=np.int64),
        values=np.asarray(values, dtype=np.float64),
        qc_flags=None if flags is None else np.asarray(flags, dtype=np.uint8),
    )


def test_timestamp_round_trip_and_offsets():
    assert parse_timestamp("2020-01-01T00:00:00Z") == T0
    assert parse_timestamp("2020-01-01T01:00:00+01:00") == T0
    assert parse_timestamp("2019-12-31T19:00:00-05:00") == T0
    assert parse_timestamp("2020-01-01T00:00:00.4Z") == T0
    assert parse_timestamp("2020-01-01T00:00:00.6Z") == T0 + 1
    assert format_timestamp(T0) == "2020-01-01T00:00:00Z"
    assert parse_timestamp(format_timestamp(T0 + 12345)) == T0 + 12345
    with pytest.raises(ValueError):
        parse_timestamp("2020-01-01T00:00:00")


def test_load_series_sorts_dedups_and_counts(tmp_path):
    path = tmp_path / "nitrate.csv"
    path.write_text(
        "timestamp,value,qc_flag\n"
        "2020-01-01T00:30:00Z,3.0,0\n"
        "2020-01-01T00:00:00Z,1.0,\n"
        "2020-01-01T00:15:00Z,2.0,1\n"
        "2020-01-01T00:15:00Z,9.9,0\n"  # duplicate timestamp, dropped
        "not-a-time,5.0,0\n"
        "2020-01-01T00:45:00Z,not-a-number,0\n"
        "2020-01-01T01:00:00Z,nan,0\n"
    )
    s = load_series(path)
    assert s.variable == "nitrate"
    np.testing.assert_array_equal(s.timestamps, T0 + np.array([0, 900, 1800]))
    np.testing.assert_array_equal(s.values, [1.0, 2.0, 3.0])
    np.testing.assert_array_equal(s.qc_flags, [0, 1, 0])
    assert s.report.rows_read == 7
    assert s.report.unparseable == 3
    assert s.report.duplicates == 1
    assert s.report.rows_kept == 3


def test_load_series_schema_and_empty(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("when,reading\n2020-01-01T00:00:00Z,1.0\n")
    with pytest.raises(SchemaError):
        load_series(bad)
    s = load_series(bad, schema=ColumnSchema(timestamp="when", value="reading", qc_flag=None))
    assert len(s) == 1 and s.qc_flags is None

    empty = tmp_path / "empty.csv"
    empty.write_text("timestamp,value\njunk,junk\n")
    with pytest.raises(EmptyInputError):
        load_series(empty)


def test_sensor_series_validation():
    with pytest.raises(DataError):
        _series("x", [0, 900], [1.0])
    with pytest.raises(DataError):
        _series("x", [900, 0], [1.0, 2.0])
    with pytest.raises(DataError):
        _series("x", [0, 900], [1.0, np.nan])


def test_align_selects_last_observation_within_tolerance():
    nitrate = _series("nitrate", [0, 900, 1800, 2700], [1.0, 2.0, 3.0, 4.0])
    # Covariate sampled 60 s before each instant (inside the tolerance),
    # except the third instant where the freshest reading is 61 s stale.
    temp = _series("temp", [-60, 840, 1739, 2640], [10.0, 11.0, 12.0, 13.0])
    frame = align(nitrate, [temp])
    np.testing.assert_array_equal(frame.grid, T0 + np.array([0, 900, 1800, 2700]))
    got = frame.covariates["temp"]
    np.testing.assert_allclose(got[[0, 1, 3]], [10.0, 11.0, 13.0])
    assert np.isnan(got[2])
    np.testing.assert_array_equal(frame.valid, [True, True, False, True])
    assert frame.covariates["time_days"][1] == pytest.approx(900.0 / 86400.0)


def test_align_snaps_response_and_rejects_off_lattice():
    nitrate = _series("nitrate", [30, 930, 1770], [1.0, 2.0, 3.0])
    frame = align(nitrate, [])
    np.testing.assert_array_equal(frame.grid, T0 + np.array([0, 900, 1800]))

    drifted = _series("nitrate", [0, 900, 2100], [1.0, 2.0, 3.0])
    with pytest.raises(AlignmentError):
        align(drifted, [])


def test_align_snap_duplicates_keep_first():
    nitrate = _series("nitrate", [0, 20, 900], [1.0, 9.0, 2.0])
    frame = align(nitrate, [])
    assert frame.snap_duplicates == 1
    np.testing.assert_array_equal(frame.grid, T0 + np.array([0, 900]))
    np.testing.assert_allclose(frame.response, [1.0, 2.0])


def test_align_applies_flags_and_anomaly_rules():
    nitrate = _series("nitrate", [0, 900, 1800, 2700], [1.0, 2.0, 3.0, 4.0], [0, 1, 0, 0])
    turb = _series("turbidity", [0, 900, 1800, 2700], [3.0, 5.0, -0.5, 7.0])
    cond = _series("cond", [0, 900, 1800, 2700], [100.0, 101.0, 102.0, -1.0], [0, 0, 0, 0])
    frame = align(nitrate, [turb, cond])

    assert np.isnan(frame.response[1])  # flagged response row
    lt = frame.covariates["log_turbidity"]
    assert "turbidity" not in frame.covariates
    np.testing.assert_allclose(lt[0], np.log1p(3.0))
    assert np.isnan(lt[2])  # negative turbidity is an anomaly
    assert np.isnan(frame.covariates["cond"][3])  # negative conductance too
    np.testing.assert_array_equal(frame.valid, [True, False, False, False])


def test_align_builds_gap_table():
    nitrate = _series("nitrate", [0, 900, 4500, 5400], [1.0, 2.0, 3.0, 4.0])
    frame = align(nitrate, [])
    assert len(frame.gaps) == 1
    gap = frame.gaps[0]
    assert gap.start == T0 + 900
    assert gap.end == T0 + 4500
    assert gap.missing_rows == 3


def test_align_empty_and_all_invalid():
    empty = SensorSeries("nitrate", "", np.array([], dtype=np.int64), np.array([]))
    with pytest.raises(EmptyInputError):
        align(empty, [])
    flagged = _series("nitrate", [0, 900], [1.0, 2.0], [1, 1])
    with pytest.raises(EmptyInputError):
        align(flagged, [])


def test_aligned_frame_validates_grid_and_lengths():
    with pytest.raises(AlignmentError):
        AlignedFrame(
            grid=T0 + np.array([0, 1000], dtype=np.int64),
            response=np.ones(2),
            covariates={},
            valid=np.ones(2, dtype=bool),
        )
    with pytest.raises(DataError):
        AlignedFrame(
            grid=T0 + np.array([0, 900], dtype=np.int64),
            response=np.ones(3),
            covariates={},
            valid=np.ones(2, dtype=bool),
        )
    with pytest.raises(DataError):
        AlignedFrame(
            grid=T0 + np.array([0, 900], dtype=np.int64),
            response=np.ones(2),
            covariates={"x": np.ones(3)},
            valid=np.ones(2, dtype=bool),
        )


def test_summarize_hand_computed_quartiles():
    nitrate = _series("nitrate", [0, 900, 1800, 2700, 3600], [5.0, 1.0, 3.0, 2.0, 4.0])
    temp = _series("temp", [0, 900, 1800, 2700], [10.0, 20.0, 30.0, 40.0])
    frame = align(nitrate, [temp])
    table = summarize(frame)

    s = table["nitrate"]
    assert (s.min, s.q1, s.median, s.q3, s.max) == (1.0, 2.0, 3.0, 4.0, 5.0)
    assert s.mean == pytest.approx(3.0)
    assert s.count == 5 and s.missing == 0

    t = table["temp"]  # last grid instant has no fresh temp reading
    assert t.count == 4 and t.missing == 1
    assert t.median == pytest.approx(25.0)
    assert t.q1 == pytest.approx(17.5)
    assert t.q3 == pytest.approx(32.5)


def test_frame_csv_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(303)
    nitrate = _series("nitrate", [0, 900, 1800, 3600], rng.normal(5.0, 1.0, 4))
    temp = _series("temp", [0, 900, 1800, 3600], rng.normal(12.0, 3.0, 4), [0, 0, 1, 0])
    frame = align(nitrate, [temp])

    path = tmp_path / "frame.csv"
    frame_to_csv(frame, path)
    back = frame_from_csv(path)

    np.testing.assert_array_equal(back.grid, frame.grid)
    np.testing.assert_array_equal(back.response, frame.response)
    assert list(back.covariates) == list(frame.covariates)
    for name in frame.covariates:
        np.testing.assert_array_equal(back.covariates[name], frame.covariates[name])
    np.testing.assert_array_equal(back.valid, frame.valid)
    assert back.response_name == frame.response_name
    assert back.time_origin == frame.time_origin
    assert [(g.start, g.end, g.missing_rows) for g in back.gaps] == [
        (g.start, g.end, g.missing_rows) for g in frame.gaps
    ]


def test_frame_from_csv_rejects_foreign_files(tmp_path):
    path = tmp_path / "foreign.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(SchemaError):
        frame_from_csv(path)
    header_only = tmp_path / "header.csv"
    header_only.write_text("timestamp,nitrate,valid\n")
    with pytest.raises(EmptyInputError):
        frame_from_csv(header_only)
