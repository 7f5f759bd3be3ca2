from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridwind.econ import FarmSpec
from hybridwind.errors import AlignmentError, DataQualityError, SchemaError, SizeError
from hybridwind.series import (
    SeriesFrame,
    SynthConfig,
    concat,
    fill_cyclic,
    ingest_csv,
    make_batches,
    power_curve,
    repeat_cyclic,
    split_train_test,
    synth_dataset,
    window_starts,
    write_csv,
)

from .conftest import frame_of, hourly


def _write(tmp_path, text: str):
    path = tmp_path / "data.csv"
    path.write_text(text, encoding="utf-8")
    return path


def test_ingest_identity(tmp_path):
    path = _write(tmp_path, "time,v\n2020-01-01T00:00:00,5\n2020-01-01T01:00:00,6\n2020-01-01T02:00:00,7\n")
    frame = ingest_csv(path)
    assert len(frame) == 3
    np.testing.assert_array_equal(frame.v, [5.0, 6.0, 7.0])
    assert frame.channels == ("v",)


def test_ingest_interpolates_single_gap(tmp_path):
    path = _write(tmp_path, "time,v\n2020-01-01T00:00:00,5\n2020-01-01T01:00:00,\n2020-01-01T02:00:00,7\n")
    # one missing cell out of three exceeds the 5% budget, so pad with valid rows
    rows = ["time,v", "2020-01-01T00:00:00,5", "2020-01-01T01:00:00,", "2020-01-01T02:00:00,7"]
    rows += [f"{t},7" for t in np.datetime_as_string(hourly(30, "2020-01-01T03:00:00"), unit="s")]
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    frame = ingest_csv(path)
    np.testing.assert_array_equal(frame.v[:3], [5.0, 6.0, 7.0])


def test_ingest_schema_maps_columns(tmp_path):
    path = _write(tmp_path, "time,speed,power\n2020-01-01T00:00:00,5,1\n2020-01-01T01:00:00,6,2\n")
    frame = ingest_csv(path, {"v": "speed", "g": "power"})
    np.testing.assert_array_equal(frame.g, [1.0, 2.0])


def test_ingest_shuffled_timestamps(tmp_path):
    path = _write(tmp_path, "time,v\n2020-01-01T01:00:00,5\n2020-01-01T00:00:00,6\n2020-01-01T02:00:00,7\n")
    with pytest.raises(AlignmentError):
        ingest_csv(path)


def test_ingest_non_hourly(tmp_path):
    path = _write(tmp_path, "time,v\n2020-01-01T00:00:00,5\n2020-01-01T02:00:00,6\n")
    with pytest.raises(AlignmentError):
        ingest_csv(path)


def test_ingest_missing_column(tmp_path):
    path = _write(tmp_path, "time,v\n2020-01-01T00:00:00,5\n")
    with pytest.raises(SchemaError):
        ingest_csv(path, {"g": "power"})


def test_ingest_too_many_gaps(tmp_path):
    path = _write(tmp_path, "time,v\n2020-01-01T00:00:00,5\n2020-01-01T01:00:00,\n2020-01-01T02:00:00,7\n")
    with pytest.raises(DataQualityError):
        ingest_csv(path)


def test_ingest_long_gap(tmp_path):
    ts = np.datetime_as_string(hourly(400), unit="s")
    vals = ["5"] * 400
    for k in range(100, 107):
        vals[k] = ""
    path = _write(tmp_path, "time,v\n" + "\n".join(f"{t},{v}" for t, v in zip(ts, vals)) + "\n")
    with pytest.raises(DataQualityError, match="gap of 7 h"):
        ingest_csv(path)


def test_frame_rejects_negative_generation():
    with pytest.raises(DataQualityError):
        frame_of(g=np.array([1.0, -1.0]))


def test_frame_rejects_length_mismatch():
    with pytest.raises(SizeError):
        SeriesFrame(hourly(3), v=np.ones(2))


def test_frame_is_read_only():
    frame = frame_of(v=np.ones(3))
    with pytest.raises(ValueError):
        frame.v[0] = 2.0


def test_csv_round_trip(tmp_path, synth_1y):
    path = tmp_path / "rt.csv"
    write_csv(synth_1y[:500], path)
    assert ingest_csv(path).equals(synth_1y[:500])


@pytest.mark.parametrize("frac, expected", [(0.7, (7, 3)), (0.5, (5, 5))])
def test_split_lengths(frac, expected):
    a, b = split_train_test(frame_of(v=np.arange(10.0)), frac)
    assert (len(a), len(b)) == expected


def test_split_too_short():
    with pytest.raises(SizeError):
        split_train_test(frame_of(v=np.ones(1)), 0.5)


@given(n=st.integers(2, 300), frac=st.floats(0.01, 0.99))
def test_split_concat_identity(n, frac):
    frame = frame_of(v=np.arange(float(n)), g=np.ones(n))
    a, b = split_train_test(frame, frac)
    assert len(a) >= 1 and len(b) >= 1
    assert concat([a, b]).equals(frame)


def test_batches_examples():
    batches = make_batches(frame_of(v=np.arange(336.0)), 168, 2, seed=0)
    assert len(batches) == 1 and batches[0].size == 2
    batches = make_batches(frame_of(v=np.arange(500.0)), 168, 6, seed=0)
    assert sum(b.size for b in batches) == 2


def test_batches_deterministic():
    frame = frame_of(v=np.arange(2000.0))
    a = make_batches(frame, 24, 5, seed=3)
    b = make_batches(frame, 24, 5, seed=3)
    assert all(np.array_equal(x.starts, y.starts) for x, y in zip(a, b))


def test_batches_too_long():
    with pytest.raises(SizeError):
        make_batches(frame_of(v=np.ones(10)), 11, 2, seed=0)


@given(n=st.integers(1, 400), L=st.integers(1, 50), B=st.integers(1, 9), seed=st.integers(0, 2**31))
def test_batches_cover_each_window_once(n, L, B, seed):
    if L > n:
        return
    frame = frame_of(v=np.arange(float(n)))
    batches = make_batches(frame, L, B, seed=seed)
    starts = np.sort(np.concatenate([b.starts for b in batches]))
    np.testing.assert_array_equal(starts, window_starts(n, L))
    for b in batches:
        assert b.size <= B
        np.testing.assert_array_equal(b["v"], b.starts[:, None] + np.arange(L)[None, :])


def test_batches_overlapping_stride():
    batches = make_batches(frame_of(v=np.arange(48.0)), 24, 100, seed=0, stride=12)
    assert sorted(batches[0].starts.tolist()) == [0, 12, 24]


def test_synth_one_year():
    assert len(synth_dataset(1, 0, FarmSpec())) == 8760


def test_synth_deterministic():
    assert synth_dataset(1, 5, FarmSpec()).equals(synth_dataset(1, 5, FarmSpec()))
    assert not synth_dataset(1, 5, FarmSpec()).equals(synth_dataset(1, 6, FarmSpec()))


def test_synth_noiseless_follows_power_curve():
    cfg = SynthConfig.noiseless()
    farm = FarmSpec()
    frame = synth_dataset(1, 0, farm, cfg)
    np.testing.assert_array_equal(frame.g, power_curve(frame.v, farm.capacity_mw, cfg))


def test_synth_ranges(synth_1y):
    farm = FarmSpec()
    assert synth_1y.g.max() <= farm.capacity_mw
    assert synth_1y.p.min() >= SynthConfig().price_floor
    assert synth_1y.channels == ("v", "g", "p", "u")


def test_synth_rejects_zero_years():
    with pytest.raises(ValueError):
        synth_dataset(0, 0, FarmSpec())


def test_power_curve_shape():
    cfg = SynthConfig()
    v = np.array([0.0, cfg.cut_in, cfg.rated_speed, 20.0, cfg.cut_out])
    np.testing.assert_allclose(power_curve(v, 100.0, cfg), [0.0, 0.0, 100.0, 100.0, 0.0])


def test_cyclic_fill():
    np.testing.assert_array_equal(repeat_cyclic(np.array([1.0, 2.0, 3.0]), 7), [1, 2, 3, 1, 2, 3, 1])
    long = frame_of(g=np.ones(5))
    donor = frame_of(p=np.array([1.0, 2.0]), u=np.array([3.0, 4.0]))
    filled = fill_cyclic(long, donor)
    np.testing.assert_array_equal(filled.p, [1, 2, 1, 2, 1])


def test_years_blocks():
    frame = frame_of(g=np.ones(8760 + 100))
    assert [len(y) for y in frame.years()] == [8760, 100]
